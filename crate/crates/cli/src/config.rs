//! `key = value` config files and the error type shared by all commands.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Keys a config file may set; the long flag names, with `_` accepted for `-`.
const KEYS: &[&str] = &[
    "in",
    "gen",
    "method",
    "precision",
    "xi",
    "rc",
    "kinf",
    "grid",
    "support",
    "order",
    "ref-tol",
    "ref-targets",
    "out",
    "axis",
    "values",
    "profile",
    "tol",
    "verify",
    "verify-targets",
    "repeats",
    "max-spread",
    "attempts",
    "quick",
    "threads",
];

#[derive(Debug)]
pub enum CliError {
    /// Bad or inconsistent flags; exit code 2.
    Usage(String),
    /// The run itself failed or an assertion did not hold; exit code 1.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl From<ewald_core::Error> for CliError {
    fn from(e: ewald_core::Error) -> Self {
        match e {
            ewald_core::Error::InvalidParameter(_) => Self::Usage(e.to_string()),
            other => Self::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Failed(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage<T>(message: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(message.into()))
}

/// Defaults read from a config file. Command-line flags take precedence.
#[derive(Clone, Debug, Default)]
pub struct Config {
    values: HashMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag if given, else the config value, else `None`.
    pub fn pick<T>(&self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
        }
    }

    /// Boolean switch: set by the flag or by `key = true` in the config.
    pub fn switch(&self, key: &str, flag: bool) -> CliResult<bool> {
        Ok(flag || self.pick::<bool>(key, None)?.unwrap_or(false))
    }
}

impl FromStr for Config {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let mut values = HashMap::new();
        for (i, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return usage(format!(
                    "config line {}: expected key = value, got '{line}'",
                    i + 1
                ));
            };
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return usage(format!("config line {}: unknown key '{key}'", i + 1));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_config() {
        let cfg: Config = "xi = 3\n# comment\nref_tol = 1e-10 # trailing\n"
            .parse()
            .unwrap();
        assert_eq!(cfg.pick::<f64>("xi", Some(2.0)).unwrap(), Some(2.0));
        assert_eq!(cfg.pick::<f64>("xi", None).unwrap(), Some(3.0));
        assert_eq!(cfg.pick::<f64>("ref-tol", None).unwrap(), Some(1e-10));
        assert_eq!(cfg.pick::<f64>("rc", None).unwrap(), None);
    }

    #[test]
    fn bad_config_lines() {
        assert!("xi 3".parse::<Config>().is_err());
        assert!("foo = 1".parse::<Config>().is_err());
        let cfg: Config = "xi = abc".parse().unwrap();
        assert!(matches!(
            cfg.pick::<f64>("xi", None),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn switches() {
        let cfg: Config = "verify = true".parse().unwrap();
        assert!(cfg.switch("verify", false).unwrap());
        assert!(!Config::default().switch("verify", false).unwrap());
        assert!(Config::default().switch("verify", true).unwrap());
    }
}
