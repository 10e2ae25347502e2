//! `key=value` settings from files and the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration; exit code 2.
    Config(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<fracsde::Error> for CliError {
    fn from(e: fracsde::Error) -> Self {
        match e {
            fracsde::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Resolved settings. Every key must be declared up front; lookups of
/// undeclared keys are programming errors.
#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn parse_line(line: &str, origin: &str) -> CliResult<Option<(String, String)>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("expected key=value in {origin}, got `{line}`")))?;
    Ok(Some((k.trim().to_string(), v.trim().to_string())))
}

impl Settings {
    /// Applies `args` over `defaults` in order. `config=<file>` splices the
    /// file's entries in at its position, so later arguments override it.
    pub fn parse(defaults: &[(&str, &str)], args: &[String]) -> CliResult<Self> {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut set = |k: String, v: String, origin: &str| -> CliResult<()> {
            if !values.contains_key(&k) {
                return Err(CliError::Config(format!("unknown key `{k}` ({origin})")));
            }
            values.insert(k, v);
            Ok(())
        };
        for arg in args {
            let Some((k, v)) = parse_line(arg, "arguments")? else { continue };
            if k == "config" {
                let text = std::fs::read_to_string(Path::new(&v))
                    .map_err(|e| CliError::Config(format!("cannot read config file `{v}`: {e}")))?;
                for line in text.lines() {
                    if let Some((fk, fv)) = parse_line(line, &v)? {
                        set(fk, fv, &v)?;
                    }
                }
            } else {
                set(k, v, "arguments")?;
            }
        }
        Ok(Settings { values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("undeclared key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| CliError::Config(format!("invalid value `{raw}` for key `{key}`: {e}")))
    }

    /// Empty string means unset.
    pub fn optional<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| CliError::Config(format!("invalid entry `{s}` for key `{key}`: {e}")))
            })
            .collect()
    }

    pub fn bool(&self, key: &str) -> CliResult<bool> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Config(format!("invalid value `{other}` for key `{key}`: expected true or false"))),
        }
    }

    pub fn required(&self, key: &str) -> CliResult<&str> {
        let v = self.raw(key);
        if v.is_empty() {
            return Err(CliError::Config(format!("missing required key `{key}`")));
        }
        Ok(v)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.values).unwrap_or_default()
    }
}
