//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Settings merged from an optional config file and command-line flags.
/// Flags win; keys outside the subcommand's set are rejected.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

pub fn parse_config_text(text: &str, origin: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!("{origin}:{}: expected key = value", lineno + 1)));
        };
        let key = normalize(key);
        if key.is_empty() {
            return Err(CliError::usage(format!("{origin}:{}: empty key", lineno + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::usage(format!("{origin}:{}: key {key:?} given twice", lineno + 1)));
        }
    }
    Ok(out)
}

impl Settings {
    /// `flags` lists every key the subcommand accepts with its command-line
    /// value, if any.
    pub fn load(file: Option<&Path>, flags: Vec<(&'static str, Option<String>)>) -> CliResult<Self> {
        let mut values = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                parse_config_text(&text, &p.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        for key in values.keys() {
            if !flags.iter().any(|(k, _)| k == key) {
                let mut known: Vec<&str> = flags.iter().map(|f| f.0).collect();
                known.sort_unstable();
                return Err(CliError::usage(format!("unknown config key {key:?}; accepted: {}", known.join(", "))));
            }
        }
        for (key, value) in flags {
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        Ok(Self { values })
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::usage(format!("invalid value {v:?} for {key}: {e}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::usage(format!("missing required setting --{}", key.replace('_', "-"))))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(raw) = self.values.get(key) else { return Ok(None) };
        raw.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|e| CliError::usage(format!("invalid entry {s:?} in {key}: {e}")))
            })
            .collect::<CliResult<Vec<T>>>()
            .map(Some)
    }

    /// Seeds from `seeds` (list) or `seed` (single), else `default`.
    pub fn seeds(&self, default: &[u64]) -> CliResult<Vec<u64>> {
        if let Some(list) = self.list::<u64>("seeds")? {
            if list.is_empty() {
                return Err(CliError::usage("empty seed list"));
            }
            return Ok(list);
        }
        Ok(match self.get::<u64>("seed")? {
            Some(s) => vec![s],
            None => default.to_vec(),
        })
    }

    /// Reject a `task` entry naming another subcommand.
    pub fn check_task(&self, task: &str) -> CliResult<()> {
        match self.raw("task") {
            Some(t) if t != task => Err(CliError::usage(format!("config is for task {t:?}, not {task:?}"))),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let m = parse_config_text("# run\nk = 5\np-in=0.8\n\n", "t").unwrap();
        assert_eq!(m["k"], "5");
        assert_eq!(m["p_in"], "0.8");
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(parse_config_text("k 5", "t").is_err());
        assert!(parse_config_text("k=1\nk=2", "t").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "k = 3\nepochs = 10\n").unwrap();
        let s = Settings::load(Some(&p), vec![("k", Some("5".into())), ("epochs", None)]).unwrap();
        assert_eq!(s.require::<usize>("k").unwrap(), 5);
        assert_eq!(s.require::<usize>("epochs").unwrap(), 10);
    }

    #[test]
    fn unknown_key_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "colour = red\n").unwrap();
        let err = Settings::load(Some(&p), vec![("k", None)]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn seeds_prefer_list() {
        let s = Settings::load(None, vec![("seeds", Some("3,4".into())), ("seed", Some("9".into()))]).unwrap();
        assert_eq!(s.seeds(&[0]).unwrap(), vec![3, 4]);
        let s = Settings::load(None, vec![("seeds", None), ("seed", None)]).unwrap();
        assert_eq!(s.seeds(&[0, 1]).unwrap(), vec![0, 1]);
    }
}
