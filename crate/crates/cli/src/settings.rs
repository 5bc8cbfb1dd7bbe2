//! Flag / config-file / default resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use dkn::kv::parse_kv;

use crate::failure::{Failure, Result};

/// Resolves each setting from a flag, then the config file, then the default, and keeps
/// the final values for echoing.
pub struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    pub resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            None => BTreeMap::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::usage(format!("config file {}: {e}", p.display())))?;
                parse_kv(&text).map_err(|e| Failure::usage(format!("config file {}: {e}", p.display())))?
            }
        };
        Ok(Settings {
            file,
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        })
    }

    fn file_value<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.used.insert(key.to_string());
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Failure::usage(format!("config file: bad value {v:?} for {key}"))),
        }
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let from_file = self.file_value(key)?;
        let v = flag.or(from_file).unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// A setting without a default.
    pub fn require<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T> {
        let from_file = self.file_value(key)?;
        let v = flag
            .or(from_file)
            .ok_or_else(|| Failure::usage(format!("--{} is required (flag or config file)", key.replace('_', "-"))))?;
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let from_file = self.file_value(key)?;
        let v = flag.or(from_file);
        self.resolved
            .insert(key.to_string(), v.as_ref().map(|v| v.to_string()).unwrap_or_else(|| "none".into()));
        Ok(v)
    }

    /// Reject config keys no setting asked for.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Failure::usage(format!("config file: unknown keys {unknown:?}")))
        }
    }

    pub fn echo(&self, command: &str) {
        println!("# {command} resolved config");
        for (k, v) in &self.resolved {
            println!("{k} = {v}");
        }
    }
}
