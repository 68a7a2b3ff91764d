//! Flat `key = value` configuration files with `#` comments, plus the
//! resolved-parameter dump every experiment writes for auditability.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Parsed key/value pairs from a config file or command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: lineno + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "empty key".into(),
                });
            }
            entries.insert(key.to_string(), value.to_string());
        }
        Ok(ConfigMap { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(format!("key `{key}`: expected a number, got `{v}`"))),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Error::config(format!("key `{key}`: expected a nonnegative integer, got `{v}`"))
            }),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.entries.get(key).map(|s| s.as_str()) {
            None => Ok(None),
            Some("true") | Some("1") | Some("yes") | Some("on") => Ok(Some(true)),
            Some("false") | Some("0") | Some("no") | Some("off") => Ok(Some(false)),
            Some(v) => Err(Error::config(format!("key `{key}`: expected a boolean, got `{v}`"))),
        }
    }

    /// Three whitespace-separated components.
    pub fn get_vec3(&self, key: &str) -> Result<Option<Vector3<f64>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => {
                let parts: Vec<f64> = v
                    .split_whitespace()
                    .map(|p| {
                        p.parse().map_err(|_| {
                            Error::config(format!("key `{key}`: expected three numbers, got `{v}`"))
                        })
                    })
                    .collect::<Result<_>>()?;
                if parts.len() != 3 {
                    return Err(Error::config(format!(
                        "key `{key}`: expected three numbers, got `{v}`"
                    )));
                }
                Ok(Some(Vector3::new(parts[0], parts[1], parts[2])))
            }
        }
    }

    /// Comma-separated list of numbers.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| {
                        Error::config(format!("key `{key}`: expected a number list, got `{v}`"))
                    })
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

/// Ordered record of every parameter an experiment actually ran with,
/// defaults included. Written as `config.resolved` next to the outputs.
#[derive(Debug, Clone, Default)]
pub struct ResolvedConfig {
    entries: Vec<(String, String)>,
}

impl ResolvedConfig {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_vec3(&mut self, key: &str, v: Vector3<f64>) {
        self.push(key, format!("{} {} {}", v.x, v.y, v.z));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        std::fs::write(dir.as_ref().join("config.resolved"), self.to_text())?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_basics() {
        let cfg = ConfigMap::parse(
            "# experiment\nk = 0.0008\nstrategy = ab   # override\nf = -2 -0.5 0\nk_list = 4e-4, 8e-4,16e-4\n\n",
        )
        .unwrap();
        assert_eq!(cfg.get_f64("k").unwrap(), Some(0.0008));
        assert_eq!(cfg.get_str("strategy"), Some("ab"));
        assert_eq!(
            cfg.get_vec3("f").unwrap(),
            Some(Vector3::new(-2.0, -0.5, 0.0))
        );
        assert_eq!(
            cfg.get_f64_list("k_list").unwrap(),
            Some(vec![4e-4, 8e-4, 16e-4])
        );
        assert_eq!(cfg.get_f64("missing").unwrap(), None);
    }

    #[test]
    fn parse_errors() {
        assert!(ConfigMap::parse("just words\n").is_err());
        let cfg = ConfigMap::parse("k = abc\n").unwrap();
        assert!(cfg.get_f64("k").is_err());
        let cfg = ConfigMap::parse("f = 1 2\n").unwrap();
        assert!(cfg.get_vec3("f").is_err());
    }

    #[test]
    fn overrides_replace_values() {
        let mut cfg = ConfigMap::parse("k = 1.0\n").unwrap();
        cfg.set("k", 2.0);
        assert_eq!(cfg.get_f64("k").unwrap(), Some(2.0));
    }

    #[test]
    fn resolved_round_trip() {
        let mut r = ResolvedConfig::default();
        r.push("experiment", "cube");
        r.push("k", 8e-4);
        r.push_vec3("f", Vector3::new(-2.0, -0.5, 0.0));
        let text = r.to_text();
        let parsed = ConfigMap::parse(&text).unwrap();
        assert_eq!(parsed.get_f64("k").unwrap(), Some(8e-4));
        assert_eq!(r.get("experiment"), Some("cube"));
    }
}
