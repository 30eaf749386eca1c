//! Key-value config files and replayable manifests.
//!
//! The format is one `key = value` pair per line, `#` comments, UTF-8.
//! Every command writes a manifest of its effective settings; feeding
//! that manifest back through `--config` replays the run. Explicit
//! command-line flags override file values.

use std::fmt::Display;
use std::path::Path;

use deconv_core::error::{DeconvError, Result};

/// Ordered key-value settings; later `set` calls replace earlier ones
/// while keeping the original position (stable output order).
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    pairs: Vec<(String, String)>,
}

impl KvConfig {
    pub fn new() -> KvConfig {
        KvConfig::default()
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<KvConfig> {
        let text = std::fs::read_to_string(&path)?;
        let mut cfg = KvConfig::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                DeconvError::Parse(format!(
                    "{}:{}: expected `key = value`",
                    path.as_ref().display(),
                    lineno + 1
                ))
            })?;
            cfg.set(k.trim(), v.trim());
        }
        Ok(cfg)
    }

    pub fn set<V: Display>(&mut self, key: &str, value: V) {
        let value = value.to_string();
        if let Some(slot) = self.pairs.iter_mut().find(|(k, _)| k == key) {
            slot.1 = value;
        } else {
            self.pairs.push((key.to_string(), value));
        }
    }

    /// Sets only when the flag was actually given.
    pub fn set_opt<V: Display>(&mut self, key: &str, value: &Option<V>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| DeconvError::Config(format!("missing required setting `{key}`")))
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                DeconvError::Parse(format!("setting `{key}`: cannot parse {raw:?}"))
            }),
        }
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }

    /// Comma-separated u64 list.
    pub fn get_u64_list(&self, key: &str, default: &[u64]) -> Result<Vec<u64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<u64>()
                        .map_err(|_| DeconvError::Parse(format!("`{key}`: bad entry {t:?}")))
                })
                .collect(),
        }
    }

    pub fn write<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (k, v) in &self.pairs {
            writeln!(w, "{k} = {v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.cfg");
        let mut cfg = KvConfig::new();
        cfg.set("sigma", 0.01);
        cfg.set("seed", 7u64);
        cfg.set("sigma", 0.02); // replaces
        cfg.write(&p).unwrap();

        let back = KvConfig::from_file(&p).unwrap();
        assert_eq!(back.get("sigma"), Some("0.02"));
        assert_eq!(back.get_or::<u64>("seed", 0).unwrap(), 7);
        assert_eq!(back.get_or::<u64>("missing", 3).unwrap(), 3);
        assert!(back.require("nope").is_err());
    }

    #[test]
    fn parses_comments_and_rejects_junk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.cfg");
        std::fs::write(&p, "# comment\nkey = value\n\nother = 2\n").unwrap();
        let cfg = KvConfig::from_file(&p).unwrap();
        assert_eq!(cfg.get("key"), Some("value"));
        std::fs::write(&p, "not a pair\n").unwrap();
        assert!(KvConfig::from_file(&p).is_err());
    }

    #[test]
    fn u64_lists() {
        let mut cfg = KvConfig::new();
        cfg.set("seeds", "1, 2,3");
        assert_eq!(cfg.get_u64_list("seeds", &[9]).unwrap(), vec![1, 2, 3]);
        assert_eq!(cfg.get_u64_list("none", &[9]).unwrap(), vec![9]);
    }
}
