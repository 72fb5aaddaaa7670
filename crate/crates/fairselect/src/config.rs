//! Flat `key = value` run-configuration files.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored.  Keys may not repeat.  Consumers take typed values by key and
//! then call [`ConfigMap::finish`], which rejects any key the subcommand did
//! not recognize, so a typo fails loudly instead of silently using a
//! default.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::Result;

/// Parsed configuration: ordered key/value pairs with consumption tracking.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: Vec<(String, String)>,
    consumed: BTreeSet<String>,
}

/// Parse configuration text.
pub fn parse_config(text: &str) -> Result<ConfigMap> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, found `{line}`", i + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if entries.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", i + 1)));
        }
        entries.push((key.to_string(), value.to_string()));
    }
    Ok(ConfigMap {
        entries,
        consumed: BTreeSet::new(),
    })
}

impl ConfigMap {
    /// Raw value for a key, marking it consumed.
    pub fn get(&mut self, key: &str) -> Option<&str> {
        self.consumed.insert(key.to_string());
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Required raw value; missing keys are an error naming the key.
    pub fn require(&mut self, key: &str) -> Result<&str> {
        if self.get(key).is_none() {
            return Err(Error::Config(format!("missing required key `{key}`")));
        }
        // Re-borrow to satisfy the borrow checker.
        Ok(self
            .entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .unwrap())
    }

    pub fn require_u64(&mut self, key: &str) -> Result<u64> {
        parse_typed(key, self.require(key)?)
    }

    pub fn require_usize(&mut self, key: &str) -> Result<usize> {
        parse_typed(key, self.require(key)?)
    }

    pub fn require_f64(&mut self, key: &str) -> Result<f64> {
        let v: f64 = parse_typed(key, self.require(key)?)?;
        if !v.is_finite() {
            return Err(Error::Config(format!("key `{key}`: value must be finite")));
        }
        Ok(v)
    }

    pub fn get_u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| v.to_string())
            .map(|v| parse_typed(key, &v))
            .transpose()
    }

    pub fn get_usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| v.to_string())
            .map(|v| parse_typed(key, &v))
            .transpose()
    }

    pub fn get_str(&mut self, key: &str) -> Option<String> {
        self.get(key).map(|v| v.to_string())
    }

    /// Comma-separated list of unsigned sizes.
    pub fn require_usize_list(&mut self, key: &str) -> Result<Vec<usize>> {
        let raw = self.require(key)?.to_string();
        split_list(key, &raw)
    }

    /// Comma-separated list of decimals.
    pub fn require_f64_list(&mut self, key: &str) -> Result<Vec<f64>> {
        let raw = self.require(key)?.to_string();
        split_list(key, &raw)
    }

    /// Comma-separated list of identifiers.
    pub fn require_str_list(&mut self, key: &str) -> Result<Vec<String>> {
        let raw = self.require(key)?.to_string();
        let items: Vec<String> = raw
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(Error::Config(format!("key `{key}`: empty list")));
        }
        Ok(items)
    }

    /// Reject any keys the consumer never looked at.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&str> = self
            .entries
            .iter()
            .map(|(k, _)| k.as_str())
            .filter(|k| !self.consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))))
        }
    }
}

fn parse_typed<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{raw}`")))
}

fn split_list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_typed(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("key `{key}`: empty list")));
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_blanks() {
        let text = "# experiment setup\nn = 100\n\nrho = 0.15\nschedule = 10, 20, 30\n";
        let mut cfg = parse_config(text).unwrap();
        assert_eq!(cfg.require_usize("n").unwrap(), 100);
        assert_eq!(cfg.require_f64("rho").unwrap(), 0.15);
        assert_eq!(cfg.require_usize_list("schedule").unwrap(), vec![10, 20, 30]);
        cfg.finish().unwrap();
    }

    #[test]
    fn missing_key_is_named() {
        let mut cfg = parse_config("n = 5\n").unwrap();
        let err = cfg.require_u64("seed").unwrap_err();
        assert!(err.to_string().contains("`seed`"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = parse_config("n = 5\nbogus = 1\n").unwrap();
        let _ = cfg.require_usize("n").unwrap();
        let err = cfg.finish().unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn duplicate_and_malformed_lines_fail() {
        assert!(parse_config("a = 1\na = 2\n").is_err());
        assert!(parse_config("just a line\n").is_err());
        assert!(parse_config(" = 3\n").is_err());
    }

    #[test]
    fn typed_errors_name_key_and_value() {
        let mut cfg = parse_config("n = banana\n").unwrap();
        let err = cfg.require_usize("n").unwrap_err();
        assert!(err.to_string().contains("banana"), "{err}");
    }
}
