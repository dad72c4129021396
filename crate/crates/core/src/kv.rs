//! Flat `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Keys may appear at most once.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    source: String,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format(source, format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim().to_owned();
            if key.is_empty() {
                return Err(Error::format(source, format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_owned()).is_some() {
                return Err(Error::format(source, format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        Ok(KeyValues {
            entries,
            source: source.to_owned(),
        })
    }

    /// Remove and parse `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::format(&self.source, format!("invalid value {v:?} for {key}"))
            }),
        }
    }

    pub fn take_string(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Fail if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.entries.keys().cloned().collect();
            Err(Error::format(self.source, format!("unknown keys: {}", keys.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_leftovers() {
        let mut kv = KeyValues::parse("# c\nepochs = 3\nname = a b # trailing\n\n", "cfg").unwrap();
        assert_eq!(kv.take::<usize>("epochs").unwrap(), Some(3));
        assert_eq!(kv.take_string("name").as_deref(), Some("a b"));
        assert_eq!(kv.take::<usize>("missing").unwrap(), None);
        kv.finish().unwrap();

        let mut kv = KeyValues::parse("epochs = x\nfoo = 1", "cfg").unwrap();
        assert!(kv.take::<usize>("epochs").is_err());
        assert!(kv.finish().is_err());
        assert!(KeyValues::parse("a = 1\na = 2", "cfg").is_err());
        assert!(KeyValues::parse("novalue", "cfg").is_err());
    }
}
