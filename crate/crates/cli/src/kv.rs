//! Flat key-value text files: `key = value` lines, `#` comments.
//! Used for run configs, resolved-config echoes and result files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

pub struct KvFile {
    pub entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn new() -> Self {
        KvFile {
            entries: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected 'key = value'", path.display(), no + 1))?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvFile { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| format!("config key '{key}': cannot parse '{raw}'")),
        }
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T, String> {
        self.parse(key)?
            .ok_or_else(|| format!("{what} is missing key '{key}'"))
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        std::fs::write(path, out)
    }
}
