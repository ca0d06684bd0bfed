//! The tolerance manifest: `key value origin` lines, `#` comments.

use std::collections::BTreeMap;

use super::{HarnessError, Result};

const BUILTIN: &str = include_str!("../../tolerances.txt");

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerance {
    pub raw: String,
    pub origin: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    entries: BTreeMap<String, Tolerance>,
}

impl Tolerances {
    /// The manifest shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("shipped tolerance manifest parses")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(HarnessError::Config(format!(
                    "tolerance line {} needs key, value and origin",
                    k + 1
                )));
            }
            entries.insert(
                f[0].to_string(),
                Tolerance {
                    raw: f[1].to_string(),
                    origin: f[2].to_string(),
                },
            );
        }
        Ok(Tolerances { entries })
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.get(key)?.raw.parse().ok()
    }

    pub fn entry(&self, key: &str) -> Option<&Tolerance> {
        self.entries.get(key)
    }

    /// A comma-separated list of integers, e.g. `known_failures`.
    pub fn list(&self, key: &str) -> Vec<u32> {
        self.entries
            .get(key)
            .map(|t| {
                t.raw
                    .split(',')
                    .filter_map(|s| s.trim().parse().ok())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn set(&mut self, key: &str, value: f64) {
        let origin = self
            .entries
            .get(key)
            .map(|t| t.origin.clone())
            .unwrap_or_else(|| "override".into());
        self.entries.insert(
            key.to_string(),
            Tolerance {
                raw: value.to_string(),
                origin,
            },
        );
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tolerance)> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_origins() {
        let t = Tolerances::builtin();
        assert_eq!(t.get("excursion.conc_q95_max"), Some(0.2));
        for (k, v) in t.iter() {
            assert!(
                ["formula", "mc-band", "budget", "policy", "override"].contains(&v.origin.as_str()),
                "{k} has origin {}",
                v.origin
            );
        }
    }

    #[test]
    fn parse_and_override() {
        let mut t = Tolerances::parse("a 1 formula # note\n\nlist 3,7 policy\n").unwrap();
        assert_eq!(t.get("a"), Some(1.0));
        assert_eq!(t.list("list"), vec![3, 7]);
        t.set("a", 2.5);
        assert_eq!(t.get("a"), Some(2.5));
        assert_eq!(t.entry("a").unwrap().origin, "formula");
        assert!(Tolerances::parse("broken line").is_err());
    }
}
