//! Summary and CSV writers with bit-stable formatting.
//!
//! Floats are printed with the shortest round-trip representation, summaries
//! are flat `key = value` files with keys in sorted order, and nothing
//! time- or environment-dependent is ever written, so identical runs produce
//! byte-identical artifacts.

use crate::Result;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Shortest round-trip decimal form of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// An ordered key = value summary.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    entries: BTreeMap<String, String>,
}

impl Summary {
    pub fn new() -> Summary {
        Summary::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn set_f64(&mut self, key: impl Into<String>, value: f64) {
        self.set(key, fmt_f64(value));
    }

    pub fn set_usize(&mut self, key: impl Into<String>, value: usize) {
        self.set(key, value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Writes a CSV from a header and rows of already-formatted cells.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{header}");
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_is_sorted_and_stable() {
        let mut s = Summary::new();
        s.set("zeta", "1");
        s.set_f64("alpha", 0.1 + 0.2);
        s.set_usize("mid", 7);
        let text = s.render();
        assert_eq!(text, "alpha = 0.30000000000000004\nmid = 7\nzeta = 1\n");
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0, -3.5e-7, std::f64::consts::PI] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
