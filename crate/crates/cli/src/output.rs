//! CSV tables and the run manifest.

use std::fs;
use std::io;
use std::path::Path;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// A table with a fixed header; rows are written in insertion order.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }
}

/// Creates the output directory.
pub fn prepare(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)
}

/// Config echo preceded by comment lines with version, status, wall time and notes.
pub fn write_manifest(dir: &Path, config_text: &str, status: i32, wall: f64, notes: &[String]) -> io::Result<()> {
    let mut s = format!("# sympflow {}\n# status = {status}\n# wall_time_s = {wall:.3}\n", env!("CARGO_PKG_VERSION"));
    for n in notes {
        for line in n.lines() {
            s.push_str(&format!("# {line}\n"));
        }
    }
    s.push_str(config_text);
    fs::write(dir.join("manifest.txt"), s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn empty_table_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        Table::new(&["t", "sigma_min"]).write(&p).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "t,sigma_min\n");
    }
}
