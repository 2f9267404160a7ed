//! Delimiter-separated output tables with a `#`-prefixed header line.

use std::io::Write;

use crate::error::Result;

pub fn write_table<W: Write>(mut w: W, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "# {}", columns.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Parse a table written by [`write_table`]; returns the header columns and rows.
pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(h) = line.strip_prefix('#') {
            header = h.trim().split(',').map(str::to_owned).collect();
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| crate::Error::Io(format!("line {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut buf = Vec::new();
        write_table(&mut buf, &["range_m", "power_db"], &[vec![1.5, -3.25], vec![2.0, 0.0]]).unwrap();
        let (h, rows) = read_table(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(h, vec!["range_m", "power_db"]);
        assert_eq!(rows, vec![vec![1.5, -3.25], vec![2.0, 0.0]]);
    }
}
