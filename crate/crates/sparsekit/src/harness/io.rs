//! Output emission: CSV with `#` metadata headers and binary P5 PGM.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// 17-significant-digit scientific notation; round-trips f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a CSV file: `# key=value` metadata lines, then a `# `-prefixed
/// column header, then the data rows.
pub fn write_csv(
    path: &Path,
    metadata: &[(String, String)],
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut f = File::create(path)?;
    for (k, v) in metadata {
        writeln!(f, "# {k}={v}")?;
    }
    writeln!(f, "# {}", columns.join(","))?;
    for row in rows {
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Write an 8-bit binary (P5) PGM image, row-major.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut f = File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}
