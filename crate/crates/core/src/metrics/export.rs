use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::Result;

/// Lower clamp applied before taking logs of co-assignment values.
pub const LOG_FLOOR: f64 = 1e-12;

/// Binary 8-bit PGM of a log-scale matrix: `ln LOG_FLOOR` maps to 0 and
/// 0 maps to 255, linearly.
pub fn pgm_bytes(m: &Tensor) -> Vec<u8> {
    let (rows, cols) = (m.rows(), m.cols());
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    let lo = LOG_FLOOR.ln();
    out.extend(m.data().iter().map(|&v| {
        let t = ((v - lo) / -lo).clamp(0.0, 1.0);
        (t * 255.0).round() as u8
    }));
    out
}

pub fn write_pgm(path: &Path, m: &Tensor) -> Result<()> {
    std::fs::write(path, pgm_bytes(m))?;
    Ok(())
}

/// Comma-separated rows with full round-trip precision.
pub fn matrix_csv(m: &Tensor) -> String {
    let mut s = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_scale() {
        let m = Tensor::matrix(1, 3, vec![0.0, LOG_FLOOR.ln(), LOG_FLOOR.ln() / 2.0]);
        let b = pgm_bytes(&m);
        assert!(b.starts_with(b"P5\n3 1\n255\n"));
        assert_eq!(&b[b.len() - 3..], &[255, 0, 128]);
    }

    #[test]
    fn csv_round_trips() {
        let m = Tensor::matrix(2, 2, vec![0.1, -2.0, 1.0 / 3.0, 5e-300]);
        let back: Vec<f64> = matrix_csv(&m)
            .lines()
            .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect();
        assert_eq!(back, m.data());
    }
}
