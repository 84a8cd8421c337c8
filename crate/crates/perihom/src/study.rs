//! Convergence bookkeeping: log-log rate fits, study records, CSV output.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Schema tag written as the first line of every study CSV.
pub const CSV_SCHEMA: &str = "perihom-study-v1";

/// Ordinary least squares on (log x, log y). Returns (slope, r_squared).
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.len() < 3 {
        return Err(Error::invalid("rate fit needs at least 3 points"));
    }
    if pairs.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::invalid("rate fit needs positive data"));
    }
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..lx.len() {
        let dx = lx[i] - mx;
        let dy = ly[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, r2))
}

/// A measured quantity against a parameter (usually eps or |zeta|), with
/// its fitted rate. The slope is only computed when every value clears ten
/// times the configured noise floor; low-quality fits are flagged rather
/// than silently accepted.
#[derive(Clone, Debug)]
pub struct ConvergenceRecord {
    pub quantity: String,
    pub pairs: Vec<(f64, f64)>,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    /// max value / x^expected, when an expected rate was supplied.
    pub c_estimate: Option<f64>,
    /// true when the fit exists but r2 < 0.9, or when values sat below the
    /// noise floor (degenerate study).
    pub flagged: bool,
    pub note: String,
}

impl ConvergenceRecord {
    pub fn from_pairs(
        quantity: &str,
        pairs: Vec<(f64, f64)>,
        noise_floor: f64,
        expected: Option<f64>,
    ) -> Self {
        let c_estimate = expected.map(|s| {
            pairs
                .iter()
                .map(|&(x, y)| y / x.powf(s))
                .fold(0.0f64, f64::max)
        });
        if pairs.iter().any(|&(_, y)| y <= 10.0 * noise_floor) {
            return ConvergenceRecord {
                quantity: quantity.to_string(),
                pairs,
                slope: None,
                r2: None,
                c_estimate,
                flagged: true,
                note: "degenerate: values at the noise floor".to_string(),
            };
        }
        match fit_rate(&pairs) {
            Ok((slope, r2)) => ConvergenceRecord {
                quantity: quantity.to_string(),
                pairs,
                slope: Some(slope),
                r2: Some(r2),
                c_estimate,
                flagged: r2 < 0.9,
                note: if r2 < 0.9 {
                    format!("low-quality fit: r2 = {r2:.3}")
                } else {
                    String::new()
                },
            },
            Err(e) => ConvergenceRecord {
                quantity: quantity.to_string(),
                pairs,
                slope: None,
                r2: None,
                c_estimate,
                flagged: true,
                note: format!("fit failed: {e}"),
            },
        }
    }

    /// Largest relative spread of y / x^rate over the pairs:
    /// (max - min) / max. Small values mean the constant in y <= C x^rate
    /// is stable across the parameter list.
    pub fn constant_variation(&self, rate: f64) -> f64 {
        let ratios: Vec<f64> = self.pairs.iter().map(|&(x, y)| y / x.powf(rate)).collect();
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        if hi <= 0.0 {
            return 0.0;
        }
        (hi - lo) / hi
    }
}

/// Write a CSV with the schema header; all numbers in full-precision
/// scientific notation so reruns are byte-comparable.
pub fn write_csv(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "# schema={CSV_SCHEMA}")?;
    writeln!(out, "{}", columns.join(","))?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::invalid("CSV row width does not match the header"));
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let eps = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        let lin: Vec<(f64, f64)> = eps.iter().map(|&e| (e, e)).collect();
        let (s, r2) = fit_rate(&lin).unwrap();
        assert!((s - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let half: Vec<(f64, f64)> = eps.iter().map(|&e| (e, e.sqrt())).collect();
        let (s, _) = fit_rate(&half).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn affine_contamination_flattens_the_slope() {
        // oracle: the OLS formula evaluated by hand on y = 3 eps + 0.001
        // gives slope ~ 0.99 over {1/8, ..., 1/64}
        let eps = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        let pairs: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 3.0 * e + 0.001)).collect();
        let (s, _) = fit_rate(&pairs).unwrap();
        assert!(s > 0.8 && s < 1.0, "slope {s}");
        assert!((s - 0.9904).abs() < 0.01, "slope {s}");
    }

    #[test]
    fn noise_floor_suppresses_fit() {
        let pairs = vec![(0.125, 1e-12), (0.0625, 9e-13), (0.03125, 8e-13)];
        let rec = ConvergenceRecord::from_pairs("e", pairs, 1e-12, Some(1.0));
        assert!(rec.slope.is_none() && rec.flagged);
    }

    #[test]
    fn constant_variation_of_power_law() {
        let eps = [0.25f64, 0.125, 0.0625];
        let pairs: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 2.0 * e.sqrt())).collect();
        let rec = ConvergenceRecord::from_pairs("e", pairs, 0.0, None);
        assert!(rec.constant_variation(0.5) < 1e-12);
        assert!(rec.constant_variation(1.0) > 0.4);
    }

    #[test]
    fn csv_is_deterministic() {
        let dir = std::env::temp_dir().join("perihom_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("a.csv");
        let p2 = dir.join("b.csv");
        let rows = vec![vec![0.125, 3.0e-2], vec![0.0625, 1.5e-2]];
        write_csv(&p1, &["eps", "e_l2"], &rows).unwrap();
        write_csv(&p2, &["eps", "e_l2"], &rows).unwrap();
        let a = std::fs::read(&p1).unwrap();
        let b = std::fs::read(&p2).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with("# schema=perihom-study-v1"));
    }
}
