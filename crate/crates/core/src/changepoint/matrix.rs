//! Detection on plain numeric matrices (rows are observations).
//!
//! Each column is standardised over the whole matrix. ECP uses the
//! standardised rows directly; for ODCP a row of `p` standardised values `z`
//! becomes the composition `(e^{z_1}, ..., e^{z_p}, 1) / (1 + Σ e^{z_k})`
//! (inverse additive log-ratio).

use std::path::Path;

use super::{ecp_detect, odcp_multiple, CompositionalSample, DetectionReport, DetectorConfig, Method};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Standardised scores are clipped here so the exponentials stay finite.
const Z_CLIP: f64 = 30.0;

/// Column-wise z-scores; constant columns become zero.
fn standardise(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let p = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::validation("empty matrix"))?;
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::validation("matrix rows must be non-empty and of equal length"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::validation("matrix entries must be finite"));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n;
        }
    }
    for r in rows {
        for k in 0..p {
            sd[k] += (r[k] - mean[k]).powi(2) / n;
        }
    }
    sd.iter_mut().for_each(|s| *s = s.sqrt());
    Ok(rows
        .iter()
        .map(|r| {
            (0..p)
                .map(|k| if sd[k] > 0.0 { ((r[k] - mean[k]) / sd[k]).clamp(-Z_CLIP, Z_CLIP) } else { 0.0 })
                .collect()
        })
        .collect())
}

pub fn rows_to_samples(rows: &[Vec<f64>]) -> Result<Vec<CompositionalSample>> {
    standardise(rows)?
        .into_iter()
        .map(|z| {
            let mut w: Vec<f64> = z.iter().map(|x| x.exp()).collect();
            w.push(1.0);
            CompositionalSample::from_weights(w)
        })
        .collect()
}

/// Read a rectangular numeric CSV. A first row that does not parse as
/// numbers is treated as a header.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::validation(format!("row {}: {e}", i + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::validation("no numeric rows"));
    }
    let p = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(Error::validation(format!("row {} has {} columns, expected {p}", i + 1, rows[i].len())));
    }
    Ok(rows)
}

/// Changepoints of a numeric matrix; indices are row numbers where the new
/// regime starts.
pub fn detect_rows(
    rows: &[Vec<f64>],
    method: Method,
    config: &DetectorConfig,
    rng: &mut SimRng,
) -> Result<DetectionReport> {
    match method {
        Method::Odcp => odcp_multiple(&rows_to_samples(rows)?, config, rng),
        Method::Ecp => ecp_detect(&standardise(rows)?, config, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn rows_become_compositions() {
        let s = rows_to_samples(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(s[0].dim(), 3);
        // Column 2 is constant: its coordinate equals the reference one.
        assert!((s[0].as_slice()[1] - s[0].as_slice()[2]).abs() < 1e-15);
        assert!(s[0].as_slice()[0] < s[1].as_slice()[0]);
    }

    #[test]
    fn mean_shift_is_located() {
        let mut rng = stream(8, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|i| {
                let shift = if i < 200 { 0.0 } else { 2.0 };
                vec![shift + noise.sample(&mut rng), noise.sample(&mut rng)]
            })
            .collect();
        for method in [Method::Odcp, Method::Ecp] {
            let report = detect_rows(&rows, method, &DetectorConfig::default(), &mut rng).unwrap();
            assert_eq!(report.len(), 1, "{method:?}: {report:?}");
            assert!(report.changes[0].index.abs_diff(200) <= 20);
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(rows_to_samples(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
