//! Least-squares fitting against log-polynomial main terms.
//!
//! The short-interval mean squares grow like X h times a cubic in
//! L = log(sqrt(X)/h). Fitting value/(X h) against {1, L, L^2, L^3} isolates
//! that cubic; the leading coefficient is the quantity of interest and the
//! lower-order ones are representation-specific, so they are reported but
//! nothing downstream asserts on them.

use crate::{LabError, Result};

/// Coefficients of c0 + c1 L + c2 L^2 + c3 L^3 fitted to value/(X h).
#[derive(Clone, Copy, Debug)]
pub struct CubicFit {
    pub c: [f64; 4],
    /// Per-coefficient standard errors from the unscaled normal equations.
    pub stderr: [f64; 4],
    /// ||response - fit|| / ||response||.
    pub residual: f64,
    pub sample_count: usize,
}

/// Minimizes ||A z - y|| by normal equations with column scaling; returns
/// (coefficients, standard errors, ||r||/||y||). Rows must share a length.
///
/// The Gram matrix here is at most 4x4 and the column scaling keeps its
/// condition number tame, so normal equations are accurate enough; a QR
/// factorization would be overkill for these sizes.
pub(crate) fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = rows.len();
    assert_eq!(n, y.len(), "one response per row");
    let p = rows[0].len();
    assert!(rows.iter().all(|r| r.len() == p), "ragged design matrix");
    if n < p {
        return Err(LabError::Validation(format!(
            "least squares needs at least {p} samples, got {n}"
        )));
    }
    // column scales: max |entry|, so every scaled column peaks at 1
    let mut scale = vec![0.0f64; p];
    for r in rows {
        for (s, &v) in scale.iter_mut().zip(r) {
            *s = s.max(v.abs());
        }
    }
    if scale.iter().any(|&s| s == 0.0) {
        return Err(LabError::Validation(
            "design matrix has an identically zero column".into(),
        ));
    }
    // scaled Gram matrix and right-hand side
    let mut gram = vec![vec![0.0f64; p]; p];
    let mut rhs = vec![0.0f64; p];
    for (r, &yi) in rows.iter().zip(y) {
        for j in 0..p {
            let aj = r[j] / scale[j];
            rhs[j] += aj * yi;
            for i in j..p {
                gram[i][j] += r[i] / scale[i] * aj;
            }
        }
    }
    for j in 0..p {
        for i in 0..j {
            gram[i][j] = gram[j][i];
        }
    }
    let inv = invert_in_place(gram)?;
    let z: Vec<f64> = (0..p)
        .map(|i| (0..p).map(|j| inv[i][j] * rhs[j]).sum())
        .collect();
    let coeffs: Vec<f64> = z.iter().zip(&scale).map(|(&zi, &s)| zi / s).collect();

    let mut rss = 0.0;
    let mut yss = 0.0;
    for (r, &yi) in rows.iter().zip(y) {
        let fit: f64 = r.iter().zip(&coeffs).map(|(&a, &c)| a * c).sum();
        rss += (yi - fit) * (yi - fit);
        yss += yi * yi;
    }
    let residual = if yss > 0.0 {
        (rss / yss).sqrt()
    } else {
        (rss / n as f64).sqrt()
    };
    let sigma_sq = if n > p { rss / (n - p) as f64 } else { 0.0 };
    let stderr: Vec<f64> = (0..p)
        .map(|j| (sigma_sq * inv[j][j]).sqrt() / scale[j])
        .collect();
    Ok((coeffs, stderr, residual))
}

/// Gauss-Jordan inverse with partial pivoting; the input is pre-scaled so a
/// tiny pivot really does mean a rank-deficient design.
fn invert_in_place(mut m: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let p = m.len();
    let mut inv = vec![vec![0.0f64; p]; p];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..p {
        let pivot_row = (col..p)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("nonempty range");
        if m[pivot_row][col].abs() < 1e-10 {
            return Err(LabError::Validation(
                "rank-deficient fit: design columns are linearly dependent".into(),
            ));
        }
        m.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let d = m[col][col];
        for v in m[col].iter_mut().chain(inv[col].iter_mut()) {
            *v /= d;
        }
        for row in 0..p {
            if row == col {
                continue;
            }
            let f = m[row][col];
            if f == 0.0 {
                continue;
            }
            for k in 0..p {
                m[row][k] -= f * m[col][k];
                inv[row][k] -= f * inv[col][k];
            }
        }
    }
    Ok(inv)
}

/// Fits value/(X h) against {1, L, L^2, L^3} with L = log(sqrt(X)/h).
///
/// Requires at least 8 samples with h strictly below sqrt(X) and an L range
/// spanning a factor of 8, so the cubic coefficient is actually pinned down
/// by the data rather than extrapolated.
pub fn fit_log_cubic(samples: &[(f64, f64, f64)]) -> Result<CubicFit> {
    if samples.len() < 8 {
        return Err(LabError::Validation(format!(
            "cubic fit needs at least 8 samples, got {}",
            samples.len()
        )));
    }
    let mut rows = Vec::with_capacity(samples.len());
    let mut y = Vec::with_capacity(samples.len());
    let mut l_min = f64::INFINITY;
    let mut l_max = 0.0f64;
    for &(x, h, value) in samples {
        if !(x > 1.0) || !(h > 0.0) {
            return Err(LabError::Validation(format!(
                "fit samples need X > 1 and h > 0, got X={x} h={h}"
            )));
        }
        let l = (x.sqrt() / h).ln();
        if !(l > 0.0) {
            return Err(LabError::Validation(format!(
                "fit samples need h < sqrt(X), got X={x} h={h}"
            )));
        }
        l_min = l_min.min(l);
        l_max = l_max.max(l);
        rows.push(vec![1.0, l, l * l, l * l * l]);
        y.push(value / (x * h));
    }
    if l_max < 8.0 * l_min {
        return Err(LabError::Validation(format!(
            "fit samples must span a factor of 8 in log(sqrt(X)/h); \
             range is [{l_min:.4}, {l_max:.4}]"
        )));
    }
    let (c, se, residual) = least_squares(&rows, &y)?;
    Ok(CubicFit {
        c: [c[0], c[1], c[2], c[3]],
        stderr: [se[0], se[1], se[2], se[3]],
        residual,
        sample_count: samples.len(),
    })
}

/// Evaluates a fitted cubic back to the value scale X h (c0 + c1 L + ...).
pub fn cubic_value(fit: &CubicFit, x: f64, h: f64) -> f64 {
    let l = (x.sqrt() / h).ln();
    x * h * (fit.c[0] + l * (fit.c[1] + l * (fit.c[2] + l * fit.c[3])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(c: [f64; 4]) -> Vec<(f64, f64, f64)> {
        let x = 1.0e7f64;
        (4..=11)
            .map(|e| {
                let h = (1u64 << e) as f64;
                let l = (x.sqrt() / h).ln();
                let v = x * h * (c[0] + l * (c[1] + l * (c[2] + l * c[3])));
                (x, h, v)
            })
            .collect()
    }

    #[test]
    fn recovers_synthetic_cubic_exactly() {
        let c = [0.3, -1.2, 0.7, 0.810_569_469_138_7];
        let fit = fit_log_cubic(&synth(c)).unwrap();
        for j in 0..4 {
            assert!(
                (fit.c[j] - c[j]).abs() < 1e-10,
                "c{j}: {} vs {}",
                fit.c[j],
                c[j]
            );
            assert!(fit.stderr[j] < 1e-8, "noiseless stderr c{j}: {}", fit.stderr[j]);
        }
        assert!(fit.residual < 1e-10, "residual {}", fit.residual);
        assert_eq!(fit.sample_count, 8);
    }

    #[test]
    fn refit_of_own_prediction_is_identity() {
        // perturb a synthetic set, fit, regenerate from the fit, fit again:
        // the second pass must reproduce the first to well below the noise
        let mut data = synth([1.0, 0.5, -0.25, 0.8]);
        for (i, s) in data.iter_mut().enumerate() {
            s.2 *= 1.0 + 1e-3 * (i as f64).sin();
        }
        let first = fit_log_cubic(&data).unwrap();
        let regen: Vec<(f64, f64, f64)> = data
            .iter()
            .map(|&(x, h, _)| (x, h, cubic_value(&first, x, h)))
            .collect();
        let second = fit_log_cubic(&regen).unwrap();
        for j in 0..4 {
            assert!((first.c[j] - second.c[j]).abs() < 1e-10);
        }
        assert!(second.residual < 1e-10);
        assert!(first.residual > 1e-5, "noise should register: {}", first.residual);
        assert!(first.stderr[3] > 0.0);
    }

    #[test]
    fn rejects_small_or_out_of_domain_sample_sets() {
        let few = synth([1.0, 0.0, 0.0, 0.0])[..7].to_vec();
        assert!(matches!(fit_log_cubic(&few), Err(LabError::Validation(_))));
        let mut bad = synth([1.0, 0.0, 0.0, 0.0]);
        bad[0].1 = bad[0].0.sqrt() * 2.0; // h > sqrt(X)
        assert!(matches!(fit_log_cubic(&bad), Err(LabError::Validation(_))));
    }

    #[test]
    fn rejects_narrow_l_span() {
        // h from 16 to 64 at X = 1e7: L only moves from 5.3 to 3.9
        let x = 1.0e7f64;
        let data: Vec<(f64, f64, f64)> = (0..8)
            .map(|i| {
                let h = 16.0 + 48.0 * (i as f64) / 7.0;
                (x, h, x * h)
            })
            .collect();
        assert!(matches!(fit_log_cubic(&data), Err(LabError::Validation(_))));
    }

    #[test]
    fn two_distinct_abscissas_are_rank_deficient() {
        // span check passes (L ratio 16) but four basis functions cannot be
        // resolved from two distinct L values
        let x = 1.0e7f64;
        let h_lo = x.sqrt() / 8.0f64.exp();
        let h_hi = x.sqrt() / 0.5f64.exp();
        let data: Vec<(f64, f64, f64)> = (0..8)
            .map(|i| {
                let h = if i % 2 == 0 { h_lo } else { h_hi };
                (x, h, x * h)
            })
            .collect();
        let err = fit_log_cubic(&data).unwrap_err();
        assert!(matches!(err, LabError::Validation(ref m) if m.contains("rank")), "{err}");
    }

    #[test]
    fn least_squares_recovers_plane() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64;
                vec![1.0, t, (t * 1.7).sin()]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 + 2.0 * r[1] - 0.5 * r[2]).collect();
        let (c, se, res) = least_squares(&rows, &y).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-10);
        assert!((c[1] - 2.0).abs() < 1e-12);
        assert!((c[2] + 0.5).abs() < 1e-10);
        assert!(res < 1e-12);
        assert!(se.iter().all(|&s| s < 1e-10));
    }
}
