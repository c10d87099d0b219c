//! Series route to the continuous mean square, asymptotic main terms, and
//! scaling probes.
//!
//! For k = 2 the continuous short-interval mean square has an alternative
//! representation as a divisor series: (1/4 pi^2) times the sum over
//! n <= X/(2h) of d(n)^2 n^{-3/2} weighted by an oscillatory integral over
//! [X, 2X]. Evaluating it independently of the sieve-and-subtract pipeline
//! gives a cross-check whose gap is the representation's own error term.
//! The module also carries the explicit cubic-log main term, the growth
//! exponent probe, and a max-ratio scan for the omega-result envelopes.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::delta;
use crate::fit::least_squares;
use crate::kahan::CompensatedSum;
use crate::mainterm::mainterm_poly;
use crate::quad;
use crate::sieve;
use crate::{with_pool, LabError, Result};

/// 8/pi^2, the cubic coefficient shared by both mean-square asymptotics.
pub const EIGHT_OVER_PI_SQ: f64 = 8.0 / (PI * PI);

/// Value of the divisor series with its truncation bookkeeping.
#[derive(Clone, Copy, Debug)]
pub struct SeriesValue {
    pub value: f64,
    /// Number of terms n <= floor(X/(2h)).
    pub terms: u64,
    /// Set when the truncation is empty (X/(2h) < 1); value is then 0.
    pub empty_truncation: bool,
}

/// Fitted exponents for I_k ~ X^a h^b.
#[derive(Clone, Copy, Debug)]
pub struct ExponentEstimate {
    pub a: f64,
    pub b: f64,
    pub a_stderr: f64,
    pub b_stderr: f64,
    /// Set when log h is an affine function of log X across the grid (an
    /// h = X^theta rule). The joint regression is then singular, so `a` is
    /// pinned to 1 and `b` comes from regressing log(value/(X L^3)) on
    /// log h, the residual exponent after the known main-term shape.
    pub collinear: bool,
    pub points: usize,
}

/// Envelope statistics for the short-difference oscillation.
#[derive(Clone, Copy, Debug)]
pub struct OmegaReport {
    pub k: u32,
    pub x: u64,
    pub h: u64,
    /// max |Delta_k(x+h) - Delta_k(x)| / (sqrt(h) log^{3/2}(sqrt(x)/h)).
    pub max_ratio: f64,
    pub argmax_x: u64,
    /// max |Delta_k(x+h) - Delta_k(x)| / sqrt(h), without the log factor.
    pub max_plain_ratio: f64,
    pub samples: u64,
}

/// Inner integral of the series term: int_X^{2X} sqrt(t) * 2(1 - cos theta)
/// dt with theta(t) = 2 pi h sqrt(n/t), via fixed-order Gauss-Legendre on
/// equal panels. |theta'| peaks at t = X, so sizing the panel count by that
/// slope keeps the phase advance under pi/4 on every panel.
fn inner_integral(x: f64, h: f64, n: f64, min_nodes: u32) -> f64 {
    let rule = quad::rule(8).expect("order 8 is always available");
    let slope_panels = (4.0 * h * (n / x).sqrt()).ceil() as u64;
    let panels = slope_panels.max(u64::from(min_nodes).div_ceil(8)).max(1);
    let width = x / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let a = x + p as f64 * width;
        let mut panel = 0.0;
        for (&node, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let t = a + 0.5 * width * (node + 1.0);
            let theta = 2.0 * PI * h * (n / t).sqrt();
            panel += wt * t.sqrt() * 2.0 * (1.0 - theta.cos());
        }
        acc += 0.5 * width * panel;
    }
    acc
}

/// Series evaluation with an explicit cutoff; `jutila_series` passes the
/// canonical floor(X/(2h)) and the tail-extension test passes more.
pub(crate) fn series_with_cutoff(
    x: u64,
    h: u64,
    n_max: u64,
    quad_nodes: u32,
    workers: usize,
) -> Result<SeriesValue> {
    if n_max == 0 {
        return Ok(SeriesValue { value: 0.0, terms: 0, empty_truncation: true });
    }
    if n_max > sieve::MAX_SUMMATORY_X_K2 {
        return Err(LabError::Resource(format!(
            "series cutoff {n_max} exceeds the configured maximum {}",
            sieve::MAX_SUMMATORY_X_K2
        )));
    }
    let xf = x as f64;
    let hf = h as f64;
    let chunks = delta::x_chunks(1, n_max);
    let partials: Vec<Result<CompensatedSum>> = with_pool(workers, || {
        chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let block = sieve::sieve_dk_block(2, lo, hi)?;
                let mut acc = CompensatedSum::new();
                for n in lo..=hi {
                    let d = block.values[(n - lo) as usize] as f64;
                    let nf = n as f64;
                    let weight = d * d / (nf * nf.sqrt());
                    acc.add(weight * inner_integral(xf, hf, nf, quad_nodes));
                }
                Ok(acc)
            })
            .collect()
    });
    let mut total = CompensatedSum::new();
    for p in partials {
        total.merge(p?);
    }
    Ok(SeriesValue {
        value: total.value() / (4.0 * PI * PI),
        terms: n_max,
        empty_truncation: false,
    })
}

/// Divisor-series value of the k = 2 continuous mean square over [X, 2X].
pub fn jutila_series(x: u64, h: u64, quad_nodes: u32, workers: usize) -> Result<SeriesValue> {
    if x == 0 || h == 0 {
        return Err(LabError::Validation("X and h must be positive".into()));
    }
    if (h as f64) > (x as f64).sqrt() {
        return Err(LabError::Validation(format!(
            "series requires h <= sqrt(X); got h={h}, X={x}"
        )));
    }
    if quad_nodes < 64 {
        return Err(LabError::Validation(format!(
            "quad_nodes must be at least 64, got {quad_nodes}"
        )));
    }
    series_with_cutoff(x, h, x / (2 * h), quad_nodes, workers)
}

/// The cubic-log main term (8/pi^2) X h log^3(sqrt(X)/h).
pub fn expected_cubic_main(x: f64, h: f64) -> Result<f64> {
    if !(x >= 1.0) || !(h > 0.0) {
        return Err(LabError::Validation(format!(
            "main term requires X >= 1 and h > 0, got X={x} h={h}"
        )));
    }
    if h > x.sqrt() {
        return Err(LabError::Validation(format!(
            "main term requires h <= sqrt(X); got h={h}, X={x}"
        )));
    }
    let l = (x.sqrt() / h).ln();
    Ok(EIGHT_OVER_PI_SQ * x * h * l * l * l)
}

/// Fits (a, b) in value ~ X^a h^b from (X, h, value) triples.
pub fn exponent_probe_values(points: &[(f64, f64, f64)]) -> Result<ExponentEstimate> {
    if points.len() < 4 {
        return Err(LabError::Validation(format!(
            "exponent probe needs at least 4 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mut lx = Vec::with_capacity(points.len());
    let mut lh = Vec::with_capacity(points.len());
    let mut lv = Vec::with_capacity(points.len());
    for &(x, h, v) in points {
        if !(x > 1.0) || !(h > 0.0) || !(v > 0.0) {
            return Err(LabError::Validation(format!(
                "probe points need X > 1, h > 0, value > 0; got ({x}, {h}, {v})"
            )));
        }
        lx.push(x.ln());
        lh.push(h.ln());
        lv.push(v.ln());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mx, mh) = (mean(&lx), mean(&lh));
    let var = |v: &[f64], m: f64| v.iter().map(|&t| (t - m) * (t - m)).sum::<f64>();
    let (vx, vh) = (var(&lx, mx), var(&lh, mh));
    if vx < 1e-12 {
        return Err(LabError::Validation(
            "probe grid does not vary X; the X exponent is unidentifiable".into(),
        ));
    }
    if vh < 1e-12 {
        return Err(LabError::Validation(
            "probe grid does not vary h; the h exponent is unidentifiable".into(),
        ));
    }
    let cov: f64 = lx
        .iter()
        .zip(&lh)
        .map(|(&a, &b)| (a - mx) * (b - mh))
        .sum();
    let rho_sq = cov * cov / (vx * vh);
    if rho_sq > 0.99 {
        // h rides on X; strip the known X L^3 shape and read the h exponent
        // from what is left
        let rows: Vec<Vec<f64>> = lh.iter().map(|&t| vec![1.0, t]).collect();
        let mut y = Vec::with_capacity(points.len());
        for &(x, h, v) in points {
            let l = (x.sqrt() / h).ln();
            if !(l > 0.0) {
                return Err(LabError::Validation(format!(
                    "collinear probe needs h < sqrt(X), got X={x} h={h}"
                )));
            }
            y.push((v / (x * l * l * l)).ln());
        }
        let (c, se, _) = least_squares(&rows, &y)?;
        return Ok(ExponentEstimate {
            a: 1.0,
            b: c[1],
            a_stderr: 0.0,
            b_stderr: se[1],
            collinear: true,
            points: points.len(),
        });
    }
    let rows: Vec<Vec<f64>> = lx
        .iter()
        .zip(&lh)
        .map(|(&a, &b)| vec![1.0, a, b])
        .collect();
    let (c, se, _) = least_squares(&rows, &lv)?;
    Ok(ExponentEstimate {
        a: c[1],
        b: c[2],
        a_stderr: se[1],
        b_stderr: se[2],
        collinear: false,
        points: points.len(),
    })
}

/// Measures continuous_mean_square over an X grid and fits the exponents.
/// The grid must be strictly increasing with each step at least doubling.
pub fn exponent_probe(
    k: u32,
    x_grid: &[u64],
    h_rule: impl Fn(u64) -> u64,
    quad_order: u32,
    workers: usize,
) -> Result<ExponentEstimate> {
    if x_grid.len() < 4 {
        return Err(LabError::Validation(format!(
            "exponent probe needs at least 4 grid values, got {}",
            x_grid.len()
        )));
    }
    for w in x_grid.windows(2) {
        if w[1] < 2 * w[0] {
            return Err(LabError::Validation(format!(
                "grid values must at least double at each step: {} then {}",
                w[0], w[1]
            )));
        }
    }
    let mut points = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let h = h_rule(x);
        if h == 0 || (h as f64) > (x as f64).sqrt() {
            return Err(LabError::Validation(format!(
                "h rule gave h={h} at X={x}; need 1 <= h <= sqrt(X)"
            )));
        }
        let v = delta::continuous_mean_square(k, x, h, quad_order, workers)?;
        points.push((x as f64, h as f64, v));
    }
    exponent_probe_values(&points)
}

/// Scans |Delta_k(x+h) - Delta_k(x)| at equally spaced integer x in [X, 2X]
/// and records the maxima of the two envelope ratios.
pub fn omega_scan(k: u32, x: u64, h: u64, samples: u64, workers: usize) -> Result<OmegaReport> {
    if x < 2 || h == 0 {
        return Err(LabError::Validation("need X >= 2 and h >= 1".into()));
    }
    if !(1..=2_000_000).contains(&samples) {
        return Err(LabError::Validation(format!(
            "samples must be between 1 and 2000000, got {samples}"
        )));
    }
    if (h as f64) >= (x as f64).sqrt() {
        return Err(LabError::Validation(format!(
            "scan requires h < sqrt(X) so the log envelope is positive; got h={h}, X={x}"
        )));
    }
    delta::range_guard(k, 2 * x + h)?;
    let stride = (x + 1).div_ceil(samples).max(1);
    let poly = mainterm_poly(k)?;
    let hf = h as f64;
    let chunks = delta::x_chunks(x, 2 * x);
    struct Partial {
        max_ratio: f64,
        argmax_x: u64,
        max_plain: f64,
    }
    let partials: Vec<Result<Partial>> = with_pool(workers, || {
        chunks
            .par_iter()
            .map(|&(a, b)| {
                let mut best = Partial { max_ratio: -1.0, argmax_x: a, max_plain: 0.0 };
                delta::stream_windows(k, a, b, h, |m, w| {
                    if (m - x) % stride != 0 {
                        return;
                    }
                    let dm = delta::window_diff(&poly, m, h, w).abs();
                    let plain = dm / hf.sqrt();
                    let log_env = ((m as f64).sqrt() / hf).ln().powf(1.5);
                    let ratio = plain / log_env;
                    if ratio > best.max_ratio {
                        best.max_ratio = ratio;
                        best.argmax_x = m;
                    }
                    if plain > best.max_plain {
                        best.max_plain = plain;
                    }
                })?;
                Ok(best)
            })
            .collect()
    });
    let mut max_ratio = -1.0;
    let mut argmax_x = x;
    let mut max_plain = 0.0;
    for p in partials {
        let p = p?;
        if p.max_ratio > max_ratio {
            max_ratio = p.max_ratio;
            argmax_x = p.argmax_x;
        }
        if p.max_plain > max_plain {
            max_plain = p.max_plain;
        }
    }
    Ok(OmegaReport {
        k,
        x,
        h,
        max_ratio: max_ratio.max(0.0),
        argmax_x,
        max_plain_ratio: max_plain,
        samples: x / stride + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_truncation_is_flagged_zero() {
        let s = jutila_series(1, 1, 64, 1).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.terms, 0);
        assert!(s.empty_truncation);
    }

    #[test]
    fn series_rejects_bad_inputs() {
        assert!(matches!(jutila_series(0, 1, 64, 1), Err(LabError::Validation(_))));
        assert!(matches!(jutila_series(100, 11, 64, 1), Err(LabError::Validation(_))));
        assert!(matches!(jutila_series(100, 5, 32, 1), Err(LabError::Validation(_))));
    }

    #[test]
    fn series_frozen_value_at_small_scale() {
        // reference value from an independent implementation of the series
        let s = jutila_series(1000, 10, 64, 1).unwrap();
        assert_eq!(s.terms, 50);
        let expect = 33_887.318_629_594_837;
        assert!(
            ((s.value - expect) / expect).abs() < 1e-6,
            "{} vs {expect}",
            s.value
        );
    }

    #[test]
    fn series_stable_under_node_doubling() {
        let a = jutila_series(100_000, 20, 64, 1).unwrap().value;
        let b = jutila_series(100_000, 20, 128, 1).unwrap().value;
        assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn series_tail_beyond_cutoff_is_small() {
        // the 10% of terms past the canonical cutoff move the value by < 1%
        let base = jutila_series(1_000_000, 50, 64, 2).unwrap();
        let extended =
            series_with_cutoff(1_000_000, 50, base.terms + base.terms / 10, 64, 2).unwrap();
        let rel = ((extended.value - base.value) / base.value).abs();
        assert!(rel < 0.01, "tail extension moved the value by {rel}");
    }

    #[test]
    fn series_is_worker_independent() {
        // cutoff large enough to need several fixed-boundary chunks would be
        // slow here; instead check the merge path at a modest cutoff
        let a = series_with_cutoff(100_000, 50, 1000, 64, 1).unwrap().value;
        let b = series_with_cutoff(100_000, 50, 1000, 64, 3).unwrap().value;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn series_lands_near_the_direct_mean_square() {
        // the gap is the representation's own error term; at desk scale it
        // sits around -15% to -20%, so a 35% window is a shape check, not a
        // precision claim
        let series = jutila_series(10_000, 10, 64, 2).unwrap().value;
        let direct = delta::continuous_mean_square(2, 10_000, 10, 16, 2).unwrap();
        let rel = ((series - direct) / direct).abs();
        assert!(rel < 0.35, "series {series} vs direct {direct}: rel {rel}");
    }

    #[test]
    fn cubic_main_term_examples() {
        assert_eq!(expected_cubic_main(100.0, 10.0).unwrap(), 0.0);
        let v = expected_cubic_main(1.0e6, 100.0).unwrap();
        let expect = 989_549_007.853_922_899_31;
        assert!(((v - expect) / expect).abs() < 1e-12, "{v}");
        assert!(matches!(
            expected_cubic_main(100.0, 11.0),
            Err(LabError::Validation(_))
        ));
    }

    #[test]
    fn probe_recovers_synthetic_power_law() {
        let points: Vec<(f64, f64, f64)> = [
            (1.0e5, 30.0),
            (4.0e5, 500.0),
            (1.6e6, 60.0),
            (6.4e6, 900.0),
            (2.56e7, 200.0),
        ]
        .iter()
        .map(|&(x, h): &(f64, f64)| (x, h, x * h.powf(4.0 / 3.0)))
        .collect();
        let est = exponent_probe_values(&points).unwrap();
        assert!(!est.collinear);
        assert!((est.a - 1.0).abs() < 1e-10, "a = {}", est.a);
        assert!((est.b - 4.0 / 3.0).abs() < 1e-10, "b = {}", est.b);
        assert!(est.a_stderr < 1e-8 && est.b_stderr < 1e-8);
    }

    #[test]
    fn probe_detects_power_rule_collinearity() {
        // h = X^0.3 makes log h affine in log X; the fallback pins a = 1 and
        // reads b from the log-removed response, exactly 1 for main-term data
        let points: Vec<(f64, f64, f64)> = (0..6)
            .map(|i| {
                let x = 1.0e5 * 2f64.powi(i);
                let h = x.powf(0.3).round();
                (x, h, expected_cubic_main(x, h).unwrap())
            })
            .collect();
        let est = exponent_probe_values(&points).unwrap();
        assert!(est.collinear);
        assert_eq!(est.a, 1.0);
        assert!((est.b - 1.0).abs() < 1e-6, "b = {}", est.b);
    }

    #[test]
    fn probe_rejects_degenerate_grids() {
        let constant_h: Vec<(f64, f64, f64)> = (0..5)
            .map(|i| (1.0e5 * 2f64.powi(i), 50.0, 1.0e7))
            .collect();
        assert!(matches!(
            exponent_probe_values(&constant_h),
            Err(LabError::Validation(_))
        ));
        assert!(matches!(
            exponent_probe(2, &[1000, 1500, 3000, 6000], |_| 10, 16, 1),
            Err(LabError::Validation(_))
        ));
        assert!(matches!(
            exponent_probe(2, &[1000, 2000, 4000], |_| 10, 16, 1),
            Err(LabError::Validation(_))
        ));
    }

    #[test]
    fn omega_scan_reports_envelope_statistics() {
        let r = omega_scan(2, 2000, 10, 100, 1).unwrap();
        assert!(r.max_ratio >= 0.0);
        assert!(r.max_plain_ratio >= 0.0);
        assert!((2000..=4000).contains(&r.argmax_x));
        assert!(r.samples <= 100);
        // the reported max is reproducible from the public short_diff route
        let d = delta::short_diff(2, r.argmax_x as f64, 10.0, 1).unwrap();
        let env = 10f64.sqrt() * ((r.argmax_x as f64).sqrt() / 10.0).ln().powf(1.5);
        let expect = d.value.abs() / env;
        assert!(
            (r.max_ratio - expect).abs() < 1e-9,
            "{} vs {expect}",
            r.max_ratio
        );
    }

    #[test]
    fn omega_scan_is_worker_independent() {
        let a = omega_scan(2, 1_100_000, 30, 500, 1).unwrap();
        let b = omega_scan(2, 1_100_000, 30, 500, 4).unwrap();
        assert_eq!(a.max_ratio.to_bits(), b.max_ratio.to_bits());
        assert_eq!(a.argmax_x, b.argmax_x);
        assert_eq!(a.max_plain_ratio.to_bits(), b.max_plain_ratio.to_bits());
    }

    #[test]
    fn omega_scan_guards() {
        assert!(matches!(omega_scan(2, 100, 10, 50, 1), Err(LabError::Validation(_))));
        assert!(matches!(
            omega_scan(2, 1000, 10, 3_000_000, 1),
            Err(LabError::Validation(_))
        ));
    }
}
