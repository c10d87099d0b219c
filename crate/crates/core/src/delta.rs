//! Error-term samples and short-interval mean squares.
//!
//! Delta_k(x) = sum_{n<=x} d_k(n) - x*P_{k-1}(log x). This module produces
//! point samples, short differences Delta_k(x+h) - Delta_k(x), the discrete
//! mean square over integer x in [X, 2X], the continuous mean square as a sum
//! of per-unit-cell Gauss-Legendre integrals, the discrepancy report between
//! the two, and the global mean square with its growth exponent.

use rayon::prelude::*;

use crate::dd::Dd;
use crate::kahan::CompensatedSum;
use crate::mainterm::{mainterm_poly, MainTermPoly};
use crate::quad::{self, GlRule};
use crate::sieve;
use crate::{with_pool, LabError, Result};

/// Parallel x-passes split at absolute multiples of this width, so partial
/// sums and their merge order never depend on the worker count.
pub(crate) const X_CHUNK: u64 = 1 << 20;

/// One short-difference sample Delta_k(x+h) - Delta_k(x).
#[derive(Clone, Copy, Debug)]
pub struct ShortDiffSample {
    pub k: u32,
    pub x: f64,
    pub h: f64,
    pub value: f64,
}

/// Discrete and continuous mean squares over [X, 2X] with the reference
/// style envelope.
#[derive(Clone, Copy, Debug)]
pub struct MeanSquareResult {
    pub k: u32,
    /// Left endpoint X of the range [X, 2X].
    pub x: u64,
    pub h: u64,
    pub discrete: f64,
    pub continuous: f64,
    /// discrete - continuous.
    pub discrepancy: f64,
    /// h^{5/2} (log X)^{5/2} for k=2, X^{0.01} h^3 for k>=3.
    pub bound: f64,
    pub quad_order: u32,
    /// Set when h falls outside 2 <= h <= sqrt(X)/2; reported, not an error.
    pub range_warning: bool,
}

/// Integral of Delta_k^2 over [1, X] with the X-doubling exponent estimate.
#[derive(Clone, Copy, Debug)]
pub struct GlobalMeanSquare {
    pub k: u32,
    pub x: u64,
    /// integral over [1, X]
    pub value: f64,
    /// integral over [1, X/2]
    pub half_value: f64,
    /// log(value/half_value)/(2 log 2) - 1/2
    pub beta_hat: f64,
}

/// Delta_k(x) for real x >= 1 within the sieve range.
pub fn delta_k(k: u32, x: f64, workers: usize) -> Result<f64> {
    if !(x >= 1.0) {
        return Err(LabError::Validation(format!(
            "delta_k requires x >= 1, got {x}"
        )));
    }
    let poly = mainterm_poly(k)?;
    let sum = sieve::summatory_dk(k, x.floor() as u64, workers)?;
    Ok((Dd::from_i128(sum) - poly.eval_at(x)).to_f64())
}

/// Delta_k(x+h) - Delta_k(x), computed through two independent routes that
/// must agree to 1e-6 (the direct difference of error terms, and the window
/// count minus the main-term increment).
pub fn short_diff(k: u32, x: f64, h: f64, workers: usize) -> Result<ShortDiffSample> {
    if !(x >= 1.0) {
        return Err(LabError::Validation(format!(
            "short_diff requires x >= 1, got {x}"
        )));
    }
    if !(h >= 0.0) {
        return Err(LabError::Validation(format!(
            "short_diff requires h >= 0, got {h}"
        )));
    }
    let direct = delta_k(k, x + h, workers)? - delta_k(k, x, workers)?;
    let poly = mainterm_poly(k)?;
    let fx = x.floor() as u64;
    let span = (x + h).floor() as u64 - fx;
    let window = sieve::interval_sum_dk(k, fx, span, workers)?;
    let g = poly.eval_at(x + h) - poly.eval_at(x);
    let via_window = (Dd::from_i128(window) - g).to_f64();
    if (direct - via_window).abs() > 1e-6 {
        return Err(LabError::Internal(format!(
            "short_diff routes disagree at k={k} x={x} h={h}: {direct} vs {via_window}"
        )));
    }
    Ok(ShortDiffSample { k, x, h, value: direct })
}

/// Window difference Delta_k(m+h) - Delta_k(m) at integer m, given the exact
/// window count w = sum_{m<n<=m+h} d_k(n). The +h log rides on ln1p so only
/// one full logarithm is taken per call.
pub(crate) fn window_diff(poly: &MainTermPoly, m: u64, h: u64, w: i64) -> f64 {
    let xf = m as f64;
    let t = Dd::from_f64(xf).ln();
    let th = t + Dd::ln1p(h as f64 / xf);
    let g = poly.eval_with_ln((m + h) as f64, th) - poly.eval_with_ln(xf, t);
    (Dd::from_f64(w as f64) - g).to_f64()
}

/// Streams d_k over (a, b+h] and hands each integer m in [a, b] its window
/// sum over (m, m+h]. Window updates are exact integer arithmetic.
pub(crate) fn stream_windows(
    k: u32,
    a: u64,
    b: u64,
    h: u64,
    mut visit: impl FnMut(u64, i64),
) -> Result<()> {
    let block = sieve::sieve_dk_block(k, a + 1, b + h)?;
    let d = |n: u64| block.values[(n - a - 1) as usize] as i64;
    let mut w: i64 = (a + 1..=a + h).map(d).sum();
    visit(a, w);
    for m in a + 1..=b {
        w += d(m + h) - d(m);
        visit(m, w);
    }
    Ok(())
}

pub(crate) fn range_guard(k: u32, top: u64) -> Result<()> {
    let cap = sieve::summatory_cap(k);
    if top > cap {
        return Err(LabError::Resource(format!(
            "range end {top} exceeds the configured maximum {cap} for k={k}"
        )));
    }
    Ok(())
}

/// Absolute-boundary chunks covering [lo, hi] inclusive.
pub(crate) fn x_chunks(lo: u64, hi: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut a = lo;
    while a <= hi {
        let b = hi.min((a / X_CHUNK + 1) * X_CHUNK - 1);
        out.push((a, b));
        a = b + 1;
    }
    out
}

/// Sigma_k(X,h): sum over integer x in [X, 2X] of the squared short
/// difference. Single streaming pass per chunk; compensated accumulation in
/// ascending x with a fixed merge order.
pub fn discrete_mean_square(k: u32, x: u64, h: u64, workers: usize) -> Result<f64> {
    if x == 0 {
        return Err(LabError::Validation("X must be positive".into()));
    }
    range_guard(k, 2 * x + h)?;
    if h == 0 {
        return Ok(0.0);
    }
    let poly = mainterm_poly(k)?;
    let chunks = x_chunks(x, 2 * x);
    let partials: Vec<Result<CompensatedSum>> = with_pool(workers, || {
        chunks
            .par_iter()
            .map(|&(a, b)| {
                let mut acc = CompensatedSum::new();
                stream_windows(k, a, b, h, |m, w| {
                    let dm = window_diff(&poly, m, h, w);
                    acc.add(dm * dm);
                })?;
                Ok(acc)
            })
            .collect()
    });
    let mut total = CompensatedSum::new();
    for p in partials {
        total.merge(p?);
    }
    Ok(total.value())
}

/// Continuous mean square over cells [m, m+1) for m in [x0, x1); the window
/// sum is constant on each cell and the main-term difference is smooth, so
/// per-cell Gauss-Legendre is exact to roundoff.
fn continuous_over_cells(
    k: u32,
    poly: &MainTermPoly,
    rule: &'static GlRule,
    x0: u64,
    x1: u64,
    h: u64,
    workers: usize,
) -> Result<f64> {
    if x1 <= x0 {
        return Ok(0.0);
    }
    let chunks = x_chunks(x0, x1 - 1);
    let partials: Vec<Result<CompensatedSum>> = with_pool(workers, || {
        chunks
            .par_iter()
            .map(|&(a, b)| {
                let mut acc = CompensatedSum::new();
                stream_windows(k, a, b, h, |m, w| {
                    acc.add(cell_integral(poly, rule, m, h, w));
                })?;
                Ok(acc)
            })
            .collect()
    });
    let mut total = CompensatedSum::new();
    for p in partials {
        total.merge(p?);
    }
    Ok(total.value())
}

/// Integral over [m, m+1) of (w - g(t))^2 with g the main-term increment.
fn cell_integral(poly: &MainTermPoly, rule: &'static GlRule, m: u64, h: u64, w: i64) -> f64 {
    let mf = m as f64;
    let anchor = Dd::from_f64(mf).ln();
    let wf = Dd::from_f64(w as f64);
    let hf = h as f64;
    let mut acc = 0.0;
    for (&node, &weight) in rule.nodes.iter().zip(&rule.weights) {
        let pos = 0.5 * (node + 1.0);
        let t = mf + pos;
        let lt = anchor + Dd::ln1p(pos / mf);
        let lth = lt + Dd::ln1p(hf / t);
        let g = poly.eval_with_ln(t + hf, lth) - poly.eval_with_ln(t, lt);
        let dv = (wf - g).to_f64();
        acc += weight * (dv * dv);
    }
    0.5 * acc
}

/// I_k(X,h): integral over [X, 2X] of the squared short difference.
pub fn continuous_mean_square(
    k: u32,
    x: u64,
    h: u64,
    quad_order: u32,
    workers: usize,
) -> Result<f64> {
    if x == 0 {
        return Err(LabError::Validation("X must be positive".into()));
    }
    range_guard(k, 2 * x + h)?;
    let rule = quad::rule(quad_order as usize).ok_or_else(|| {
        LabError::Validation(format!(
            "quad_order must be one of 8, 16, 32; got {quad_order}"
        ))
    })?;
    if h == 0 {
        return Ok(0.0);
    }
    let poly = mainterm_poly(k)?;
    continuous_over_cells(k, &poly, rule, x, 2 * x, h, workers)
}

/// Both mean squares plus the discrepancy and its reference envelope.
pub fn discrepancy_report(
    k: u32,
    x: u64,
    h: u64,
    quad_order: u32,
    workers: usize,
) -> Result<MeanSquareResult> {
    if x < 2 {
        return Err(LabError::Validation("X must be at least 2".into()));
    }
    if h == 0 {
        return Err(LabError::Validation("h must be positive".into()));
    }
    let discrete = discrete_mean_square(k, x, h, workers)?;
    let continuous = continuous_mean_square(k, x, h, quad_order, workers)?;
    let xf = x as f64;
    let hf = h as f64;
    let bound = if k == 2 {
        hf.powf(2.5) * xf.ln().powf(2.5)
    } else {
        xf.powf(0.01) * hf.powi(3)
    };
    let range_warning = h < 2 || hf > xf.sqrt() / 2.0;
    Ok(MeanSquareResult {
        k,
        x,
        h,
        discrete,
        continuous,
        discrepancy: discrete - continuous,
        bound,
        quad_order,
        range_warning,
    })
}

/// Integral of Delta_k^2 over [1, X]. The running summatory couples every
/// cell to the previous ones, so this pass is sequential by construction
/// (and therefore trivially deterministic).
fn integral_delta_sq(k: u32, poly: &MainTermPoly, rule: &'static GlRule, x: u64) -> Result<f64> {
    if x <= 1 {
        return Ok(0.0);
    }
    let mut acc = CompensatedSum::new();
    let mut s: i128 = 0;
    let mut lo = 1u64;
    while lo < x {
        let hi = x.min(lo + (sieve::MAX_BLOCK_LEN - 1).min(1 << 22));
        let block = sieve::sieve_dk_block(k, lo, hi)?;
        for m in lo..hi {
            s += block.values[(m - lo) as usize] as i128;
            let sm = Dd::from_i128(s);
            let mf = m as f64;
            let anchor = Dd::from_f64(mf).ln();
            let mut cell = 0.0;
            for (&node, &weight) in rule.nodes.iter().zip(&rule.weights) {
                let pos = 0.5 * (node + 1.0);
                let lt = anchor + Dd::ln1p(pos / mf);
                let dv = (sm - poly.eval_with_ln(mf + pos, lt)).to_f64();
                cell += weight * (dv * dv);
            }
            acc.add(0.5 * cell);
        }
        // the block's last value is consumed by the next block's first cell
        lo = hi;
    }
    Ok(acc.value())
}

/// Global mean square of Delta_k with the doubling exponent estimate
/// beta_hat = log(V(X)/V(X/2)) / (2 log 2) - 1/2.
pub fn global_mean_square(k: u32, x: u64) -> Result<GlobalMeanSquare> {
    if x == 0 {
        return Err(LabError::Validation("X must be positive".into()));
    }
    range_guard(k, x)?;
    let poly = mainterm_poly(k)?;
    let rule = quad::rule(16).expect("order 16 is always available");
    let value = integral_delta_sq(k, &poly, rule, x)?;
    let half_value = integral_delta_sq(k, &poly, rule, x / 2)?;
    let beta_hat = if half_value > 0.0 && value > 0.0 {
        (value / half_value).ln() / (2.0 * std::f64::consts::LN_2) - 0.5
    } else {
        f64::NAN
    };
    Ok(GlobalMeanSquare { k, x, value, half_value, beta_hat })
}
