//! Euler-Maclaurin zeta engine.
//!
//! Evaluates zeta(sigma + it) across the critical strip, integrates
//! |zeta|^{2k} moments, maintains the second-moment remainder
//! E(T) = int_0^T |zeta(1/2+it)|^2 dt - T(log(T/2pi) + 2gamma - 1) behind a
//! cached panel table, and runs the truncated Perron inversion against the
//! exact divisor summatory as an end-to-end consistency check.
//!
//! Euler-Maclaurin is used rather than Riemann-Siegel because the moment
//! work needs sigma away from 1/2 with uniform accuracy; heights here stay
//! below 1e5 where the O(|t|) term count is affordable. Within one
//! evaluation n^{-s} is built multiplicatively from its smallest prime
//! factor, so only the ~N/log N prime indices pay for a sin/cos pair.

use std::f64::consts::{LN_2, PI, TAU};
use std::sync::{Mutex, OnceLock};

pub use num_complex::Complex64;
use rayon::prelude::*;

use crate::dd::Dd;
use crate::kahan::CompensatedSum;
use crate::quad;
use crate::sieve;
use crate::{with_pool, LabError, Result};

/// 2 gamma - 1, the constant in the E(T) main term.
const TWO_GAMMA_MINUS_ONE: f64 = 0.154_431_329_803_065_72;

/// B_{2j}/(2j)! for j = 1..6; the Euler-Maclaurin correction weights.
const B_OVER_FACT: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
    -691.0 / 1_307_674_368_000.0,
];

/// zeta(13); the remainder bound after the B_12 term uses
/// 2 zeta(13)/(2pi)^13 from the Fourier bound on the periodized Bernoulli
/// polynomial.
const ZETA_13: f64 = 1.000_122_713_347_578_5;

/// Mean-value abscissas sigma(k) for k = 1..5 quoted by the moment reports.
const SIGMA_K_REFERENCE: [f64; 5] = [0.5, 0.5, 7.0 / 12.0, 0.625, 41.0 / 60.0];

/// One evaluation of zeta on the strip.
#[derive(Clone, Copy, Debug)]
pub struct ZetaPoint {
    pub sigma: f64,
    pub t: f64,
    pub value: Complex64,
    pub terms_used: usize,
    /// Rigorous truncation bound plus a small roundoff allowance; below
    /// 1e-10 everywhere in the validated window.
    pub err_bound: f64,
}

/// Moment integral over [0, T] with its T-doubling growth exponent.
#[derive(Clone, Copy, Debug)]
pub struct MomentResult {
    pub k: u32,
    pub sigma: f64,
    pub t_max: f64,
    pub integral: f64,
    /// log2 of integral(2T)/integral(T); NaN when T = 0.
    pub exponent_estimate: f64,
    /// Literature abscissa sigma(k) the experiment is usually run at.
    pub sigma_k_reference: f64,
}

/// Truncated Perron inversion compared against the exact divisor sum.
#[derive(Clone, Copy, Debug)]
pub struct PerronReport {
    pub k: u32,
    pub x: f64,
    pub t_max: f64,
    pub line_sigma: f64,
    pub integral_value: f64,
    pub exact_sum: i128,
    pub abs_error: f64,
}

/// Smallest prime factor for every index up to n; spf[p] = p marks primes.
fn spf_table(n: usize) -> Vec<u32> {
    let mut spf: Vec<u32> = (0..=n as u32).collect();
    let mut i = 2usize;
    while i * i <= n {
        if spf[i] == i as u32 {
            for j in (i * i..=n).step_by(i) {
                if spf[j] == j as u32 {
                    spf[j] = i as u32;
                }
            }
        }
        i += 1;
    }
    spf
}

/// cos/sin of -t*ln(n) with the phase reduced modulo 2 pi in double-double,
/// so a 1e6-radian phase still lands within ~1e-26 of the true angle. A
/// plain f64 product would already be ~1e-10 off at t = 1e5, which is the
/// whole error budget.
#[inline]
fn cis_neg(td: Dd, ln_n: Dd) -> (f64, f64) {
    let phase = td * ln_n;
    let q = (phase.to_f64() / TAU).floor();
    let r = (phase - Dd::from_f64(q) * Dd::TAU).to_f64();
    (r.cos(), -r.sin())
}

/// Reusable zeta evaluator for one fixed sigma.
///
/// Holds the sigma-independent smallest-prime-factor table, double-double
/// logarithms, the n^{-sigma} powers, and a scratch buffer; all grow on
/// demand. The accepted window (0, 2.5] is wider than the public zeta_em
/// window because the Perron line 1 + 1/log x climbs to ~2.44 at x = 2.1.
#[derive(Clone)]
pub struct ZetaEvaluator {
    sigma: f64,
    spf: Vec<u32>,
    ln_n: Vec<Dd>,
    pow_n: Vec<f64>,
    z: Vec<Complex64>,
}

impl ZetaEvaluator {
    pub fn new(sigma: f64) -> Result<ZetaEvaluator> {
        if !(sigma > 0.0 && sigma <= 2.5) {
            return Err(LabError::Validation(format!(
                "zeta evaluator accepts 0 < sigma <= 2.5, got {sigma}"
            )));
        }
        Ok(ZetaEvaluator {
            sigma,
            spf: Vec::new(),
            ln_n: Vec::new(),
            pow_n: Vec::new(),
            z: Vec::new(),
        })
    }

    /// |(s)(s+1)...(s+12)| at s = sigma + it.
    fn factor_prod(&self, t: f64) -> f64 {
        let mut p = 1.0;
        for m in 0..13 {
            let a = self.sigma + m as f64;
            p *= (a * a + t * t).sqrt();
        }
        p
    }

    /// Rigorous bound on the remainder after the B_12 correction with N
    /// initial terms.
    fn rem_bound(&self, t: f64, n: usize) -> f64 {
        let c13 = 2.0 * ZETA_13 / (2.0 * PI).powi(13);
        self.factor_prod(t) * c13 * (n as f64).powf(-self.sigma - 12.0) / (self.sigma + 12.0)
    }

    /// Smallest term count driving the truncation bound under 5e-11, plus
    /// the resulting reported bound (with a roundoff allowance).
    fn pick_n(&self, t: f64) -> (usize, f64) {
        let target = 5.0e-11;
        let c13 = 2.0 * ZETA_13 / (2.0 * PI).powi(13);
        let base = self.factor_prod(t) * c13 / (target * (self.sigma + 12.0));
        let mut n = (base.powf(1.0 / (self.sigma + 12.0)).ceil() as usize).max(20);
        loop {
            let b = self.rem_bound(t, n);
            if b < target {
                return (n, b + 1.0e-13 + 3.0e-16 * (n as f64).sqrt());
            }
            n = (n + 1).max((n as f64 * 1.15) as usize);
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.pow_n.len() > n {
            return;
        }
        let top = (n + 1).max(self.pow_n.len() * 2).max(64) - 1;
        self.spf = spf_table(top);
        let old = self.pow_n.len().max(1);
        self.ln_n.resize(old, Dd::ZERO);
        self.pow_n.resize(old, 0.0);
        for m in old..=top {
            let mf = m as f64;
            self.ln_n.push(Dd::from_f64(mf).ln());
            self.pow_n.push(mf.powf(-self.sigma));
        }
    }

    /// Euler-Maclaurin value with an explicit term count; `ensure(n)` must
    /// have run.
    fn raw_value(&mut self, t: f64, n: usize) -> Complex64 {
        let s = Complex64::new(self.sigma, t);
        if self.z.len() < n + 1 {
            self.z.resize(n + 1, Complex64::new(0.0, 0.0));
        }
        let td = Dd::from_f64(t);
        self.z[1] = Complex64::new(1.0, 0.0);
        for m in 2..=n {
            let p = self.spf[m] as usize;
            self.z[m] = if p == m {
                let (c, sn) = cis_neg(td, self.ln_n[m]);
                self.pow_n[m] * Complex64::new(c, sn)
            } else {
                self.z[p] * self.z[m / p]
            };
        }
        // ascending-magnitude sum keeps the plain accumulation near one ulp
        let mut re = 0.0;
        let mut im = 0.0;
        for m in (1..n).rev() {
            re += self.z[m].re;
            im += self.z[m].im;
        }
        let sum = Complex64::new(re, im);
        let zn = self.z[n];
        let nf = n as f64;
        let tail = zn * nf / (s - 1.0) + zn * 0.5;
        let mut corr = Complex64::new(0.0, 0.0);
        let mut poch = s;
        let mut npow = zn / nf;
        for (j, &b) in B_OVER_FACT.iter().enumerate() {
            corr += b * poch * npow;
            let m2 = (2 * j + 1) as f64;
            poch = poch * (s + m2) * (s + m2 + 1.0);
            npow /= nf * nf;
        }
        sum + tail + corr
    }

    /// Hot-path value without the bookkeeping struct.
    fn value_at(&mut self, t: f64) -> Complex64 {
        let (n, _) = self.pick_n(t);
        self.ensure(n);
        self.raw_value(t, n)
    }

    /// Value at a forced term count, for self-consistency tests.
    #[cfg(test)]
    pub(crate) fn eval_forced(&mut self, t: f64, n: usize) -> Complex64 {
        self.ensure(n);
        self.raw_value(t, n)
    }

    pub fn eval(&mut self, t: f64) -> Result<ZetaPoint> {
        if !t.is_finite() || t.abs() > 1.0e5 {
            return Err(LabError::Validation(format!(
                "zeta evaluation validated for |t| <= 1e5, got {t}"
            )));
        }
        if (self.sigma - 1.0).abs() < 1.0e-12 && t.abs() < 1.0e-12 {
            return Err(LabError::Validation("s = 1 is the pole of zeta".into()));
        }
        let (n, bound) = self.pick_n(t);
        self.ensure(n);
        let value = self.raw_value(t, n);
        Ok(ZetaPoint { sigma: self.sigma, t, value, terms_used: n, err_bound: bound })
    }
}

/// zeta(sigma + it) in the validated strip window 0 < sigma <= 2, |t| <= 1e5.
pub fn zeta_em(sigma: f64, t: f64) -> Result<ZetaPoint> {
    if !(sigma > 0.0 && sigma <= 2.0) {
        return Err(LabError::Validation(format!(
            "zeta_em accepts 0 < sigma <= 2, got {sigma}"
        )));
    }
    ZetaEvaluator::new(sigma)?.eval(t)
}

/// int_0^{t_end} |zeta(sigma+it)|^{2k} dt by Gauss-Legendre 8 on unit
/// panels (node spacing < 0.25) plus a shrunk final panel.
fn abs_power_integral(k: u32, sigma: f64, t_end: f64, workers: usize) -> Result<f64> {
    let mut template = ZetaEvaluator::new(sigma)?;
    if t_end == 0.0 {
        return Ok(0.0);
    }
    let rule = quad::rule(8).expect("order 8 is always available");
    let (n_top, _) = template.pick_n(t_end);
    template.ensure(n_top);
    let whole = t_end.floor() as u64;
    let panel = |ev: &mut ZetaEvaluator, a: f64, w: f64| -> f64 {
        let mut acc = 0.0;
        for (&node, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let t = a + 0.5 * w * (node + 1.0);
            acc += wt * ev.value_at(t).norm_sqr().powi(k as i32);
        }
        0.5 * w * acc
    };
    const PANEL_CHUNK: u64 = 512;
    let mut chunks = Vec::new();
    let mut a = 0u64;
    while a < whole {
        let b = whole.min(a + PANEL_CHUNK);
        chunks.push((a, b));
        a = b;
    }
    let partials: Vec<CompensatedSum> = with_pool(workers, || {
        chunks
            .par_iter()
            .map(|&(a, b)| {
                let mut ev = template.clone();
                let mut acc = CompensatedSum::new();
                for p in a..b {
                    acc.add(panel(&mut ev, p as f64, 1.0));
                }
                acc
            })
            .collect()
    });
    let mut total = CompensatedSum::new();
    for p in partials {
        total.merge(p);
    }
    let frac = t_end - whole as f64;
    if frac > 0.0 {
        total.add(panel(&mut template, whole as f64, frac));
    }
    Ok(total.value())
}

/// Moment of |zeta|^{2k} over [0, T] together with the exponent estimate
/// from a second integral over [0, 2T].
pub fn moment_integral(k: u32, sigma: f64, t_max: f64, workers: usize) -> Result<MomentResult> {
    if !(1..=5).contains(&k) {
        return Err(LabError::Validation(format!(
            "moment power k must lie in 1..=5, got {k}"
        )));
    }
    if !(t_max >= 0.0) {
        return Err(LabError::Validation(format!("T must be nonnegative, got {t_max}")));
    }
    if t_max > 5.0e4 {
        return Err(LabError::Resource(format!(
            "moment integral capped at T = 5e4 (the doubled run reaches 2T), got {t_max}"
        )));
    }
    let integral = abs_power_integral(k, sigma, t_max, workers)?;
    let doubled = abs_power_integral(k, sigma, 2.0 * t_max, workers)?;
    let exponent_estimate = if integral > 0.0 && doubled > 0.0 {
        (doubled / integral).ln() / LN_2
    } else {
        f64::NAN
    };
    Ok(MomentResult {
        k,
        sigma,
        t_max,
        integral,
        exponent_estimate,
        sigma_k_reference: SIGMA_K_REFERENCE[(k - 1) as usize],
    })
}

/// Number of interpolation nodes per unit panel of the cached
/// |zeta(1/2+it)|^2 table.
const E_ORDER: usize = 16;

/// Cached per-panel Legendre coefficients of |zeta(1/2+it)|^2 on [p, p+1)
/// and prefix integrals; grows monotonically, shared process-wide.
struct ECache {
    coeffs: Vec<[f64; E_ORDER]>,
    prefix: Vec<f64>,
    prefix_acc: CompensatedSum,
}

fn e_cache() -> &'static Mutex<ECache> {
    static CACHE: OnceLock<Mutex<ECache>> = OnceLock::new();
    CACHE.get_or_init(|| {
        Mutex::new(ECache {
            coeffs: Vec::new(),
            prefix: vec![0.0],
            prefix_acc: CompensatedSum::new(),
        })
    })
}

/// Projection matrix from 16 Gauss-Legendre node values to Legendre-series
/// coefficients a_l = (2l+1)/2 sum_j w_j P_l(x_j) f(x_j); exact for the
/// degree-15 interpolant.
fn proj_matrix() -> &'static [[f64; E_ORDER]; E_ORDER] {
    static M: OnceLock<[[f64; E_ORDER]; E_ORDER]> = OnceLock::new();
    M.get_or_init(|| {
        let rule = quad::rule(16).expect("order 16 is always available");
        let mut m = [[0.0; E_ORDER]; E_ORDER];
        for (j, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let p = legendre_row(x);
            for (l, row) in m.iter_mut().enumerate() {
                row[j] = (2 * l + 1) as f64 / 2.0 * w * p[l];
            }
        }
        m
    })
}

/// P_0..P_16 at u by the three-term recurrence.
fn legendre_row(u: f64) -> [f64; E_ORDER + 1] {
    let mut p = [0.0; E_ORDER + 1];
    p[0] = 1.0;
    p[1] = u;
    for l in 1..E_ORDER {
        p[l + 1] = ((2 * l + 1) as f64 * u * p[l] - l as f64 * p[l - 1]) / (l + 1) as f64;
    }
    p
}

/// Legendre coefficients of |zeta(1/2+it)|^2 on panel [p, p+1).
fn e_panel(ev: &mut ZetaEvaluator, p: u64) -> [f64; E_ORDER] {
    let rule = quad::rule(16).expect("order 16 is always available");
    let mut vals = [0.0; E_ORDER];
    for (j, &x) in rule.nodes.iter().enumerate() {
        let t = p as f64 + 0.5 * (x + 1.0);
        vals[j] = ev.value_at(t).norm_sqr();
    }
    let m = proj_matrix();
    let mut a = [0.0; E_ORDER];
    for (l, row) in m.iter().enumerate() {
        a[l] = row.iter().zip(&vals).map(|(&c, &v)| c * v).sum();
    }
    a
}

/// Integral over the first `f` of a unit panel from its Legendre
/// coefficients: (1/2) sum_l a_l int_{-1}^{2f-1} P_l. No zeta evaluations.
fn partial_panel(a: &[f64; E_ORDER], f: f64) -> f64 {
    let u = 2.0 * f - 1.0;
    let p = legendre_row(u);
    let mut s = a[0] * (u + 1.0);
    for l in 1..E_ORDER {
        s += a[l] * (p[l + 1] - p[l - 1]) / (2 * l + 1) as f64;
    }
    0.5 * s
}

/// Grows the shared panel table to `count` panels. The lock is held for the
/// whole growth so concurrent callers serialize; each panel's value depends
/// only on its own nodes, so the content never depends on who grew it.
fn ensure_e_panels(count: usize, workers: usize) -> Result<()> {
    let mut guard = e_cache().lock().expect("e-table lock poisoned");
    if guard.coeffs.len() >= count {
        return Ok(());
    }
    let start = guard.coeffs.len();
    let mut template = ZetaEvaluator::new(0.5)?;
    let (n_top, _) = template.pick_n(count as f64);
    template.ensure(n_top);
    const PANEL_CHUNK: usize = 64;
    let chunks: Vec<(usize, usize)> = {
        let mut v = Vec::new();
        let mut a = start;
        while a < count {
            let b = count.min(a + PANEL_CHUNK);
            v.push((a, b));
            a = b;
        }
        v
    };
    let blocks: Vec<Vec<[f64; E_ORDER]>> = with_pool(workers, || {
        chunks
            .par_iter()
            .map(|&(a, b)| {
                let mut ev = template.clone();
                (a..b).map(|p| e_panel(&mut ev, p as u64)).collect()
            })
            .collect()
    });
    for block in blocks {
        for a in block {
            guard.prefix_acc.add(a[0]);
            let running = guard.prefix_acc.value();
            guard.prefix.push(running);
            guard.coeffs.push(a);
        }
    }
    Ok(())
}

/// int_0^t |zeta(1/2+iu)|^2 du from the cached table.
fn second_moment_raw(cache: &ECache, t: f64) -> f64 {
    let m = t.floor() as usize;
    let f = t - m as f64;
    let mut v = cache.prefix[m];
    if f > 0.0 {
        v += partial_panel(&cache.coeffs[m], f);
    }
    v
}

fn e_main_term(t: f64) -> f64 {
    t * ((t / TAU).ln() + TWO_GAMMA_MINUS_ONE)
}

/// E(T) = int_0^T |zeta(1/2+it)|^2 dt - T(log(T/2pi) + 2 gamma - 1).
pub fn e_term(t: f64, workers: usize) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(LabError::Validation(format!("E(T) needs T >= 0, got {t}")));
    }
    if t > 5.0e4 {
        return Err(LabError::Resource(format!("E(T) capped at T = 5e4, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    ensure_e_panels(t.floor() as usize + 1, workers)?;
    let guard = e_cache().lock().expect("e-table lock poisoned");
    Ok(second_moment_raw(&guard, t) - e_main_term(t))
}

/// int_X^{2X} (E(x+h) - E(x))^2 dx over the cached table. X is capped at
/// 1e4: every integrand sample is itself an integral to ~2X.
pub fn e_short_diff_ms(x: f64, h: f64, workers: usize) -> Result<f64> {
    if !(x >= 1.0) {
        return Err(LabError::Validation(format!("X must be at least 1, got {x}")));
    }
    if x > 1.0e4 {
        return Err(LabError::Resource(format!(
            "E mean square capped at X = 1e4, got {x}"
        )));
    }
    if !(h >= 0.0) {
        return Err(LabError::Validation(format!("h must be nonnegative, got {h}")));
    }
    if h == 0.0 {
        return Ok(0.0);
    }
    ensure_e_panels((2.0 * x + h).floor() as usize + 1, workers)?;
    let guard = e_cache().lock().expect("e-table lock poisoned");
    let e_at = |t: f64| second_moment_raw(&guard, t) - e_main_term(t);
    let rule = quad::rule(8).expect("order 8 is always available");
    let panels = x.ceil() as usize;
    let w = x / panels as f64;
    let mut acc = CompensatedSum::new();
    for p in 0..panels {
        let a = x + p as f64 * w;
        let mut cell = 0.0;
        for (&node, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let t = a + 0.5 * w * (node + 1.0);
            let d = e_at(t + h) - e_at(t);
            cell += wt * d * d;
        }
        acc.add(0.5 * w * cell);
    }
    Ok(acc.value())
}

/// Truncated Perron inversion (1/2 pi i) int x^s zeta^k(s)/s ds on the line
/// Re s = 1 + 1/log x, folded to (1/pi) int_0^T Re by conjugate symmetry,
/// against the exact summatory sum_{n <= x} d_k(n).
pub fn perron_truncated(k: u32, x: f64, t_max: f64, workers: usize) -> Result<PerronReport> {
    if !(1..=4).contains(&k) {
        return Err(LabError::Validation(format!(
            "perron check supports k in 1..=4, got {k}"
        )));
    }
    if !(x >= 2.0 && x <= 1.0e4) {
        return Err(LabError::Validation(format!(
            "perron check needs 2 <= x <= 1e4, got {x}"
        )));
    }
    if (x - x.round()).abs() < 0.1 {
        return Err(LabError::Validation(format!(
            "x = {x} is within 0.1 of an integer; the inversion boundary term is ambiguous there"
        )));
    }
    if !(t_max > 0.0) {
        return Err(LabError::Validation(format!("T must be positive, got {t_max}")));
    }
    if t_max > 1.0e4 {
        return Err(LabError::Resource(format!(
            "perron check capped at T = 1e4, got {t_max}"
        )));
    }
    let line_sigma = 1.0 + 1.0 / x.ln();
    let steps = (t_max / 0.05).ceil() as u64;
    let dt = t_max / steps as f64;
    let mut template = ZetaEvaluator::new(line_sigma)?;
    let (n_top, _) = template.pick_n(t_max);
    template.ensure(n_top);
    let lx = x.ln();
    let xs = x.powf(line_sigma);
    let integrand = |ev: &mut ZetaEvaluator, t: f64| -> f64 {
        let s = Complex64::new(line_sigma, t);
        let zk = ev.value_at(t).powu(k);
        let xst = xs * Complex64::new((t * lx).cos(), (t * lx).sin());
        (zk * xst / s).re
    };
    const STEP_CHUNK: u64 = 8192;
    let mut chunks = Vec::new();
    let mut a = 0u64;
    while a <= steps {
        let b = steps.min(a + STEP_CHUNK - 1);
        chunks.push((a, b));
        a = b + 1;
    }
    let partials: Vec<CompensatedSum> = with_pool(workers, || {
        chunks
            .par_iter()
            .map(|&(a, b)| {
                let mut ev = template.clone();
                let mut acc = CompensatedSum::new();
                for j in a..=b {
                    let weight = if j == 0 || j == steps { 0.5 } else { 1.0 };
                    acc.add(weight * integrand(&mut ev, j as f64 * dt));
                }
                acc
            })
            .collect()
    });
    let mut total = CompensatedSum::new();
    for p in partials {
        total.merge(p);
    }
    let integral_value = dt * total.value() / PI;
    let exact_sum = sieve::summatory_dk(k, x.floor() as u64, workers)?;
    Ok(PerronReport {
        k,
        x,
        t_max,
        line_sigma,
        integral_value,
        exact_sum,
        abs_error: (integral_value - exact_sum as f64).abs(),
    })
}
