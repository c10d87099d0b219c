//! Main-term polynomials for the d_k summatory function.
//!
//! Sum_{n<=x} d_k(n) = x*P_{k-1}(log x) + remainder, where P_{k-1} is the
//! residue at s=1 of zeta^k(s) x^s / s. The residue is assembled from the
//! Laurent expansion of zeta^k, whose coefficients come from Stieltjes
//! constants; everything is carried in double-double form because the
//! alternating residue sum cancels heavily as k grows.

use crate::dd::Dd;
use crate::{LabError, Result};

/// Stieltjes constants gamma_0..gamma_19 as double-double pairs, 31+ correct
/// digits each. The unit tests re-derive the first sixteen with an
/// Euler-Maclaurin oracle; the table itself is the runtime source.
const GAMMA_DD: [Dd; 20] = [
    Dd::new(0.5772156649015329, -4.942915152430645e-18),
    Dd::new(-0.07281584548367673, 2.851266173998682e-18),
    Dd::new(-0.00969036319287232, 7.744776654821997e-19),
    Dd::new(0.002053834420303346, -1.2194132682224453e-19),
    Dd::new(0.0023253700654673, -1.4104581889596386e-19),
    Dd::new(0.0007933238173010627, -2.999190768475353e-20),
    Dd::new(-0.0002387693454301996, 1.9774616922901093e-21),
    Dd::new(-0.000527289567057751, -1.7470978857315186e-20),
    Dd::new(-0.0003521233538030395, 1.2042300273655047e-20),
    Dd::new(-3.439477441808805e-05, 1.6540374283839327e-21),
    Dd::new(0.0002053328149090648, -1.2688338234545343e-20),
    Dd::new(0.0002701844395439035, 5.222376861684301e-22),
    Dd::new(0.0001672729121051402, 4.319190771886911e-21),
    Dd::new(-2.7463806603760158e-05, -1.1287408286991942e-21),
    Dd::new(-0.00020920926205929996, 9.737392017940918e-21),
    Dd::new(-0.0002834686553202414, -2.522164994163088e-20),
    Dd::new(-0.00019969685830896976, -1.2080734781092196e-20),
    Dd::new(2.6277037109918338e-05, -1.1563049580584006e-21),
    Dd::new(0.0003073684081492528, 1.2416177321177195e-20),
    Dd::new(0.0005036054530473557, -3.7858134949096263e-20),
];

/// Public cap on `stieltjes_constants`.
pub const MAX_STIELTJES: usize = 16;

/// Largest k any main-term operation accepts.
pub const MAX_POLY_K: u32 = 8;

/// Truncated Laurent expansion about s = 1, stored densely in ascending
/// powers of w = s - 1 starting at w^(-pole_order).
#[derive(Clone, Debug)]
pub struct LaurentSeries {
    pub pole_order: u32,
    /// coeffs[i] multiplies w^(i - pole_order).
    pub coeffs: Vec<Dd>,
}

impl LaurentSeries {
    /// Highest power of (s-1) the truncation retains.
    pub fn max_exponent(&self) -> i32 {
        self.coeffs.len() as i32 - 1 - self.pole_order as i32
    }

    /// Coefficient of (s-1)^exponent, zero outside the stored window.
    pub fn coeff(&self, exponent: i32) -> Dd {
        let idx = exponent + self.pole_order as i32;
        if idx < 0 || idx as usize >= self.coeffs.len() {
            Dd::ZERO
        } else {
            self.coeffs[idx as usize]
        }
    }
}

/// P_{k-1} and Q_{k-1} = P_{k-1} + P'_{k-1} in ascending coefficients.
#[derive(Clone, Debug)]
pub struct MainTermPoly {
    pub k: u32,
    /// p_coeffs[j] multiplies t^j in P_{k-1}(t); length k.
    pub p_coeffs: Vec<Dd>,
    /// Same layout for Q_{k-1}.
    pub q_coeffs: Vec<Dd>,
}

impl MainTermPoly {
    /// x * P_{k-1}(log x). Rejects x <= 1 and x beyond 1e12 (past that the
    /// integer summatory side of the comparison is out of reach anyway).
    pub fn eval(&self, x: f64) -> Result<Dd> {
        if !(x > 1.0) {
            return Err(LabError::Validation(format!(
                "main term requires x > 1, got {x}"
            )));
        }
        if x > 1.0e12 {
            return Err(LabError::Validation(format!(
                "main term capped at x = 1e12, got {x}"
            )));
        }
        Ok(self.eval_at(x))
    }

    /// Horner evaluation without the domain guard; `x` must be positive.
    /// The short-interval code paths call this with x down to 1.
    pub(crate) fn eval_at(&self, x: f64) -> Dd {
        self.eval_with_ln(x, Dd::from_f64(x).ln())
    }

    /// Same evaluation with log x supplied by the caller; the quadrature hot
    /// loops derive node logs from a per-cell anchor instead of a full `ln`.
    pub(crate) fn eval_with_ln(&self, x: f64, t: Dd) -> Dd {
        let mut acc = Dd::ZERO;
        for c in self.p_coeffs.iter().rev() {
            acc = acc * t + *c;
        }
        acc * x
    }
}

/// First `count` Stieltjes constants (gamma_0 is Euler's constant).
pub fn stieltjes_constants(count: usize) -> Result<Vec<Dd>> {
    if count > MAX_STIELTJES {
        return Err(LabError::Validation(format!(
            "stieltjes_constants supports at most {MAX_STIELTJES} values, got {count}"
        )));
    }
    Ok(GAMMA_DD[..count].to_vec())
}

fn factorial_dd(n: usize) -> Dd {
    let mut f: i128 = 1;
    for i in 2..=n as i128 {
        f *= i;
    }
    Dd::from_i128(f)
}

/// Laurent coefficients of zeta^k(s) about s = 1 through (s-1)^order.
///
/// zeta(s) = u(w)/w with w = s-1 and u(w) = 1 + sum_{n>=0} a_n w^{n+1},
/// a_n = (-1)^n gamma_n / n!; the power is a k-fold truncated series product.
pub fn zeta_laurent_pow(k: u32, order: i32) -> Result<LaurentSeries> {
    if k == 0 || k > MAX_POLY_K {
        return Err(LabError::Validation(format!(
            "zeta_laurent_pow requires 1 <= k <= {MAX_POLY_K}, got {k}"
        )));
    }
    if order > 12 || order < -(k as i32) {
        return Err(LabError::Validation(format!(
            "zeta_laurent_pow truncation order must lie in [-k, 12], got {order}"
        )));
    }
    let n_terms = (order + k as i32) as usize; // top power of w in u^k
    let mut u = vec![Dd::ZERO; n_terms + 1];
    u[0] = Dd::ONE;
    for j in 1..=n_terms {
        let n = j - 1;
        let a = GAMMA_DD[n] / factorial_dd(n);
        u[j] = if n % 2 == 0 { a } else { -a };
    }
    let mut uk = vec![Dd::ZERO; n_terms + 1];
    uk[0] = Dd::ONE;
    for _ in 0..k {
        let mut next = vec![Dd::ZERO; n_terms + 1];
        for (i, &ci) in uk.iter().enumerate() {
            if ci.hi == 0.0 && ci.lo == 0.0 {
                continue;
            }
            for (j, &uj) in u.iter().enumerate().take(n_terms + 1 - i) {
                next[i + j] = next[i + j] + ci * uj;
            }
        }
        uk = next;
    }
    Ok(LaurentSeries { pole_order: k, coeffs: uk })
}

/// Residue main-term polynomial for d_k partial sums, 2 <= k <= 8.
///
/// In Res_{s=1} zeta^k(s) x^s / s, expand x^s = x * sum t^m w^m / m! and
/// 1/s = sum (-1)^r w^r; the w^(-1) coefficient collects
/// p_m = (1/m!) * sum_{r=0}^{k-1-m} (-1)^r b_{-1-m-r}.
pub fn mainterm_poly(k: u32) -> Result<MainTermPoly> {
    if !(2..=MAX_POLY_K).contains(&k) {
        return Err(LabError::Validation(format!(
            "mainterm_poly requires 2 <= k <= {MAX_POLY_K}, got {k}"
        )));
    }
    let series = zeta_laurent_pow(k, 0)?;
    let kk = k as usize;
    let mut p_coeffs = Vec::with_capacity(kk);
    for m in 0..kk {
        let mut s = Dd::ZERO;
        for r in 0..(kk - m) {
            let b = series.coeff(-1 - (m as i32) - (r as i32));
            s = if r % 2 == 0 { s + b } else { s - b };
        }
        p_coeffs.push(s / factorial_dd(m));
    }
    let mut q_coeffs = Vec::with_capacity(kk);
    for m in 0..kk {
        let q = if m + 1 < kk {
            p_coeffs[m] + p_coeffs[m + 1] * ((m + 1) as f64)
        } else {
            p_coeffs[m]
        };
        q_coeffs.push(q);
    }
    Ok(MainTermPoly { k, p_coeffs, q_coeffs })
}

/// Convenience wrapper: x * P_{k-1}(log x) for a single point.
pub fn eval_main(k: u32, x: f64) -> Result<Dd> {
    mainterm_poly(k)?.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Euler-Maclaurin oracle for gamma_n: partial sums of log^n(m)/m with
    /// tail, midpoint, and 2j-1 derivative corrections. With n_points = 128
    /// and j_terms = 12 the truncation error sits near 1e-44; the visible
    /// error (~1e-22) is double-double roundoff in the cancellation between
    /// the partial sum and log^{n+1}(N)/(n+1).
    fn em_stieltjes(n_max: usize, n_points: usize, j_terms: usize) -> Vec<Dd> {
        const B_NUM: [i128; 12] = [
            1, -1, 1, -1, 5, -691, 7, -3617, 43867, -174611, 854513, -236364091,
        ];
        const B_DEN: [i128; 12] = [6, 30, 42, 30, 66, 2730, 6, 510, 798, 330, 138, 2730];
        assert!(j_terms <= 12);
        let nf = n_points as f64;
        let ln_n = Dd::from_f64(nf).ln();
        let mut sums = vec![Dd::ZERO; n_max + 1];
        for m in 1..=n_points {
            let lnm = Dd::from_f64(m as f64).ln();
            let mut p = Dd::ONE / (m as f64);
            sums[0] = sums[0] + p;
            for s in sums.iter_mut().skip(1) {
                p = p * lnm;
                *s = *s + p;
            }
        }
        let mut ln_pows = vec![Dd::ONE; n_max + 2];
        for i in 1..ln_pows.len() {
            ln_pows[i] = ln_pows[i - 1] * ln_n;
        }
        (0..=n_max)
            .map(|n| {
                let mut g = sums[n];
                g = g - ln_pows[n + 1] / ((n + 1) as f64);
                g = g - ln_pows[n] / (2.0 * nf);
                // f(x) = ln^n x / x; the level-d derivative is
                // x^(-(d+1)) * sum_j c_j ln^j x, advanced by the recurrence
                // c'_j = (j+1) c_{j+1} - (d+1) c_j
                let mut c = vec![Dd::ZERO; n + 1];
                c[n] = Dd::ONE;
                let mut d = 0usize;
                let mut fact = Dd::ONE;
                let mut n_pow = Dd::ONE;
                for j in 1..=j_terms {
                    while d < 2 * j - 1 {
                        let mut nc = vec![Dd::ZERO; n + 1];
                        for jj in 0..=n {
                            let mut v = c[jj] * (-((d + 1) as f64));
                            if jj + 1 <= n {
                                v = v + c[jj + 1] * ((jj + 1) as f64);
                            }
                            nc[jj] = v;
                        }
                        c = nc;
                        d += 1;
                    }
                    fact = fact * ((2 * j - 1) as f64) * ((2 * j) as f64);
                    n_pow = n_pow * nf * nf; // N^(2j)
                    let mut fd = Dd::ZERO;
                    for jj in 0..=n {
                        fd = fd + c[jj] * ln_pows[jj];
                    }
                    fd = fd / n_pow;
                    let b = Dd::from_i128(B_NUM[j - 1]) / Dd::from_i128(B_DEN[j - 1]);
                    g = g - b / fact * fd;
                }
                g
            })
            .collect()
    }

    #[test]
    fn stieltjes_table_matches_euler_maclaurin_oracle() {
        let oracle = em_stieltjes(15, 128, 12);
        let table = stieltjes_constants(16).unwrap();
        for (n, (o, t)) in oracle.iter().zip(&table).enumerate() {
            let err = (*o - *t).abs().to_f64();
            assert!(err < 1e-20, "gamma_{n}: oracle {o:?} vs table {t:?}, err {err:e}");
        }
    }

    #[test]
    fn stieltjes_count_guards() {
        assert_eq!(stieltjes_constants(1).unwrap().len(), 1);
        assert!((stieltjes_constants(1).unwrap()[0].to_f64() - 0.5772156649015329).abs() < 1e-16);
        assert_eq!(stieltjes_constants(16).unwrap().len(), 16);
        assert!(matches!(
            stieltjes_constants(17),
            Err(LabError::Validation(_))
        ));
    }

    #[test]
    fn laurent_of_zeta_itself() {
        let s = zeta_laurent_pow(1, 0).unwrap();
        assert_eq!(s.pole_order, 1);
        assert_eq!(s.coeffs.len(), 2);
        assert_eq!(s.coeff(-1), Dd::ONE);
        let g = GAMMA_DD[0];
        assert_eq!(s.coeff(0), g);
        assert_eq!(s.coeff(5), Dd::ZERO);
        assert_eq!(s.max_exponent(), 0);
    }

    #[test]
    fn laurent_square_doubles_gamma() {
        let s = zeta_laurent_pow(2, 1).unwrap();
        assert_eq!(s.pole_order, 2);
        assert_eq!(s.coeff(-2), Dd::ONE);
        let two_gamma = GAMMA_DD[0] + GAMMA_DD[0];
        assert_eq!(s.coeff(-1), two_gamma);
    }

    #[test]
    fn laurent_caps() {
        assert!(zeta_laurent_pow(0, 0).is_err());
        assert!(zeta_laurent_pow(9, 0).is_err());
        assert!(zeta_laurent_pow(2, 13).is_err());
        assert!(zeta_laurent_pow(2, -3).is_err());
        // the deepest supported truncation still has gamma table to draw on
        let s = zeta_laurent_pow(8, 12).unwrap();
        assert_eq!(s.coeffs.len(), 21);
    }

    #[test]
    fn k2_poly_is_t_plus_two_gamma_minus_one() {
        let p = mainterm_poly(2).unwrap();
        let expect0 = GAMMA_DD[0] * 2.0 - 1.0;
        assert!((p.p_coeffs[0] - expect0).abs().to_f64() < 1e-30);
        assert!((p.p_coeffs[1] - Dd::ONE).abs().to_f64() < 1e-30);
        // Q_1(t) = P_1(t) + 1
        assert!((p.q_coeffs[0] - (expect0 + 1.0)).abs().to_f64() < 1e-30);
    }

    #[test]
    fn k3_poly_matches_independent_residue_computation() {
        // frozen from a 60-digit symbolic residue evaluation
        let want = [
            Dd::new(0.48633431316958764, -2.4073951269297895e-17),
            Dd::new(0.7316469947045986, -1.4828745457291934e-17),
            Dd::new(0.5, 0.0),
        ];
        let p = mainterm_poly(3).unwrap();
        for (m, w) in want.iter().enumerate() {
            let err = (p.p_coeffs[m] - *w).abs().to_f64();
            assert!(err < 1e-24, "t^{m}: {:?} vs {w:?}", p.p_coeffs[m]);
        }
    }

    #[test]
    fn k8_poly_matches_independent_residue_computation() {
        let want = [
            Dd::new(0.2803644700816299, -4.163957162818627e-18),
            Dd::new(1.038733151123142, -1.7256778089581097e-17),
            Dd::new(1.3387748248343811, 8.04323662989022e-19),
            Dd::new(0.8407649502050812, 1.6828054780652196e-17),
            Dd::new(0.28295121630209696, 9.275780371340055e-18),
            Dd::new(0.05244819426061061, 1.94230974721584e-18),
            Dd::new(0.005024618498905921, -3.564657418282042e-20),
            Dd::new(0.0001984126984126984, 1.7209558293420705e-22),
        ];
        let p = mainterm_poly(8).unwrap();
        for (m, w) in want.iter().enumerate() {
            let err = (p.p_coeffs[m] - *w).abs().to_f64();
            assert!(err < 1e-24, "t^{m}: {:?} vs {w:?}", p.p_coeffs[m]);
        }
    }

    #[test]
    fn leading_coefficient_is_inverse_factorial() {
        for k in 2..=8u32 {
            let p = mainterm_poly(k).unwrap();
            let lead = p.p_coeffs[k as usize - 1];
            let want = Dd::ONE / factorial_dd(k as usize - 1);
            let rel = ((lead - want).abs() / want).to_f64();
            assert!(rel < 1e-25, "k={k} lead={lead:?}");
        }
    }

    #[test]
    fn q_equals_p_plus_formal_derivative() {
        for k in 2..=8u32 {
            let p = mainterm_poly(k).unwrap();
            for m in 0..k as usize {
                let deriv = if m + 1 < k as usize {
                    p.p_coeffs[m + 1] * ((m + 1) as f64)
                } else {
                    Dd::ZERO
                };
                let want = p.p_coeffs[m] + deriv;
                assert_eq!(p.q_coeffs[m].hi, want.hi, "k={k} m={m}");
                assert_eq!(p.q_coeffs[m].lo, want.lo, "k={k} m={m}");
            }
        }
    }

    #[test]
    fn eval_at_e_gives_two_gamma_e() {
        let v = eval_main(2, std::f64::consts::E).unwrap();
        // 2*gamma*e, 30-digit reference; slack covers e's f64 representation
        assert!((v.to_f64() - 3.138_069_706_007_484_570_159_815_7).abs() < 1e-15);
    }

    #[test]
    fn eval_domain_guards() {
        assert!(matches!(eval_main(2, 1.0), Err(LabError::Validation(_))));
        assert!(matches!(eval_main(2, 0.3), Err(LabError::Validation(_))));
        assert!(matches!(eval_main(2, 2.0e12), Err(LabError::Validation(_))));
        assert!(eval_main(2, 1.0e12).is_ok());
        assert!(matches!(eval_main(1, 10.0), Err(LabError::Validation(_))));
        assert!(matches!(eval_main(9, 10.0), Err(LabError::Validation(_))));
    }

    #[test]
    fn leading_term_dominates_as_x_grows() {
        let p = mainterm_poly(3).unwrap();
        let mut last = f64::INFINITY;
        for x in [1e4f64, 1e6, 1e8, 1e10] {
            let lead = x * (x.ln() * x.ln()) / 2.0;
            let ratio = p.eval(x).unwrap().to_f64() / lead;
            let gap = (ratio - 1.0).abs();
            assert!(gap < last, "x={x} gap={gap}");
            last = gap;
        }
        assert!(last < 0.07);
    }
}
