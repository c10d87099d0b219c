//! Gauss-Legendre quadrature rules on [-1, 1].
//!
//! Nodes are Legendre roots found by Newton iteration from the Chebyshev
//! initial guess; the three orders the mean-square integrators accept are
//! computed once and cached. Rules are symmetrized so node i and its mirror
//! carry bitwise-equal weights.

use std::sync::OnceLock;

#[derive(Debug)]
pub struct GlRule {
    pub order: usize,
    /// Ascending nodes in (-1, 1).
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre P_n(x) and its derivative by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn build_rule(n: usize) -> GlRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..60 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // initial guesses descend from +1; store ascending
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GlRule { order: n, nodes, weights }
}

/// The discrete orders the integrators accept.
pub const SUPPORTED_ORDERS: [usize; 3] = [8, 16, 32];

/// Cached rule for order 8, 16 or 32; `None` otherwise.
pub fn rule(order: usize) -> Option<&'static GlRule> {
    static RULES: OnceLock<[GlRule; 3]> = OnceLock::new();
    let rules = RULES.get_or_init(|| [build_rule(8), build_rule(16), build_rule(32)]);
    SUPPORTED_ORDERS
        .iter()
        .position(|&o| o == order)
        .map(|i| &rules[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for order in SUPPORTED_ORDERS {
            let r = rule(order).unwrap();
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "order {order}: sum = {s}");
        }
    }

    #[test]
    fn integrates_monomials_to_machine_precision() {
        for order in SUPPORTED_ORDERS {
            let r = rule(order).unwrap();
            for j in 0..2 * order {
                let got: f64 = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(&x, &w)| w * x.powi(j as i32))
                    .sum();
                let want = if j % 2 == 1 { 0.0 } else { 2.0 / (j as f64 + 1.0) };
                assert!(
                    (got - want).abs() < 1e-13,
                    "order {order}, x^{j}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn order_eight_matches_reference_values() {
        let r = rule(8).unwrap();
        let nodes = [
            -0.960_289_856_497_536_3,
            -0.796_666_477_413_626_7,
            -0.525_532_409_916_329_0,
            -0.183_434_642_495_649_8,
            0.183_434_642_495_649_8,
            0.525_532_409_916_329_0,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_3,
        ];
        let weights = [
            0.101_228_536_290_376_3,
            0.222_381_034_453_374_5,
            0.313_706_645_877_887_3,
            0.362_683_783_378_362_0,
            0.362_683_783_378_362_0,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_5,
            0.101_228_536_290_376_3,
        ];
        for i in 0..8 {
            assert!((r.nodes[i] - nodes[i]).abs() < 1e-13);
            assert!((r.weights[i] - weights[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetric_counterparts_are_bitwise_equal() {
        for order in SUPPORTED_ORDERS {
            let r = rule(order).unwrap();
            for i in 0..order {
                assert_eq!(r.nodes[i].to_bits(), (-r.nodes[order - 1 - i]).to_bits());
                assert_eq!(r.weights[i].to_bits(), r.weights[order - 1 - i].to_bits());
            }
        }
    }

    #[test]
    fn composite_sine_integral() {
        let r = rule(16).unwrap();
        let panels = 8;
        let width = std::f64::consts::PI / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let a = p as f64 * width;
            for (&x, &w) in r.nodes.iter().zip(&r.weights) {
                total += 0.5 * width * w * (a + 0.5 * width * (x + 1.0)).sin();
            }
        }
        assert!((total - 2.0).abs() < 1e-14, "got {total}");
    }

    #[test]
    fn unsupported_order_is_none() {
        assert!(rule(12).is_none());
        assert!(rule(0).is_none());
    }
}
