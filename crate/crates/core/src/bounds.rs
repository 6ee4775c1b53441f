//! Fano lower bound, the minimax rate report, and analytic local entropies
//! for monotone functions on a lattice (unit hidden constants).

use alloc::format;
use alloc::string::String;

use crate::error::{invalid, Result};
use crate::expfam::FamilyConstants;
use crate::geometry::{epsilon_star, EntropyOracle, EntropySource};

/// Outcome of [`fano_lower_bound`]: both sides of the condition
/// `log N^loc(ε, c) > 4 max(ε² C(M), log 2)` and the bound when it holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanoBound {
    pub epsilon: f64,
    pub log_nloc: f64,
    pub threshold: f64,
    /// `ε²/(8c²)` when the condition holds.
    pub bound: Option<f64>,
}

impl FanoBound {
    pub fn holds(&self) -> bool {
        self.bound.is_some()
    }
}

/// `ε²/(8c²)` if `log N^loc(ε, c) > 4 max(ε² C(M), log 2)`.
pub fn fano_lower_bound(epsilon: f64, c: f64, c_upper: f64, log_nloc: f64) -> FanoBound {
    let threshold = 4.0 * (epsilon * epsilon * c_upper).max(core::f64::consts::LN_2);
    let bound = (log_nloc > threshold).then(|| epsilon * epsilon / (8.0 * c * c));
    FanoBound {
        epsilon,
        log_nloc,
        threshold,
        bound,
    }
}

/// `q = 1`: `√(2nM)/ε` for `ε ≥ 2M/√n`, else `n`.
pub fn monotone_entropy_q1(n: usize, m: f64, eps: f64) -> f64 {
    let nf = n as f64;
    if eps >= 2.0 * m / libm::sqrt(nf) {
        libm::sqrt(2.0 * nf * m) / eps
    } else {
        nf
    }
}

fn lattice_ratio(n: usize, m: f64, eps: f64) -> f64 {
    eps / (2.0 * libm::sqrt(2.0 * n as f64 * m))
}

/// `q = 2` (an upper bound only): `x^{−2} log²(1/x)` with
/// `x = ε/(2√(2nM))`, taken as `0` once `x ≥ 1`.
pub fn monotone_entropy_q2(n: usize, m: f64, eps: f64) -> f64 {
    let x = lattice_ratio(n, m, eps);
    if x >= 1.0 {
        return 0.0;
    }
    let l = libm::log(1.0 / x);
    l * l / (x * x)
}

/// `q ≥ 3`: `x^{−2(q−1)}` with `x = ε/(2√(2nM))`.
pub fn monotone_entropy_qhigh(q: usize, n: usize, m: f64, eps: f64) -> f64 {
    libm::pow(lattice_ratio(n, m, eps), -2.0 * (q as f64 - 1.0))
}

/// The analytic local entropy for lattice dimension `q`.
pub fn monotone_entropy(q: usize, n: usize, m: f64, eps: f64) -> f64 {
    match q {
        1 => monotone_entropy_q1(n, m, eps),
        2 => monotone_entropy_q2(n, m, eps),
        _ => monotone_entropy_qhigh(q, n, m, eps),
    }
}

/// Predicted total squared risk scale for the monotone class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneRate {
    pub value: f64,
    /// Only an upper bound is known (`q = 2`).
    pub upper_bound_only: bool,
    /// Exponent of `n` (ignoring the `log n` factor for `q = 2`).
    pub exponent: f64,
}

/// `n^{1/3}` for `q = 1`, `√n log n` for `q = 2`, `n^{1−1/q}` for `q ≥ 3`.
pub fn monotone_rate(q: usize, n: f64) -> Result<MonotoneRate> {
    if q == 0 || !(n > 0.0) {
        return Err(invalid("q and n must be positive"));
    }
    Ok(match q {
        1 => MonotoneRate {
            value: libm::cbrt(n),
            upper_bound_only: false,
            exponent: 1.0 / 3.0,
        },
        2 => MonotoneRate {
            value: libm::sqrt(n) * libm::log(n),
            upper_bound_only: true,
            exponent: 0.5,
        },
        _ => {
            let e = 1.0 - 1.0 / q as f64;
            MonotoneRate {
                value: libm::pow(n, e),
                upper_bound_only: false,
                exponent: e,
            }
        }
    })
}

/// `ε*`, `d`, `ε*² ∧ d²` and the Fano bound at `δ* = ε* min(√(κ/(8C)), 1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub eps_star: f64,
    pub d: f64,
    pub minimax_rate: f64,
    pub lower_bound: Option<FanoBound>,
    pub entropy_source: EntropySource,
}

impl RateReport {
    pub const CSV_HEADER: &'static str =
        "eps_star,d,minimax_rate,lower_bound,fano_eps,fano_log_nloc,fano_threshold,entropy_source";

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = format!(
            "eps_star={}\nd={}\nminimax_rate={}\n",
            self.eps_star, self.d, self.minimax_rate
        );
        match &self.lower_bound {
            Some(f) => {
                s += &format!(
                    "lower_bound={}\nfano_eps={}\nfano_log_nloc={}\nfano_threshold={}\nfano_condition={}\n",
                    f.bound.map_or(String::from("none"), |b| format!("{b}")),
                    f.epsilon,
                    f.log_nloc,
                    f.threshold,
                    if f.holds() { "met" } else { "not-met" }
                );
            }
            None => s += "lower_bound=none\n",
        }
        s += &format!("entropy_source={}\n", self.entropy_source.name());
        s
    }

    pub fn to_csv_row(&self) -> String {
        let (lb, e, l, t) = match &self.lower_bound {
            Some(f) => (
                f.bound.map_or(String::new(), |b| format!("{b}")),
                format!("{}", f.epsilon),
                format!("{}", f.log_nloc),
                format!("{}", f.threshold),
            ),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        format!(
            "{},{},{},{lb},{e},{l},{t},{}",
            self.eps_star,
            self.d,
            self.minimax_rate,
            self.entropy_source.name()
        )
    }
}

/// Solves for `ε*` with the oracle at constant `c`, caps the rate at `d²`
/// and evaluates the Fano bound at `δ*`.
pub fn minimax_rate(
    d: f64,
    constants: &FamilyConstants,
    entropy: &dyn EntropyOracle,
    c: f64,
    tol: f64,
) -> Result<RateReport> {
    let eps_star = epsilon_star(&|e| entropy.log_nloc(e, c), constants.kappa, d, tol)?;
    let lower_bound = (eps_star > 0.0).then(|| {
        let delta = eps_star * libm::sqrt(constants.kappa / (8.0 * constants.c_upper)).min(0.5);
        fano_lower_bound(delta, c, constants.c_upper, entropy.log_nloc(delta, c))
    });
    Ok(RateReport {
        eps_star,
        d,
        minimax_rate: (eps_star * eps_star).min(d * d),
        lower_bound,
        entropy_source: entropy.source(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FnEntropy;

    fn consts(kappa: f64) -> FamilyConstants {
        FamilyConstants {
            c_lower: 0.5,
            c_upper: 0.5,
            c_prime: 1.0,
            kappa,
        }
    }

    #[test]
    fn fano_examples() {
        let l = 4.0 * 0.25f64.max(core::f64::consts::LN_2) + 0.01;
        let f = fano_lower_bound(0.5, 4.0, 1.0, l);
        assert!((f.bound.unwrap() - 0.25 / 128.0).abs() < 1e-15);
        assert!(fano_lower_bound(0.5, 4.0, 1.0, 2.0).bound.is_none());
        let f = fano_lower_bound(0.5, 4.0, 0.0, 3.0);
        assert!((f.threshold - 4.0 * core::f64::consts::LN_2).abs() < 1e-15);
        assert!(f.holds());
    }

    #[test]
    fn entropy_formulas() {
        assert!((monotone_entropy_q1(64, 1.0, 1.0) - libm::sqrt(128.0)).abs() < 1e-12);
        assert_eq!(monotone_entropy_q1(64, 1.0, 0.1), 64.0);
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let v = monotone_entropy_q1(64, 1.0, i as f64);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert_eq!(monotone_entropy_q2(16, 1.0, 1e6), 0.0);
        assert!(monotone_entropy_q2(16, 1.0, 1.0) > monotone_entropy_q2(16, 1.0, 2.0));
        let x: f64 = 1.0 / (2.0 * libm::sqrt(2.0 * 64.0));
        assert!((monotone_entropy_qhigh(3, 64, 1.0, 1.0) - libm::pow(x, -4.0)).abs() < 1e-9);
    }

    #[test]
    fn rate_examples() {
        assert!((monotone_rate(1, 1000.0).unwrap().value - 10.0).abs() < 1e-12);
        assert!((monotone_rate(3, 64.0).unwrap().value - 16.0).abs() < 1e-12);
        let r = monotone_rate(2, core::f64::consts::E * core::f64::consts::E).unwrap();
        assert!((r.value - 2.0 * core::f64::consts::E).abs() < 1e-12);
        assert!(r.upper_bound_only);
    }

    #[test]
    fn minimax_rate_examples() {
        let e = FnEntropy::analytic(|eps| 8.0 / eps);
        let r = minimax_rate(10.0, &consts(1.0), &e, 16.0, 1e-10).unwrap();
        assert!((r.eps_star - 2.0).abs() < 1e-8);
        assert!((r.minimax_rate - 4.0).abs() < 1e-7);
        let r = minimax_rate(1.0, &consts(1.0), &e, 16.0, 1e-10).unwrap();
        assert_eq!(r.minimax_rate, 1.0);
        let zero = FnEntropy::analytic(|_| 0.0);
        let r = minimax_rate(0.0, &consts(1.0), &zero, 16.0, 1e-10).unwrap();
        assert_eq!((r.eps_star, r.minimax_rate), (0.0, 0.0));
        assert!(r.lower_bound.is_none());
        assert!(r.to_key_value().contains("entropy_source=analytic"));
        assert_eq!(
            r.to_csv_row().split(',').count(),
            RateReport::CSV_HEADER.split(',').count()
        );
    }
}
