//! Accuracy and fairness: Monte Carlo estimators and closed forms.

use serde::Serialize;

use crate::dist::DistProfile;
use crate::error::{Error, Result};
use crate::mech::{compute_priors, Mechanism};
use crate::numeric::{bisect, Moments};
use crate::sim::{argmax, simulate, Accumulator};

pub const DEFAULT_SAMPLES: usize = 50_000;
pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Everything one simulation pass measures.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub accuracy: MetricEstimate,
    pub fairness: MetricEstimate,
    /// Mean and standard error of each platform's credit.
    pub credit: Vec<(f64, f64)>,
    /// Mean and standard error of the total credit handed out.
    pub total_credit: (f64, f64),
    pub priors: Vec<f64>,
    /// Draws whose true last click was tied (broken toward the lower index).
    pub argmax_ties: u64,
}

struct EvalAcc {
    correct: Moments,
    credit: Vec<Moments>,
    total: Moments,
    ties: u64,
}

impl Accumulator for EvalAcc {
    fn merge(&mut self, other: Self) {
        self.correct.merge(&other.correct);
        self.credit.merge(other.credit);
        self.total.merge(&other.total);
        self.ties += other.ties;
    }
}

/// Simulate `mech` on reports `t + delays` and measure accuracy, fairness and
/// per-platform credit. `priors` are the fairness denominators.
pub fn evaluate(
    mech: &dyn Mechanism,
    profile: &DistProfile,
    priors: &[f64],
    delays: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Evaluation> {
    let n = profile.n();
    if delays.len() != n || priors.len() != n {
        return Err(Error::InvalidArgument("delays and priors need one entry per platform".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let acc = simulate(
        profile,
        n_samples,
        seed,
        || EvalAcc {
            correct: Moments::new(),
            credit: vec![Moments::new(); n],
            total: Moments::new(),
            ties: 0,
        },
        |acc, t, rng| {
            let mut r = [0.0; 64];
            let mut x = [0.0; 64];
            for k in 0..n {
                r[k] = t[k] + delays[k];
            }
            mech.allocate_into(&r[..n], rng, &mut x[..n]);
            let (last, tie) = argmax(t);
            acc.ties += tie as u64;
            acc.correct.push(x[last]);
            let mut sum = 0.0;
            for k in 0..n {
                acc.credit[k].push(x[k]);
                sum += x[k];
            }
            acc.total.push(sum);
        },
    );
    let credit: Vec<(f64, f64)> = acc.credit.iter().map(|m| (m.mean(), m.stderr())).collect();
    let (fair_value, fair_se) = fairness_from(&credit, priors)?;
    Ok(Evaluation {
        accuracy: MetricEstimate {
            value: acc.correct.mean(),
            stderr: acc.correct.stderr(),
            n_samples,
            seed,
        },
        fairness: MetricEstimate { value: fair_value, stderr: fair_se, n_samples, seed },
        credit,
        total_credit: (acc.total.mean(), acc.total.stderr()),
        priors: priors.to_vec(),
        argmax_ties: acc.ties,
    })
}

/// `min_{i: beta_i > 0} E[x_i] / beta_i` and the standard error of the
/// minimizing ratio. Not clamped to `[0, 1]`.
fn fairness_from(credit: &[(f64, f64)], priors: &[f64]) -> Result<(f64, f64)> {
    credit
        .iter()
        .zip(priors)
        .filter(|(_, &b)| b > 0.0)
        .map(|(&(m, se), &b)| (m / b, se / b))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::InvalidProfile("no platform has a positive prior".into()))
}

/// `E[Σ x_i · 1{i is the true last click}]` under reports `t + delays`.
pub fn accuracy_mc(
    mech: &dyn Mechanism,
    profile: &DistProfile,
    delays: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<MetricEstimate> {
    let priors = vec![1.0 / profile.n() as f64; profile.n()];
    Ok(evaluate(mech, profile, &priors, delays, n_samples, seed)?.accuracy)
}

/// Fairness score with quadrature priors as denominators.
pub fn fairness_mc(
    mech: &dyn Mechanism,
    profile: &DistProfile,
    delays: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<MetricEstimate> {
    let priors = compute_priors(profile)?;
    Ok(evaluate(mech, profile, &priors, delays, n_samples, seed)?.fairness)
}

/// PVM accuracy on `n` identical platforms: `1 - (1 - 1/n)(1/n)^{1/(n-1)}`.
pub fn pvm_homog_accuracy(n: usize) -> f64 {
    assert!(n >= 2, "need n >= 2");
    let nf = n as f64;
    1.0 - (1.0 - 1.0 / nf) * (1.0 / nf).powf(1.0 / (nf - 1.0))
}

/// Real root of `2 - 3g - 2g^3 = 0` from Cardano's formula.
pub fn gamma_closed() -> f64 {
    let s6 = 6f64.sqrt();
    ((2.0 + s6) / 4.0).cbrt() + ((2.0 - s6) / 4.0).cbrt()
}

/// Same root by bisection; used to cross-check [`gamma_closed`].
pub fn gamma_root() -> Result<f64> {
    bisect(|g| 2.0 - 3.0 * g - 2.0 * g * g * g, 0.0, 1.0, 1e-15)
}

/// Exact worst-case LCM accuracy for two identical platforms, `(2 - √2)^2`.
pub fn lcm_n2_tight() -> f64 {
    (2.0 - 2f64.sqrt()).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LcmBounds {
    pub lower: f64,
    pub upper: f64,
    /// The exact worst case where it is known (`n = 2`).
    pub tight: Option<f64>,
}

/// Bounds on worst-case LCM accuracy for `n` identical platforms.
pub fn lcm_homog_bounds(n: usize) -> LcmBounds {
    assert!(n >= 2, "need n >= 2");
    let nf = n as f64;
    let g = gamma_closed();
    LcmBounds {
        lower: (1.0 - (1.0 / nf).powf(1.0 / (nf - 1.0))).powi(n as i32),
        upper: (1.0 - g * g).powi(n as i32),
        tight: (n == 2).then(lcm_n2_tight),
    }
}

/// `(19/27)^{ceil(log2 n)}`.
pub fn tree_accuracy_lower(n: usize) -> f64 {
    assert!(n >= 2, "need n >= 2");
    let depth = usize::BITS - (n - 1).leading_zeros();
    (19.0f64 / 27.0).powi(depth as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioRow {
    pub n: usize,
    pub pvm: f64,
    /// LCM upper bound (the exact value for `n = 2`).
    pub lcm: f64,
    pub ratio: f64,
}

/// PVM versus LCM worst-case accuracy for `n = 2..=5`.
pub fn ratio_table() -> Vec<RatioRow> {
    (2..=5)
        .map(|n| {
            let pvm = pvm_homog_accuracy(n);
            let b = lcm_homog_bounds(n);
            let lcm = b.tight.unwrap_or(b.upper);
            RatioRow { n, pvm, lcm, ratio: pvm / lcm }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessRow {
    pub scenario: String,
    /// Open lower end of the worst-case interval (equal to `upper` when exact).
    pub lower: f64,
    pub upper: f64,
}

/// Worst-case LCM fairness at equilibrium.
pub fn lcm_fairness_table(max_n: usize) -> Vec<FairnessRow> {
    let s = 2f64.sqrt();
    let mut rows = vec![FairnessRow {
        scenario: "homogeneous n=2".into(),
        lower: 1.0 - (s - 1.0).powi(2),
        upper: 1.0 - (s - 1.0).powi(2),
    }];
    let g = gamma_closed();
    for n in 3..=max_n {
        let nf = n as f64;
        rows.push(FairnessRow {
            scenario: format!("homogeneous n={n}"),
            lower: 1.0 - (1.0 / nf).powf(nf / (nf - 1.0)),
            upper: 1.0 - g.powi(2 * n as i32),
        });
    }
    rows.push(FairnessRow { scenario: "heterogeneous".into(), lower: 0.0, upper: 0.0 });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_forms_agree() {
        assert!((gamma_closed() - gamma_root().unwrap()).abs() < 1e-12);
        assert!((gamma_closed() - 0.553_573_782_2).abs() < 1e-9);
    }

    #[test]
    fn depth_exponent() {
        let c = 19.0f64 / 27.0;
        assert!((tree_accuracy_lower(2) - c).abs() < 1e-15);
        assert!((tree_accuracy_lower(3) - c * c).abs() < 1e-15);
        assert!((tree_accuracy_lower(4) - c * c).abs() < 1e-15);
        assert!((tree_accuracy_lower(5) - c * c * c).abs() < 1e-15);
        assert!((tree_accuracy_lower(8) - c * c * c).abs() < 1e-15);
    }

    #[test]
    fn fairness_ignores_zero_priors() {
        let (v, _) = fairness_from(&[(0.3, 0.01), (0.005, 0.001)], &[0.0, 1.0]).unwrap();
        assert_eq!(v, 0.005);
        assert!(fairness_from(&[(0.3, 0.01)], &[0.0]).is_err());
    }
}
