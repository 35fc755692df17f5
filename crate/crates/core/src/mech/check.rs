use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mechanism;
use crate::dist::DistProfile;
use crate::error::{Error, Result};
use crate::numeric::{linspace, Moments};
use crate::sim::{simulate, Accumulator};

/// A report profile on which a mechanism broke a pointwise constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub reports: Vec<f64>,
    pub credits: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub n_samples: usize,
    pub seed: u64,
    pub mean_total: f64,
    pub stderr_total: f64,
    /// Expected total credit within `1 + 3·stderr`.
    pub budget_ok: bool,
    pub counterexample: Option<Counterexample>,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.budget_ok && self.counterexample.is_none()
    }
}

struct FeasAcc {
    total: Moments,
    bad: Option<Counterexample>,
}

impl Accumulator for FeasAcc {
    fn merge(&mut self, other: Self) {
        self.total.merge(&other.total);
        if self.bad.is_none() {
            self.bad = other.bad;
        }
    }
}

const CREDIT_EPS: f64 = 1e-12;

/// Checks credits in `[0, 1]`, zero credit for late reports, and the budget
/// `E[Σ x_i] <= 1` over `n_samples` draws of `t + delays`.
pub fn check_feasibility(
    mech: &dyn Mechanism,
    profile: &DistProfile,
    delays: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<FeasibilityReport> {
    if n_samples < 10_000 {
        return Err(Error::InvalidArgument("feasibility check needs at least 10^4 samples".into()));
    }
    if delays.len() != profile.n() {
        return Err(Error::InvalidArgument("one delay per platform expected".into()));
    }
    let n = profile.n();
    let acc = simulate(
        profile,
        n_samples,
        seed,
        || FeasAcc { total: Moments::new(), bad: None },
        |acc, t, rng| {
            let r: Vec<f64> = t.iter().zip(delays).map(|(a, b)| a + b).collect();
            let mut x = vec![0.0; n];
            mech.allocate_into(&r, rng, &mut x);
            acc.total.push(x.iter().sum());
            if acc.bad.is_some() {
                return;
            }
            let reason = x.iter().zip(&r).enumerate().find_map(|(i, (&c, &ri))| {
                if !(c >= -CREDIT_EPS && c <= 1.0 + CREDIT_EPS) {
                    Some(format!("credit {c} of platform {i} outside [0, 1]"))
                } else if ri > 0.0 && c != 0.0 {
                    Some(format!("platform {i} paid {c} for a late report"))
                } else {
                    None
                }
            });
            if let Some(reason) = reason {
                acc.bad = Some(Counterexample { reports: r, credits: x, reason });
            }
        },
    );
    let mean_total = acc.total.mean();
    let stderr_total = acc.total.stderr();
    Ok(FeasibilityReport {
        n_samples,
        seed,
        mean_total,
        stderr_total,
        budget_ok: mean_total <= 1.0 + 3.0 * stderr_total + 1e-12,
        counterexample: acc.bad,
    })
}

/// Sampling plan for the monotonicity check.
#[derive(Debug, Clone)]
pub struct DsicGrid {
    /// Number of sampled report profiles.
    pub profiles: usize,
    /// Evenly spaced sweep points for the platform's own report (peer values
    /// are added on top).
    pub sweep_points: usize,
    /// Tie-break seeds averaged for randomized mechanisms.
    pub tie_seeds: usize,
    /// Probability that a peer reports with a large delay.
    pub late_fraction: f64,
    pub seed: u64,
}

impl Default for DsicGrid {
    fn default() -> Self {
        Self { profiles: 1000, sweep_points: 41, tie_seeds: 1000, late_fraction: 0.25, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsicViolation {
    pub platform: usize,
    pub reports_low: Vec<f64>,
    pub reports_high: Vec<f64>,
    pub credit_low: f64,
    pub credit_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DsicOutcome {
    Pass { profiles: usize, checks: usize },
    Violation(DsicViolation),
}

impl DsicOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, DsicOutcome::Pass { .. })
    }
}

/// Credit of platform `i`, averaged over `tie_seeds` tie-break draws when the
/// mechanism actually randomized.
pub fn expected_credit(mech: &dyn Mechanism, reports: &[f64], i: usize, tie_seeds: usize, seed: u64) -> f64 {
    let mut x = vec![0.0; reports.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let used = mech.allocate_into(reports, &mut rng, &mut x);
    if used.is_none() || tie_seeds <= 1 {
        return x[i];
    }
    let mut sum = x[i];
    for k in 1..tie_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        mech.allocate_into(reports, &mut rng, &mut x);
        sum += x[i];
    }
    sum / tie_seeds as f64
}

/// Sweep platform `i`'s report over ascending `sweep` with the other reports
/// fixed; returns the first increase in expected credit.
pub fn check_dsic_at(
    mech: &dyn Mechanism,
    reports: &[f64],
    i: usize,
    sweep: &[f64],
    tie_seeds: usize,
) -> Option<DsicViolation> {
    let slack = if mech.is_randomized() {
        // four binomial standard errors of a tie average, plus rounding
        2.0 / (tie_seeds.max(1) as f64).sqrt() + CREDIT_EPS
    } else {
        CREDIT_EPS
    };
    let mut r = reports.to_vec();
    let mut prev: Option<(Vec<f64>, f64)> = None;
    for (k, &v) in sweep.iter().enumerate() {
        r[i] = v;
        let c = expected_credit(mech, &r, i, tie_seeds, k as u64);
        if let Some((ref low, cl)) = prev {
            if c > cl + slack {
                return Some(DsicViolation {
                    platform: i,
                    reports_low: low.clone(),
                    reports_high: r.clone(),
                    credit_low: cl,
                    credit_high: c,
                });
            }
        }
        prev = Some((r.clone(), c));
    }
    None
}

/// Monotonicity of each platform's credit in its own report over randomly
/// drawn peer profiles.
pub fn check_dsic_monotonicity(mech: &dyn Mechanism, profile: &DistProfile, grid: &DsicGrid) -> DsicOutcome {
    let n = profile.n();
    let width = -profile.support_lo();
    let width = if width > 0.0 { width } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let base_sweep = linspace(-1.05 * width, 0.05 * width, grid.sweep_points.max(2));
    let mut t = vec![0.0; n];
    let mut checks = 0;
    for _ in 0..grid.profiles {
        profile.sample_into(&mut rng, &mut t);
        let reports: Vec<f64> = t
            .iter()
            .map(|&tj| {
                let late = rng.random::<f64>() < grid.late_fraction;
                let d = if late { rng.random::<f64>() * 1.2 * width } else { rng.random::<f64>() * 0.3 * width };
                tj + d
            })
            .collect();
        for i in 0..n {
            let mut sweep = base_sweep.clone();
            for (j, &rj) in reports.iter().enumerate() {
                if j != i {
                    sweep.extend([rj, rj - 1e-9 * width, rj + 1e-9 * width]);
                }
            }
            sweep.push(0.0);
            sweep.sort_by(f64::total_cmp);
            sweep.dedup();
            checks += sweep.len();
            if let Some(v) = check_dsic_at(mech, &reports, i, &sweep, grid.tie_seeds) {
                return DsicOutcome::Violation(v);
            }
        }
    }
    DsicOutcome::Pass { profiles: grid.profiles, checks }
}
