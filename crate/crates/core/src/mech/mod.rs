//! Allocation rules and their feasibility / incentive checks.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod check;
mod pvm;
mod tree;

pub use check::{
    check_dsic_at, check_dsic_monotonicity, check_feasibility, expected_credit, Counterexample,
    DsicGrid, DsicOutcome, DsicViolation, FeasibilityReport,
};
pub use pvm::{compute_beta, compute_priors, compute_threshold, pvm_allocate, Pvm, PvmTable, Threshold};
pub use tree::{tree_allocate, TreeLayout, TreeMechanism};

/// Credits handed out for one report profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub credits: Vec<f64>,
    /// Seed of the generator that broke a tie, if one had to be broken.
    pub tie_break_seed: Option<u64>,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.credits.iter().sum()
    }
}

/// An attribution rule `r -> x(r)`.
pub trait Mechanism: Send + Sync {
    fn name(&self) -> &str;

    /// Write credits for `reports` into `credits` (same length). Returns the
    /// tie-break seed when randomness was consumed.
    fn allocate_into(&self, reports: &[f64], rng: &mut dyn RngCore, credits: &mut [f64]) -> Option<u64>;

    fn allocate(&self, reports: &[f64], rng: &mut dyn RngCore) -> Allocation {
        let mut credits = vec![0.0; reports.len()];
        let tie_break_seed = self.allocate_into(reports, rng, &mut credits);
        Allocation { credits, tie_break_seed }
    }

    /// Whether allocations may depend on the rng.
    fn is_randomized(&self) -> bool {
        false
    }
}

/// Last-click: the latest eligible report takes everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lcm;

/// Full credit to the largest report among `r_j <= 0`; exact ties are broken
/// uniformly with a fresh seed drawn from `rng` and recorded.
pub fn lcm_allocate(reports: &[f64], rng: &mut dyn RngCore) -> Allocation {
    Lcm.allocate(reports, rng)
}

impl Mechanism for Lcm {
    fn name(&self) -> &str {
        "LCM"
    }

    fn allocate_into(&self, reports: &[f64], rng: &mut dyn RngCore, credits: &mut [f64]) -> Option<u64> {
        credits.iter_mut().for_each(|c| *c = 0.0);
        let mut best = f64::NEG_INFINITY;
        let mut winner = usize::MAX;
        let mut ties = 0usize;
        for (j, &r) in reports.iter().enumerate() {
            if r > 0.0 {
                continue;
            }
            if r > best {
                best = r;
                winner = j;
                ties = 1;
            } else if r == best {
                ties += 1;
            }
        }
        if winner == usize::MAX {
            return None;
        }
        if ties == 1 {
            credits[winner] = 1.0;
            return None;
        }
        let seed = rng.next_u64();
        let pick = ChaCha8Rng::seed_from_u64(seed).random_range(0..ties);
        let chosen = reports
            .iter()
            .enumerate()
            .filter(|&(_, &r)| r == best)
            .nth(pick)
            .map(|(j, _)| j)
            .unwrap();
        credits[chosen] = 1.0;
        Some(seed)
    }

    fn is_randomized(&self) -> bool {
        true
    }
}

/// Eligible set `{ j : r_j <= 0 }` as a bitmask.
pub(crate) fn eligible_mask(reports: &[f64]) -> u64 {
    reports
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r <= 0.0)
        .fold(0u64, |m, (j, _)| m | (1 << j))
}
