use std::collections::HashMap;
use std::sync::RwLock;

use rand::RngCore;
use rayon::prelude::*;

use super::{eligible_mask, Allocation, Mechanism};
use crate::dist::{DistProfile, TimeDist};
use crate::error::{Error, Result};
use crate::numeric::{integrate, leftmost_at_least};

/// Profiles up to this size get every threshold solved at build time.
pub const DENSE_LIMIT: usize = 12;

const THRESHOLD_XTOL: f64 = 1e-12;

/// Validation threshold for one `(S, i)` pair.
///
/// Platform `i` is paid when the peers' maximum report is below `alpha`. If
/// the peers' cdf jumps across the target at `alpha`, a peer maximum exactly
/// at `alpha` earns the fraction `accept_at_alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub alpha: f64,
    pub accept_at_alpha: Option<f64>,
}

impl Threshold {
    pub fn credit(&self, peer_max: f64) -> f64 {
        if peer_max < self.alpha {
            1.0
        } else if peer_max == self.alpha {
            self.accept_at_alpha.unwrap_or(1.0)
        } else {
            0.0
        }
    }
}

/// `P(i is the true last click) = ∫ f_i ∏_{j≠i} F_j`.
pub fn compute_beta(profile: &DistProfile, i: usize) -> Result<f64> {
    if i >= profile.n() {
        return Err(Error::InvalidArgument(format!("platform {i} out of range")));
    }
    let me = profile.dist(i);
    let others: Vec<&TimeDist> = (0..profile.n())
        .filter(|&j| j != i)
        .map(|j| profile.dist(j))
        .collect();
    let prod = |t: f64| others.iter().map(|d| d.cdf(t)).product::<f64>();
    let prod_left = |t: f64| others.iter().map(|d| d.cdf_left(t)).product::<f64>();
    let mut breaks = profile.breakpoints();
    breaks.extend(others.iter().flat_map(|d| d.atoms().into_iter().map(|a| a.0)));
    let dense = integrate(|t| me.pdf(t) * prod(t), me.support_lo(), me.support_hi(), &breaks)?;
    // own atoms count only when strictly ahead of everyone else
    let atoms: f64 = me.atoms().iter().map(|&(a, w)| w * prod_left(a)).sum();
    Ok((dense + atoms).clamp(0.0, 1.0))
}

/// All priors, renormalized to sum to one (quadrature error is ~1e-9).
pub fn compute_priors(profile: &DistProfile) -> Result<Vec<f64>> {
    let n = profile.n();
    let raw: Vec<f64> = if profile.is_homogeneous() {
        vec![compute_beta(profile, 0)?; n]
    } else {
        (0..n)
            .into_par_iter()
            .map(|i| compute_beta(profile, i))
            .collect::<Result<_>>()?
    };
    let total: f64 = raw.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidProfile(format!("priors sum to {total}")));
    }
    Ok(raw.into_iter().map(|b| b / total).collect())
}

/// Threshold `alpha` with `∏_{j∈peers} F_j(alpha) = target`, leftmost.
pub(crate) fn solve_threshold(peers: &[&TimeDist], target: f64) -> Threshold {
    let lo = peers.iter().map(|d| d.support_lo()).fold(f64::NEG_INFINITY, f64::max);
    let hi = peers.iter().map(|d| d.support_hi()).fold(f64::NEG_INFINITY, f64::max);
    if target <= 0.0 {
        return Threshold { alpha: lo, accept_at_alpha: None };
    }
    if target >= 1.0 {
        return Threshold { alpha: 0.0, accept_at_alpha: None };
    }
    let g = |t: f64| peers.iter().map(|d| d.cdf(t)).product::<f64>();
    let g_left = |t: f64| peers.iter().map(|d| d.cdf_left(t)).product::<f64>();
    let alpha = leftmost_at_least(g, target, lo, hi, THRESHOLD_XTOL);
    let mut atoms: Vec<f64> = peers.iter().flat_map(|d| d.atoms().into_iter().map(|a| a.0)).collect();
    atoms.sort_by(f64::total_cmp);
    for a in atoms {
        if (a - alpha).abs() > 1e-9 * a.abs().max(1.0) {
            continue;
        }
        let (below, at) = (g_left(a), g(a));
        if below < target && target <= at {
            let p = (target - below) / (at - below);
            let accept = (p < 1.0 - 1e-15).then_some(p);
            return Threshold { alpha: a, accept_at_alpha: accept };
        }
    }
    Threshold { alpha, accept_at_alpha: None }
}

/// `alpha_S^(i)` for eligible set `mask` and platform `i ∈ S` at prior `beta`.
pub fn compute_threshold(profile: &DistProfile, mask: u64, i: usize, beta: f64) -> Result<Threshold> {
    if i >= profile.n() || mask & (1 << i) == 0 {
        return Err(Error::InvalidArgument(format!("platform {i} not in subset {mask:#x}")));
    }
    let peers: Vec<&TimeDist> = (0..profile.n())
        .filter(|&j| j != i && mask & (1 << j) != 0)
        .map(|j| profile.dist(j))
        .collect();
    if peers.is_empty() {
        return Err(Error::InvalidArgument("threshold needs at least one peer".into()));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("prior {beta} outside [0, 1]")));
    }
    Ok(solve_threshold(&peers, beta))
}

enum Store {
    Dense(Vec<Option<Threshold>>),
    Lazy(RwLock<HashMap<(u64, usize), Threshold>>),
}

/// Priors and validation thresholds for one profile.
pub struct PvmTable {
    profile: DistProfile,
    priors: Vec<f64>,
    store: Store,
}

impl std::fmt::Debug for PvmTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PvmTable")
            .field("n", &self.profile.n())
            .field("priors", &self.priors)
            .field("dense", &self.is_dense())
            .finish()
    }
}

impl PvmTable {
    pub fn build(profile: &DistProfile) -> Result<Self> {
        let priors = compute_priors(profile)?;
        Self::with_priors(profile, priors)
    }

    /// Build with caller-supplied priors (must sum to one).
    pub fn with_priors(profile: &DistProfile, priors: Vec<f64>) -> Result<Self> {
        let n = profile.n();
        if priors.len() != n || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument("priors must have length n and sum to 1".into()));
        }
        let store = if n <= DENSE_LIMIT {
            Store::Dense(dense_thresholds(profile, &priors)?)
        } else {
            Store::Lazy(RwLock::new(HashMap::new()))
        };
        Ok(Self { profile: profile.clone(), priors, store })
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn profile(&self) -> &DistProfile {
        &self.profile
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.store, Store::Dense(_))
    }

    pub fn threshold(&self, mask: u64, i: usize) -> Result<Threshold> {
        match &self.store {
            Store::Dense(v) => v
                .get(mask as usize * self.n() + i)
                .copied()
                .flatten()
                .ok_or(Error::MissingThreshold { mask, platform: i }),
            Store::Lazy(cache) => {
                if let Some(t) = cache.read().unwrap().get(&(mask, i)) {
                    return Ok(*t);
                }
                let t = compute_threshold(&self.profile, mask, i, self.priors[i])?;
                cache.write().unwrap().insert((mask, i), t);
                Ok(t)
            }
        }
    }
}

fn dense_thresholds(profile: &DistProfile, priors: &[f64]) -> Result<Vec<Option<Threshold>>> {
    let n = profile.n();
    let masks: Vec<u64> = (0..1u64 << n).filter(|m| m.count_ones() >= 2).collect();
    let mut table = vec![None; (1usize << n) * n];
    if profile.is_homogeneous() {
        // thresholds depend only on |S|
        let by_size: Vec<Threshold> = (2..=n)
            .map(|k| compute_threshold(profile, (1u64 << k) - 1, 0, priors[0]))
            .collect::<Result<_>>()?;
        for m in masks {
            let k = m.count_ones() as usize;
            for i in (0..n).filter(|&i| m & (1 << i) != 0) {
                table[m as usize * n + i] = Some(by_size[k - 2]);
            }
        }
        return Ok(table);
    }
    let solved: Vec<(usize, Threshold)> = masks
        .par_iter()
        .flat_map_iter(|&m| {
            (0..n)
                .filter(move |&i| m & (1 << i) != 0)
                .map(move |i| (m as usize * n + i, compute_threshold(profile, m, i, priors[i])))
        })
        .map(|(k, t)| t.map(|t| (k, t)))
        .collect::<Result<_>>()?;
    for (k, t) in solved {
        table[k] = Some(t);
    }
    Ok(table)
}

/// Peer-validated allocation.
///
/// With two or more eligible reporters, `i` is paid when the largest other
/// eligible report clears `alpha_S^(i)`; a lone eligible reporter receives its
/// prior; late reporters get nothing.
pub fn pvm_allocate(reports: &[f64], table: &PvmTable) -> Result<Allocation> {
    let mut credits = vec![0.0; reports.len()];
    pvm_allocate_into(reports, table, &mut credits)?;
    Ok(Allocation { credits, tie_break_seed: None })
}

fn pvm_allocate_into(reports: &[f64], table: &PvmTable, credits: &mut [f64]) -> Result<()> {
    if reports.len() != table.n() {
        return Err(Error::InvalidArgument(format!(
            "{} reports for a {}-platform table",
            reports.len(),
            table.n()
        )));
    }
    credits.iter_mut().for_each(|c| *c = 0.0);
    let mask = eligible_mask(reports);
    match mask.count_ones() {
        0 => {}
        1 => {
            let i = mask.trailing_zeros() as usize;
            credits[i] = table.priors[i];
        }
        _ => {
            let (mut top, mut top_idx, mut second) = (f64::NEG_INFINITY, usize::MAX, f64::NEG_INFINITY);
            for (j, &r) in reports.iter().enumerate() {
                if r > 0.0 {
                    continue;
                }
                if r > top {
                    second = top;
                    top = r;
                    top_idx = j;
                } else if r > second {
                    second = r;
                }
            }
            for (i, &r) in reports.iter().enumerate() {
                if r > 0.0 {
                    continue;
                }
                let peer_max = if i == top_idx { second } else { top };
                credits[i] = table.threshold(mask, i)?.credit(peer_max);
            }
        }
    }
    Ok(())
}

/// Peer-validated mechanism over a prebuilt [`PvmTable`].
#[derive(Debug)]
pub struct Pvm {
    table: PvmTable,
}

impl Pvm {
    pub fn new(profile: &DistProfile) -> Result<Self> {
        Ok(Self { table: PvmTable::build(profile)? })
    }

    pub fn from_table(table: PvmTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &PvmTable {
        &self.table
    }
}

impl Mechanism for Pvm {
    fn name(&self) -> &str {
        "PVM"
    }

    fn allocate_into(&self, reports: &[f64], _rng: &mut dyn RngCore, credits: &mut [f64]) -> Option<u64> {
        pvm_allocate_into(reports, &self.table, credits).expect("PVM table is complete by construction");
        None
    }
}
