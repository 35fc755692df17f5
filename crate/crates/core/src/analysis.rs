//! Worst-case constructions and the optimal threshold search.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{make_fm_family, make_piecewise_uniform, make_uniform, max_dist, DistProfile, TimeDist};
use crate::equilibrium::{solve_symmetric_ne, verify_lcm_ne_quadrature, EquilibriumResult};
use crate::error::{Error, Result};
use crate::metrics::lcm_n2_tight;
use crate::numeric::{bisect, golden_max, integrate, leftmost_at_least, linspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Accuracy,
    Fairness,
}

#[derive(Debug, Clone)]
pub struct WorstCaseInstance {
    pub name: String,
    pub profile: DistProfile,
    /// Equilibrium delays that passed the deviation certificate.
    pub certified_delays: Option<Vec<f64>>,
    pub target_value: f64,
    pub target_kind: TargetKind,
    /// `F(-tau)` at the symmetric equilibrium (f_M instances).
    pub equilibrium_cdf: Option<f64>,
    /// Closed-form credit of the concentrated platform under truthful play of
    /// the others (collapse instances).
    pub concentrated_credit: Option<f64>,
}

/// Two identical `f_M` platforms at their symmetric LCM equilibrium.
///
/// The target is the limiting accuracy `(2 - √2)^2`; the equilibrium cdf
/// `F_M(-tau_M)` tends to `2 - √2`.
pub fn build_fm_instance(m: f64) -> Result<WorstCaseInstance> {
    if !(1.0..=50.0).contains(&m) {
        return Err(Error::InvalidArgument(format!("M must lie in [1, 50], got {m}")));
    }
    let f = make_fm_family(m)?;
    let profile = DistProfile::homogeneous(f.clone(), 2)?;
    let eq = solve_symmetric_ne(&f, 2)?;
    let check = verify_lcm_ne_quadrature(&profile, &eq.delays)?;
    if !check.verified {
        return Err(Error::NoEquilibrium(format!(
            "f_M symmetric candidate at M={m} failed certification (gain {:.3e})",
            check.max_gain
        )));
    }
    let big_f = f.cdf(-eq.delays[0]);
    Ok(WorstCaseInstance {
        name: format!("fm-{m}"),
        profile,
        certified_delays: Some(eq.delays),
        target_value: lcm_n2_tight(),
        target_kind: TargetKind::Accuracy,
        equilibrium_cdf: Some(big_f),
        concentrated_credit: None,
    })
}

/// `e_1(0) = (1 - (1 - ε)^n) / (nε)`.
pub fn collapse_credit(eps: f64, n: usize) -> f64 {
    (1.0 - (1.0 - eps).powi(n as i32)) / (n as f64 * eps)
}

/// Platform 1 clicks uniformly on `[-2-ε, -2]` and delays by 2; the others
/// are uniform on `[-1, 0]` and truthful. Platform 1 is never the true last
/// click yet collects almost all LCM credit.
pub fn build_hetero_collapse(eps: f64, n: usize) -> Result<WorstCaseInstance> {
    if !(eps > 0.0 && eps <= 0.5) || n < 2 {
        return Err(Error::InvalidArgument(format!("need 0 < ε <= 0.5 and n >= 2, got ({eps}, {n})")));
    }
    let mut dists = vec![make_uniform(-2.0 - eps, -2.0)?];
    dists.extend(std::iter::repeat_n(make_uniform(-1.0, 0.0)?, n - 1));
    let profile = DistProfile::new(dists)?;
    let mut delays = vec![0.0; n];
    delays[0] = 2.0;
    let check = verify_lcm_ne_quadrature(&profile, &delays)?;
    let e1 = collapse_credit(eps, n);
    Ok(WorstCaseInstance {
        name: format!("collapse-{eps}-n{n}"),
        profile,
        certified_delays: check.verified.then_some(delays),
        target_value: 1.0 - e1,
        target_kind: TargetKind::Accuracy,
        equilibrium_cdf: None,
        concentrated_credit: Some(e1),
    })
}

/// Platform 1 of the two-platform instance on which PVM attains its worst
/// accuracy 19/27.
pub fn tight_pair_f1() -> TimeDist {
    make_piecewise_uniform(&[
        (-22.0 / 9.0, -2.0, 4.0 / 9.0),
        (-13.0 / 9.0, -11.0 / 9.0, 2.0 / 9.0),
        (-1.0 / 3.0, 0.0, 3.0 / 9.0),
    ])
    .expect("static segments are valid")
}

/// Platform 2 of the tight instance.
pub fn tight_pair_f2() -> TimeDist {
    make_piecewise_uniform(&[
        (-25.0 / 9.0, -22.0 / 9.0, 3.0 / 9.0),
        (-11.0 / 9.0, -1.0, 2.0 / 9.0),
        (-7.0 / 9.0, -1.0 / 3.0, 4.0 / 9.0),
    ])
    .expect("static segments are valid")
}

pub fn build_pvm_tight_pair() -> WorstCaseInstance {
    let profile = DistProfile::new(vec![tight_pair_f1(), tight_pair_f2()]).expect("two platforms");
    WorstCaseInstance {
        name: "tight-pair".into(),
        profile,
        certified_delays: None,
        target_value: 19.0 / 27.0,
        target_kind: TargetKind::Accuracy,
        equilibrium_cdf: None,
        concentrated_credit: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCaseSearch {
    pub p_star: f64,
    pub value: f64,
}

/// Maximizes the reduced two-platform misattribution `2p(1 - √p)` on a grid
/// of `resolution` points, then refines by golden section.
pub fn pvm_worstcase_search(resolution: usize) -> Result<WorstCaseSearch> {
    if resolution < 1000 {
        return Err(Error::InvalidArgument("grid resolution must be at least 10^3".into()));
    }
    let g = |p: f64| 2.0 * p * (1.0 - p.sqrt());
    let grid = linspace(0.0, 1.0, resolution);
    let k = (0..grid.len()).max_by(|&a, &b| g(grid[a]).total_cmp(&g(grid[b]))).unwrap();
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(grid.len() - 1)];
    let (p_star, value) = golden_max(g, lo, hi, 1e-12);
    Ok(WorstCaseSearch { p_star, value })
}

/// A point of the two-platform feasible set: platform-1 prior `p`, interval
/// masses `x`, `y`, and within-interval ordering probabilities `b1..b3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasiblePoint {
    pub p: f64,
    pub x: f64,
    pub y: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub misattribution: f64,
}

/// Exhaustive search of the unreduced feasible set. `p`, `x`, `y` run over
/// `fine` grid points each and `b1`, `b3` over `coarse` points; `b2` is solved
/// from the prior constraint and kept when it lands in `[0, 1]`.
pub fn worstcase_bruteforce(fine: usize, coarse: usize) -> FeasiblePoint {
    let ps = linspace(0.0, 1.0, fine);
    let bs = linspace(0.0, 1.0, coarse.max(1));
    ps.par_iter()
        .map(|&p| {
            let mut best = FeasiblePoint { p, x: 0.0, y: 0.0, b1: 0.0, b2: 0.0, b3: 0.0, misattribution: f64::NEG_INFINITY };
            let side = linspace(0.0, 1.0 - p, fine);
            for &x in &side {
                for &y in &side {
                    for &b1 in &bs {
                        for &b3 in &bs {
                            let rest = p * (p + y) + x * p + b1 * (1.0 - p - x) * p + b3 * p * (1.0 - p - y);
                            let need = p - rest;
                            let xy = x * y;
                            let b2 = if xy > 0.0 {
                                need / xy
                            } else if need.abs() <= 1e-12 {
                                0.0
                            } else {
                                continue;
                            };
                            if !(-1e-12..=1.0 + 1e-12).contains(&b2) {
                                continue;
                            }
                            let b2 = b2.clamp(0.0, 1.0);
                            let v = b2 * xy + p * (1.0 - p);
                            if v > best.misattribution {
                                best = FeasiblePoint { p, x, y, b1, b2, b3, misattribution: v };
                            }
                        }
                    }
                }
            }
            best
        })
        .reduce_with(|a, b| if b.misattribution > a.misattribution { b } else { a })
        .expect("non-empty grid")
}

/// Thresholds maximizing accuracy subject to the expected-credit budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSolution {
    pub thetas: Vec<f64>,
    pub objective: f64,
    /// `Σ G_i(θ_i) - 1`.
    pub constraint_residual: f64,
    /// Best objective on the coarse simplex grid (stage one), if run.
    pub grid_objective: Option<f64>,
    pub grid_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct ThresholdSearchSpec {
    /// Simplex grid step in the acceptance probabilities `e_i`.
    pub grid_step: f64,
    /// Largest `n` for which the simplex grid is enumerated.
    pub grid_max_n: usize,
    pub tolerance: f64,
}

impl Default for ThresholdSearchSpec {
    fn default() -> Self {
        Self { grid_step: 0.05, grid_max_n: 4, tolerance: 1e-3 }
    }
}

/// Accuracy of threshold rules `x_i = 1{max_{j≠i} t_j <= θ_i}` under truthful
/// play: `Σ_i ∫^{θ_i} g_i (1 - F_i)`, with `G_i = ∏_{j≠i} F_j`.
pub fn threshold_objective(profile: &DistProfile, thetas: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, &theta) in thetas.iter().enumerate() {
        let g = max_dist(profile, i)?;
        let fi = profile.dist(i);
        let mut breaks = g.breakpoints();
        breaks.extend(fi.breakpoints());
        total += integrate(|u| g.pdf(u) * (1.0 - fi.cdf(u)), g.support_lo(), theta.min(g.support_hi()), &breaks)?;
    }
    Ok(total)
}

/// Two-stage search: a coarse simplex grid over `e_i = G_i(θ_i)`, then the
/// exact optimum of the concave problem from its stationarity condition
/// `F_i(θ_i) = c` for all `i`, with `c` found by bisection on the budget.
pub fn optimal_threshold_search(profile: &DistProfile, spec: &ThresholdSearchSpec) -> Result<ThresholdSolution> {
    let n = profile.n();
    let gs: Vec<TimeDist> = (0..n).map(|i| max_dist(profile, i)).collect::<Result<_>>()?;
    let theta_of = |i: usize, e: f64| gs[i].quantile(e.clamp(0.0, 1.0));

    let grid_objective = if n <= spec.grid_max_n {
        let pts = simplex_grid(n, spec.grid_step);
        let vals: Vec<f64> = pts
            .par_iter()
            .map(|e| {
                let th: Vec<f64> = e.iter().enumerate().map(|(i, &ei)| theta_of(i, ei)).collect();
                threshold_objective(profile, &th)
            })
            .collect::<Result<_>>()?;
        vals.into_iter().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    } else {
        None
    };

    // stationarity: every platform's own cdf at its threshold equals c
    let budget = |c: f64| -> f64 {
        (0..n).map(|i| gs[i].cdf(profile.dist(i).quantile(c))).sum::<f64>() - 1.0
    };
    let c = leftmost_at_least(|c| budget(c), 0.0, 0.0, 1.0, 1e-15);
    let mut e = Vec::with_capacity(n);
    let mut spread = Vec::with_capacity(n);
    for i in 0..n {
        let fi = profile.dist(i);
        let left = fi.quantile(c);
        // right end of a flat stretch of F_i at level c
        let right = flat_end(fi, left, c);
        let lo = gs[i].cdf(left);
        let hi = gs[i].cdf(right);
        e.push(lo);
        spread.push(hi - lo);
    }
    let mut remaining = 1.0 - e.iter().sum::<f64>();
    for i in 0..n {
        if remaining <= 0.0 {
            break;
        }
        let add = remaining.min(spread[i]);
        e[i] += add;
        remaining -= add;
    }
    let thetas: Vec<f64> = (0..n)
        .map(|i| {
            let fi = profile.dist(i);
            let left = fi.quantile(c);
            let right = flat_end(fi, left, c);
            let th = theta_of(i, e[i]);
            th.clamp(left.min(right), right.max(left))
        })
        .collect();
    let objective = threshold_objective(profile, &thetas)?;
    let residual = (0..n).map(|i| gs[i].cdf(thetas[i])).sum::<f64>() - 1.0;
    let (thetas, objective, residual) = match grid_objective {
        Some(gv) if gv > objective + spec.tolerance => {
            return Err(Error::RootNotFound(format!(
                "stationary point {objective} falls below grid optimum {gv}"
            )))
        }
        _ => (thetas, objective, residual),
    };
    Ok(ThresholdSolution {
        thetas,
        objective,
        constraint_residual: residual,
        grid_objective,
        grid_tolerance: spec.tolerance,
    })
}

/// Largest `t >= left` with `F(t) <= c` (end of a flat region at level `c`).
fn flat_end(f: &TimeDist, left: f64, c: f64) -> f64 {
    let hi = f.support_hi();
    if f.cdf(hi) <= c {
        return hi;
    }
    let probe = |t: f64| if f.cdf(t) > c + 1e-15 { 1.0 } else { 0.0 };
    leftmost_at_least(probe, 1.0, left, hi, 1e-13 * hi.abs().max(1.0)).max(left)
}

/// Points of `{e ∈ [0,1]^n : Σ e = 1}` on a lattice of step `step`.
fn simplex_grid(n: usize, step: f64) -> Vec<Vec<f64>> {
    let k = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<f64>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.iter().map(|&c| c as f64 / k as f64).collect());
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(pos + 1, left - v, cur, k, out);
        }
    }
    rec(0, k, &mut cur, k, &mut out);
    out
}

/// Symmetric-equilibrium summary of one `f_M` instance.
pub fn fm_equilibrium(m: f64) -> Result<(EquilibriumResult, f64)> {
    let f = make_fm_family(m)?;
    let eq = solve_symmetric_ne(&f, 2)?;
    let big_f = f.cdf(-eq.delays[0]);
    Ok((eq, big_f))
}

/// `F_M(-τ_M)` from a direct bisection of the two-platform first-order
/// condition written out for the `f_M` law; an independent check on the
/// generic solver.
pub fn fm_foc_direct(m: f64) -> Result<f64> {
    let f = make_fm_family(m)?;
    // h(τ) = -f(-τ) + ∫_{-M}^{-τ} f(t)^2 dt with f(t) = c (e^{-t} - 1):
    // ∫ f^2 = c^2 [ -e^{-2t}/2 + 2e^{-t} + t ] evaluated from -M to -τ.
    let c = 1.0 / (m.exp_m1() - m);
    let prim = |t: f64| -(-2.0 * t).exp() / 2.0 + 2.0 * (-t).exp() + t;
    let h = |tau: f64| -c * tau.exp_m1() + c * c * (prim(-tau) - prim(-m));
    let tau = bisect(h, 0.0, m, 1e-13 * m)?;
    Ok(f.cdf(-tau))
}
