//! Nash equilibria of the LCM delay game.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{DistProfile, TimeDist};
use crate::error::{Error, Result};
use crate::mech::Mechanism;
use crate::numeric::{bisect, golden_max, integrate, linspace, Moments};
use crate::sim::simulate;

/// Slack for quadrature-based equilibrium certificates.
pub const QUAD_GAIN_TOL: f64 = 1e-7;

/// Grid cells scanned for the first sign change of the symmetric FOC.
const FOC_SCAN: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub delays: Vec<f64>,
    pub foc_residual: f64,
    pub verified: bool,
    /// Largest deviation gain the certificate tolerates.
    pub deviation_gain_bound: f64,
}

/// Derivative of a platform's LCM utility in its own delay when all `n`
/// platforms share law `f` and delay `tau`:
/// `h(τ) = -f(-τ) + (n-1) ∫_{lo}^{-τ} f(t)^2 (1 - F(-τ) + F(t))^{n-2} dt`.
pub fn symmetric_foc(f: &TimeDist, n: usize, tau: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("need n >= 2".into()));
    }
    let lo = f.support_lo();
    if !(0.0..=-lo).contains(&tau) {
        return Err(Error::InvalidArgument(format!("delay {tau} outside [0, {}]", -lo)));
    }
    let top = -tau;
    let f_top = f.cdf(top);
    let k = (n - 2) as i32;
    let integral = integrate(
        |t| {
            let d = f.pdf(t);
            d * d * (1.0 - f_top + f.cdf(t)).powi(k)
        },
        lo,
        top,
        &f.breakpoints(),
    )?;
    Ok(-f.pdf(top) + (n as f64 - 1.0) * integral)
}

/// Symmetric equilibrium delay from the root of [`symmetric_foc`].
///
/// The result is not yet certified; see [`verify_lcm_ne_quadrature`] and
/// [`verify_ne`].
pub fn solve_symmetric_ne(f: &TimeDist, n: usize) -> Result<EquilibriumResult> {
    let width = -f.support_lo();
    let h0 = symmetric_foc(f, n, 0.0)?;
    if !(h0 > 0.0) {
        return Err(Error::NoEquilibrium(format!(
            "no interior symmetric FOC root: h(0) = {h0:.3e} <= 0"
        )));
    }
    let h = |tau: f64| symmetric_foc(f, n, tau).unwrap_or(f64::NAN);
    // First down-crossing. Where no mass remains h is exactly zero, so the
    // support edge cannot serve as a bracket end.
    let grid = linspace(0.0, width, FOC_SCAN + 1);
    let mut bracket = None;
    for w in grid.windows(2) {
        let v = h(w[1]);
        if v.is_nan() {
            return Err(Error::NoEquilibrium(format!("symmetric FOC undefined at {}", w[1])));
        }
        if v < 0.0 {
            bracket = Some((w[0], w[1]));
            break;
        }
    }
    let (lo, hi) = bracket.ok_or_else(|| {
        Error::NoEquilibrium(format!("no interior symmetric FOC root: h >= 0 on a {FOC_SCAN}-point scan"))
    })?;
    let tau = bisect(h, lo, hi, 1e-13 * width.max(1.0))
        .map_err(|e| Error::NoEquilibrium(format!("no interior symmetric FOC root: {e}")))?;
    let foc_residual = symmetric_foc(f, n, tau)?;
    Ok(EquilibriumResult { delays: vec![tau; n], foc_residual, verified: false, deviation_gain_bound: 0.0 })
}

/// LCM utility of platform `i` by quadrature:
/// `U_i = ∫_{lo_i}^{-τ_i} f_i(t) ∏_{j≠i} [F_j(t + τ_i - τ_j) + 1 - F_j(-τ_j)] dt`.
pub fn lcm_utility_quad(profile: &DistProfile, delays: &[f64], i: usize) -> Result<f64> {
    let me = profile.dist(i);
    let top = me.support_hi().min(-delays[i]);
    let lo = me.support_lo();
    if top <= lo {
        return Ok(0.0);
    }
    let others: Vec<(&TimeDist, f64, f64)> = (0..profile.n())
        .filter(|&j| j != i)
        .map(|j| {
            let d = profile.dist(j);
            (d, delays[i] - delays[j], 1.0 - d.cdf(-delays[j]))
        })
        .collect();
    let mut breaks = me.breakpoints();
    if !profile.is_homogeneous() || delays.iter().any(|&d| d != delays[i]) {
        for &(d, shift, _) in &others {
            breaks.extend(d.breakpoints().into_iter().map(|b| b - shift));
        }
    }
    integrate(
        |t| {
            let f = me.pdf(t);
            if f == 0.0 {
                return 0.0;
            }
            f * others.iter().map(|&(d, shift, late)| d.cdf(t + shift) + late).product::<f64>()
        },
        lo,
        top,
        &breaks,
    )
}

/// Candidate deviations for a platform whose law reaches back to `-width`:
/// a geometric ladder from 1e-3, an even grid, and points around `current`.
pub fn deviation_grid(width: f64, current: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut d = 1e-3;
    while d < width {
        pts.push(d);
        d *= 2.0;
    }
    pts.extend(linspace(0.0, width, 61));
    for rel in [1e-3, 1e-2, 5e-2, 0.1] {
        pts.push(current * (1.0 - rel));
        pts.push(current * (1.0 + rel));
    }
    pts.retain(|p| (0.0..=width).contains(p));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Outcome of an equilibrium certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeCheck {
    pub verified: bool,
    /// Largest estimated gain from a unilateral deviation.
    pub max_gain: f64,
    /// Platform and delay achieving `max_gain`.
    pub worst: Option<(usize, f64)>,
    /// Tolerance applied (three standard errors, or the quadrature slack).
    pub gain_bound: f64,
}

impl NeCheck {
    pub fn apply(&self, mut eq: EquilibriumResult) -> EquilibriumResult {
        eq.verified = self.verified;
        eq.deviation_gain_bound = self.gain_bound;
        eq
    }
}

/// Platforms whose deviations must be checked; with identical laws and delays
/// one representative suffices.
fn platforms_to_check(profile: &DistProfile, delays: &[f64]) -> Vec<usize> {
    if profile.is_homogeneous() && delays.windows(2).all(|w| w[0] == w[1]) {
        vec![0]
    } else {
        (0..profile.n()).collect()
    }
}

/// Deterministic certificate for LCM: every grid deviation's utility is
/// compared to the equilibrium utility by quadrature.
pub fn verify_lcm_ne_quadrature(profile: &DistProfile, delays: &[f64]) -> Result<NeCheck> {
    let mut worst: Option<(usize, f64)> = None;
    let mut max_gain = f64::NEG_INFINITY;
    for i in platforms_to_check(profile, delays) {
        let base = lcm_utility_quad(profile, delays, i)?;
        let grid = deviation_grid(-profile.dist(i).support_lo(), delays[i]);
        let gains: Vec<(f64, f64)> = grid
            .par_iter()
            .map(|&d| {
                let mut dev = delays.to_vec();
                dev[i] = d;
                lcm_utility_quad(profile, &dev, i).map(|u| (d, u - base))
            })
            .collect::<Result<_>>()?;
        for (d, g) in gains {
            if g > max_gain {
                max_gain = g;
                worst = Some((i, d));
            }
        }
    }
    Ok(NeCheck { verified: max_gain <= QUAD_GAIN_TOL, max_gain, worst, gain_bound: QUAD_GAIN_TOL })
}

/// Expected credit of platform `i` under reports `t + delays`, with its
/// standard error.
pub fn expected_utility(
    mech: &dyn Mechanism,
    profile: &DistProfile,
    delays: &[f64],
    i: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples < 10_000 {
        return Err(Error::InvalidArgument("utility estimates need at least 10^4 samples".into()));
    }
    if delays.len() != profile.n() || i >= profile.n() {
        return Err(Error::InvalidArgument("bad platform index or delay vector".into()));
    }
    let n = profile.n();
    let m = simulate(profile, n_samples, seed, Moments::new, |m, t, rng| {
        let r: Vec<f64> = t.iter().zip(delays).map(|(a, b)| a + b).collect();
        let mut x = vec![0.0; n];
        mech.allocate_into(&r, rng, &mut x);
        m.push(x[i]);
    });
    Ok((m.mean(), m.stderr()))
}

/// Monte Carlo certificate with common random numbers: for every platform and
/// every grid deviation, the paired utility difference must stay within three
/// standard errors of zero from above.
pub fn verify_ne(
    mech: &dyn Mechanism,
    profile: &DistProfile,
    delays: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<NeCheck> {
    if delays.len() != profile.n() {
        return Err(Error::InvalidArgument("one delay per platform expected".into()));
    }
    let n = profile.n();
    let mut worst = None;
    let mut max_gain = f64::NEG_INFINITY;
    let mut verified = true;
    let mut gain_bound: f64 = 0.0;
    for i in platforms_to_check(profile, delays) {
        let grid = deviation_grid(-profile.dist(i).support_lo(), delays[i]);
        let g = grid.len();
        let diffs: Vec<Moments> = simulate(
            profile,
            n_samples,
            seed,
            || vec![Moments::new(); g],
            |acc, t, rng| {
                let mut r: Vec<f64> = t.iter().zip(delays).map(|(a, b)| a + b).collect();
                let mut x = vec![0.0; n];
                mech.allocate_into(&r, rng, &mut x);
                let base = x[i];
                for (k, &d) in grid.iter().enumerate() {
                    r[i] = t[i] + d;
                    mech.allocate_into(&r, rng, &mut x);
                    acc[k].push(x[i] - base);
                }
            },
        );
        for (k, m) in diffs.iter().enumerate() {
            let bound = 3.0 * m.stderr();
            gain_bound = gain_bound.max(bound);
            if m.mean() > bound {
                verified = false;
            }
            if m.mean() > max_gain {
                max_gain = m.mean();
                worst = Some((i, grid[k]));
            }
        }
    }
    Ok(NeCheck { verified, max_gain, worst, gain_bound })
}

/// Best LCM delay for platform `i` against the others' `delays`.
pub fn lcm_best_response(profile: &DistProfile, delays: &[f64], i: usize) -> Result<(f64, f64)> {
    let width = -profile.dist(i).support_lo();
    let coarse = deviation_grid(width, delays[i]);
    let u = |d: f64| {
        let mut dev = delays.to_vec();
        dev[i] = d;
        lcm_utility_quad(profile, &dev, i)
    };
    let vals: Vec<f64> = coarse.par_iter().map(|&d| u(d)).collect::<Result<_>>()?;
    let k = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap();
    let lo = coarse[k.saturating_sub(1)];
    let hi = coarse[(k + 1).min(coarse.len() - 1)];
    let (d, v) = golden_max(|d| u(d).unwrap_or(f64::NEG_INFINITY), lo, hi, 1e-9 * width.max(1.0));
    Ok(if v >= vals[k] { (d, v) } else { (coarse[k], vals[k]) })
}

/// Certified LCM equilibrium.
///
/// Identical laws use the symmetric first-order condition (falling back to
/// truthful play when the condition has no interior root). Other profiles use
/// Gauss-Seidel best-response iteration from truthful play. Either way the
/// candidate must pass [`verify_lcm_ne_quadrature`].
pub fn solve_lcm_equilibrium(profile: &DistProfile) -> Result<EquilibriumResult> {
    let n = profile.n();
    let candidate = if profile.is_homogeneous() {
        match solve_symmetric_ne(profile.dist(0), n) {
            Ok(eq) => eq,
            Err(Error::NoEquilibrium(_)) => EquilibriumResult {
                delays: vec![0.0; n],
                foc_residual: symmetric_foc(profile.dist(0), n, 0.0)?,
                verified: false,
                deviation_gain_bound: 0.0,
            },
            Err(e) => return Err(e),
        }
    } else {
        best_response_iteration(profile, 200)?
    };
    let check = verify_lcm_ne_quadrature(profile, &candidate.delays)?;
    if !check.verified {
        return Err(Error::NoEquilibrium(format!(
            "candidate {:?} admits a deviation gaining {:.3e} (platform/delay {:?})",
            candidate.delays, check.max_gain, check.worst
        )));
    }
    Ok(check.apply(candidate))
}

/// Gauss-Seidel best-response dynamics; `foc_residual` holds the last sweep's
/// largest delay change.
pub fn best_response_iteration(profile: &DistProfile, max_sweeps: usize) -> Result<EquilibriumResult> {
    let n = profile.n();
    let width = -profile.support_lo();
    let mut delays = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..max_sweeps {
        change = 0.0;
        for i in 0..n {
            let (d, _) = lcm_best_response(profile, &delays, i)?;
            change = f64::max(change, (d - delays[i]).abs());
            delays[i] = d;
        }
        if change <= 1e-7 * width.max(1.0) {
            break;
        }
    }
    Ok(EquilibriumResult { delays, foc_residual: change, verified: false, deviation_gain_bound: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{make_linear, make_uniform};
    use crate::metrics::gamma_closed;

    #[test]
    fn linear_foc_values() {
        let f = make_linear();
        let g = gamma_closed();
        assert!(symmetric_foc(&f, 2, g).unwrap().abs() < 1e-6);
        assert!(symmetric_foc(&f, 2, 0.0).unwrap() > 0.0);
        assert!((symmetric_foc(&f, 2, 1.0).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_foc_matches_cubic_everywhere() {
        // n = 2: h(τ) = 2τ - 4∫... reduces to (2 - 3τ - 2τ^3)·(2/3)
        let f = make_linear();
        for k in 0..=20 {
            let tau = k as f64 / 20.0;
            let expected = (2.0 - 3.0 * tau - 2.0 * tau.powi(3)) * 2.0 / 3.0;
            let h = symmetric_foc(&f, 2, tau).unwrap();
            assert!((h - expected).abs() < 1e-9, "tau={tau}: {h} vs {expected}");
        }
    }

    #[test]
    fn uniform_pair_has_no_interior_root() {
        let f = make_uniform(-1.0, 0.0).unwrap();
        assert!(matches!(solve_symmetric_ne(&f, 2), Err(Error::NoEquilibrium(_))));
    }

    #[test]
    fn quad_utility_symmetric_closed_form() {
        let f = make_linear();
        let p = DistProfile::homogeneous(f.clone(), 2).unwrap();
        let tau = 0.4;
        let u = lcm_utility_quad(&p, &[tau, tau], 0).unwrap();
        let big_f = f.cdf(-tau);
        assert!((u - 0.5 * (1.0 - (1.0 - big_f).powi(2))).abs() < 1e-9);
        assert_eq!(lcm_utility_quad(&p, &[5.0, 0.0], 0).unwrap(), 0.0);
    }

    #[test]
    fn deviation_grid_shape() {
        let g = deviation_grid(10.0, 3.0);
        assert!(g.len() >= 50);
        assert_eq!(g[0], 0.0);
        assert!(g.contains(&1e-3));
        assert_eq!(*g.last().unwrap(), 10.0);
    }
}
