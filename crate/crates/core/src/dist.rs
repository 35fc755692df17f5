//! Click-time distributions on the conversion-aligned axis.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{integrate, leftmost_at_least};

/// Largest `M` accepted by [`make_fm_family`]; `e^M` stays far from overflow.
pub const FM_MAX_M: f64 = 50.0;

/// Mass left out when an unbounded family is cut to a finite support.
pub const TRUNCATION_MASS: f64 = 1e-12;

/// A click-time law supported on `[support_lo, support_hi]` with `support_hi <= 0`.
///
/// Immutable once built; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDist {
    kind: Kind,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Uniform,
    /// `f(t) = -2t` on `[-1, 0]`.
    Linear,
    /// `f(t) = c (e^{-t} - 1)` on `[-M, 0]`.
    Fm { m: f64, c: f64 },
    /// `f(t) ∝ rate·e^{rate (t - hi)}`, truncated on the left.
    Exponential { rate: f64, floor: f64, norm: f64 },
    Piecewise(Piecewise),
    Tabulated(Table),
    Max(Vec<TimeDist>),
    WithAtom { base: Box<TimeDist>, at: f64, weight: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct Piecewise {
    segs: Vec<(f64, f64, f64)>,
    /// mass strictly before each segment
    cum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Table {
    grid: Vec<f64>,
    cdf: Vec<f64>,
    step: Option<f64>,
}

pub fn make_uniform(lo: f64, hi: f64) -> Result<TimeDist> {
    if !(lo < hi) || hi > 0.0 || !lo.is_finite() {
        return Err(Error::InvalidDist(format!(
            "uniform needs lo < hi <= 0, got ({lo}, {hi})"
        )));
    }
    Ok(TimeDist { kind: Kind::Uniform, lo, hi })
}

pub fn make_linear() -> TimeDist {
    TimeDist { kind: Kind::Linear, lo: -1.0, hi: 0.0 }
}

/// The `f_M` family on `[-M, 0]`, `0 < M <= 50`.
pub fn make_fm_family(m: f64) -> Result<TimeDist> {
    if !(m > 0.0) || m > FM_MAX_M {
        return Err(Error::InvalidDist(format!(
            "f_M needs 0 < M <= {FM_MAX_M}, got {m}"
        )));
    }
    let c = 1.0 / (m.exp_m1() - m);
    Ok(TimeDist { kind: Kind::Fm { m, c }, lo: -m, hi: 0.0 })
}

/// Exponential density increasing toward `hi`, cut where the untruncated cdf
/// falls below [`TRUNCATION_MASS`] and renormalized.
pub fn make_exponential(rate: f64, hi: f64) -> Result<TimeDist> {
    if !(rate > 0.0) || hi > 0.0 || !rate.is_finite() {
        return Err(Error::InvalidDist(format!(
            "exponential needs rate > 0 and hi <= 0, got ({rate}, {hi})"
        )));
    }
    let lo = hi + TRUNCATION_MASS.ln() / rate;
    let floor = TRUNCATION_MASS;
    Ok(TimeDist {
        kind: Kind::Exponential { rate, floor, norm: 1.0 - floor },
        lo,
        hi,
    })
}

/// Piecewise-uniform density from `(lo, hi, mass)` segments.
pub fn make_piecewise_uniform(segments: &[(f64, f64, f64)]) -> Result<TimeDist> {
    if segments.is_empty() {
        return Err(Error::InvalidDist("no segments".into()));
    }
    let mut total = 0.0;
    for (k, &(a, b, m)) in segments.iter().enumerate() {
        if !(a < b) || b > 0.0 || !(m >= 0.0) || !a.is_finite() {
            return Err(Error::InvalidDist(format!(
                "bad segment {k}: ({a}, {b}, {m})"
            )));
        }
        if k > 0 && a < segments[k - 1].1 {
            return Err(Error::InvalidDist(format!(
                "segment {k} overlaps or is out of order"
            )));
        }
        total += m;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDist(format!(
            "segment masses sum to {total}, expected 1"
        )));
    }
    let segs: Vec<_> = segments.iter().map(|&(a, b, m)| (a, b, m / total)).collect();
    let mut cum = Vec::with_capacity(segs.len());
    let mut acc = 0.0;
    for s in &segs {
        cum.push(acc);
        acc += s.2;
    }
    let lo = segs[0].0;
    let hi = segs[segs.len() - 1].1;
    Ok(TimeDist { kind: Kind::Piecewise(Piecewise { segs, cum }), lo, hi })
}

/// Piecewise-linear cdf through `(grid[k], cdf[k])`.
///
/// `cdf` must be non-decreasing from 0 to 1 (within 1e-8); the end values are
/// snapped exactly.
pub fn make_tabulated(grid: Vec<f64>, mut cdf: Vec<f64>) -> Result<TimeDist> {
    if grid.len() < 2 || grid.len() != cdf.len() {
        return Err(Error::InvalidDist("table needs >= 2 matching points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidDist("table grid must be strictly increasing".into()));
    }
    let hi = *grid.last().unwrap();
    if hi > 0.0 || !grid[0].is_finite() {
        return Err(Error::InvalidDist(format!("table support must end at or before 0, got {hi}")));
    }
    if cdf.windows(2).any(|w| w[1] < w[0]) || cdf.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidDist("table cdf must be non-decreasing".into()));
    }
    let n = cdf.len();
    if cdf[0].abs() > 1e-8 || (cdf[n - 1] - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidDist(format!(
            "table cdf must run from 0 to 1, got {} .. {}",
            cdf[0],
            cdf[n - 1]
        )));
    }
    cdf[0] = 0.0;
    cdf[n - 1] = 1.0;
    for c in cdf.iter_mut() {
        *c = c.clamp(0.0, 1.0);
    }
    let first = grid[0];
    let step = (hi - first) / (n - 1) as f64;
    let uniform = grid
        .iter()
        .enumerate()
        .all(|(k, &g)| (g - (first + k as f64 * step)).abs() <= 1e-9 * step.max(1e-300) + 1e-12 * first.abs());
    let lo = first;
    Ok(TimeDist {
        kind: Kind::Tabulated(Table { grid, cdf, step: uniform.then_some(step) }),
        lo,
        hi,
    })
}

/// Law of the maximum of independent draws from `parts`.
pub fn max_of(parts: Vec<TimeDist>) -> Result<TimeDist> {
    match parts.len() {
        0 => Err(Error::InvalidArgument("max of an empty set".into())),
        1 => Ok(parts.into_iter().next().unwrap()),
        _ => {
            let lo = parts.iter().map(|d| d.lo).fold(f64::NEG_INFINITY, f64::max);
            let hi = parts.iter().map(|d| d.hi).fold(f64::NEG_INFINITY, f64::max);
            Ok(TimeDist { kind: Kind::Max(parts), lo, hi })
        }
    }
}

/// Law of `max_{j != exclude} t_j`.
pub fn max_dist(profile: &DistProfile, exclude: usize) -> Result<TimeDist> {
    if exclude >= profile.n() {
        return Err(Error::InvalidArgument(format!(
            "platform {exclude} out of range for n = {}",
            profile.n()
        )));
    }
    let parts = profile
        .dists
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != exclude)
        .map(|(_, d)| d.clone())
        .collect();
    max_of(parts)
}

/// Mixture of an atomless `base` with a point mass `weight` at `at`.
///
/// Only used to exercise threshold jumps; the model otherwise assumes
/// densities.
pub fn with_atom(base: TimeDist, at: f64, weight: f64) -> Result<TimeDist> {
    if !(weight > 0.0 && weight < 1.0) || at > 0.0 || !at.is_finite() {
        return Err(Error::InvalidDist(format!("bad atom ({at}, {weight})")));
    }
    if !base.atoms().is_empty() {
        return Err(Error::InvalidDist("base of an atom mixture must be atomless".into()));
    }
    let lo = base.lo.min(at);
    let hi = base.hi.max(at);
    Ok(TimeDist {
        kind: Kind::WithAtom { base: Box::new(base), at, weight },
        lo,
        hi,
    })
}

impl TimeDist {
    pub fn support_lo(&self) -> f64 {
        self.lo
    }

    pub fn support_hi(&self) -> f64 {
        self.hi
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Uniform => {
                if t > self.lo && t <= self.hi {
                    1.0 / (self.hi - self.lo)
                } else {
                    0.0
                }
            }
            Kind::Linear => {
                if (-1.0..=0.0).contains(&t) {
                    -2.0 * t
                } else {
                    0.0
                }
            }
            Kind::Fm { m, c } => {
                if t >= -m && t <= 0.0 {
                    c * (-t).exp_m1()
                } else {
                    0.0
                }
            }
            Kind::Exponential { rate, norm, .. } => {
                if t >= self.lo && t <= self.hi {
                    rate * (rate * (t - self.hi)).exp() / norm
                } else {
                    0.0
                }
            }
            Kind::Piecewise(p) => p
                .segs
                .iter()
                .find(|s| t > s.0 && t <= s.1)
                .map_or(0.0, |s| s.2 / (s.1 - s.0)),
            Kind::Tabulated(tab) => tab.pdf(t),
            Kind::Max(parts) => {
                let mut total = 0.0;
                for (k, d) in parts.iter().enumerate() {
                    let fk = d.pdf(t);
                    if fk == 0.0 {
                        continue;
                    }
                    let rest: f64 = parts
                        .iter()
                        .enumerate()
                        .filter(|&(l, _)| l != k)
                        .map(|(_, e)| e.cdf(t))
                        .product();
                    total += fk * rest;
                }
                total
            }
            Kind::WithAtom { base, weight, .. } => (1.0 - weight) * base.pdf(t),
        }
    }

    /// Right-continuous cdf.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < self.lo {
            return 0.0;
        }
        if t >= self.hi {
            return 1.0;
        }
        match &self.kind {
            Kind::Uniform => (t - self.lo) / (self.hi - self.lo),
            Kind::Linear => 1.0 - t * t,
            Kind::Fm { m, c } => (c * (-(-t).exp() - t + m.exp() - m)).clamp(0.0, 1.0),
            Kind::Exponential { rate, floor, norm } => {
                (((rate * (t - self.hi)).exp() - floor) / norm).clamp(0.0, 1.0)
            }
            Kind::Piecewise(p) => {
                let mut acc = 0.0;
                for (k, s) in p.segs.iter().enumerate() {
                    if t <= s.0 {
                        return p.cum[k];
                    }
                    if t <= s.1 {
                        return p.cum[k] + s.2 * (t - s.0) / (s.1 - s.0);
                    }
                    acc = p.cum[k] + s.2;
                }
                acc
            }
            Kind::Tabulated(tab) => tab.cdf(t),
            Kind::Max(parts) => parts.iter().map(|d| d.cdf(t)).product(),
            Kind::WithAtom { base, at, weight } => {
                (1.0 - weight) * base.cdf(t) + if t >= *at { *weight } else { 0.0 }
            }
        }
    }

    /// Left limit `P(T < t)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Max(parts) => parts.iter().map(|d| d.cdf_left(t)).product(),
            _ => (self.cdf(t) - self.mass_at(t)).max(0.0),
        }
    }

    /// Probability of exactly `t`.
    pub fn mass_at(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::WithAtom { at, weight, .. } if t == *at => *weight,
            Kind::Max(_) => self.cdf(t) - self.cdf_left(t),
            _ => 0.0,
        }
    }

    /// Point masses `(location, mass)` of this law.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            Kind::WithAtom { at, weight, .. } => vec![(*at, *weight)],
            Kind::Max(parts) => {
                let mut locs: Vec<f64> = parts
                    .iter()
                    .flat_map(|d| d.atoms().into_iter().map(|a| a.0))
                    .collect();
                locs.sort_by(f64::total_cmp);
                locs.dedup();
                locs.into_iter()
                    .map(|a| (a, self.mass_at(a)))
                    .filter(|a| a.1 > 0.0)
                    .collect()
            }
            _ => vec![],
        }
    }

    /// Points where the density may jump or kink; quadrature splits there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Piecewise(p) => p.segs.iter().flat_map(|s| [s.0, s.1]).collect(),
            Kind::Tabulated(tab) => tab.grid.clone(),
            Kind::Max(parts) => parts.iter().flat_map(|d| d.breakpoints()).collect(),
            Kind::WithAtom { base, at, .. } => {
                let mut b = base.breakpoints();
                b.push(*at);
                b
            }
            _ => vec![self.lo, self.hi],
        }
    }

    /// Leftmost `t` with `cdf(t) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        if !(p > 0.0) {
            return self.lo;
        }
        if p >= 1.0 {
            return self.leftmost(1.0);
        }
        match &self.kind {
            Kind::Uniform => self.lo + p * (self.hi - self.lo),
            Kind::Linear => -(1.0 - p).sqrt(),
            Kind::Exponential { rate, floor, norm } => {
                (self.hi + (p * norm + floor).ln() / rate).clamp(self.lo, self.hi)
            }
            Kind::Piecewise(pw) => {
                for (k, s) in pw.segs.iter().enumerate() {
                    if s.2 > 0.0 && p <= pw.cum[k] + s.2 {
                        let frac = ((p - pw.cum[k]) / s.2).clamp(0.0, 1.0);
                        return s.0 + frac * (s.1 - s.0);
                    }
                }
                self.hi
            }
            Kind::Tabulated(tab) => tab.quantile(p),
            Kind::WithAtom { base, at, weight } => {
                let below = (1.0 - weight) * base.cdf(*at);
                if p <= below {
                    base.quantile(p / (1.0 - weight))
                } else if p <= below + weight {
                    *at
                } else {
                    base.quantile((p - weight) / (1.0 - weight))
                }
            }
            Kind::Fm { .. } | Kind::Max(_) => self.leftmost(p),
        }
    }

    fn leftmost(&self, p: f64) -> f64 {
        let xtol = 1e-14 * self.lo.abs().max(1.0);
        leftmost_at_least(|t| self.cdf(t), p, self.lo, self.hi, xtol)
    }

    /// Inverse-transform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    /// Numerical self-check of the law's defining properties.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidDist(m));
        if !(self.hi <= 0.0 && self.lo < self.hi) {
            return fail(format!("bad support [{}, {}]", self.lo, self.hi));
        }
        if self.cdf_left(self.lo).abs() > 1e-8 {
            return fail(format!("cdf at support_lo is {}", self.cdf_left(self.lo)));
        }
        if (self.cdf(self.hi) - 1.0).abs() > 1e-8 {
            return fail(format!("cdf at support_hi is {}", self.cdf(self.hi)));
        }
        let mut prev = 0.0;
        for k in 0..=2000 {
            let t = self.lo + (self.hi - self.lo) * k as f64 / 2000.0;
            let c = self.cdf(t);
            if c + 1e-15 < prev {
                return fail(format!("cdf decreases at {t}"));
            }
            prev = c;
        }
        let atom_mass: f64 = self.atoms().iter().map(|a| a.1).sum();
        let mass = integrate(|t| self.pdf(t), self.lo, self.hi, &self.breakpoints())? + atom_mass;
        if (mass - 1.0).abs() > 1e-6 {
            return fail(format!("total mass {mass}"));
        }
        Ok(())
    }
}

impl Table {
    /// Cell `k` with `grid[k] <= t <= grid[k+1]`, for `t` inside the grid.
    fn cell(&self, t: f64) -> usize {
        let n = self.grid.len();
        match self.step {
            Some(step) => {
                let k = ((t - self.grid[0]) / step).floor();
                let mut k = if k < 0.0 { 0 } else { (k as usize).min(n - 2) };
                while k > 0 && self.grid[k] > t {
                    k -= 1;
                }
                while k + 2 < n && self.grid[k + 1] < t {
                    k += 1;
                }
                k
            }
            None => self.grid.partition_point(|&g| g <= t).clamp(1, n - 1) - 1,
        }
    }

    fn cdf(&self, t: f64) -> f64 {
        let k = self.cell(t);
        let (g0, g1) = (self.grid[k], self.grid[k + 1]);
        let frac = ((t - g0) / (g1 - g0)).clamp(0.0, 1.0);
        self.cdf[k] + (self.cdf[k + 1] - self.cdf[k]) * frac
    }

    /// Density on the half-open cell `(grid[k], grid[k+1]]`.
    fn pdf(&self, t: f64) -> f64 {
        let n = self.grid.len();
        if !(t > self.grid[0] && t <= self.grid[n - 1]) {
            return 0.0;
        }
        let mut k = self.cell(t);
        if t == self.grid[k] && k > 0 {
            k -= 1;
        }
        (self.cdf[k + 1] - self.cdf[k]) / (self.grid[k + 1] - self.grid[k])
    }

    fn quantile(&self, p: f64) -> f64 {
        let j = self.cdf.partition_point(|&c| c < p);
        if j == 0 {
            return self.grid[0];
        }
        if j >= self.cdf.len() {
            return *self.grid.last().unwrap();
        }
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let frac = ((p - c0) / (c1 - c0)).clamp(0.0, 1.0);
        self.grid[j - 1] + frac * (self.grid[j] - self.grid[j - 1])
    }
}

impl TimeDist {
    /// Grid and cdf values of a tabulated law.
    pub fn table(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            Kind::Tabulated(t) => Some((&t.grid, &t.cdf)),
            _ => None,
        }
    }
}

/// Independent click-time laws, one per platform (`n >= 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct DistProfile {
    dists: Vec<TimeDist>,
}

impl DistProfile {
    pub fn new(dists: Vec<TimeDist>) -> Result<Self> {
        if dists.len() < 2 {
            return Err(Error::InvalidProfile(format!(
                "need at least 2 platforms, got {}",
                dists.len()
            )));
        }
        if dists.len() > 63 {
            return Err(Error::InvalidProfile("at most 63 platforms are supported".into()));
        }
        Ok(Self { dists })
    }

    pub fn homogeneous(d: TimeDist, n: usize) -> Result<Self> {
        Self::new(vec![d; n])
    }

    pub fn n(&self) -> usize {
        self.dists.len()
    }

    pub fn dist(&self, i: usize) -> &TimeDist {
        &self.dists[i]
    }

    pub fn dists(&self) -> &[TimeDist] {
        &self.dists
    }

    pub fn is_homogeneous(&self) -> bool {
        self.dists.windows(2).all(|w| w[0] == w[1])
    }

    pub fn support_lo(&self) -> f64 {
        self.dists.iter().map(|d| d.lo).fold(f64::INFINITY, f64::min)
    }

    /// Union of every platform's breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        if self.is_homogeneous() {
            return self.dists[0].breakpoints();
        }
        self.dists.iter().flat_map(|d| d.breakpoints()).collect()
    }

    /// Draw one click time per platform into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, d) in out.iter_mut().zip(&self.dists) {
            *o = d.sample(rng);
        }
    }
}
