//! Quadrature, root finding and streaming moments.

use crate::error::{Error, Result};

/// Default absolute tolerance for every quadrature in the crate.
pub const QUAD_TOL: f64 = 1e-9;

const MAX_DEPTH: u32 = 50;
const MIN_DEPTH: u32 = 4;
/// Above this many segments the forced minimum depth is dropped; tabulated
/// densities already bring their own fine partition.
const MIN_DEPTH_SEGMENT_LIMIT: usize = 64;

/// Integrate `f` over `[lo, hi]` with adaptive Simpson, splitting at `breaks`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, breaks: &[f64]) -> Result<f64> {
    integrate_tol(f, lo, hi, breaks, QUAD_TOL)
}

/// Adaptive Simpson over `[lo, hi]` with the tolerance shared among the
/// segments cut by `breaks` in proportion to their length.
///
/// Each segment is treated as half-open: its endpoints are nudged inward by a
/// few ulps so that one-sided limits are used at jumps. Integrands may
/// therefore be discontinuous at any listed breakpoint.
pub fn integrate_tol<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    if !(hi > lo) {
        return Ok(0.0);
    }
    let pts = partition(lo, hi, breaks);
    let width = hi - lo;
    let min_depth = if pts.len() - 1 <= MIN_DEPTH_SEGMENT_LIMIT {
        MIN_DEPTH
    } else {
        0
    };
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let a2 = a + nudge(a);
        let b2 = b - nudge(b);
        if b2 <= a2 {
            continue;
        }
        let seg_tol = tol * (b - a) / width;
        let fa = f(a2);
        let fb = f(b2);
        let m = 0.5 * (a2 + b2);
        let fm = f(m);
        let whole = (b2 - a2) / 6.0 * (fa + 4.0 * fm + fb);
        let mut ok = true;
        total += simpson(&f, [a2, m, b2], [fa, fm, fb], whole, seg_tol, 0, min_depth, &mut ok);
        if !ok {
            return Err(Error::QuadratureDiverged { lo: a, hi: b });
        }
    }
    Ok(total)
}

fn nudge(x: f64) -> f64 {
    8.0 * f64::EPSILON * x.abs().max(1.0)
}

/// Sorted, de-duplicated partition points of `[lo, hi]`.
///
/// Breakpoints are never merged into neighbours: a jump a hair away from an
/// endpoint would otherwise land inside a segment. Segments thinner than the
/// nudge are skipped by the caller.
pub(crate) fn partition(lo: f64, hi: f64, breaks: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    pts.push(lo);
    pts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    x: [f64; 3],
    y: [f64; 3],
    whole: f64,
    tol: f64,
    depth: u32,
    min_depth: u32,
    ok: &mut bool,
) -> f64 {
    let [a, m, b] = x;
    let [fa, fm, fb] = y;
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth >= min_depth && delta.abs() <= 15.0 * tol.max(floor) {
        return left + right + delta / 15.0;
    }
    if depth >= MAX_DEPTH || lm <= a || rm >= b {
        *ok = false;
        return left + right + delta / 15.0;
    }
    simpson(f, [a, lm, m], [fa, flm, fm], left, tol / 2.0, depth + 1, min_depth, ok)
        + simpson(f, [m, rm, b], [fm, frm, fb], right, tol / 2.0, depth + 1, min_depth, ok)
}

/// Root of a continuous `f` with a sign change on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() || flo.signum() == fhi.signum() {
        return Err(Error::RootNotFound(format!(
            "no sign change on [{lo}, {hi}]: f = {flo}, {fhi}"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Leftmost `t` in `[lo, hi]` with `g(t) >= target` for a non-decreasing `g`,
/// resolved to `xtol`. Returns `hi` when the target is never reached.
pub fn leftmost_at_least<G: Fn(f64) -> f64>(
    g: G,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
) -> f64 {
    if g(lo) >= target {
        return lo;
    }
    if g(hi) < target {
        return hi;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol || mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> (f64, f64) {
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - invphi * (hi - lo);
    let mut d = lo + invphi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > xtol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - invphi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + invphi * (hi - lo);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Streaming mean/variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (divides by `n`).
    pub fn var_pop(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0)
        }
    }

    /// Sample variance (divides by `n - 1`).
    pub fn var_sample(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean. For 0/1 data this is `sqrt(p(1-p)/n)`.
    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.var_pop() / self.n as f64).sqrt()
        }
    }
}
