//! Named scenarios and the translation of specs into distribution profiles.
//!
//! Names:
//! - `<family>-n<k>`: `k` identical platforms; family is `uniform`, `linear`,
//!   `exp`, `fm<M>` or `fitted:<platform>`
//! - `hetero-mix-n<k>`: a fixed cycle of five different laws
//! - `tight-pair`: the two-platform instance where PVM scores 19/27
//! - `collapse` or `collapse-<eps>-n<k>`: the LCM accuracy collapse instance
//! - `pair:<A>+<B>`: two fitted platforms
//! - `protocol`: every fitted platform at n = 2..5 plus every fitted pair

use attribution_core::analysis::{build_hetero_collapse, build_pvm_tight_pair};
use attribution_core::dist::{
    make_exponential, make_fm_family, make_linear, make_piecewise_uniform, make_uniform, DistProfile, TimeDist,
};
use attribution_core::ingest::FittedDist;
use attribution_core::mech::{Lcm, Mechanism, Pvm, TreeMechanism};
use attribution_core::Error;

use crate::config::{DistSpec, MechKind, ScenarioRef, ScenarioSpec};
use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub profile: DistProfile,
    pub mechanisms: Vec<MechKind>,
    /// Fixed LCM delays (still certified before use).
    pub lcm_delays: Option<Vec<f64>>,
}

/// Example names shown in help output.
pub const EXAMPLES: &[&str] = &[
    "uniform-n3",
    "linear-n2",
    "fm10-n2",
    "exp-n4",
    "hetero-mix-n3",
    "tight-pair",
    "collapse",
    "collapse-0.1-n3",
    "fitted:A-n2",
    "pair:A+B",
    "protocol",
];

pub fn build_dist(spec: &DistSpec, fits: &[FittedDist]) -> Result<TimeDist> {
    Ok(match spec {
        DistSpec::Uniform { lo, hi } => make_uniform(*lo, *hi)?,
        DistSpec::Linear => make_linear(),
        DistSpec::Fm { m } => make_fm_family(*m)?,
        DistSpec::Exponential { rate, hi } => make_exponential(*rate, *hi)?,
        DistSpec::Piecewise { segments } => make_piecewise_uniform(segments)?,
        DistSpec::Fitted { platform } => fitted(fits, platform)?,
    })
}

fn fitted(fits: &[FittedDist], id: &str) -> Result<TimeDist> {
    if fits.is_empty() {
        return Err(CliError::Usage(format!("platform `{id}` needs a fitted bundle (--bundle)")));
    }
    fits.iter()
        .find(|f| f.platform_id == id)
        .map(|f| f.dist.clone())
        .ok_or_else(|| CliError::Usage(format!("platform `{id}` is not in the bundle")))
}

fn homogeneous(name: &str, d: TimeDist, n: usize) -> Result<Scenario> {
    Ok(Scenario {
        name: name.to_string(),
        profile: DistProfile::homogeneous(d, n)?,
        mechanisms: vec![MechKind::Pvm, MechKind::Lcm],
        lcm_delays: None,
    })
}

/// The laws cycled through by `hetero-mix-n<k>`.
pub fn hetero_mix(n: usize) -> Result<DistProfile> {
    let pool = [
        make_uniform(-1.0, 0.0)?,
        make_linear(),
        make_fm_family(4.0)?,
        make_uniform(-2.0, -0.3)?,
        make_exponential(1.5, 0.0)?,
    ];
    Ok(DistProfile::new(pool.iter().cycle().take(n).cloned().collect())?)
}

fn family(fam: &str, fits: &[FittedDist]) -> Result<Option<TimeDist>> {
    Ok(Some(match fam {
        "uniform" => make_uniform(-1.0, 0.0)?,
        "linear" => make_linear(),
        "exp" => make_exponential(1.0, 0.0)?,
        _ => {
            if let Some(id) = fam.strip_prefix("fitted:") {
                fitted(fits, id)?
            } else if let Some(m) = fam.strip_prefix("fm").and_then(|m| m.parse::<f64>().ok()) {
                make_fm_family(m)?
            } else {
                return Ok(None);
            }
        }
    }))
}

fn parse_n(s: &str, name: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|_| CliError::UnknownScenario(name.to_string()))
}

pub fn resolve_named(name: &str, fits: &[FittedDist]) -> Result<Vec<Scenario>> {
    match name {
        "tight-pair" => {
            let inst = build_pvm_tight_pair();
            return Ok(vec![Scenario {
                name: name.into(),
                profile: inst.profile,
                mechanisms: vec![MechKind::Pvm, MechKind::Lcm],
                lcm_delays: None,
            }]);
        }
        "collapse" => return collapse(name, 0.01, 2).map(|s| vec![s]),
        "protocol" => return protocol(fits),
        _ => {}
    }
    if let Some(rest) = name.strip_prefix("pair:") {
        let (a, b) = rest.split_once('+').ok_or_else(|| CliError::UnknownScenario(name.into()))?;
        return Ok(vec![Scenario {
            name: name.into(),
            profile: DistProfile::new(vec![fitted(fits, a)?, fitted(fits, b)?])?,
            mechanisms: vec![MechKind::Pvm, MechKind::Lcm],
            lcm_delays: None,
        }]);
    }
    let (head, n) = name.rsplit_once("-n").ok_or_else(|| CliError::UnknownScenario(name.into()))?;
    let n = parse_n(n, name)?;
    if let Some(eps) = head.strip_prefix("collapse-") {
        let eps = eps.parse::<f64>().map_err(|_| CliError::UnknownScenario(name.into()))?;
        return collapse(name, eps, n).map(|s| vec![s]);
    }
    if head == "hetero-mix" {
        return Ok(vec![Scenario {
            name: name.into(),
            profile: hetero_mix(n)?,
            mechanisms: vec![MechKind::Pvm, MechKind::Lcm, MechKind::Tree],
            lcm_delays: None,
        }]);
    }
    match family(head, fits)? {
        Some(d) => Ok(vec![homogeneous(name, d, n)?]),
        None => Err(CliError::UnknownScenario(name.into())),
    }
}

fn collapse(name: &str, eps: f64, n: usize) -> Result<Scenario> {
    let inst = build_hetero_collapse(eps, n)?;
    let delays = inst.certified_delays.ok_or_else(|| {
        CliError::Core(Error::NoEquilibrium(format!(
            "collapse delays (2, 0, ..., 0) are not an LCM equilibrium for eps={eps}, n={n}"
        )))
    })?;
    Ok(Scenario {
        name: name.into(),
        profile: inst.profile,
        mechanisms: vec![MechKind::Pvm, MechKind::Lcm],
        lcm_delays: Some(delays),
    })
}

/// Homogeneous `n = 2..=5` for every fitted platform, then all pairs.
pub fn protocol(fits: &[FittedDist]) -> Result<Vec<Scenario>> {
    if fits.is_empty() {
        return Err(CliError::Usage("`protocol` needs a fitted bundle (--bundle)".into()));
    }
    let mut out = Vec::new();
    for f in fits {
        for n in 2..=5 {
            out.push(homogeneous(&format!("fitted:{}-n{n}", f.platform_id), f.dist.clone(), n)?);
        }
    }
    for (a, fa) in fits.iter().enumerate() {
        for fb in &fits[a + 1..] {
            out.push(Scenario {
                name: format!("pair:{}+{}", fa.platform_id, fb.platform_id),
                profile: DistProfile::new(vec![fa.dist.clone(), fb.dist.clone()])?,
                mechanisms: vec![MechKind::Pvm, MechKind::Lcm],
                lcm_delays: None,
            });
        }
    }
    Ok(out)
}

pub fn resolve_inline(spec: &ScenarioSpec, fits: &[FittedDist]) -> Result<Scenario> {
    let dists: Vec<TimeDist> = spec.platforms.iter().map(|d| build_dist(d, fits)).collect::<Result<_>>()?;
    let profile = match (dists.len(), spec.n) {
        (1, Some(n)) => DistProfile::homogeneous(dists.into_iter().next().unwrap(), n)?,
        (k, Some(n)) if k != n => {
            return Err(CliError::Usage(format!("scenario `{}`: {k} platforms but n = {n}", spec.name)))
        }
        _ => DistProfile::new(dists)?,
    };
    if let Some(d) = &spec.lcm_delays {
        if d.len() != profile.n() {
            return Err(CliError::Usage(format!("scenario `{}`: lcm_delays needs {} entries", spec.name, profile.n())));
        }
    }
    if spec.mechanisms.is_empty() {
        return Err(CliError::Usage(format!("scenario `{}` lists no mechanisms", spec.name)));
    }
    Ok(Scenario {
        name: spec.name.clone(),
        profile,
        mechanisms: spec.mechanisms.clone(),
        lcm_delays: spec.lcm_delays.clone(),
    })
}

pub fn resolve(r: &ScenarioRef, fits: &[FittedDist]) -> Result<Vec<Scenario>> {
    match r {
        ScenarioRef::Named(name) => resolve_named(name, fits),
        ScenarioRef::Inline(spec) => resolve_inline(spec, fits).map(|s| vec![s]),
    }
}

pub fn build_mechanism(kind: MechKind, profile: &DistProfile) -> Result<Box<dyn Mechanism>> {
    Ok(match kind {
        MechKind::Pvm => Box::new(Pvm::new(profile)?),
        MechKind::Lcm => Box::new(Lcm),
        MechKind::Tree => Box::new(TreeMechanism::new(profile)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve() {
        for name in ["uniform-n3", "linear-n2", "fm10-n2", "exp-n4", "hetero-mix-n5", "tight-pair", "collapse"] {
            let s = resolve_named(name, &[]).unwrap();
            assert_eq!(s.len(), 1, "{name}");
        }
        assert_eq!(resolve_named("fm10-n2", &[]).unwrap()[0].profile.n(), 2);
        assert!(matches!(resolve_named("bogus", &[]), Err(CliError::UnknownScenario(_))));
        assert!(matches!(resolve_named("fitted:A-n2", &[]), Err(CliError::Usage(_))));
        assert_eq!(resolve_named("collapse", &[]).unwrap()[0].lcm_delays, Some(vec![2.0, 0.0]));
    }

    #[test]
    fn inline_shapes() {
        let spec = ScenarioSpec {
            name: "x".into(),
            mechanisms: vec![MechKind::Pvm],
            platforms: vec![DistSpec::Uniform { lo: -2.0, hi: 0.0 }, DistSpec::Linear],
            n: None,
            lcm_delays: None,
        };
        assert_eq!(resolve_inline(&spec, &[]).unwrap().profile.n(), 2);
        let bad = ScenarioSpec { n: Some(3), ..spec.clone() };
        assert!(resolve_inline(&bad, &[]).is_err());
        let homog = ScenarioSpec { platforms: vec![DistSpec::Linear], n: Some(4), ..spec };
        assert!(resolve_inline(&homog, &[]).unwrap().profile.is_homogeneous());
    }
}
