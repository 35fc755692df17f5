//! Synthetic click logs standing in for real platform data.

use std::io::Write;
use std::path::{Path, PathBuf};

use attribution_core::sim::stream_rng;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{CliError, Result};

/// Seconds between click and conversion: with probability `weight` a draw
/// from Gamma `first`, otherwise from Gamma `second` (`(shape, scale)` pairs).
#[derive(Debug, Clone, Copy)]
pub struct SynthPlatform {
    pub id: &'static str,
    pub weight: f64,
    pub first: (f64, f64),
    pub second: (f64, f64),
}

/// Mixtures matched to four click-time profiles: median near -32 s, most
/// mass in [-60, -15] s, and a thin but non-vanishing share of clicks in the
/// last 15 s. Shapes stay above 1 so the density tends to zero at the
/// conversion.
pub const PLATFORMS: [SynthPlatform; 4] = [
    SynthPlatform { id: "A", weight: 0.1747, first: (5.2527, 4.0), second: (9.4879, 4.0) },
    SynthPlatform { id: "B", weight: 0.2599, first: (3.0886, 7.19), second: (8.1194, 4.4861) },
    SynthPlatform { id: "C", weight: 0.3277, first: (2.3726, 7.9484), second: (9.3613, 4.0) },
    SynthPlatform { id: "D", weight: 0.0679, first: (1.5, 4.0), second: (5.6598, 6.2229) },
];

/// Writes `<id>.csv` for each platform into `dir`: a `timestamp` header and
/// `rows` negated mixture draws. Draws older than 100 s are written too; the
/// fit drops them.
pub fn cmd_synth(dir: &Path, rows: usize, seed: u64) -> Result<Vec<PathBuf>> {
    if rows == 0 {
        return Err(CliError::Usage("need at least one row per log".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (k, p) in PLATFORMS.iter().enumerate() {
        let gamma = |(shape, scale): (f64, f64)| Gamma::new(shape, scale).map_err(|e| CliError::Usage(e.to_string()));
        let (g1, g2) = (gamma(p.first)?, gamma(p.second)?);
        let mut rng = stream_rng(seed, k as u64);
        let path = dir.join(format!("{}.csv", p.id));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "timestamp")?;
        for _ in 0..rows {
            let t: f64 = if rng.random::<f64>() < p.weight { g1.sample(&mut rng) } else { g2.sample(&mut rng) };
            writeln!(w, "{}", -t)?;
        }
        w.flush()?;
        out.push(path);
    }
    Ok(out)
}
