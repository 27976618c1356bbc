//! Synthetic vector structures, e.g. `density=0.1,mode=prefix` to mark the
//! first 10% of positions nonzero.

use super::LoadedStructure;
use crate::error::{Error, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthMode {
    /// The first `ceil(density * len)` indices are nonzero.
    #[default]
    Prefix,
    /// A seeded uniform sample of `ceil(density * len)` indices.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub density: f64,
    pub mode: SynthMode,
}

impl SynthSpec {
    /// Parses `density=0.1,mode=prefix` style specs.
    pub fn parse(spec: &str) -> Result<SynthSpec> {
        let mut density = None;
        let mut mode = SynthMode::Prefix;
        for part in spec.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("bad synth spec fragment `{part}`")))?;
            match key.trim() {
                "density" => {
                    let d: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::Usage(format!("bad density `{value}`")))?;
                    if !(0.0..=1.0).contains(&d) {
                        return Err(Error::Usage(format!("density {d} outside [0, 1]")));
                    }
                    density = Some(d);
                }
                "mode" => {
                    mode = match value.trim() {
                        "prefix" => SynthMode::Prefix,
                        "random" => SynthMode::Random,
                        other => return Err(Error::Usage(format!("unknown synth mode `{other}`"))),
                    };
                }
                other => return Err(Error::Usage(format!("unknown synth key `{other}`"))),
            }
        }
        let density = density.ok_or_else(|| Error::Usage("synth spec needs `density=`".into()))?;
        Ok(SynthSpec { density, mode })
    }
}

/// Builds a 1-D structure of length `len` per `spec`.
pub fn synth_vector(len: i64, spec: &SynthSpec, seed: u64) -> Result<LoadedStructure> {
    if len < 0 {
        return Err(Error::Structure(format!("negative vector length {len}")));
    }
    let count = ((spec.density * len as f64).ceil() as i64).min(len).max(0);
    let mut set = BTreeMap::new();
    match spec.mode {
        SynthMode::Prefix => {
            for i in 0..count {
                set.insert(vec![i], None);
            }
        }
        SynthMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in sample(&mut rng, len as usize, count as usize) {
                set.insert(vec![i as i64], None);
            }
        }
    }
    Ok(LoadedStructure {
        dims: vec![len],
        set,
    })
}
