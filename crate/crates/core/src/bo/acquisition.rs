use std::collections::BTreeSet;

use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::forest::Forest;
use crate::error::Result;
use crate::space::{Configuration, Granularity, Param, SearchSpace};

/// Expected improvement below `best` of a Normal(mean, variance) prediction.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    let gap = best - mean;
    if sigma == 0.0 {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    let std = Normal::standard();
    (gap * std.cdf(z) + sigma * std.pdf(z)).max(0.0)
}

/// Draws candidates from a search space without re-deriving its parameter
/// list on every draw.
pub struct CandidateSampler<'a> {
    pub space: &'a SearchSpace,
    pub params: Vec<Param>,
    categorical: Vec<bool>,
    /// Encoded parameter segments of every tiny value, per dimension.
    tiny: Vec<Vec<Vec<f64>>>,
}

impl<'a> CandidateSampler<'a> {
    pub fn new(space: &'a SearchSpace) -> Result<Self> {
        let params = space.params();
        let categorical = params.iter().map(|p| p.domain.is_categorical()).collect();
        let mut tiny = Vec::new();
        if space.granularity == Granularity::Tiny {
            let choices = space.tiny_choices();
            let mut offset = 0;
            for (d, (dim, c)) in space.dims.iter().zip(&choices).enumerate() {
                let width = params.iter().filter(|p| p.knob == dim.knob_name).count();
                let mut idx = vec![0; choices.len()];
                let mut segs = Vec::with_capacity(c.len());
                for j in 0..c.len() {
                    idx[d] = j;
                    segs.push(space.tiny_point(&idx)?.0[offset..offset + width].to_vec());
                }
                tiny.push(segs);
                offset += width;
            }
        }
        Ok(CandidateSampler {
            space,
            params,
            categorical,
            tiny,
        })
    }

    pub fn categorical(&self) -> &[bool] {
        &self.categorical
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        match self.space.granularity {
            Granularity::Tiny => {
                let mut x = Vec::with_capacity(self.params.len());
                for segs in &self.tiny {
                    x.extend_from_slice(&segs[rng.random_range(0..segs.len())]);
                }
                Configuration(x)
            }
            Granularity::Full => {
                let mut x: Vec<f64> = self.params.iter().map(|p| p.domain.sample(rng)).collect();
                self.space.canonicalize(&self.params, &mut x);
                Configuration(x)
            }
        }
    }

    pub fn features(&self, config: &Configuration) -> Vec<f64> {
        self.space.features(&self.params, config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuggestOptions {
    /// Random draws from the space.
    pub candidates: usize,
    /// One-exchange neighbours of the incumbent.
    pub neighbours: usize,
}

impl Default for SuggestOptions {
    fn default() -> Self {
        SuggestOptions {
            candidates: 2000,
            neighbours: 50,
        }
    }
}

/// Bit pattern of a configuration, for exact duplicate checks.
pub fn config_key(c: &Configuration) -> Vec<u64> {
    c.0.iter().map(|x| x.to_bits()).collect()
}

/// The candidate with the highest expected improvement, among random draws
/// followed by neighbours of `incumbent`. Ties go to the earliest draw.
/// Candidates in `seen` are only chosen when every candidate was seen.
pub fn suggest<R: Rng + ?Sized>(
    forest: &Forest,
    sampler: &CandidateSampler,
    best: f64,
    incumbent: Option<&Configuration>,
    seen: &BTreeSet<Vec<u64>>,
    opts: SuggestOptions,
    rng: &mut R,
) -> Result<Configuration> {
    let mut candidates: Vec<Configuration> = (0..opts.candidates.max(1)).map(|_| sampler.sample(rng)).collect();
    if let Some(inc) = incumbent {
        candidates.extend(sampler.space.neighbours(inc, opts.neighbours, rng));
    }
    let mut best_any: Option<(f64, usize)> = None;
    let mut best_new: Option<(f64, usize)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let (mean, var) = forest.predict(&sampler.features(c))?;
        let ei = expected_improvement(mean, var, best);
        if best_any.is_none_or(|(b, _)| ei > b) {
            best_any = Some((ei, i));
        }
        if best_new.is_none_or(|(b, _)| ei > b) && !seen.contains(&config_key(c)) {
            best_new = Some((ei, i));
        }
    }
    let (_, i) = best_new.or(best_any).expect("at least one candidate");
    Ok(candidates.swap_remove(i))
}
