//! Navigation metrics: success rate and success weighted by path length.

use crate::topo::EpisodeResult;
use crate::world::SceneCategory;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric over an empty result set")]
    Empty,
}

/// Fraction of successful episodes.
pub fn success_rate(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let successes = results.iter().filter(|r| r.success()).count();
    Ok(successes as f64 / results.len() as f64)
}

fn episode_spl(r: &EpisodeResult) -> f64 {
    if !r.success() {
        return 0.0;
    }
    if r.shortest_length <= 1e-12 || !r.shortest_length.is_finite() {
        // start-at-goal convention: a success with no distance to cover
        // contributes ratio 1
        return 1.0;
    }
    r.shortest_length / r.path_length.max(r.shortest_length)
}

/// Mean over episodes of success * shortest / max(path, shortest).
pub fn spl(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(results.iter().map(episode_spl).sum::<f64>() / results.len() as f64)
}

/// Aggregate metrics with a per-category breakdown.
#[derive(Debug, Clone)]
pub struct Metrics {
    pub sr: f64,
    pub spl: f64,
    pub n: usize,
    pub per_category: Vec<(SceneCategory, f64, f64, usize)>,
}

impl Metrics {
    pub fn compute(results: &[(SceneCategory, EpisodeResult)]) -> Result<Self, MetricsError> {
        let all: Vec<EpisodeResult> = results.iter().map(|(_, r)| r.clone()).collect();
        let sr = success_rate(&all)?;
        let spl_v = spl(&all)?;
        let mut per_category = Vec::new();
        for cat in SceneCategory::ALL {
            let sub: Vec<EpisodeResult> = results
                .iter()
                .filter(|(c, _)| *c == cat)
                .map(|(_, r)| r.clone())
                .collect();
            if !sub.is_empty() {
                per_category.push((cat, success_rate(&sub)?, spl(&sub)?, sub.len()));
            }
        }
        Ok(Self {
            sr,
            spl: spl_v,
            n: all.len(),
            per_category,
        })
    }
}
