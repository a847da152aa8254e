//! Batch runners over seed lists. Results never depend on parallelism.

use rayon::prelude::*;
use serde::Serialize;

use super::{run, EngineError, RunMetrics};
use crate::config::Scenario;

/// Runs every seed, in parallel when asked; output order follows `seeds`.
pub fn sweep(
    scenario: &Scenario,
    seeds: &[u64],
    duration: f64,
    parallel: bool,
) -> Result<Vec<RunMetrics>, EngineError> {
    let one = |&seed: &u64| run(scenario, seed, duration).map(|o| o.metrics);
    if parallel {
        seeds.par_iter().map(one).collect()
    } else {
        seeds.iter().map(one).collect()
    }
}

/// Paired comparison of knowledge-ranked against id-ordered channel choice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningComparison {
    pub seeds: Vec<u64>,
    pub failure_rate_on: Vec<Option<f64>>,
    pub failure_rate_off: Vec<Option<f64>>,
    /// Seeds where both arms negotiated at least once.
    pub pairs: usize,
    pub mean_on: Option<f64>,
    pub mean_off: Option<f64>,
    /// Mean of `off - on` over the pairs; positive means learning helped.
    pub mean_difference: Option<f64>,
    pub difference_se: Option<f64>,
}

pub fn compare_learning(
    scenario: &Scenario,
    seeds: &[u64],
    duration: f64,
    parallel: bool,
) -> Result<LearningComparison, EngineError> {
    let rates = |s: &Scenario| -> Result<Vec<Option<f64>>, EngineError> {
        Ok(sweep(s, seeds, duration, parallel)?
            .into_iter()
            .map(|m| m.negotiation_failure_rate)
            .collect())
    };
    let on = rates(&scenario.with_learning(true))?;
    let off = rates(&scenario.with_learning(false))?;

    let paired: Vec<(f64, f64)> = on
        .iter()
        .zip(&off)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    let n = paired.len();
    let mean = |xs: &mut dyn Iterator<Item = f64>| -> Option<f64> {
        (n > 0).then(|| xs.sum::<f64>() / n as f64)
    };
    let mean_on = mean(&mut paired.iter().map(|p| p.0));
    let mean_off = mean(&mut paired.iter().map(|p| p.1));
    let mean_difference = mean(&mut paired.iter().map(|p| p.1 - p.0));
    let difference_se = mean_difference.filter(|_| n > 1).map(|d| {
        let ss: f64 = paired.iter().map(|p| (p.1 - p.0 - d).powi(2)).sum();
        (ss / (n as f64 - 1.0) / n as f64).sqrt()
    });
    Ok(LearningComparison {
        seeds: seeds.to_vec(),
        failure_rate_on: on,
        failure_rate_off: off,
        pairs: n,
        mean_on,
        mean_off,
        mean_difference,
        difference_se,
    })
}
