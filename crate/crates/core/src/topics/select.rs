use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_lda, topic_similarity, FitParams, TopicModel};
use crate::error::{Error, Result};
use crate::matrix::DocTermMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCandidate {
    pub k: usize,
    /// Absent when the range is a single value and no sweep was run.
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSweepResult {
    pub candidates: Vec<SweepCandidate>,
    pub chosen_k: usize,
}

/// Seed for the fit at `k` within a sweep.
pub fn sweep_seed(seed: u64, k: usize) -> u64 {
    seed ^ k as u64
}

fn check_range(k_min: usize, k_max: usize) -> Result<()> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidArgument(format!("invalid topic range {k_min}..{k_max}")));
    }
    if k_min < k_max && k_min < 2 {
        return Err(Error::InvalidArgument("a topic sweep needs k_min >= 2".into()));
    }
    Ok(())
}

/// Chooses k in `[k_min, k_max]` minimising mean pairwise topic similarity
/// (ties go to the smaller k). A single-value range is returned without fitting.
pub fn select_topic_count(
    matrix: &DocTermMatrix,
    k_min: usize,
    k_max: usize,
    params: &FitParams,
) -> Result<TopicSweepResult> {
    check_range(k_min, k_max)?;
    if k_min == k_max {
        return Ok(TopicSweepResult {
            candidates: vec![SweepCandidate { k: k_min, similarity: None }],
            chosen_k: k_min,
        });
    }
    sweep_topic_counts(matrix, k_min, k_max, params).map(|(r, _)| r)
}

/// Fits every k in the range (in parallel; each fit seeded with `seed ^ k`) and
/// returns the sweep summary together with the fitted models in k order.
pub fn sweep_topic_counts(
    matrix: &DocTermMatrix,
    k_min: usize,
    k_max: usize,
    params: &FitParams,
) -> Result<(TopicSweepResult, Vec<TopicModel>)> {
    check_range(k_min, k_max)?;
    let models: Vec<TopicModel> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            fit_lda(
                matrix,
                k,
                &FitParams {
                    seed: sweep_seed(params.seed, k),
                    ..*params
                },
            )
        })
        .collect::<Result<_>>()?;

    let mut candidates = Vec::with_capacity(models.len());
    let mut best: Option<(usize, f64)> = None;
    for model in &models {
        let similarity = if model.k >= 2 {
            Some(topic_similarity(model)?)
        } else {
            None
        };
        if let Some(s) = similarity {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((model.k, s));
            }
        }
        candidates.push(SweepCandidate { k: model.k, similarity });
    }
    let chosen_k = best.map(|(k, _)| k).unwrap_or(k_min);
    Ok((TopicSweepResult { candidates, chosen_k }, models))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> DocTermMatrix {
        let rows = (0..30)
            .map(|d| {
                let base = (d % 3) * 4;
                (0..4).map(|t| ((base + t) as u32, 3)).collect()
            })
            .collect();
        DocTermMatrix::from_rows(
            (0..30).map(|d| format!("d{d:02}")).collect(),
            (0..12).map(|t| format!("w{t:02}")).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn singleton_range_skips_sweep() {
        let r = select_topic_count(&corpus(), 7, 7, &FitParams::default()).unwrap();
        assert_eq!(r.chosen_k, 7);
        assert_eq!(r.candidates, vec![SweepCandidate { k: 7, similarity: None }]);
    }

    #[test]
    fn candidate_count_matches_range() {
        let params = FitParams { iterations: 20, ..Default::default() };
        let r = select_topic_count(&corpus(), 2, 5, &params).unwrap();
        assert_eq!(r.candidates.len(), 4);
        let min = r
            .candidates
            .iter()
            .map(|c| c.similarity.unwrap())
            .fold(f64::INFINITY, f64::min);
        let chosen = r.candidates.iter().find(|c| c.k == r.chosen_k).unwrap();
        assert_eq!(chosen.similarity.unwrap(), min);
        let first_min = r.candidates.iter().find(|c| c.similarity.unwrap() == min).unwrap();
        assert_eq!(first_min.k, r.chosen_k);
    }

    #[test]
    fn sweep_models_match_individual_fits() {
        let params = FitParams { iterations: 15, seed: 100, ..Default::default() };
        let (_, models) = sweep_topic_counts(&corpus(), 2, 4, &params).unwrap();
        let solo = fit_lda(&corpus(), 3, &FitParams { seed: 100 ^ 3, ..params }).unwrap();
        assert_eq!(models[1], solo);
    }

    #[test]
    fn invalid_ranges() {
        let p = FitParams::default();
        assert!(select_topic_count(&corpus(), 0, 3, &p).is_err());
        assert!(select_topic_count(&corpus(), 4, 3, &p).is_err());
        assert!(select_topic_count(&corpus(), 1, 3, &p).is_err());
    }
}
