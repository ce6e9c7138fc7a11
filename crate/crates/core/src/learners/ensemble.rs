use rand::Rng;
use rayon::prelude::*;

use super::tree::{fit_tree, FeatureSampler, TreeModel, TreeParams};
use super::{member_rng, TrainingData};
use crate::model::argmax_first;

/// Trees voting with equal weight; confidences are vote shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<TreeModel>,
    pub n_classes: usize,
}

impl Ensemble {
    pub fn from_members(members: Vec<TreeModel>, n_classes: usize) -> Self {
        Ensemble { members, n_classes }
    }

    /// Fits `iters` trees, each on a bootstrap resample of `rows` of the same
    /// size. With `mtry`, every node considers a fresh uniform sample of that
    /// many features (random forest). Member `i` draws from stream `i` of
    /// `seed`, so the result does not depend on thread scheduling.
    pub fn bagging(
        data: &TrainingData,
        rows: &[usize],
        params: &TreeParams,
        iters: usize,
        mtry: Option<usize>,
        seed: u64,
    ) -> Self {
        let members = (0..iters)
            .into_par_iter()
            .map(|i| {
                let mut rng = member_rng(seed, i as u64);
                let n = rows.len();
                let boot: Vec<usize> = (0..n).map(|_| rows[rng.random_range(0..n)]).collect();
                let sampler = mtry.map(|mtry| FeatureSampler { mtry, rng: &mut rng });
                fit_tree(data, &boot, params, sampler)
            })
            .collect();
        Ensemble { members, n_classes: data.n_classes }
    }

    pub fn votes(&self, data: &TrainingData, row: usize) -> Vec<u32> {
        let mut votes = vec![0u32; self.n_classes];
        for m in &self.members {
            votes[m.predict(data, row)] += 1;
        }
        votes
    }

    pub fn predict_proba(&self, data: &TrainingData, row: usize) -> Vec<f64> {
        let total = self.members.len() as f64;
        self.votes(data, row).into_iter().map(|v| f64::from(v) / total).collect()
    }
}

/// Predicts the most frequent training class everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Majority {
    pub class: usize,
    pub confidences: Vec<f64>,
}

impl Majority {
    pub fn fit(data: &TrainingData, rows: &[usize]) -> Self {
        let mut counts = vec![0u32; data.n_classes];
        for &r in rows {
            counts[data.labels[r]] += 1;
        }
        let n = rows.len() as f64;
        let confidences: Vec<f64> = counts.iter().map(|&c| f64::from(c) / n).collect();
        Majority { class: argmax_first(&confidences).unwrap_or(0), confidences }
    }
}
