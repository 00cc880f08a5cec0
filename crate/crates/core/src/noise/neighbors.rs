//! Feature index over a pre-trained network's logits and in-batch kNN.

use std::collections::HashMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{forward, Matrix, MlpSpec, ParamSet};

pub const DEFAULT_NEIGHBORS: usize = 10;

/// One pre-softmax feature row per training sample.
#[derive(Debug, Clone)]
pub struct FeatureIndex {
    features: Matrix,
    sample_ids: Vec<u64>,
    position: HashMap<u64, usize>,
}

impl FeatureIndex {
    pub fn new(features: Matrix, sample_ids: Vec<u64>) -> Result<Self> {
        if features.rows() != sample_ids.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows for {} samples",
                features.rows(),
                sample_ids.len()
            )));
        }
        if !features.all_finite() {
            return Err(Error::Numeric("feature index contains non-finite entries".into()));
        }
        let mut position = HashMap::with_capacity(sample_ids.len());
        for (i, &id) in sample_ids.iter().enumerate() {
            if position.insert(id, i).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self {
            features,
            sample_ids,
            position,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn sample_ids(&self) -> &[u64] {
        &self.sample_ids
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn row_of(&self, id: u64) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn covers(&self, ids: &[u64]) -> bool {
        ids.iter().all(|id| self.position.contains_key(id))
    }
}

/// Logits of `pretrained` for every sample of `dataset`.
pub fn build_feature_index(dataset: &Dataset, spec: &MlpSpec, pretrained: &ParamSet) -> Result<FeatureIndex> {
    let (cache, _) = forward(spec, pretrained, dataset.features())?;
    FeatureIndex::new(cache.logits().clone(), dataset.ids().to_vec())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For each batch member, positions (within the batch) of its `k` nearest
/// other members by Euclidean feature distance. Ties go to the lower
/// index row; with fewer than `k` others, all of them are returned.
pub fn topk_neighbors(index: &FeatureIndex, batch_ids: &[u64], k: usize) -> Result<Vec<Vec<usize>>> {
    let rows: Vec<usize> = batch_ids
        .iter()
        .map(|&id| {
            index
                .row_of(id)
                .ok_or_else(|| Error::Input(format!("sample {id} missing from the feature index")))
        })
        .collect::<Result<_>>()?;

    let n = rows.len();
    let mut out = Vec::with_capacity(n);
    let mut scratch: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    for (i, &ri) in rows.iter().enumerate() {
        scratch.clear();
        let fi = index.features.row(ri);
        for (j, &rj) in rows.iter().enumerate() {
            if j != i {
                scratch.push((squared_distance(fi, index.features.row(rj)), rj, j));
            }
        }
        let take = k.min(scratch.len());
        let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        };
        if take > 0 && take < scratch.len() {
            scratch.select_nth_unstable_by(take - 1, cmp);
        }
        scratch.truncate(take);
        scratch.sort_unstable_by(cmp);
        out.push(scratch.iter().map(|&(_, _, j)| j).collect());
    }
    Ok(out)
}
