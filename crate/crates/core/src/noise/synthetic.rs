//! Synthetic noisy label sets by random neighbour label transfer.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::loss::one_hot_classes;
use crate::tensor::Matrix;

#[derive(Debug, Clone)]
pub struct SyntheticLabelSet {
    /// One `[k x c]` one-hot matrix per variant.
    pub variants: Vec<Matrix>,
    /// Batch positions whose label was replaced, ascending, per variant.
    pub replaced_indices: Vec<Vec<usize>>,
    /// Batch position of the neighbour each replacement was copied from,
    /// aligned with `replaced_indices`.
    pub sources: Vec<Vec<usize>>,
}

impl SyntheticLabelSet {
    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }
}

/// Number of replaced positions for a batch of `k` given a fraction of `k`.
pub fn rho_from_fraction(fraction: f64, k: usize) -> usize {
    ((fraction * k as f64).floor() as usize).min(k)
}

/// Build `m` variants of `y`: in each, `rho` distinct positions take the
/// original label of a uniformly chosen neighbour from `neighbors`.
pub fn generate_synthetic_labels<R: Rng + ?Sized>(
    y: &Matrix,
    neighbors: &[Vec<usize>],
    rho: usize,
    m: usize,
    rng: &mut R,
) -> Result<SyntheticLabelSet> {
    let k = y.rows();
    let classes = one_hot_classes(y)?;
    if rho > k {
        return Err(Error::Input(format!("rho = {rho} exceeds batch size {k}")));
    }
    if neighbors.len() != k {
        return Err(Error::Dimension(format!(
            "{} neighbour lists for a batch of {k}",
            neighbors.len()
        )));
    }
    if rho > 0 {
        if let Some(i) = neighbors.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!(
                "sample at batch position {i} has no neighbours to borrow a label from"
            )));
        }
    }

    let mut set = SyntheticLabelSet {
        variants: Vec::with_capacity(m),
        replaced_indices: Vec::with_capacity(m),
        sources: Vec::with_capacity(m),
    };
    for _ in 0..m {
        let mut chosen = sample(rng, k, rho).into_vec();
        chosen.sort_unstable();
        let mut labels = classes.clone();
        let mut sources = Vec::with_capacity(rho);
        for &i in &chosen {
            let pool = &neighbors[i];
            let j = pool[rng.random_range(0..pool.len())];
            labels[i] = classes[j];
            sources.push(j);
        }
        set.variants.push(Matrix::one_hot(&labels, y.cols())?);
        set.replaced_indices.push(chosen);
        set.sources.push(sources);
    }
    Ok(set)
}
