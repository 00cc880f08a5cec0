//! Reference implementations used as oracles by the integration tests.
//! Everything here is written with plain scalar loops and shares no numeric
//! code with the library beyond the parameter containers.

#![allow(dead_code)]

use mlnt::tensor::{Activation, Matrix, MlpSpec, ParamSet};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => z.max(0.0),
        Activation::Tanh => z.tanh(),
    }
}

pub fn act_grad(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - z.tanh().powi(2),
    }
}

/// Per-layer pre-activations and activations for one input row.
pub struct Trace {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

pub fn ref_forward_row(activation: Activation, params: &ParamSet, x: &[f64]) -> Trace {
    let layers = params.layers();
    let mut post = vec![x.to_vec()];
    let mut pre = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let input = post.last().unwrap().clone();
        let (out, inp) = layer.weight.shape();
        let mut z = vec![0.0; out];
        for o in 0..out {
            let mut s = layer.bias[o];
            for i in 0..inp {
                s += layer.weight.get(o, i) * input[i];
            }
            z[o] = s;
        }
        let a = if l + 1 < layers.len() {
            z.iter().map(|&v| act(activation, v)).collect()
        } else {
            z.clone()
        };
        pre.push(z);
        post.push(a);
    }
    Trace { pre, post }
}

pub fn ref_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn ref_probs(activation: Activation, params: &ParamSet, x: &Matrix) -> Vec<Vec<f64>> {
    x.iter_rows()
        .map(|row| ref_softmax(ref_forward_row(activation, params, row).pre.last().unwrap()))
        .collect()
}

pub fn ref_ce(activation: Activation, params: &ParamSet, x: &Matrix, labels: &[usize]) -> f64 {
    let p = ref_probs(activation, params, x);
    p.iter()
        .zip(labels)
        .map(|(row, &y)| -row[y].max(1e-12).ln())
        .sum::<f64>()
        / labels.len() as f64
}

/// Mean over rows of KL(target || f(x)).
pub fn ref_kl(activation: Activation, params: &ParamSet, x: &Matrix, target: &[Vec<f64>]) -> f64 {
    let p = ref_probs(activation, params, x);
    let mut total = 0.0;
    for (q, s) in target.iter().zip(&p) {
        for (&qi, &si) in q.iter().zip(s) {
            if qi > 0.0 {
                total += qi * (qi.max(1e-12).ln() - si.max(1e-12).ln());
            }
        }
    }
    total / target.len() as f64
}

/// Backprop of mean cross entropy, one row at a time.
pub fn ref_ce_grad(activation: Activation, params: &ParamSet, x: &Matrix, labels: &[usize]) -> ParamSet {
    let mut grad = params.clone();
    grad.scale(0.0);
    let k = labels.len() as f64;
    let n_layers = params.layers().len();
    for (row, &y) in x.iter_rows().zip(labels) {
        let t = ref_forward_row(activation, params, row);
        let p = ref_softmax(t.pre.last().unwrap());
        let mut delta: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(j, &pj)| (pj - if j == y { 1.0 } else { 0.0 }) / k)
            .collect();
        for l in (0..n_layers).rev() {
            let input = &t.post[l];
            let layer = &params.layers()[l];
            let (out, inp) = layer.weight.shape();
            {
                let g = &mut grad.layers_mut()[l];
                for o in 0..out {
                    g.bias[o] += delta[o];
                    for i in 0..inp {
                        let v = g.weight.get(o, i) + delta[o] * input[i];
                        g.weight.set(o, i, v);
                    }
                }
            }
            if l > 0 {
                let mut next = vec![0.0; inp];
                for (i, n) in next.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for o in 0..out {
                        s += layer.weight.get(o, i) * delta[o];
                    }
                    *n = s * act_grad(activation, t.pre[l - 1][i]);
                }
                delta = next;
            }
        }
    }
    grad
}

/// Central differences over every parameter, perturbing a flat copy.
pub fn ref_fd(spec: &MlpSpec, params: &ParamSet, eps: f64, loss: impl Fn(&ParamSet) -> f64) -> Vec<f64> {
    let flat = params.to_flat();
    (0..flat.len())
        .map(|i| {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[i] += eps;
            minus[i] -= eps;
            let lp = loss(&ParamSet::from_flat(spec, &plus).unwrap());
            let lm = loss(&ParamSet::from_flat(spec, &minus).unwrap());
            (lp - lm) / (2.0 * eps)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub struct RandomNet {
    pub spec: MlpSpec,
    pub params: ParamSet,
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub y: Matrix,
    /// Random soft targets (strictly positive rows).
    pub target: Vec<Vec<f64>>,
}

/// A random MLP with `weight_layers` dense layers, a batch of inputs, hard
/// labels and soft targets.
pub fn random_net<R: Rng>(rng: &mut R, weight_layers: usize, activation: Activation, batch: usize) -> RandomNet {
    let mut sizes = vec![rng.random_range(1..=5)];
    for _ in 1..weight_layers {
        sizes.push(rng.random_range(2..=6));
    }
    let classes = rng.random_range(2..=5);
    sizes.push(classes);
    let spec = MlpSpec::new(sizes.clone(), activation).unwrap();
    let normal = Normal::new(0.0, 0.8).unwrap();
    let flat: Vec<f64> = (0..spec.num_params()).map(|_| normal.sample(rng)).collect();
    let params = ParamSet::from_flat(&spec, &flat).unwrap();
    let xv: Vec<f64> = (0..batch * sizes[0]).map(|_| normal.sample(rng)).collect();
    let x = Matrix::from_vec(batch, sizes[0], xv).unwrap();
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let y = Matrix::one_hot(&labels, classes).unwrap();
    let target = (0..batch)
        .map(|_| {
            let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    RandomNet {
        spec,
        params,
        x,
        labels,
        y,
        target,
    }
}

/// Brute-force: positions of the `k` nearest other rows (all distances
/// assumed distinct).
pub fn brute_topk(features: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = features
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, f)| {
            let s: f64 = f.iter().zip(&features[i]).map(|(a, b)| (a - b) * (a - b)).sum();
            (s, j)
        })
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}
