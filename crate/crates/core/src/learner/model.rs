//! Dense feed-forward classifiers with hand-written gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LearnerError, Result};
use crate::dp::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in × out`.
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Single linear layer with bias, softmax output.
    Logistic,
    /// `d → hidden → classes` with ReLU in between.
    Mlp { hidden: usize, bias: bool },
}

/// Layers applied in order with ReLU between consecutive layers; the last
/// layer's output feeds softmax cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<DenseLayer>,
}

impl Model {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(LearnerError::InvalidArgument("model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(LearnerError::InvalidArgument(format!("layer {i} has a zero dim")));
            }
            if let Some(b) = &l.bias {
                if b.len() != l.out_dim() {
                    return Err(LearnerError::DimMismatch(format!(
                        "layer {i} bias {} vs out {}",
                        b.len(),
                        l.out_dim()
                    )));
                }
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(LearnerError::DimMismatch(format!(
                    "layer {} outputs {} but layer {i} takes {}",
                    i - 1,
                    layers[i - 1].out_dim(),
                    l.in_dim()
                )));
            }
            let finite = l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(LearnerError::NonFinite);
            }
        }
        Ok(Self { layers })
    }

    /// Weights uniform in `[−1/√in, 1/√in]`, biases zero.
    pub fn init(arch: Architecture, d: usize, num_classes: usize, rng: &StreamRng) -> Result<Self> {
        let mut g = rng.generator();
        let mut layer = |fan_in: usize, fan_out: usize, bias: bool| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            DenseLayer {
                weight: Array2::from_shape_fn((fan_in, fan_out), |_| g.random_range(-bound..=bound)),
                bias: bias.then(|| Array1::zeros(fan_out)),
            }
        };
        let layers = match arch {
            Architecture::Logistic => vec![layer(d, num_classes, true)],
            Architecture::Mlp { hidden, bias } => {
                vec![layer(d, hidden, bias), layer(hidden, num_classes, bias)]
            }
        };
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    /// Parameters in layer order: row-major weight, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            if let Some(b) = &l.bias {
                out.extend(b.iter().copied());
            }
        }
        out
    }

    /// Model with this model's shapes and the given flat parameters.
    pub fn unflatten(&self, params: &[f64]) -> Result<Model> {
        if params.len() != self.num_params() {
            return Err(LearnerError::DimMismatch(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.num_params()
            )));
        }
        let mut rest = params;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (w, tail) = rest.split_at(l.weight.len());
            let weight = Array2::from_shape_vec(l.weight.dim(), w.to_vec()).expect("length checked above");
            rest = tail;
            let bias = match &l.bias {
                Some(b) => {
                    let (bv, tail) = rest.split_at(b.len());
                    rest = tail;
                    Some(Array1::from(bv.to_vec()))
                }
                None => None,
            };
            layers.push(DenseLayer { weight, bias });
        }
        Model::new(layers)
    }

    pub fn same_shape(&self, other: &Model) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weight.dim() == b.weight.dim() && a.bias.as_ref().map(|v| v.len()) == b.bias.as_ref().map(|v| v.len())
            })
    }

    fn fingerprint(&self) -> u64 {
        // FNV-1a over the parameter bit patterns.
        let mut h: u64 = 0xcbf29ce484222325;
        for v in self.flatten() {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^ self.num_params() as u64
    }

    /// Class scores (pre-softmax) for every row of `features`.
    pub fn logits(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.input_dim() {
            return Err(LearnerError::DimMismatch(format!(
                "features have {} columns, model expects {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        let mut a = features.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.weight);
            if let Some(b) = &l.bias {
                z += b;
            }
            if i + 1 < self.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let z = self.logits(features)?;
        Ok(z.rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, (j, &v)| if v > best.1 { (j, v) } else { best },
                    )
                    .0
            })
            .collect())
    }
}

/// Activations kept by [`forward_loss`] for the matching [`backward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    hidden_pre: Vec<Array2<f64>>,
    probs: Array2<f64>,
    labels: Vec<usize>,
}

fn check_batch(m: &Model, features: &ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    if features.nrows() != labels.len() {
        return Err(LearnerError::DimMismatch(format!(
            "{} rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if features.nrows() == 0 {
        return Err(LearnerError::EmptyDataset);
    }
    if features.ncols() != m.input_dim() {
        return Err(LearnerError::DimMismatch(format!(
            "features have {} columns, model expects {}",
            features.ncols(),
            m.input_dim()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= m.num_classes()) {
        return Err(LearnerError::LabelOutOfRange(y));
    }
    Ok(())
}

/// Mean softmax cross-entropy of the batch.
pub fn forward_loss(m: &Model, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, ForwardCache)> {
    check_batch(m, &features, labels)?;
    let n_layers = m.layers.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut hidden_pre = Vec::with_capacity(n_layers - 1);
    let mut a = features.to_owned();
    for (i, l) in m.layers.iter().enumerate() {
        let mut z = a.dot(&l.weight);
        if let Some(b) = &l.bias {
            z += b;
        }
        inputs.push(a);
        if i + 1 < n_layers {
            a = z.mapv(|v| v.max(0.0));
            hidden_pre.push(z);
        } else {
            a = z;
        }
    }
    let mut probs = a;
    let mut loss = 0.0;
    for (mut row, &y) in probs.rows_mut().into_iter().zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        row.mapv_inplace(|v| (v - log_z).exp());
    }
    let batch = labels.len() as f64;
    Ok((
        loss / batch,
        ForwardCache {
            fingerprint: m.fingerprint(),
            inputs,
            hidden_pre,
            probs,
            labels: labels.to_vec(),
        },
    ))
}

/// Gradient of the mean batch loss, flattened like [`Model::flatten`].
pub fn backward(m: &Model, cache: &ForwardCache) -> Result<Vec<f64>> {
    if cache.fingerprint != m.fingerprint() || cache.inputs.len() != m.layers.len() {
        return Err(LearnerError::StaleCache);
    }
    let batch = cache.labels.len() as f64;
    let mut dz = cache.probs.clone();
    for (mut row, &y) in dz.rows_mut().into_iter().zip(&cache.labels) {
        row[y] -= 1.0;
    }
    dz /= batch;
    let mut grads: Vec<(Array2<f64>, Option<Array1<f64>>)> = Vec::with_capacity(m.layers.len());
    for i in (0..m.layers.len()).rev() {
        let l = &m.layers[i];
        let dw = cache.inputs[i].t().dot(&dz);
        let db = l.bias.as_ref().map(|_| dz.sum_axis(Axis(0)));
        if i > 0 {
            let mut da = dz.dot(&l.weight.t());
            da.zip_mut_with(&cache.hidden_pre[i - 1], |g, &pre| {
                if pre <= 0.0 {
                    *g = 0.0;
                }
            });
            dz = da;
        }
        grads.push((dw, db));
    }
    grads.reverse();
    let mut out = Vec::with_capacity(m.num_params());
    for (dw, db) in grads {
        out.extend(dw.iter().copied());
        if let Some(db) = db {
            out.extend(db.iter().copied());
        }
    }
    Ok(out)
}
