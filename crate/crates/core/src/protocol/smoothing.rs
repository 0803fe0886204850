//! Stacking client models into per-layer tensors and smoothing them.
//!
//! Layer `l` of K client models becomes an `in × out × K` tensor whose
//! frontal slice k is client k's weight matrix; a bias vector becomes a
//! `1 × out × K` tensor. Smoothing applies the truncated tensor SVD to every
//! such tensor with a common threshold.

use ndarray::Array1;

use super::{ProtocolError, Result};
use crate::learner::{DenseLayer, Model};
use crate::tensor::{truncated_tsvd, Tensor3};

/// One tensor per parameter block, in flatten order (weight, then bias).
pub fn stack_clients(models: &[Model]) -> Result<Vec<Tensor3>> {
    let first = models.first().ok_or(ProtocolError::ArchMismatch)?;
    if models.iter().any(|m| !m.same_shape(first)) {
        return Err(ProtocolError::ArchMismatch);
    }
    let k = models.len();
    let mut out = Vec::new();
    for (li, layer) in first.layers().iter().enumerate() {
        let (rows, cols) = layer.weight.dim();
        let mut data = Vec::with_capacity(rows * cols * k);
        for m in models {
            data.extend(m.layers()[li].weight.iter().copied());
        }
        out.push(Tensor3::new(data, rows, cols, k)?);
        if let Some(b) = &layer.bias {
            let mut data = Vec::with_capacity(b.len() * k);
            for m in models {
                data.extend(m.layers()[li].bias.as_ref().expect("same shape").iter().copied());
            }
            out.push(Tensor3::new(data, 1, b.len(), k)?);
        }
    }
    Ok(out)
}

/// Inverse of [`stack_clients`]; `template` supplies the layer structure.
pub fn unstack_clients(tensors: &[Tensor3], template: &Model) -> Result<Vec<Model>> {
    let blocks: usize = template
        .layers()
        .iter()
        .map(|l| 1 + usize::from(l.bias.is_some()))
        .sum();
    if tensors.len() != blocks {
        return Err(ProtocolError::ArchMismatch);
    }
    let k = tensors[0].dims().2;
    let mut models = Vec::with_capacity(k);
    for slice in 0..k {
        let mut it = tensors.iter();
        let mut layers = Vec::with_capacity(template.layers().len());
        for l in template.layers() {
            let w = it.next().expect("count checked");
            if w.dims() != (l.in_dim(), l.out_dim(), k) {
                return Err(ProtocolError::ArchMismatch);
            }
            let bias = match &l.bias {
                Some(b) => {
                    let t = it.next().expect("count checked");
                    if t.dims() != (1, b.len(), k) {
                        return Err(ProtocolError::ArchMismatch);
                    }
                    Some(Array1::from(t.slice(slice).row(0).to_vec()))
                }
                None => None,
            };
            layers.push(DenseLayer {
                weight: w.slice(slice).to_owned(),
                bias,
            });
        }
        models.push(Model::new(layers)?);
    }
    Ok(models)
}

/// Per-block truncated tSVD of the stacked models at `threshold`.
pub fn server_smooth(models: &[Model], threshold: f64) -> Result<Vec<Model>> {
    let stacked = stack_clients(models)?;
    let smoothed = stacked
        .iter()
        .map(|t| truncated_tsvd(t, threshold))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    unstack_clients(&smoothed, &models[0])
}

/// Element-wise mean of the models' parameters, summed in slice order.
pub fn average_models(models: &[Model]) -> Result<Model> {
    let first = models.first().ok_or(ProtocolError::ArchMismatch)?;
    if models.iter().any(|m| !m.same_shape(first)) {
        return Err(ProtocolError::ArchMismatch);
    }
    let mut acc = vec![0.0; first.num_params()];
    for m in models {
        for (a, v) in acc.iter_mut().zip(m.flatten()) {
            *a += v;
        }
    }
    let k = models.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(first.unflatten(&acc)?)
}
