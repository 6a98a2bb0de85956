//! Partial-least-squares channels: NIPALS PLS1 of images against the class
//! label, with X-deflation. Every component reads and rewrites the whole
//! centered data matrix.

use ndarray::{Array1, Array2};

use crate::error::{ObserverError, Result};
use crate::kernels::{axpy, dot, norm, project_accumulate, rank_one_downdate, transpose_apply};
use crate::stats::column_mean;
use crate::types::{ChannelMatrix, ImageStack};

/// Early-stop threshold on ‖X_kᵀy_k‖ relative to ‖X‖_F.
pub const PLS_STOP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PlsFit {
    /// Weight vectors w_k (the channels), one per row.
    pub weights: ChannelMatrix,
    /// Score vectors t_k = X_k w_k, one per row (length N).
    pub scores: Array2<f64>,
}

pub fn fit_pls(train: &ImageStack, num_channels: usize) -> Result<PlsFit> {
    train.require_both_classes(1)?;
    let (n, m) = (train.len(), train.dim());
    let max = (n - 1).min(m);
    if num_channels == 0 || num_channels > max {
        return Err(ObserverError::validation(format!(
            "number of PLS channels must be in 1..={max}, got {num_channels}"
        )));
    }

    let mean = column_mean(train.data());
    let mut x = (&train.data() - &mean.view().insert_axis(ndarray::Axis(0))).as_standard_layout().into_owned();
    let x_norm = norm(x.as_slice().unwrap());
    let label_mean = train.count(crate::types::PRESENT) as f64 / n as f64;
    let mut y: Vec<f64> = train.labels().iter().map(|&l| l as f64 - label_mean).collect();

    let mut weights = Vec::with_capacity(num_channels);
    let mut scores = Vec::with_capacity(num_channels);
    for _ in 0..num_channels {
        // c = X_kᵀ y_k
        let mut c = vec![0.0; m];
        transpose_apply(x.as_slice().unwrap(), m, &y, &mut c);
        let c_norm = norm(&c);
        if !(c_norm > PLS_STOP_TOL * x_norm) {
            break;
        }
        let w: Vec<f64> = c.iter().map(|v| v / c_norm).collect();

        // t = X_k w and p = X_kᵀ t in one pass.
        let mut t = vec![0.0; n];
        let mut p = vec![0.0; m];
        project_accumulate(x.as_slice().unwrap(), m, &w, &mut t, &mut p);
        let tt = dot(&t, &t);
        if !(tt > 0.0) {
            break;
        }
        p.iter_mut().for_each(|v| *v /= tt);

        // X_{k+1} = X_k − t pᵀ,  y_{k+1} = y_k − t (tᵀy_k)/(tᵀt)
        rank_one_downdate(x.as_slice_mut().unwrap(), m, &t, &p);
        let ty = dot(&t, &y) / tt;
        axpy(-ty, &t, &mut y);

        weights.push(Array1::from(w));
        scores.push(Array1::from(t));
    }

    if weights.is_empty() {
        return Err(ObserverError::DegenerateTask(
            "images carry no linear information about the labels".into(),
        ));
    }
    let stack = |rows: &[Array1<f64>], len: usize| {
        let mut out = Array2::zeros((rows.len(), len));
        for (mut dst, src) in out.outer_iter_mut().zip(rows) {
            dst.assign(src);
        }
        out
    };
    Ok(PlsFit {
        weights: ChannelMatrix::new(stack(&weights, m))?,
        scores: stack(&scores, n),
    })
}

pub fn generate_pls_channels(train: &ImageStack, num_channels: usize) -> Result<ChannelMatrix> {
    fit_pls(train, num_channels).map(|fit| fit.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_class_rejected() {
        let stack = ImageStack::new(Array2::ones((4, 3)), vec![1, 1, 1, 1], 1, 3).unwrap();
        assert!(generate_pls_channels(&stack, 1).is_err());
    }

    #[test]
    fn too_many_channels_rejected() {
        let data = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        let stack = ImageStack::new(data, vec![0, 1, 1], 1, 2).unwrap();
        assert!(generate_pls_channels(&stack, 3).is_err());
        assert!(generate_pls_channels(&stack, 2).is_ok());
    }
}
