#![allow(dead_code)]

use lgrad_core::phantom::{
    analytic_background_covariance, render_gaussian_signal, GaussianSignalConfig, MvnLumpyConfig, NoiseConfig,
};
use lgrad_core::stats::symmetric_eigen;
use lgrad_core::SignalImage;
use ndarray::{Array1, Array2, ArrayView2};

/// 16×16 lumpy task with exact statistics. The short kernel and off-center
/// signal keep ≥ 20 Krylov directions numerically distinct.
pub struct AnalyticTask {
    pub lumpy: MvnLumpyConfig,
    pub noise: NoiseConfig,
    pub signal: SignalImage,
    /// K̄ = K_b + σ_n² I
    pub kbar: Array2<f64>,
}

pub fn analytic_task_16() -> AnalyticTask {
    let lumpy = MvnLumpyConfig {
        height: 16,
        width: 16,
        dc_offset: 100.0,
        kernel_sigma: 0.7,
        field_magnitude: 30.0,
        seed: 5,
    };
    let noise = NoiseConfig { sigma_n: 3.0, seed: 6 };
    let signal = render_gaussian_signal(
        &GaussianSignalConfig {
            center_row: 6.3,
            center_col: 9.7,
            sigma: 1.0,
            amplitude: 10.0,
        },
        16,
        16,
    )
    .unwrap();
    let kbar = analytic_background_covariance(&lumpy).unwrap() + noise.covariance(256);
    AnalyticTask {
        lumpy,
        noise,
        signal,
        kbar,
    }
}

pub fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

pub fn rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    norm(&(a - b)) / norm(b)
}

pub fn frob(a: &Array2<f64>) -> f64 {
    a.mapv(|v| v * v).sum().sqrt()
}

/// Orthonormal basis (columns) of the row space of `rows`, by twice-repeated
/// modified Gram–Schmidt.
pub fn orthonormal_rows(rows: ArrayView2<'_, f64>) -> Array2<f64> {
    let (k, m) = rows.dim();
    let mut q = Array2::<f64>::zeros((m, k));
    for i in 0..k {
        let mut v = rows.row(i).to_owned();
        for _ in 0..2 {
            for j in 0..i {
                let qj = q.column(j);
                let c = qj.dot(&v);
                v.scaled_add(-c, &qj);
            }
        }
        let n = norm(&v);
        q.column_mut(i).assign(&(v / n));
    }
    q
}

/// Orthonormal Krylov basis span{b, Ab, …, A^{k−1}b} via Arnoldi with full
/// reorthogonalization.
pub fn krylov_basis(a: &Array2<f64>, b: &Array1<f64>, k: usize) -> Array2<f64> {
    let m = b.len();
    let mut q = Array2::<f64>::zeros((m, k));
    q.column_mut(0).assign(&(b / norm(b)));
    for i in 1..k {
        let mut v = a.dot(&q.column(i - 1));
        for _ in 0..2 {
            for j in 0..i {
                let qj = q.column(j);
                let c = qj.dot(&v);
                v.scaled_add(-c, &qj);
            }
        }
        let n = norm(&v);
        q.column_mut(i).assign(&(v / n));
    }
    q
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases of equal dimension.
pub fn max_principal_angle(qa: &Array2<f64>, qb: &Array2<f64>) -> f64 {
    let residual = qa - &qb.dot(&qb.t().dot(qa));
    let gram = residual.t().dot(&residual);
    let lam = symmetric_eigen(gram.view()).unwrap().values;
    let top = lam.iter().cloned().fold(0.0f64, f64::max);
    top.max(0.0).sqrt().min(1.0).asin()
}

/// Labelled images of the analytic task (half signal-present).
pub fn task_dataset(task: &AnalyticTask, n: usize, seed: u64) -> lgrad_core::ImageStack {
    use lgrad_core::phantom::{assemble_dataset, generate_mvn_lumpy};
    let lumpy = MvnLumpyConfig { seed, ..task.lumpy.clone() };
    let noise = NoiseConfig { seed: seed ^ 0x9e37_79b9, ..task.noise.clone() };
    let bg = generate_mvn_lumpy(&lumpy, n).unwrap();
    assemble_dataset(&bg, &task.signal, &noise, 0.5).unwrap()
}

/// Exact signal-known-exactly statistics of the analytic task.
pub fn task_stats(task: &AnalyticTask) -> lgrad_core::stats::ClassStats {
    let mean = Array1::from_elem(task.kbar.nrows(), task.lumpy.dc_offset);
    lgrad_core::stats::ClassStats::ske(task.kbar.clone(), mean, &task.signal, 0).unwrap()
}
