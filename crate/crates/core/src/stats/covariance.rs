use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_len, ObserverError, Result};
use crate::kernels::{axpy, dot, project_accumulate};
use crate::types::{ImageStack, SignalImage, ABSENT, PRESENT};

/// Per-hypothesis means and covariances of the image data.
#[derive(Debug, Clone)]
pub struct ClassStats {
    pub mean0: Array1<f64>,
    pub mean1: Array1<f64>,
    pub delta_mean: Array1<f64>,
    pub k0: Array2<f64>,
    pub k1: Array2<f64>,
    pub n0: usize,
    pub n1: usize,
}

impl ClassStats {
    pub fn dim(&self) -> usize {
        self.delta_mean.len()
    }

    /// ½(K₀ + K₁)
    pub fn average_covariance(&self) -> Array2<f64> {
        (&self.k0 + &self.k1) * 0.5
    }

    /// Signal-known-exactly statistics: both classes share covariance `k`,
    /// the present-class mean is the absent mean shifted by `signal`.
    pub fn ske(k: Array2<f64>, background_mean: Array1<f64>, signal: &SignalImage, n: usize) -> Result<Self> {
        let m = k.nrows();
        check_len("covariance columns", m, k.ncols())?;
        check_len("background mean", m, background_mean.len())?;
        check_len("signal pixels", m, signal.dim())?;
        let delta_mean = signal.data().to_owned();
        let mean1 = &background_mean + &delta_mean;
        Ok(ClassStats {
            mean0: background_mean,
            mean1,
            delta_mean,
            k1: k.clone(),
            k0: k,
            n0: n,
            n1: n,
        })
    }

    /// Replaces Δḡ̄ with the known signal (SKE mode); means are left as estimated.
    pub fn with_known_signal(mut self, signal: &SignalImage) -> Result<Self> {
        check_len("signal pixels", self.dim(), signal.dim())?;
        self.delta_mean = signal.data().to_owned();
        Ok(self)
    }
}

/// Sample mean and (n−1)-denominator covariance of the rows of `x`.
pub fn sample_mean_cov(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let n = x.nrows();
    let mean = column_mean(x);
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let mut cov = centered.t().dot(&centered);
    cov /= (n.max(2) - 1) as f64;
    symmetrize(&mut cov);
    (mean, cov)
}

pub fn column_mean(x: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = x.nrows();
    let mut acc = Array1::<f64>::zeros(x.ncols());
    for row in x.outer_iter() {
        acc += &row;
    }
    acc / n.max(1) as f64
}

/// Copies the upper triangle onto the lower one.
pub(crate) fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            a[[i, j]] = a[[j, i]];
        }
    }
}

pub fn estimate_class_stats(stack: &ImageStack) -> Result<ClassStats> {
    stack.require_both_classes(2)?;
    let x0 = stack.class_data(ABSENT);
    let x1 = stack.class_data(PRESENT);
    let (mean0, k0) = sample_mean_cov(x0.view());
    let (mean1, k1) = sample_mean_cov(x1.view());
    let delta_mean = &mean1 - &mean0;
    Ok(ClassStats {
        mean0,
        mean1,
        delta_mean,
        k0,
        k1,
        n0: x0.nrows(),
        n1: x1.nrows(),
    })
}

/// Covariance-matrix decomposition: K = K_n + K̂_b, where K̂_b is the sample
/// covariance of noiseless backgrounds and K_n the known noise covariance.
/// With a deterministic signal and object-independent noise this is the
/// covariance under both hypotheses.
pub fn cmd_covariance(backgrounds: &ImageStack, noise_cov: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let m = backgrounds.dim();
    check_len("noise covariance rows", m, noise_cov.nrows())?;
    check_len("noise covariance columns", m, noise_cov.ncols())?;
    check_symmetric(noise_cov, "noise covariance")?;
    if backgrounds.len() < 2 {
        return Err(ObserverError::InsufficientData {
            class: ABSENT,
            count: backgrounds.len(),
            needed: 2,
        });
    }
    let (_, kb) = sample_mean_cov(backgrounds.data());
    Ok(kb + &noise_cov)
}

pub(crate) fn check_symmetric(a: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(ObserverError::validation(format!("{what} is not square")));
    }
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-10 * scale.max(1.0) {
                return Err(ObserverError::validation(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// A symmetric positive-semidefinite linear map, applied without
/// necessarily materializing the matrix.
pub trait CovarianceOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64>;

    fn to_dense(&self) -> Array2<f64> {
        let m = self.dim();
        let mut out = Array2::zeros((m, m));
        let mut e = Array1::zeros(m);
        for j in 0..m {
            e[j] = 1.0;
            out.column_mut(j).assign(&self.apply(e.view()));
            e[j] = 0.0;
        }
        out
    }
}

impl CovarianceOperator for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let v = v.as_standard_layout();
        let v = v.as_slice().expect("standard layout");
        match self.as_slice() {
            Some(_) => self.outer_iter().map(|row| dot(row.as_slice().unwrap(), v)).collect(),
            None => self.dot(&ArrayView1::from(v)),
        }
    }

    fn to_dense(&self) -> Array2<f64> {
        self.clone()
    }
}

/// Σ_b w_b · X_bᵀX_b for centered blocks X_b, evaluated as one streaming pass
/// over each block per application: for every row x, acc += w·(xᵀv)·x.
#[derive(Debug, Clone)]
pub struct SampleCovariance {
    blocks: Vec<(Array2<f64>, f64)>,
    dim: usize,
}

impl SampleCovariance {
    pub fn new(dim: usize) -> Self {
        SampleCovariance {
            blocks: Vec::new(),
            dim,
        }
    }

    /// Centers `x` and adds `weight · X_cᵀX_c / (n − 1)`.
    pub fn add_class(mut self, x: ArrayView2<'_, f64>, weight: f64) -> Result<Self> {
        check_len("pixels per image", self.dim, x.ncols())?;
        let n = x.nrows();
        if n < 2 {
            return Err(ObserverError::validation("covariance block needs at least 2 rows"));
        }
        let mean = column_mean(x);
        let centered = (&x - &mean.view().insert_axis(Axis(0))).as_standard_layout().into_owned();
        self.blocks.push((centered, weight / (n - 1) as f64));
        Ok(self)
    }

    /// Like [`add_class`](Self::add_class) but centers `x` in place.
    pub fn add_centered(mut self, mut x: Array2<f64>, weight: f64) -> Result<Self> {
        check_len("pixels per image", self.dim, x.ncols())?;
        let n = x.nrows();
        if n < 2 {
            return Err(ObserverError::validation("covariance block needs at least 2 rows"));
        }
        let mean = column_mean(x.view());
        x -= &mean.view().insert_axis(Axis(0));
        let x = x.as_standard_layout().into_owned();
        self.blocks.push((x, weight / (n - 1) as f64));
        Ok(self)
    }
}

impl CovarianceOperator for SampleCovariance {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let v = v.as_standard_layout();
        let v = v.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.dim];
        for (x, w) in &self.blocks {
            let mut acc = vec![0.0; self.dim];
            let mut proj = vec![0.0; x.nrows()];
            let rows = x.as_slice().expect("row-major block");
            project_accumulate(rows, self.dim, v, &mut proj, &mut acc);
            axpy(*w, &acc, &mut out);
        }
        Array1::from(out)
    }
}

/// `inner + shift·I`
pub struct Shifted<O> {
    pub inner: O,
    pub shift: f64,
}

impl<O: CovarianceOperator> CovarianceOperator for Shifted<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = self.inner.apply(v);
        out.scaled_add(self.shift, &v);
        out
    }
}

/// `factor · inner`
pub struct Scaled<O> {
    pub inner: O,
    pub factor: f64,
}

impl<O: CovarianceOperator> CovarianceOperator for Scaled<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        self.inner.apply(v) * self.factor
    }
}
