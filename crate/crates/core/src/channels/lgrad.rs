//! Lagrangian-gradient channels.
//!
//! With K̄ = ½(K₀ + K₁) and Δ = Δḡ̄, the Lagrangian at λ = 2 has gradient
//! ∇L(w) = (K₀ + K₁)w − 2Δ. Starting from w₁ = 0, each iteration appends the
//! channel t_i = −½∇L(w_i) and moves w to the channelized-Hotelling template
//! built on all channels so far. The channelized covariance inverse is grown
//! one row at a time, so an iteration costs one covariance application plus
//! O(i·M + i²).

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_len, ObserverError, Result};
use crate::kernels::{axpy, dot};
use crate::stats::{
    cmd_covariance, estimate_class_stats, ClassStats, CovarianceOperator, IncrementalInverse, SampleCovariance,
    Scaled, Shifted, DEFAULT_SCHUR_TOL,
};
use crate::types::{ChannelMatrix, ImageStack, SignalImage, ABSENT, PRESENT};

/// Inputs of the Lagrangian gradient: K₀ + K₁ (as an operator) and Δḡ̄.
pub struct TaskStats {
    k_sum: Box<dyn CovarianceOperator>,
    delta_mean: Array1<f64>,
}

impl TaskStats {
    pub fn new(k_sum: impl CovarianceOperator + 'static, delta_mean: Array1<f64>) -> Result<Self> {
        check_len("mean difference", k_sum.dim(), delta_mean.len())?;
        if delta_mean.iter().any(|v| !v.is_finite()) {
            return Err(ObserverError::validation("mean difference is not finite"));
        }
        Ok(TaskStats {
            k_sum: Box::new(k_sum),
            delta_mean,
        })
    }

    /// Dense K₀ + K₁ from class statistics.
    pub fn from_class_stats(stats: &ClassStats) -> Result<Self> {
        Self::new(&stats.k0 + &stats.k1, stats.delta_mean.clone())
    }

    /// Both hypotheses share covariance `k` (so K₀ + K₁ = 2k).
    pub fn shared_covariance(k: &Array2<f64>, delta_mean: Array1<f64>) -> Result<Self> {
        Self::new(k * 2.0, delta_mean)
    }

    pub fn dim(&self) -> usize {
        self.delta_mean.len()
    }

    pub fn k_sum(&self) -> &dyn CovarianceOperator {
        self.k_sum.as_ref()
    }

    pub fn delta_mean(&self) -> ArrayView1<'_, f64> {
        self.delta_mean.view()
    }

    /// K̄ = ½(K₀ + K₁) applied to `v`.
    pub fn apply_average(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        self.k_sum.apply(v) * 0.5
    }
}

/// ½wᵀK₀w + ½wᵀK₁w − λ(wᵀΔḡ̄ − c)
pub fn lagrangian_value(w: ArrayView1<'_, f64>, lambda: f64, c: f64, stats: &ClassStats) -> Result<f64> {
    check_len("template", stats.dim(), w.len())?;
    let quad = |k: &Array2<f64>| w.dot(&k.apply(w));
    Ok(0.5 * quad(&stats.k0) + 0.5 * quad(&stats.k1) - lambda * (w.dot(&stats.delta_mean) - c))
}

/// ∇_w L(w, 2) = (K₀ + K₁)w − 2Δḡ̄
pub fn lagrangian_gradient(w: ArrayView1<'_, f64>, stats: &TaskStats) -> Result<Array1<f64>> {
    check_len("template", stats.dim(), w.len())?;
    let mut g = stats.k_sum.apply(w);
    g.scaled_add(-2.0, &stats.delta_mean);
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Added,
    /// The candidate channel lies in the span of the previous ones (in the
    /// K̄ metric) or is at roundoff level; nothing was appended.
    Dependent,
}

/// Iteration state: channels t₁…t_i, the inverse channelized covariance and
/// the current CHO template w_{i+1}.
pub struct LgradState<'a> {
    stats: &'a TaskStats,
    dependence_tol: f64,
    channels: Vec<Array1<f64>>,
    /// (K₀ + K₁)·t_j, cached so gradients never re-apply the covariance.
    k_sum_channels: Vec<Array1<f64>>,
    delta_v: Vec<f64>,
    inverse: IncrementalInverse,
    template_v: Array1<f64>,
    cho_template: Array1<f64>,
}

impl<'a> LgradState<'a> {
    pub fn new(stats: &'a TaskStats, dependence_tol: f64) -> Self {
        LgradState {
            stats,
            dependence_tol,
            channels: Vec::new(),
            k_sum_channels: Vec::new(),
            delta_v: Vec::new(),
            inverse: IncrementalInverse::new(),
            template_v: Array1::zeros(0),
            cho_template: Array1::zeros(stats.dim()),
        }
    }

    pub fn iteration(&self) -> usize {
        self.channels.len()
    }

    /// w_{CHO}^{(i)} = T_iᵀ K_{v_i}⁻¹ Δv̄_i (zero before the first step).
    pub fn cho_template(&self) -> ArrayView1<'_, f64> {
        self.cho_template.view()
    }

    /// K_{v_i}⁻¹ Δv̄_i
    pub fn template_v(&self) -> ArrayView1<'_, f64> {
        self.template_v.view()
    }

    pub fn inverse(&self) -> &IncrementalInverse {
        &self.inverse
    }

    pub fn delta_v(&self) -> &[f64] {
        &self.delta_v
    }

    /// Channelized SNR² = Δv̄ᵀ K_v⁻¹ Δv̄.
    pub fn snr2(&self) -> f64 {
        dot(&self.delta_v, self.template_v.as_slice().unwrap())
    }

    /// T_i K̄ T_iᵀ assembled from cached products.
    pub fn channelized_covariance(&self) -> Array2<f64> {
        let i = self.iteration();
        Array2::from_shape_fn((i, i), |(r, c)| 0.5 * self.channels[r].dot(&self.k_sum_channels[c]))
    }

    pub fn channel_matrix(&self) -> Result<ChannelMatrix> {
        let m = self.stats.dim();
        let mut rows = Array2::zeros((self.channels.len(), m));
        for (mut row, t) in rows.outer_iter_mut().zip(&self.channels) {
            row.assign(t);
        }
        ChannelMatrix::new(rows)
    }

    /// t = −½∇L(w) = Δ − ½(K₀ + K₁)w for the current template.
    pub fn next_channel(&self) -> Array1<f64> {
        let mut t = self.stats.delta_mean.clone();
        let t_slice = t.as_slice_mut().unwrap();
        for (a, y) in self.template_v.iter().zip(&self.k_sum_channels) {
            axpy(-0.5 * a, y.as_slice().unwrap(), t_slice);
        }
        t
    }

    pub fn step(&mut self) -> Result<Step> {
        let i = self.iteration();
        let t = self.next_channel();
        let degenerate_task = |why: &str| {
            ObserverError::DegenerateTask(format!(
                "first channel (the mean difference) {why}; the task has no detectable signal under this covariance"
            ))
        };
        if t.iter().all(|&v| v == 0.0) {
            return if i == 0 {
                Err(degenerate_task("is zero"))
            } else {
                Ok(Step::Dependent)
            };
        }
        // A gradient at roundoff level means w is already the Hotelling
        // template; further channels would only be noise.
        if i > 0 {
            let delta = self.stats.delta_mean.as_slice().unwrap();
            let t_norm = dot(t.as_slice().unwrap(), t.as_slice().unwrap()).sqrt();
            if t_norm <= self.dependence_tol * dot(delta, delta).sqrt() {
                return Ok(Step::Dependent);
            }
        }
        let y = self.stats.k_sum.apply(t.view());
        let new_var = 0.5 * t.dot(&y);
        let cross = Array1::from_iter(self.channels.iter().map(|tj| 0.5 * tj.dot(&y)));
        match self.inverse.push(cross.view(), new_var, self.dependence_tol) {
            Ok(()) => {}
            Err(ObserverError::DegenerateChannel { .. }) if i > 0 => return Ok(Step::Dependent),
            Err(ObserverError::DegenerateChannel { .. }) => {
                return Err(degenerate_task("has zero variance"))
            }
            Err(e) => return Err(e),
        }
        self.delta_v.push(t.dot(&self.stats.delta_mean));
        self.channels.push(t);
        self.k_sum_channels.push(y);

        self.template_v = self.inverse.apply(ArrayView1::from(&self.delta_v));
        let mut w = vec![0.0; self.stats.dim()];
        for (a, tj) in self.template_v.iter().zip(&self.channels) {
            axpy(*a, tj.as_slice().unwrap(), &mut w);
        }
        self.cho_template = Array1::from(w);
        Ok(Step::Added)
    }
}

fn check_channel_count(num_channels: usize, dim: usize) -> Result<()> {
    if num_channels == 0 || num_channels > dim {
        return Err(ObserverError::validation(format!(
            "number of channels must be in 1..={dim}, got {num_channels}"
        )));
    }
    Ok(())
}

/// Runs the L-grad iteration for up to `num_channels` channels. Returns fewer
/// rows when a new channel is linearly dependent on the earlier ones
/// (Schur complement ≤ `dependence_tol`·variance) or the gradient has
/// vanished (‖t‖ ≤ `dependence_tol`·‖Δḡ̄‖).
pub fn generate_lgrad_channels(stats: &TaskStats, num_channels: usize, dependence_tol: f64) -> Result<ChannelMatrix> {
    check_channel_count(num_channels, stats.dim())?;
    let mut state = LgradState::new(stats, dependence_tol);
    while state.iteration() < num_channels {
        if state.step()? == Step::Dependent {
            break;
        }
    }
    state.channel_matrix()
}

/// L-grad channels from a labelled training stack. The covariance K₀ + K₁ is
/// the sum of per-class sample covariances, applied matrix-free. With
/// `signal` (signal-known-exactly), Δḡ̄ is the known signal; otherwise the
/// sample mean difference.
pub fn generate_lgrad_channels_from_samples(
    train: &ImageStack,
    signal: Option<&SignalImage>,
    num_channels: usize,
) -> Result<ChannelMatrix> {
    train.require_both_classes(2)?;
    let m = train.dim();
    let x0 = train.class_data(ABSENT);
    let x1 = train.class_data(PRESENT);
    let delta = match signal {
        Some(s) => {
            check_len("signal pixels", m, s.dim())?;
            s.data().to_owned()
        }
        None => crate::stats::column_mean(x1.view()) - crate::stats::column_mean(x0.view()),
    };
    let k_sum = SampleCovariance::new(m).add_centered(x0, 1.0)?.add_centered(x1, 1.0)?;
    let stats = TaskStats::new(k_sum, delta)?;
    generate_lgrad_channels(&stats, num_channels, DEFAULT_SCHUR_TOL)
}

/// Dense-statistics variant of [`generate_lgrad_channels_from_samples`]
/// (materializes K₀ and K₁).
pub fn generate_lgrad_channels_from_class_stats(
    train: &ImageStack,
    signal: Option<&SignalImage>,
    num_channels: usize,
) -> Result<ChannelMatrix> {
    let mut stats = estimate_class_stats(train)?;
    if let Some(s) = signal {
        stats = stats.with_known_signal(s)?;
    }
    generate_lgrad_channels(&TaskStats::from_class_stats(&stats)?, num_channels, DEFAULT_SCHUR_TOL)
}

/// Known measurement-noise covariance K_n.
#[derive(Debug, Clone)]
pub enum NoiseCovariance {
    /// σ²·I
    White(f64),
    Dense(Array2<f64>),
}

impl NoiseCovariance {
    pub fn to_dense(&self, dim: usize) -> Array2<f64> {
        match self {
            NoiseCovariance::White(var) => Array2::eye(dim) * *var,
            NoiseCovariance::Dense(k) => k.clone(),
        }
    }
}

/// L-grad channels from covariance-matrix decomposition statistics:
/// K₀ = K₁ = K_n + K̂_b with K̂_b the sample covariance of noiseless
/// backgrounds, and Δḡ̄ = s.
pub fn generate_lgrad_cmd_channels(
    backgrounds: &ImageStack,
    noise: &NoiseCovariance,
    signal: &SignalImage,
    num_channels: usize,
) -> Result<ChannelMatrix> {
    let m = backgrounds.dim();
    check_len("signal pixels", m, signal.dim())?;
    let delta = signal.data().to_owned();
    let stats = match noise {
        NoiseCovariance::White(var) => {
            if !(*var >= 0.0) {
                return Err(ObserverError::validation("noise variance must be nonnegative"));
            }
            let (data, _) = backgrounds.clone().into_parts();
            let kb = SampleCovariance::new(m).add_centered(data, 1.0)?;
            TaskStats::new(
                Scaled {
                    inner: Shifted { inner: kb, shift: *var },
                    factor: 2.0,
                },
                delta,
            )?
        }
        NoiseCovariance::Dense(kn) => {
            TaskStats::shared_covariance(&cmd_covariance(backgrounds, kn.view())?, delta)?
        }
    };
    generate_lgrad_channels(&stats, num_channels, DEFAULT_SCHUR_TOL)
}

/// CMD channels from a given background covariance K_b (e.g. the analytic one).
pub fn generate_lgrad_cmd_channels_from_covariance(
    background_cov: &Array2<f64>,
    noise: &NoiseCovariance,
    signal: &SignalImage,
    num_channels: usize,
) -> Result<ChannelMatrix> {
    let m = background_cov.nrows();
    check_len("signal pixels", m, signal.dim())?;
    let k = background_cov + &noise.to_dense(m);
    let stats = TaskStats::shared_covariance(&k, signal.data().to_owned())?;
    generate_lgrad_channels(&stats, num_channels, DEFAULT_SCHUR_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lagrangian_at_zero_is_lambda_c() {
        let st = ClassStats::ske(Array2::eye(2), Array1::zeros(2), &SignalImage::new(array![1.0, 0.0], 1, 2).unwrap(), 10).unwrap();
        assert_eq!(lagrangian_value(Array1::zeros(2).view(), 2.0, 3.5, &st).unwrap(), 7.0);
        assert_eq!(lagrangian_value(array![1.0, 0.0].view(), 2.0, 0.0, &st).unwrap(), -1.0);
    }

    #[test]
    fn gradient_at_zero_is_matched_filter() {
        let stats = TaskStats::new(Array2::eye(3) * 5.0, array![1.0, -2.0, 0.5]).unwrap();
        let g = lagrangian_gradient(Array1::zeros(3).view(), &stats).unwrap();
        assert_eq!(g * -0.5, array![1.0, -2.0, 0.5]);
    }

    #[test]
    fn gradient_vanishes_at_hotelling_template() {
        let w = array![0.3, -1.0, 2.0];
        let stats = TaskStats::new(Array2::eye(3) * 2.0, w.clone()).unwrap();
        let g = lagrangian_gradient(w.view(), &stats).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_covariance_needs_one_channel() {
        let delta = array![1.0, 2.0, -1.0, 0.5];
        let stats = TaskStats::shared_covariance(&Array2::eye(4), delta.clone()).unwrap();
        let t = generate_lgrad_channels(&stats, 3, DEFAULT_SCHUR_TOL).unwrap();
        assert_eq!(t.num_channels(), 1);
        assert_eq!(t.channel(0), delta);
    }

    #[test]
    fn zero_covariance_is_degenerate_task() {
        let stats = TaskStats::shared_covariance(&Array2::zeros((3, 3)), array![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            generate_lgrad_channels(&stats, 2, DEFAULT_SCHUR_TOL),
            Err(ObserverError::DegenerateTask(_))
        ));
    }

    #[test]
    fn channel_count_bounds() {
        let stats = TaskStats::shared_covariance(&Array2::eye(2), array![1.0, 0.0]).unwrap();
        assert!(generate_lgrad_channels(&stats, 0, DEFAULT_SCHUR_TOL).is_err());
        assert!(generate_lgrad_channels(&stats, 3, DEFAULT_SCHUR_TOL).is_err());
    }

    #[test]
    fn channelized_covariance_inverse_consistent() {
        let k = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let stats = TaskStats::shared_covariance(&k, array![1.0, 0.5, -0.3]).unwrap();
        let mut st = LgradState::new(&stats, DEFAULT_SCHUR_TOL);
        for _ in 0..3 {
            assert_eq!(st.step().unwrap(), Step::Added);
        }
        let kv = st.channelized_covariance();
        let prod = st.inverse().inverse().dot(&kv);
        let err = (prod - Array2::<f64>::eye(3)).mapv(f64::abs).sum();
        assert!(err < 1e-10, "{err}");
    }
}
