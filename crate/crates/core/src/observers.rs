//! Hotelling, regularized Hotelling and channelized Hotelling observers.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_len, ObserverError, Result};
use crate::stats::{
    estimate_class_stats, pseudo_solve, sample_mean_cov, symmetric_solve, ClassStats, IncrementalInverse,
    DEFAULT_SCHUR_TOL,
};
use crate::types::{ChannelMatrix, ImageStack, ObserverKind, ObserverTemplate, SignalImage, ABSENT, PRESENT};

/// Test statistics with their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        check_len("score count", labels.len(), scores.len())?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(ObserverError::validation("scores must be finite"));
        }
        if labels.iter().any(|&l| l > PRESENT) {
            return Err(ObserverError::validation("labels must be 0 or 1"));
        }
        Ok(ScoreSet { scores, labels })
    }

    pub fn class_scores(&self, label: u8) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|(&s, _)| s)
            .collect()
    }
}

/// Anything that maps an image to a scalar test statistic.
pub trait LinearObserver {
    fn score(&self, test: &ImageStack) -> Result<ScoreSet>;
}

impl LinearObserver for ObserverTemplate {
    fn score(&self, test: &ImageStack) -> Result<ScoreSet> {
        check_len("template length", test.dim(), self.dim())?;
        let scores = test.data().dot(&self.weights());
        ScoreSet::new(scores.to_vec(), test.labels().to_vec())
    }
}

/// Free-function form of [`LinearObserver::score`].
pub fn score(observer: &impl LinearObserver, test: &ImageStack) -> Result<ScoreSet> {
    observer.score(test)
}

/// w_HO = [½(K₀ + K₁) + ridge·I]⁻¹ Δḡ̄
pub fn build_ho(stats: &ClassStats, ridge: f64) -> Result<ObserverTemplate> {
    let w = symmetric_solve(stats.average_covariance().view(), stats.delta_mean.view(), ridge)?;
    ObserverTemplate::new(w, ObserverKind::Ho)
}

/// Regularized HO: Moore–Penrose pseudoinverse of ½(K̂₀ + K̂₁) applied to Δ
/// (the known signal when given, else the sample mean difference).
pub fn build_rho(train: &ImageStack, signal: Option<&SignalImage>, rank_tol: f64) -> Result<ObserverTemplate> {
    let mut stats = estimate_class_stats(train)?;
    if let Some(s) = signal {
        stats = stats.with_known_signal(s)?;
    }
    build_rho_from_stats(&stats, rank_tol)
}

pub fn build_rho_from_stats(stats: &ClassStats, rank_tol: f64) -> Result<ObserverTemplate> {
    let w = pseudo_solve(stats.average_covariance().view(), stats.delta_mean.view(), rank_tol)?;
    ObserverTemplate::new(w, ObserverKind::Rho)
}

/// Where the CHO takes its channelized covariance and mean difference from.
pub enum ChoTraining<'a> {
    /// K_v = T·½(K₀ + K₁)·Tᵀ, Δv̄ = T·Δḡ̄ from known statistics.
    Stats(&'a ClassStats),
    /// Sample statistics of the channelized images v = Tg.
    Samples(&'a ImageStack),
}

#[derive(Debug, Clone)]
pub struct ChoModel {
    pub channels: ChannelMatrix,
    /// w_v = K_v⁻¹ Δv̄
    pub template_v: Array1<f64>,
    /// w_CHO = Tᵀ w_v
    pub expanded_template: Array1<f64>,
    pub k_v: Array2<f64>,
    pub delta_v: Array1<f64>,
}

impl ChoModel {
    /// Δv̄ᵀ K_v⁻¹ Δv̄
    pub fn snr2(&self) -> f64 {
        self.delta_v.dot(&self.template_v)
    }

    pub fn template(&self) -> Result<ObserverTemplate> {
        ObserverTemplate::new(self.expanded_template.clone(), ObserverKind::Cho)
    }

    /// Scores through the channelized data: w_vᵀ(T g).
    pub fn score_channelized(&self, test: &ImageStack) -> Result<ScoreSet> {
        check_len("image dimension", self.channels.dim(), test.dim())?;
        let v = self.channels.channelize(test.data());
        ScoreSet::new(v.dot(&self.template_v).to_vec(), test.labels().to_vec())
    }
}

impl LinearObserver for ChoModel {
    /// Scores through the expanded template: w_CHOᵀ g.
    fn score(&self, test: &ImageStack) -> Result<ScoreSet> {
        check_len("image dimension", self.channels.dim(), test.dim())?;
        let scores = test.data().dot(&self.expanded_template);
        ScoreSet::new(scores.to_vec(), test.labels().to_vec())
    }
}

pub fn build_cho(channels: &ChannelMatrix, training: ChoTraining<'_>, signal: Option<&SignalImage>) -> Result<ChoModel> {
    let t = channels.rows();
    if let Some(s) = signal {
        check_len("signal pixels", channels.dim(), s.dim())?;
    }
    let (k_v, delta_v) = match training {
        ChoTraining::Stats(stats) => {
            check_len("image dimension", channels.dim(), stats.dim())?;
            let kbar = stats.average_covariance();
            let k_v = t.dot(&kbar).dot(&t.t());
            let delta = signal.map(|s| s.data().to_owned()).unwrap_or_else(|| stats.delta_mean.clone());
            (symmetrized(k_v), t.dot(&delta))
        }
        ChoTraining::Samples(stack) => {
            check_len("image dimension", channels.dim(), stack.dim())?;
            stack.require_both_classes(2)?;
            let v0 = channels.channelize(stack.class_data(ABSENT).view());
            let v1 = channels.channelize(stack.class_data(PRESENT).view());
            let (m0, k0) = sample_mean_cov(v0.view());
            let (m1, k1) = sample_mean_cov(v1.view());
            let delta_v = match signal {
                Some(s) => t.dot(&s.data()),
                None => m1 - m0,
            };
            ((k0 + k1) * 0.5, delta_v)
        }
    };
    let template_v = match symmetric_solve(k_v.view(), delta_v.view(), 0.0) {
        Ok(w) => w,
        Err(ObserverError::Singular { minor, .. }) => {
            let mut rows = dependent_rows(&k_v);
            if rows.is_empty() {
                rows.push(minor);
            }
            return Err(ObserverError::DependentChannels { rows });
        }
        Err(e) => return Err(e),
    };
    let expanded_template = t.t().dot(&template_v);
    Ok(ChoModel {
        channels: channels.clone(),
        template_v,
        expanded_template,
        k_v,
        delta_v,
    })
}

fn symmetrized(a: Array2<f64>) -> Array2<f64> {
    (&a + &a.t()) * 0.5
}

/// Indices of channels whose channelized variance is (numerically) explained
/// by earlier, independent channels.
pub fn dependent_rows(k_v: &Array2<f64>) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    let mut inv = IncrementalInverse::new();
    for i in 0..k_v.nrows() {
        let cross = Array1::from_iter(kept.iter().map(|&j| k_v[[j, i]]));
        match inv.push(cross.view(), k_v[[i, i]], DEFAULT_SCHUR_TOL) {
            Ok(()) => kept.push(i),
            Err(_) => dependent.push(i),
        }
    }
    dependent
}

/// Population SNR² of a linear template under shared covariance K̄:
/// (wᵀΔ)² / (wᵀK̄w).
pub fn template_snr2(w: ArrayView1<'_, f64>, kbar: &Array2<f64>, delta: ArrayView1<'_, f64>) -> f64 {
    let signal = w.dot(&delta);
    signal * signal / w.dot(&kbar.dot(&w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};

    #[test]
    fn ho_diagonal() {
        let sig = SignalImage::new(array![2.0, 0.0], 1, 2).unwrap();
        let st = ClassStats::ske(Array2::eye(2) * 2.0, Array1::zeros(2), &sig, 10).unwrap();
        let w = build_ho(&st, 0.0).unwrap();
        assert!((w.weights()[0] - 1.0).abs() < 1e-15 && w.weights()[1] == 0.0);
    }

    #[test]
    fn coordinate_and_zero_templates() {
        let test = ImageStack::new(array![[3.0, 1.0], [-2.0, 5.0]], vec![0, 1], 1, 2).unwrap();
        let e1 = ObserverTemplate::new(array![1.0, 0.0], ObserverKind::Ho).unwrap();
        assert_eq!(e1.score(&test).unwrap().scores, vec![3.0, -2.0]);
        let zero = ObserverTemplate::new(array![0.0, 0.0], ObserverKind::Ho).unwrap();
        assert_eq!(zero.score(&test).unwrap().scores, vec![0.0, 0.0]);
    }

    #[test]
    fn singular_channelized_covariance_names_rows() {
        let t = ChannelMatrix::new(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let sig = SignalImage::new(array![1.0, 1.0, 0.0], 1, 3).unwrap();
        let st = ClassStats::ske(Array2::eye(3), Array1::zeros(3), &sig, 10).unwrap();
        match build_cho(&t, ChoTraining::Stats(&st), None) {
            Err(ObserverError::DependentChannels { rows }) => assert_eq!(rows, vec![2]),
            other => panic!("expected dependent channels, got {other:?}"),
        }
    }

    #[test]
    fn one_channel_cho_is_matched_filter_direction() {
        let delta = array![1.0, 2.0, 0.5];
        let sig = SignalImage::new(delta.clone(), 1, 3).unwrap();
        let k = array![[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 3.0]];
        let st = ClassStats::ske(k, Array1::zeros(3), &sig, 10).unwrap();
        let t = ChannelMatrix::new(delta.clone().insert_axis(Axis(0))).unwrap();
        let cho = build_cho(&t, ChoTraining::Stats(&st), None).unwrap();
        let w = &cho.expanded_template;
        let cos = w.dot(&delta) / (w.dot(w).sqrt() * delta.dot(&delta).sqrt());
        assert!((cos - 1.0).abs() < 1e-14);
    }
}
