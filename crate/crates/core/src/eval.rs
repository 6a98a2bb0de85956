//! Figures of merit: ROC/AUC, bootstrap intervals, the equal-covariance
//! Gaussian AUC, and wall-clock timing of channel generation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channels::{generate_channels, ChannelMethod, GenerationInputs};
use crate::error::{ObserverError, Result};
use crate::observers::ScoreSet;
use crate::types::{ABSENT, PRESENT};

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    pub auc: f64,
    /// (FPF, TPF) from (0, 0) to (1, 1).
    pub curve: Vec<(f64, f64)>,
    pub n0: usize,
    pub n1: usize,
}

impl RocResult {
    pub fn trapezoid_area(&self) -> f64 {
        self.curve
            .windows(2)
            .map(|p| (p[1].0 - p[0].0) * (p[1].1 + p[0].1) * 0.5)
            .sum()
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Mann–Whitney AUC of sorted samples with half credit for ties.
fn mann_whitney_sorted(absent: &[f64], present: &[f64]) -> f64 {
    let mut twice_u: u128 = 0;
    for &s in present {
        let below = absent.partition_point(|&a| a < s);
        let not_above = absent.partition_point(|&a| a <= s);
        twice_u += 2 * below as u128 + (not_above - below) as u128;
    }
    twice_u as f64 / (2.0 * absent.len() as f64 * present.len() as f64)
}

/// [`mann_whitney_sorted`] for sorted values carrying multiplicities.
fn mann_whitney_counts(absent: &[f64], absent_counts: &[u32], present: &[f64], present_counts: &[u32]) -> f64 {
    let n0: u64 = absent_counts.iter().map(|&c| c as u64).sum();
    let n1: u64 = present_counts.iter().map(|&c| c as u64).sum();
    let mut twice_u: u128 = 0;
    let mut below: u128 = 0;
    let mut j = 0;
    for (&s, &w) in present.iter().zip(present_counts) {
        if w == 0 {
            continue;
        }
        while j < absent.len() && absent[j] < s {
            below += absent_counts[j] as u128;
            j += 1;
        }
        let mut equal: u128 = 0;
        let mut e = j;
        while e < absent.len() && absent[e] == s {
            equal += absent_counts[e] as u128;
            e += 1;
        }
        twice_u += w as u128 * (2 * below + equal);
    }
    twice_u as f64 / (2.0 * n0 as f64 * n1 as f64)
}

/// AUC = P(t₁ > t₀) + ½P(t₁ = t₀) over all (absent, present) pairs, and the
/// empirical ROC curve.
pub fn compute_auc(scores: &ScoreSet) -> Result<RocResult> {
    let absent = sorted(scores.class_scores(ABSENT));
    let present = sorted(scores.class_scores(PRESENT));
    let (n0, n1) = (absent.len(), present.len());
    if n0 == 0 || n1 == 0 {
        return Err(ObserverError::validation("AUC needs scores from both classes"));
    }
    let auc = mann_whitney_sorted(&absent, &present);

    let mut all: Vec<(f64, u8)> = scores.scores.iter().copied().zip(scores.labels.iter().copied()).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut k = 0;
    while k < all.len() {
        let threshold = all[k].0;
        while k < all.len() && all[k].0 == threshold {
            if all[k].1 == PRESENT {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        curve.push((fp as f64 / n0 as f64, tp as f64 / n1 as f64));
    }
    Ok(RocResult { auc, curve, n0, n1 })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`] by bisection; `p` in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level must be in (0, 1)");
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// AUC of an observer whose test statistic is Gaussian with equal variance
/// under both hypotheses and detectability `snr` = Δμ/σ:
/// ½[1 + erf(snr/2)] = Φ(snr/√2).
pub fn analytic_gaussian_auc(snr: f64) -> f64 {
    0.5 * libm::erfc(-snr / 2.0)
}

/// Inverse of [`analytic_gaussian_auc`]: the detectability giving `auc`.
pub fn detectability_for_auc(auc: f64) -> f64 {
    std::f64::consts::SQRT_2 * normal_quantile(auc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    /// Standard deviation of the bootstrap AUC replicates.
    pub std_err: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// 95% percentile-bootstrap interval for the AUC, resampling images with
/// replacement within each class. Replicate r draws from stream r of a
/// ChaCha generator keyed by `seed`.
pub fn bootstrap_auc_ci(scores: &ScoreSet, resamples: usize, seed: u64) -> Result<BootstrapInterval> {
    if resamples < 100 {
        return Err(ObserverError::validation("bootstrap needs at least 100 resamples"));
    }
    let absent = scores.class_scores(ABSENT);
    let present = scores.class_scores(PRESENT);
    if absent.is_empty() || present.is_empty() {
        return Err(ObserverError::validation("AUC needs scores from both classes"));
    }
    // Resampling only needs multiplicities over the sorted scores; the
    // Mann–Whitney count is the same integer as for the sorted resample.
    let ranked = |src: &[f64]| -> (Vec<f64>, Vec<usize>) {
        let mut order: Vec<usize> = (0..src.len()).collect();
        order.sort_by(|&a, &b| src[a].total_cmp(&src[b]));
        let mut rank = vec![0; src.len()];
        for (pos, &i) in order.iter().enumerate() {
            rank[i] = pos;
        }
        (order.iter().map(|&i| src[i]).collect(), rank)
    };
    let (absent_sorted, absent_rank) = ranked(&absent);
    let (present_sorted, present_rank) = ranked(&present);
    let mut absent_counts = vec![0u32; absent.len()];
    let mut present_counts = vec![0u32; present.len()];
    let draw = |rng: &mut ChaCha8Rng, rank: &[usize], counts: &mut [u32]| {
        counts.fill(0);
        for _ in 0..rank.len() {
            counts[rank[rng.random_range(0..rank.len())]] += 1;
        }
    };
    let mut aucs: Vec<f64> = (0..resamples)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            draw(&mut rng, &absent_rank, &mut absent_counts);
            draw(&mut rng, &present_rank, &mut present_counts);
            mann_whitney_counts(&absent_sorted, &absent_counts, &present_sorted, &present_counts)
        })
        .collect();
    let mean = aucs.iter().sum::<f64>() / resamples as f64;
    let var = aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (resamples - 1) as f64;
    aucs.sort_by(f64::total_cmp);
    Ok(BootstrapInterval {
        low: percentile(&aucs, 0.025),
        high: percentile(&aucs, 0.975),
        std_err: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub method: ChannelMethod,
    pub num_train: usize,
    pub num_channels: usize,
    /// Mean wall-clock seconds per generation.
    pub seconds: f64,
    pub repeats: usize,
}

/// Times the full generation pipeline (statistics estimation included), one
/// untimed warm-up run followed by `repeats` timed runs.
pub fn benchmark_generation(
    method: ChannelMethod,
    inputs: GenerationInputs<'_>,
    num_channels: usize,
    repeats: usize,
) -> Result<TimingRecord> {
    if repeats == 0 {
        return Err(ObserverError::validation("repeats must be at least 1"));
    }
    generate_channels(method, inputs, num_channels)?;
    let mut total = 0.0;
    for _ in 0..repeats {
        let start = Instant::now();
        let channels = generate_channels(method, inputs, num_channels)?;
        total += start.elapsed().as_secs_f64();
        std::hint::black_box(channels);
    }
    let num_train = match method {
        ChannelMethod::LgradCmd => inputs.backgrounds.map_or(0, |b| b.len()),
        _ => inputs.train.len(),
    };
    Ok(TimingRecord {
        method,
        num_train,
        num_channels,
        seconds: (total / repeats as f64).max(f64::MIN_POSITIVE),
        repeats,
    })
}
