//! Dataset construction for a run: background source, signal, and the
//! class-balanced channel-train / observer-train / test splits.

use lgrad_core::mobs;
use lgrad_core::phantom::{assemble_dataset, generate_mvn_lumpy, load_roi_directory, render_gaussian_signal};
use lgrad_core::{ImageStack, SignalImage};

use crate::config::{ExperimentConfig, TaskKind};
use crate::error::CliError;
use crate::seeds::{derive_seed, Role, Split};

/// (absent, present) image counts for a split of `n` images.
pub fn class_counts(n: usize, fraction_present: f64) -> (usize, usize) {
    let present = (fraction_present * n as f64).round() as usize;
    (n - present, present)
}

pub enum BackgroundSource {
    Lumpy,
    Roi(ImageStack),
}

/// Everything shared by all replicates of a run.
pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub master_seed: u64,
    pub source: BackgroundSource,
    pub signal: SignalImage,
}

impl RunContext {
    /// Loads ROIs and the signal; failures here are configuration errors.
    pub fn new(cfg: ExperimentConfig, master_seed: u64) -> Result<Self, CliError> {
        let source = match cfg.task.kind {
            TaskKind::MvnLumpy => BackgroundSource::Lumpy,
            TaskKind::RoiDirectory => {
                let dir = cfg.task.roi_path.as_ref().expect("validated");
                BackgroundSource::Roi(load_roi_directory(dir).map_err(CliError::config)?)
            }
        };
        let (height, width) = match &source {
            BackgroundSource::Lumpy => (cfg.phantom.height, cfg.phantom.width),
            BackgroundSource::Roi(stack) => (stack.height(), stack.width()),
        };
        let signal = match &cfg.signal.path {
            Some(path) => {
                let stack = mobs::load(path).map_err(CliError::config)?;
                SignalImage::from_stack(&stack).map_err(CliError::config)?
            }
            None => render_gaussian_signal(&cfg.signal.gaussian(height, width), height, width).map_err(CliError::config)?,
        };
        if (signal.height(), signal.width()) != (height, width) {
            return Err(CliError::Config(format!(
                "signal is {}×{} but backgrounds are {height}×{width}",
                signal.height(),
                signal.width()
            )));
        }
        let ctx = RunContext {
            cfg,
            master_seed,
            source,
            signal,
        };
        if let BackgroundSource::Roi(stack) = &ctx.source {
            let needed: usize = ctx.split_plan().iter().map(|p| p.absent + p.present).sum();
            if needed > stack.len() {
                return Err(CliError::Config(format!(
                    "the splits need {needed} ROIs but the directory holds {}",
                    stack.len()
                )));
            }
        }
        Ok(ctx)
    }

    pub fn height(&self) -> usize {
        self.signal.height()
    }

    pub fn width(&self) -> usize {
        self.signal.width()
    }

    /// Pool sizes per split. The channel-train pool is sized for the largest
    /// training size; smaller sizes take prefixes of each class.
    pub fn split_plan(&self) -> Vec<SplitPlan> {
        let s = &self.cfg.splits;
        let f = s.fraction_present;
        let (mut a, mut p) = (0, 0);
        for &n in &s.channel_train_sizes {
            let (n0, n1) = class_counts(n, f);
            a = a.max(n0);
            p = p.max(n1);
        }
        let mut plan = vec![SplitPlan {
            split: Split::ChannelTrain,
            absent: a,
            present: p,
        }];
        if !s.reuse_channel_train_for_observer {
            let (n0, n1) = class_counts(s.observer_train_size, f);
            plan.push(SplitPlan {
                split: Split::ObserverTrain,
                absent: n0,
                present: n1,
            });
        }
        let (n0, n1) = class_counts(s.test_size, f);
        plan.push(SplitPlan {
            split: Split::Test,
            absent: n0,
            present: n1,
        });
        plan
    }

    /// Seeds of one split for a replicate: ((absent bg, present bg), (absent noise, present noise)).
    pub fn split_seeds(&self, replicate: usize, split: Split) -> ([u64; 2], [u64; 2]) {
        let m = self.master_seed;
        (
            [0, 1].map(|c| derive_seed(m, replicate, Role::Backgrounds(split), c)),
            [0, 1].map(|c| derive_seed(m, replicate, Role::Noise(split), c)),
        )
    }

    fn backgrounds(&self, replicate: usize, plan: &[SplitPlan]) -> Result<Vec<[ImageStack; 2]>, CliError> {
        match &self.source {
            BackgroundSource::Lumpy => plan
                .iter()
                .map(|p| {
                    let (bg, _) = self.split_seeds(replicate, p.split);
                    let absent = generate_mvn_lumpy(&self.cfg.phantom.lumpy(bg[0]), p.absent)?;
                    let present = generate_mvn_lumpy(&self.cfg.phantom.lumpy(bg[1]), p.present)?;
                    Ok([absent, present])
                })
                .collect(),
            BackgroundSource::Roi(stack) => {
                // Disjoint consecutive chunks of a per-replicate permutation.
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let seed = derive_seed(self.master_seed, replicate, Role::RoiPermutation, 0);
                let mut order: Vec<usize> = (0..stack.len()).collect();
                order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let mut next = 0;
                let mut take = |n: usize| {
                    let rows = &order[next..next + n];
                    next += n;
                    stack.select(rows)
                };
                Ok(plan.iter().map(|p| [take(p.absent), take(p.present)]).collect())
            }
        }
    }

    pub fn build_replicate(&self, replicate: usize) -> Result<ReplicateData, CliError> {
        let plan = self.split_plan();
        let bgs = self.backgrounds(replicate, &plan)?;
        let mut pools = Vec::with_capacity(plan.len());
        for (p, [absent_bg, present_bg]) in plan.iter().zip(bgs) {
            let (_, noise) = self.split_seeds(replicate, p.split);
            let absent = assemble_dataset(&absent_bg, &self.signal, &self.cfg.noise.noise(noise[0]), 0.0)?;
            let present = assemble_dataset(&present_bg, &self.signal, &self.cfg.noise.noise(noise[1]), 1.0)?;
            pools.push(ClassPools {
                absent_bg,
                present_bg,
                absent,
                present,
            });
        }
        let f = self.cfg.splits.fraction_present;
        let test_pool = pools.pop().expect("test split");
        let (test, _) = test_pool.take(self.cfg.splits.test_size, f)?;
        let observer = if self.cfg.splits.reuse_channel_train_for_observer {
            None
        } else {
            let pool = pools.pop().expect("observer split");
            Some(pool.take(self.cfg.splits.observer_train_size, f)?.0)
        };
        let channel = pools.pop().expect("channel split");
        Ok(ReplicateData { channel, observer, test })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPlan {
    pub split: Split,
    pub absent: usize,
    pub present: usize,
}

/// Per-class noisy images and their noiseless backgrounds.
pub struct ClassPools {
    pub absent_bg: ImageStack,
    pub present_bg: ImageStack,
    pub absent: ImageStack,
    pub present: ImageStack,
}

impl ClassPools {
    /// First n₀ absent and n₁ present images, plus their backgrounds.
    pub fn take(&self, n: usize, fraction_present: f64) -> Result<(ImageStack, ImageStack), CliError> {
        let (n0, n1) = class_counts(n, fraction_present);
        if n0 > self.absent.len() || n1 > self.present.len() {
            return Err(CliError::Runtime(format!("pool too small for {n} images")));
        }
        let images = self.absent.slice(0, n0).concat(&self.present.slice(0, n1))?;
        let backgrounds = self.absent_bg.slice(0, n0).concat(&self.present_bg.slice(0, n1))?;
        Ok((images, backgrounds))
    }
}

pub struct ReplicateData {
    pub channel: ClassPools,
    /// `None` when the CHO reuses the channel-training images.
    pub observer: Option<ImageStack>,
    pub test: ImageStack,
}

#[cfg(test)]
mod tests {
    use super::*;
    use lgrad_core::{ABSENT, PRESENT};

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.phantom.height = 8;
        cfg.phantom.width = 8;
        cfg.phantom.kernel_sigma = 1.5;
        cfg.signal.sigma = 1.0;
        cfg.splits.channel_train_sizes = vec![10, 20];
        cfg.splits.observer_train_size = 12;
        cfg.splits.test_size = 16;
        cfg
    }

    #[test]
    fn class_counts_round_half_present() {
        assert_eq!(class_counts(10, 0.5), (5, 5));
        assert_eq!(class_counts(7, 0.3), (5, 2));
    }

    #[test]
    fn splits_are_balanced_and_prefix_nested() {
        let ctx = RunContext::new(small_config(), 3).unwrap();
        let data = ctx.build_replicate(0).unwrap();
        assert_eq!(data.test.len(), 16);
        assert_eq!(data.test.count(PRESENT), 8);
        assert_eq!(data.observer.as_ref().unwrap().count(ABSENT), 6);
        let (small, _) = data.channel.take(10, 0.5).unwrap();
        let (large, bgs) = data.channel.take(20, 0.5).unwrap();
        assert_eq!(large.len(), 20);
        assert_eq!(bgs.len(), 20);
        assert_eq!(small.image(0), large.image(0));
        assert_eq!(small.image(5), large.image(10));
    }

    #[test]
    fn splits_use_distinct_images() {
        let ctx = RunContext::new(small_config(), 3).unwrap();
        let data = ctx.build_replicate(0).unwrap();
        let obs = data.observer.unwrap();
        assert_ne!(data.test.image(0), obs.image(0));
        assert_ne!(data.test.image(0), data.channel.absent.image(0));
    }

    #[test]
    fn replicates_differ_and_rebuilds_match() {
        let ctx = RunContext::new(small_config(), 3).unwrap();
        let a = ctx.build_replicate(0).unwrap();
        let b = ctx.build_replicate(1).unwrap();
        let again = ctx.build_replicate(0).unwrap();
        assert_ne!(a.test.data(), b.test.data());
        assert_eq!(a.test.data(), again.test.data());
    }

    #[test]
    fn reuse_flag_drops_observer_split() {
        let mut cfg = small_config();
        cfg.splits.reuse_channel_train_for_observer = true;
        let ctx = RunContext::new(cfg, 3).unwrap();
        assert_eq!(ctx.split_plan().len(), 2);
        assert!(ctx.build_replicate(0).unwrap().observer.is_none());
    }
}
