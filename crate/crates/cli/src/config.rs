//! TOML experiment configuration. Every section is optional and falls back to
//! the calibrated 32×32 profile; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lgrad_core::channels::ChannelMethod;
use lgrad_core::phantom::{GaussianSignalConfig, MvnLumpyConfig, NoiseConfig, DEFAULT_SIGNAL_AMPLITUDE};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MvnLumpy,
    RoiDirectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lgrad,
    LgradCmd,
    Pls,
    HoCmd,
    Rho,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Lgrad, Method::LgradCmd, Method::Pls, Method::HoCmd, Method::Rho];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lgrad => "lgrad",
            Method::LgradCmd => "lgrad_cmd",
            Method::Pls => "pls",
            Method::HoCmd => "ho_cmd",
            Method::Rho => "rho",
        }
    }

    /// The channel generator behind a channelized method.
    pub fn channel_method(self) -> Option<ChannelMethod> {
        match self {
            Method::Lgrad => Some(ChannelMethod::Lgrad),
            Method::LgradCmd => Some(ChannelMethod::LgradCmd),
            Method::Pls => Some(ChannelMethod::Pls),
            Method::HoCmd | Method::Rho => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub kind: TaskKind,
    /// ROI directory (MOBS files or raw payloads with a manifest).
    pub roi_path: Option<PathBuf>,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            kind: TaskKind::MvnLumpy,
            roi_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    pub height: usize,
    pub width: usize,
    pub dc_offset: f64,
    pub kernel_sigma: f64,
    pub field_magnitude: f64,
}

impl Default for PhantomSection {
    fn default() -> Self {
        let p = MvnLumpyConfig::default_profile();
        PhantomSection {
            height: p.height,
            width: p.width,
            dc_offset: p.dc_offset,
            kernel_sigma: p.kernel_sigma,
            field_magnitude: p.field_magnitude,
        }
    }
}

impl PhantomSection {
    pub fn lumpy(&self, seed: u64) -> MvnLumpyConfig {
        MvnLumpyConfig {
            height: self.height,
            width: self.width,
            dc_offset: self.dc_offset,
            kernel_sigma: self.kernel_sigma,
            field_magnitude: self.field_magnitude,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    /// Defaults to the image center.
    pub center_row: Option<f64>,
    pub center_col: Option<f64>,
    pub sigma: f64,
    pub amplitude: f64,
    /// Pre-rendered signal (single-image MOBS file); overrides the Gaussian.
    pub path: Option<PathBuf>,
}

impl Default for SignalSection {
    fn default() -> Self {
        SignalSection {
            center_row: None,
            center_col: None,
            sigma: 3.0,
            amplitude: DEFAULT_SIGNAL_AMPLITUDE,
            path: None,
        }
    }
}

impl SignalSection {
    pub fn gaussian(&self, height: usize, width: usize) -> GaussianSignalConfig {
        let base = GaussianSignalConfig::default_profile(height, width);
        GaussianSignalConfig {
            center_row: self.center_row.unwrap_or(base.center_row),
            center_col: self.center_col.unwrap_or(base.center_col),
            sigma: self.sigma,
            amplitude: self.amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_n: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            sigma_n: NoiseConfig::default_profile().sigma_n,
        }
    }
}

impl NoiseSection {
    pub fn noise(&self, seed: u64) -> NoiseConfig {
        NoiseConfig {
            sigma_n: self.sigma_n,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitsSection {
    pub channel_train_sizes: Vec<usize>,
    pub observer_train_size: usize,
    pub test_size: usize,
    pub fraction_present: f64,
    /// Train the CHO on the channel-training images instead of a separate set.
    pub reuse_channel_train_for_observer: bool,
    /// Noiseless backgrounds behind the reference CMD Hotelling observer.
    pub reference_backgrounds: usize,
}

impl Default for SplitsSection {
    fn default() -> Self {
        SplitsSection {
            channel_train_sizes: vec![1000, 2000, 4000],
            observer_train_size: 2000,
            test_size: 4000,
            fraction_present: 0.5,
            reuse_channel_train_for_observer: false,
            reference_backgrounds: 40_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub methods: Vec<Method>,
    pub channel_counts: Vec<usize>,
    pub seed: u64,
    pub replicates: usize,
    pub bootstrap_resamples: usize,
    /// Use the known signal as the mean difference for channels and observers.
    pub signal_known_exactly: bool,
    pub rho_rank_tol: f64,
    pub dump_channels: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            methods: vec![Method::Lgrad, Method::LgradCmd, Method::Pls, Method::HoCmd],
            channel_counts: vec![1, 2, 5, 10, 20, 30, 40, 50],
            seed: 1,
            replicates: 1,
            bootstrap_resamples: 1000,
            signal_known_exactly: true,
            rho_rank_tol: 1e-10,
            dump_channels: true,
            output_dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub height: usize,
    pub width: usize,
    pub train_sizes: Vec<usize>,
    pub num_channels: usize,
    pub repeats: usize,
    pub methods: Vec<Method>,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            height: 64,
            width: 64,
            train_sizes: vec![1000, 4000, 16000],
            num_channels: 50,
            repeats: 3,
            methods: vec![Method::Lgrad, Method::Pls],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub count: usize,
    pub fraction_present: f64,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            count: 1000,
            fraction_present: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSection,
    pub phantom: PhantomSection,
    pub signal: SignalSection,
    pub noise: NoiseSection,
    pub splits: SplitsSection,
    pub experiment: ExperimentSection,
    pub bench: BenchSection,
    pub generate: GenerateSection,
}

fn require(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.phantom;
        require(p.height > 0 && p.width > 0, "phantom height and width must be positive")?;
        require(p.kernel_sigma > 0.0, "phantom.kernel_sigma must be positive")?;
        require(p.field_magnitude >= 0.0, "phantom.field_magnitude must be nonnegative")?;
        require(self.signal.sigma > 0.0, "signal.sigma must be positive")?;
        require(self.signal.amplitude.is_finite(), "signal.amplitude must be finite")?;
        require(self.noise.sigma_n >= 0.0, "noise.sigma_n must be nonnegative")?;
        if self.task.kind == TaskKind::RoiDirectory {
            require(self.task.roi_path.is_some(), "task.roi_path is required for roi_directory tasks")?;
        }

        let s = &self.splits;
        require(!s.channel_train_sizes.is_empty(), "splits.channel_train_sizes must not be empty")?;
        require(!has_duplicates(&s.channel_train_sizes), "splits.channel_train_sizes has duplicates")?;
        require(
            s.fraction_present > 0.0 && s.fraction_present < 1.0,
            "splits.fraction_present must lie strictly between 0 and 1",
        )?;
        for (what, n) in s
            .channel_train_sizes
            .iter()
            .map(|&n| ("channel training size", n))
            .chain([("observer_train_size", s.observer_train_size), ("test_size", s.test_size)])
        {
            let present = (s.fraction_present * n as f64).round() as usize;
            if present < 2 || n - present < 2 {
                return Err(CliError::Config(format!("{what} {n} leaves fewer than 2 images in a class")));
            }
        }

        let e = &self.experiment;
        require(!e.methods.is_empty(), "experiment.methods must name at least one method")?;
        require(!has_duplicates(&e.methods), "experiment.methods has duplicates")?;
        let channelized = e.methods.iter().any(|m| m.channel_method().is_some());
        if channelized {
            require(!e.channel_counts.is_empty(), "experiment.channel_counts must not be empty")?;
            require(e.channel_counts.iter().all(|&d| d > 0), "channel counts must be positive")?;
            require(!has_duplicates(&e.channel_counts), "experiment.channel_counts has duplicates")?;
        }
        require(e.replicates > 0, "experiment.replicates must be positive")?;
        require(e.bootstrap_resamples >= 100, "experiment.bootstrap_resamples must be at least 100")?;
        require(e.rho_rank_tol > 0.0 && e.rho_rank_tol < 1.0, "experiment.rho_rank_tol must lie in (0, 1)")?;
        if e.methods.contains(&Method::HoCmd) {
            require(
                self.task.kind == TaskKind::MvnLumpy,
                "ho_cmd needs a synthetic background model; use rho for roi_directory tasks",
            )?;
            require(s.reference_backgrounds >= 2, "splits.reference_backgrounds must be at least 2")?;
        }
        if e.methods.contains(&Method::LgradCmd) || e.methods.contains(&Method::HoCmd) {
            require(
                e.signal_known_exactly,
                "lgrad_cmd and ho_cmd need signal_known_exactly = true",
            )?;
        }

        let b = &self.bench;
        require(b.height > 0 && b.width > 0, "bench height and width must be positive")?;
        require(!b.train_sizes.is_empty(), "bench.train_sizes must not be empty")?;
        require(b.num_channels > 0, "bench.num_channels must be positive")?;
        require(b.repeats > 0, "bench.repeats must be positive")?;
        require(
            !b.methods.is_empty() && b.methods.iter().all(|m| m.channel_method().is_some()),
            "bench.methods must be a nonempty subset of lgrad, lgrad_cmd, pls",
        )?;

        let g = &self.generate;
        require(g.count > 0, "generate.count must be positive")?;
        require((0.0..=1.0).contains(&g.fraction_present), "generate.fraction_present must lie in [0, 1]")?;
        Ok(())
    }

    pub fn channel_count_max(&self) -> usize {
        self.experiment.channel_counts.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse("[splits]\ntest_sise = 10\n").unwrap_err();
        assert!(matches!(err, CliError::Config(ref m) if m.contains("test_sise")), "{err}");
        assert!(ExperimentConfig::parse("[nonsense]\n").is_err());
    }

    #[test]
    fn unknown_method_is_rejected() {
        assert!(ExperimentConfig::parse("[experiment]\nmethods = [\"cnn\"]\n").is_err());
    }

    #[test]
    fn roundtrip_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.methods = vec![Method::Pls, Method::Rho];
        cfg.signal.center_row = Some(3.5);
        let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[experiment]\nmethods = []\n",
            "[experiment]\nchannel_counts = [0]\n",
            "[experiment]\nreplicates = 0\n",
            "[experiment]\nbootstrap_resamples = 10\n",
            "[splits]\nchannel_train_sizes = []\n",
            "[splits]\nfraction_present = 1.0\n",
            "[splits]\ntest_size = 2\n",
            "[phantom]\nkernel_sigma = 0.0\n",
            "[task]\nkind = \"roi_directory\"\n",
            "[task]\nkind = \"roi_directory\"\nroi_path = \"x\"\n[experiment]\nmethods = [\"ho_cmd\"]\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }
}
