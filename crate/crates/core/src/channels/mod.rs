//! Efficient-channel generation: L-grad (sample and CMD statistics) and PLS.

mod lgrad;
mod pls;

pub use lgrad::{
    generate_lgrad_channels, generate_lgrad_channels_from_class_stats, generate_lgrad_channels_from_samples,
    generate_lgrad_cmd_channels, generate_lgrad_cmd_channels_from_covariance, lagrangian_gradient,
    lagrangian_value, LgradState, NoiseCovariance, Step, TaskStats,
};
pub use pls::{fit_pls, generate_pls_channels, PlsFit, PLS_STOP_TOL};

use std::fmt;
use std::str::FromStr;

use crate::error::{ObserverError, Result};
use crate::types::{ChannelMatrix, ImageStack, SignalImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelMethod {
    Lgrad,
    LgradCmd,
    Pls,
}

impl ChannelMethod {
    pub const ALL: [ChannelMethod; 3] = [ChannelMethod::Lgrad, ChannelMethod::LgradCmd, ChannelMethod::Pls];

    pub fn name(self) -> &'static str {
        match self {
            ChannelMethod::Lgrad => "lgrad",
            ChannelMethod::LgradCmd => "lgrad_cmd",
            ChannelMethod::Pls => "pls",
        }
    }
}

impl fmt::Display for ChannelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelMethod {
    type Err = ObserverError;

    fn from_str(s: &str) -> Result<Self> {
        ChannelMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ObserverError::validation(format!("unknown channel method {s:?}")))
    }
}

/// Everything a channel generator may consume. `train` feeds L-grad and PLS;
/// `backgrounds` and `noise` feed L-grad-CMD; `signal` switches L-grad to
/// signal-known-exactly mode and is required by L-grad-CMD.
#[derive(Clone, Copy)]
pub struct GenerationInputs<'a> {
    pub train: &'a ImageStack,
    pub backgrounds: Option<&'a ImageStack>,
    pub noise: Option<&'a NoiseCovariance>,
    pub signal: Option<&'a SignalImage>,
}

pub fn generate_channels(method: ChannelMethod, inputs: GenerationInputs<'_>, num_channels: usize) -> Result<ChannelMatrix> {
    match method {
        ChannelMethod::Lgrad => generate_lgrad_channels_from_samples(inputs.train, inputs.signal, num_channels),
        ChannelMethod::Pls => generate_pls_channels(inputs.train, num_channels),
        ChannelMethod::LgradCmd => {
            let missing = |what: &str| ObserverError::validation(format!("lgrad_cmd needs {what}"));
            generate_lgrad_cmd_channels(
                inputs.backgrounds.ok_or_else(|| missing("noiseless backgrounds"))?,
                inputs.noise.ok_or_else(|| missing("the noise covariance"))?,
                inputs.signal.ok_or_else(|| missing("the signal image"))?,
                num_channels,
            )
        }
    }
}
