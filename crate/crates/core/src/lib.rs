//! Model observers for binary signal detection: Lagrangian-gradient (L-grad)
//! efficient channels, PLS channels, Hotelling / regularized Hotelling /
//! channelized Hotelling observers, lumpy-background phantoms and ROC
//! analysis.

pub mod channels;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod mobs;
pub mod observers;
pub mod phantom;
pub mod stats;
pub mod types;

pub use error::{ObserverError, Result};
pub use types::{ChannelMatrix, ImageStack, ObserverKind, ObserverTemplate, SignalImage, ABSENT, PRESENT};
