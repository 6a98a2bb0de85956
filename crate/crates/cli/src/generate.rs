//! The `generate` subcommand: writes a labelled phantom dataset as MOBS files.

use std::fs;
use std::path::Path;

use lgrad_core::mobs;
use lgrad_core::phantom::{assemble_dataset, generate_mvn_lumpy};

use crate::config::{ExperimentConfig, TaskKind};
use crate::data::RunContext;
use crate::error::CliError;
use crate::seeds::{derive_seed, Role};

pub const DATASET_FILE: &str = "dataset.mobs";
pub const BACKGROUNDS_FILE: &str = "backgrounds.mobs";
pub const SIGNAL_FILE: &str = "signal.mobs";

/// Writes `dataset.mobs` (noisy, labelled), `backgrounds.mobs` (noiseless)
/// and `signal.mobs`. ROI tasks use the first `generate.count` ROIs.
pub fn generate_dataset(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<usize, CliError> {
    let mut ctx_cfg = cfg.clone();
    ctx_cfg.splits.channel_train_sizes = vec![4];
    ctx_cfg.splits.observer_train_size = 4;
    ctx_cfg.splits.test_size = 4;
    let ctx = RunContext::new(ctx_cfg, seed)?;
    let count = cfg.generate.count;
    let backgrounds = match (&ctx.source, cfg.task.kind) {
        (crate::data::BackgroundSource::Roi(stack), TaskKind::RoiDirectory) => {
            if stack.len() < count {
                return Err(CliError::Config(format!("{count} images requested, {} ROIs available", stack.len())));
            }
            stack.slice(0, count)
        }
        _ => generate_mvn_lumpy(&cfg.phantom.lumpy(derive_seed(seed, 0, Role::GenerateBackgrounds, 0)), count)?,
    };
    let noise = cfg.noise.noise(derive_seed(seed, 0, Role::GenerateNoise, 0));
    let dataset = assemble_dataset(&backgrounds, &ctx.signal, &noise, cfg.generate.fraction_present)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    mobs::save(&dataset, out_dir.join(DATASET_FILE))?;
    mobs::save(&backgrounds, out_dir.join(BACKGROUNDS_FILE))?;
    mobs::save(&ctx.signal.to_stack(), out_dir.join(SIGNAL_FILE))?;
    let mut recorded = cfg.clone();
    recorded.experiment.seed = seed;
    fs::write(out_dir.join(crate::output::MANIFEST_FILE), recorded.to_toml())?;
    Ok(count)
}
