//! The `bench` subcommand: channel-generation wall-clock over training sizes.

use std::fs;
use std::path::Path;

use lgrad_core::channels::{GenerationInputs, NoiseCovariance};
use lgrad_core::eval::{benchmark_generation, TimingRecord};
use lgrad_core::phantom::{assemble_dataset, generate_mvn_lumpy, render_gaussian_signal};

use crate::config::ExperimentConfig;
use crate::data::{class_counts, ClassPools};
use crate::error::CliError;
use crate::seeds::{derive_seed, Role};

pub const TIMING_FILE: &str = "timing.csv";

/// Times every bench method at every training size on a phantom of the bench
/// image size. Returns the records measured before any failure.
pub fn run_bench(cfg: &ExperimentConfig, seed: u64) -> (Vec<TimingRecord>, Option<CliError>) {
    let b = &cfg.bench;
    let f = cfg.splits.fraction_present;
    let mut phantom = cfg.phantom.clone();
    phantom.height = b.height;
    phantom.width = b.width;
    let signal = match render_gaussian_signal(&cfg.signal.gaussian(b.height, b.width), b.height, b.width) {
        Ok(s) => s,
        Err(e) => return (Vec::new(), Some(CliError::Config(e.to_string()))),
    };
    let n_max = b.train_sizes.iter().copied().max().unwrap_or(0);
    let (a_max, p_max) = class_counts(n_max, f);
    let seeds: Vec<u64> = (0..4).map(|i| derive_seed(seed, 0, Role::BenchData, i)).collect();
    let pools = (|| -> Result<ClassPools, CliError> {
        let absent_bg = generate_mvn_lumpy(&phantom.lumpy(seeds[0]), a_max)?;
        let present_bg = generate_mvn_lumpy(&phantom.lumpy(seeds[1]), p_max)?;
        Ok(ClassPools {
            absent: assemble_dataset(&absent_bg, &signal, &cfg.noise.noise(seeds[2]), 0.0)?,
            present: assemble_dataset(&present_bg, &signal, &cfg.noise.noise(seeds[3]), 1.0)?,
            absent_bg,
            present_bg,
        })
    })();
    let pools = match pools {
        Ok(p) => p,
        Err(e) => return (Vec::new(), Some(e)),
    };
    let noise = NoiseCovariance::White(cfg.noise.sigma_n * cfg.noise.sigma_n);
    let mut records = Vec::new();
    for &n in &b.train_sizes {
        let (train, backgrounds) = match pools.take(n, f) {
            Ok(v) => v,
            Err(e) => return (records, Some(e)),
        };
        for m in &b.methods {
            let inputs = GenerationInputs {
                train: &train,
                backgrounds: Some(&backgrounds),
                noise: Some(&noise),
                signal: Some(&signal),
            };
            let method = m.channel_method().expect("validated");
            match benchmark_generation(method, inputs, b.num_channels, b.repeats) {
                Ok(rec) => records.push(rec),
                Err(e) => return (records, Some(CliError::Runtime(format!("{m} at {n} images: {e}")))),
            }
        }
    }
    (records, None)
}

pub fn write_timing(path: &Path, records: &[TimingRecord]) -> Result<(), CliError> {
    let mut text = String::from("method,num_train,num_channels,seconds,repeats\n");
    for r in records {
        text += &format!("{},{},{},{:.6},{}\n", r.method, r.num_train, r.num_channels, r.seconds, r.repeats);
    }
    fs::write(path, text)?;
    Ok(())
}

/// Human-readable table with the PLS / L-grad time ratio when both ran.
pub fn format_table(records: &[TimingRecord]) -> String {
    use lgrad_core::channels::ChannelMethod;
    let mut out = format!("{:>10} {:>10} {:>10} {:>12} {:>8}\n", "method", "images", "channels", "seconds", "pls/lg");
    for r in records {
        let ratio = if r.method == ChannelMethod::Pls {
            records
                .iter()
                .find(|o| o.method == ChannelMethod::Lgrad && o.num_train == r.num_train)
                .map(|lg| format!("{:.2}", r.seconds / lg.seconds))
                .unwrap_or_default()
        } else {
            String::new()
        };
        out += &format!(
            "{:>10} {:>10} {:>10} {:>12.4} {:>8}\n",
            r.method.name(),
            r.num_train,
            r.num_channels,
            r.seconds,
            ratio
        );
    }
    out
}
