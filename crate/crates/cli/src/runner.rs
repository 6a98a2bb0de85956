//! The `run` subcommand: scores every (method, training size, channel count,
//! replicate) grid point and writes the result tables.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use lgrad_core::channels::{generate_channels, GenerationInputs, NoiseCovariance};
use lgrad_core::eval::{bootstrap_auc_ci, compute_auc};
use lgrad_core::mobs;
use lgrad_core::observers::{build_cho, build_rho, score, ChoTraining, LinearObserver};
use lgrad_core::phantom::generate_mvn_lumpy;
use lgrad_core::stats::{cmd_covariance, symmetric_solve};
use lgrad_core::{ImageStack, ObserverKind, ObserverTemplate};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Method};
use crate::data::{ReplicateData, RunContext};
use crate::error::CliError;
use crate::output::{self, DatasetSeeds, ErrorRow, Manifest, PointRecord, ResultRow, RunInfo};
use crate::seeds::{bootstrap_seed, derive_seed, Role};

/// Restricts a run to one grid point: `method:num_train:num_channels:replicate`.
/// Unchannelized observers use 0 channels; `ho_cmd` uses the reference
/// background count as `num_train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointFilter {
    pub method: Method,
    pub num_train: usize,
    pub num_channels: usize,
    pub replicate: usize,
}

impl FromStr for PointFilter {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || CliError::Config(format!("point {s:?} is not method:num_train:num_channels:replicate"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let int = |p: &str| p.parse::<usize>().map_err(|_| bad());
        Ok(PointFilter {
            method: parts[0].parse()?,
            num_train: int(parts[1])?,
            num_channels: int(parts[2])?,
            replicate: int(parts[3])?,
        })
    }
}

impl fmt::Display for PointFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.method, self.num_train, self.num_channels, self.replicate)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `experiment.output_dir`.
    pub out_dir: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    pub point: Option<PointFilter>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub errors: Vec<ErrorRow>,
}

/// One unit of parallel work within a replicate.
#[derive(Debug, Clone, Copy)]
enum Job {
    Channels { method: Method, num_train: usize },
    Rho { num_train: usize },
    HoCmd,
}

struct Plan {
    jobs: Vec<Job>,
    replicates: Vec<usize>,
    channel_counts: Vec<usize>,
}

fn plan(cfg: &ExperimentConfig, point: Option<PointFilter>) -> Result<Plan, CliError> {
    let e = &cfg.experiment;
    let mut jobs = Vec::new();
    for &method in &e.methods {
        match method {
            Method::HoCmd => jobs.push(Job::HoCmd),
            Method::Rho => jobs.extend(cfg.splits.channel_train_sizes.iter().map(|&n| Job::Rho { num_train: n })),
            _ => jobs.extend(
                cfg.splits
                    .channel_train_sizes
                    .iter()
                    .map(|&n| Job::Channels { method, num_train: n }),
            ),
        }
    }
    let mut plan = Plan {
        jobs,
        replicates: (0..e.replicates).collect(),
        channel_counts: e.channel_counts.clone(),
    };
    if let Some(p) = point {
        let reference = cfg.splits.reference_backgrounds;
        plan.jobs.retain(|job| match *job {
            Job::Channels { method, num_train } => method == p.method && num_train == p.num_train,
            Job::Rho { num_train } => p.method == Method::Rho && num_train == p.num_train && p.num_channels == 0,
            Job::HoCmd => p.method == Method::HoCmd && p.num_train == reference && p.num_channels == 0,
        });
        plan.replicates.retain(|&r| r == p.replicate);
        if p.method.channel_method().is_some() {
            plan.channel_counts.retain(|&d| d == p.num_channels);
        }
        let empty = plan.jobs.is_empty()
            || plan.replicates.is_empty()
            || (p.method.channel_method().is_some() && plan.channel_counts.is_empty());
        if empty {
            return Err(CliError::Config(format!("point {p} is not part of the configured grid")));
        }
    }
    Ok(plan)
}

/// A scored grid point. `channels_used` is below `row.num_channels` when
/// channel generation stopped early (the Krylov space was exhausted); the
/// CHO then uses every generated channel.
struct Scored {
    row: ResultRow,
    channels_used: usize,
}

type PointResult = Result<Scored, ErrorRow>;

fn error_row(method: Method, num_train: usize, num_channels: usize, replicate: usize, err: impl fmt::Display) -> ErrorRow {
    ErrorRow {
        method,
        num_train,
        num_channels,
        replicate,
        message: err.to_string(),
    }
}

struct Evaluator<'a> {
    ctx: &'a RunContext,
    channel_counts: &'a [usize],
    dump_dir: Option<PathBuf>,
}

impl Evaluator<'_> {
    fn auc_row(
        &self,
        observer: &impl LinearObserver,
        test: &ImageStack,
        key: (Method, usize, usize, usize),
        seconds: f64,
    ) -> PointResult {
        let (method, num_train, num_channels, replicate) = key;
        let fail = |e: lgrad_core::ObserverError| error_row(method, num_train, num_channels, replicate, e);
        let scores = score(observer, test).map_err(fail)?;
        let auc = compute_auc(&scores).map_err(fail)?.auc;
        let seed = bootstrap_seed(self.ctx.master_seed, replicate, method, num_train, num_channels);
        let ci = bootstrap_auc_ci(&scores, self.ctx.cfg.experiment.bootstrap_resamples, seed).map_err(fail)?;
        Ok(Scored {
            row: ResultRow {
                method,
                num_train,
                num_channels,
                replicate,
                auc,
                auc_lo: ci.low,
                auc_hi: ci.high,
                seconds,
            },
            channels_used: num_channels,
        })
    }

    fn signal_if_ske(&self) -> Option<&lgrad_core::SignalImage> {
        self.ctx.cfg.experiment.signal_known_exactly.then_some(&self.ctx.signal)
    }

    fn channel_job(&self, data: &ReplicateData, method: Method, num_train: usize, replicate: usize) -> Vec<PointResult> {
        let counts = self.channel_counts;
        let fail_all = |e: &dyn fmt::Display| -> Vec<PointResult> {
            counts
                .iter()
                .map(|&d| Err(error_row(method, num_train, d, replicate, e)))
                .collect()
        };
        let f = self.ctx.cfg.splits.fraction_present;
        let (train, backgrounds) = match data.channel.take(num_train, f) {
            Ok(v) => v,
            Err(e) => return fail_all(&e),
        };
        let observer_train = data.observer.as_ref().unwrap_or(&train);
        let sigma = self.ctx.cfg.noise.sigma_n;
        let noise = NoiseCovariance::White(sigma * sigma);
        let cm = method.channel_method().expect("channelized method");
        let signal = match method {
            Method::LgradCmd => Some(&self.ctx.signal),
            _ => self.signal_if_ske(),
        };
        let inputs = GenerationInputs {
            train: &train,
            backgrounds: Some(&backgrounds),
            noise: Some(&noise),
            signal,
        };
        // PLS extracts at most N − 1 components; larger counts fail individually.
        let cap = match method {
            Method::Pls => num_train.saturating_sub(1),
            _ => usize::MAX,
        };
        let d_max = counts.iter().copied().filter(|&d| d <= cap).max();
        let Some(d_max) = d_max else {
            return fail_all(&format!("pls with {num_train} training images supports at most {cap} channels"));
        };
        let start = Instant::now();
        let channels = match generate_channels(cm, inputs, d_max) {
            Ok(t) => t,
            Err(e) => return fail_all(&e),
        };
        let seconds = start.elapsed().as_secs_f64();

        if let Some(dir) = &self.dump_dir {
            let stem = dir.join(format!("{method}_n{num_train}_r{replicate}"));
            let dumped = channels
                .to_stack(self.ctx.height(), self.ctx.width())
                .and_then(|stack| mobs::save(&stack, stem.with_extension("mobs")))
                .and_then(|_| {
                    let file = fs::File::create(stem.with_extension("csv"))?;
                    channels.write_csv(std::io::BufWriter::new(file))
                });
            if let Err(e) = dumped {
                return fail_all(&format!("channel dump failed: {e}"));
            }
        }

        counts
            .iter()
            .map(|&d| {
                if d > cap {
                    return Err(error_row(
                        method,
                        num_train,
                        d,
                        replicate,
                        format!("pls with {num_train} training images supports at most {cap} channels"),
                    ));
                }
                let used = d.min(channels.num_channels());
                let fail = |e: lgrad_core::ObserverError| error_row(method, num_train, d, replicate, e);
                let t = channels.prefix(used).map_err(fail)?;
                let model = build_cho(&t, ChoTraining::Samples(observer_train), self.signal_if_ske()).map_err(fail)?;
                let scored = self.auc_row(&model, &data.test, (method, num_train, d, replicate), seconds)?;
                Ok(Scored {
                    channels_used: used,
                    ..scored
                })
            })
            .collect()
    }

    fn rho_job(&self, data: &ReplicateData, num_train: usize, replicate: usize) -> PointResult {
        let fail = |e: &dyn fmt::Display| error_row(Method::Rho, num_train, 0, replicate, e);
        let (train, _) = data.channel.take(num_train, self.ctx.cfg.splits.fraction_present).map_err(|e| fail(&e))?;
        let start = Instant::now();
        let template =
            build_rho(&train, self.signal_if_ske(), self.ctx.cfg.experiment.rho_rank_tol).map_err(|e| fail(&e))?;
        let seconds = start.elapsed().as_secs_f64();
        self.auc_row(&template, &data.test, (Method::Rho, num_train, 0, replicate), seconds)
    }
}

/// CMD Hotelling template from many noiseless backgrounds, shared by all replicates.
fn reference_ho(ctx: &RunContext) -> Result<(ObserverTemplate, f64), CliError> {
    let cfg = &ctx.cfg;
    let seed = derive_seed(ctx.master_seed, 0, Role::Reference, 0);
    let backgrounds = generate_mvn_lumpy(&cfg.phantom.lumpy(seed), cfg.splits.reference_backgrounds)?;
    let start = Instant::now();
    let m = backgrounds.dim();
    let noise = NoiseCovariance::White(cfg.noise.sigma_n * cfg.noise.sigma_n).to_dense(m);
    let k = cmd_covariance(&backgrounds, noise.view())?;
    let w = symmetric_solve(k.view(), ctx.signal.data(), 0.0)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok((ObserverTemplate::new(w, ObserverKind::Ho)?, seconds))
}

fn dataset_seeds(ctx: &RunContext, replicates: &[usize]) -> Vec<DatasetSeeds> {
    let mut out = Vec::new();
    for &r in replicates {
        for p in ctx.split_plan() {
            let (bg, noise) = ctx.split_seeds(r, p.split);
            out.push(DatasetSeeds {
                replicate: r,
                split: p.split.name().to_string(),
                absent: p.absent,
                present: p.present,
                absent_background_seed: bg[0],
                present_background_seed: bg[1],
                absent_noise_seed: noise[0],
                present_noise_seed: noise[1],
            });
        }
    }
    out
}

pub fn resolve_out_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    opts.out_dir.clone().unwrap_or_else(|| cfg.experiment.output_dir.clone())
}

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if threads == Some(0) {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(CliError::runtime)
}

/// Runs the configured grid and writes results.csv, errors.csv,
/// manifest.toml, the plotting helper and channel dumps under the output
/// directory. Grid-point failures land in errors.csv and do not abort the run.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.experiment.seed = seed;
    }
    cfg.validate()?;
    let out_dir = resolve_out_dir(&cfg, opts);
    let plan = plan(&cfg, opts.point)?;
    let pool = thread_pool(opts.threads)?;
    let master_seed = cfg.experiment.seed;
    let ctx = RunContext::new(cfg, master_seed)?;
    fs::create_dir_all(&out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let has_channel_jobs = plan.jobs.iter().any(|j| matches!(j, Job::Channels { .. }));
    let dump_dir = (ctx.cfg.experiment.dump_channels && has_channel_jobs).then(|| out_dir.join("channels"));
    if let Some(dir) = &dump_dir {
        fs::create_dir_all(dir)?;
    }
    let eval = Evaluator {
        ctx: &ctx,
        channel_counts: &plan.channel_counts,
        dump_dir,
    };

    let reference = if plan.jobs.iter().any(|j| matches!(j, Job::HoCmd)) {
        Some(pool.install(|| reference_ho(&ctx)).map_err(|e| e.to_string()))
    } else {
        None
    };

    let mut results: Vec<PointResult> = Vec::new();
    for &r in &plan.replicates {
        let data = match pool.install(|| ctx.build_replicate(r)) {
            Ok(d) => d,
            Err(e) => {
                for job in &plan.jobs {
                    results.extend(job_keys(job, &plan.channel_counts, &ctx.cfg).map(|(m, n, d)| Err(error_row(m, n, d, r, &e))));
                }
                continue;
            }
        };
        let per_job: Vec<Vec<PointResult>> = pool.install(|| {
            plan.jobs
                .par_iter()
                .map(|job| match *job {
                    Job::Channels { method, num_train } => eval.channel_job(&data, method, num_train, r),
                    Job::Rho { num_train } => vec![eval.rho_job(&data, num_train, r)],
                    Job::HoCmd => {
                        let n = ctx.cfg.splits.reference_backgrounds;
                        vec![match reference.as_ref().expect("built when planned") {
                            Ok((template, secs)) => eval.auc_row(template, &data.test, (Method::HoCmd, n, 0, r), *secs),
                            Err(e) => Err(error_row(Method::HoCmd, n, 0, r, e)),
                        }]
                    }
                })
                .collect()
        });
        results.extend(per_job.into_iter().flatten());
    }

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut points = Vec::new();
    for res in results {
        let (method, n, d, r, status) = match &res {
            Ok(Scored { row, channels_used }) => {
                let status = if *channels_used < row.num_channels && row.num_channels > 0 {
                    format!("ok: generation stopped early, {channels_used} channels used")
                } else {
                    "ok".to_string()
                };
                (row.method, row.num_train, row.num_channels, row.replicate, status)
            }
            Err(err) => (err.method, err.num_train, err.num_channels, err.replicate, format!("error: {}", err.message)),
        };
        points.push(PointRecord {
            method: method.name().to_string(),
            num_train: n,
            num_channels: d,
            replicate: r,
            bootstrap_seed: bootstrap_seed(ctx.master_seed, r, method, n, d),
            status,
        });
        match res {
            Ok(scored) => rows.push(scored.row),
            Err(err) => errors.push(err),
        }
    }

    output::write_results(&out_dir.join(output::RESULTS_FILE), &rows)?;
    output::write_errors(&out_dir.join(output::ERRORS_FILE), &errors)?;
    let manifest = Manifest {
        run: RunInfo {
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: ctx.master_seed,
            point: opts.point.map(|p| p.to_string()),
            roi_permutation_seeds: match ctx.source {
                crate::data::BackgroundSource::Roi(_) => plan
                    .replicates
                    .iter()
                    .map(|&r| derive_seed(ctx.master_seed, r, Role::RoiPermutation, 0))
                    .collect(),
                crate::data::BackgroundSource::Lumpy => Vec::new(),
            },
            reference_background_seed: reference
                .is_some()
                .then(|| derive_seed(ctx.master_seed, 0, Role::Reference, 0)),
        },
        config: ctx.cfg.clone(),
        datasets: dataset_seeds(&ctx, &plan.replicates),
        points,
    };
    output::write_manifest(&out_dir.join(output::MANIFEST_FILE), &manifest)?;
    output::write_plot_script(&out_dir.join(output::PLOT_SCRIPT))?;
    Ok(RunOutcome { out_dir, rows, errors })
}

/// Grid keys (method, num_train, num_channels) produced by a job.
fn job_keys<'a>(
    job: &Job,
    counts: &'a [usize],
    cfg: &ExperimentConfig,
) -> Box<dyn Iterator<Item = (Method, usize, usize)> + 'a> {
    match *job {
        Job::Channels { method, num_train } => Box::new(counts.iter().map(move |&d| (method, num_train, d))),
        Job::Rho { num_train } => Box::new(std::iter::once((Method::Rho, num_train, 0))),
        Job::HoCmd => Box::new(std::iter::once((Method::HoCmd, cfg.splits.reference_backgrounds, 0))),
    }
}

/// Expected number of grid points of a full run.
pub fn expected_points(cfg: &ExperimentConfig) -> usize {
    let s = &cfg.splits;
    let e = &cfg.experiment;
    let per_replicate: usize = e
        .methods
        .iter()
        .map(|m| match m {
            Method::HoCmd => 1,
            Method::Rho => s.channel_train_sizes.len(),
            _ => s.channel_train_sizes.len() * e.channel_counts.len(),
        })
        .sum();
    per_replicate * e.replicates
}

pub fn load_outcome_rows(out_dir: &Path) -> Result<Vec<ResultRow>, CliError> {
    output::read_results(&out_dir.join(output::RESULTS_FILE))
}
