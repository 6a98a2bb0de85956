//! Acceptance checks, run in sequence so the timing check has the machine to
//! itself. Prints one PASS/FAIL line per check and exits non-zero on failure.

use std::collections::BTreeMap;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use lgrad_cli::bench::run_bench;
use lgrad_cli::output::ResultRow;
use lgrad_cli::{run_experiment, ExperimentConfig, Method, RunOptions};
use lgrad_core::channels::{lagrangian_gradient, ChannelMethod, LgradState, Step, TaskStats};
use lgrad_core::eval::{analytic_gaussian_auc, bootstrap_auc_ci, compute_auc};
use lgrad_core::observers::{score, ScoreSet};
use lgrad_core::phantom::{
    analytic_background_covariance, assemble_dataset, generate_mvn_lumpy, render_gaussian_signal,
    GaussianSignalConfig, MvnLumpyConfig, NoiseConfig,
};
use lgrad_core::stats::{symmetric_eigen, symmetric_solve, Cholesky, DEFAULT_SCHUR_TOL};
use lgrad_core::{ObserverKind, ObserverTemplate, SignalImage};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    norm(&(a - b)) / norm(b)
}

/// 16×16 task with exact statistics: K̄ = K_b + σ²I and Δ = s.
struct SmallTask {
    kbar: Array2<f64>,
    delta: Array1<f64>,
}

fn small_task() -> SmallTask {
    let lumpy = MvnLumpyConfig {
        height: 16,
        width: 16,
        dc_offset: 100.0,
        kernel_sigma: 0.7,
        field_magnitude: 30.0,
        seed: 5,
    };
    let noise = NoiseConfig { sigma_n: 3.0, seed: 6 };
    let signal = render_gaussian_signal(
        &GaussianSignalConfig {
            center_row: 6.3,
            center_col: 9.7,
            sigma: 1.0,
            amplitude: 10.0,
        },
        16,
        16,
    )
    .unwrap();
    SmallTask {
        kbar: analytic_background_covariance(&lumpy).unwrap() + noise.covariance(256),
        delta: signal.data().to_owned(),
    }
}

/// Orthonormal columns spanning the rows of `rows` (Gram–Schmidt, twice).
fn orthonormal_rows(rows: ArrayView2<'_, f64>) -> Array2<f64> {
    let (k, m) = rows.dim();
    let mut q = Array2::<f64>::zeros((m, k));
    for i in 0..k {
        let mut v = rows.row(i).to_owned();
        for _ in 0..2 {
            for j in 0..i {
                let c = q.column(j).dot(&v);
                v.scaled_add(-c, &q.column(j));
            }
        }
        let n = norm(&v);
        q.column_mut(i).assign(&(v / n));
    }
    q
}

/// Arnoldi basis of span{b, Ab, …, A^{k−1}b} with full reorthogonalization.
fn krylov_basis(a: &Array2<f64>, b: &Array1<f64>, k: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((b.len(), k));
    q.column_mut(0).assign(&(b / norm(b)));
    for i in 1..k {
        let mut v = a.dot(&q.column(i - 1));
        for _ in 0..2 {
            for j in 0..i {
                let c = q.column(j).dot(&v);
                v.scaled_add(-c, &q.column(j));
            }
        }
        let n = norm(&v);
        q.column_mut(i).assign(&(v / n));
    }
    q
}

fn max_principal_angle(qa: &Array2<f64>, qb: &Array2<f64>) -> f64 {
    let residual = qa - &qb.dot(&qb.t().dot(qa));
    let lam = symmetric_eigen(residual.t().dot(&residual).view()).unwrap().values;
    let top = lam.iter().cloned().fold(0.0f64, f64::max);
    top.max(0.0).sqrt().min(1.0).asin()
}

fn hotelling_recovery() -> Outcome {
    let start = Instant::now();
    let task = small_task();
    let stats = TaskStats::shared_covariance(&task.kbar, task.delta.clone()).unwrap();
    let w_ho = symmetric_solve(task.kbar.view(), task.delta.view(), 0.0).unwrap();
    let mut state = LgradState::new(&stats, DEFAULT_SCHUR_TOL);
    while state.iteration() < 256 && state.step().unwrap() == Step::Added {}
    let err = rel_err(&state.cho_template().to_owned(), &w_ho);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err < 1e-6 && secs < 10.0,
        format!("rel. error {err:.2e} with {} channels in {secs:.2} s", state.iteration()),
    )
}

fn krylov_identity() -> Outcome {
    let task = small_task();
    let stats = TaskStats::shared_covariance(&task.kbar, task.delta.clone()).unwrap();
    let t = lgrad_core::channels::generate_lgrad_channels(&stats, 20, DEFAULT_SCHUR_TOL).unwrap();
    let krylov = krylov_basis(&task.kbar, &task.delta, 20);
    let worst = (1..=t.num_channels().min(20))
        .map(|i| {
            let qt = orthonormal_rows(t.rows().slice(s![..i, ..]));
            max_principal_angle(&qt, &krylov.slice(s![.., ..i]).to_owned())
        })
        .fold(0.0f64, f64::max);
    outcome(
        t.num_channels() == 20 && worst < 1e-6,
        format!("max principal angle {worst:.2e} rad over i ≤ {}", t.num_channels()),
    )
}

/// ½ mean((wᵀ(g − μ₀))²) + ½ mean((wᵀ(g − μ₁))²) − 2 wᵀ(μ₁ − μ₀), λ = 2, c = 0.
fn sample_lagrangian(w: &Array1<f64>, g0: &Array2<f64>, g1: &Array2<f64>, m0: &Array1<f64>, m1: &Array1<f64>) -> f64 {
    let var = |g: &Array2<f64>, m: &Array1<f64>| (g.dot(w) - w.dot(m)).mapv(|v| v * v).mean().unwrap();
    0.5 * var(g0, m0) + 0.5 * var(g1, m1) - 2.0 * (w.dot(m1) - w.dot(m0))
}

fn gradient_check() -> Outcome {
    let (m, n) = (6, 400);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let g0 = Array2::from_shape_fn((n, m), |_| normal());
    let g1 = Array2::from_shape_fn((n, m), |_| normal() * 1.5 + 0.3);
    let m0 = g0.mean_axis(Axis(0)).unwrap();
    let m1 = g1.mean_axis(Axis(0)).unwrap();
    let cov = |g: &Array2<f64>, mu: &Array1<f64>| {
        let c = g - &mu.view().insert_axis(Axis(0));
        c.t().dot(&c) / n as f64
    };
    let stats = TaskStats::new(cov(&g0, &m0) + cov(&g1, &m1), &m1 - &m0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let w = Array1::from_shape_fn(m, |_| normal());
        let grad = lagrangian_gradient(w.view(), &stats).unwrap();
        let scale = grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let h = 1e-5;
        for k in 0..m {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[k] += h;
            wm[k] -= h;
            let fd = (sample_lagrangian(&wp, &g0, &g1, &m0, &m1) - sample_lagrangian(&wm, &g0, &g1, &m0, &m1)) / (2.0 * h);
            worst = worst.max((fd - grad[k]).abs() / scale);
        }
    }
    outcome(worst < 1e-4, format!("max relative component error {worst:.2e} at 20 points"))
}

fn incremental_inverse() -> Outcome {
    let task = small_task();
    let stats = TaskStats::shared_covariance(&task.kbar, task.delta.clone()).unwrap();
    let mut state = LgradState::new(&stats, DEFAULT_SCHUR_TOL);
    let mut worst = 0.0f64;
    for i in 1..=50 {
        if state.step().unwrap() != Step::Added {
            return outcome(false, format!("generation stopped at iteration {i}"));
        }
        let rows = state.channel_matrix().unwrap();
        let rows = rows.rows();
        let k_v = rows.dot(&task.kbar).dot(&rows.t());
        let k_v = (&k_v + &k_v.t()) * 0.5;
        let dv = rows.dot(&task.delta);
        let direct = rows.t().dot(&Cholesky::factor(k_v.view(), 0.0).unwrap().solve(dv.view()).unwrap());
        worst = worst.max(rel_err(&state.cho_template().to_owned(), &direct));
    }
    outcome(worst < 1e-8, format!("max rel. difference {worst:.2e} over D = 1..50"))
}

fn timing_trend() -> Outcome {
    let cfg = ExperimentConfig::parse(
        "[bench]\nheight = 64\nwidth = 64\ntrain_sizes = [1000, 4000, 16000]\nnum_channels = 50\nrepeats = 3\nmethods = [\"lgrad\", \"pls\"]\n",
    )
    .unwrap();
    let (records, failure) = run_bench(&cfg, 7);
    if let Some(e) = failure {
        return outcome(false, e.to_string());
    }
    let time = |m: ChannelMethod, n: usize| {
        records
            .iter()
            .find(|r| r.method == m && r.num_train == n)
            .map(|r| r.seconds)
            .unwrap()
    };
    let mut detail = Vec::new();
    let mut faster = true;
    let mut ratios = Vec::new();
    for n in [1000, 4000, 16000] {
        let (lg, pls) = (time(ChannelMethod::Lgrad, n), time(ChannelMethod::Pls, n));
        faster &= lg < pls;
        ratios.push(pls / lg);
        detail.push(format!("N={n}: lgrad {lg:.3} s, pls {pls:.3} s, ratio {:.2}", pls / lg));
    }
    let grows = ratios[2] > ratios[0];
    detail.push(format!("lgrad faster everywhere: {faster}; ratio grows: {grows}"));
    outcome(faster && grows, detail.join("; "))
}

fn analytic_auc_oracle() -> Outcome {
    let lumpy = MvnLumpyConfig {
        seed: 31,
        ..MvnLumpyConfig::default_profile()
    };
    let noise = NoiseConfig {
        seed: 32,
        ..NoiseConfig::default_profile()
    };
    let signal: SignalImage =
        render_gaussian_signal(&GaussianSignalConfig::default_profile(lumpy.height, lumpy.width), lumpy.height, lumpy.width)
            .unwrap();
    let kbar = analytic_background_covariance(&lumpy).unwrap() + noise.covariance(lumpy.dim());
    let w = symmetric_solve(kbar.view(), signal.data(), 0.0).unwrap();
    let snr = signal.data().dot(&w).sqrt();
    let expected = analytic_gaussian_auc(snr);
    let test = assemble_dataset(&generate_mvn_lumpy(&lumpy, 20_000).unwrap(), &signal, &noise, 0.5).unwrap();
    let scores: ScoreSet = score(&ObserverTemplate::new(w, ObserverKind::Ho).unwrap(), &test).unwrap();
    let auc = compute_auc(&scores).unwrap().auc;
    let se = bootstrap_auc_ci(&scores, 1000, 33).unwrap().std_err;
    let z = (auc - expected).abs() / se;
    outcome(
        z <= 3.0,
        format!("empirical {auc:.4} vs analytic {expected:.4} (SNR {snr:.3}), {z:.2} bootstrap SE apart"),
    )
}

fn fig2_config() -> ExperimentConfig {
    ExperimentConfig::parse(
        r#"
[splits]
channel_train_sizes = [2000]
observer_train_size = 2000
test_size = 4000

[experiment]
methods = ["lgrad", "lgrad_cmd", "pls", "ho_cmd"]
channel_counts = [1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50]
seed = 2024
replicates = 5
dump_channels = false
"#,
    )
    .unwrap()
}

/// Replicate-averaged (auc, lo, hi) per (method, num_channels).
fn summarize(rows: &[ResultRow]) -> BTreeMap<(&'static str, usize), (f64, f64, f64)> {
    let mut acc: BTreeMap<(&'static str, usize), (f64, f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.method.name(), r.num_channels)).or_default();
        e.0 += r.auc;
        e.1 += r.auc_lo;
        e.2 += r.auc_hi;
        e.3 += 1;
    }
    acc.into_iter()
        .map(|(k, (a, l, h, n))| (k, (a / n as f64, l / n as f64, h / n as f64)))
        .collect()
}

fn overlap(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    a.1 <= b.2 && b.1 <= a.2
}

fn fig2_ordering(rows: &[ResultRow]) -> Outcome {
    let s = summarize(rows);
    let (cmd, lg, pls, ho) = (s[&("lgrad_cmd", 50)], s[&("lgrad", 50)], s[&("pls", 50)], s[&("ho_cmd", 0)]);
    let gap_ok = |hi: (f64, f64, f64), lo: (f64, f64, f64)| hi.0 >= lo.0 || overlap(hi, lo);
    let order = gap_ok(cmd, lg) && gap_ok(lg, pls);
    let tracks_ho = cmd.1 <= ho.0 && ho.0 <= cmd.2;
    let replicates = rows.iter().filter(|r| r.method == Method::HoCmd).count();
    outcome(
        order && tracks_ho && replicates == 5,
        format!(
            "mean AUC at 50 channels over {replicates} replicates: lgrad_cmd {:.4} [{:.4}, {:.4}], lgrad {:.4}, pls {:.4}; reference CMD-HO {:.4}",
            cmd.0, cmd.1, cmd.2, lg.0, pls.0, ho.0
        ),
    )
}

fn saturation_shape(rows: &[ResultRow]) -> Outcome {
    // Exact statistics on the default profile.
    let lumpy = MvnLumpyConfig::default_profile();
    let noise = NoiseConfig::default_profile();
    let signal = render_gaussian_signal(&GaussianSignalConfig::default_profile(lumpy.height, lumpy.width), lumpy.height, lumpy.width)
        .unwrap();
    let kbar = analytic_background_covariance(&lumpy).unwrap() + noise.covariance(lumpy.dim());
    let stats = TaskStats::shared_covariance(&kbar, signal.data().to_owned()).unwrap();
    let mut state = LgradState::new(&stats, DEFAULT_SCHUR_TOL);
    let mut aucs = Vec::new();
    let mut snr2 = Vec::new();
    while state.iteration() < 50 && state.step().unwrap() == Step::Added {
        snr2.push(state.snr2());
        aucs.push(analytic_gaussian_auc(state.snr2().sqrt()));
    }
    let exact_monotone = snr2.windows(2).all(|p| p[1] >= p[0] * (1.0 - 1e-12)) && aucs.windows(2).all(|p| p[1] >= p[0] - 1e-12);

    let s = summarize(rows);
    let curve: Vec<(f64, f64, f64)> = s.iter().filter(|(k, _)| k.0 == "lgrad").map(|(_, v)| *v).collect();
    let drops = curve
        .windows(2)
        .filter(|p| p[1].0 < p[0].0 && !overlap(p[0], p[1]))
        .count();
    outcome(
        exact_monotone && drops == 0 && curve.len() > 1,
        format!(
            "exact-stats AUC {:.4} → {:.4} over {} channels (monotone: {exact_monotone}); sample-stats curve of {} points with {drops} non-overlapping drops",
            aucs.first().copied().unwrap_or(f64::NAN),
            aucs.last().copied().unwrap_or(f64::NAN),
            aucs.len(),
            curve.len()
        ),
    )
}

fn auc_unit_cases() -> Outcome {
    let set = |a: &[f64], p: &[f64]| {
        let mut scores = a.to_vec();
        scores.extend_from_slice(p);
        let mut labels = vec![0u8; a.len()];
        labels.extend(vec![1u8; p.len()]);
        compute_auc(&ScoreSet::new(scores, labels).unwrap()).unwrap().auc
    };
    let pairs = set(&[1.0, 2.0], &[1.5, 3.0]);
    let sep = set(&[0.0, 1.0, 2.0], &[5.0, 6.0]);
    let ties = set(&[1.0; 4], &[1.0; 3]);
    outcome(
        pairs == 0.75 && sep == 1.0 && ties == 0.5,
        format!("hand example {pairs}, separated {sep}, all ties {ties}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    fs::write(
        &cfg,
        "[phantom]\nheight = 16\nwidth = 16\nkernel_sigma = 2.0\n[signal]\nsigma = 1.5\n\
         [splits]\nchannel_train_sizes = [200, 400]\nobserver_train_size = 300\ntest_size = 300\nreference_backgrounds = 2000\n\
         [experiment]\nmethods = [\"lgrad\", \"lgrad_cmd\", \"pls\", \"ho_cmd\", \"rho\"]\nchannel_counts = [1, 5, 20]\nreplicates = 2\nseed = 5\n",
    )
    .unwrap();
    let run = |name: &str| -> Vec<String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_lgrad"))
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert!(status.success(), "run failed: {status}");
        // Drop the trailing timing column.
        fs::read_to_string(out.join("results.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let (a, b) = (run("a"), run("b"));
    outcome(a == b && a.len() > 1, format!("{} rows, identical: {}", a.len() - 1, a == b))
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "[{id:>2}] {} {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((id, name, o));
    };
    record(1, "Hotelling recovery from all L-grad channels", &hotelling_recovery);
    record(2, "channel span equals the Krylov subspace", &krylov_identity);
    record(3, "Lagrangian gradient vs finite differences", &gradient_check);
    record(4, "incremental inverse vs direct inversion", &incremental_inverse);
    record(5, "L-grad faster than PLS, gap widening with N", &timing_trend);
    record(6, "empirical HO AUC vs Gaussian formula", &analytic_auc_oracle);

    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..RunOptions::default()
    };
    let grid = run_experiment(&fig2_config(), &opts);
    println!("     (2,000-image grid, 5 replicates: {:.1} s)", start.elapsed().as_secs_f64());
    let rows = match grid {
        Ok(o) if o.errors.is_empty() => o.rows,
        Ok(o) => {
            println!("     grid errors: {:?}", o.errors);
            o.rows
        }
        Err(e) => {
            println!("     grid failed: {e}");
            Vec::new()
        }
    };
    record(7, "ordering lgrad_cmd ≥ lgrad ≥ pls and CMD tracks HO", &|| {
        if rows.is_empty() {
            outcome(false, "no results".into())
        } else {
            fig2_ordering(&rows)
        }
    });
    record(8, "AUC saturates monotonically in channel count", &|| saturation_shape(&rows));
    record(9, "AUC estimator unit cases", &auc_unit_cases);
    record(10, "byte-identical reruns", &determinism);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
