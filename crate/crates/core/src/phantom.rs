//! Synthetic data: multivariate-normal lumpy backgrounds, Gaussian signals,
//! additive Gaussian noise, and ingestion of external ROI directories.
//!
//! The lumpy background is a stationary Gaussian random field on a torus:
//! white noise circularly convolved with a separable Gaussian kernel, scaled
//! to a prescribed per-pixel standard deviation, plus a DC offset. Its
//! covariance is known in closed form (see [`analytic_background_covariance`]).

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, ObserverError, Result};
use crate::eval::detectability_for_auc;
use crate::kernels::{axpy, dot};
use crate::mobs;
use crate::stats::Cholesky;
use crate::types::{ImageStack, SignalImage, ABSENT, PRESENT};

#[derive(Debug, Clone, PartialEq)]
pub struct MvnLumpyConfig {
    pub height: usize,
    pub width: usize,
    pub dc_offset: f64,
    /// Lump correlation width in pixels.
    pub kernel_sigma: f64,
    /// Per-pixel standard deviation of the correlated field.
    pub field_magnitude: f64,
    pub seed: u64,
}

impl MvnLumpyConfig {
    /// 32×32 desk-scale profile used by the default experiments.
    pub fn default_profile() -> Self {
        MvnLumpyConfig {
            height: 32,
            width: 32,
            dc_offset: 100.0,
            kernel_sigma: 5.0,
            field_magnitude: 30.0,
            seed: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(ObserverError::validation("image dimensions must be positive"));
        }
        if !(self.kernel_sigma > 0.0) {
            return Err(ObserverError::validation("kernel_sigma must be positive"));
        }
        if !(self.field_magnitude >= 0.0) {
            return Err(ObserverError::validation("field_magnitude must be nonnegative"));
        }
        Ok(())
    }

    /// True when the image is smaller than four lump widths; the field is
    /// still exact but lumps wrap around noticeably.
    pub fn undersized(&self) -> bool {
        let min_side = 4.0 * self.kernel_sigma;
        (self.height as f64) < min_side || (self.width as f64) < min_side
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSignalConfig {
    pub center_row: f64,
    pub center_col: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

impl GaussianSignalConfig {
    /// Centered signal of width 3 px. The amplitude puts the Hotelling AUC of
    /// the default lumpy/noise profile near 0.87 (see
    /// [`calibrate_signal_amplitude`]).
    pub fn default_profile(height: usize, width: usize) -> Self {
        GaussianSignalConfig {
            center_row: (height / 2) as f64,
            center_col: (width / 2) as f64,
            sigma: 3.0,
            amplitude: DEFAULT_SIGNAL_AMPLITUDE,
        }
    }
}

/// Output of [`calibrate_signal_amplitude`] for the default profiles
/// (target Hotelling AUC 0.87), frozen here.
pub const DEFAULT_SIGNAL_AMPLITUDE: f64 = 11.1;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub sigma_n: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn default_profile() -> Self {
        NoiseConfig {
            sigma_n: 10.0,
            seed: 2,
        }
    }

    /// K_n = σ_n² I
    pub fn covariance(&self, dim: usize) -> Array2<f64> {
        Array2::eye(dim) * (self.sigma_n * self.sigma_n)
    }
}

/// Circular Gaussian profile on a ring of `n` samples, normalized to unit sum.
fn ring_gaussian(n: usize, sigma: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n)
        .map(|j| {
            let d = j.min(n - j) as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    g
}

/// Circular autocorrelation A(d) = Σ_j g[j]·g[(j+d) mod n], mirrored so that
/// A(d) = A(n − d) holds bitwise.
fn ring_autocorrelation(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut a: Vec<f64> = (0..n)
        .map(|d| (0..n).map(|j| g[j] * g[(j + d) % n]).sum())
        .collect();
    for d in 1..n {
        if d > n - d {
            a[d] = a[n - d];
        }
    }
    a
}

struct LumpyKernel {
    g_row: Vec<f64>,
    g_col_rev: Vec<f64>,
    scale: f64,
}

impl LumpyKernel {
    fn new(config: &MvnLumpyConfig) -> Self {
        let g_row = ring_gaussian(config.height, config.kernel_sigma);
        let g_col = ring_gaussian(config.width, config.kernel_sigma);
        let energy = dot(&g_row, &g_row) * dot(&g_col, &g_col);
        let g_col_rev = g_col.iter().rev().copied().collect();
        LumpyKernel {
            g_row,
            g_col_rev,
            scale: config.field_magnitude / energy.sqrt(),
        }
    }

    /// Circular convolution of a white-noise image, written into `out`.
    fn convolve(&self, z: &[f64], height: usize, width: usize, out: &mut [f64]) {
        // Along each row: out[c] = Σ_j g[j]·z[(c − j) mod W], via a doubled row.
        let mut rows = vec![0.0; height * width];
        let mut doubled = vec![0.0; 2 * width];
        for r in 0..height {
            let src = &z[r * width..(r + 1) * width];
            doubled[..width].copy_from_slice(src);
            doubled[width..].copy_from_slice(src);
            for c in 0..width {
                rows[r * width + c] = dot(&doubled[c + 1..c + 1 + width], &self.g_col_rev);
            }
        }
        // Along each column, as row combinations: out[r] = Σ_j g[j]·rows[(r − j) mod H].
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..height {
            let dst = &mut out[r * width..(r + 1) * width];
            for (j, &gj) in self.g_row.iter().enumerate() {
                let src_r = (r + height - j) % height;
                axpy(gj, &rows[src_r * width..(src_r + 1) * width], dst);
            }
        }
    }
}

/// `count` noiseless lumpy backgrounds (label 0), deterministic in `config.seed`.
pub fn generate_mvn_lumpy(config: &MvnLumpyConfig, count: usize) -> Result<ImageStack> {
    config.validate()?;
    if count == 0 {
        return Err(ObserverError::validation("count must be positive"));
    }
    let (h, w) = (config.height, config.width);
    let m = h * w;
    let mut data = Array2::<f64>::zeros((count, m));
    if config.field_magnitude > 0.0 {
        let kernel = LumpyKernel::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut z = vec![0.0; m];
        for mut row in data.outer_iter_mut() {
            z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
            let out = row.as_slice_mut().expect("row-major");
            kernel.convolve(&z, h, w, out);
        }
        data.mapv_inplace(|v| v * kernel.scale);
    }
    data += config.dc_offset;
    ImageStack::with_label(data, ABSENT, h, w)
}

/// Stationary covariance Cov(b(r,c), b(r+dr, c+dc)) of the lumpy field.
pub fn analytic_background_autocovariance(config: &MvnLumpyConfig) -> Result<Array2<f64>> {
    config.validate()?;
    let g_row = ring_gaussian(config.height, config.kernel_sigma);
    let g_col = ring_gaussian(config.width, config.kernel_sigma);
    let a_row = ring_autocorrelation(&g_row);
    let a_col = ring_autocorrelation(&g_col);
    let scale = config.field_magnitude.powi(2) / (a_row[0] * a_col[0]);
    Ok(Array2::from_shape_fn((config.height, config.width), |(dr, dc)| {
        scale * a_row[dr] * a_col[dc]
    }))
}

/// Exact M×M background covariance K_b (block-circulant).
pub fn analytic_background_covariance(config: &MvnLumpyConfig) -> Result<Array2<f64>> {
    let auto = analytic_background_autocovariance(config)?;
    let (h, w) = (config.height, config.width);
    let m = h * w;
    Ok(Array2::from_shape_fn((m, m), |(p, q)| {
        let (rp, cp) = (p / w, p % w);
        let (rq, cq) = (q / w, q % w);
        auto[[(rq + h - rp) % h, (cq + w - cp) % w]]
    }))
}

pub fn render_gaussian_signal(config: &GaussianSignalConfig, height: usize, width: usize) -> Result<SignalImage> {
    if !(config.sigma > 0.0) {
        return Err(ObserverError::validation("signal sigma must be positive"));
    }
    if config.amplitude == 0.0 || !config.amplitude.is_finite() {
        return Err(ObserverError::validation("signal amplitude must be nonzero and finite"));
    }
    let inside = |v: f64, n: usize| v >= 0.0 && v <= (n as f64 - 1.0);
    if !inside(config.center_row, height) || !inside(config.center_col, width) {
        return Err(ObserverError::validation(format!(
            "signal center ({}, {}) outside {height}×{width} image",
            config.center_row, config.center_col
        )));
    }
    let two_var = 2.0 * config.sigma * config.sigma;
    let data = Array1::from_shape_fn(height * width, |p| {
        let dr = (p / width) as f64 - config.center_row;
        let dc = (p % width) as f64 - config.center_col;
        config.amplitude * (-(dr * dr + dc * dc) / two_var).exp()
    });
    SignalImage::new(data, height, width)
}

/// Hotelling SNR² = sᵀK̄⁻¹s of a signal under the exact lumpy-plus-noise
/// covariance K̄ = K_b + σ_n²I.
pub fn hotelling_snr2(lumpy: &MvnLumpyConfig, signal: &SignalImage, noise: &NoiseConfig) -> Result<f64> {
    check_len("signal pixels", lumpy.dim(), signal.dim())?;
    let kbar = analytic_background_covariance(lumpy)? + noise.covariance(lumpy.dim());
    let w = Cholesky::factor(kbar.view(), 0.0)?.solve(signal.data())?;
    Ok(w.dot(&signal.data()))
}

/// Signal amplitude at which the Hotelling AUC equals `target_auc`.
/// SNR is linear in the amplitude, so one solve at unit amplitude suffices;
/// `signal.amplitude` is ignored.
pub fn calibrate_signal_amplitude(
    lumpy: &MvnLumpyConfig,
    signal: &GaussianSignalConfig,
    noise: &NoiseConfig,
    target_auc: f64,
) -> Result<f64> {
    if !(target_auc > 0.5 && target_auc < 1.0) {
        return Err(ObserverError::validation("target AUC must lie in (0.5, 1)"));
    }
    let unit = GaussianSignalConfig {
        amplitude: 1.0,
        ..signal.clone()
    };
    let s = render_gaussian_signal(&unit, lumpy.height, lumpy.width)?;
    let snr_unit = hotelling_snr2(lumpy, &s, noise)?.sqrt();
    Ok(detectability_for_auc(target_auc) / snr_unit)
}

/// g = b + n (absent) or g = b + s + n (present). Exactly
/// round(fraction_present·N) images, chosen by a seeded shuffle, get the
/// signal; noise is i.i.d. Gaussian with std `noise.sigma_n`.
pub fn assemble_dataset(
    backgrounds: &ImageStack,
    signal: &SignalImage,
    noise: &NoiseConfig,
    fraction_present: f64,
) -> Result<ImageStack> {
    check_len("signal pixels", backgrounds.dim(), signal.dim())?;
    check_len("signal height", backgrounds.height(), signal.height())?;
    if !(0.0..=1.0).contains(&fraction_present) {
        return Err(ObserverError::validation("fraction_present must lie in [0, 1]"));
    }
    if !(noise.sigma_n >= 0.0) {
        return Err(ObserverError::validation("sigma_n must be nonnegative"));
    }
    let n = backgrounds.len();
    let n_present = (fraction_present * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![ABSENT; n];
    for &i in &order[..n_present] {
        labels[i] = PRESENT;
    }

    let (mut data, _) = backgrounds.clone().into_parts();
    let s = signal.data();
    let s = s.as_slice().expect("contiguous signal");
    for (mut row, &label) in data.outer_iter_mut().zip(&labels) {
        let row = row.as_slice_mut().expect("row-major");
        if label == PRESENT {
            axpy(1.0, s, row);
        }
        if noise.sigma_n > 0.0 {
            for v in row.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += noise.sigma_n * e;
            }
        }
    }
    ImageStack::new(data, labels, backgrounds.height(), backgrounds.width())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawDtype {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiManifest {
    pub height: usize,
    pub width: usize,
    pub dtype: RawDtype,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

impl RoiManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |reason: String| ObserverError::Ingestion {
            path: path.display().to_string(),
            reason,
        };
        let (mut height, mut width, mut dtype, mut order) = (None, None, None, None);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let parse_dim = |v: &str| {
                v.parse::<usize>()
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| err(format!("line {}: bad {key} {v:?}", lineno + 1)))
            };
            match key {
                "height" => height = Some(parse_dim(value)?),
                "width" => width = Some(parse_dim(value)?),
                "dtype" => {
                    dtype = Some(match value {
                        "f32" => RawDtype::F32,
                        "f64" => RawDtype::F64,
                        other => return Err(err(format!("unsupported dtype {other:?}"))),
                    })
                }
                "order" => {
                    if value != "row-major" {
                        return Err(err(format!("unsupported order {value:?}")));
                    }
                    order = Some(());
                }
                other => return Err(err(format!("unknown manifest key {other:?}"))),
            }
        }
        let missing = |k: &str| err(format!("manifest is missing {k}"));
        order.ok_or_else(|| missing("order"))?;
        Ok(RoiManifest {
            height: height.ok_or_else(|| missing("height"))?,
            width: width.ok_or_else(|| missing("width"))?,
            dtype: dtype.ok_or_else(|| missing("dtype"))?,
        })
    }

    fn bytes_per_value(&self) -> usize {
        match self.dtype {
            RawDtype::F32 => 4,
            RawDtype::F64 => 8,
        }
    }
}

fn ingestion_error(path: &Path, reason: impl Into<String>) -> ObserverError {
    ObserverError::Ingestion {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Loads every ROI in `dir` as a signal-absent background stack.
///
/// With a `manifest.txt`, every other regular file is a bare little-endian
/// payload of one ROI; otherwise every `*.mobs` file is read. Files are taken
/// in lexicographic order.
pub fn load_roi_directory(dir: &Path) -> Result<ImageStack> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| ingestion_error(dir, e.to_string()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();

    let manifest_path = dir.join(MANIFEST_NAME);
    let rois = if manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| ingestion_error(&manifest_path, e.to_string()))?;
        let manifest = RoiManifest::parse(&text, &manifest_path)?;
        let payloads: Vec<PathBuf> = files.into_iter().filter(|p| *p != manifest_path).collect();
        load_raw(&payloads, &manifest)?
    } else {
        let mobs_files: Vec<PathBuf> = files
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "mobs"))
            .collect();
        load_mobs(&mobs_files)?
    };
    rois.ok_or_else(|| ingestion_error(dir, "directory contains no ROI files"))
}

fn load_raw(files: &[PathBuf], manifest: &RoiManifest) -> Result<Option<ImageStack>> {
    if files.is_empty() {
        return Ok(None);
    }
    let m = manifest.height * manifest.width;
    let expected = m * manifest.bytes_per_value();
    let mut data = Array2::<f64>::zeros((files.len(), m));
    for (k, path) in files.iter().enumerate() {
        let bytes = fs::read(path).map_err(|e| ingestion_error(path, e.to_string()))?;
        if bytes.len() != expected {
            return Err(ingestion_error(
                path,
                format!(
                    "size mismatch: manifest declares {}×{} {:?} ({expected} bytes), file has {} bytes",
                    manifest.height,
                    manifest.width,
                    manifest.dtype,
                    bytes.len()
                ),
            ));
        }
        let mut row = data.row_mut(k);
        match manifest.dtype {
            RawDtype::F32 => {
                for (dst, c) in row.iter_mut().zip(bytes.chunks_exact(4)) {
                    *dst = f32::from_le_bytes(c.try_into().unwrap()) as f64;
                }
            }
            RawDtype::F64 => {
                for (dst, c) in row.iter_mut().zip(bytes.chunks_exact(8)) {
                    *dst = f64::from_le_bytes(c.try_into().unwrap());
                }
            }
        }
    }
    ImageStack::with_label(data, ABSENT, manifest.height, manifest.width).map(Some)
}

fn load_mobs(files: &[PathBuf]) -> Result<Option<ImageStack>> {
    let mut stack: Option<ImageStack> = None;
    for path in files {
        let part = mobs::load(path).map_err(|e| ingestion_error(path, e.to_string()))?;
        let (data, _) = part.clone().into_parts();
        let part = ImageStack::with_label(data, ABSENT, part.height(), part.width())?;
        stack = Some(match stack {
            None => part,
            Some(acc) => {
                if (acc.height(), acc.width()) != (part.height(), part.width()) {
                    return Err(ingestion_error(
                        path,
                        format!(
                            "ROI size {}×{} differs from {}×{}",
                            part.height(),
                            part.width(),
                            acc.height(),
                            acc.width()
                        ),
                    ));
                }
                acc.concat(&part)?
            }
        });
    }
    Ok(stack)
}

/// Loads ROIs from `dir` and builds a labelled dataset with [`assemble_dataset`].
pub fn ingest_roi_directory(
    dir: &Path,
    signal: &SignalImage,
    noise: &NoiseConfig,
    fraction_present: f64,
) -> Result<ImageStack> {
    let backgrounds = load_roi_directory(dir)?;
    if (backgrounds.height(), backgrounds.width()) != (signal.height(), signal.width()) {
        return Err(ingestion_error(
            dir,
            format!(
                "ROIs are {}×{} but the signal is {}×{}",
                backgrounds.height(),
                backgrounds.width(),
                signal.height(),
                signal.width()
            ),
        ));
    }
    assemble_dataset(&backgrounds, signal, noise, fraction_present)
}
