//! Shared data types: image stacks, signal images, channel matrices and
//! observer templates.

use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_len, ObserverError, Result};

/// Hypothesis tag of an image: 0 = signal-absent, 1 = signal-present.
pub const ABSENT: u8 = 0;
pub const PRESENT: u8 = 1;

/// A set of flattened (row-major) images with hypothesis labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    data: Array2<f64>,
    labels: Vec<u8>,
    height: usize,
    width: usize,
}

impl ImageStack {
    pub fn new(data: Array2<f64>, labels: Vec<u8>, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(ObserverError::validation("image height and width must be positive"));
        }
        check_len("pixels per image", height * width, data.ncols())?;
        check_len("label count", data.nrows(), labels.len())?;
        if let Some(bad) = labels.iter().find(|&&l| l > PRESENT) {
            return Err(ObserverError::validation(format!(
                "label {bad} is not 0 (absent) or 1 (present)"
            )));
        }
        Ok(ImageStack {
            data,
            labels,
            height,
            width,
        })
    }

    /// Stack with every image labelled `label`.
    pub fn with_label(data: Array2<f64>, label: u8, height: usize, width: usize) -> Result<Self> {
        let n = data.nrows();
        Self::new(data, vec![label; n], height, width)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Pixels per image (M).
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, index: usize) -> ArrayView1<'_, f64> {
        self.data.row(index)
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<u8>) {
        (self.data, self.labels)
    }

    /// Rows carrying `label`, in stack order.
    pub fn class_data(&self, label: u8) -> Array2<f64> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        self.data.select(Axis(0), &idx)
    }

    /// Splits into (signal-absent, signal-present) stacks, preserving order.
    pub fn split_by_label(&self) -> (ImageStack, ImageStack) {
        let part = |label| ImageStack {
            data: self.class_data(label),
            labels: vec![label; self.count(label)],
            height: self.height,
            width: self.width,
        };
        (part(ABSENT), part(PRESENT))
    }

    /// Sub-stack of the given rows (in the given order).
    pub fn select(&self, rows: &[usize]) -> ImageStack {
        ImageStack {
            data: self.data.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            height: self.height,
            width: self.width,
        }
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> ImageStack {
        ImageStack {
            data: self.data.slice(s![start..end, ..]).to_owned(),
            labels: self.labels[start..end].to_vec(),
            height: self.height,
            width: self.width,
        }
    }

    pub fn concat(&self, other: &ImageStack) -> Result<ImageStack> {
        check_len("image height", self.height, other.height)?;
        check_len("image width", self.width, other.width)?;
        let data = ndarray::concatenate(Axis(0), &[self.data.view(), other.data.view()])
            .expect("column counts already checked");
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(ImageStack {
            data,
            labels,
            height: self.height,
            width: self.width,
        })
    }

    pub(crate) fn require_both_classes(&self, needed: usize) -> Result<()> {
        for class in [ABSENT, PRESENT] {
            let count = self.count(class);
            if count < needed {
                return Err(ObserverError::InsufficientData {
                    class,
                    count,
                    needed,
                });
            }
        }
        Ok(())
    }
}

/// A known, deterministic signal image `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalImage {
    data: Array1<f64>,
    height: usize,
    width: usize,
}

impl SignalImage {
    pub fn new(data: Array1<f64>, height: usize, width: usize) -> Result<Self> {
        check_len("signal pixels", height * width, data.len())?;
        Ok(SignalImage {
            data,
            height,
            width,
        })
    }

    pub fn data(&self) -> ArrayView1<'_, f64> {
        self.data.view()
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// One-image stack (label 1), for MOBS export.
    pub fn to_stack(&self) -> ImageStack {
        let data = self.data.clone().insert_axis(Axis(0));
        ImageStack::new(data, vec![PRESENT], self.height, self.width)
            .expect("signal dimensions are consistent")
    }

    pub fn from_stack(stack: &ImageStack) -> Result<Self> {
        if stack.len() != 1 {
            return Err(ObserverError::validation(format!(
                "signal file must hold exactly one image, found {}",
                stack.len()
            )));
        }
        Self::new(stack.image(0).to_owned(), stack.height(), stack.width())
    }
}

/// D×M channel matrix; each row is one channel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: Array2<f64>,
}

impl ChannelMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        let (d, m) = rows.dim();
        if d == 0 {
            return Err(ObserverError::validation("channel matrix needs at least one channel"));
        }
        if d > m {
            return Err(ObserverError::validation(format!(
                "{d} channels exceed image dimension {m}"
            )));
        }
        if let Some(k) = rows.outer_iter().position(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(ObserverError::validation(format!("channel {k} is the zero vector")));
        }
        Ok(ChannelMatrix { rows })
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn channel(&self, k: usize) -> ArrayView1<'_, f64> {
        self.rows.row(k)
    }

    pub fn num_channels(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// First `d` channels. Generated channel sets are nested, so this equals
    /// generating `d` channels directly.
    pub fn prefix(&self, d: usize) -> Result<ChannelMatrix> {
        if d == 0 || d > self.num_channels() {
            return Err(ObserverError::validation(format!(
                "cannot take {d} of {} channels",
                self.num_channels()
            )));
        }
        Ok(ChannelMatrix {
            rows: self.rows.slice(s![..d, ..]).to_owned(),
        })
    }

    /// Unit-norm rows, for display. Test statistics of a CHO are unchanged
    /// by per-channel scaling.
    pub fn normalized(&self) -> ChannelMatrix {
        let mut rows = self.rows.clone();
        for mut r in rows.outer_iter_mut() {
            let norm = r.dot(&r).sqrt();
            r.mapv_inplace(|v| v / norm);
        }
        ChannelMatrix { rows }
    }

    /// v = T g for every image in `images` (N×M → N×D).
    pub fn channelize(&self, images: ArrayView2<'_, f64>) -> Array2<f64> {
        images.dot(&self.rows.t())
    }

    /// Channels as an image stack (rows as images, label 0) for MOBS export.
    pub fn to_stack(&self, height: usize, width: usize) -> Result<ImageStack> {
        ImageStack::with_label(self.rows.clone(), ABSENT, height, width)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows_csv(self.rows.view(), out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObserverKind {
    Ho,
    Rho,
    Cho,
}

/// Linear template `w` acting on image data, `t(g) = wᵀg`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverTemplate {
    w: Array1<f64>,
    kind: ObserverKind,
}

impl ObserverTemplate {
    pub fn new(w: Array1<f64>, kind: ObserverKind) -> Result<Self> {
        if let Some(k) = w.iter().position(|v| !v.is_finite()) {
            return Err(ObserverError::validation(format!(
                "template entry {k} is not finite"
            )));
        }
        Ok(ObserverTemplate { w, kind })
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.w.view()
    }

    pub fn kind(&self) -> ObserverKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn to_stack(&self, height: usize, width: usize) -> Result<ImageStack> {
        ImageStack::with_label(self.w.clone().insert_axis(Axis(0)), ABSENT, height, width)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows_csv(self.w.view().insert_axis(Axis(0)), out)
    }
}

fn write_rows_csv<W: Write>(rows: ArrayView2<'_, f64>, mut out: W) -> Result<()> {
    for row in rows.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
