//! MOBS binary image-stack format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MOBS"
//!      4     4  format version (u32) = 1
//!      8     8  image count N (u64)
//!     16     4  height (u32)
//!     20     4  width (u32)
//!     24     4  dtype tag (u32), 8 = float64
//!     28     4  reserved, zero   -- header ends at 32
//!     32  N·M·8 pixels, f64 LE, row-major, image after image
//!      …     N  one label byte per image (0 or 1)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{ObserverError, Result};
use crate::types::ImageStack;

pub const MAGIC: &[u8; 4] = b"MOBS";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u32 = 8;
pub const HEADER_LEN: usize = 32;

pub fn write_image_stack<W: Write>(stack: &ImageStack, mut out: W) -> Result<()> {
    if stack.is_empty() {
        return Err(ObserverError::validation("empty stack"));
    }
    let height = u32::try_from(stack.height())
        .map_err(|_| ObserverError::validation("height exceeds u32"))?;
    let width = u32::try_from(stack.width())
        .map_err(|_| ObserverError::validation("width exceeds u32"))?;

    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&(stack.len() as u64).to_le_bytes());
    header[16..20].copy_from_slice(&height.to_le_bytes());
    header[20..24].copy_from_slice(&width.to_le_bytes());
    header[24..28].copy_from_slice(&DTYPE_F64.to_le_bytes());
    out.write_all(&header)?;

    let mut buf = Vec::with_capacity(stack.dim() * 8);
    for row in stack.data().outer_iter() {
        buf.clear();
        for v in row.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.write_all(stack.labels())?;
    out.flush()?;
    Ok(())
}

pub fn read_image_stack<R: Read>(mut input: R) -> Result<ImageStack> {
    let mut header = [0u8; HEADER_LEN];
    read_exact_or(&mut input, &mut header, "header")?;
    if &header[0..4] != MAGIC {
        return Err(ObserverError::Format(format!(
            "bad magic {:?}, expected \"MOBS\"",
            String::from_utf8_lossy(&header[0..4])
        )));
    }
    let version = u32_at(&header, 4);
    if version != VERSION {
        return Err(ObserverError::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let height = u32_at(&header, 16) as usize;
    let width = u32_at(&header, 20) as usize;
    let dtype = u32_at(&header, 24);
    if dtype != DTYPE_F64 {
        return Err(ObserverError::Format(format!("unsupported dtype tag {dtype}")));
    }
    if header[28..32].iter().any(|&b| b != 0) {
        return Err(ObserverError::Format("reserved header bytes are not zero".into()));
    }
    if height == 0 || width == 0 {
        return Err(ObserverError::Format("zero image dimension".into()));
    }
    let n = usize::try_from(n).map_err(|_| ObserverError::Format("image count overflow".into()))?;
    let m = height * width;
    let payload_len = n
        .checked_mul(m)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| ObserverError::Format("payload size overflow".into()))?;

    let mut bytes = Vec::new();
    input
        .by_ref()
        .take(payload_len as u64)
        .read_to_end(&mut bytes)?;
    if bytes.len() != payload_len {
        return Err(ObserverError::Corruption(format!(
            "payload truncated: expected {payload_len} bytes, found {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    drop(bytes);

    let mut labels = vec![0u8; n];
    read_exact_or(&mut input, &mut labels, "labels")?;
    if let Some(pos) = labels.iter().position(|&l| l > 1) {
        return Err(ObserverError::Validation(format!(
            "label byte {} at image {pos} is not 0 or 1",
            labels[pos]
        )));
    }
    let data = Array2::from_shape_vec((n, m), values).expect("payload length checked");
    ImageStack::new(data, labels, height, width)
}

pub fn save(stack: &ImageStack, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_image_stack(stack, BufWriter::new(file))
}

pub fn load(path: impl AsRef<Path>) -> Result<ImageStack> {
    let file = File::open(path)?;
    read_image_stack(BufReader::new(file))
}

fn u32_at(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().unwrap())
}

fn read_exact_or<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            ObserverError::Corruption(format!("stream ended inside {what}"))
        }
        _ => ObserverError::Io(e),
    })
}
