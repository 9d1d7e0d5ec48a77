//! On-disk containers for probability tensors, RGB images and label maps.
//!
//! Three formats are supported, all byte-exact:
//!
//! - **PTNS v1** dense tensors: magic `PTNS`, version byte `1`, dtype byte
//!   (`0` = f32, `1` = u8), ndim byte, `ndim` little-endian `u32` dims, then
//!   the raw little-endian element data with no padding.
//! - **PPM (P6, maxval 255)** for RGB images.
//! - **PGM (P5, maxval 255)** for label maps, with `255` reserved as the
//!   ignore label.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PTNS_MAGIC: &[u8; 4] = b"PTNS";
pub const PTNS_VERSION: u8 = 1;

/// Label value marking pixels that carry no annotation.
pub const IGNORE_LABEL: u8 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    U8,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::U8 => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::U8),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bitwise equality: two f32 buffers are equal iff their bit patterns are.
impl PartialEq for TensorData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            _ => false,
        }
    }
}

/// Row-major dense tensor of rank 2 or 3.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if !(2..=3).contains(&shape.len()) {
            return Err(Error::validation(format!(
                "tensor rank must be 2 or 3, got {}",
                shape.len()
            )));
        }
        if shape.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::validation("tensor dimension exceeds u32 range"));
        }
        let expected = shape.iter().product::<usize>();
        if expected != data.len() {
            return Err(Error::validation(format!(
                "shape {:?} holds {} elements but data has {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn from_u8(shape: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        Self::new(shape, TensorData::U8(data))
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let elem = self.dtype().size();
        let mut out = Vec::with_capacity(7 + 4 * self.shape.len() + elem * self.data.len());
        out.extend_from_slice(PTNS_MAGIC);
        out.push(PTNS_VERSION);
        out.push(self.dtype().code());
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Parses a PTNS buffer. `origin` only labels error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let fmt = |field, detail: String| Error::format(origin, field, detail);

        if bytes.len() < 4 || &bytes[..4] != PTNS_MAGIC {
            let got = &bytes[..bytes.len().min(4)];
            return Err(fmt("magic", format!("expected \"PTNS\", found {:?}", String::from_utf8_lossy(got))));
        }
        let header = |idx: usize, field| bytes.get(idx).copied().ok_or_else(|| fmt(field, "truncated header".into()));
        let version = header(4, "version")?;
        if version != PTNS_VERSION {
            return Err(fmt("version", format!("unsupported version {version}")));
        }
        let dtype_code = header(5, "dtype")?;
        let dtype = DType::from_code(dtype_code).ok_or_else(|| fmt("dtype", format!("unknown dtype code {dtype_code}")))?;
        let ndim = header(6, "ndim")? as usize;
        if !(2..=3).contains(&ndim) {
            return Err(fmt("ndim", format!("rank must be 2 or 3, got {ndim}")));
        }
        let dims_end = 7 + 4 * ndim;
        if bytes.len() < dims_end {
            return Err(fmt("dims", "truncated dimension list".into()));
        }
        let shape: Vec<usize> = bytes[7..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fmt("dims", format!("element count of {shape:?} overflows")))?;
        let payload = &bytes[dims_end..];
        let needed = count
            .checked_mul(dtype.size())
            .ok_or_else(|| fmt("dims", format!("byte count of {shape:?} overflows")))?;
        if payload.len() < needed {
            return Err(fmt(
                "payload",
                format!("truncated: dims {shape:?} need {needed} bytes, found {}", payload.len()),
            ));
        }
        if payload.len() > needed {
            return Err(fmt(
                "payload",
                format!("{} trailing bytes after {needed}-byte payload", payload.len() - needed),
            ));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::U8 => TensorData::U8(payload.to_vec()),
        };
        Ok(Self { shape, data })
    }
}

pub fn write_tensor(t: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    DenseTensor::from_bytes(&bytes, path)
}

/// 8-bit RGB image, row-major, interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width * height * 3 != pixels.len() {
            return Err(Error::validation(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_ppm(bytes: &[u8], origin: &Path) -> Result<Self> {
        let (width, height, data) = parse_netpbm(bytes, b"P6", 3, origin)?;
        Ok(Self {
            width,
            height,
            pixels: data.to_vec(),
        })
    }
}

/// Per-pixel class ids; [`IGNORE_LABEL`] marks unlabeled pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width * height != labels.len() {
            return Err(Error::validation(format!(
                "{width}x{height} label map needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn same_shape(&self, other: &LabelMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn from_pgm(bytes: &[u8], origin: &Path) -> Result<Self> {
        let (width, height, data) = parse_netpbm(bytes, b"P5", 1, origin)?;
        Ok(Self {
            width,
            height,
            labels: data.to_vec(),
        })
    }
}

fn parse_netpbm<'a>(bytes: &'a [u8], magic: &[u8; 2], channels: usize, origin: &Path) -> Result<(usize, usize, &'a [u8])> {
    let fmt = |field, detail: String| Error::format(origin, field, detail);
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(fmt(
            "magic",
            format!(
                "expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&bytes[..bytes.len().min(2)])
            ),
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (slot, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
        // whitespace and '#' comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(fmt(name, "missing or non-numeric header value".into()));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt(name, "header value out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(fmt("maxval", format!("only maxval 255 is supported, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(fmt("width", format!("empty image {width}x{height}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(fmt("maxval", "header must end with a single whitespace byte".into()));
    }
    pos += 1;
    let needed = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() != needed {
        return Err(fmt(
            "payload",
            format!("expected {needed} bytes for {width}x{height}, found {}", payload.len()),
        ));
    }
    Ok((width, height, payload))
}

pub fn write_image(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, img.to_ppm()).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    RgbImage::from_ppm(&bytes, path)
}

pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, map.to_pgm()).map_err(|e| Error::io(path, e))
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LabelMap::from_pgm(&bytes, path)
}
