//! Image and float-tensor containers plus their on-disk formats.
//!
//! Images travel as PNG (8- or 16-bit, grayscale or RGB, no alpha). Float
//! tensors travel as PFT:
//!
//! ```text
//! b"PFT1" | rank: u32 LE | dims: rank × u32 LE | data: Π dims × f32 LE (row-major)
//! ```
//!
//! Every writer goes through [`write_atomically`], so a failed write never
//! leaves a partial file behind.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PFT_MAGIC: &[u8; 4] = b"PFT1";
const MAX_RANK: usize = 4;

/// A `channels × height × width` image with every sample in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "image data has {} elements, expected {}",
                data.len(),
                channels * height * width
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("image sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    /// Builds an image from arbitrary samples, clamping each into `[0, 1]`.
    pub fn from_clamped(channels: usize, height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, y, x)]
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.shape() == other.shape()
    }

    /// Central crop to `height × width`.
    pub fn center_crop(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "cannot crop {}x{} image to {height}x{width}",
                self.height, self.width
            )));
        }
        let top = (self.height - height) / 2;
        let left = (self.width - width) / 2;
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for y in top..top + height {
                let start = self.index(c, y, left);
                data.extend_from_slice(&self.data[start..start + width]);
            }
        }
        Self::new(self.channels, height, width, data)
    }

    pub fn to_float_tensor(&self) -> FloatTensor {
        FloatTensor {
            shape: vec![self.channels, self.height, self.width],
            data: self.data.clone(),
        }
    }
}

/// Row-major `f32` tensor of rank 1 to 4 with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl FloatTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.len() > MAX_RANK {
            return Err(Error::Shape(format!(
                "tensor rank must be in 1..={MAX_RANK}, got {}",
                shape.len()
            )));
        }
        let expected = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if expected != Some(data.len()) {
            return Err(Error::Shape(format!(
                "tensor shape {shape:?} does not match {} data elements",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("tensor contains non-finite values".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }
}

/// Writes a file through a sibling temporary that is renamed into place
/// only after `body` succeeds.
pub fn write_atomically<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| png_decode_error(path, e))?;
    let (color, depth) = reader.output_color_type();
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        png::ColorType::GrayscaleAlpha | png::ColorType::Rgba => {
            return Err(Error::Format(format!(
                "{}: alpha channels are not supported",
                path.display()
            )))
        }
        png::ColorType::Indexed => {
            return Err(Error::Format(format!(
                "{}: indexed-color PNG is not supported",
                path.display()
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| png_decode_error(path, e))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let samples = width * height * channels;

    let interleaved: Vec<f32> = match depth {
        png::BitDepth::Eight => buf[..samples].iter().map(|&b| b as f32 / 255.0).collect(),
        png::BitDepth::Sixteen => buf[..samples * 2]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as f32 / 65535.0)
            .collect(),
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported bit depth {other:?}",
                path.display()
            )))
        }
    };

    // PNG stores pixels interleaved (HWC); tensors are planar (CHW).
    let mut data = vec![0.0f32; samples];
    for (p, px) in interleaved.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * width * height + p] = v;
        }
    }
    ImageTensor::new(channels, height, width, data)
}

fn png_decode_error(path: &Path, e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Saves as an 8-bit PNG. Samples are rounded to the nearest level, so a
/// reload is within `0.5 / 255` of the original.
pub fn save_image(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let color = match image.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => {
            return Err(Error::Shape(format!(
                "PNG output needs 1 or 3 channels, image has {c}"
            )))
        }
    };
    let plane = image.height * image.width;
    let mut bytes = vec![0u8; plane * image.channels];
    for c in 0..image.channels {
        for p in 0..plane {
            let v = image.data[c * plane + p];
            bytes[p * image.channels + c] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    let (w, h) = (image.width as u32, image.height as u32);
    write_atomically(path, |out| {
        let mut enc = png::Encoder::new(out, w, h);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(std::io::Error::other)?;
        writer.write_image_data(&bytes).map_err(std::io::Error::other)?;
        writer.finish().map_err(std::io::Error::other)
    })
}

pub fn write_pft(tensor: &FloatTensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_pft(tensor);
    write_atomically(path.as_ref(), |w| w.write_all(&bytes))
}

pub fn read_pft(path: impl AsRef<Path>) -> Result<FloatTensor> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_pft(&bytes)
}

pub fn encode_pft(tensor: &FloatTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * tensor.shape.len() + 4 * tensor.data.len());
    out.extend_from_slice(PFT_MAGIC);
    out.extend_from_slice(&(tensor.shape.len() as u32).to_le_bytes());
    for &d in &tensor.shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &tensor.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_pft(bytes: &[u8]) -> Result<FloatTensor> {
    if bytes.len() < 8 || &bytes[..4] != PFT_MAGIC {
        return Err(Error::Format("missing PFT1 magic".into()));
    }
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::Format("truncated PFT header".into()))
    };
    let rank = word(4)? as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format(format!("unsupported PFT rank {rank}")));
    }
    let shape = (0..rank)
        .map(|k| word(8 + 4 * k).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 8 + 4 * rank;
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("PFT shape overflows".into()))?;
    let payload = &bytes[header..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "PFT payload has {} bytes, shape {shape:?} needs {}",
            payload.len(),
            count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    FloatTensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}
