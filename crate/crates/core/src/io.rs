//! Array file exchange format and PNG export.
//!
//! An array is stored as two files sharing a stem: `<stem>.json`, a header
//! describing the payload, and `<stem>.raw`, the row-major payload as
//! little-endian `f32` (or one byte per element for masks).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FanBeamGeometry, ImageGrid, Mask};
use crate::image::{Image, Unit};
use crate::sinogram::Sinogram;

pub const MAGIC: &str = "DCRF1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayKind {
    Image,
    Sinogram,
    Mask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayUnit {
    #[serde(rename = "HU")]
    Hu,
    #[serde(rename = "mu_per_mm")]
    MuPerMm,
    #[serde(rename = "line_integral")]
    LineIntegral,
    #[serde(rename = "bool")]
    Bool,
}

impl From<Unit> for ArrayUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Hu => ArrayUnit::Hu,
            Unit::MuPerMm => ArrayUnit::MuPerMm,
        }
    }
}

/// JSON header of an array file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub magic: String,
    pub kind: ArrayKind,
    /// `[rows, cols]`.
    pub shape: [usize; 2],
    /// Row and column pitch in mm. For sinograms the row pitch is the source
    /// arc length per view.
    pub spacing_mm: [f64; 2],
    pub unit: ArrayUnit,
    /// Grid center in mm, `[x, y]`; images and masks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_mm: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<FanBeamGeometry>,
    /// Per-channel measurement flags; sinograms only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Free-form provenance record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl ArrayHeader {
    fn element_size(&self) -> usize {
        match self.kind {
            ArrayKind::Mask => 1,
            _ => 4,
        }
    }

    fn grid(&self) -> Result<ImageGrid> {
        let [rows, cols] = self.shape;
        let [dy, dx] = self.spacing_mm;
        let center = self.center_mm.unwrap_or([0.0, 0.0]);
        ImageGrid::with_center(cols, rows, dx, dy, (center[0], center[1])).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Header plus decoded payload.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayFile {
    pub header: ArrayHeader,
    pub data: Vec<f64>,
}

/// `(header path, payload path)` for a stem, accepting `x`, `x.json` or `x.raw`.
pub fn array_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("json"), with("raw"))
}

impl ArrayFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let (header_path, payload_path) = array_paths(path);
        if let Some(dir) = header_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let [rows, cols] = self.header.shape;
        if rows * cols != self.data.len() {
            return Err(Error::ShapeMismatch(format!("shape {rows}x{cols} for {} elements", self.data.len())));
        }
        let mut payload = Vec::with_capacity(self.data.len() * self.header.element_size());
        match self.header.kind {
            ArrayKind::Mask => payload.extend(self.data.iter().map(|&v| u8::from(v != 0.0))),
            _ => {
                for &v in &self.data {
                    payload.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        let text = serde_json::to_string_pretty(&self.header).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&header_path, text + "\n").map_err(|e| Error::io(&header_path, e))?;
        fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header_path, payload_path) = array_paths(path);
        let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
        let header: ArrayHeader =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", header_path.display())))?;
        if header.magic != MAGIC {
            return Err(Error::Format(format!("{}: bad magic {:?}", header_path.display(), header.magic)));
        }
        let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
        let [rows, cols] = header.shape;
        let expected = rows * cols * header.element_size();
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "{}: payload has {} bytes, header implies {expected}",
                payload_path.display(),
                bytes.len()
            )));
        }
        let data: Vec<f64> = match header.kind {
            ArrayKind::Mask => bytes.iter().map(|&b| f64::from(u8::from(b != 0))).collect(),
            _ => bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect(),
        };
        let bad = data.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            log::warn!("{}: {bad} non-finite values", payload_path.display());
        }
        Ok(ArrayFile { header, data })
    }

    fn expect_kind(&self, kind: ArrayKind) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Format(format!("expected a {kind:?} file, found {:?}", self.header.kind)));
        }
        Ok(())
    }
}

fn base_header(kind: ArrayKind, shape: [usize; 2], spacing_mm: [f64; 2], unit: ArrayUnit) -> ArrayHeader {
    ArrayHeader {
        magic: MAGIC.to_string(),
        kind,
        shape,
        spacing_mm,
        unit,
        center_mm: None,
        geometry: None,
        measured_mask: None,
        seed: None,
        provenance: None,
    }
}

pub fn image_file(image: &Image) -> ArrayFile {
    let g = image.grid;
    let mut header = base_header(ArrayKind::Image, [g.ny, g.nx], [g.dy, g.dx], image.unit.into());
    header.center_mm = Some([g.center.0, g.center.1]);
    ArrayFile { header, data: image.values.clone() }
}

pub fn sinogram_file(sinogram: &Sinogram) -> ArrayFile {
    let g = &sinogram.geometry;
    let mut header = base_header(
        ArrayKind::Sinogram,
        [g.n_views(), g.n_channels()],
        [g.sid * g.angle_step(), g.det_spacing],
        ArrayUnit::LineIntegral,
    );
    header.geometry = Some(g.clone());
    header.measured_mask = Some(sinogram.measured_mask.clone());
    ArrayFile { header, data: sinogram.values.clone() }
}

pub fn mask_file(mask: &Mask) -> ArrayFile {
    let g = mask.grid;
    let mut header = base_header(ArrayKind::Mask, [g.ny, g.nx], [g.dy, g.dx], ArrayUnit::Bool);
    header.center_mm = Some([g.center.0, g.center.1]);
    ArrayFile { header, data: mask.flags.iter().map(|&f| f64::from(u8::from(f))).collect() }
}

impl TryFrom<ArrayFile> for Image {
    type Error = Error;

    fn try_from(file: ArrayFile) -> Result<Image> {
        file.expect_kind(ArrayKind::Image)?;
        let unit = match file.header.unit {
            ArrayUnit::Hu => Unit::Hu,
            ArrayUnit::MuPerMm => Unit::MuPerMm,
            other => return Err(Error::Format(format!("image with unit {other:?}"))),
        };
        Image::new(file.header.grid()?, file.data, unit)
    }
}

impl TryFrom<ArrayFile> for Sinogram {
    type Error = Error;

    fn try_from(file: ArrayFile) -> Result<Sinogram> {
        file.expect_kind(ArrayKind::Sinogram)?;
        let geometry = file.header.geometry.ok_or_else(|| Error::Format("sinogram without geometry".into()))?;
        geometry.validate().map_err(|e| Error::Format(e.to_string()))?;
        if file.header.shape != [geometry.n_views(), geometry.n_channels()] {
            return Err(Error::Format(format!("sinogram shape {:?} disagrees with its geometry", file.header.shape)));
        }
        let mask = file.header.measured_mask.unwrap_or_else(|| vec![true; geometry.n_channels()]);
        Sinogram::new(geometry, file.data, mask).map_err(|e| Error::Format(e.to_string()))
    }
}

impl TryFrom<ArrayFile> for Mask {
    type Error = Error;

    fn try_from(file: ArrayFile) -> Result<Mask> {
        file.expect_kind(ArrayKind::Mask)?;
        let grid = file.header.grid()?;
        Mask::new(grid, file.data.iter().map(|&v| v != 0.0).collect())
    }
}

pub fn save_image(path: &Path, image: &Image, provenance: Option<serde_json::Value>) -> Result<()> {
    let mut file = image_file(image);
    file.header.provenance = provenance;
    file.save(path)
}

pub fn load_image(path: &Path) -> Result<Image> {
    ArrayFile::load(path)?.try_into()
}

pub fn save_sinogram(path: &Path, sinogram: &Sinogram, seed: Option<u64>) -> Result<()> {
    let mut file = sinogram_file(sinogram);
    file.header.seed = seed;
    file.save(path)
}

pub fn load_sinogram(path: &Path) -> Result<Sinogram> {
    ArrayFile::load(path)?.try_into()
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    mask_file(mask).save(path)
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    ArrayFile::load(path)?.try_into()
}

/// Pretty-printed JSON document, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// 8-bit grayscale PNG of an HU image clipped to `window = [low, high]`,
/// with +y pointing up.
pub fn save_png(path: &Path, image: &Image, window: [f64; 2]) -> Result<()> {
    let hu = image.to_unit(Unit::Hu);
    let (nx, ny) = (hu.grid.nx, hu.grid.ny);
    let span = (window[1] - window[0]).max(f64::EPSILON);
    let mut buf = image::GrayImage::new(nx as u32, ny as u32);
    for (row, j) in (0..ny).rev().enumerate() {
        for i in 0..nx {
            let t = ((hu.at(i, j) - window[0]) / span).clamp(0.0, 1.0);
            buf.put_pixel(i as u32, row as u32, image::Luma([(t * 255.0).round() as u8]));
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    buf.save(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
