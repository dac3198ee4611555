//! Image, label map and volume files.
//!
//! 2D label maps are 8-bit indexed PNGs whose palette index is the label id.
//! In scribble files index 0 means "no scribble". 3D volumes are a JSON
//! header next to a raw little-endian sample file.

use std::collections::BTreeSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridImage, LabelId, Labeling, ScribbleSet};

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Width and height from a PNG header, without decoding pixels.
pub fn png_dimensions(bytes: &[u8]) -> Result<(usize, usize)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    let info = decoder
        .read_header_info()
        .map_err(|e| Error::format(format!("not a PNG: {e}")))?;
    Ok((info.width as usize, info.height as usize))
}

/// Decodes any PNG into an RGB image with samples in `[0, 1]`.
pub fn decode_image_png(bytes: &[u8]) -> Result<GridImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format(format!("cannot decode PNG: {e}")))?;
    let rgb = img.to_rgb32f();
    let (w, h) = rgb.dimensions();
    let grid = Grid::new(&[h as usize, w as usize])?;
    let data = rgb.into_raw().into_iter().map(|v| (v as f64).clamp(0.0, 1.0)).collect();
    GridImage::new(grid, 3, data)
}

pub fn load_image(path: &Path) -> Result<GridImage> {
    decode_image_png(&read_file(path)?)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn rgb_of(image: &GridImage, p: usize) -> [f64; 3] {
    let px = image.pixel(p);
    match px.len() {
        1 | 2 => [px[0]; 3],
        _ => [px[0], px[1], px[2]],
    }
}

fn require_2d(grid: &Grid) -> Result<(u32, u32)> {
    if grid.ndim() != 2 {
        return Err(Error::invalid("PNG output needs a 2D grid"));
    }
    Ok((grid.dims()[1] as u32, grid.dims()[0] as u32))
}

fn encode_rgb(img: RgbImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::format(format!("cannot encode PNG: {e}")))?;
    Ok(out.into_inner())
}

/// 8-bit RGB PNG; single-channel images are written as gray.
pub fn encode_image_png(image: &GridImage) -> Result<Vec<u8>> {
    let (w, h) = require_2d(image.grid())?;
    let raw = (0..image.grid().len())
        .flat_map(|p| rgb_of(image, p).map(to_u8))
        .collect();
    encode_rgb(RgbImage::from_raw(w, h, raw).expect("buffer matches dims"))
}

pub fn save_image(image: &GridImage, path: &Path) -> Result<()> {
    write_file(path, &encode_image_png(image)?)
}

const BASE_PALETTE: [[u8; 3]; 9] = [
    [0, 0, 0],
    [90, 90, 90],
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
];

/// Display color of a label; fixed for every label id.
pub fn label_color(label: LabelId) -> [u8; 3] {
    let i = label.0 as usize;
    if let Some(c) = BASE_PALETTE.get(i) {
        return *c;
    }
    // Golden-angle hue walk at full saturation for the remaining ids.
    let hue = (i as f64 * 137.507_764) % 360.0;
    let x = 1.0 - ((hue / 60.0) % 2.0 - 1.0).abs();
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [to_u8(r), to_u8(g), to_u8(b)]
}

/// Indexed PNG of label ids with the [`label_color`] palette.
pub fn encode_label_png(grid: &Grid, ids: &[u8]) -> Result<Vec<u8>> {
    let (w, h) = require_2d(grid)?;
    if ids.len() != grid.len() {
        return Err(Error::invalid("label buffer does not match grid"));
    }
    let palette: Vec<u8> = (0..=255u8).flat_map(|i| label_color(LabelId(i))).collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(palette);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::format(format!("cannot encode label PNG: {e}")))?;
        writer
            .write_image_data(ids)
            .map_err(|e| Error::format(format!("cannot encode label PNG: {e}")))?;
    }
    Ok(out)
}

/// Label ids from an 8-bit indexed or 8-bit grayscale PNG.
pub fn decode_label_png(bytes: &[u8]) -> Result<(Grid, Vec<u8>)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(format!("cannot decode label PNG: {e}")))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight
        || !matches!(color, png::ColorType::Indexed | png::ColorType::Grayscale)
    {
        return Err(Error::format(format!(
            "label PNG must be 8-bit indexed or grayscale, got {color:?} at {depth:?}"
        )));
    }
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(format!("cannot decode label PNG: {e}")))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut ids = Vec::with_capacity(w * h);
    for row in buf.chunks(frame.line_size).take(h) {
        ids.extend_from_slice(&row[..w]);
    }
    Ok((Grid::new(&[h, w])?, ids))
}

fn ids_to_scribbles(ids: &[u8]) -> ScribbleSet {
    let mut s = ScribbleSet::new();
    for (p, &id) in ids.iter().enumerate() {
        if id != 0 {
            s.add(LabelId(id), [p]);
        }
    }
    s
}

fn ids_to_labeling(grid: Grid, ids: Vec<u8>, background: LabelId) -> Result<Labeling> {
    let mut labels: BTreeSet<LabelId> = ids.iter().map(|&i| LabelId(i)).collect();
    labels.insert(background);
    Labeling::new(
        grid,
        labels.into_iter().collect(),
        background,
        ids.into_iter().map(LabelId).collect(),
    )
}

/// Scribbles from a label PNG or a volume header, checked against `grid`.
pub fn load_scribbles(path: &Path, grid: &Grid) -> Result<ScribbleSet> {
    let (g, ids) = load_label_ids(path)?;
    if &g != grid {
        return Err(Error::format(format!(
            "{}: scribble dims {:?} do not match image dims {:?}",
            path.display(),
            g.dims(),
            grid.dims()
        )));
    }
    Ok(ids_to_scribbles(&ids))
}

/// Labeling from a label PNG or a volume header; its label set is the ids present plus `background`.
pub fn load_labeling(path: &Path, background: LabelId) -> Result<Labeling> {
    let (grid, ids) = load_label_ids(path)?;
    ids_to_labeling(grid, ids, background)
}

fn load_label_ids(path: &Path) -> Result<(Grid, Vec<u8>)> {
    if is_volume_header(path) {
        let (grid, header, raw) = read_volume(path)?;
        if header.dtype != SampleType::U8 || header.channels != 1 {
            return Err(Error::format(format!("{}: label volumes must be single-channel u8", path.display())));
        }
        Ok((grid, raw))
    } else {
        decode_label_png(&read_file(path)?)
    }
}

fn labeling_ids(labeling: &Labeling) -> Vec<u8> {
    labeling.assignment().iter().map(|l| l.0).collect()
}

pub fn save_labeling(labeling: &Labeling, path: &Path) -> Result<()> {
    let ids = labeling_ids(labeling);
    if labeling.grid().ndim() == 3 || is_volume_header(path) {
        write_volume(path, labeling.grid(), 1, SampleType::U8, &ids)
    } else {
        write_file(path, &encode_label_png(labeling.grid(), &ids)?)
    }
}

pub fn save_scribbles(scribbles: &ScribbleSet, grid: &Grid, path: &Path) -> Result<()> {
    let mut ids = vec![0u8; grid.len()];
    for (label, pixels) in scribbles.iter() {
        for &p in pixels.range(..grid.len()) {
            ids[p] = label.0;
        }
    }
    if grid.ndim() == 3 || is_volume_header(path) {
        write_volume(path, grid, 1, SampleType::U8, &ids)
    } else {
        write_file(path, &encode_label_png(grid, &ids)?)
    }
}

/// Image blended with label colors at opacity `alpha`.
pub fn overlay_png(image: &GridImage, labeling: &Labeling, alpha: f64) -> Result<Vec<u8>> {
    let (w, h) = require_2d(image.grid())?;
    if image.grid() != labeling.grid() {
        return Err(Error::invalid("overlay labeling does not match image"));
    }
    let raw = (0..image.grid().len())
        .flat_map(|p| {
            let base = rgb_of(image, p);
            let tint = label_color(labeling.get(p));
            std::array::from_fn::<u8, 3, _>(|i| {
                to_u8((1.0 - alpha) * base[i] + alpha * tint[i] as f64 / 255.0)
            })
        })
        .collect();
    encode_rgb(RgbImage::from_raw(w, h, raw).expect("buffer matches dims"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleType {
    U8,
    F32,
}

/// JSON header of a raw volume. `dims` is `[slices, rows, cols]`; samples
/// are interleaved by channel, little-endian, with `u8` scaled by 1/255.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: Vec<usize>,
    pub channels: usize,
    pub dtype: SampleType,
    /// Raw sample file, relative to the header.
    pub data: String,
}

fn is_volume_header(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

fn data_path(header_path: &Path, header: &VolumeHeader) -> PathBuf {
    header_path.parent().unwrap_or(Path::new(".")).join(&header.data)
}

fn read_volume(path: &Path) -> Result<(Grid, VolumeHeader, Vec<u8>)> {
    let header: VolumeHeader = serde_json::from_slice(&read_file(path)?)
        .map_err(|e| Error::format(format!("{}: bad volume header: {e}", path.display())))?;
    let grid = Grid::new(&header.dims)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let raw = read_file(&data_path(path, &header))?;
    let width = match header.dtype {
        SampleType::U8 => 1,
        SampleType::F32 => 4,
    };
    let expected = grid.len() * header.channels * width;
    if header.channels == 0 || raw.len() != expected {
        return Err(Error::format(format!(
            "{}: expected {expected} bytes of samples, found {}",
            path.display(),
            raw.len()
        )));
    }
    Ok((grid, header, raw))
}

fn write_volume(path: &Path, grid: &Grid, channels: usize, dtype: SampleType, raw: &[u8]) -> Result<()> {
    let stem = path
        .file_stem()
        .ok_or_else(|| Error::invalid(format!("{}: no file name", path.display())))?;
    let data = format!("{}.raw", stem.to_string_lossy());
    let header = VolumeHeader {
        dims: grid.dims().to_vec(),
        channels,
        dtype,
        data,
    };
    write_file(&data_path(path, &header), raw)?;
    let json = serde_json::to_vec_pretty(&header).expect("header serializes");
    write_file(path, &json)
}

pub fn load_volume(path: &Path) -> Result<GridImage> {
    let (grid, header, raw) = read_volume(path)?;
    let data = match header.dtype {
        SampleType::U8 => raw.iter().map(|&b| b as f64 / 255.0).collect(),
        SampleType::F32 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    };
    GridImage::new(grid, header.channels, data)
}

/// Writes `f32` samples.
pub fn save_volume(image: &GridImage, path: &Path) -> Result<()> {
    let raw: Vec<u8> = image.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    write_volume(path, image.grid(), image.channels(), SampleType::F32, &raw)
}

/// PNG for 2D images, raw volume for `.json` headers.
pub fn load_any_image(path: &Path) -> Result<GridImage> {
    if is_volume_header(path) {
        load_volume(path)
    } else {
        load_image(path)
    }
}
