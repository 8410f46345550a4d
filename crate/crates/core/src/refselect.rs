//! Reference-image selection: rank candidate object images by their mean
//! embedding similarity to masked crops of the object in the video, then pick
//! the best one.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side of the baseline embedding grid; the vector has `GRID * GRID` entries.
pub const GRID: usize = 16;
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];
/// Centered baseline vectors with a smaller norm are treated as constant images.
const DEGENERATE_NORM: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RefSelectError {
    #[error("image format: {0}")]
    Format(String),
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding provider: {0}")]
    Provider(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    /// Set when the image carried no signal and the vector is a stand-in.
    #[serde(default)]
    pub degenerate: bool,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Embedding {
            values,
            degenerate: false,
        }
    }

    /// Scales to unit length. Zero and non-finite vectors are rejected.
    pub fn normalized(values: Vec<f64>) -> Result<Self, RefSelectError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RefSelectError::InvalidArgument("embedding has non-finite components".into()));
        }
        let n = norm(&values);
        if n == 0.0 {
            return Err(RefSelectError::DegenerateEmbedding("zero vector".into()));
        }
        Ok(Embedding::new(values.into_iter().map(|v| v / n).collect()))
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Anything that turns an image into a fixed-length vector. Implementations
/// must be deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, image: &DynamicImage) -> Result<Embedding, RefSelectError>;
}

/// Grayscale thumbnail embedder; needs no model.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineEmbedder;

impl EmbeddingProvider for BaselineEmbedder {
    fn name(&self) -> &str {
        "baseline-gray16"
    }

    fn dimension(&self) -> usize {
        GRID * GRID
    }

    fn embed(&self, image: &DynamicImage) -> Result<Embedding, RefSelectError> {
        baseline_embed(image)
    }
}

/// Row `cell` holds the overlap weights of every source sample with that
/// output cell, normalized to sum to one.
fn area_matrix(src: usize) -> Vec<Vec<f64>> {
    let scale = src as f64 / GRID as f64;
    (0..GRID)
        .map(|cell| {
            let (lo, hi) = (cell as f64 * scale, (cell + 1) as f64 * scale);
            (0..src)
                .map(|s| {
                    let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    overlap / scale
                })
                .collect()
        })
        .collect()
}

/// Luma, area-average to 16x16, subtract the mean, normalize. A constant
/// image maps to the first basis vector and is flagged degenerate.
pub fn baseline_embed(image: &DynamicImage) -> Result<Embedding, RefSelectError> {
    let rgb = image.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(RefSelectError::Format("empty image".into()));
    }
    let luma: Vec<f64> = rgb
        .pixels()
        .map(|p| LUMA[0] * p.0[0] as f64 + LUMA[1] * p.0[1] as f64 + LUMA[2] * p.0[2] as f64)
        .collect();
    let ax = area_matrix(w);
    let ay = area_matrix(h);
    // Columns first: rows[y][cx] = sum_x ax[cx][x] * luma[y][x].
    let rows: Vec<[f64; GRID]> = (0..h)
        .map(|y| std::array::from_fn(|cx| ax[cx].iter().zip(&luma[y * w..(y + 1) * w]).map(|(a, l)| a * l).sum()))
        .collect();
    let mut grid = Vec::with_capacity(GRID * GRID);
    for wy in &ay {
        for cx in 0..GRID {
            grid.push(wy.iter().zip(&rows).map(|(a, r)| a * r[cx]).sum::<f64>());
        }
    }
    let mean = grid.iter().sum::<f64>() / grid.len() as f64;
    for v in &mut grid {
        *v -= mean;
    }
    let n = norm(&grid);
    if n < DEGENERATE_NORM {
        let mut values = vec![0.0; GRID * GRID];
        values[0] = 1.0;
        return Ok(Embedding {
            values,
            degenerate: true,
        });
    }
    Ok(Embedding::new(grid.into_iter().map(|v| v / n).collect()))
}

pub fn decode_image(bytes: &[u8]) -> Result<DynamicImage, RefSelectError> {
    image::load_from_memory(bytes).map_err(|e| RefSelectError::Format(e.to_string()))
}

/// [`baseline_embed`] on encoded image bytes.
pub fn embed_bytes(bytes: &[u8]) -> Result<Embedding, RefSelectError> {
    baseline_embed(&decode_image(bytes)?)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, RefSelectError> {
    if a.len() != b.len() {
        return Err(RefSelectError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(RefSelectError::DegenerateEmbedding("zero vector in cosine".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Embedding>,
    pub frames: Vec<Embedding>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<Embedding>, frames: Vec<Embedding>) -> Result<Self, RefSelectError> {
        if candidates.is_empty() {
            return Err(RefSelectError::InvalidArgument("no candidates".into()));
        }
        if frames.is_empty() {
            return Err(RefSelectError::InvalidArgument("no frames".into()));
        }
        Ok(CandidateSet { candidates, frames })
    }
}

/// Mean cosine similarity of each candidate against every frame.
pub fn score_candidates(set: &CandidateSet) -> Result<Vec<f64>, RefSelectError> {
    if set.frames.is_empty() {
        return Err(RefSelectError::InvalidArgument("no frames".into()));
    }
    set.candidates
        .iter()
        .map(|c| {
            let mut sum = 0.0;
            for f in &set.frames {
                sum += cosine(&c.values, &f.values)?;
            }
            Ok(sum / set.frames.len() as f64)
        })
        .collect()
}

/// Index of the highest score; the lowest index wins ties.
pub fn select_reference(scores: &[f64]) -> Result<usize, RefSelectError> {
    if scores.is_empty() {
        return Err(RefSelectError::InvalidArgument("empty candidate set".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(RefSelectError::InvalidArgument("NaN score".into()));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// `count` frame indices spread evenly over `0..frame_count`, endpoints included.
pub fn sample_frames(frame_count: usize, count: usize) -> Vec<usize> {
    if frame_count == 0 || count == 0 {
        return Vec::new();
    }
    if count >= frame_count {
        return (0..frame_count).collect();
    }
    if count == 1 {
        return vec![0];
    }
    let last = (frame_count - 1) as f64;
    (0..count)
        .map(|j| (j as f64 * last / (count - 1) as f64).round() as usize)
        .collect()
}

/// Object pixels of `frame` on a white background, cropped to the mask's
/// bounding box. `None` when the mask is empty.
pub fn masked_crop(frame: &RgbImage, mask: &GrayImage) -> Result<Option<RgbImage>, RefSelectError> {
    if frame.dimensions() != mask.dimensions() {
        return Err(RefSelectError::InvalidArgument(format!(
            "frame is {:?} but mask is {:?}",
            frame.dimensions(),
            mask.dimensions()
        )));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for (x, y, m) in mask.enumerate_pixels() {
        if m.0[0] != 0 {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
    }
    if x0 == u32::MAX {
        return Ok(None);
    }
    Ok(Some(RgbImage::from_fn(x1 - x0 + 1, y1 - y0 + 1, |x, y| {
        let (sx, sy) = (x + x0, y + y0);
        if mask.get_pixel(sx, sy).0[0] != 0 {
            *frame.get_pixel(sx, sy)
        } else {
            Rgb([255, 255, 255])
        }
    })))
}

/// Embeds every image; images run in parallel.
pub fn embed_all(provider: &dyn EmbeddingProvider, images: &[DynamicImage]) -> Result<Vec<Embedding>, RefSelectError> {
    let out: Vec<Embedding> = images.par_iter().map(|img| provider.embed(img)).collect::<Result<_, _>>()?;
    if let Some(e) = out.iter().find(|e| e.dimension() != provider.dimension()) {
        return Err(RefSelectError::DimensionMismatch(e.dimension(), provider.dimension()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub scores: Vec<f64>,
    pub selected: usize,
    pub provider: String,
    pub candidates: Vec<String>,
    pub frames: Vec<usize>,
    /// Candidates whose embedding came from a constant image.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<usize>,
}

/// Scores candidate images against masked crops of sampled frames.
pub fn select_from_images(
    provider: &dyn EmbeddingProvider,
    candidates: &[DynamicImage],
    crops: &[DynamicImage],
) -> Result<(Vec<f64>, usize, Vec<usize>), RefSelectError> {
    let set = CandidateSet::new(embed_all(provider, candidates)?, embed_all(provider, crops)?)?;
    let scores = score_candidates(&set)?;
    let selected = select_reference(&scores)?;
    let degenerate = set.candidates.iter().enumerate().filter(|(_, e)| e.degenerate).map(|(i, _)| i).collect();
    Ok((scores, selected, degenerate))
}

fn read(path: &Path) -> Result<Vec<u8>, RefSelectError> {
    fs::read(path).map_err(|source| RefSelectError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>, RefSelectError> {
    let entries = fs::read_dir(dir).map_err(|source| RefSelectError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

/// Candidate file names: `candidates.json` (a JSON array of names) when
/// present, otherwise every PNG in the directory in name order.
pub fn list_candidates(dir: &Path) -> Result<Vec<String>, RefSelectError> {
    let listing = dir.join("candidates.json");
    if listing.exists() {
        return serde_json::from_slice(&read(&listing)?)
            .map_err(|e| RefSelectError::Format(format!("{}: {e}", listing.display())));
    }
    Ok(png_files(dir)?
        .into_iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect())
}

/// Directory-level selection: `frames_dir` and `masks_dir` hold matching
/// PNG sequences, `candidates_dir` the candidate images.
pub fn select_from_directories(
    provider: &dyn EmbeddingProvider,
    frames_dir: &Path,
    masks_dir: &Path,
    candidates_dir: &Path,
    samples: usize,
) -> Result<Selection, RefSelectError> {
    let frames = png_files(frames_dir)?;
    let masks = png_files(masks_dir)?;
    if frames.len() != masks.len() {
        return Err(RefSelectError::InvalidArgument(format!(
            "{} frames but {} masks",
            frames.len(),
            masks.len()
        )));
    }
    let mut used = Vec::new();
    let mut crops = Vec::new();
    for t in sample_frames(frames.len(), samples) {
        let frame = decode_image(&read(&frames[t])?)?.to_rgb8();
        let mask = decode_image(&read(&masks[t])?)?.to_luma8();
        if let Some(crop) = masked_crop(&frame, &mask)? {
            used.push(t);
            crops.push(DynamicImage::ImageRgb8(crop));
        }
    }
    if crops.is_empty() {
        return Err(RefSelectError::InvalidArgument("every sampled mask is empty".into()));
    }
    let names = list_candidates(candidates_dir)?;
    let candidates = names
        .iter()
        .map(|n| decode_image(&read(&candidates_dir.join(n))?))
        .collect::<Result<Vec<_>, _>>()?;
    let (scores, selected, degenerate) = select_from_images(provider, &candidates, &crops)?;
    Ok(Selection {
        scores,
        selected,
        provider: provider.name().to_string(),
        candidates: names,
        frames: used,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32, offset: u8) -> DynamicImage {
        DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, |x, y| {
            let g = (x * 3 + y * 2) as u8 + offset;
            Rgb([g, g / 2 + offset, 200 - g / 2])
        }))
    }

    #[test]
    fn identical_images_identical_vectors() {
        let a = baseline_embed(&gradient(40, 30, 0)).unwrap();
        let b = baseline_embed(&gradient(40, 30, 0)).unwrap();
        assert_eq!(a, b);
        assert!((norm(&a.values) - 1.0).abs() < 1e-9);
        assert_eq!(a.dimension(), 256);
    }

    #[test]
    fn uniform_brightness_shift_is_invisible() {
        let base = RgbImage::from_fn(32, 32, |x, y| Rgb([(x * 4) as u8, (y * 5) as u8, ((x + y) * 2) as u8]));
        let mut bright = base.clone();
        for p in bright.pixels_mut() {
            p.0 = p.0.map(|c| c + 10);
        }
        let a = baseline_embed(&DynamicImage::ImageRgb8(base)).unwrap();
        let b = baseline_embed(&DynamicImage::ImageRgb8(bright)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_image_is_degenerate_basis_vector() {
        let e = baseline_embed(&DynamicImage::ImageRgb8(RgbImage::from_pixel(20, 20, Rgb([90, 10, 200])))).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.values[0], 1.0);
        assert!(e.values[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn small_images_still_embed() {
        let e = baseline_embed(&gradient(5, 3, 0)).unwrap();
        assert!(!e.degenerate);
        assert!((norm(&e.values) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn undecodable_bytes_are_format_errors() {
        assert!(matches!(embed_bytes(b"not an image"), Err(RefSelectError::Format(_))));
    }

    #[test]
    fn score_examples() {
        let e = |v: &[f64]| Embedding::new(v.to_vec());
        let same = CandidateSet::new(vec![e(&[0.6, 0.8])], vec![e(&[0.6, 0.8])]).unwrap();
        assert!((score_candidates(&same).unwrap()[0] - 1.0).abs() < 1e-15);
        let ortho = CandidateSet::new(vec![e(&[1.0, 0.0, 0.0])], vec![e(&[0.0, 1.0, 0.0]), e(&[0.0, 0.0, 1.0])]).unwrap();
        assert_eq!(score_candidates(&ortho).unwrap(), vec![0.0]);
        let zero = CandidateSet::new(vec![e(&[0.0, 0.0])], vec![e(&[1.0, 0.0])]).unwrap();
        assert!(matches!(score_candidates(&zero), Err(RefSelectError::DegenerateEmbedding(_))));
        assert!(CandidateSet::new(vec![], vec![e(&[1.0])]).is_err());
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_reference(&[0.2, 0.9, 0.5]).unwrap(), 1);
        assert_eq!(select_reference(&[0.7, 0.7]).unwrap(), 0);
        assert!(matches!(select_reference(&[]), Err(RefSelectError::InvalidArgument(_))));
    }

    #[test]
    fn frame_sampling() {
        assert_eq!(sample_frames(10, 4), vec![0, 3, 6, 9]);
        assert_eq!(sample_frames(3, 8), vec![0, 1, 2]);
        assert_eq!(sample_frames(5, 1), vec![0]);
        assert!(sample_frames(0, 3).is_empty());
    }

    #[test]
    fn crop_whitens_background() {
        let frame = RgbImage::from_pixel(6, 5, Rgb([10, 20, 30]));
        let mut mask = GrayImage::new(6, 5);
        mask.put_pixel(1, 1, image::Luma([255]));
        mask.put_pixel(3, 2, image::Luma([255]));
        let crop = masked_crop(&frame, &mask).unwrap().unwrap();
        assert_eq!(crop.dimensions(), (3, 2));
        assert_eq!(crop.get_pixel(0, 0).0, [10, 20, 30]);
        assert_eq!(crop.get_pixel(1, 0).0, [255, 255, 255]);
        assert_eq!(crop.get_pixel(2, 1).0, [10, 20, 30]);
        assert!(masked_crop(&frame, &GrayImage::new(6, 5)).unwrap().is_none());
    }
}
