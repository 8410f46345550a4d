//! Camera-aligned reprojection of the placed object and mask extraction.
//!
//! Each frame: transform the object by its placement, splat every point as a
//! disc into a z-buffer, keep pixels where the object is in front of the scene
//! depth (with a relative tolerance), then clean the silhouette with a
//! morphological closing and a minimum component area.

pub mod export;
pub mod morph;

use std::sync::atomic::{AtomicUsize, Ordering};

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{DepthMap, ObjectCloud, SceneBundle};
use crate::geom::{apply_placement, project, CameraIntrinsics, CameraPose, GeomError, Vec3};
use crate::propagation::PlacementTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Disc radius of each splatted point, pixels.
    pub splat_radius: f64,
    /// The object is visible where its depth is at most `scene_depth * (1 + eps)`.
    pub depth_epsilon_rel: f64,
    pub closing_radius: u32,
    /// Connected components smaller than this are dropped.
    pub min_mask_area: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            splat_radius: 1.5,
            depth_epsilon_rel: 0.01,
            closing_radius: 2,
            min_mask_area: 4,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.splat_radius > 0.0 && self.splat_radius.is_finite()) {
            return Err(RenderError::InvalidConfig("splat_radius must be positive".into()));
        }
        if !(self.depth_epsilon_rel >= 0.0 && self.depth_epsilon_rel < 1.0) {
            return Err(RenderError::InvalidConfig("depth_epsilon_rel must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error("trajectory has {got} placements for {expected} frames")]
    TrajectoryLength { expected: usize, got: usize },
    #[error("buffer is {got:?}, expected {expected:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("rendering failed for frames {}", .0.iter().map(|(t, e)| format!("{t}: {e}")).collect::<Vec<_>>().join("; "))]
    Frames(Vec<(usize, RenderError)>),
}

/// Nearest object depth per pixel; `f64::INFINITY` where nothing landed.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatBuffers {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub coverage: Vec<bool>,
}

impl SplatBuffers {
    fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        SplatBuffers {
            width,
            height,
            depth: vec![f64::INFINITY; n],
            coverage: vec![false; n],
        }
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|c| **c).count()
    }
}

/// Rasterizes world points as depth-tested discs. Points behind the camera or
/// projecting outside the image are dropped.
pub fn splat_object(points_world: &[Vec3], intrinsics: &CameraIntrinsics, pose: &CameraPose, config: &RenderConfig) -> SplatBuffers {
    let (w, h) = (intrinsics.width as i64, intrinsics.height as i64);
    let mut buf = SplatBuffers::empty(intrinsics.width, intrinsics.height);
    let r = config.splat_radius;
    let r2 = r * r;
    for p in points_world {
        let Some((px, depth)) = project(intrinsics, pose, p) else {
            continue;
        };
        if !intrinsics.contains(&px) {
            continue;
        }
        let x0 = ((px.u - r).ceil() as i64).max(0);
        let x1 = ((px.u + r).floor() as i64).min(w - 1);
        let y0 = ((px.v - r).ceil() as i64).max(0);
        let y1 = ((px.v + r).floor() as i64).min(h - 1);
        for y in y0..=y1 {
            let dy = y as f64 - px.v;
            for x in x0..=x1 {
                let dx = x as f64 - px.u;
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let i = (y * w + x) as usize;
                buf.coverage[i] = true;
                if depth < buf.depth[i] {
                    buf.depth[i] = depth;
                }
            }
        }
    }
    buf
}

/// Pixels where the object is covered and not behind the scene. Invalid scene
/// depth never hides the object.
pub fn occlusion_test(splat: &SplatBuffers, scene_depth: &DepthMap, config: &RenderConfig) -> Result<Vec<bool>, RenderError> {
    if (splat.width, splat.height) != (scene_depth.width, scene_depth.height) {
        return Err(RenderError::DimensionMismatch {
            expected: (splat.width, splat.height),
            got: (scene_depth.width, scene_depth.height),
        });
    }
    let scale = 1.0 + config.depth_epsilon_rel;
    Ok(splat
        .coverage
        .iter()
        .zip(&splat.depth)
        .zip(&scene_depth.values)
        .map(|((&covered, &obj), &scene)| {
            covered && (!DepthMap::is_valid_value(scene) || obj <= scene as f64 * scale)
        })
        .collect())
}

/// Binary mask, 0 for background and 255 for object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl MaskFrame {
    pub fn from_bits(width: u32, height: u32, bits: &[bool]) -> Self {
        MaskFrame {
            width,
            height,
            data: bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        MaskFrame {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn is_set(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] != 0
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|v| **v != 0).count()
    }

    /// Mean pixel position of the mask, `None` when empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, v) in self.data.iter().enumerate() {
            if *v != 0 {
                sx += (i % self.width as usize) as f64;
                sy += (i / self.width as usize) as f64;
                n += 1;
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Intersection over union; two empty masks count as identical.
    pub fn iou(&self, other: &MaskFrame) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.data.iter().zip(&other.data) {
            let (a, b) = (*a != 0, *b != 0);
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn to_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width, self.height, self.data.clone()).expect("mask buffer size")
    }
}

/// Closing then small-component removal.
pub fn extract_mask(visibility: &[bool], width: u32, height: u32, config: &RenderConfig) -> MaskFrame {
    let (w, h) = (width as usize, height as usize);
    let mut bits = morph::close(visibility, w, h, config.closing_radius);
    morph::remove_small_components(&mut bits, w, h, config.min_mask_area);
    MaskFrame::from_bits(width, height, &bits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSequence {
    pub masks: Vec<MaskFrame>,
    /// Present when the bundle carries RGB frames.
    pub previews: Option<Vec<RgbImage>>,
    /// Object points per frame that project into the image and pass the depth
    /// test at their own pixel.
    pub visible_point_counts: Vec<usize>,
}

impl MaskSequence {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

pub const PREVIEW_TINT: [u8; 3] = [255, 48, 48];

/// Blends the tint into `base` wherever the mask is set.
pub fn composite_preview(base: &RgbImage, mask: &MaskFrame) -> RgbImage {
    let mut out = base.clone();
    for (i, px) in out.pixels_mut().enumerate() {
        if mask.data[i] != 0 {
            *px = Rgb(std::array::from_fn(|c| ((px.0[c] as u16 + PREVIEW_TINT[c] as u16) / 2) as u8));
        }
    }
    out
}

/// Grayscale rendering of a depth map, near surfaces bright, invalid pixels black.
pub fn depth_visualization(depth: &DepthMap) -> RgbImage {
    let valid = depth.values.iter().copied().filter(|d| DepthMap::is_valid_value(*d));
    let (lo, hi) = valid.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let span = (hi - lo).max(f32::EPSILON);
    RgbImage::from_fn(depth.width, depth.height, |x, y| {
        let d = depth.get(x, y);
        if !DepthMap::is_valid_value(d) {
            return Rgb([0, 0, 0]);
        }
        let g = (255.0 - 200.0 * (d - lo) / span).round() as u8;
        Rgb([g, g, g])
    })
}

struct FrameOutput {
    mask: MaskFrame,
    preview: Option<RgbImage>,
    visible_points: usize,
}

fn count_visible_points(points: &[Vec3], intrinsics: &CameraIntrinsics, pose: &CameraPose, depth: &DepthMap, config: &RenderConfig) -> usize {
    points
        .iter()
        .filter(|p| {
            let Some((px, d)) = project(intrinsics, pose, p) else {
                return false;
            };
            if !intrinsics.contains(&px) {
                return false;
            }
            let (x, y) = px.nearest_pixel();
            depth
                .valid_at(x, y)
                .is_none_or(|scene| d <= scene * (1.0 + config.depth_epsilon_rel))
        })
        .count()
}

/// Renders one frame of the sequence.
pub fn render_frame(
    object: &ObjectCloud,
    placement: &crate::geom::RigidPlacement,
    bundle: &SceneBundle,
    t: usize,
    config: &RenderConfig,
) -> Result<(MaskFrame, usize), RenderError> {
    let out = render_frame_inner(object, placement, bundle, t, config)?;
    Ok((out.mask, out.visible_points))
}

fn render_frame_inner(
    object: &ObjectCloud,
    placement: &crate::geom::RigidPlacement,
    bundle: &SceneBundle,
    t: usize,
    config: &RenderConfig,
) -> Result<FrameOutput, RenderError> {
    let k = &bundle.intrinsics;
    let pose = &bundle.poses[t];
    let world = apply_placement(placement, &object.points)?;
    let splat = splat_object(&world, k, pose, config);
    let visible = occlusion_test(&splat, &bundle.depths[t], config)?;
    let mask = extract_mask(&visible, k.width, k.height, config);
    let preview = bundle.rgb(t).map(|rgb| composite_preview(rgb, &mask));
    let visible_points = count_visible_points(&world, k, pose, &bundle.depths[t], config);
    Ok(FrameOutput {
        mask,
        preview,
        visible_points,
    })
}

pub fn render_sequence(
    object: &ObjectCloud,
    trajectory: &PlacementTrajectory,
    bundle: &SceneBundle,
    config: &RenderConfig,
) -> Result<MaskSequence, RenderError> {
    render_sequence_with_progress(object, trajectory, bundle, config, |_| {})
}

/// As [`render_sequence`]; frames render in parallel and `progress` receives
/// the running count of finished frames.
pub fn render_sequence_with_progress(
    object: &ObjectCloud,
    trajectory: &PlacementTrajectory,
    bundle: &SceneBundle,
    config: &RenderConfig,
    progress: impl Fn(usize) + Sync,
) -> Result<MaskSequence, RenderError> {
    config.validate()?;
    let frame_count = bundle.frame_count();
    if trajectory.len() != frame_count {
        return Err(RenderError::TrajectoryLength {
            expected: frame_count,
            got: trajectory.len(),
        });
    }
    let done = AtomicUsize::new(0);
    let results: Vec<Result<FrameOutput, RenderError>> = (0..frame_count)
        .into_par_iter()
        .map(|t| {
            let out = render_frame_inner(object, &trajectory.placements[t], bundle, t, config);
            progress(done.fetch_add(1, Ordering::SeqCst) + 1);
            out
        })
        .collect();

    let mut masks = Vec::with_capacity(frame_count);
    let mut previews = Vec::with_capacity(frame_count);
    let mut visible_point_counts = Vec::with_capacity(frame_count);
    let mut failures = Vec::new();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(out) => {
                masks.push(out.mask);
                previews.extend(out.preview);
                visible_point_counts.push(out.visible_points);
            }
            Err(e) => failures.push((t, e)),
        }
    }
    if !failures.is_empty() {
        return Err(RenderError::Frames(failures));
    }
    Ok(MaskSequence {
        masks,
        previews: bundle.rgb_frames.is_some().then_some(previews),
        visible_point_counts,
    })
}
