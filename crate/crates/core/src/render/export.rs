//! On-disk export of rendered masks and the placement that produced them.
//!
//! ```text
//! mask/00000.png         8-bit grayscale, 0 or 255
//! preview/00000.png      RGB composite (when the bundle has RGB frames)
//! masks_manifest.json    frame count, render config, visible-point counts
//! trajectory.json        [{scale, R, t, flag}, ...]
//! placement.json         {scale, R, t} for frame 0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MaskFrame, MaskSequence, RenderConfig};
use crate::bundle::{encode_png, write_atomic, BundleError};
use crate::geom::RigidPlacement;
use crate::propagation::PlacementTrajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasksManifest {
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub config: RenderConfig,
    pub visible_point_counts: Vec<usize>,
    pub masks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previews: Option<Vec<String>>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), BundleError> {
    fs::write(&path, bytes).map_err(io(&path))
}

pub fn write_masks(dir: &Path, masks: &MaskSequence, config: &RenderConfig) -> Result<MasksManifest, BundleError> {
    let (width, height) = masks.masks.first().map_or((0, 0), |m| (m.width, m.height));
    let mask_dir = dir.join("mask");
    fs::create_dir_all(&mask_dir).map_err(io(&mask_dir))?;
    let mut names = Vec::with_capacity(masks.len());
    for (t, m) in masks.masks.iter().enumerate() {
        let name = format!("mask/{t:05}.png");
        write(dir.join(&name), &encode_png(&m.to_image()))?;
        names.push(name);
    }
    let previews = match &masks.previews {
        Some(frames) => {
            let preview_dir = dir.join("preview");
            fs::create_dir_all(&preview_dir).map_err(io(&preview_dir))?;
            let mut names = Vec::with_capacity(frames.len());
            for (t, img) in frames.iter().enumerate() {
                let name = format!("preview/{t:05}.png");
                write(dir.join(&name), &encode_png(img))?;
                names.push(name);
            }
            Some(names)
        }
        None => None,
    };
    let manifest = MasksManifest {
        frame_count: masks.len(),
        width,
        height,
        config: *config,
        visible_point_counts: masks.visible_point_counts.clone(),
        masks: names,
        previews,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join("masks_manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

/// Reads back what [`write_masks`] produced.
pub fn read_masks(dir: &Path) -> Result<(MasksManifest, MaskSequence), BundleError> {
    let path = dir.join("masks_manifest.json");
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => BundleError::MissingComponent(path.clone()),
        _ => BundleError::Io {
            path: path.clone(),
            source: e,
        },
    })?;
    let manifest: MasksManifest = serde_json::from_slice(&bytes).map_err(|source| BundleError::Json { path, source })?;
    let load = |name: &String| -> Result<image::DynamicImage, BundleError> {
        let p = dir.join(name);
        let bytes = fs::read(&p).map_err(io(&p))?;
        image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| BundleError::Format(format!("{}: {e}", p.display())))
    };
    let masks = manifest
        .masks
        .iter()
        .map(|name| {
            let img = load(name)?.to_luma8();
            Ok(MaskFrame {
                width: img.width(),
                height: img.height(),
                data: img.into_raw(),
            })
        })
        .collect::<Result<Vec<_>, BundleError>>()?;
    let previews = match &manifest.previews {
        Some(names) => Some(names.iter().map(|n| Ok(load(n)?.to_rgb8())).collect::<Result<Vec<_>, BundleError>>()?),
        None => None,
    };
    let seq = MaskSequence {
        masks,
        previews,
        visible_point_counts: manifest.visible_point_counts.clone(),
    };
    Ok((manifest, seq))
}

/// Writes the full result set: masks, previews, trajectory and initial placement.
pub fn write_results(
    dir: &Path,
    placement: &RigidPlacement,
    trajectory: &PlacementTrajectory,
    masks: &MaskSequence,
    config: &RenderConfig,
) -> Result<(), BundleError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    write_masks(dir, masks, config)?;
    write(dir.join("trajectory.json"), trajectory.to_json().as_bytes())?;
    let placement_json = serde_json::to_string_pretty(placement).expect("placement serializes");
    write(dir.join("placement.json"), placement_json.as_bytes())
}
