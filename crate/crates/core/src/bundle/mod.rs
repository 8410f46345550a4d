//! Scene bundles: the on-disk contract with upstream 4D reconstruction.
//!
//! A bundle directory looks like
//!
//! ```text
//! manifest.json      frame_count, stride, format_version, file lists
//! intrinsics.json    {fx, fy, cx, cy, width, height}
//! poses.json         [{"R": [9 reals, row-major], "t": [3 reals]}, ...]  world→camera
//! depth/00000.pfm    one per frame, meters
//! flow/00000.flo     frame t → t+1 stored at index t (T−1 files)
//! rgb/00000.png      optional
//! object/<name>.ply  optional co-shipped object clouds
//! ```
//!
//! Scene point sets are not stored; they are derived on load by unprojecting
//! every `stride`-th valid depth pixel.

mod flo;
mod pfm;
mod ply;
mod types;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CameraIntrinsics, CameraPose, GeomError};

pub use flo::{parse_flo, write_flo, FLO_MAGIC};
pub use pfm::{parse_pfm, write_pfm};
pub use ply::{parse_ply, write_ply, PlyEncoding};
pub use types::{
    DepthMap, FlowField, ObjectCloud, ScenePoint, ScenePointSet, UNKNOWN_FLOW, UNKNOWN_FLOW_THRESHOLD,
};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_STRIDE: u32 = 2;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("missing bundle component {0}")]
    MissingComponent(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error{}: {detail}", frame.map(|f| format!(" at frame {f}")).unwrap_or_default())]
    Validation { frame: Option<usize>, detail: String },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

impl BundleError {
    fn validation(frame: impl Into<Option<usize>>, detail: impl Into<String>) -> Self {
        BundleError::Validation {
            frame: frame.into(),
            detail: detail.into(),
        }
    }
}

/// Everything the pipeline knows about the scene over time.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<CameraPose>,
    pub depths: Vec<DepthMap>,
    /// `flows[t]` maps frame `t` to `t + 1`.
    pub flows: Vec<FlowField>,
    pub scene_points: Vec<ScenePointSet>,
    pub rgb_frames: Option<Vec<RgbImage>>,
    pub objects: BTreeMap<String, ObjectCloud>,
    pub stride: u32,
}

impl SceneBundle {
    /// Validates the per-frame arrays and derives the scene point sets.
    pub fn new(
        intrinsics: CameraIntrinsics,
        poses: Vec<CameraPose>,
        depths: Vec<DepthMap>,
        flows: Vec<FlowField>,
        rgb_frames: Option<Vec<RgbImage>>,
        stride: u32,
    ) -> Result<Self, BundleError> {
        let mut bundle = SceneBundle {
            intrinsics,
            poses,
            depths,
            flows,
            scene_points: Vec::new(),
            rgb_frames,
            objects: BTreeMap::new(),
            stride,
        };
        bundle.validate_arrays()?;
        bundle.scene_points = bundle.derive_scene_points();
        Ok(bundle)
    }

    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    pub fn rgb(&self, t: usize) -> Option<&RgbImage> {
        self.rgb_frames.as_ref().and_then(|f| f.get(t))
    }

    fn derive_scene_points(&self) -> Vec<ScenePointSet> {
        (0..self.frame_count())
            .into_par_iter()
            .map(|t| ScenePointSet::from_depth(&self.intrinsics, &self.poses[t], &self.depths[t], self.rgb(t), self.stride))
            .collect()
    }

    fn validate_arrays(&self) -> Result<(), BundleError> {
        self.intrinsics.validate()?;
        let t = self.poses.len();
        if t == 0 {
            return Err(BundleError::validation(None, "bundle has no frames"));
        }
        if self.stride == 0 {
            return Err(BundleError::validation(None, "stride must be at least 1"));
        }
        if self.depths.len() != t {
            return Err(BundleError::validation(None, format!("{} depth maps for {t} frames", self.depths.len())));
        }
        if self.flows.len() != t - 1 {
            return Err(BundleError::validation(
                None,
                format!("{} flow fields for {t} frames (expected {})", self.flows.len(), t - 1),
            ));
        }
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        for (i, d) in self.depths.iter().enumerate() {
            if (d.width, d.height) != (w, h) {
                return Err(BundleError::validation(i, format!("depth is {}x{}, expected {w}x{h}", d.width, d.height)));
            }
        }
        for (i, f) in self.flows.iter().enumerate() {
            if (f.width, f.height) != (w, h) {
                return Err(BundleError::validation(i, format!("flow is {}x{}, expected {w}x{h}", f.width, f.height)));
            }
        }
        if let Some(rgb) = &self.rgb_frames {
            if rgb.len() != t {
                return Err(BundleError::validation(None, format!("{} RGB frames for {t} frames", rgb.len())));
            }
            for (i, img) in rgb.iter().enumerate() {
                if img.dimensions() != (w, h) {
                    return Err(BundleError::validation(i, format!("RGB frame is {:?}, expected {w}x{h}", img.dimensions())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    frame_count: usize,
    stride: u32,
    intrinsics: String,
    poses: String,
    depth: Vec<String>,
    flow: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rgb: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    objects: Vec<String>,
}

fn read_file(path: &Path) -> Result<Vec<u8>, BundleError> {
    fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            BundleError::MissingComponent(path.to_path_buf())
        } else {
            BundleError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BundleError> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|source| BundleError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes `bytes` next to `path` and renames over it, so readers never see a
/// partially written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write_file(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<SceneBundle, BundleError> {
    let dir = dir.as_ref();
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(BundleError::Unsupported(format!(
            "bundle format version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let t = manifest.frame_count;
    if t == 0 {
        return Err(BundleError::validation(None, "frame_count must be at least 1"));
    }
    if manifest.depth.len() != t {
        return Err(BundleError::validation(None, format!("manifest lists {} depth files for {t} frames", manifest.depth.len())));
    }
    if manifest.flow.len() != t - 1 {
        return Err(BundleError::validation(
            None,
            format!("manifest lists {} flow files for {t} frames (expected {})", manifest.flow.len(), t - 1),
        ));
    }
    if let Some(rgb) = &manifest.rgb {
        if rgb.len() != t {
            return Err(BundleError::validation(None, format!("manifest lists {} RGB files for {t} frames", rgb.len())));
        }
    }

    let intrinsics: CameraIntrinsics = read_json(&dir.join(&manifest.intrinsics))?;
    let poses: Vec<CameraPose> = read_json(&dir.join(&manifest.poses))?;
    if poses.len() != t {
        return Err(BundleError::validation(None, format!("{} poses for {t} frames", poses.len())));
    }

    let depths = manifest
        .depth
        .par_iter()
        .map(|name| parse_pfm(&read_file(&dir.join(name))?))
        .collect::<Result<Vec<_>, _>>()?;
    let flows = manifest
        .flow
        .par_iter()
        .map(|name| parse_flo(&read_file(&dir.join(name))?))
        .collect::<Result<Vec<_>, _>>()?;
    let rgb_frames = match &manifest.rgb {
        Some(names) => Some(
            names
                .par_iter()
                .map(|name| load_rgb(&dir.join(name)))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };

    let mut bundle = SceneBundle::new(intrinsics, poses, depths, flows, rgb_frames, manifest.stride)?;
    for name in &manifest.objects {
        let path = dir.join(name);
        let cloud = parse_ply(&read_file(&path)?)?;
        let key = Path::new(name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| name.clone());
        bundle.objects.insert(key, cloud);
    }
    Ok(bundle)
}

fn load_rgb(path: &Path) -> Result<RgbImage, BundleError> {
    let bytes = read_file(path)?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| BundleError::Format(format!("{}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

/// PNG bytes of an in-memory image.
pub fn encode_png<P, C>(img: &image::ImageBuffer<P, C>) -> Vec<u8>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

fn frame_name(dir: &str, t: usize, ext: &str) -> String {
    format!("{dir}/{t:05}.{ext}")
}

pub fn save_bundle(bundle: &SceneBundle, dir: impl AsRef<Path>) -> Result<(), BundleError> {
    let dir = dir.as_ref();
    bundle.validate_arrays()?;
    let t = bundle.frame_count();
    for sub in ["depth", "flow"] {
        fs::create_dir_all(dir.join(sub)).map_err(io_err(dir))?;
    }

    let depth: Vec<String> = (0..t).map(|i| frame_name("depth", i, "pfm")).collect();
    let flow: Vec<String> = (0..t - 1).map(|i| frame_name("flow", i, "flo")).collect();
    depth
        .par_iter()
        .zip(&bundle.depths)
        .try_for_each(|(name, d)| write_file(&dir.join(name), &write_pfm(d)))?;
    flow.par_iter()
        .zip(&bundle.flows)
        .try_for_each(|(name, f)| write_file(&dir.join(name), &write_flo(f)))?;

    let rgb_dir = dir.join("rgb");
    let rgb = match &bundle.rgb_frames {
        Some(frames) => {
            fs::create_dir_all(&rgb_dir).map_err(io_err(&rgb_dir))?;
            let names: Vec<String> = (0..t).map(|i| frame_name("rgb", i, "png")).collect();
            names
                .par_iter()
                .zip(frames)
                .try_for_each(|(name, img)| write_file(&dir.join(name), &encode_png(img)))?;
            Some(names)
        }
        None => {
            if rgb_dir.is_dir() {
                fs::remove_dir_all(&rgb_dir).map_err(io_err(&rgb_dir))?;
            }
            None
        }
    };

    let mut objects = Vec::new();
    if !bundle.objects.is_empty() {
        let obj_dir = dir.join("object");
        fs::create_dir_all(&obj_dir).map_err(io_err(&obj_dir))?;
        for (name, cloud) in &bundle.objects {
            let rel = format!("object/{name}.ply");
            write_file(&dir.join(&rel), &write_ply(cloud, PlyEncoding::BinaryLittleEndian))?;
            objects.push(rel);
        }
    }

    write_file(&dir.join("intrinsics.json"), json(&bundle.intrinsics).as_bytes())?;
    write_file(&dir.join("poses.json"), json(&bundle.poses).as_bytes())?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        frame_count: t,
        stride: bundle.stride,
        intrinsics: "intrinsics.json".into(),
        poses: "poses.json".into(),
        depth,
        flow,
        rgb,
        objects,
    };
    write_atomic(&dir.join("manifest.json"), json(&manifest).as_bytes())
}

fn json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("bundle metadata serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn tiny_bundle(frames: usize) -> SceneBundle {
        let k = CameraIntrinsics::new(20.0, 20.0, 8.0, 8.0, 16, 16).unwrap();
        let poses = (0..frames)
            .map(|i| CameraPose::new(Default::default(), Vec3::new(0.01 * i as f64, 0.0, 0.0)))
            .collect();
        let depths = (0..frames).map(|_| DepthMap::filled(16, 16, 2.0)).collect();
        let flows = (1..frames).map(|_| FlowField::filled(16, 16, [0.2, 0.0])).collect();
        SceneBundle::new(k, poses, depths, flows, None, 1).unwrap()
    }

    #[test]
    fn constant_depth_points_lie_on_plane() {
        let b = tiny_bundle(1);
        assert_eq!(b.scene_points[0].len(), 256);
        let k = &b.intrinsics;
        for (i, p) in b.scene_points[0].points.iter().enumerate() {
            let (x, y) = ((i % 16) as f64, (i / 16) as f64);
            // Hand formula: X = (u - cx) d / fx, Y = (v - cy) d / fy, Z = d.
            let expected = Vec3::new((x - k.cx) * 2.0 / k.fx, (y - k.cy) * 2.0 / k.fy, 2.0);
            assert!((p.position - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn stride_subsamples_and_skips_invalid() {
        let mut b = tiny_bundle(1);
        b.depths[0].values[0] = 0.0;
        b.depths[0].values[2] = f32::NAN;
        b.stride = 2;
        let pts = b.derive_scene_points();
        assert_eq!(pts[0].len(), 64 - 2);
    }

    #[test]
    fn rejects_flow_count_mismatch() {
        let b = tiny_bundle(3);
        let err = SceneBundle::new(b.intrinsics, b.poses.clone(), b.depths.clone(), b.flows[..1].to_vec(), None, 1);
        assert!(matches!(err, Err(BundleError::Validation { frame: None, .. })));
    }

    #[test]
    fn rejects_dimension_mismatch_with_frame_index() {
        let b = tiny_bundle(3);
        let mut depths = b.depths.clone();
        depths[2] = DepthMap::filled(8, 8, 1.0);
        let err = SceneBundle::new(b.intrinsics, b.poses.clone(), depths, b.flows.clone(), None, 1).unwrap_err();
        assert!(matches!(err, BundleError::Validation { frame: Some(2), .. }), "{err}");
    }

    #[test]
    fn round_trip_without_rgb_omits_directory() {
        let dir = tempfile::tempdir().unwrap();
        let b = tiny_bundle(2);
        save_bundle(&b, dir.path()).unwrap();
        assert!(!dir.path().join("rgb").exists());
        assert!(!dir.path().join("manifest.json.tmp").exists());
        assert_eq!(load_bundle(dir.path()).unwrap(), b);
    }

    #[test]
    fn overwrite_replaces_previous_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let mut first = tiny_bundle(3);
        first.rgb_frames = Some(vec![RgbImage::new(16, 16); 3]);
        save_bundle(&first, dir.path()).unwrap();
        let second = tiny_bundle(2);
        save_bundle(&second, dir.path()).unwrap();
        assert_eq!(load_bundle(dir.path()).unwrap(), second);
        assert!(!dir.path().join("rgb").exists());
    }

    #[test]
    fn missing_and_corrupt_components() {
        let dir = tempfile::tempdir().unwrap();
        match load_bundle(dir.path()) {
            Err(BundleError::MissingComponent(p)) => assert!(p.ends_with("manifest.json")),
            other => panic!("unexpected {other:?}"),
        }
        save_bundle(&tiny_bundle(2), dir.path()).unwrap();
        fs::remove_file(dir.path().join("flow/00000.flo")).unwrap();
        match load_bundle(dir.path()) {
            Err(BundleError::MissingComponent(p)) => assert!(p.ends_with("flow/00000.flo")),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(dir.path().join("flow/00000.flo"), b"garbage-bytes-here").unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(BundleError::Format(_))));
    }

    #[test]
    fn manifest_flow_count_checked() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&tiny_bundle(3), dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let mut m: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        m["flow"].as_array_mut().unwrap().pop();
        fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(BundleError::Validation { .. })));
    }
}
