//! Scene-flow propagation of an object placement through time.
//!
//! At each frame the scene points nearest the placed object's centroid are
//! found, their 2D flow is lifted into 3D through the depth maps of both
//! frames, and the object's translation is advanced by the mean of the valid
//! 3D motions. Rotation and scale are never changed.

mod kdtree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{DepthMap, FlowField, ObjectCloud, SceneBundle, ScenePointSet};
use crate::geom::{project, unproject, CameraIntrinsics, CameraPose, PixelCoord, RigidPlacement, Vec3};

pub use kdtree::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    /// Number of scene points whose motion is averaged.
    pub k_neighbors: usize,
    /// Neighbors farther than this from the centroid are ignored. `None` is unbounded.
    pub radius_cap: Option<f64>,
    /// Minimum share of neighbors with a valid lifted motion.
    pub min_valid_fraction: f64,
    /// Mean flow magnitude (pixels) at the neighbors below which the object is held still.
    pub static_flow_threshold: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            k_neighbors: 32,
            radius_cap: None,
            min_valid_fraction: 0.5,
            static_flow_threshold: 0.05,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<(), PropagationError> {
        if self.k_neighbors == 0 {
            return Err(PropagationError::InvalidConfig("k_neighbors must be at least 1".into()));
        }
        if !(self.min_valid_fraction > 0.0 && self.min_valid_fraction <= 1.0) {
            return Err(PropagationError::InvalidConfig("min_valid_fraction must be in (0, 1]".into()));
        }
        if self.radius_cap.is_some_and(|r| !(r > 0.0)) {
            return Err(PropagationError::InvalidConfig("radius_cap must be positive".into()));
        }
        if !(self.static_flow_threshold >= 0.0) {
            return Err(PropagationError::InvalidConfig("static_flow_threshold must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PropagationError {
    #[error("frame {frame} has no scene geometry")]
    NoGeometry { frame: usize },
    #[error("frame index {frame} out of range for {frame_count} frames")]
    FrameOutOfRange { frame: usize, frame_count: usize },
    #[error("invalid propagation config: {0}")]
    InvalidConfig(String),
    #[error("object cloud is empty")]
    EmptyObject,
    #[error("propagation failed at frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<PropagationError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepFlag {
    /// The user-supplied frame-0 placement.
    Initial,
    Propagated,
    StaticFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PropagationWarning {
    /// The propagated centroid is on or behind the camera at `frame`.
    CentroidBehindCamera { frame: usize },
}

/// Indices of the `k` scene points nearest `centroid`, ties to the lower index.
pub fn find_neighbors(
    scene_points: &ScenePointSet,
    centroid: &Vec3,
    config: &PropagationConfig,
) -> Result<Vec<usize>, PropagationError> {
    if scene_points.is_empty() {
        return Err(PropagationError::NoGeometry { frame: 0 });
    }
    let tree = KdTree::build(scene_points.positions().copied().collect());
    Ok(tree.nearest(centroid, config.k_neighbors, config.radius_cap))
}

/// 3D motion of the surface seen at `pixel` between frame t and t+1.
///
/// The pixel is snapped to the nearest pixel center. Its depth in frame t and
/// its flow vector are read there; the flow endpoint's depth in frame t+1 is
/// interpolated bilinearly. Returns `None` when any of those lookups is
/// invalid or leaves the image.
#[allow(clippy::too_many_arguments)]
pub fn lift_flow(
    pixel: &PixelCoord,
    flow: &FlowField,
    depth_t: &DepthMap,
    depth_t1: &DepthMap,
    pose_t: &CameraPose,
    pose_t1: &CameraPose,
    intrinsics: &CameraIntrinsics,
) -> Option<Vec3> {
    if !intrinsics.contains(pixel) {
        return None;
    }
    let (x, y) = pixel.nearest_pixel();
    let source = PixelCoord::new(x as f64, y as f64);
    let d0 = depth_t.valid_at(x, y)?;
    let [du, dv] = flow.valid_at(x, y)?;
    let end = PixelCoord::new(source.u + du, source.v + dv);
    let d1 = depth_t1.sample_bilinear(&end)?;
    let p0 = unproject(intrinsics, pose_t, &source, d0).ok()?;
    let p1 = unproject(intrinsics, pose_t1, &end, d1).ok()?;
    Some(p1 - p0)
}

/// Result of advancing a placement by one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub placement: RigidPlacement,
    pub flag: StepFlag,
    pub neighbor_count: usize,
    /// Valid lifted motions in neighbor order; their mean is the applied offset
    /// when `flag` is `Propagated`.
    pub motions: Vec<Vec3>,
    pub mean_flow_magnitude: f64,
    pub warning: Option<PropagationWarning>,
}

fn mean(vectors: &[Vec3]) -> Vec3 {
    vectors.iter().fold(Vec3::zeros(), |acc, v| acc + v) / vectors.len() as f64
}

/// Advances `placement` from frame `t` to `t + 1`.
///
/// `object_centroid` is the object's centroid in its local frame; the
/// neighbor search is anchored at its placed position.
pub fn propagate_step(
    placement: &RigidPlacement,
    object_centroid: &Vec3,
    bundle: &SceneBundle,
    t: usize,
    config: &PropagationConfig,
) -> Result<StepOutcome, PropagationError> {
    config.validate()?;
    let frame_count = bundle.frame_count();
    if t + 1 >= frame_count {
        return Err(PropagationError::FrameOutOfRange { frame: t, frame_count });
    }
    let centroid = placement.transform_point(object_centroid);
    let points = &bundle.scene_points[t];
    let neighbors = find_neighbors(points, &centroid, config).map_err(|e| match e {
        PropagationError::NoGeometry { .. } => PropagationError::NoGeometry { frame: t },
        other => other,
    })?;

    let k = &bundle.intrinsics;
    let (pose_t, pose_t1) = (&bundle.poses[t], &bundle.poses[t + 1]);
    let flow = &bundle.flows[t];
    let mut motions = Vec::with_capacity(neighbors.len());
    let mut flow_sum = 0.0;
    let mut flow_count = 0usize;
    for &i in &neighbors {
        let Some((pixel, _)) = project(k, pose_t, &points.points[i].position) else {
            continue;
        };
        if !k.contains(&pixel) {
            continue;
        }
        let (x, y) = pixel.nearest_pixel();
        if let Some([du, dv]) = flow.valid_at(x, y) {
            flow_sum += du.hypot(dv);
            flow_count += 1;
        }
        if let Some(m) = lift_flow(&pixel, flow, &bundle.depths[t], &bundle.depths[t + 1], pose_t, pose_t1, k) {
            motions.push(m);
        }
    }

    let mean_flow_magnitude = if flow_count > 0 { flow_sum / flow_count as f64 } else { 0.0 };
    let valid_fraction = motions.len() as f64 / neighbors.len() as f64;
    let is_static = motions.is_empty()
        || valid_fraction < config.min_valid_fraction
        || mean_flow_magnitude < config.static_flow_threshold;

    let (next, flag) = if is_static {
        (*placement, StepFlag::StaticFallback)
    } else {
        (placement.translated(&mean(&motions)), StepFlag::Propagated)
    };
    let warning = project(k, pose_t1, &next.transform_point(object_centroid))
        .is_none()
        .then_some(PropagationWarning::CentroidBehindCamera { frame: t + 1 });
    if let Some(w) = &warning {
        log::warn!("{w:?}");
    }
    Ok(StepOutcome {
        placement: next,
        flag,
        neighbor_count: neighbors.len(),
        motions,
        mean_flow_magnitude,
        warning,
    })
}

/// Per-frame placements of the object.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementTrajectory {
    pub placements: Vec<RigidPlacement>,
    pub flags: Vec<StepFlag>,
    pub warnings: Vec<PropagationWarning>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryEntry {
    #[serde(flatten)]
    placement: RigidPlacement,
    flag: StepFlag,
}

impl PlacementTrajectory {
    /// The same placement at every frame.
    pub fn constant(placement: RigidPlacement, frame_count: usize) -> Self {
        let mut flags = vec![StepFlag::StaticFallback; frame_count];
        if let Some(f) = flags.first_mut() {
            *f = StepFlag::Initial;
        }
        PlacementTrajectory {
            placements: vec![placement; frame_count],
            flags,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    /// JSON array of `{scale, R, t, flag}`.
    pub fn to_json(&self) -> String {
        let entries: Vec<TrajectoryEntry> = self
            .placements
            .iter()
            .zip(&self.flags)
            .map(|(p, f)| TrajectoryEntry {
                placement: *p,
                flag: *f,
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("trajectory serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let entries: Vec<TrajectoryEntry> = serde_json::from_str(json)?;
        let (placements, flags) = entries.into_iter().map(|e| (e.placement, e.flag)).unzip();
        Ok(PlacementTrajectory {
            placements,
            flags,
            warnings: Vec::new(),
        })
    }
}

pub fn propagate_trajectory(
    initial: &RigidPlacement,
    object: &ObjectCloud,
    bundle: &SceneBundle,
    config: &PropagationConfig,
) -> Result<PlacementTrajectory, PropagationError> {
    propagate_trajectory_with_progress(initial, object, bundle, config, |_| {})
}

/// As [`propagate_trajectory`], calling `progress` with the number of
/// completed frames after each one.
pub fn propagate_trajectory_with_progress(
    initial: &RigidPlacement,
    object: &ObjectCloud,
    bundle: &SceneBundle,
    config: &PropagationConfig,
    mut progress: impl FnMut(usize),
) -> Result<PlacementTrajectory, PropagationError> {
    config.validate()?;
    if object.is_empty() {
        return Err(PropagationError::EmptyObject);
    }
    let centroid = object.centroid();
    let mut trajectory = PlacementTrajectory {
        placements: vec![*initial],
        flags: vec![StepFlag::Initial],
        warnings: Vec::new(),
    };
    progress(1);
    for t in 0..bundle.frame_count().saturating_sub(1) {
        let current = trajectory.placements[t];
        let step = propagate_step(&current, &centroid, bundle, t, config).map_err(|e| PropagationError::AtFrame {
            frame: t,
            source: Box::new(e),
        })?;
        trajectory.placements.push(step.placement);
        trajectory.flags.push(step.flag);
        trajectory.warnings.extend(step.warning);
        progress(t + 2);
    }
    Ok(trajectory)
}
