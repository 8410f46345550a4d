//! Analytic synthetic scenes with exact ground truth.
//!
//! Scenes are built from a ground plane (`z = 0`, world z up) and axis-aligned
//! boxes. Depth is obtained by ray casting each pixel center, and forward flow
//! by moving the hit point with its surface's motion and reprojecting it into
//! the next camera, so depth, poses and flow agree by construction.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{BundleError, DepthMap, FlowField, ObjectCloud, SceneBundle, UNKNOWN_FLOW};
use crate::geom::{project, CameraIntrinsics, CameraPose, GeomError, PixelCoord, RigidPlacement, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    /// Static camera over an empty ground plane.
    GroundPlane,
    /// Static camera; a box translates at constant velocity.
    MovingCarrier,
    /// Camera circles the origin at constant height; the world is static.
    OrbitCamera,
    /// Static camera; a tall box sweeps between the camera and the object spot.
    OccluderSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccluderPath {
    /// Box extents along x, y, z.
    pub size: Vec3,
    /// Box center at the first frame.
    pub start: Vec3,
    /// Box center at the last frame; intermediate frames interpolate linearly.
    pub end: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub kind: SceneKind,
    pub width: u32,
    pub height: u32,
    pub frame_count: usize,
    /// Focal length as a fraction of image width.
    pub focal_scale: f64,
    /// Camera position for the static-camera kinds.
    pub camera_eye: Vec3,
    pub camera_target: Vec3,
    pub carrier_size: Vec3,
    /// Carrier center at frame 0.
    pub carrier_start: Vec3,
    /// Carrier displacement per frame, meters.
    pub carrier_velocity: Vec3,
    pub orbit_radius: f64,
    pub orbit_height: f64,
    /// Camera azimuth at frame 0, radians.
    pub orbit_start_angle: f64,
    /// Azimuth increment per frame, radians.
    pub orbit_step: f64,
    pub occluder: OccluderPath,
    pub stride: u32,
    pub with_rgb: bool,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic scene: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

impl SyntheticSceneSpec {
    pub fn new(kind: SceneKind, width: u32, height: u32, frame_count: usize) -> Self {
        SyntheticSceneSpec {
            kind,
            width,
            height,
            frame_count,
            focal_scale: 0.9,
            camera_eye: Vec3::new(0.0, -4.0, 3.0),
            camera_target: Vec3::new(0.0, 0.0, 0.2),
            carrier_size: Vec3::new(1.6, 1.2, 0.3),
            carrier_start: Vec3::new(-0.2, 0.0, 0.15),
            carrier_velocity: Vec3::new(0.05, 0.0, 0.0),
            orbit_radius: 4.0,
            orbit_height: 3.0,
            orbit_start_angle: -std::f64::consts::FRAC_PI_2,
            orbit_step: 0.08,
            occluder: OccluderPath {
                size: Vec3::new(0.6, 0.2, 1.4),
                start: Vec3::new(-1.6, -1.2, 0.7),
                end: Vec3::new(1.6, -1.2, 0.7),
            },
            stride: crate::bundle::DEFAULT_STRIDE,
            with_rgb: true,
        }
    }

    pub fn ground_plane(width: u32, height: u32, frame_count: usize) -> Self {
        Self::new(SceneKind::GroundPlane, width, height, frame_count)
    }

    pub fn moving_carrier(width: u32, height: u32, frame_count: usize, velocity: Vec3) -> Self {
        SyntheticSceneSpec {
            carrier_velocity: velocity,
            ..Self::new(SceneKind::MovingCarrier, width, height, frame_count)
        }
    }

    pub fn orbit_camera(width: u32, height: u32, frame_count: usize, radius: f64) -> Self {
        SyntheticSceneSpec {
            orbit_radius: radius,
            ..Self::new(SceneKind::OrbitCamera, width, height, frame_count)
        }
    }

    pub fn occluder_sweep(width: u32, height: u32, frame_count: usize) -> Self {
        Self::new(SceneKind::OccluderSweep, width, height, frame_count)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width < 16 || self.height < 16 {
            return Err(SynthError::InvalidSpec(format!(
                "resolution {}x{} below 16x16",
                self.width, self.height
            )));
        }
        if self.frame_count < 2 {
            return Err(SynthError::InvalidSpec("at least 2 frames required".into()));
        }
        if !(self.focal_scale > 0.0) {
            return Err(SynthError::InvalidSpec("focal_scale must be positive".into()));
        }
        if self.stride == 0 {
            return Err(SynthError::InvalidSpec("stride must be at least 1".into()));
        }
        let positive = |v: &Vec3| v.iter().all(|c| *c > 0.0);
        if !positive(&self.carrier_size) || !positive(&self.occluder.size) {
            return Err(SynthError::InvalidSpec("box sizes must be positive".into()));
        }
        if self.kind == SceneKind::OrbitCamera && !(self.orbit_radius > 0.0 && self.orbit_height > 0.0) {
            return Err(SynthError::InvalidSpec("orbit radius and height must be positive".into()));
        }
        if self.kind != SceneKind::OrbitCamera && !(self.camera_eye.z > 0.0) {
            return Err(SynthError::InvalidSpec("camera must be above the ground".into()));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, GeomError> {
        let f = self.focal_scale * self.width as f64;
        CameraIntrinsics::new(f, f, self.width as f64 / 2.0, self.height as f64 / 2.0, self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Ground,
    /// Index into the frame's box list.
    Box(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneBox {
    pub min: Vec3,
    pub max: Vec3,
    /// Displacement applied between consecutive frames.
    pub velocity: Vec3,
    pub color: [u8; 3],
}

impl SceneBox {
    fn centered(center: Vec3, size: Vec3, velocity: Vec3, color: [u8; 3]) -> Self {
        SceneBox {
            min: center - size / 2.0,
            max: center + size / 2.0,
            velocity,
            color,
        }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) / 2.0
    }

    /// Entry distance along the ray, slab method. The camera is outside every box.
    fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, usize)> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        let mut axis = 0;
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let t0 = (self.min[a] - origin[a]) / dir[a];
            let t1 = (self.max[a] - origin[a]) / dir[a];
            let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
            if lo > t_near {
                t_near = lo;
                axis = a;
            }
            t_far = t_far.min(hi);
        }
        (t_near <= t_far && t_near > 0.0).then_some((t_near, axis))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Camera-frame depth of the hit.
    pub depth: f64,
    pub point: Vec3,
    pub surface: Surface,
    face_axis: usize,
}

/// Exact description of a synthetic scene, used as the oracle in tests.
#[derive(Debug, Clone)]
pub struct SyntheticGroundTruth {
    pub spec: SyntheticSceneSpec,
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<CameraPose>,
    /// Boxes present at each frame, positioned for that frame.
    pub boxes: Vec<Vec<SceneBox>>,
    /// A sensible frame-0 placement for an object of roughly 0.4 m extent.
    pub suggested_placement: RigidPlacement,
    /// Carrier center per frame (moving-carrier scenes only).
    pub carrier_centers: Vec<Vec3>,
}

impl SyntheticGroundTruth {
    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    pub fn camera_center(&self, t: usize) -> Vec3 {
        self.poses[t].center()
    }

    /// World-space direction through a pixel, scaled so its camera-frame z is 1.
    fn ray(&self, t: usize, px: &PixelCoord) -> (Vec3, Vec3) {
        let k = &self.intrinsics;
        let d_cam = Vec3::new((px.u - k.cx) / k.fx, (px.v - k.cy) / k.fy, 1.0);
        let pose = &self.poses[t];
        (pose.center(), pose.rotation.inverse().apply(&d_cam))
    }

    /// Nearest surface along the ray through `px` at frame `t`.
    pub fn cast(&self, t: usize, px: &PixelCoord) -> Option<RayHit> {
        let (origin, dir) = self.ray(t, px);
        let mut best: Option<(f64, Surface, usize)> = None;
        if dir.z < 0.0 && origin.z > 0.0 {
            best = Some((-origin.z / dir.z, Surface::Ground, 2));
        }
        for (i, b) in self.boxes[t].iter().enumerate() {
            if let Some((lambda, axis)) = b.intersect(&origin, &dir) {
                if best.is_none_or(|(l, _, _)| lambda < l) {
                    best = Some((lambda, Surface::Box(i), axis));
                }
            }
        }
        // With camera-frame z of `dir` equal to 1, the ray parameter is the depth.
        best.map(|(depth, surface, face_axis)| RayHit {
            depth,
            point: origin + dir * depth,
            surface,
            face_axis,
        })
    }

    pub fn scene_depth(&self, t: usize, px: &PixelCoord) -> Option<f64> {
        self.cast(t, px).map(|h| h.depth)
    }

    /// Displacement of a surface between frame `t` and `t + 1`.
    pub fn surface_motion(&self, t: usize, surface: Surface) -> Vec3 {
        match surface {
            Surface::Ground => Vec3::zeros(),
            Surface::Box(i) => self.boxes[t][i].velocity,
        }
    }

    /// Forward flow at `px` from `t` to `t + 1`: the reprojected displacement
    /// of the surface point seen there.
    pub fn analytic_flow(&self, t: usize, px: &PixelCoord) -> Option<[f64; 2]> {
        let hit = self.cast(t, px)?;
        let motion = self.surface_motion(t, hit.surface);
        if motion == Vec3::zeros() && self.poses[t] == self.poses[t + 1] {
            return Some([0.0, 0.0]);
        }
        let moved = hit.point + motion;
        let (next, _) = project(&self.intrinsics, &self.poses[t + 1], &moved)?;
        Some([next.u - px.u, next.v - px.v])
    }

    /// True when an object surface at `object_depth` would be in front of the
    /// scene at `px`, with the same relative tolerance the renderer uses.
    pub fn is_visible(&self, t: usize, px: &PixelCoord, object_depth: f64, depth_epsilon_rel: f64) -> bool {
        match self.scene_depth(t, px) {
            Some(d) => object_depth <= d * (1.0 + depth_epsilon_rel),
            None => true,
        }
    }

    fn shade(&self, t: usize, px: &PixelCoord) -> [u8; 3] {
        let Some(hit) = self.cast(t, px) else {
            return [135, 180, 235];
        };
        match hit.surface {
            Surface::Ground => {
                let cell = (hit.point.x * 2.0).floor() as i64 + (hit.point.y * 2.0).floor() as i64;
                if cell.rem_euclid(2) == 0 {
                    [200, 200, 190]
                } else {
                    [90, 110, 90]
                }
            }
            Surface::Box(i) => {
                let shade = [0.75, 0.9, 1.0][hit.face_axis];
                self.boxes[t][i].color.map(|c| (c as f64 * shade).round() as u8)
            }
        }
    }
}

pub fn camera_poses(spec: &SyntheticSceneSpec) -> Result<Vec<CameraPose>, GeomError> {
    (0..spec.frame_count)
        .map(|t| match spec.kind {
            SceneKind::OrbitCamera => {
                let angle = spec.orbit_start_angle + spec.orbit_step * t as f64;
                let eye = Vec3::new(spec.orbit_radius * angle.cos(), spec.orbit_radius * angle.sin(), spec.orbit_height);
                CameraPose::look_at(eye, Vec3::new(0.0, 0.0, spec.camera_target.z), Vec3::z())
            }
            _ => CameraPose::look_at(spec.camera_eye, spec.camera_target, Vec3::z()),
        })
        .collect()
}

fn frame_boxes(spec: &SyntheticSceneSpec, t: usize) -> Vec<SceneBox> {
    match spec.kind {
        SceneKind::GroundPlane => Vec::new(),
        SceneKind::MovingCarrier => {
            let center = spec.carrier_start + spec.carrier_velocity * t as f64;
            vec![SceneBox::centered(center, spec.carrier_size, spec.carrier_velocity, [180, 120, 60])]
        }
        SceneKind::OrbitCamera => vec![SceneBox::centered(
            Vec3::new(1.2, 1.0, 0.25),
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::zeros(),
            [70, 90, 200],
        )],
        SceneKind::OccluderSweep => {
            let path = &spec.occluder;
            let last = (spec.frame_count - 1).max(1) as f64;
            let step = (path.end - path.start) / last;
            let center = path.start + step * t as f64;
            vec![SceneBox::centered(center, path.size, step, [160, 60, 60])]
        }
    }
}

fn suggested_placement(spec: &SyntheticSceneSpec) -> RigidPlacement {
    let t = match spec.kind {
        SceneKind::GroundPlane | SceneKind::OrbitCamera => Vec3::new(0.0, 0.0, 0.25),
        SceneKind::MovingCarrier => {
            spec.carrier_start + Vec3::new(0.0, 0.0, spec.carrier_size.z / 2.0 + 0.2)
        }
        SceneKind::OccluderSweep => Vec3::new(0.0, 0.3, 0.25),
    };
    RigidPlacement::identity().translated(&t)
}

/// Builds the bundle and its ground truth.
pub fn synthesize_scene(spec: &SyntheticSceneSpec) -> Result<(SceneBundle, SyntheticGroundTruth), SynthError> {
    spec.validate()?;
    let intrinsics = spec.intrinsics()?;
    let poses = camera_poses(spec)?;
    let boxes: Vec<Vec<SceneBox>> = (0..spec.frame_count).map(|t| frame_boxes(spec, t)).collect();
    let carrier_centers = match spec.kind {
        SceneKind::MovingCarrier => boxes.iter().map(|b| b[0].center()).collect(),
        _ => Vec::new(),
    };
    let gt = SyntheticGroundTruth {
        spec: spec.clone(),
        intrinsics,
        poses: poses.clone(),
        boxes,
        suggested_placement: suggested_placement(spec),
        carrier_centers,
    };

    let (w, h) = (spec.width, spec.height);
    let pixels = || (0..h).flat_map(move |y| (0..w).map(move |x| PixelCoord::new(x as f64, y as f64)));
    let depths = (0..spec.frame_count)
        .map(|t| {
            let values = pixels().map(|px| gt.scene_depth(t, &px).map_or(0.0, |d| d as f32)).collect();
            DepthMap::new(w, h, values)
        })
        .collect();
    let flows = (0..spec.frame_count - 1)
        .map(|t| {
            let values = pixels()
                .map(|px| match gt.analytic_flow(t, &px) {
                    Some([du, dv]) => [du as f32, dv as f32],
                    None => [UNKNOWN_FLOW, UNKNOWN_FLOW],
                })
                .collect();
            FlowField::new(w, h, values)
        })
        .collect();
    let rgb = spec.with_rgb.then(|| {
        (0..spec.frame_count)
            .map(|t| RgbImage::from_fn(w, h, |x, y| Rgb(gt.shade(t, &PixelCoord::new(x as f64, y as f64)))))
            .collect()
    });

    let bundle = SceneBundle::new(intrinsics, poses, depths, flows, rgb, spec.stride)?;
    Ok((bundle, gt))
}

/// `n` points spread evenly over a sphere surface (golden-angle spiral),
/// centered at the origin.
pub fn sphere_cloud(n: usize, radius: f64) -> ObjectCloud {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let points = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z) * radius
        })
        .collect();
    ObjectCloud::new(points)
}

/// Solid grid of `per_axis^3` points filling an axis-aligned cube of side
/// `size` centered at the origin.
pub fn cube_cloud(per_axis: usize, size: f64) -> ObjectCloud {
    let step = if per_axis > 1 { size / (per_axis - 1) as f64 } else { 0.0 };
    let half = if per_axis > 1 { size / 2.0 } else { 0.0 };
    let mut points = Vec::with_capacity(per_axis.pow(3));
    for i in 0..per_axis {
        for j in 0..per_axis {
            for k in 0..per_axis {
                points.push(Vec3::new(i as f64 * step - half, j as f64 * step - half, k as f64 * step - half));
            }
        }
    }
    ObjectCloud::new(points)
}
