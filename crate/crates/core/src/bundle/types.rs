use image::RgbImage;

use crate::geom::{unproject, CameraIntrinsics, CameraPose, PixelCoord, Vec3};

/// Flow components above this magnitude mark an unknown vector (Middlebury convention).
pub const UNKNOWN_FLOW_THRESHOLD: f32 = 1e9;
/// Value written for unknown flow vectors.
pub const UNKNOWN_FLOW: f32 = 1e10;

/// Per-pixel depth in meters, row-major from the top row. Non-positive or
/// non-finite values are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), width as usize * height as usize, "depth buffer size");
        DepthMap {
            width,
            height,
            values,
        }
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn is_valid_value(d: f32) -> bool {
        d > 0.0 && d.is_finite()
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Valid depth at an integer pixel, `None` if out of range or invalid.
    pub fn valid_at(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let d = self.get(x as u32, y as u32);
        Self::is_valid_value(d).then_some(d as f64)
    }

    /// Bilinear depth at a continuous location. Every tap with non-zero
    /// weight must be in range and valid.
    pub fn sample_bilinear(&self, px: &PixelCoord) -> Option<f64> {
        bilinear(px, self.width, self.height, |x, y| self.valid_at(x, y))
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|d| Self::is_valid_value(**d)).count()
    }
}

/// Dense 2D displacement from frame t to t+1, row-major, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    pub values: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: u32, height: u32, values: Vec<[f32; 2]>) -> Self {
        assert_eq!(values.len(), width as usize * height as usize, "flow buffer size");
        FlowField {
            width,
            height,
            values,
        }
    }

    pub fn filled(width: u32, height: u32, value: [f32; 2]) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn is_valid_value(f: [f32; 2]) -> bool {
        f.iter().all(|c| c.is_finite() && c.abs() <= UNKNOWN_FLOW_THRESHOLD)
    }

    pub fn get(&self, x: u32, y: u32) -> [f32; 2] {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn valid_at(&self, x: i64, y: i64) -> Option<[f64; 2]> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let f = self.get(x as u32, y as u32);
        Self::is_valid_value(f).then_some([f[0] as f64, f[1] as f64])
    }

    pub fn sample_bilinear(&self, px: &PixelCoord) -> Option<[f64; 2]> {
        let du = bilinear(px, self.width, self.height, |x, y| self.valid_at(x, y).map(|f| f[0]))?;
        let dv = bilinear(px, self.width, self.height, |x, y| self.valid_at(x, y).map(|f| f[1]))?;
        Some([du, dv])
    }
}

fn bilinear(px: &PixelCoord, width: u32, height: u32, tap: impl Fn(i64, i64) -> Option<f64>) -> Option<f64> {
    if !(px.u >= 0.0 && px.v >= 0.0 && px.u <= (width - 1) as f64 && px.v <= (height - 1) as f64) {
        return None;
    }
    let x0 = px.u.floor() as i64;
    let y0 = px.v.floor() as i64;
    let fx = px.u - x0 as f64;
    let fy = px.v - y0 as f64;
    // Taps with zero weight are skipped so exact integer locations on the last
    // row/column need no neighbor beyond the edge.
    let mut acc = 0.0;
    for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            let w = wx * wy;
            if w == 0.0 {
                continue;
            }
            acc += w * tap(x0 + dx, y0 + dy)?;
        }
    }
    Some(acc)
}

/// Object point set in object-local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl ObjectCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        ObjectCloud {
            points,
            colors: None,
        }
    }

    pub fn with_colors(points: Vec<Vec3>, colors: Vec<[u8; 3]>) -> Self {
        assert_eq!(points.len(), colors.len(), "one color per point");
        ObjectCloud {
            points,
            colors: Some(colors),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Arithmetic mean of the points; zero for an empty cloud.
    pub fn centroid(&self) -> Vec3 {
        if self.points.is_empty() {
            return Vec3::zeros();
        }
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub position: Vec3,
    pub color: Option<[u8; 3]>,
}

/// Reconstructed scene points of one frame, world coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenePointSet {
    pub points: Vec<ScenePoint>,
}

impl ScenePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &Vec3> + '_ {
        self.points.iter().map(|p| &p.position)
    }

    /// Unprojects every `stride`-th valid depth pixel in both directions.
    pub fn from_depth(
        intrinsics: &CameraIntrinsics,
        pose: &CameraPose,
        depth: &DepthMap,
        rgb: Option<&RgbImage>,
        stride: u32,
    ) -> Self {
        let stride = stride.max(1) as usize;
        let mut points = Vec::new();
        for y in (0..depth.height).step_by(stride) {
            for x in (0..depth.width).step_by(stride) {
                let d = depth.get(x, y);
                if !DepthMap::is_valid_value(d) {
                    continue;
                }
                let px = PixelCoord::new(x as f64, y as f64);
                let Ok(position) = unproject(intrinsics, pose, &px, d as f64) else {
                    continue;
                };
                let color = rgb.map(|img| img.get_pixel(x, y).0);
                points.push(ScenePoint { position, color });
            }
        }
        ScenePointSet { points }
    }
}
