//! Places an object, projects it through a camera and lifts pixels back.

use scenemask::geom::{apply_placement, project, unproject};
use scenemask::{CameraIntrinsics, CameraPose, PixelCoord, RigidPlacement, Rotation, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = CameraIntrinsics::new(100.0, 100.0, 63.5, 47.5, 128, 96)?;
    // World z is up; the camera sits 3 m back and 1.5 m high looking at the origin.
    let pose = CameraPose::look_at(Vec3::new(0.0, -3.0, 1.5), Vec3::zeros(), Vec3::z())?;
    println!("camera center {:?}, optical axis {:?}", pose.center(), pose.optical_axis());

    let yaw = Rotation::from_axis_angle(Vec3::z(), std::f64::consts::FRAC_PI_4)?;
    let placement = RigidPlacement::new(0.5, yaw, Vec3::new(0.2, 0.0, 0.3))?;
    let corners = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
    for (y, w) in corners.iter().zip(apply_placement(&placement, &corners)?) {
        match project(&k, &pose, &w) {
            Some((px, depth)) => println!("{y:?} -> world {w:?} -> pixel ({:.3}, {:.3}) at {depth:.3} m", px.u, px.v),
            None => println!("{y:?} -> world {w:?} is behind the camera"),
        }
    }

    let px = PixelCoord::new(10.25, 80.5);
    let p = unproject(&k, &pose, &px, 4.0)?;
    let (back, depth) = project(&k, &pose, &p).ok_or("point fell behind the camera")?;
    println!("round trip error {:.2e} px, {:.2e} m", (back.u - px.u).hypot(back.v - px.v), (depth - 4.0).abs());
    Ok(())
}
