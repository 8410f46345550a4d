//! Tracks an object set on a moving box with scene flow and compares the
//! result with the box's true motion.

use scenemask::propagation::{propagate_trajectory, PropagationConfig};
use scenemask::synth::{sphere_cloud, synthesize_scene, SyntheticSceneSpec};
use scenemask::Vec3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSceneSpec::moving_carrier(96, 96, 8, Vec3::new(0.05, 0.0, 0.0));
    let (bundle, gt) = synthesize_scene(&spec)?;
    let object = sphere_cloud(300, 0.1);
    for k in [8, 32, 128] {
        let config = PropagationConfig {
            k_neighbors: k,
            ..Default::default()
        };
        let traj = propagate_trajectory(&gt.suggested_placement, &object, &bundle, &config)?;
        let c0 = traj.placements[0].transform_point(&object.centroid());
        let last = traj.len() - 1;
        let moved = traj.placements[last].transform_point(&object.centroid()) - c0;
        let truth = gt.carrier_centers[last] - gt.carrier_centers[0];
        println!(
            "K={k:<4} moved {:.4} m, carrier {:.4} m, error {:.2}%, flags {:?}",
            moved.norm(),
            truth.norm(),
            100.0 * (moved - truth).norm() / truth.norm(),
            traj.flags
        );
    }
    Ok(())
}
