//! Generates every synthetic scene kind and saves them as bundles.
//!
//! cargo run --example synth_scene -- [out_dir]

use scenemask::bundle::save_bundle;
use scenemask::synth::{sphere_cloud, synthesize_scene, SceneKind, SyntheticSceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("scenemask-synth"), Into::into);
    for kind in [SceneKind::GroundPlane, SceneKind::MovingCarrier, SceneKind::OrbitCamera, SceneKind::OccluderSweep] {
        let spec = SyntheticSceneSpec::new(kind, 128, 96, 8);
        let (mut bundle, gt) = synthesize_scene(&spec)?;
        bundle.objects.insert("sphere".into(), sphere_cloud(800, 0.2));
        let dir = out.join(serde_json::to_value(kind)?.as_str().unwrap_or("scene"));
        save_bundle(&bundle, &dir)?;
        std::fs::write(dir.join("suggested_placement.json"), serde_json::to_string_pretty(&gt.suggested_placement)?)?;
        let points: usize = bundle.scene_points.iter().map(|s| s.len()).sum();
        println!("{:<16} {} frames, {points} scene points -> {}", format!("{kind:?}"), bundle.frame_count(), dir.display());
    }
    Ok(())
}
