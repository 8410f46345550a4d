//! Renders the mask sequence of an object behind a sweeping occluder and
//! exports masks, previews and the trajectory.
//!
//! cargo run --example render_masks -- [out_dir]

use scenemask::propagation::propagate_trajectory;
use scenemask::render::export::write_results;
use scenemask::render::{render_sequence, RenderConfig};
use scenemask::synth::{sphere_cloud, synthesize_scene, SyntheticSceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("scenemask-render"), Into::into);
    let (bundle, gt) = synthesize_scene(&SyntheticSceneSpec::occluder_sweep(128, 96, 12))?;
    let object = sphere_cloud(1000, 0.2);
    let traj = propagate_trajectory(&gt.suggested_placement, &object, &bundle, &Default::default())?;
    let config = RenderConfig::default();
    let masks = render_sequence(&object, &traj, &bundle, &config)?;
    for (t, m) in masks.masks.iter().enumerate() {
        let bar = "#".repeat(m.area() / 8);
        println!("frame {t:>2}  {:>4} px  {bar}", m.area());
    }
    write_results(&out, &gt.suggested_placement, &traj, &masks, &config)?;
    println!("wrote {}", out.display());
    Ok(())
}
