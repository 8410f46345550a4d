//! Writes a bundle, reads it back and checks the round trip, then shows the
//! individual file codecs.

use scenemask::bundle::{load_bundle, parse_ply, save_bundle, write_ply, PlyEncoding};
use scenemask::synth::{cube_cloud, synthesize_scene, SyntheticSceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("scenemask-bundle"), Into::into);
    let (mut bundle, _) = synthesize_scene(&SyntheticSceneSpec::orbit_camera(64, 48, 6, 4.0))?;
    bundle.objects.insert("cube".into(), cube_cloud(6, 0.5));
    save_bundle(&bundle, &dir)?;
    let back = load_bundle(&dir)?;
    println!("{} frames saved to {}; identical after reload: {}", back.frame_count(), dir.display(), back == bundle);

    let cube = &bundle.objects["cube"];
    for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
        let bytes = write_ply(cube, enc);
        println!("{enc:?}: {} bytes, exact: {}", bytes.len(), parse_ply(&bytes)?.points == cube.points);
    }
    let depth = &back.depths[0];
    let valid = depth.values.iter().filter(|d| d.is_finite() && **d > 0.0).count();
    println!("frame 0 depth: {}x{}, {valid} valid pixels", depth.width, depth.height);
    Ok(())
}
