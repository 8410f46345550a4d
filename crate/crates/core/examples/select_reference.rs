//! Scores candidate reference images against masked object crops and picks
//! the best one.

use image::{DynamicImage, Rgb, RgbImage};
use scenemask::propagation::propagate_trajectory;
use scenemask::refselect::{masked_crop, sample_frames, select_from_images, BaselineEmbedder};
use scenemask::render::{render_sequence, RenderConfig};
use scenemask::synth::{sphere_cloud, synthesize_scene, SyntheticSceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (bundle, gt) = synthesize_scene(&SyntheticSceneSpec::orbit_camera(96, 96, 8, 4.0))?;
    let object = sphere_cloud(600, 0.4);
    let traj = propagate_trajectory(&gt.suggested_placement, &object, &bundle, &Default::default())?;
    let seq = render_sequence(&object, &traj, &bundle, &RenderConfig::default())?;
    let previews = seq.previews.as_ref().ok_or("bundle has no RGB")?;

    let mut crops = Vec::new();
    for t in sample_frames(bundle.frame_count(), 4) {
        if let Some(c) = masked_crop(&previews[t], &seq.masks[t].to_image())? {
            crops.push(DynamicImage::ImageRgb8(c));
        }
    }
    let (w, h) = (crops[0].width(), crops[0].height());
    let candidates = vec![
        DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, |x, _| Rgb([(x * 9) as u8, 40, 200]))),
        crops[1].clone(),
        crops[0].fliph().flipv(),
        DynamicImage::ImageRgb8(RgbImage::from_pixel(w, h, Rgb([128, 128, 128]))),
    ];
    let (scores, selected, degenerate) = select_from_images(&BaselineEmbedder, &candidates, &crops)?;
    for (i, s) in scores.iter().enumerate() {
        let mark = if i == selected { "<- selected" } else { "" };
        println!("candidate {i}: {s:+.4} {mark}");
    }
    println!("constant candidates: {degenerate:?}");
    Ok(())
}
