use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenemask::bundle::ObjectCloud;
use scenemask::propagation::{propagate_trajectory, PlacementTrajectory};
use scenemask::render::export::{read_masks, write_results};
use scenemask::render::{render_frame, render_sequence, RenderConfig};
use scenemask::synth::{sphere_cloud, synthesize_scene, SceneKind, SyntheticSceneSpec};
use scenemask::{geom::project, RigidPlacement, Rotation, SceneBundle, Vec3};

/// Brute-force mask for frame `t`, computed from raw arrays only.
fn oracle_mask(bundle: &SceneBundle, object: &ObjectCloud, placement: &RigidPlacement, t: usize, cfg: &RenderConfig) -> Vec<bool> {
    let k = &bundle.intrinsics;
    let pose = &bundle.poses[t];
    let r = pose.rotation.to_row_major();
    let tr = [pose.translation.x, pose.translation.y, pose.translation.z];
    let pr = placement.rotation.to_row_major();
    let projected: Vec<(f64, f64, f64)> = object
        .points
        .iter()
        .filter_map(|y| {
            let mut w = [0.0; 3];
            for i in 0..3 {
                w[i] = placement.scale * (pr[3 * i] * y.x + pr[3 * i + 1] * y.y + pr[3 * i + 2] * y.z) + placement.translation[i];
            }
            scenemask_oracles::project_homogeneous([k.fx, k.fy, k.cx, k.cy], r, tr, w)
        })
        .collect();
    scenemask_oracles::mask(
        &projected,
        &bundle.depths[t].values,
        k.width as usize,
        k.height as usize,
        cfg.splat_radius,
        cfg.depth_epsilon_rel,
        cfg.closing_radius as i64,
        cfg.min_mask_area,
    )
}

fn random_object(rng: &mut ChaCha8Rng) -> ObjectCloud {
    let n = rng.random_range(200..=1000);
    if rng.random_bool(0.5) {
        sphere_cloud(n, rng.random_range(0.15..0.45))
    } else {
        let spread = Vec3::new(rng.random_range(0.1..0.4), rng.random_range(0.1..0.4), rng.random_range(0.05..0.3));
        ObjectCloud::new(
            (0..n)
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).component_mul(&spread))
                .collect(),
        )
    }
}

#[test]
fn masks_match_brute_force_oracle_on_random_bundles() {
    let kinds = [SceneKind::GroundPlane, SceneKind::MovingCarrier, SceneKind::OrbitCamera, SceneKind::OccluderSweep];
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = SyntheticSceneSpec::new(kinds[seed as usize % 4], 64, 64, 8);
        spec.stride = 1;
        spec.with_rgb = false;
        let (bundle, gt) = synthesize_scene(&spec).unwrap();
        assert!(bundle.scene_points.iter().all(|p| p.len() <= 5000));
        let object = random_object(&mut rng);
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0));
        let placement = RigidPlacement::new(
            rng.random_range(0.7..1.4),
            Rotation::from_axis_angle(axis, rng.random_range(-3.0..3.0)).unwrap(),
            gt.suggested_placement.translation + Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.0),
        )
        .unwrap();
        let cfg = RenderConfig {
            splat_radius: [1.0, 1.5, 2.0][rng.random_range(0..3)],
            ..Default::default()
        };
        let traj = propagate_trajectory(&placement, &object, &bundle, &Default::default()).unwrap();
        let seq = render_sequence(&object, &traj, &bundle, &cfg).unwrap();
        for t in 0..8 {
            let want = oracle_mask(&bundle, &object, &traj.placements[t], t, &cfg);
            let diff = seq.masks[t].data.iter().zip(&want).filter(|(a, b)| (**a != 0) != **b).count();
            let frac = diff as f64 / want.len() as f64;
            assert!(frac <= 0.005, "seed {seed} frame {t}: {frac}");
        }
    }
}

#[test]
fn occluder_sweep_dips_at_predicted_frame_and_recovers() {
    let frames = 12;
    let mut spec = SyntheticSceneSpec::occluder_sweep(96, 96, frames);
    spec.with_rgb = false;
    let (bundle, gt) = synthesize_scene(&spec).unwrap();
    let object = sphere_cloud(800, 0.2);
    let traj = PlacementTrajectory::constant(gt.suggested_placement, frames);
    let cfg = RenderConfig::default();
    let seq = render_sequence(&object, &traj, &bundle, &cfg).unwrap();
    let areas: Vec<usize> = seq.masks.iter().map(|m| m.area()).collect();

    // Analytic prediction: the frame where the fewest object points survive
    // an exact ray cast against the scene.
    let world: Vec<Vec3> = object.points.iter().map(|p| gt.suggested_placement.transform_point(p)).collect();
    let visible_points: Vec<usize> = (0..frames)
        .map(|t| {
            world
                .iter()
                .filter(|p| {
                    project(&gt.intrinsics, &gt.poses[t], p)
                        .is_some_and(|(px, d)| gt.is_visible(t, &px, d, cfg.depth_epsilon_rel))
                })
                .count()
        })
        .collect();
    let predicted = (0..frames).min_by_key(|&t| (visible_points[t], t)).unwrap();
    let unoccluded = areas[0];
    assert!(unoccluded > 50);
    assert!(
        (areas[predicted] as f64) < 0.5 * unoccluded as f64,
        "areas {areas:?}, predicted frame {predicted}"
    );
    assert!(areas[frames - 1] as f64 > 0.9 * unoccluded as f64, "areas {areas:?}");
    let observed = (0..frames).min_by_key(|&t| (areas[t], t)).unwrap();
    assert!(observed.abs_diff(predicted) <= 1, "observed {observed}, predicted {predicted}");
}

#[test]
fn static_scene_masks_are_identical() {
    let (bundle, gt) = synthesize_scene(&SyntheticSceneSpec::ground_plane(64, 64, 8)).unwrap();
    let object = sphere_cloud(500, 0.25);
    let traj = propagate_trajectory(&gt.suggested_placement, &object, &bundle, &Default::default()).unwrap();
    let seq = render_sequence(&object, &traj, &bundle, &RenderConfig::default()).unwrap();
    assert!(seq.masks[0].area() > 0);
    for pair in seq.masks.windows(2) {
        assert_eq!(pair[0].iou(&pair[1]), 1.0);
    }
}

#[test]
fn orbit_mask_centroid_follows_projection() {
    let (bundle, gt) = synthesize_scene(&SyntheticSceneSpec::orbit_camera(96, 96, 8, 4.0)).unwrap();
    let object = sphere_cloud(800, 0.25);
    let traj = PlacementTrajectory::constant(gt.suggested_placement, 8);
    let seq = render_sequence(&object, &traj, &bundle, &RenderConfig::default()).unwrap();
    let centroid = gt.suggested_placement.transform_point(&object.centroid());
    for t in 0..8 {
        let (px, _) = project(&gt.intrinsics, &gt.poses[t], &centroid).unwrap();
        let (mx, my) = seq.masks[t].centroid().unwrap();
        let err = (mx - px.u).hypot(my - px.v);
        assert!(err <= 1.0, "frame {t}: {err} px");
    }
}

#[test]
fn larger_splats_only_add_pixels() {
    let (bundle, gt) = synthesize_scene(&SyntheticSceneSpec::occluder_sweep(64, 64, 8)).unwrap();
    let object = sphere_cloud(300, 0.2);
    let mut prev: Option<Vec<u8>> = None;
    for radius in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let cfg = RenderConfig {
            splat_radius: radius,
            ..Default::default()
        };
        let (mask, _) = render_frame(&object, &gt.suggested_placement, &bundle, 3, &cfg).unwrap();
        if let Some(p) = &prev {
            assert!(p.iter().zip(&mask.data).all(|(a, b)| *a == 0 || *b != 0), "radius {radius}");
        }
        prev = Some(mask.data);
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let (bundle, gt) = synthesize_scene(&SyntheticSceneSpec::moving_carrier(64, 64, 8, Vec3::new(0.05, 0.0, 0.0))).unwrap();
    let object = sphere_cloud(400, 0.15);
    let traj = propagate_trajectory(&gt.suggested_placement, &object, &bundle, &Default::default()).unwrap();
    let parallel = render_sequence(&object, &traj, &bundle, &RenderConfig::default()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| render_sequence(&object, &traj, &bundle, &RenderConfig::default()).unwrap());
    assert_eq!(parallel, serial);
}

#[test]
fn results_round_trip_through_disk() {
    let (bundle, gt) = synthesize_scene(&SyntheticSceneSpec::moving_carrier(48, 48, 4, Vec3::new(0.05, 0.0, 0.0))).unwrap();
    let object = sphere_cloud(200, 0.15);
    let traj = propagate_trajectory(&gt.suggested_placement, &object, &bundle, &Default::default()).unwrap();
    let cfg = RenderConfig::default();
    let seq = render_sequence(&object, &traj, &bundle, &cfg).unwrap();
    assert_eq!(seq.previews.as_ref().map(Vec::len), Some(4));
    let dir = tempfile::tempdir().unwrap();
    write_results(dir.path(), &gt.suggested_placement, &traj, &seq, &cfg).unwrap();
    let (manifest, back) = read_masks(dir.path()).unwrap();
    assert_eq!(back, seq);
    assert_eq!(manifest.frame_count, 4);
    let traj_back = PlacementTrajectory::from_json(&std::fs::read_to_string(dir.path().join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(traj_back.placements, traj.placements);
    assert_eq!(traj_back.flags, traj.flags);
    let placement: RigidPlacement = serde_json::from_slice(&std::fs::read(dir.path().join("placement.json")).unwrap()).unwrap();
    assert_eq!(placement, gt.suggested_placement);
}
