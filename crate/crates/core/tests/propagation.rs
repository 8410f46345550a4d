use scenemask::bundle::{DepthMap, FlowField, SceneBundle};
use scenemask::propagation::{
    find_neighbors, propagate_step, propagate_trajectory, PropagationConfig, PropagationError, StepFlag,
};
use scenemask::synth::{sphere_cloud, synthesize_scene, SyntheticSceneSpec};
use scenemask::{CameraIntrinsics, CameraPose, RigidPlacement, Rotation, Vec3};
use scenemask_oracles::knn;

fn carrier(stride: u32) -> (SceneBundle, scenemask::synth::SyntheticGroundTruth) {
    let mut spec = SyntheticSceneSpec::moving_carrier(64, 64, 8, Vec3::new(0.05, 0.0, 0.0));
    spec.stride = stride;
    synthesize_scene(&spec).unwrap()
}

/// Worst cumulative centroid error over all frames, relative to the total
/// carrier displacement.
fn tracking_error(k: usize, stride: u32) -> f64 {
    let (bundle, gt) = carrier(stride);
    let object = sphere_cloud(200, 0.1);
    let cfg = PropagationConfig {
        k_neighbors: k,
        ..Default::default()
    };
    let traj = propagate_trajectory(&gt.suggested_placement, &object, &bundle, &cfg).unwrap();
    let c = object.centroid();
    let start = traj.placements[0].transform_point(&c);
    let total = (gt.carrier_centers[7] - gt.carrier_centers[0]).norm();
    (0..8)
        .map(|t| {
            let moved = traj.placements[t].transform_point(&c) - start;
            let truth = gt.carrier_centers[t] - gt.carrier_centers[0];
            (moved - truth).norm() / total
        })
        .fold(0.0, f64::max)
}

#[test]
fn carrier_tracking_within_two_percent() {
    let err = tracking_error(32, 2);
    assert!(err < 0.02, "error {err}");
}

#[test]
fn neighbor_count_sweep_at_full_density() {
    // With every pixel sampled even K = 128 stays on the carrier.
    for k in [8, 32, 128] {
        let err = tracking_error(k, 1);
        assert!(err < 0.02, "k={k} error {err}");
    }
}

#[test]
fn carrier_flags_are_propagated() {
    let (bundle, gt) = carrier(2);
    let traj = propagate_trajectory(&gt.suggested_placement, &sphere_cloud(50, 0.1), &bundle, &Default::default()).unwrap();
    assert_eq!(traj.flags[0], StepFlag::Initial);
    assert!(traj.flags[1..].iter().all(|f| *f == StepFlag::Propagated));
    assert!(traj.warnings.is_empty());
}

#[test]
fn zero_flow_scene_gives_constant_trajectory() {
    let (bundle, gt) = synthesize_scene(&SyntheticSceneSpec::ground_plane(64, 64, 8)).unwrap();
    let traj = propagate_trajectory(&gt.suggested_placement, &sphere_cloud(100, 0.2), &bundle, &Default::default()).unwrap();
    assert!(traj.placements.iter().all(|p| *p == gt.suggested_placement));
    assert!(traj.flags[1..].iter().all(|f| *f == StepFlag::StaticFallback));
}

#[test]
fn propagation_is_deterministic() {
    let (bundle, gt) = carrier(2);
    let object = sphere_cloud(300, 0.1);
    let a = propagate_trajectory(&gt.suggested_placement, &object, &bundle, &Default::default()).unwrap();
    let b = propagate_trajectory(&gt.suggested_placement, &object, &bundle, &Default::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn rotation_and_scale_are_carried_unchanged() {
    let (bundle, gt) = carrier(2);
    let object = sphere_cloud(300, 0.1);
    let rotation = Rotation::from_axis_angle(Vec3::new(0.3, -1.0, 0.5), 0.9).unwrap();
    let base = gt.suggested_placement;
    let turned = RigidPlacement::new(1.7, rotation, base.translation).unwrap();
    let a = propagate_trajectory(&base, &object, &bundle, &Default::default()).unwrap();
    let b = propagate_trajectory(&turned, &object, &bundle, &Default::default()).unwrap();
    for (pa, pb) in a.placements.iter().zip(&b.placements) {
        assert_eq!(pb.scale, 1.7);
        assert_eq!(pb.rotation, rotation);
        // The sphere's centroid sits at the origin to within rounding, so
        // the anchor and therefore the motion agree.
        assert!((pa.translation - pb.translation).norm() < 1e-9);
    }
}

#[test]
fn neighbors_match_brute_force() {
    let (bundle, gt) = carrier(2);
    let pts = &bundle.scene_points[3];
    let raw: Vec<[f64; 3]> = pts.points.iter().map(|p| [p.position.x, p.position.y, p.position.z]).collect();
    let q = gt.suggested_placement.translation;
    for (k, cap) in [(1, None), (32, None), (200, Some(0.4)), (5000, None)] {
        let cfg = PropagationConfig {
            k_neighbors: k,
            radius_cap: cap,
            ..Default::default()
        };
        assert_eq!(find_neighbors(pts, &q, &cfg).unwrap(), knn(&raw, [q.x, q.y, q.z], k, cap));
    }
}

fn flat_bundle(flows: Vec<FlowField>, depth: f32) -> SceneBundle {
    let k = CameraIntrinsics::new(40.0, 40.0, 16.0, 16.0, 32, 32).unwrap();
    let n = flows.len() + 1;
    SceneBundle::new(k, vec![CameraPose::identity(); n], vec![DepthMap::filled(32, 32, depth); n], flows, None, 1).unwrap()
}

#[test]
fn unknown_flow_falls_back_to_static() {
    let bundle = flat_bundle(vec![FlowField::filled(32, 32, [1e10, 1e10])], 2.0);
    let p = RigidPlacement::identity().translated(&Vec3::new(0.0, 0.0, 2.0));
    let step = propagate_step(&p, &Vec3::zeros(), &bundle, 0, &Default::default()).unwrap();
    assert_eq!(step.flag, StepFlag::StaticFallback);
    assert_eq!(step.placement, p);
    assert!(step.motions.is_empty());
}

#[test]
fn sub_threshold_flow_is_static() {
    let bundle = flat_bundle(vec![FlowField::filled(32, 32, [0.03, 0.0])], 2.0);
    let p = RigidPlacement::identity().translated(&Vec3::new(0.0, 0.0, 2.0));
    let step = propagate_step(&p, &Vec3::zeros(), &bundle, 0, &Default::default()).unwrap();
    assert_eq!(step.flag, StepFlag::StaticFallback);
}

#[test]
fn radius_cap_excluding_everything_is_static() {
    let bundle = flat_bundle(vec![FlowField::filled(32, 32, [1.0, 0.0])], 2.0);
    let p = RigidPlacement::identity().translated(&Vec3::new(0.0, 0.0, 50.0));
    let cfg = PropagationConfig {
        radius_cap: Some(0.5),
        ..Default::default()
    };
    let step = propagate_step(&p, &Vec3::zeros(), &bundle, 0, &cfg).unwrap();
    assert_eq!(step.neighbor_count, 0);
    assert_eq!(step.flag, StepFlag::StaticFallback);
    assert_eq!(step.placement, p);
}

#[test]
fn empty_scene_is_no_geometry() {
    let bundle = flat_bundle(vec![FlowField::filled(32, 32, [1.0, 0.0])], 0.0);
    let p = RigidPlacement::identity().translated(&Vec3::new(0.0, 0.0, 2.0));
    assert!(matches!(
        propagate_step(&p, &Vec3::zeros(), &bundle, 0, &Default::default()),
        Err(PropagationError::NoGeometry { frame: 0 })
    ));
}

#[test]
fn uniform_flow_translates_object() {
    // 4 px of flow on a plane 1 m away with f = 40 is 0.1 m sideways.
    let bundle = flat_bundle(vec![FlowField::filled(32, 32, [4.0, 0.0]); 3], 1.0);
    let p = RigidPlacement::identity().translated(&Vec3::new(0.0, 0.0, 1.0));
    let traj = propagate_trajectory(&p, &sphere_cloud(10, 0.01), &bundle, &Default::default()).unwrap();
    assert_eq!(traj.len(), 4);
    assert!(traj.warnings.is_empty());
    assert!((traj.placements[1].translation.x - 0.1).abs() < 1e-6);
}

#[test]
fn centroid_behind_camera_warns_but_continues() {
    let k = CameraIntrinsics::new(40.0, 40.0, 16.0, 16.0, 32, 32).unwrap();
    // The second camera sits 3 m forward, past the object.
    let poses = vec![CameraPose::identity(), CameraPose::new(Rotation::identity(), Vec3::new(0.0, 0.0, -3.0))];
    let bundle = SceneBundle::new(
        k,
        poses,
        vec![DepthMap::filled(32, 32, 2.0); 2],
        vec![FlowField::filled(32, 32, [0.0, 0.0])],
        None,
        1,
    )
    .unwrap();
    let p = RigidPlacement::identity().translated(&Vec3::new(0.0, 0.0, 1.0));
    let traj = propagate_trajectory(&p, &sphere_cloud(10, 0.01), &bundle, &Default::default()).unwrap();
    assert_eq!(traj.len(), 2);
    assert_eq!(
        traj.warnings,
        vec![scenemask::propagation::PropagationWarning::CentroidBehindCamera { frame: 1 }]
    );
}
