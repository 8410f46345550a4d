use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenemask::bundle::{
    load_bundle, parse_flo, parse_pfm, parse_ply, save_bundle, write_flo, write_pfm, write_ply, DepthMap, FlowField,
    ObjectCloud, PlyEncoding, UNKNOWN_FLOW,
};
use scenemask::synth::{sphere_cloud, synthesize_scene, SyntheticSceneSpec};
use scenemask::{SceneBundle, Vec3};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bits32(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn bits64(v: &[Vec3]) -> Vec<[u64; 3]> {
    v.iter().map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).collect()
}

fn assert_bundles_bit_equal(a: &SceneBundle, b: &SceneBundle) {
    assert_eq!(a.intrinsics, b.intrinsics);
    assert_eq!(a.stride, b.stride);
    assert_eq!(a.poses.len(), b.poses.len());
    for (pa, pb) in a.poses.iter().zip(&b.poses) {
        let ra: Vec<u64> = pa.rotation.to_row_major().iter().map(|x| x.to_bits()).collect();
        let rb: Vec<u64> = pb.rotation.to_row_major().iter().map(|x| x.to_bits()).collect();
        assert_eq!(ra, rb);
        assert_eq!(bits64(&[pa.translation]), bits64(&[pb.translation]));
    }
    for (da, db) in a.depths.iter().zip(&b.depths) {
        assert_eq!((da.width, da.height), (db.width, db.height));
        assert_eq!(bits32(&da.values), bits32(&db.values));
    }
    for (fa, fb) in a.flows.iter().zip(&b.flows) {
        let ua: Vec<f32> = fa.values.iter().flatten().copied().collect();
        let ub: Vec<f32> = fb.values.iter().flatten().copied().collect();
        assert_eq!(bits32(&ua), bits32(&ub));
    }
    assert_eq!(a.rgb_frames, b.rgb_frames);
    assert_eq!(a.objects.keys().collect::<Vec<_>>(), b.objects.keys().collect::<Vec<_>>());
    for (oa, ob) in a.objects.values().zip(b.objects.values()) {
        assert_eq!(bits64(&oa.points), bits64(&ob.points));
        assert_eq!(oa.colors, ob.colors);
    }
    for (sa, sb) in a.scene_points.iter().zip(&b.scene_points) {
        assert_eq!(sa, sb);
    }
}

#[test]
fn binary_ply_fixture_parses_exactly() {
    let cloud = parse_ply(&std::fs::read(fixture("cloud_1000.ply")).unwrap()).unwrap();
    let expected: serde_json::Value = serde_json::from_slice(&std::fs::read(fixture("cloud_1000.json")).unwrap()).unwrap();
    let points = expected["points"].as_array().unwrap();
    assert_eq!(cloud.len(), 1000);
    for (p, e) in cloud.points.iter().zip(points) {
        let e: Vec<f64> = e.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!([p.x, p.y, p.z], [e[0], e[1], e[2]]);
    }
    let colors: Vec<[u8; 3]> = serde_json::from_value(expected["colors"].clone()).unwrap();
    assert_eq!(cloud.colors.unwrap(), colors);
}

#[test]
fn ply_fixture_survives_rewrite_in_both_encodings() {
    let cloud = parse_ply(&std::fs::read(fixture("cloud_1000.ply")).unwrap()).unwrap();
    for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
        let back = parse_ply(&write_ply(&cloud, enc)).unwrap();
        assert_eq!(bits64(&back.points), bits64(&cloud.points));
        assert_eq!(back.colors, cloud.colors);
    }
}

#[test]
fn pfm_rows_are_stored_bottom_up() {
    let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
    for v in [3.0f32, 4.0, 1.0, 2.0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let d = parse_pfm(&bytes).unwrap();
    assert_eq!(d.values, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(write_pfm(&d), bytes);
}

#[test]
fn flo_layout_matches_middlebury() {
    let f = FlowField::new(2, 1, vec![[1.5, -2.0], [UNKNOWN_FLOW, UNKNOWN_FLOW]]);
    let bytes = write_flo(&f);
    assert_eq!(&bytes[0..4], &202021.25f32.to_le_bytes());
    assert_eq!(&bytes[4..8], &2i32.to_le_bytes());
    assert_eq!(&bytes[8..12], &1i32.to_le_bytes());
    assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
    assert_eq!(bytes.len(), 12 + 2 * 8);
    let back = parse_flo(&bytes).unwrap();
    assert_eq!(back.valid_at(1, 0), None);
    assert_eq!(back.valid_at(0, 0), Some([1.5, -2.0]));
}

proptest! {
    #[test]
    fn pfm_round_trip_is_bit_exact(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f32> = (0..w * h)
            .map(|_| match rng.random_range(0..6) {
                0 => 0.0,
                1 => f32::INFINITY,
                2 => f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff),
                _ => rng.random_range(0.01f32..100.0),
            })
            .collect();
        let d = DepthMap::new(w, h, values);
        let back = parse_pfm(&write_pfm(&d)).unwrap();
        prop_assert_eq!(bits32(&back.values), bits32(&d.values));
    }

    #[test]
    fn flo_round_trip_is_bit_exact(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<[f32; 2]> = (0..w * h)
            .map(|_| if rng.random_bool(0.2) { [UNKNOWN_FLOW; 2] } else { [rng.random_range(-50.0f32..50.0), rng.random_range(-50.0f32..50.0)] })
            .collect();
        let f = FlowField::new(w, h, values);
        let back = parse_flo(&write_flo(&f)).unwrap();
        let a: Vec<f32> = f.values.iter().flatten().copied().collect();
        let b: Vec<f32> = back.values.iter().flatten().copied().collect();
        prop_assert_eq!(bits32(&a), bits32(&b));
    }

    #[test]
    fn ply_round_trip_is_bit_exact(seed in any::<u64>(), n in 0usize..200, single in any::<bool>(), colored in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec3> = (0..n)
            .map(|_| {
                let mut c = || {
                    let v: f64 = rng.random_range(-10.0..10.0);
                    if single { v as f32 as f64 } else { v }
                };
                Vec3::new(c(), c(), c())
            })
            .collect();
        let cloud = if colored {
            let colors = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            ObjectCloud::with_colors(points, colors)
        } else {
            ObjectCloud::new(points)
        };
        for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let back = parse_ply(&write_ply(&cloud, enc)).unwrap();
            prop_assert_eq!(bits64(&back.points), bits64(&cloud.points));
            prop_assert_eq!(&back.colors, &cloud.colors);
        }
    }
}

#[test]
fn orbit_bundle_round_trip_is_bit_exact() {
    let (mut bundle, _) = synthesize_scene(&SyntheticSceneSpec::orbit_camera(48, 40, 8, 4.0)).unwrap();
    bundle.objects.insert("ball".into(), sphere_cloud(100, 0.3));
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&bundle, dir.path()).unwrap();
    let back = load_bundle(dir.path()).unwrap();
    assert_bundles_bit_equal(&bundle, &back);

    // Saving what was loaded reproduces every file byte for byte.
    let dir2 = tempfile::tempdir().unwrap();
    save_bundle(&back, dir2.path()).unwrap();
    for sub in ["manifest.json", "intrinsics.json", "poses.json", "depth/00003.pfm", "flow/00006.flo", "rgb/00007.png", "object/ball.ply"] {
        assert_eq!(
            std::fs::read(dir.path().join(sub)).unwrap(),
            std::fs::read(dir2.path().join(sub)).unwrap(),
            "{sub}"
        );
    }
}

#[test]
fn every_scene_kind_round_trips() {
    for spec in [
        SyntheticSceneSpec::ground_plane(32, 32, 3),
        SyntheticSceneSpec::moving_carrier(32, 32, 3, Vec3::new(0.05, 0.0, 0.0)),
        SyntheticSceneSpec::occluder_sweep(32, 32, 3),
        SyntheticSceneSpec { with_rgb: false, ..SyntheticSceneSpec::ground_plane(32, 24, 2) },
    ] {
        let (bundle, _) = synthesize_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        assert_bundles_bit_equal(&bundle, &load_bundle(dir.path()).unwrap());
    }
}
