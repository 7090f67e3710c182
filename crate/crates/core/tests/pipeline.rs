use proptest::prelude::*;

use gslang_core::io;
use gslang_core::pq::{train_codebook, KMeansConfig, NormMode};
use gslang_core::query::{relevancy_scores, score_scene, segment_argmax, select_threshold, QuerySpec};
use gslang_core::registration::{register, Features, RegistrationConfig};
use gslang_core::synth::{gen_scene, random_unit_vectors, render_masks, RigSpec, SceneSpec, SyntheticScene};
use gslang_core::Error;

fn small_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        seed,
        gaussian_count: 60,
        label_count: 3,
        dim: 32,
        rig: RigSpec {
            views: 4,
            width: 64,
            height: 64,
            focal: 64.0,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn masks_for(spec: &SceneSpec, s: &SyntheticScene) -> gslang_core::registration::MaskDataset {
    let cams = spec.rig.cameras().unwrap();
    render_masks(&s.scene, &s.label_embeddings, s.dim, &cams, spec.noise_sigma, spec.seed).unwrap()
}

#[test]
fn files_round_trip() {
    let spec = small_spec(1);
    let s = gen_scene(&spec).unwrap();
    let ds = masks_for(&spec, &s);
    let (rs, _) = register(&s.scene, &ds, &RegistrationConfig::default()).unwrap();
    let db = random_unit_vectors(256, 32, 1);
    let cb = train_codebook(&db, 32, 8, 16, 1, &KMeansConfig::default()).unwrap();
    let pq = rs.quantize(&cb).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    io::save_scene(p("s.drsg"), &s.scene).unwrap();
    io::save_masks(p("m.drmd"), &ds).unwrap();
    io::save_point_cloud(p("p.drpc"), &s.points).unwrap();
    io::save_codebook(p("c.drpq"), &cb).unwrap();
    io::save_features(p("f.drsf"), &rs.features).unwrap();
    io::save_features(p("q.drsf"), &pq.features).unwrap();

    let scene = io::load_scene(p("s.drsg")).unwrap();
    assert_eq!(scene.len(), s.scene.len());
    for (a, b) in scene.gaussians.iter().zip(&s.scene.gaussians) {
        assert_eq!(a.label, b.label);
        assert_eq!(a.center.map(|x| x as f32), b.center.map(|x| x as f32));
    }
    let masks = io::load_masks(p("m.drmd")).unwrap();
    assert_eq!(masks.embeddings, ds.embeddings);
    for (a, b) in masks.views.iter().zip(&ds.views) {
        assert_eq!(a.mask_map, b.mask_map);
        assert_eq!(a.mask_table, b.mask_table);
        assert_eq!(a.camera.world_to_camera.map(|x| x as f32), b.camera.world_to_camera.map(|x| x as f32));
    }
    let pc = io::load_point_cloud(p("p.drpc")).unwrap();
    assert_eq!(pc.labels, s.points.labels);
    assert_eq!(io::load_codebook(p("c.drpq")).unwrap().centroid_data(), cb.centroid_data());
    assert_eq!(io::load_features(p("f.drsf"), None).unwrap(), rs.features);
    assert_eq!(io::load_features(p("q.drsf"), Some(8)).unwrap(), pq.features);
}

#[test]
fn truncated_and_padded_files_are_rejected() {
    let spec = small_spec(2);
    let s = gen_scene(&spec).unwrap();
    let mut buf = Vec::new();
    io::write_scene(&mut buf, &s.scene).unwrap();
    assert!(io::read_scene(&buf[..buf.len() - 1]).is_err());
    let mut padded = buf.clone();
    padded.push(0);
    assert!(io::read_scene(&padded[..]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(io::read_scene(&bad[..]).is_err());
}

#[test]
fn registration_then_query_finds_each_label() {
    let spec = small_spec(3);
    let s = gen_scene(&spec).unwrap();
    let ds = masks_for(&spec, &s);
    let (rs, w) = register(&s.scene, &ds, &RegistrationConfig::default()).unwrap();
    assert!(w.nnz() > 0);
    assert_eq!(rs.survivor_map.len(), s.scene.len());

    let queries: Vec<Vec<f32>> = (0..3).map(|l| s.label_embedding(l).to_vec()).collect();
    let seg = segment_argmax(&rs, None, &queries, NormMode::default()).unwrap();
    let truth = rs.scene.labels();
    let hits = seg.iter().zip(&truth).filter(|(p, t)| Some(**p as u32) == **t).count();
    assert!(hits as f64 >= 0.95 * seg.len() as f64, "{hits}/{}", seg.len());

    let scores = score_scene(&rs, None, &queries[0], NormMode::default()).unwrap();
    let selected = select_threshold(&scores, 0.5);
    assert!(!selected.is_empty());
    assert!(selected.iter().all(|&i| truth[i] == Some(0)));

    let spec_q = QuerySpec {
        embedding: queries[0].clone(),
        canonicals: queries[1..].to_vec(),
        threshold: 0.5,
    };
    let rel = relevancy_scores(&rs, None, &spec_q, NormMode::default()).unwrap();
    for (i, r) in rel.iter().enumerate() {
        assert_eq!(*r >= 0.5, scores[i] >= seg_score_max(&rs, &queries[1..], i), "splat {i}");
    }
}

// Highest competing label score for splat `i`.
fn seg_score_max(rs: &gslang_core::registration::RegisteredScene, others: &[Vec<f32>], i: usize) -> f32 {
    others
        .iter()
        .map(|q| score_scene(rs, None, q, NormMode::default()).unwrap()[i])
        .fold(f32::NEG_INFINITY, f32::max)
}

#[test]
fn quantized_segmentation_agrees_with_full() {
    let spec = small_spec(4);
    let s = gen_scene(&spec).unwrap();
    let ds = masks_for(&spec, &s);
    let (rs, _) = register(&s.scene, &ds, &RegistrationConfig::default()).unwrap();
    let db = random_unit_vectors(512, 32, 4);
    let cb = train_codebook(&db, 32, 16, 32, 4, &KMeansConfig::default()).unwrap();
    let pq = rs.quantize(&cb).unwrap();
    assert!(matches!(pq.features, Features::Quantized { subspaces: 16, .. }));
    let queries: Vec<Vec<f32>> = (0..3).map(|l| s.label_embedding(l).to_vec()).collect();
    let full = segment_argmax(&rs, None, &queries, NormMode::default()).unwrap();
    let adc = segment_argmax(&pq, Some(&cb), &queries, NormMode::default()).unwrap();
    let agree = full.iter().zip(&adc).filter(|(a, b)| a == b).count();
    assert!(agree as f64 >= 0.95 * full.len() as f64, "{agree}/{}", full.len());
    assert!(matches!(
        segment_argmax(&pq, None, &queries, NormMode::default()),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn parallel_registration_matches_serial() {
    let spec = small_spec(5);
    let s = gen_scene(&spec).unwrap();
    let ds = masks_for(&spec, &s);
    let (a, wa) = register(&s.scene, &ds, &RegistrationConfig::default()).unwrap();
    let cfg = RegistrationConfig {
        parallel: true,
        ..Default::default()
    };
    let (b, wb) = register(&s.scene, &ds, &cfg).unwrap();
    assert_eq!(a.survivor_map, b.survivor_map);
    assert_eq!(wa.nnz(), wb.nnz());
    for (i, j, x) in wa.entries() {
        assert!((x - wb.get(i, j)).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feature_matrices_round_trip(rows in 0usize..10, dim in 1usize..12, seed in any::<u64>()) {
        let data = random_unit_vectors(rows, dim, seed);
        let mut buf = Vec::new();
        io::write_matrix(&mut buf, rows, dim, &data).unwrap();
        prop_assert_eq!(buf.len(), 4 + 4 + 4 + 4 + 1 + 4 * rows * dim);
        let (r, d, back) = io::read_matrix(&buf[..]).unwrap();
        prop_assert_eq!((r, d), (rows, dim));
        prop_assert_eq!(back, data);
    }

    #[test]
    fn generated_scenes_round_trip(seed in 0u64..1000) {
        let spec = SceneSpec { seed, gaussian_count: 20, dim: 8, ..Default::default() };
        let s = gen_scene(&spec).unwrap();
        let mut buf = Vec::new();
        io::write_scene(&mut buf, &s.scene).unwrap();
        let back = io::read_scene(&buf[..]).unwrap();
        let mut again = Vec::new();
        io::write_scene(&mut again, &back).unwrap();
        prop_assert_eq!(buf, again);
    }
}
