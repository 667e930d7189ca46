mod oracle;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vitdd::attention::{
    extract_class_attention, extract_class_attention_per_head, heatmap_image, render_heatmap, reshape_to_grid,
    visualize_sample, Grid, HeadSelection, HeatmapStyle, VizOptions,
};
use vitdd::data::{Provenance, RgbImage, Sample};
use vitdd::model::{forward, ModelConfig, ModelInput, Modality, Params, Targets, Task};
use vitdd::Error;

fn inputs(config: &ModelConfig, seed: u64) -> (vitdd::Tensor, vitdd::Tensor) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let d = config.driver_resolution.unwrap();
    let f = config.face_resolution;
    (
        oracle::random_image(&mut r, 3, d.height, d.width),
        oracle::random_image(&mut r, 3, f.height, f.width),
    )
}

#[test]
fn one_record_per_layer() {
    let c = ModelConfig::desk();
    let params = Params::random(&c, 1, 0.5).unwrap();
    let (d, f) = inputs(&c, 2);
    let out = forward(&params, ModelInput { driver: Some(&d), face: &f }, true).unwrap();
    for task in [Task::Distraction, Task::Emotion] {
        let recs = extract_class_attention(out.attention.as_deref(), &c, task).unwrap();
        assert_eq!(recs.len(), c.depth);
        assert!(recs.iter().enumerate().all(|(i, r)| r.layer == i + 1 && r.head == HeadSelection::Averaged));
        let per_head = extract_class_attention_per_head(out.attention.as_deref(), &c, task).unwrap();
        assert_eq!(per_head.len(), c.depth * c.num_heads);
    }
    let teacher = ModelConfig::desk().teacher_of();
    let err = extract_class_attention(out.attention.as_deref(), &teacher, Task::Distraction).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn single_head_row_is_raw_softmax() {
    let c = ModelConfig { num_heads: 1, depth: 1, ..ModelConfig::desk() };
    let params = Params::random(&c, 3, 0.5).unwrap();
    let (d, f) = inputs(&c, 4);
    let out = forward(&params, ModelInput { driver: Some(&d), face: &f }, true).unwrap();
    let att = out.attention.unwrap();
    let recs = extract_class_attention(Some(&att), &c, Task::Emotion).unwrap();
    assert_eq!(recs[0].row.as_slice(), att[0].row(0, 1));
}

#[test]
fn averaged_row_matches_oracle_heads() {
    let c = ModelConfig::desk();
    for seed in 0..3 {
        let params = Params::random(&c, seed, 0.5).unwrap();
        let (d, f) = inputs(&c, 10 + seed);
        let out = forward(&params, ModelInput { driver: Some(&d), face: &f }, true).unwrap();
        let o = oracle::forward(&params, Some(&d), &f);
        let recs = extract_class_attention(out.attention.as_deref(), &c, Task::Distraction).unwrap();
        for (rec, maps) in recs.iter().zip(&o.attention) {
            for k in 0..c.seq_len() {
                let mean = maps.iter().map(|m| m[0][k]).sum::<f64>() / maps.len() as f64;
                assert!((rec.row[k] - mean).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn grid_shapes_and_indexing() {
    let paper = ModelConfig::paper();
    assert_eq!(paper.grid(Modality::Driver), Some((14, 14)));
    assert_eq!(paper.grid(Modality::Face), Some((2, 2)));
    let c = ModelConfig::desk();
    let seg: Vec<f64> = (0..16).map(f64::from).collect();
    let g = reshape_to_grid(&seg, Modality::Driver, &c).unwrap();
    assert_eq!((g.rows, g.cols), (4, 4));
    assert_eq!(g.get(1, 2), 6.0);
    assert!(matches!(reshape_to_grid(&seg[..15], Modality::Driver, &c), Err(Error::Dimension(_))));
}

proptest! {
    #[test]
    fn flatten_inverts_reshape(values in proptest::collection::vec(-1.0f64..1.0, 4)) {
        let c = ModelConfig::desk();
        let g = reshape_to_grid(&values, Modality::Face, &c).unwrap();
        prop_assert_eq!(g.flatten(), values);
    }
}

#[test]
fn scaled_render_has_uniform_blocks() {
    let g = Grid { rows: 2, cols: 2, values: vec![0.0, 1.0, 0.25, 0.5] };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.ppm");
    let img = render_heatmap(&g, &path, &HeatmapStyle { scale: 8, overlay: None }).unwrap();
    assert_eq!(RgbImage::load(&path).unwrap(), img);
    assert_eq!((img.width(), img.height()), (16, 16));
    let expect = |t: f64| [(255.0 * t).round() as u8, 0, (255.0 * (1.0 - t)).round() as u8];
    for y in 0..16 {
        for x in 0..16 {
            assert_eq!(img.get(x, y), expect(g.values[(y / 8) * 2 + x / 8]), "({x},{y})");
        }
    }
}

#[test]
fn overlay_blends_and_checks_size() {
    let g = Grid { rows: 1, cols: 2, values: vec![0.0, 1.0] };
    let src = RgbImage::from_raw(2, 1, vec![100; 6]).unwrap();
    let img = heatmap_image(&g, &HeatmapStyle { scale: 1, overlay: Some((src, 0.5)) }).unwrap();
    assert_eq!(img.get(0, 0), [50, 50, 178]);
    let wrong = RgbImage::new(3, 1);
    assert!(heatmap_image(&g, &HeatmapStyle { scale: 1, overlay: Some((wrong, 0.5)) }).is_err());
    let bad = Grid { rows: 1, cols: 2, values: vec![0.0, f64::NAN] };
    assert!(matches!(heatmap_image(&bad, &HeatmapStyle::default()), Err(Error::Numeric(_))));
}

#[test]
fn visualize_writes_one_map_per_layer_and_query() {
    let c = ModelConfig::desk();
    let params = Params::random(&c, 5, 0.5).unwrap();
    let (d, f) = inputs(&c, 6);
    let sample = Sample {
        sample_id: "s0007".into(),
        driver: Some(d),
        face: f,
        targets: Targets { distraction: Some(0), emotion: 0 },
        provenance: Provenance::GroundTruth,
    };
    let dir = tempfile::tempdir().unwrap();
    let out = visualize_sample(&params, &sample, dir.path(), &VizOptions::default()).unwrap();
    assert_eq!(out.heatmaps.len(), 2 * c.depth);
    assert!(dir.path().join("s0007_L2_emo.ppm").exists());
    let img = RgbImage::load(&dir.path().join("s0007_L1_dist.ppm")).unwrap();
    // Driver 4x4 cells and face 2x2 cells at 16 px each, 4 px apart.
    assert_eq!((img.width(), img.height()), (64 + 4 + 32, 64));
    let csv = std::fs::read_to_string(out.interactions.unwrap()).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "layer,head,dist_to_emo,emo_to_dist");
    assert_eq!(lines.len(), 1 + c.depth);
    assert!(lines[1].starts_with("1,mean,"));

    let opts = VizOptions { layers: Some(vec![2]), per_head: true, overlay_alpha: Some(0.6), ..VizOptions::default() };
    let out = visualize_sample(&params, &sample, dir.path(), &opts).unwrap();
    assert_eq!(out.heatmaps.len(), 2);
    let csv = std::fs::read_to_string(out.interactions.unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 1 + c.num_heads);
    let bad = VizOptions { layers: Some(vec![3]), ..VizOptions::default() };
    assert!(matches!(visualize_sample(&params, &sample, dir.path(), &bad), Err(Error::Config(_))));
}
