use sarslide_core::sampling::{rasterize_polygon, Label, Mask};
use sarslide_core::synth::{generate, write_scene, SynthConfig};

fn stats(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var, v.len())
}

fn cfg(seed: u64) -> SynthConfig {
    SynthConfig {
        width: 320,
        height: 320,
        landslide_count: 10,
        non_landslide_count: 10,
        seed,
        ..Default::default()
    }
}

#[test]
fn landslides_double_the_vv_amplitude() {
    for seed in 0..3 {
        let s = generate(&cfg(seed)).unwrap();
        let inside = |g: &sarslide_core::raster::Grid| {
            stats(
                g.data()
                    .iter()
                    .zip(&s.truth_mask.data)
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| v as f64),
            )
        };
        let (after, va, _) = inside(&s.vv_after);
        let (before, vb, _) = inside(&s.vv_before);
        let ratio = after / before;
        assert!((1.8..=2.2).contains(&ratio), "seed {seed}: ratio {ratio}");
        let separation = (after - before) / ((va + vb) / 2.0).sqrt();
        assert!(separation > 1.0, "seed {seed}: separation {separation}");

        // Outside landslides both dates share one distribution.
        let outside = |g: &sarslide_core::raster::Grid| {
            stats(
                g.data()
                    .iter()
                    .zip(&s.truth_mask.data)
                    .filter(|(_, &m)| !m)
                    .map(|(&v, _)| v as f64),
            )
            .0
        };
        let stable = outside(&s.vv_after) / outside(&s.vv_before);
        assert!(
            (stable - 1.0).abs() < 0.02,
            "seed {seed}: stable ratio {stable}"
        );
    }
}

#[test]
fn truth_polygons_reproduce_the_mask() {
    let s = generate(&cfg(4)).unwrap();
    let mut m = Mask::new(s.truth_mask.rows, s.truth_mask.cols);
    let landslides: Vec<_> = s
        .truth_polygons
        .iter()
        .filter(|p| p.label() == Label::Landslide)
        .collect();
    assert_eq!(landslides.len(), 10);
    assert_eq!(s.truth_polygons.len(), 20);
    for p in landslides {
        let r = rasterize_polygon(p, m.rows, m.cols);
        for (a, b) in m.data.iter_mut().zip(r.data) {
            *a |= b;
        }
    }
    assert!(m.iou(&s.truth_mask) >= 0.95);
    // Stable-ground polygons never touch a landslide.
    for p in s
        .truth_polygons
        .iter()
        .filter(|p| p.label() == Label::NonLandslide)
    {
        let r = rasterize_polygon(p, m.rows, m.cols);
        assert!(!r.data.iter().zip(&s.truth_mask.data).any(|(&a, &b)| a && b));
    }
}

#[test]
fn scene_directory_round_trips() {
    let c = SynthConfig {
        width: 96,
        height: 96,
        landslide_count: 1,
        non_landslide_count: 1,
        ..Default::default()
    };
    let s = generate(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_scene(&s, &c, dir.path()).unwrap();
    let sources = sarslide_core::raster::read_sources_dir(dir.path()).unwrap();
    assert_eq!(sources.len(), 9);
    let polys =
        sarslide_core::sampling::read_polygons(dir.path().join("polygons.geojson")).unwrap();
    assert_eq!(polys, s.truth_polygons);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config"]["width"], 96);
}
