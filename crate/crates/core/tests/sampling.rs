use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sarslide_core::raster::{GeoTransform, Grid};
use sarslide_core::sampling::{
    extract_patches, split, window, AnnotationPolygon, ExtractConfig, Label, PATCH,
};

fn random_grid(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Grid {
    let data = (0..w * h * 3).map(|_| rng.random::<f32>()).collect();
    Grid::new(
        w,
        h,
        3,
        data,
        GeoTransform::identity(),
        None,
        vec!["a".into(), "b".into(), "c".into()],
    )
    .unwrap()
}

fn random_polygon(w: usize, h: usize, label: Label, rng: &mut ChaCha8Rng) -> AnnotationPolygon {
    loop {
        let cx = rng.random_range(15.0..w as f64 - 15.0);
        let cy = rng.random_range(15.0..h as f64 - 15.0);
        let n = rng.random_range(3..9);
        let verts: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let t = k as f64 / n as f64 * std::f64::consts::TAU;
                let r = rng.random_range(10.0..30.0);
                (
                    (cx + r * t.cos()).clamp(0.0, w as f64),
                    (cy + r * t.sin()).clamp(0.0, h as f64),
                )
            })
            .collect();
        if let Ok(p) = AnnotationPolygon::new(verts, label) {
            return p;
        }
    }
}

/// Every stride-aligned window inside the bounding box, with overlap counted
/// by point-in-polygon at pixel centers.
fn brute_force(
    grid: &Grid,
    poly: &AnnotationPolygon,
    cfg: &ExtractConfig,
) -> Option<Vec<(usize, usize)>> {
    let (x0, y0, x1, y1) = poly.bounds();
    let (c0, r0) = (x0.floor() as usize, y0.floor() as usize);
    let c1 = (x1.ceil() as usize).min(grid.width());
    let r1 = (y1.ceil() as usize).min(grid.height());
    if r1 - r0 < PATCH || c1 - c0 < PATCH {
        return None;
    }
    let mut out = Vec::new();
    let mut r = r0;
    while r + PATCH <= r1 {
        let mut c = c0;
        while c + PATCH <= c1 {
            let mut inside = 0;
            for rr in r..r + PATCH {
                for cc in c..c + PATCH {
                    if poly.contains(cc as f64 + 0.5, rr as f64 + 0.5) {
                        inside += 1;
                    }
                }
            }
            if inside as f64 >= cfg.min_overlap * (PATCH * PATCH) as f64 {
                out.push((r, c));
            }
            c += cfg.stride;
        }
        r += cfg.stride;
    }
    Some(out)
}

#[test]
fn extraction_matches_brute_force_window_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..25 {
        let (w, h) = (rng.random_range(60..110), rng.random_range(60..110));
        let grid = random_grid(w, h, &mut rng);
        let polys: Vec<_> = (0..4)
            .map(|i| random_polygon(w, h, Label::ALL[i % 2], &mut rng))
            .collect();
        let cfg = ExtractConfig {
            stride: rng.random_range(1..14),
            min_overlap: rng.random_range(0.0..1.0),
        };
        let ex = extract_patches(&grid, &polys, &cfg).unwrap();
        let mut expected = Vec::new();
        let mut skipped = Vec::new();
        for (id, p) in polys.iter().enumerate() {
            match brute_force(&grid, p, &cfg) {
                Some(o) => expected.extend(o.into_iter().map(|o| (id, o))),
                None => skipped.push(id),
            }
        }
        let got: Vec<_> = ex
            .patches
            .iter()
            .map(|p| (p.source_polygon, p.origin))
            .collect();
        assert_eq!(got, expected, "trial {trial}");
        assert_eq!(ex.skipped, skipped);
        for p in &ex.patches {
            assert_eq!(p.label, polys[p.source_polygon].label());
            assert_eq!(p.pixels, window(&grid, p.origin.0, p.origin.1));
        }
    }
}

#[test]
fn split_is_a_polygon_disjoint_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = random_grid(200, 200, &mut rng);
    let polys: Vec<_> = (0..10)
        .map(|i| random_polygon(200, 200, Label::ALL[i % 2], &mut rng))
        .collect();
    let patches = extract_patches(
        &grid,
        &polys,
        &ExtractConfig {
            stride: 3,
            min_overlap: 0.3,
        },
    )
    .unwrap()
    .patches;
    for seed in 0..20 {
        let set = split(patches.clone(), 0.2, seed).unwrap();
        assert_eq!(set.train.len() + set.test.len(), patches.len());
        let train: BTreeSet<_> = set.train.iter().map(|p| p.source_polygon).collect();
        let test: BTreeSet<_> = set.test.iter().map(|p| p.source_polygon).collect();
        assert!(train.is_disjoint(&test));
        for label in Label::ALL {
            assert!(set.train.iter().any(|p| p.label == label));
            assert!(set.test.iter().any(|p| p.label == label));
        }
        assert_eq!(set, split(patches.clone(), 0.2, seed).unwrap());
    }
}
