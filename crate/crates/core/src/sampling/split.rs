use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::NormalizationSpec;
use crate::sampling::{Label, Patch};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub landslide: usize,
    pub non_landslide: usize,
}

impl ClassCounts {
    pub fn of(patches: &[Patch]) -> Self {
        let landslide = patches
            .iter()
            .filter(|p| p.label == Label::Landslide)
            .count();
        ClassCounts {
            landslide,
            non_landslide: patches.len() - landslide,
        }
    }

    pub fn total(&self) -> usize {
        self.landslide + self.non_landslide
    }
}

/// Train/test patches with polygon-disjoint splits.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub train: Vec<Patch>,
    pub test: Vec<Patch>,
    pub seed: u64,
    /// Polygon ids assigned to each split, ascending.
    pub train_polygons: Vec<usize>,
    pub test_polygons: Vec<usize>,
    /// Composite normalization, kept so inference scenes can replay it.
    pub normalization: Option<NormalizationSpec>,
}

impl PatchSet {
    pub fn train_counts(&self) -> ClassCounts {
        ClassCounts::of(&self.train)
    }

    pub fn test_counts(&self) -> ClassCounts {
        ClassCounts::of(&self.test)
    }
}

/// Assigns whole polygons to the test split so that each label's test share
/// is as close to `test_fraction` of its patches as a greedy pass over a
/// seeded shuffle allows. Every label keeps at least one polygon on each side.
pub fn split(patches: Vec<Patch>, test_fraction: f64, seed: u64) -> Result<PatchSet> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    // polygon id -> (label, patch count); BTreeMap keeps iteration order seed-independent.
    let mut polys: BTreeMap<usize, (Label, usize)> = BTreeMap::new();
    for p in &patches {
        let e = polys.entry(p.source_polygon).or_insert((p.label, 0));
        if e.0 != p.label {
            return Err(Error::Split(format!(
                "polygon {} carries patches of both labels",
                p.source_polygon
            )));
        }
        e.1 += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_polygons = Vec::new();
    for label in Label::ALL {
        let mut ids: Vec<(usize, usize)> = polys
            .iter()
            .filter(|(_, (l, _))| *l == label)
            .map(|(&id, &(_, n))| (id, n))
            .collect();
        if ids.len() < 2 {
            return Err(Error::Split(format!(
                "label {} has {} contributing polygon(s); need at least 2",
                label.as_str(),
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        let total: usize = ids.iter().map(|&(_, n)| n).sum();
        let target = test_fraction * total as f64;
        let mut taken = 0usize;
        let mut chosen = Vec::new();
        for &(id, n) in &ids {
            let before = (taken as f64 - target).abs();
            let after = ((taken + n) as f64 - target).abs();
            if after < before && chosen.len() + 1 < ids.len() {
                chosen.push(id);
                taken += n;
            }
        }
        if chosen.is_empty() {
            chosen.push(ids[0].0);
        }
        test_polygons.extend(chosen);
    }
    test_polygons.sort_unstable();
    let (test, train): (Vec<Patch>, Vec<Patch>) = patches
        .into_iter()
        .partition(|p| test_polygons.binary_search(&p.source_polygon).is_ok());
    let train_polygons = polys
        .keys()
        .copied()
        .filter(|id| test_polygons.binary_search(id).is_err())
        .collect();
    Ok(PatchSet {
        train,
        test,
        seed,
        train_polygons,
        test_polygons,
        normalization: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::PATCH_LEN;

    fn fake(polys: &[(Label, usize)]) -> Vec<Patch> {
        polys
            .iter()
            .enumerate()
            .flat_map(|(id, &(label, n))| {
                (0..n).map(move |k| Patch {
                    pixels: vec![0.0; PATCH_LEN],
                    label,
                    origin: (k, 0),
                    source_polygon: id,
                })
            })
            .collect()
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let spec: Vec<(Label, usize)> = (0..10)
            .map(|i| (Label::from_index(i % 2).unwrap(), 3 + i))
            .collect();
        let a = split(fake(&spec), 0.2, 9).unwrap();
        let b = split(fake(&spec), 0.2, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_polygon_label_rejected() {
        let spec = [
            (Label::Landslide, 5),
            (Label::NonLandslide, 5),
            (Label::NonLandslide, 5),
        ];
        assert!(matches!(split(fake(&spec), 0.5, 0), Err(Error::Split(_))));
    }

    #[test]
    fn quarter_of_four_equal_polygons_is_one() {
        let mut spec = vec![(Label::Landslide, 10); 4];
        spec.extend(vec![(Label::NonLandslide, 10); 4]);
        for seed in 0..20 {
            let s = split(fake(&spec), 0.25, seed).unwrap();
            assert_eq!(s.test_counts().landslide, 10);
            assert_eq!(s.test_counts().non_landslide, 10);
            assert_eq!(s.test_polygons.len(), 2);
            assert_eq!(s.train.len(), 60);
        }
    }

    #[test]
    fn partition_and_disjointness() {
        let spec: Vec<(Label, usize)> = (0..12)
            .map(|i| (Label::from_index(i % 2).unwrap(), 1 + (i * 7) % 5))
            .collect();
        let all = fake(&spec);
        let n = all.len();
        let s = split(all, 0.3, 4).unwrap();
        assert_eq!(s.train.len() + s.test.len(), n);
        for p in &s.train {
            assert!(!s.test_polygons.contains(&p.source_polygon));
        }
        for p in &s.test {
            assert!(s.test_polygons.contains(&p.source_polygon));
        }
        for c in [s.train_counts(), s.test_counts()] {
            assert!(c.landslide > 0 && c.non_landslide > 0);
        }
    }

    #[test]
    fn fraction_bounds_enforced() {
        let spec = vec![(Label::Landslide, 1); 4];
        assert!(split(fake(&spec), 0.0, 0).is_err());
        assert!(split(fake(&spec), 1.0, 0).is_err());
    }
}
