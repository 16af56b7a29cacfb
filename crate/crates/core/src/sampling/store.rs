//! On-disk PatchSet: `manifest.json`, plus `{train,test}.bin` (little-endian
//! f32, N x 25 x 25 x 3 channel-last) and `{train,test}.labels` (one byte per
//! patch, 1 = landslide).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::NormalizationSpec;
use crate::sampling::{ClassCounts, Label, Patch, PatchSet, CHANNELS, PATCH, PATCH_LEN};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PatchMeta {
    origin: (usize, usize),
    polygon: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitManifest {
    counts: ClassCounts,
    polygons: Vec<usize>,
    patches: Vec<PatchMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    patch_size: usize,
    channels: usize,
    seed: u64,
    normalization: Option<NormalizationSpec>,
    train: SplitManifest,
    test: SplitManifest,
}

fn split_manifest(patches: &[Patch], polygons: &[usize]) -> SplitManifest {
    SplitManifest {
        counts: ClassCounts::of(patches),
        polygons: polygons.to_vec(),
        patches: patches
            .iter()
            .map(|p| PatchMeta {
                origin: p.origin,
                polygon: p.source_polygon,
            })
            .collect(),
    }
}

fn write_split(dir: &Path, name: &str, patches: &[Patch]) -> Result<()> {
    let mut bytes = Vec::with_capacity(patches.len() * PATCH_LEN * 4);
    for p in patches {
        for v in &p.pixels {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let bin = dir.join(format!("{name}.bin"));
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let labels: Vec<u8> = patches.iter().map(|p| p.label.index() as u8).collect();
    let lab = dir.join(format!("{name}.labels"));
    fs::write(&lab, labels).map_err(|e| Error::io(&lab, e))
}

fn read_split(dir: &Path, name: &str, meta: &SplitManifest) -> Result<Vec<Patch>> {
    let bin = dir.join(format!("{name}.bin"));
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let lab = dir.join(format!("{name}.labels"));
    let labels = fs::read(&lab).map_err(|e| Error::io(&lab, e))?;
    let n = meta.patches.len();
    if bytes.len() != n * PATCH_LEN * 4 {
        return Err(Error::PayloadSize {
            expected: n * PATCH_LEN * 4,
            found: bytes.len(),
        });
    }
    if labels.len() != n {
        return Err(Error::PayloadSize {
            expected: n,
            found: labels.len(),
        });
    }
    bytes
        .chunks_exact(PATCH_LEN * 4)
        .zip(&labels)
        .zip(&meta.patches)
        .map(|((chunk, &l), m)| {
            let pixels = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let label = Label::from_index(l as usize).ok_or_else(|| Error::Header {
                path: lab.clone(),
                reason: format!("label byte {l} is neither 0 nor 1"),
            })?;
            Patch::new(pixels, label, m.origin, m.polygon)
        })
        .collect()
}

pub fn save_patchset(set: &PatchSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        patch_size: PATCH,
        channels: CHANNELS,
        seed: set.seed,
        normalization: set.normalization.clone(),
        train: split_manifest(&set.train, &set.train_polygons),
        test: split_manifest(&set.test, &set.test_polygons),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    write_split(dir, "train", &set.train)?;
    write_split(dir, "test", &set.test)
}

pub fn load_patchset(dir: impl AsRef<Path>) -> Result<PatchSet> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.patch_size != PATCH || manifest.channels != CHANNELS {
        return Err(Error::Header {
            path,
            reason: format!(
                "patch shape {}x{}x{} unsupported",
                manifest.patch_size, manifest.patch_size, manifest.channels
            ),
        });
    }
    Ok(PatchSet {
        train: read_split(dir, "train", &manifest.train)?,
        test: read_split(dir, "test", &manifest.test)?,
        seed: manifest.seed,
        train_polygons: manifest.train.polygons,
        test_polygons: manifest.test.polygons,
        normalization: manifest.normalization,
    })
}
