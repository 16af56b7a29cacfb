use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{read_grid, Grid};

/// Raw input bands a composite can draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceBand {
    #[serde(rename = "VV_before")]
    VvBefore,
    #[serde(rename = "VV_after")]
    VvAfter,
    #[serde(rename = "VH_before")]
    VhBefore,
    #[serde(rename = "VH_after")]
    VhAfter,
    #[serde(rename = "DEM")]
    Dem,
    Slope,
    Red,
    Green,
    Blue,
}

impl SourceBand {
    pub const ALL: [SourceBand; 9] = [
        SourceBand::VvBefore,
        SourceBand::VvAfter,
        SourceBand::VhBefore,
        SourceBand::VhAfter,
        SourceBand::Dem,
        SourceBand::Slope,
        SourceBand::Red,
        SourceBand::Green,
        SourceBand::Blue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SourceBand::VvBefore => "VV_before",
            SourceBand::VvAfter => "VV_after",
            SourceBand::VhBefore => "VH_before",
            SourceBand::VhAfter => "VH_after",
            SourceBand::Dem => "DEM",
            SourceBand::Slope => "Slope",
            SourceBand::Red => "Red",
            SourceBand::Green => "Green",
            SourceBand::Blue => "Blue",
        }
    }
}

impl fmt::Display for SourceBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceBand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SourceBand::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::MissingBand(s.to_string()))
    }
}

/// One output band of a composite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandExpr {
    Source(SourceBand),
    /// `minuend - subtrahend`, pixelwise.
    Difference {
        minuend: SourceBand,
        subtrahend: SourceBand,
    },
}

impl BandExpr {
    pub fn label(&self) -> String {
        match self {
            BandExpr::Source(b) => b.name().to_string(),
            BandExpr::Difference {
                minuend,
                subtrahend,
            } => format!("{minuend}-{subtrahend}"),
        }
    }

    fn sources(&self) -> Vec<SourceBand> {
        match *self {
            BandExpr::Source(b) => vec![b],
            BandExpr::Difference {
                minuend,
                subtrahend,
            } => vec![minuend, subtrahend],
        }
    }
}

/// The nine dataset recipes: one optical, eight SAR-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Recipe {
    Rgb,
    Ssd,
    Sss,
    Bad,
    Bas,
    Hhh,
    Baa,
    Bac,
    Bah,
}

impl Recipe {
    pub const ALL: [Recipe; 9] = [
        Recipe::Rgb,
        Recipe::Ssd,
        Recipe::Sss,
        Recipe::Bad,
        Recipe::Bas,
        Recipe::Hhh,
        Recipe::Baa,
        Recipe::Bac,
        Recipe::Bah,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Rgb => "RGB",
            Recipe::Ssd => "SSD",
            Recipe::Sss => "SSS",
            Recipe::Bad => "BAD",
            Recipe::Bas => "BAS",
            Recipe::Hhh => "HHH",
            Recipe::Baa => "BAA",
            Recipe::Bac => "BAC",
            Recipe::Bah => "BAH",
        }
    }

    pub fn bands(self) -> [BandExpr; 3] {
        use BandExpr::Source as S;
        use SourceBand::*;
        match self {
            Recipe::Rgb => [S(Red), S(Green), S(Blue)],
            Recipe::Ssd => [S(VvAfter), S(VhAfter), S(Dem)],
            Recipe::Sss => [S(VvAfter), S(VhAfter), S(Slope)],
            Recipe::Bad => [S(VvBefore), S(VvAfter), S(Dem)],
            Recipe::Bas => [S(VvBefore), S(VvAfter), S(Slope)],
            Recipe::Hhh => [S(VhBefore), S(VhAfter), S(VhAfter)],
            Recipe::Baa => [S(VvBefore), S(VvAfter), S(VvAfter)],
            Recipe::Bac => [
                S(VvBefore),
                S(VvAfter),
                BandExpr::Difference {
                    minuend: VvAfter,
                    subtrahend: VvBefore,
                },
            ],
            Recipe::Bah => [S(VvBefore), S(VvAfter), S(VhAfter)],
        }
    }

    /// Every source band the recipe reads, deduplicated.
    pub fn required_sources(self) -> Vec<SourceBand> {
        let mut v: Vec<SourceBand> = self.bands().iter().flat_map(|b| b.sources()).collect();
        v.sort();
        v.dedup();
        v
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownRecipe(s.to_string()))
    }
}

/// Named single-band sources keyed by band symbol.
pub type Sources = BTreeMap<SourceBand, Grid>;

/// Splits every band of every grid into the source map, keyed by band name.
/// Bands whose names are not source symbols are ignored.
pub fn sources_from_grids<'a>(grids: impl IntoIterator<Item = &'a Grid>) -> Sources {
    let mut out = Sources::new();
    for g in grids {
        for (b, name) in g.band_names().iter().enumerate() {
            if let Ok(sym) = name.parse::<SourceBand>() {
                out.insert(sym, g.extract_band(b));
            }
        }
    }
    out
}

/// Reads every `.grid` file in `dir` (sorted by name) into a source map.
/// Later files win when two provide the same band.
pub fn read_sources_dir(dir: impl AsRef<Path>) -> Result<Sources> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "grid"))
        .collect();
    paths.sort();
    let grids = paths.iter().map(read_grid).collect::<Result<Vec<_>>>()?;
    Ok(sources_from_grids(&grids))
}

/// `a - b` pixelwise; nodata in either input yields nodata.
pub fn band_difference(a: &Grid, b: &Grid) -> Result<Grid> {
    if a.bands() != 1 || b.bands() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "band_difference needs single-band inputs, got {} and {}",
            a.bands(),
            b.bands()
        )));
    }
    a.check_aligned(b)?;
    let nodata = a.nodata().or(b.nodata());
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            if a.is_nodata(x) || b.is_nodata(y) {
                nodata.expect("a nodata hit implies a sentinel")
            } else {
                x - y
            }
        })
        .collect();
    Grid::new(
        a.width(),
        a.height(),
        1,
        data,
        a.geotransform(),
        nodata,
        vec![format!("{}-{}", a.band_names()[0], b.band_names()[0])],
    )
}

fn evaluate(expr: BandExpr, sources: &Sources) -> Result<Grid> {
    let get = |b: SourceBand| {
        sources
            .get(&b)
            .ok_or_else(|| Error::MissingBand(b.name().to_string()))
    };
    match expr {
        BandExpr::Source(b) => {
            let g = get(b)?;
            if g.bands() != 1 {
                return Err(Error::ShapeMismatch(format!(
                    "source {b} has {} bands",
                    g.bands()
                )));
            }
            Ok(g.clone())
        }
        BandExpr::Difference {
            minuend,
            subtrahend,
        } => band_difference(get(minuend)?, get(subtrahend)?),
    }
}

/// Builds the 3-band composite for `recipe`. Refuses sources that are not co-registered.
pub fn compose(recipe: Recipe, sources: &Sources) -> Result<Grid> {
    let bands = recipe
        .bands()
        .iter()
        .map(|&e| evaluate(e, sources))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Grid> = bands.iter().collect();
    let mut out = Grid::stack(&refs)?;
    out.set_band_names(recipe.bands().iter().map(BandExpr::label).collect())?;
    Ok(out)
}
