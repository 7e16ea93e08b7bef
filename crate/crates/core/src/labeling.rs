//! Object-level annotations to voxel-wise training labels.
//!
//! A voxel is positive iff it lies within `r_l` of some annotated center.
//! Training samples keep every positive and a seeded uniform subset of the
//! negatives.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::volume::{ball_rows, for_each_in_ball, Coordinate, Dims, Volume3};

/// Default labeling radius in voxels.
pub const DEFAULT_LABEL_RADIUS: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingConfig {
    pub r_l: f64,
    pub border_margin: usize,
    pub negative_ratio: f64,
    pub seed: u64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            r_l: DEFAULT_LABEL_RADIUS,
            border_margin: crate::classifier::PatchSpec::default().receptive_radius(),
            negative_ratio: 1.0,
            seed: 0,
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_l.is_finite() && self.r_l > 0.0) {
            return Err(Error::invalid(format!("r_l must be positive, got {}", self.r_l)));
        }
        if !(self.negative_ratio.is_finite() && self.negative_ratio > 0.0) {
            return Err(Error::invalid(format!(
                "negative_ratio must be positive, got {}",
                self.negative_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    #[serde(flatten)]
    pub position: Coordinate,
    pub label: u8,
}

fn check_radius(r_l: f64) -> Result<()> {
    if r_l.is_finite() && r_l > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("label radius must be positive, got {r_l}")))
    }
}

/// Binary label volume: 1.0 inside the closed ball of radius `r_l` around any
/// point, 0.0 elsewhere.
pub fn make_label_volume(points: &PointSet, dims: Dims, r_l: f64) -> Result<Volume3> {
    check_radius(r_l)?;
    points.check_inside(dims)?;
    let mut labels = Volume3::zeros(dims)?;
    let rows = ball_rows(r_l);
    let data = labels.data_mut();
    for p in points {
        for_each_in_ball(dims, &p.position, &rows, |i| data[i] = 1.0);
    }
    Ok(labels)
}

/// All positive interior voxels followed by `⌊ratio · #positives⌋` interior
/// negatives drawn uniformly without replacement (or all of them, if fewer).
///
/// Negatives are returned in scan order; the draw itself depends only on `seed`.
pub fn sample_balanced(labels: &Volume3, config: &LabelingConfig) -> Result<Vec<LabeledSample>> {
    config.validate()?;
    let dims = labels.dims();
    let m = config.border_margin;
    if 2 * m >= dims.nx || 2 * m >= dims.ny || 2 * m >= dims.nz {
        return Err(Error::invalid(format!(
            "border margin {m} leaves no interior in volume {dims}"
        )));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for z in m..dims.nz - m {
        for y in m..dims.ny - m {
            for x in m..dims.nx - m {
                let c = Coordinate::new(x, y, z);
                match labels.at(&c) {
                    1.0 => positives.push(c),
                    0.0 => negatives.push(c),
                    v => return Err(Error::invalid(format!("label volume is not binary: {v} at {c}"))),
                }
            }
        }
    }
    if positives.is_empty() {
        return Err(Error::invalid(
            "no positive voxels in the margin-shrunk interior; volume is unusable for training",
        ));
    }
    let wanted = (config.negative_ratio * positives.len() as f64).floor() as usize;
    let take = wanted.min(negatives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picked = rand::seq::index::sample(&mut rng, negatives.len(), take).into_vec();
    picked.sort_unstable();

    let mut out = Vec::with_capacity(positives.len() + take);
    out.extend(
        positives
            .into_iter()
            .map(|position| LabeledSample { position, label: 1 }),
    );
    out.extend(picked.into_iter().map(|i| LabeledSample {
        position: negatives[i],
        label: 0,
    }));
    Ok(out)
}

/// Debug export: `[{"x":..,"y":..,"z":..,"label":0|1}, ...]`.
pub fn save_samples(samples: &[LabeledSample], path: &Path) -> Result<()> {
    crate::io::write_json(path, samples)
}
