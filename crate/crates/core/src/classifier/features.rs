use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{downsample_avg, Coordinate, Volume3};

/// Multi-scale cube layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    /// Downsampling factors, strictly increasing, starting at 1.
    pub scales: Vec<usize>,
    /// Cube half-width at every scale.
    pub patch_radius: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            scales: vec![1, 2, 4],
            patch_radius: 2,
        }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scales.first() != Some(&1) {
            return Err(Error::invalid("patch scales must start at 1"));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "patch scales must be strictly increasing, got {:?}",
                self.scales
            )));
        }
        if self.patch_radius == 0 {
            return Err(Error::invalid("patch radius must be positive"));
        }
        Ok(())
    }

    pub fn receptive_radius(&self) -> usize {
        self.scales.iter().copied().max().unwrap_or(1) * self.patch_radius
    }

    pub fn cube_len(&self) -> usize {
        (2 * self.patch_radius + 1).pow(3)
    }

    pub fn feature_dim(&self) -> usize {
        self.scales.len() * self.cube_len()
    }
}

/// Downsampled copies of one volume, built once and shared by every lookup.
#[derive(Debug, Clone)]
pub struct Pyramid {
    spec: PatchSpec,
    levels: Vec<Volume3>,
}

impl Pyramid {
    pub fn new(volume: &Volume3, spec: &PatchSpec) -> Result<Self> {
        spec.validate()?;
        let levels = spec
            .scales
            .iter()
            .map(|&s| downsample_avg(volume, s))
            .collect::<Result<_>>()?;
        Ok(Self {
            spec: spec.clone(),
            levels,
        })
    }

    pub fn spec(&self) -> &PatchSpec {
        &self.spec
    }

    /// Writes the feature vector for `(x, y, z)`; the caller guarantees the
    /// position is at least `receptive_radius` from every face.
    pub fn features_into(&self, x: usize, y: usize, z: usize, out: &mut [f32]) {
        let r = self.spec.patch_radius;
        let mut k = 0;
        for (level, &s) in self.levels.iter().zip(&self.spec.scales) {
            let dims = level.dims();
            let data = level.data();
            let (cx, cy, cz) = (x / s, y / s, z / s);
            for zz in cz - r..=cz + r {
                for yy in cy - r..=cy + r {
                    let row = dims.index(cx - r, yy, zz);
                    let n = 2 * r + 1;
                    out[k..k + n].copy_from_slice(&data[row..row + n]);
                    k += n;
                }
            }
        }
        debug_assert_eq!(k, out.len());
    }

    pub fn features(&self, position: &Coordinate) -> Result<Vec<f32>> {
        let dims = self.levels[0].dims();
        let rr = self.spec.receptive_radius();
        if !dims.contains(position) || dims.margin(position) < rr {
            return Err(Error::invalid(format!(
                "position {position} is closer than {rr} voxels to the border of {dims}"
            )));
        }
        let mut out = vec![0.0; self.spec.feature_dim()];
        self.features_into(position.x, position.y, position.z, &mut out);
        Ok(out)
    }
}

/// Concatenated raw-intensity cubes around `position`, one per scale, each in
/// x-fastest order. Builds a fresh pyramid; use [`Pyramid`] for many lookups.
pub fn extract_features(volume: &Volume3, position: &Coordinate, spec: &PatchSpec) -> Result<Vec<f32>> {
    Pyramid::new(volume, spec)?.features(position)
}
