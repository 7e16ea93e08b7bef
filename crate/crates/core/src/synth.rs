//! Seeded synthetic volumes: anisotropic Gaussian blobs in Gaussian noise,
//! with the blob centers as ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::points::PointSet;
use crate::volume::{euclidean_distance, Coordinate, Dims, Volume3};

/// Extra stretch applied to one randomly chosen axis of each blob.
pub const ELONGATION: f64 = 1.8;
pub const MAX_INTENSITY: f32 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dims: Dims,
    pub n_objects: usize,
    pub object_radius_voxels: f64,
    pub object_intensity: f64,
    pub background_noise_std: f64,
    /// Minimum center-to-center distance. Must exceed the suppression radius
    /// used downstream for every object to survive suppression.
    pub min_separation: f64,
    /// Minimum distance (in voxel steps) from any center to any face.
    pub border_clearance: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let object_radius = 3.0;
        Self {
            dims: Dims::cube(64),
            n_objects: 6,
            object_radius_voxels: object_radius,
            object_intensity: 1.0,
            background_noise_std: 0.25,
            min_separation: 24.0,
            border_clearance: crate::classifier::PatchSpec::default().receptive_radius() + object_radius as usize,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if !(self.object_radius_voxels > 0.0 && self.object_radius_voxels.is_finite()) {
            return Err(Error::invalid("object radius must be positive"));
        }
        if !(self.background_noise_std >= 0.0 && self.background_noise_std.is_finite()) {
            return Err(Error::invalid("noise std must be non-negative"));
        }
        if !self.object_intensity.is_finite() {
            return Err(Error::invalid("object intensity must be finite"));
        }
        if self.min_separation.is_nan() || self.min_separation <= 2.0 * self.object_radius_voxels {
            return Err(Error::invalid(format!(
                "min_separation {} must exceed twice the object radius {}",
                self.min_separation, self.object_radius_voxels
            )));
        }
        let b = self.border_clearance;
        if self.n_objects > 0 && [self.dims.nx, self.dims.ny, self.dims.nz].iter().any(|&n| 2 * b >= n) {
            return Err(Error::Infeasible(format!(
                "border clearance {b} leaves no room inside {}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn max_attempts(&self) -> usize {
        10 * self.n_objects * 100
    }
}

fn place_centers(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Coordinate>> {
    let b = config.border_clearance;
    let d = config.dims;
    let mut centers: Vec<Coordinate> = Vec::with_capacity(config.n_objects);
    let mut attempts = 0;
    while centers.len() < config.n_objects {
        if attempts >= config.max_attempts() {
            return Err(Error::Infeasible(format!(
                "placed only {} of {} objects with separation {} in {} after {attempts} attempts",
                centers.len(),
                config.n_objects,
                config.min_separation,
                d
            )));
        }
        attempts += 1;
        let c = Coordinate::new(
            rng.gen_range(b..d.nx - b),
            rng.gen_range(b..d.ny - b),
            rng.gen_range(b..d.nz - b),
        );
        if centers
            .iter()
            .all(|o| euclidean_distance(o, &c) >= config.min_separation)
        {
            centers.push(c);
        }
    }
    Ok(centers)
}

/// Adds one blob with per-axis standard deviations `sigma`.
fn render_blob(data: &mut [f64], dims: Dims, center: &Coordinate, sigma: [f64; 3], amplitude: f64) {
    let reach = |s: f64| (4.0 * s).ceil() as i64;
    let c = [center.x as i64, center.y as i64, center.z as i64];
    let n = [dims.nx as i64, dims.ny as i64, dims.nz as i64];
    let lo = |k: usize| (c[k] - reach(sigma[k])).max(0);
    let hi = |k: usize| (c[k] + reach(sigma[k])).min(n[k] - 1);
    for z in lo(2)..=hi(2) {
        let tz = ((z - c[2]) as f64 / sigma[2]).powi(2);
        for y in lo(1)..=hi(1) {
            let ty = ((y - c[1]) as f64 / sigma[1]).powi(2);
            for x in lo(0)..=hi(0) {
                let tx = ((x - c[0]) as f64 / sigma[0]).powi(2);
                data[dims.index(x as usize, y as usize, z as usize)] += amplitude * (-0.5 * (tx + ty + tz)).exp();
            }
        }
    }
}

/// Image volume and ground-truth centers. Deterministic in `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<(Volume3, PointSet)> {
    config.validate()?;
    let dims = config.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers = place_centers(config, &mut rng)?;

    let mut acc = vec![0.0f64; dims.len()];
    let base = config.object_radius_voxels / 2.0;
    for c in &centers {
        let mut sigma = [base; 3];
        sigma[rng.gen_range(0..3)] *= ELONGATION;
        render_blob(&mut acc, dims, c, sigma, config.object_intensity);
    }
    if config.background_noise_std > 0.0 {
        let noise = Normal::new(0.0, config.background_noise_std)
            .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
        for v in &mut acc {
            *v += noise.sample(&mut rng);
        }
    }
    let data = acc.into_iter().map(|v| (v as f32).clamp(0.0, MAX_INTENSITY)).collect();
    Ok((Volume3::from_data(dims, data)?, PointSet::from_positions(centers)))
}

/// Writes `<prefix>.json/.raw`, `<prefix>.gt.json` and `<prefix>.synth.json`.
pub fn save_synth(prefix: &Path, volume: &Volume3, points: &PointSet, config: &SynthConfig) -> Result<()> {
    io::save_volume(volume, &io::volume_header_path(prefix))?;
    io::save_points(points, &io::with_suffix(prefix, ".gt.json"))?;
    io::write_json(&io::with_suffix(prefix, ".synth.json"), config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_objects_gives_pure_noise() {
        let cfg = SynthConfig {
            n_objects: 0,
            dims: Dims::cube(16),
            ..Default::default()
        };
        let (v, p) = generate(&cfg).unwrap();
        assert!(p.is_empty());
        assert!(v.mean() > 0.0 && v.mean() < 0.2);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let cfg = SynthConfig {
            seed: 17,
            ..Default::default()
        };
        let (a, pa) = generate(&cfg).unwrap();
        let (b, pb) = generate(&cfg).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(pa, pb);
        let (c, _) = generate(&SynthConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn default_layout_respects_separation_and_clearance() {
        for seed in 0..10 {
            let cfg = SynthConfig {
                seed,
                ..Default::default()
            };
            let (_, pts) = generate(&cfg).unwrap();
            assert_eq!(pts.len(), cfg.n_objects);
            let ps: Vec<_> = pts.positions().collect();
            for (i, a) in ps.iter().enumerate() {
                assert!(cfg.dims.margin(a) >= cfg.border_clearance);
                for b in &ps[i + 1..] {
                    assert!(euclidean_distance(a, b) >= cfg.min_separation);
                }
            }
        }
    }

    #[test]
    fn noiseless_single_object_peaks_at_center() {
        for seed in 0..5 {
            let cfg = SynthConfig {
                n_objects: 1,
                background_noise_std: 0.0,
                seed,
                ..Default::default()
            };
            let (v, pts) = generate(&cfg).unwrap();
            let (imax, _) = v
                .data()
                .iter()
                .enumerate()
                .fold((0, f32::MIN), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
            let peak = v.dims().coord(imax);
            assert!(euclidean_distance(&peak, &pts.points[0].position) <= 1.0);
        }
    }

    #[test]
    fn objects_stand_out_from_background() {
        let cfg = SynthConfig::default();
        let (v, pts) = generate(&cfg).unwrap();
        let inside = crate::labeling::make_label_volume(&pts, cfg.dims, cfg.object_radius_voxels).unwrap();
        let (mut s, mut n) = (0.0, 0.0);
        for (x, l) in v.data().iter().zip(inside.data()) {
            if *l == 1.0 {
                s += *x as f64;
                n += 1.0;
            }
        }
        let contrast = s / n - v.mean();
        // About 1.3 noise std at the default settings.
        assert!(contrast > cfg.background_noise_std, "contrast {contrast}");
    }

    #[test]
    fn infeasible_configs() {
        let crowded = SynthConfig {
            n_objects: 200,
            ..Default::default()
        };
        assert!(matches!(generate(&crowded), Err(Error::Infeasible(_))));
        let tight = SynthConfig {
            min_separation: 5.0,
            ..Default::default()
        };
        assert!(matches!(generate(&tight), Err(Error::Invalid(_))));
        let small = SynthConfig {
            dims: Dims::cube(20),
            ..Default::default()
        };
        assert!(matches!(generate(&small), Err(Error::Infeasible(_))));
    }

    #[test]
    fn files_written() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("s");
        let cfg = SynthConfig {
            dims: Dims::cube(32),
            n_objects: 1,
            ..Default::default()
        };
        let (v, p) = generate(&cfg).unwrap();
        save_synth(&prefix, &v, &p, &cfg).unwrap();
        assert_eq!(io::load_volume(&dir.path().join("s.json")).unwrap(), v);
        assert_eq!(io::load_points(&dir.path().join("s.gt.json")).unwrap(), p);
        assert!(dir.path().join("s.synth.json").exists());
    }
}
