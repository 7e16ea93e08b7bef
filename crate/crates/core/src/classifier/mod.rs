//! Voxel-wise prediction.
//!
//! The learned path extracts raw intensity cubes from a small downsampling
//! pyramid and scores them with a multilayer perceptron. The oracle path paints
//! the ground-truth label balls directly and exists to exercise the downstream
//! stages independently of learning quality.

mod features;
pub mod mlp;
mod train;

pub use features::{extract_features, PatchSpec, Pyramid};
pub use mlp::{load_model, save_model, DenseLayer, FeatureMatrix, Gradients, MlpModel};
pub use train::{train_mlp, train_mlp_multi, train_on_features, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::labeling::make_label_volume;
use crate::par;
use crate::points::PointSet;
use crate::volume::{Dims, Volume3};

/// Anything that turns an image volume into a same-shaped prediction map.
pub trait VoxelClassifier {
    fn predict(&self, volume: &Volume3) -> Result<Volume3>;
}

#[derive(Debug, Clone)]
pub struct MlpClassifier {
    pub model: MlpModel,
    pub spec: PatchSpec,
}

impl VoxelClassifier for MlpClassifier {
    fn predict(&self, volume: &Volume3) -> Result<Volume3> {
        predict_voxelwise(volume, &self.model, &self.spec)
    }
}

/// Ignores image content; predicts the label balls of known ground truth.
#[derive(Debug, Clone)]
pub struct OracleClassifier {
    pub ground_truth: PointSet,
    pub r_l: f64,
}

impl VoxelClassifier for OracleClassifier {
    fn predict(&self, volume: &Volume3) -> Result<Volume3> {
        oracle_predict(&self.ground_truth, volume.dims(), self.r_l)
    }
}

/// Scores every voxel at least `receptive_radius` from all faces; the border
/// band is left at 0.0.
pub fn predict_voxelwise(volume: &Volume3, model: &MlpModel, spec: &PatchSpec) -> Result<Volume3> {
    spec.validate()?;
    if model.input_dim() != spec.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.feature_dim(),
            got: model.input_dim(),
        });
    }
    let dims = volume.dims();
    let rr = spec.receptive_radius();
    if [dims.nx, dims.ny, dims.nz].iter().any(|&n| n < 2 * rr + 1) {
        return Err(Error::invalid(format!(
            "volume {dims} is smaller than the {0}x{0}x{0} receptive field",
            2 * rr + 1
        )));
    }
    let pyramid = Pyramid::new(volume, spec)?;
    let mut out = vec![0.0f32; dims.len()];
    let slab = dims.nx * dims.ny;
    par::for_each_chunk_mut(&mut out, slab, |z, chunk| {
        if z < rr || z >= dims.nz - rr {
            return;
        }
        let mut feats = vec![0.0f32; spec.feature_dim()];
        let mut scratch = model.scratch();
        for y in rr..dims.ny - rr {
            for x in rr..dims.nx - rr {
                pyramid.features_into(x, y, z, &mut feats);
                chunk[x + dims.nx * y] = model.forward_f32(&feats, &mut scratch) as f32;
            }
        }
    });
    Ok(volume.like(out))
}

/// Ground-truth label balls used as a stand-in prediction map.
pub fn oracle_predict(ground_truth: &PointSet, dims: Dims, r_l: f64) -> Result<Volume3> {
    make_label_volume(ground_truth, dims, r_l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Coordinate;

    fn small_spec() -> PatchSpec {
        PatchSpec {
            scales: vec![1, 2],
            patch_radius: 1,
        }
    }

    #[test]
    fn zero_model_predicts_half_inside_zero_on_border() {
        let spec = small_spec();
        let model = MlpModel::zeros(&[spec.feature_dim(), 4, 1]);
        let v = Volume3::from_fn(Dims::new(9, 10, 11), |c| (c.x + c.y * c.z) as f32).unwrap();
        let p = predict_voxelwise(&v, &model, &spec).unwrap();
        assert_eq!(p.dims(), v.dims());
        let rr = spec.receptive_radius();
        for i in 0..p.dims().len() {
            let c = p.dims().coord(i);
            let expected = if p.dims().margin(&c) >= rr { 0.5 } else { 0.0 };
            assert_eq!(p.data()[i], expected, "at {c}");
        }
    }

    #[test]
    fn too_small_volume_is_rejected() {
        let spec = small_spec();
        let model = MlpModel::zeros(&[spec.feature_dim(), 1]);
        let v = Volume3::zeros(Dims::new(4, 9, 9)).unwrap();
        assert!(predict_voxelwise(&v, &model, &spec).is_err());
        let wrong = MlpModel::zeros(&[3, 1]);
        let v = Volume3::zeros(Dims::cube(9)).unwrap();
        assert!(predict_voxelwise(&v, &wrong, &spec).is_err());
    }

    #[test]
    fn prediction_is_pointwise_pure() {
        use rand::{Rng, SeedableRng};
        let spec = small_spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let model = MlpModel::random(&[spec.feature_dim(), 6, 1], &mut rng);
        let v = Volume3::from_fn(Dims::new(10, 9, 12), |_| rng.gen_range(0.0..2.0)).unwrap();
        let p = predict_voxelwise(&v, &model, &spec).unwrap();
        for c in [
            Coordinate::new(2, 2, 2),
            Coordinate::new(7, 6, 9),
            Coordinate::new(5, 4, 6),
        ] {
            let f = extract_features(&v, &c, &spec).unwrap();
            let f64s: Vec<f64> = f.iter().map(|&x| x as f64).collect();
            let single = model.forward(&f64s).unwrap() as f32;
            assert_eq!(p.at(&c).to_bits(), single.to_bits());
        }
    }

    #[test]
    fn oracle_matches_labels() {
        let gt = PointSet::from_positions([Coordinate::new(5, 5, 5)]);
        let dims = Dims::cube(12);
        assert_eq!(
            oracle_predict(&gt, dims, 3.0).unwrap(),
            make_label_volume(&gt, dims, 3.0).unwrap()
        );
        assert_eq!(oracle_predict(&PointSet::default(), dims, 3.0).unwrap().sum(), 0.0);
        let clf = OracleClassifier {
            ground_truth: gt,
            r_l: 3.0,
        };
        assert_eq!(clf.predict(&Volume3::zeros(dims).unwrap()).unwrap().sum(), 123.0);
    }
}
