//! WebAssembly bindings for the browser demo in `www/`.
//!
//! [`SceneCore`] holds all state and logic so it can be tested natively;
//! [`Scene`] is the JavaScript-facing wrapper.

use voxdet::classifier::oracle_predict;
use voxdet::eval::{average_precision, pr_curve, precision_at_recall, PrCurve};
use voxdet::postproc::{average_predictions_with, nms_detect, AveragingWindow, PostprocConfig};
use voxdet::synth::{generate, SynthConfig, MAX_INTENSITY};
use voxdet::{Dims, PointSet, Volume3};
use wasm_bindgen::prelude::*;

/// Which voxelwise map feeds the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Label balls painted around the true centers.
    Oracle,
    /// The image itself, rescaled to [0, 1].
    Intensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Image,
    Prediction,
    Averaged,
}

impl Layer {
    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Layer::Image),
            1 => Some(Layer::Prediction),
            2 => Some(Layer::Averaged),
            _ => None,
        }
    }
}

pub struct SceneCore {
    image: Volume3,
    truth: PointSet,
    r_l: f64,
    prediction: Volume3,
    averaged: Volume3,
    detections: PointSet,
    curve: Option<PrCurve>,
}

impl SceneCore {
    pub fn generate(size: usize, n_objects: usize, noise_std: f64, seed: u64) -> voxdet::Result<Self> {
        let config = SynthConfig {
            dims: Dims::cube(size),
            n_objects,
            background_noise_std: noise_std,
            seed,
            ..SynthConfig::default()
        };
        let (image, truth) = generate(&config)?;
        let r_l = voxdet::labeling::LabelingConfig::default().r_l;
        let prediction = oracle_predict(&truth, image.dims(), r_l)?;
        Ok(Self {
            averaged: prediction.clone(),
            image,
            truth,
            r_l,
            prediction,
            detections: PointSet::default(),
            curve: None,
        })
    }

    pub fn dims(&self) -> Dims {
        self.image.dims()
    }

    pub fn set_source(&mut self, source: Source) -> voxdet::Result<()> {
        self.prediction = match source {
            Source::Oracle => oracle_predict(&self.truth, self.image.dims(), self.r_l)?,
            Source::Intensity => {
                let data = self.image.data().iter().map(|v| v / MAX_INTENSITY).collect();
                Volume3::from_data(self.image.dims(), data)?
            }
        };
        self.averaged = self.prediction.clone();
        self.detections = PointSet::default();
        self.curve = None;
        Ok(())
    }

    /// Averages the current prediction and runs suppression. Returns the
    /// number of detections.
    pub fn detect(&mut self, r_a: f64, r_n: f64, window: AveragingWindow) -> usize {
        let config = PostprocConfig {
            r_a,
            r_n,
            window,
            ..PostprocConfig::default()
        };
        self.averaged = average_predictions_with(&self.prediction, r_a, window);
        self.detections = nms_detect(&self.averaged, &config);
        self.curve = None;
        self.detections.len()
    }

    pub fn evaluate(&mut self, r_match: f64) -> voxdet::Result<&PrCurve> {
        let curve = pr_curve(
            std::slice::from_ref(&self.detections),
            std::slice::from_ref(&self.truth),
            r_match,
        )?;
        Ok(self.curve.insert(curve))
    }

    pub fn curve(&self) -> Option<&PrCurve> {
        self.curve.as_ref()
    }

    pub fn detections(&self) -> &PointSet {
        &self.detections
    }

    pub fn truth(&self) -> &PointSet {
        &self.truth
    }

    pub fn layer(&self, layer: Layer) -> &Volume3 {
        match layer {
            Layer::Image => &self.image,
            Layer::Prediction => &self.prediction,
            Layer::Averaged => &self.averaged,
        }
    }

    /// Grayscale RGBA pixels for slice `z`, scaled so `max` maps to white.
    pub fn slice_rgba(&self, layer: Layer, z: usize) -> Vec<u8> {
        let vol = self.layer(layer);
        let d = vol.dims();
        let z = z.min(d.nz - 1);
        let plane = &vol.data()[d.index(0, 0, z)..d.index(0, 0, z) + d.nx * d.ny];
        let max = vol.data().iter().copied().fold(0.0f32, f32::max);
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        let mut out = Vec::with_capacity(plane.len() * 4);
        for &v in plane {
            let g = (v * scale).round().clamp(0.0, 255.0) as u8;
            out.extend_from_slice(&[g, g, g, 255]);
        }
        out
    }
}

fn flat_points(points: &PointSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() * 4);
    for p in points.iter() {
        let c = p.position;
        out.extend_from_slice(&[c.x as f64, c.y as f64, c.z as f64, p.confidence.map_or(1.0, f64::from)]);
    }
    out
}

fn js_err(e: voxdet::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Scene {
    core: SceneCore,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, n_objects: usize, noise_std: f64, seed: u32) -> Result<Scene, JsError> {
        SceneCore::generate(size, n_objects, noise_std, seed as u64)
            .map(|core| Scene { core })
            .map_err(js_err)
    }

    pub fn size(&self) -> usize {
        self.core.dims().nx
    }

    /// `intensity = false` uses the oracle label map.
    pub fn set_source(&mut self, intensity: bool) -> Result<(), JsError> {
        let source = if intensity { Source::Intensity } else { Source::Oracle };
        self.core.set_source(source).map_err(js_err)
    }

    pub fn detect(&mut self, r_a: f64, r_n: f64, cube: bool) -> usize {
        let window = if cube {
            AveragingWindow::Cube
        } else {
            AveragingWindow::Ball
        };
        self.core.detect(r_a, r_n, window)
    }

    /// Returns `[average precision, precision at recall 0.9 or NaN]`.
    pub fn evaluate(&mut self, r_match: f64) -> Result<Vec<f64>, JsError> {
        let curve = self.core.evaluate(r_match).map_err(js_err)?;
        Ok(vec![
            average_precision(curve),
            precision_at_recall(curve, 0.9).unwrap_or(f64::NAN),
        ])
    }

    /// Flattened `[recall, precision, ...]` pairs of the last evaluation.
    pub fn pr_points(&self) -> Vec<f64> {
        self.core
            .curve()
            .map(|c| c.rows.iter().flat_map(|r| [r.recall, r.precision]).collect())
            .unwrap_or_default()
    }

    /// Flattened `[x, y, z, confidence, ...]`.
    pub fn detections(&self) -> Vec<f64> {
        flat_points(self.core.detections())
    }

    pub fn truth(&self) -> Vec<f64> {
        flat_points(self.core.truth())
    }

    /// Layer 0 = image, 1 = prediction, 2 = averaged.
    pub fn slice_rgba(&self, layer: u32, z: usize) -> Result<Vec<u8>, JsError> {
        let layer = Layer::from_code(layer).ok_or_else(|| JsError::new("unknown layer"))?;
        Ok(self.core.slice_rgba(layer, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_scene_is_found_exactly() {
        let mut s = SceneCore::generate(64, 6, 0.25, 3).unwrap();
        assert_eq!(s.detect(7.0, 21.0, AveragingWindow::Ball), 6);
        let curve = s.evaluate(30.0).unwrap();
        assert_eq!(average_precision(curve), 1.0);
    }

    #[test]
    fn intensity_source_stays_in_unit_range() {
        let mut s = SceneCore::generate(48, 3, 0.25, 1).unwrap();
        s.set_source(Source::Intensity).unwrap();
        assert!(s
            .layer(Layer::Prediction)
            .data()
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
        assert!(s.detect(3.0, 21.0, AveragingWindow::Cube) > 0);
        assert!(s.evaluate(30.0).unwrap().rows.len() > 1);
    }

    #[test]
    fn slice_has_one_pixel_per_voxel() {
        let s = SceneCore::generate(32, 1, 0.25, 0).unwrap();
        let px = s.slice_rgba(Layer::Image, 100);
        assert_eq!(px.len(), 32 * 32 * 4);
        assert!(px.chunks(4).all(|p| p[3] == 255));
    }

    #[test]
    fn flat_points_layout() {
        let s = SceneCore::generate(32, 1, 0.0, 0).unwrap();
        let flat = flat_points(s.truth());
        assert_eq!(flat.len(), 4);
        assert_eq!(flat[3], 1.0);
    }
}
