//! End-to-end experiment: synthesize train/test volumes, train (or use the
//! oracle), predict, detect, and evaluate pooled over the test volumes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{
    oracle_predict, predict_voxelwise, save_model, train_mlp_multi, PatchSpec, TrainConfig, TrainReport,
};
use crate::error::Result;
use crate::eval::{average_precision, operating_point, pr_curve, precision_at_recall, PrCurve};
use crate::io;
use crate::labeling::{make_label_volume, sample_balanced, LabelingConfig};
use crate::points::PointSet;
use crate::postproc::{detect, PostprocConfig};
use crate::synth::{generate, save_synth, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierChoice {
    #[default]
    Mlp,
    /// Paint ground-truth label balls; skips training.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Master seed; per-stage seeds are derived from it.
    pub seed: u64,
    pub n_train_volumes: usize,
    pub n_test_volumes: usize,
    pub classifier: ClassifierChoice,
    pub synth: SynthConfig,
    pub labeling: LabelingConfig,
    pub patch: PatchSpec,
    pub train: TrainConfig,
    pub postproc: PostprocConfig,
    pub r_match: f64,
    /// Recall level at which precision is reported.
    pub report_recall: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train_volumes: 1,
            n_test_volumes: 5,
            classifier: ClassifierChoice::Mlp,
            synth: SynthConfig::default(),
            labeling: LabelingConfig::default(),
            patch: PatchSpec::default(),
            train: TrainConfig::default(),
            postproc: PostprocConfig::default(),
            r_match: crate::eval::DEFAULT_MATCH_RADIUS,
            report_recall: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub classifier: ClassifierChoice,
    pub n_train_volumes: usize,
    pub n_test_volumes: usize,
    pub train: Option<TrainReport>,
    pub n_ground_truth: usize,
    pub n_detections: usize,
    pub average_precision: f64,
    pub report_recall: f64,
    pub precision_at_report_recall: Option<f64>,
    pub precision_at_half: f64,
    pub recall_at_half: f64,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub summary: PipelineSummary,
    pub curve: PrCurve,
    pub detections: Vec<PointSet>,
    pub ground_truth: Vec<PointSet>,
}

/// splitmix64 of `seed` mixed with a stream tag and index.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TRAIN_VOLUME: u64 = 1;
const TEST_VOLUME: u64 = 2;
const SAMPLING: u64 = 3;
const TRAINING: u64 = 4;

pub fn run_pipeline(config: &PipelineConfig, out_dir: Option<&Path>) -> Result<PipelineOutcome> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    }
    let synth_for = |stream, k| SynthConfig {
        seed: derive_seed(config.seed, stream, k as u64),
        ..config.synth.clone()
    };

    let model = match config.classifier {
        ClassifierChoice::Oracle => None,
        ClassifierChoice::Mlp => {
            let mut volumes = Vec::with_capacity(config.n_train_volumes);
            let mut sample_sets = Vec::with_capacity(config.n_train_volumes);
            for k in 0..config.n_train_volumes {
                let sc = synth_for(TRAIN_VOLUME, k);
                let (volume, gt) = generate(&sc)?;
                let labels = make_label_volume(&gt, volume.dims(), config.labeling.r_l)?;
                let lc = LabelingConfig {
                    seed: derive_seed(config.seed, SAMPLING, k as u64),
                    ..config.labeling.clone()
                };
                let samples = sample_balanced(&labels, &lc)?;
                log::info!("train volume {k}: {} samples", samples.len());
                if let Some(dir) = out_dir {
                    save_synth(&dir.join(format!("train_{k}")), &volume, &gt, &sc)?;
                }
                volumes.push(volume);
                sample_sets.push(samples);
            }
            let sets: Vec<_> = volumes
                .iter()
                .zip(&sample_sets)
                .map(|(v, s)| (v, s.as_slice()))
                .collect();
            let tc = TrainConfig {
                seed: derive_seed(config.seed, TRAINING, 0),
                ..config.train.clone()
            };
            let (model, report) = train_mlp_multi(&sets, &config.patch, &tc)?;
            log::info!("final training loss {:.6}", report.final_loss);
            if let Some(dir) = out_dir {
                save_model(&model, &config.patch, &dir.join("model.json"))?;
            }
            Some((model, report))
        }
    };

    let mut detections = Vec::with_capacity(config.n_test_volumes);
    let mut ground_truth = Vec::with_capacity(config.n_test_volumes);
    for k in 0..config.n_test_volumes {
        let sc = synth_for(TEST_VOLUME, k);
        let (volume, gt) = generate(&sc)?;
        let pred = match &model {
            Some((m, _)) => predict_voxelwise(&volume, m, &config.patch)?,
            None => oracle_predict(&gt, volume.dims(), config.labeling.r_l)?,
        };
        let dets = detect(&pred, &config.postproc);
        log::info!("test volume {k}: {} detections, {} ground truth", dets.len(), gt.len());
        if let Some(dir) = out_dir {
            let prefix = dir.join(format!("test_{k}"));
            save_synth(&prefix, &volume, &gt, &sc)?;
            io::save_volume(&pred, &io::with_suffix(&prefix, ".pred.json"))?;
            io::save_points(&dets, &io::with_suffix(&prefix, ".dets.json"))?;
        }
        detections.push(dets);
        ground_truth.push(gt);
    }

    let curve = pr_curve(&detections, &ground_truth, config.r_match)?;
    let half = operating_point(&curve, 0.5);
    let summary = PipelineSummary {
        seed: config.seed,
        classifier: config.classifier,
        n_train_volumes: if model.is_some() { config.n_train_volumes } else { 0 },
        n_test_volumes: config.n_test_volumes,
        train: model.map(|(_, r)| r),
        n_ground_truth: ground_truth.iter().map(PointSet::len).sum(),
        n_detections: detections.iter().map(PointSet::len).sum(),
        average_precision: average_precision(&curve),
        report_recall: config.report_recall,
        precision_at_report_recall: precision_at_recall(&curve, config.report_recall),
        precision_at_half: half.precision,
        recall_at_half: half.recall,
        config: config.clone(),
    };
    if let Some(dir) = out_dir {
        crate::eval::write_pr_csv(&curve, &dir.join("pr.csv"))?;
        crate::eval::write_pr_svg(&curve, &dir.join("pr.svg"))?;
        io::write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(PipelineOutcome {
        summary,
        curve,
        detections,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream_and_index() {
        let a = derive_seed(7, 1, 0);
        assert_ne!(a, derive_seed(7, 2, 0));
        assert_ne!(a, derive_seed(7, 1, 1));
        assert_ne!(a, derive_seed(8, 1, 0));
        assert_eq!(a, derive_seed(7, 1, 0));
    }

    #[test]
    fn oracle_pipeline_is_perfect_on_small_run() {
        let config = PipelineConfig {
            classifier: ClassifierChoice::Oracle,
            n_test_volumes: 2,
            ..Default::default()
        };
        let out = run_pipeline(&config, None).unwrap();
        assert!(out.summary.train.is_none());
        assert_eq!(out.summary.precision_at_half, 1.0);
        assert_eq!(out.summary.recall_at_half, 1.0);
        assert_eq!(out.summary.average_precision, 1.0);
    }
}
