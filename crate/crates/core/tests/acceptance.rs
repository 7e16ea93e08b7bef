//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxdet::classifier::{oracle_predict, FeatureMatrix, MlpModel};
use voxdet::eval::{match_detections, pr_curve};
use voxdet::labeling::make_label_volume;
use voxdet::pipeline::{run_pipeline, ClassifierChoice, PipelineConfig};
use voxdet::postproc::{average_predictions, detect, nms_detect, threshold_detections, PostprocConfig};
use voxdet::synth::{generate, SynthConfig};
use voxdet::{Coordinate, Dims, Point, PointSet, Volume3};

use common::*;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn labels_match_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let d = Dims::new(rng.gen_range(1..=20), rng.gen_range(1..=20), rng.gen_range(1..=20));
        let n = rng.gen_range(0..=5);
        let pts = PointSet::from_positions((0..n).map(|_| random_coord(&mut rng, d)));
        let r = rng.gen_range(1..=5) as f64;
        let got = make_label_volume(&pts, d, r).map_err(|e| e.to_string())?;
        check(got.data() == brute_labels(&pts, d, r).as_slice(), || {
            format!("instance {case}: {d}, {n} points, r_l {r}")
        })?;
    }
    Ok("200 instances identical".into())
}

fn ball_count() -> Outcome {
    let d = Dims::cube(9);
    let pts = PointSet::from_positions([Coordinate::new(4, 4, 4)]);
    let got = make_label_volume(&pts, d, 2.0).map_err(|e| e.to_string())?;
    let positives = got.data().iter().filter(|&&v| v == 1.0).count();
    let mut enumerated = 0;
    for dz in -2i64..=2 {
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                if dx * dx + dy * dy + dz * dz <= 4 {
                    enumerated += 1;
                }
            }
        }
    }
    check(positives == 33 && enumerated == 33, || {
        format!("{positives} positives, enumeration {enumerated}")
    })?;
    Ok("33 voxels".into())
}

fn averaging_matches_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let radii = [1.0, 2.0, 3.0, 7.0];
    let mut worst = 0.0f64;
    for case in 0..50 {
        let v = random_volume(&mut rng, Dims::cube(16));
        let r = radii[case % radii.len()];
        let got = average_predictions(&v, r);
        let want = brute_ball_mean(&v, r);
        for (g, w) in got.data().iter().zip(&want) {
            worst = worst.max((*g as f64 - w).abs());
        }
    }
    check(worst <= 1e-5, || format!("max abs error {worst:e}"))?;
    Ok(format!("max abs error {worst:.2e}"))
}

fn nms_matches_rescan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let radii = [2.0, 4.0, 8.0];
    let mut total = 0;
    for case in 0..100 {
        let d = Dims::cube(24);
        // every other volume is coarsely quantized so ties are common
        let v = if case % 2 == 0 {
            random_volume(&mut rng, d)
        } else {
            Volume3::from_fn(d, |_| rng.gen_range(0..5) as f32 / 4.0).unwrap()
        };
        let config = PostprocConfig {
            r_n: radii[case % radii.len()],
            ..Default::default()
        };
        let got: Vec<_> = nms_detect(&v, &config)
            .iter()
            .map(|p| (p.position, p.confidence.unwrap()))
            .collect();
        let want = rescan_nms(&v, config.r_n, config.confidence_floor);
        check(got == want, || {
            format!(
                "volume {case} r_n {}: {} vs {} detections",
                config.r_n,
                got.len(),
                want.len()
            )
        })?;
        total += got.len();
    }
    Ok(format!("100 volumes, {total} detections identical"))
}

/// Weights then bias of layer `li`, flattened as in `Gradients::flatten`.
fn param_mut(m: &mut MlpModel, li: usize, pi: usize) -> &mut f64 {
    let l = &mut m.layers[li];
    let nw = l.weights.len();
    if pi < nw {
        &mut l.weights[pi]
    } else {
        &mut l.bias[pi - nw]
    }
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for case in 0..20 {
        let mut sizes = vec![rng.gen_range(2..8)];
        sizes.extend((0..rng.gen_range(1..3)).map(|_| rng.gen_range(2..8)));
        sizes.push(1);
        let mut model = MlpModel::random(&sizes, &mut rng);
        for l in &mut model.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
        let n = rng.gen_range(1..10);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..sizes[0]).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let batch = FeatureMatrix::from_rows(&rows);
        let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let l2 = if case % 2 == 0 { 0.0 } else { 1e-2 };

        let (_, grads) = model.loss_and_gradient(&batch, &labels, l2);
        let analytic = grads.flatten();
        let mut k = 0;
        for li in 0..model.layers.len() {
            let nw = model.layers[li].weights.len();
            for pi in 0..nw + model.layers[li].bias.len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                *param_mut(&mut plus, li, pi) += eps;
                *param_mut(&mut minus, li, pi) -= eps;
                let numeric = (plus.loss(&batch, &labels, l2) - minus.loss(&batch, &labels, l2)) / (2.0 * eps);
                let a = analytic[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                k += 1;
            }
        }
    }
    check(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn oracle_end_to_end() -> Outcome {
    let post = PostprocConfig {
        r_a: 7.0,
        r_n: 21.0,
        ..Default::default()
    };
    let (mut tp, mut fp, mut gt_total) = (0, 0, 0);
    for seed in 0..5 {
        let (vol, gt) = generate(&SynthConfig {
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let pred = oracle_predict(&gt, vol.dims(), 7.0).map_err(|e| e.to_string())?;
        let dets = threshold_detections(&detect(&pred, &post), 0.5);
        let m = match_detections(&dets, &gt, 30.0).map_err(|e| e.to_string())?;
        tp += m.tp.len();
        fp += m.fp.len();
        gt_total += gt.len();
    }
    check(fp == 0 && tp == gt_total, || {
        format!("tp {tp}, fp {fp}, ground truth {gt_total}")
    })?;
    Ok(format!("precision 1, recall 1 over {gt_total} objects"))
}

fn learned_end_to_end(dir: &Path) -> Outcome {
    let out = run_pipeline(&PipelineConfig::default(), Some(dir)).map_err(|e| e.to_string())?;
    let s = &out.summary;
    let ap = s.average_precision;
    let p = s.precision_at_report_recall.unwrap_or(0.0);
    let msg = format!("AP {ap:.4}, precision at recall 0.9 {p:.4}");
    check(ap >= 0.90 && p >= 0.90, || msg.clone())?;
    Ok(msg)
}

fn accounting_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let box_ = Dims::cube(40);
    for case in 0..1000 {
        let nd = rng.gen_range(0..=6);
        let ng = rng.gen_range(0..=6);
        let mut conf: Vec<f32> = (0..nd).map(|_| rng.gen_range(0..6) as f32 / 5.0).collect();
        conf.sort_by(|a, b| b.total_cmp(a));
        let dets = PointSet::new(
            conf.iter()
                .map(|&c| Point::detection(random_coord(&mut rng, box_), c))
                .collect(),
        );
        let gt = PointSet::from_positions((0..ng).map(|_| random_coord(&mut rng, box_)));
        let r = rng.gen_range(1.0..30.0);
        let curve = pr_curve(std::slice::from_ref(&dets), std::slice::from_ref(&gt), r).map_err(|e| e.to_string())?;
        let fail = |what: &str| format!("instance {case}: {what}");
        let mut prev_recall = -1.0;
        for row in &curve.rows {
            let above = conf.iter().filter(|&&c| c as f64 >= row.threshold).count();
            check(row.tp + row.fn_ == ng, || fail("tp + fn != |gt|"))?;
            check(row.tp + row.fp == above, || {
                fail("tp + fp != detections at or above threshold")
            })?;
            check(row.recall >= prev_recall, || fail("recall increases with threshold"))?;
            prev_recall = row.recall;
            let m = match_detections(&threshold_detections(&dets, row.threshold), &gt, r).map_err(|e| e.to_string())?;
            check(m.tp.len() == row.tp, || {
                fail("row disagrees with matching at its threshold")
            })?;
        }
        let m = match_detections(&dets, &gt, r).map_err(|e| e.to_string())?;
        let dp: Vec<_> = dets.positions().collect();
        let gp: Vec<_> = gt.positions().collect();
        check(m.tp.len() <= optimal_tp(&dp, &gp, r), || {
            fail("greedy beats exhaustive optimum")
        })?;
    }
    Ok("1000 instances".into())
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_voxdet"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("voxdet {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism(learned: &Path, tmp: &Path) -> Outcome {
    let oracle = PipelineConfig {
        classifier: ClassifierChoice::Oracle,
        ..Default::default()
    };
    let (a, b) = (tmp.join("oracle_a"), tmp.join("oracle_b"));
    run_pipeline(&oracle, Some(&a)).map_err(|e| e.to_string())?;
    run_pipeline(&oracle, Some(&b)).map_err(|e| e.to_string())?;
    let n_oracle = diff_dirs(&a, &b).map_err(|e| format!("oracle rerun: {e}"))?;

    let serial = tmp.join("serial");
    let parallel = tmp.join("parallel");
    run_cli(&[
        "--threads",
        "1",
        "pipeline",
        "--seed",
        "0",
        "--out-dir",
        serial.to_str().unwrap(),
    ])?;
    run_cli(&["pipeline", "--seed", "0", "--out-dir", parallel.to_str().unwrap()])?;
    let n_learned = diff_dirs(learned, &serial).map_err(|e| format!("learned rerun, 1 thread: {e}"))?;
    diff_dirs(learned, &parallel).map_err(|e| format!("learned rerun, parallel: {e}"))?;
    Ok(format!(
        "{n_oracle} oracle files and {n_learned} learned files identical across reruns and thread counts"
    ))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let learned_dir = tmp.path().join("learned");
    let criteria: Vec<Criterion> = vec![
        (
            "label generation matches brute force",
            Box::new(labels_match_brute_force),
        ),
        ("ball of radius 2 has 33 voxels", Box::new(ball_count)),
        (
            "averaging matches brute-force ball mean",
            Box::new(averaging_matches_brute_force),
        ),
        ("suppression matches sequential rescan", Box::new(nms_matches_rescan)),
        ("MLP gradient check", Box::new(gradient_check)),
        ("oracle classifier end to end", Box::new(oracle_end_to_end)),
        (
            "learned pipeline end to end",
            Box::new(|| learned_end_to_end(&learned_dir)),
        ),
        ("evaluation accounting invariants", Box::new(accounting_invariants)),
        ("determinism", Box::new(|| determinism(&learned_dir, tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = run();
        let secs = Duration::as_secs_f64(&t.elapsed());
        match outcome {
            Ok(detail) => println!("PASS  {}. {name}: {detail} ({secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}. {name}: {detail} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
