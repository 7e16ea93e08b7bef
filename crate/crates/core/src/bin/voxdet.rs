use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use voxdet::classifier::{load_model, predict_voxelwise, save_model, train_mlp, PatchSpec, TrainConfig};
use voxdet::eval::{average_precision, pr_curve, precision_at_recall, write_pr_csv, write_pr_svg};
use voxdet::io::{load_points, load_volume, save_points, save_volume, volume_header_path, with_json};
use voxdet::labeling::{make_label_volume, sample_balanced, save_samples, LabelingConfig};
use voxdet::pipeline::{run_pipeline, ClassifierChoice, PipelineConfig};
use voxdet::postproc::{detect, AveragingWindow, PostprocConfig};
use voxdet::synth::{generate, save_synth, SynthConfig};
use voxdet::{Dims, Error, Result};

/// Volumetric point-object detection: labels, training, inference,
/// averaging + non-maximum suppression, and precision/recall evaluation.
#[derive(Parser)]
#[command(name = "voxdet", version)]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print the resolved configuration as JSON before running.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic volume and its ground-truth centers.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        /// Writes <prefix>.json/.raw, <prefix>.gt.json and <prefix>.synth.json.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Paint the binary label volume for a set of centers.
    Labels {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 7.0)]
        r_l: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label, sample and train the voxel classifier on one annotated volume.
    Train {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        labeling: LabelArgs,
        #[command(flatten)]
        patch: PatchArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out_model: PathBuf,
        /// Also write the drawn samples as JSON.
        #[arg(long)]
        samples_out: Option<PathBuf>,
    },
    /// Run a trained model over every voxel.
    Infer {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average a prediction volume and extract ranked detections.
    Detect {
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        postproc: PostprocArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pooled precision/recall over paired detection and ground-truth files.
    Eval {
        /// Detection file; repeat once per volume.
        #[arg(long = "dets", required = true)]
        dets: Vec<PathBuf>,
        /// Ground-truth file; repeat in the same order as --dets.
        #[arg(long = "gt", required = true)]
        gt: Vec<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        r_match: f64,
        #[arg(long, default_value_t = 0.9)]
        report_recall: f64,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_svg: Option<PathBuf>,
    },
    /// Synthesize, train, detect and evaluate end to end.
    Pipeline {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n_train_volumes: usize,
        #[arg(long, default_value_t = 5)]
        n_test_volumes: usize,
        #[arg(long, value_enum, default_value_t = ClassifierArg::Mlp)]
        classifier: ClassifierArg,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        labeling: LabelArgs,
        #[command(flatten)]
        patch: PatchArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        postproc: PostprocArgs,
        #[arg(long, default_value_t = 30.0)]
        r_match: f64,
        #[arg(long, default_value_t = 0.9)]
        report_recall: f64,
        /// Directory for every intermediate file and summary.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierArg {
    Mlp,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Ball,
    Cube,
}

#[derive(Args)]
struct SynthArgs {
    /// Volume extent along x, y and z.
    #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"], default_values_t = [64, 64, 64])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = SynthConfig::default().n_objects)]
    n_objects: usize,
    #[arg(long, default_value_t = SynthConfig::default().object_radius_voxels)]
    object_radius: f64,
    #[arg(long, default_value_t = SynthConfig::default().object_intensity)]
    object_intensity: f64,
    #[arg(long, default_value_t = SynthConfig::default().background_noise_std)]
    noise_std: f64,
    #[arg(long, default_value_t = SynthConfig::default().min_separation)]
    min_separation: f64,
    #[arg(long, default_value_t = SynthConfig::default().border_clearance)]
    border_clearance: usize,
    #[arg(long = "synth-seed", default_value_t = 0)]
    synth_seed: u64,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            dims: Dims::new(self.dims[0], self.dims[1], self.dims[2]),
            n_objects: self.n_objects,
            object_radius_voxels: self.object_radius,
            object_intensity: self.object_intensity,
            background_noise_std: self.noise_std,
            min_separation: self.min_separation,
            border_clearance: self.border_clearance,
            seed: self.synth_seed,
        }
    }
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long, default_value_t = 7.0)]
    r_l: f64,
    /// Defaults to the classifier's receptive radius.
    #[arg(long)]
    border_margin: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    negative_ratio: f64,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
}

impl LabelArgs {
    fn config(&self, patch: &PatchSpec) -> LabelingConfig {
        LabelingConfig {
            r_l: self.r_l,
            border_margin: self.border_margin.unwrap_or_else(|| patch.receptive_radius()),
            negative_ratio: self.negative_ratio,
            seed: self.sample_seed,
        }
    }
}

#[derive(Args)]
struct PatchArgs {
    /// Downsampling factors, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    scales: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    patch_radius: usize,
}

impl PatchArgs {
    fn spec(&self) -> PatchSpec {
        PatchSpec {
            scales: self.scales.clone(),
            patch_radius: self.patch_radius,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Hidden layer widths, comma separated (empty for logistic regression).
    #[arg(long, value_delimiter = ',', default_value = "64")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long = "train-seed", default_value_t = 0)]
    train_seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            hidden_sizes: self.hidden.clone(),
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            minibatch_size: self.batch_size,
            seed: self.train_seed,
            l2_penalty: self.l2,
        }
    }
}

#[derive(Args)]
struct PostprocArgs {
    #[arg(long, default_value_t = 7.0)]
    r_a: f64,
    #[arg(long, default_value_t = 21.0)]
    r_n: f64,
    /// Stop suppression once the best remaining value is at or below this.
    #[arg(long, default_value_t = 1e-6)]
    floor: f32,
    #[arg(long)]
    max_detections: Option<usize>,
    #[arg(long, value_enum, default_value_t = WindowArg::Ball)]
    window: WindowArg,
}

impl PostprocArgs {
    fn config(&self) -> Result<PostprocConfig> {
        if !(0.0..1.0).contains(&self.floor) {
            return Err(Error::Invalid(format!("--floor must be in [0, 1), got {}", self.floor)));
        }
        if !(self.r_a >= 0.0 && self.r_n >= 0.0) {
            return Err(Error::Invalid("radii must be non-negative".into()));
        }
        Ok(PostprocConfig {
            r_a: self.r_a,
            r_n: self.r_n,
            confidence_floor: self.floor,
            max_detections: self.max_detections,
            window: match self.window {
                WindowArg::Ball => AveragingWindow::Ball,
                WindowArg::Cube => AveragingWindow::Cube,
            },
        })
    }
}

fn dump<T: Serialize>(enabled: bool, value: &T) {
    if enabled {
        println!("{}", serde_json::to_string_pretty(value).expect("config serializes"));
    }
}

fn run(cli: Cli) -> Result<()> {
    let dump_config = cli.dump_config;
    match cli.command {
        Command::Synth { synth, out_prefix } => {
            let config = synth.config();
            dump(dump_config, &config);
            let (volume, points) = generate(&config)?;
            save_synth(&out_prefix, &volume, &points, &config)?;
            eprintln!(
                "wrote {} objects to {}",
                points.len(),
                volume_header_path(&out_prefix).display()
            );
        }
        Command::Labels {
            volume,
            points,
            r_l,
            out,
        } => {
            dump(dump_config, &serde_json::json!({ "r_l": r_l }));
            let v = load_volume(&volume)?;
            let p = load_points(&points)?;
            let labels = make_label_volume(&p, v.dims(), r_l)?;
            save_volume(&labels, &with_json(&out))?;
            eprintln!("{} positive voxels", labels.sum());
        }
        Command::Train {
            volume,
            points,
            labeling,
            patch,
            train,
            out_model,
            samples_out,
        } => {
            let spec = patch.spec();
            spec.validate()?;
            let lc = labeling.config(&spec);
            let tc = train.config();
            dump(
                dump_config,
                &serde_json::json!({ "labeling": lc, "patch": spec, "train": tc }),
            );
            let v = load_volume(&volume)?;
            let p = load_points(&points)?;
            let labels = make_label_volume(&p, v.dims(), lc.r_l)?;
            let samples = sample_balanced(&labels, &lc)?;
            if let Some(path) = samples_out {
                save_samples(&samples, &path)?;
            }
            let (model, report) = train_mlp(&samples, &v, &spec, &tc)?;
            save_model(&model, &spec, &out_model)?;
            println!(
                "samples: {} positive, {} negative; final training loss {:.6}",
                report.n_positive, report.n_negative, report.final_loss
            );
        }
        Command::Infer { volume, model, out } => {
            let v = load_volume(&volume)?;
            let (m, spec) = load_model(&model)?;
            dump(
                dump_config,
                &serde_json::json!({ "patch": spec, "layer_sizes": m.layer_sizes() }),
            );
            let pred = predict_voxelwise(&v, &m, &spec)?;
            save_volume(&pred, &with_json(&out))?;
        }
        Command::Detect { pred, postproc, out } => {
            let config = postproc.config()?;
            dump(dump_config, &config);
            let p = load_volume(&pred)?;
            let dets = detect(&p, &config);
            save_points(&dets, &out)?;
            eprintln!("{} detections", dets.len());
        }
        Command::Eval {
            dets,
            gt,
            r_match,
            report_recall,
            out_csv,
            out_svg,
        } => {
            dump(
                dump_config,
                &serde_json::json!({ "r_match": r_match, "report_recall": report_recall }),
            );
            if dets.len() != gt.len() {
                return Err(Error::Invalid(format!(
                    "{} --dets files but {} --gt files",
                    dets.len(),
                    gt.len()
                )));
            }
            let d = dets.iter().map(|p| load_points(p)).collect::<Result<Vec<_>>>()?;
            let g = gt.iter().map(|p| load_points(p)).collect::<Result<Vec<_>>>()?;
            let curve = pr_curve(&d, &g, r_match)?;
            write_pr_csv(&curve, &out_csv)?;
            if let Some(svg) = out_svg {
                write_pr_svg(&curve, &svg)?;
            }
            println!("average precision: {}", average_precision(&curve));
            match precision_at_recall(&curve, report_recall) {
                Some(p) => println!("precision at recall {report_recall}: {p}"),
                None => println!("precision at recall {report_recall}: not reached"),
            }
        }
        Command::Pipeline {
            seed,
            n_train_volumes,
            n_test_volumes,
            classifier,
            synth,
            labeling,
            patch,
            train,
            postproc,
            r_match,
            report_recall,
            out_dir,
        } => {
            let spec = patch.spec();
            spec.validate()?;
            let config = PipelineConfig {
                seed,
                n_train_volumes,
                n_test_volumes,
                classifier: match classifier {
                    ClassifierArg::Mlp => ClassifierChoice::Mlp,
                    ClassifierArg::Oracle => ClassifierChoice::Oracle,
                },
                synth: synth.config(),
                labeling: labeling.config(&spec),
                patch: spec,
                train: train.config(),
                postproc: postproc.config()?,
                r_match,
                report_recall,
            };
            dump(dump_config, &config);
            let outcome = run_pipeline(&config, Some(&out_dir))?;
            let s = &outcome.summary;
            println!("average precision: {}", s.average_precision);
            match s.precision_at_report_recall {
                Some(p) => println!("precision at recall {}: {p}", s.report_recall),
                None => println!("precision at recall {}: not reached", s.report_recall),
            }
            println!("summary: {}", out_dir.join("summary.json").display());
        }
    }
    Ok(())
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads(cli.threads).and_then(|_| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
