//! Command-line driver: scene synthesis, training, prediction, scoring and
//! ablation sweeps.
//!
//! Exit codes: 0 success, 2 bad flags or invalid parameters, 3 I/O or file
//! format failures, 4 training divergence, 5 band mismatch. Diagnostics go
//! to stderr; data only ever goes to files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use polsar::data::format::{load_image, load_labels, save_image, save_labels};
use polsar::data::synth::{synth_scene, SceneModels};
use polsar::data::LabelMap;
use polsar::decomp::Family;
use polsar::error::Error;
use polsar::eval::{
    all_band_subsets, render_boundaries, render_map, run_band_ablation, run_feature_ablation,
    score, write_confusion_csv, write_score_csv,
};
use polsar::pipeline::{
    fit, load_model, predict_with_artifacts, save_model, split, OptimSettings, PipelineConfig,
    SplitSpec,
};
use polsar::superpixels::SlicParams;

#[derive(Parser)]
#[command(
    name = "polsar",
    version,
    about = "Multifrequency PolSAR land-cover classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic speckled scene from per-class coherency models.
    Synth(SynthArgs),
    /// Train the full pipeline on a labeled image.
    Fit(FitArgs),
    /// Classify an image with a trained model.
    Predict(PredictArgs),
    /// Score a prediction raster against ground truth.
    Eval(EvalArgs),
    /// Train/score one pipeline per band subset.
    AblateBands(AblateBandsArgs),
    /// Train/score one pipeline per decomposition family.
    AblateFeatures(AblateFeaturesArgs),
}

/// Hyperparameters shared by the training commands. Every field mirrors a
/// config-file key (kebab-case); explicit flags override the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct RunConfig {
    window: usize,
    ae1_hidden: usize,
    u1: usize,
    u2: usize,
    /// Reconstruction weight of the first autoencoder loss.
    alpha: f64,
    /// L2 weight of every trained stage.
    beta: f64,
    /// Sparsity (KL) weight of the first autoencoder loss.
    gamma: f64,
    /// Reconstruction weight of the second autoencoder loss.
    lambda: f64,
    /// Sparsity (KL) weight of the second autoencoder loss.
    alpha2: f64,
    /// Sparsity target of both autoencoders.
    rho: f64,
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    init_scale: f64,
    /// Requested superpixel count; 0 = one per ~256 pixels.
    slic_k: usize,
    slic_m: f64,
    slic_iters: usize,
    min_segment_frac: f64,
    train_frac: f64,
    seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window: 3,
            ae1_hidden: 32,
            u1: 5,
            u2: 10,
            alpha: 1.0,
            beta: 1e-4,
            gamma: 0.1,
            lambda: 1.0,
            alpha2: 0.1,
            rho: 0.15,
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 200,
            init_scale: 1.0,
            slic_k: 0,
            slic_m: 10.0,
            slic_iters: 10,
            min_segment_frac: 0.25,
            train_frac: 0.1,
            seed: 0,
        }
    }
}

impl RunConfig {
    fn to_pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            multilook_window: self.window,
            ae1_hidden: self.ae1_hidden,
            u1: self.u1,
            u2: self.u2,
            ae1_hyper: polsar::neural::SparsityHyper {
                recon_weight: self.alpha,
                l2_weight: self.beta,
                kl_weight: self.gamma,
                rho: self.rho,
            },
            ae2_hyper: polsar::neural::SparsityHyper {
                recon_weight: self.lambda,
                l2_weight: self.beta,
                kl_weight: self.alpha2,
                rho: self.rho,
            },
            softmax_l2: self.beta,
            optim: OptimSettings {
                learning_rate: self.learning_rate,
                batch_size: self.batch_size,
                epochs: self.epochs,
                init_scale: self.init_scale,
            },
            slic: SlicParams {
                k: self.slic_k,
                m: self.slic_m,
                max_iters: self.slic_iters,
                min_segment_frac: self.min_segment_frac,
            },
            families: None,
            seed: self.seed,
        }
    }

    fn split_spec(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.train_frac, seed: self.seed }
    }

    fn validate(&self) -> Result<(), Error> {
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train-frac must be in (0,1), got {}",
                self.train_frac
            )));
        }
        self.to_pipeline_config().validate()
    }
}

/// Optional overrides collected from flags (and parsed from the config
/// file); `None` keeps the previous value.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
struct RunConfigPatch {
    /// Multilook boxcar window (odd).
    #[arg(long)]
    window: Option<usize>,
    /// Intermediate width of the first autoencoder.
    #[arg(long)]
    ae1_hidden: Option<usize>,
    /// Bottleneck of the first autoencoder.
    #[arg(long)]
    u1: Option<usize>,
    /// Bottleneck of the second autoencoder.
    #[arg(long)]
    u2: Option<usize>,
    /// Reconstruction weight of the first autoencoder loss.
    #[arg(long)]
    alpha: Option<f64>,
    /// L2 weight of every trained stage.
    #[arg(long)]
    beta: Option<f64>,
    /// Sparsity (KL) weight of the first autoencoder loss.
    #[arg(long)]
    gamma: Option<f64>,
    /// Reconstruction weight of the second autoencoder loss.
    #[arg(long)]
    lambda: Option<f64>,
    /// Sparsity (KL) weight of the second autoencoder loss.
    #[arg(long)]
    alpha2: Option<f64>,
    /// Sparsity target of both autoencoders.
    #[arg(long)]
    rho: Option<f64>,
    /// Gradient-descent step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Multiplier on the 1/sqrt(fan_in) weight-init bound.
    #[arg(long)]
    init_scale: Option<f64>,
    /// Requested superpixel count (0 = auto).
    #[arg(long)]
    slic_k: Option<usize>,
    /// SLIC compactness weight.
    #[arg(long)]
    slic_m: Option<f64>,
    #[arg(long)]
    slic_iters: Option<usize>,
    /// Minimum segment size as a fraction of s^2.
    #[arg(long)]
    min_segment_frac: Option<f64>,
    /// Per-class training fraction of the labeled pixels.
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunConfigPatch {
    fn apply(&self, base: &mut RunConfig) {
        macro_rules! merge {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { base.$field = v.clone(); })*
            };
        }
        merge!(
            window, ae1_hidden, u1, u2, alpha, beta, gamma, lambda, alpha2, rho,
            learning_rate, batch_size, epochs, init_scale, slic_k, slic_m, slic_iters,
            min_segment_frac, train_frac, seed
        );
    }
}

#[derive(Args)]
struct ConfigFileArg {
    /// JSON config file with flat keys mirroring the flag names.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene model JSON: bands, looks, per-class coherency matrices.
    #[arg(long)]
    models: PathBuf,
    /// Class layout PGM; omit to use a block layout of the given size.
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Number of looks drawn per pixel; overrides the models file.
    #[arg(long)]
    looks: Option<usize>,
    #[arg(long)]
    out_image: PathBuf,
    #[arg(long)]
    out_labels: PathBuf,
    #[command(flatten)]
    config: ConfigFileArg,
    #[command(flatten)]
    patch: RunConfigPatch,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    image: PathBuf,
    /// Ground-truth label PGM; split into train/test by --train-frac.
    #[arg(long)]
    labels: PathBuf,
    /// Output model path; sidecars are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigFileArg,
    #[command(flatten)]
    patch: RunConfigPatch,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Predicted class ids as PGM (plus class-name sidecar).
    #[arg(long)]
    out_raster: PathBuf,
    /// Rendered class map (PPM).
    #[arg(long)]
    out_map: Option<PathBuf>,
    /// Directory for intermediate artifacts (features, hidden field,
    /// segments, boundaries).
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction raster (PGM with class-name sidecar).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth raster (PGM with class-name sidecar).
    #[arg(long)]
    truth: PathBuf,
    /// Score table CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional raw confusion-count CSV.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Args)]
struct AblateBandsArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Semicolon-separated band subsets like "L;P;LP;LPC"; default: all
    /// non-empty subsets.
    #[arg(long)]
    subsets: Option<String>,
    #[command(flatten)]
    config: ConfigFileArg,
    #[command(flatten)]
    patch: RunConfigPatch,
}

#[derive(Args)]
struct AblateFeaturesArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Semicolon-separated family names; default: all six.
    #[arg(long)]
    families: Option<String>,
    #[command(flatten)]
    config: ConfigFileArg,
    #[command(flatten)]
    patch: RunConfigPatch,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Io(_)
        | Error::MalformedHeader(_)
        | Error::DimensionMismatch(_)
        | Error::NonFiniteValue(_)
        | Error::EmptyImage
        | Error::DegenerateSpan { .. }
        | Error::MalformedModel(_)
        | Error::VersionMismatch(_) => 3,
        Error::DivergenceDetected(_) | Error::ConvergenceFailure(_) => 4,
        Error::BandMismatch { .. } => 5,
        _ => 2,
    }
}

fn require_exists(path: &Path, what: &str) -> Result<(), Error> {
    if !path.exists() {
        return Err(Error::InvalidParameter(format!(
            "{what} {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn effective_config(
    file: &Option<PathBuf>,
    patch: &RunConfigPatch,
) -> Result<RunConfig, Error> {
    let mut config = RunConfig::default();
    if let Some(path) = file {
        require_exists(path, "config file")?;
        let text = std::fs::read_to_string(path)?;
        let from_file: RunConfigPatch = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("config file: {e}")))?;
        from_file.apply(&mut config);
    }
    patch.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn write_config_sidecar(config: &RunConfig, primary_output: &Path) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(config)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    std::fs::write(sidecar(primary_output, ".config.json"), text)?;
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(suffix);
    os.into()
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    require_exists(&args.models, "scene model file")?;
    let config = effective_config(&args.config.config, &args.patch)?;
    let models = SceneModels::from_json(&std::fs::read_to_string(&args.models)?)?;
    let layout = match &args.layout {
        Some(path) => {
            require_exists(path, "layout file")?;
            load_labels(path)?
        }
        None => LabelMap::block_layout(args.width, args.height, models.class_names())?,
    };
    let looks = args.looks.unwrap_or(models.looks);
    let (image, labels) = synth_scene(&models, &layout, looks, config.seed)?;
    save_image(&image, &args.out_image)?;
    save_labels(&labels, &args.out_labels)?;
    write_config_sidecar(&config, &args.out_image)?;
    eprintln!(
        "synthesized {}x{} scene: bands [{}], {} classes, {} looks, seed {}",
        image.width(),
        image.height(),
        image.bands().join(","),
        models.classes.len(),
        looks,
        config.seed
    );
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<(), Error> {
    require_exists(&args.image, "image")?;
    require_exists(&args.labels, "label file")?;
    let config = effective_config(&args.config.config, &args.patch)?;
    let image = load_image(&args.image)?;
    let labels = load_labels(&args.labels)?;

    let (train, test) = split(&labels, &config.split_spec())?;
    let (model, report) = fit(&image, &train, &config.to_pipeline_config())?;

    save_model(&model, &args.out)?;
    save_labels(&train, &sidecar(&args.out, ".train.pgm"))?;
    save_labels(&test, &sidecar(&args.out, ".test.pgm"))?;
    report.ae1_history.write_csv(&sidecar(&args.out, ".loss_ae1.csv"))?;
    report.ae2_history.write_csv(&sidecar(&args.out, ".loss_ae2.csv"))?;
    report.softmax_history.write_csv(&sidecar(&args.out, ".loss_softmax.csv"))?;
    write_config_sidecar(&config, &args.out)?;
    eprintln!(
        "fitted pipeline on {} training pixels; final losses: ae1 {:.6}, ae2 {:.6}, softmax {:.6}",
        train.ids().iter().filter(|&&i| i > 0).count(),
        report.ae1_history.final_total().unwrap_or(f64::NAN),
        report.ae2_history.final_total().unwrap_or(f64::NAN),
        report.softmax_history.final_total().unwrap_or(f64::NAN),
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<(), Error> {
    require_exists(&args.model, "model")?;
    require_exists(&args.image, "image")?;
    let model = load_model(&args.model)?;
    let image = load_image(&args.image)?;
    let (pred, artifacts) = predict_with_artifacts(&model, &image)?;

    save_labels(&pred.to_label_map()?, &args.out_raster)?;
    if let Some(map_path) = &args.out_map {
        render_map(&pred.to_label_map()?, map_path)?;
    }
    if let Some(dir) = &args.dump_dir {
        std::fs::create_dir_all(dir)?;
        artifacts.features.save(&dir.join("features.plsr"))?;
        polsar::data::format::save_feature_raster(
            artifacts.hidden.width(),
            artifacts.hidden.height(),
            artifacts.hidden.dims(),
            artifacts.hidden.data(),
            &dir.join("hidden.plsr"),
        )?;
        polsar::data::format::save_segment_raster(
            artifacts.superpixels.width,
            artifacts.superpixels.height,
            &artifacts.superpixels.labels,
            &dir.join("segments.plsr"),
        )?;
        artifacts.superpixels.write_centers_csv(&dir.join("centers.csv"))?;
        render_boundaries(&artifacts.superpixels, &image, &dir.join("boundaries.ppm"))?;
    }
    eprintln!(
        "predicted {} pixels into {} classes ({} superpixels)",
        pred.ids.len(),
        pred.n_classes(),
        artifacts.superpixels.n_segments()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    require_exists(&args.pred, "prediction raster")?;
    require_exists(&args.truth, "truth raster")?;
    let truth = load_labels(&args.truth)?;
    let pred_labels = load_labels(&args.pred)?;
    // rebuild a prediction view over the raster (probabilities not stored)
    let c = pred_labels.n_classes();
    let mut probs = vec![0.0; pred_labels.ids().len() * c];
    for (i, &id) in pred_labels.ids().iter().enumerate() {
        if id > 0 {
            probs[i * c + (id as usize - 1)] = 1.0;
        }
    }
    let pred = polsar::pipeline::PredictionMap {
        width: pred_labels.width(),
        height: pred_labels.height(),
        class_names: pred_labels.class_names().to_vec(),
        ids: pred_labels.ids().to_vec(),
        probs,
    };
    let report = score(&pred, &truth)?;
    write_score_csv(&report, "score", &args.out)?;
    if let Some(confusion_path) = &args.confusion {
        write_confusion_csv(&report.confusion, confusion_path)?;
    }
    eprintln!(
        "scored {} labeled pixels: OA(trace) {:.4}, OA(macro-precision) {:.4}",
        report.confusion.total(),
        report.oa_trace,
        report.oa_macro_precision
    );
    Ok(())
}

fn parse_subsets(spec: &Option<String>, bands: &[String]) -> Result<Vec<Vec<String>>, Error> {
    match spec {
        None => Ok(all_band_subsets(bands)),
        Some(text) => {
            let mut subsets = Vec::new();
            for token in text.split(';').filter(|t| !t.is_empty()) {
                let mut subset = Vec::new();
                for ch in token.chars() {
                    let name = ch.to_string();
                    if !bands.contains(&name) {
                        return Err(Error::InvalidParameter(format!(
                            "band {name} not in image bands [{}]",
                            bands.join(",")
                        )));
                    }
                    subset.push(name);
                }
                subsets.push(subset);
            }
            Ok(subsets)
        }
    }
}

fn cmd_ablate_bands(args: &AblateBandsArgs) -> Result<(), Error> {
    require_exists(&args.image, "image")?;
    require_exists(&args.labels, "label file")?;
    let config = effective_config(&args.config.config, &args.patch)?;
    let image = load_image(&args.image)?;
    let labels = load_labels(&args.labels)?;
    let subsets = parse_subsets(&args.subsets, &image.bands().to_vec())?;
    let table = run_band_ablation(
        &image,
        &labels,
        &subsets,
        &config.to_pipeline_config(),
        &config.split_spec(),
    )?;
    table.write_csv(&args.out)?;
    write_config_sidecar(&config, &args.out)?;
    for (name, report) in table.column_names.iter().zip(&table.reports) {
        eprintln!("bands {name}: OA(trace) {:.4}", report.oa_trace);
    }
    Ok(())
}

fn cmd_ablate_features(args: &AblateFeaturesArgs) -> Result<(), Error> {
    require_exists(&args.image, "image")?;
    require_exists(&args.labels, "label file")?;
    let config = effective_config(&args.config.config, &args.patch)?;
    let image = load_image(&args.image)?;
    let labels = load_labels(&args.labels)?;
    let families = match &args.families {
        None => Family::ALL.to_vec(),
        Some(text) => text
            .split(';')
            .filter(|t| !t.is_empty())
            .map(Family::parse)
            .collect::<Result<Vec<_>, _>>()?,
    };
    let table = run_feature_ablation(
        &image,
        &labels,
        &families,
        &config.to_pipeline_config(),
        &config.split_spec(),
    )?;
    table.write_csv(&args.out)?;
    write_config_sidecar(&config, &args.out)?;
    for (name, report) in table.column_names.iter().zip(&table.reports) {
        eprintln!("family {name}: OA(trace) {:.4}", report.oa_trace);
    }
    Ok(())
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("POLSAR_THREADS") {
        if let Ok(n) = value.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        } else {
            eprintln!("warning: ignoring non-numeric POLSAR_THREADS={value}");
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::AblateBands(args) => cmd_ablate_bands(args),
        Command::AblateFeatures(args) => cmd_ablate_features(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
