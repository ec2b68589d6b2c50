//! Command-line surface: `prepare`, `synth`, `train`, `eval`, `explain`,
//! `protocol` and `plot-roc`.
//!
//! Commands that take `--config` read a JSON file with the schema of the
//! matching library type; flags named after its fields (kebab-case) override
//! the file. The resolved configuration is logged before any work starts.
//! Errors print a JSON record on stderr and exit with 1 (runtime) or 2
//! (usage or configuration).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dataset::{
    generate_synthetic, prepare_dataset, DatasetName, PrepareOptions, Split, SyntheticConfig, Variant,
    VariantSelection,
};
use crate::error::{PadError, Result};
use crate::explain::{default_layer, gradcam_pp_head, overlay, save_overlay, GradCamTarget, HeadChoice};
use crate::metrics::{load_scores, roc_points, save_scores, MetricsReport, ScoringMode, DEFAULT_THRESHOLD};
use crate::model::{checkpoint, AttackScorer};
use crate::plot::save_roc_svg;
use crate::protocols::{
    build_model, emit_report, render_table, run_experiment, DatasetSource, ExperimentConfig, ExperimentResult, Protocol,
};
use crate::training::{score_manifest, train, Strategy};

#[derive(Debug, Parser)]
#[command(name = "facepad", version, about = "Face presentation-attack detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract frames and face crops from a video directory and write manifests.
    Prepare(PrepareArgs),
    /// Generate the synthetic dataset to disk.
    Synth(SynthArgs),
    /// Train one model and save its checkpoint and loss log.
    Train(ExperimentArgs),
    /// Compute APCER/BPCER and EER from a score file or a checkpoint.
    Eval(EvalArgs),
    /// Grad-CAM++ overlay for one image.
    Explain(ExplainArgs),
    /// Run a protocol for one or more strategies and backgrounds.
    Protocol(ProtocolArgs),
    /// Render ROC curves with a logarithmic BPCER axis to SVG.
    PlotRoc(PlotRocArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "both")]
    pub variant: VariantSelection,
    /// Keep every n-th frame.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[arg(long, default_value = "rose_youtu")]
    pub dataset: DatasetName,
    /// CSV of face boxes (video_id,frame_index,x0,y0,x1,y1,confidence).
    #[arg(long)]
    pub boxes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// JSON file with synthetic generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_subjects: Option<u32>,
    #[arg(long)]
    pub videos_per_subject: Option<u32>,
    #[arg(long)]
    pub frames_per_video: Option<u32>,
    #[arg(long)]
    pub image_size: Option<u32>,
    #[arg(long)]
    pub cue_strength: Option<f32>,
    #[arg(long)]
    pub train_subjects: Option<u32>,
}

/// Flags shared by `train` and `protocol`, mirroring experiment config fields.
#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// yes/full keeps the background, no/crop uses face crops.
    #[arg(long, value_parser = parse_background)]
    pub background: Option<Variant>,
    #[arg(long)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub attack_code: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f32>,
    #[arg(long)]
    pub input_size: Option<usize>,
    #[arg(long)]
    pub dfs_frames_per_video: Option<usize>,
    #[arg(long)]
    pub adversary_steps: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Prepared dataset directory (holding manifest_full.csv / manifest_crop.csv).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "rose_youtu")]
    pub dataset: DatasetName,
    /// JSON synthetic generator settings used when no --data is given.
    #[arg(long, conflicts_with = "data")]
    pub synth_config: Option<PathBuf>,
    /// Prepared evaluation dataset for cross_dataset.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long, default_value = "nuaa")]
    pub test_dataset: DatasetName,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Comma-separated strategies, or "all"; overrides --strategy.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<String>,
    /// Run each strategy on full frames and on face crops.
    #[arg(long)]
    pub compare_background: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score CSV (id,subject_id,attack_type,true_label,attack_prob).
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub scores: Option<PathBuf>,
    /// Checkpoint directory to score the test split with.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "rose_youtu")]
    pub dataset: DatasetName,
    #[arg(long, conflicts_with = "data")]
    pub synth_config: Option<PathBuf>,
    #[arg(long, value_parser = parse_background, default_value = "full")]
    pub background: Variant,
    #[arg(long, default_value = "per_frame", value_parser = parse_mode)]
    pub mode: ScoringMode,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Directory for metrics.json (and scores.csv when scoring a checkpoint).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Overlay PNG; a JSON sidecar with the same stem is written next to it.
    #[arg(long)]
    pub output: PathBuf,
    /// Convolutional block to explain; defaults to the last one.
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub target_class: usize,
    #[arg(long, default_value = "binary", value_parser = parse_head)]
    pub head: HeadChoice,
    #[arg(long, default_value_t = 0.5)]
    pub opacity: f32,
}

#[derive(Debug, Args)]
pub struct PlotRocArgs {
    /// metrics.json files (repeatable).
    #[arg(long)]
    pub metrics: Vec<PathBuf>,
    /// Score CSV files (repeatable).
    #[arg(long)]
    pub scores: Vec<PathBuf>,
    /// Curve labels in input order (metrics first); default is the file stem.
    #[arg(long)]
    pub label: Vec<String>,
    #[arg(long)]
    pub output: PathBuf,
}

fn parse_background(s: &str) -> std::result::Result<Variant, String> {
    match s {
        "yes" | "full" => Ok(Variant::Full),
        "no" | "crop" => Ok(Variant::Crop),
        other => Err(format!("expected yes, no, full or crop, got '{other}'")),
    }
}

fn parse_mode(s: &str) -> std::result::Result<ScoringMode, String> {
    match s {
        "per_frame" => Ok(ScoringMode::PerFrame),
        "per_video_dfs" => Ok(ScoringMode::PerVideoDfs),
        other => Err(format!("expected per_frame or per_video_dfs, got '{other}'")),
    }
}

fn parse_head(s: &str) -> std::result::Result<HeadChoice, String> {
    match s {
        "binary" => Ok(HeadChoice::Binary),
        "multiclass" => Ok(HeadChoice::Multiclass),
        other => Err(format!("expected binary or multiclass, got '{other}'")),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| PadError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PadError::Config(format!("{}: {e}", path.display())))
}

fn log_resolved<T: Serialize>(what: &str, value: &T) -> Result<()> {
    ::log::info!("resolved {what} config: {}", serde_json::to_string(value)?);
    Ok(())
}

fn data_source(data: Option<&Path>, dataset: DatasetName, synth_config: Option<&Path>) -> Result<Option<DatasetSource>> {
    Ok(match (data, synth_config) {
        (Some(root), _) => Some(DatasetSource::Prepared { name: dataset, root: root.to_path_buf() }),
        (None, Some(path)) => Some(DatasetSource::Synthetic { config: read_json(path)? }),
        (None, None) => None,
    })
}

impl ExperimentArgs {
    /// Config file values overridden by the flags that were given.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c: ExperimentConfig = match &self.config {
            Some(path) => read_json(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.strategy {
            c.strategy = v;
        }
        if let Some(v) = self.background {
            c.background = v;
        }
        if let Some(v) = self.protocol {
            c.protocol = v;
        }
        if let Some(v) = self.attack_code {
            c.attack_code = Some(v);
        }
        if let Some(v) = self.seed {
            c.train_config.seed = v;
        }
        if let Some(v) = self.epochs {
            c.train_config.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.train_config.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            c.train_config.learning_rate = v;
        }
        if let Some(v) = self.dfs_frames_per_video {
            c.train_config.dfs_frames_per_video = v;
        }
        if let Some(v) = self.adversary_steps {
            c.train_config.adversary_steps = v;
        }
        if let Some(v) = self.input_size {
            c.model.input_size = v;
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        if let Some(source) = data_source(self.data.as_deref(), self.dataset, self.synth_config.as_deref())? {
            c.train_dataset = source;
        }
        if let Some(root) = &self.test_data {
            c.test_dataset = Some(DatasetSource::Prepared { name: self.test_dataset, root: root.clone() });
        }
        c.train_config.strategy = c.strategy;
        Ok(c)
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                report_error("usage", &e.kind().to_string(), code);
            }
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            report_error(e.kind(), &e.to_string(), code);
            code
        }
    }
}

fn report_error(kind: &str, message: &str, code: i32) {
    let record = serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{record}");
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Protocol(a) => cmd_protocol(a),
        Command::PlotRoc(a) => cmd_plot_roc(a),
    }
}

fn cmd_prepare(a: PrepareArgs) -> Result<()> {
    let options = PrepareOptions {
        input: a.input,
        output: a.output,
        variant: a.variant,
        stride: a.stride,
        dataset: a.dataset,
        boxes: a.boxes,
    };
    log_resolved("prepare", &options)?;
    let summary = prepare_dataset(&options)?;
    println!(
        "videos: {}  frames: {}  written: {}  skipped (no face): {}",
        summary.videos, summary.frames, summary.written, summary.skipped_no_face
    );
    for path in summary.manifests {
        println!("manifest: {}", path.display());
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut config: SyntheticConfig = match &a.config {
        Some(path) => read_json(path)?,
        None => SyntheticConfig::default(),
    };
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.n_subjects {
        config.n_subjects = v;
    }
    if let Some(v) = a.videos_per_subject {
        config.videos_per_subject = v;
    }
    if let Some(v) = a.frames_per_video {
        config.frames_per_video = v;
    }
    if let Some(v) = a.image_size {
        config.image_size = v;
    }
    if let Some(v) = a.cue_strength {
        config.cue_strength = v;
    }
    if let Some(v) = a.train_subjects {
        config.train_subjects = v;
    }
    config.validate()?;
    log_resolved("synth", &config)?;
    let data = generate_synthetic(&config)?;
    data.write_to(&a.output)?;
    std::fs::write(a.output.join("synthetic_config.json"), serde_json::to_string_pretty(&config)?)?;
    println!("wrote {} frames per variant to {}", data.full.len(), a.output.display());
    Ok(())
}

fn cmd_train(a: ExperimentArgs) -> Result<()> {
    let config = ExperimentConfig { protocol: Protocol::SameDataset, test_dataset: None, attack_code: None, ..a.resolve()? };
    config.validate()?;
    log_resolved("train", &config)?;
    let data = config.train_dataset.load(config.background)?;
    let (model, log) =
        train(build_model(&config)?, &data.manifest, &*data.store, &config.effective_train_config(), None)?;
    let dir = config.run_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config)?)?;
    model.save(&dir.join("checkpoint"))?;
    log.save(&dir.join("losses.csv"))?;
    println!("checkpoint: {}", dir.join("checkpoint").display());
    println!("loss log: {}", dir.join("losses.csv").display());
    Ok(())
}

fn print_metrics(report: &MetricsReport) {
    println!("APCER@{}: {:.2}%", report.threshold, report.apcer * 100.0);
    println!("BPCER@{}: {:.2}%", report.threshold, report.bpcer * 100.0);
    println!("EER: {:.2}% (threshold {:.4})", report.eer * 100.0, report.eer_threshold);
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(PadError::Config(format!("threshold {} outside [0, 1]", a.threshold)));
    }
    let scores = match (&a.scores, &a.checkpoint) {
        (Some(path), _) => load_scores(path).map_err(|e| match e {
            PadError::Io(io) => PadError::Config(format!("{}: {io}", path.display())),
            other => other,
        })?,
        (None, Some(dir)) => {
            let source = data_source(a.data.as_deref(), a.dataset, a.synth_config.as_deref())?.unwrap_or_default();
            source.check(a.background)?;
            if !dir.join(checkpoint::SIDECAR_FILE).is_file() {
                return Err(PadError::Config(format!("{} is not a checkpoint directory", dir.display())));
            }
            let model = checkpoint::load(dir)?;
            let data = source.load(a.background)?;
            score_manifest(&model, &data.manifest, &*data.store, Split::Test, a.mode)?
        }
        (None, None) => return Err(PadError::Config("eval needs --scores or --checkpoint".into())),
    };
    let report = MetricsReport::compute(&scores, a.threshold, a.mode)?;
    print_metrics(&report);
    if let Some(dir) = &a.output_dir {
        std::fs::create_dir_all(dir)?;
        report.write_json(&dir.join("metrics.json"))?;
        if a.checkpoint.is_some() {
            save_scores(&dir.join("scores.csv"), &scores)?;
        }
    }
    Ok(())
}

fn cmd_explain(a: ExplainArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.opacity) {
        return Err(PadError::Config(format!("opacity {} outside [0, 1]", a.opacity)));
    }
    if !a.checkpoint.join(checkpoint::SIDECAR_FILE).is_file() {
        return Err(PadError::Config(format!("{} is not a checkpoint directory", a.checkpoint.display())));
    }
    let image = image::open(&a.image)
        .map_err(|e| PadError::Ingestion { path: a.image.clone(), reason: e.to_string() })?
        .to_rgb8();
    let model = checkpoint::load(&a.checkpoint)?;
    let layer = a.layer.clone().unwrap_or_else(|| default_layer(model.backbone()));
    let heatmap = gradcam_pp_head(&model, &image, a.target_class, &layer, a.head)?;
    let size = model.input_size() as u32;
    let resized = image::imageops::resize(&image, size, size, image::imageops::FilterType::Triangle);
    let prob = model.attack_probs(&crate::dataset::images_to_tensor(std::slice::from_ref(&resized), size as usize, model.normalization()))?[0];
    let blended = overlay(&heatmap, &resized, a.opacity)?;
    save_overlay(&a.output, &blended, &heatmap, prob as f64)?;
    let (x, y) = heatmap.argmax();
    println!("attack probability: {prob:.4}  peak: ({x}, {y})  overlay: {}", a.output.display());
    Ok(())
}

fn parse_strategies(list: &[String]) -> Result<Vec<Strategy>> {
    if list.iter().any(|s| s == "all") {
        return Ok(Strategy::ALL.to_vec());
    }
    list.iter().map(|s| s.parse()).collect()
}

fn cmd_protocol(a: ProtocolArgs) -> Result<()> {
    let base = a.experiment.resolve()?;
    let strategies = if a.strategies.is_empty() { vec![base.strategy] } else { parse_strategies(&a.strategies)? };
    let backgrounds = if a.compare_background { vec![Variant::Full, Variant::Crop] } else { vec![base.background] };
    let mut configs = Vec::new();
    for &strategy in &strategies {
        for &background in &backgrounds {
            let config = base.with_strategy(strategy).with_background(background);
            config.validate()?;
            configs.push(config);
        }
    }
    log_resolved("protocol", &configs)?;
    let mut results: Vec<ExperimentResult> = Vec::new();
    for config in &configs {
        let result = run_experiment(config)?;
        ::log::info!(
            "{} {}: EER {:.2}%",
            config.strategy.display_name(),
            config.background,
            result.metrics.eer * 100.0
        );
        results.push(result);
    }
    let report_dir = base.output_dir.join(base.protocol.as_str());
    let (json, _) = emit_report(&results, &report_dir)?;
    print!("{}", render_table(&results));
    println!("report: {}", json.display());
    Ok(())
}

fn cmd_plot_roc(a: PlotRocArgs) -> Result<()> {
    let inputs: Vec<&PathBuf> = a.metrics.iter().chain(&a.scores).collect();
    if inputs.is_empty() {
        return Err(PadError::Config("plot-roc needs at least one --metrics or --scores file".into()));
    }
    if !a.label.is_empty() && a.label.len() != inputs.len() {
        return Err(PadError::Config(format!("{} labels for {} inputs", a.label.len(), inputs.len())));
    }
    if let Some(missing) = inputs.iter().find(|p| !p.is_file()) {
        return Err(PadError::Config(format!("{} not found", missing.display())));
    }
    let mut curves = Vec::new();
    for (i, path) in inputs.iter().enumerate() {
        let points = if i < a.metrics.len() {
            MetricsReport::read_json(path)?.roc
        } else {
            roc_points(&load_scores(path)?)?
        };
        let label = a.label.get(i).cloned().unwrap_or_else(|| {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("curve");
            let parent = path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str());
            match parent {
                Some(p) => format!("{p}/{stem}"),
                None => stem.to_string(),
            }
        });
        curves.push((label, points));
    }
    save_roc_svg(&a.output, &curves)?;
    println!("roc: {}", a.output.display());
    Ok(())
}
