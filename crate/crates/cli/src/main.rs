//! `boxlift` command line: render synthetic scenes, generate and refine
//! proposals, evaluate them, and dump intermediate clouds and masks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use boxlift::pipeline::{lift_clouds, recursive_refine};
use boxlift::scene::{load_label_maps, load_scene, save_proposals};
use boxlift::synth::{builtin_spec, render, scene_suite, SceneSpec};
use boxlift::{evaluate, generate_proposals, splat_all, ClassId, Error, EvalReport, PipelineConfig, RecursiveInput};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "boxlift", version, about = "Dense segment proposals from boxes and RGB-D views")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic scenes with ground truth.
    Synth {
        /// JSON scene spec, a built-in name (two-camera, occluder, l-shape) or
        /// suite:<index>. Without it the whole seeded suite is written, one
        /// subdirectory per scene.
        #[arg(long)]
        spec: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate proposals for every view of a scene from its labels.
    Propose {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mask predictions with the scene's boxes and lift them again.
    Iterate {
        #[arg(long)]
        scene: PathBuf,
        /// Directory of `<view_id>.png` label images.
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class IoU of predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Print the report as JSON, or write it to the given file.
        #[arg(long, num_args = 0..=1, default_missing_value = "-")]
        json: Option<PathBuf>,
    },
    /// Write one class's scored cloud and its objectness masks.
    DebugDump {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        class: ClassId,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RecursiveMode {
    Augment,
    Replace,
}

/// A config file plus per-key overrides.
#[derive(Args)]
struct ConfigArgs {
    /// TOML or JSON pipeline config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    depth_eps: Option<f64>,
    #[arg(long)]
    close_radius: Option<usize>,
    #[arg(long)]
    unary_confidence: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    occlusion_in_scoring: Option<bool>,
    #[arg(long, value_enum)]
    recursive_input: Option<RecursiveMode>,
    #[arg(long)]
    crf_w_app: Option<f64>,
    #[arg(long)]
    crf_w_smooth: Option<f64>,
    #[arg(long)]
    crf_theta_alpha: Option<f64>,
    #[arg(long)]
    crf_theta_beta: Option<f64>,
    #[arg(long)]
    crf_theta_gamma: Option<f64>,
    #[arg(long)]
    crf_iterations: Option<usize>,
    #[arg(long)]
    crf_normalize: Option<bool>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::parse_file(path)?,
            None => PipelineConfig::default(),
        };
        fn set<T: Copy>(slot: &mut T, value: Option<T>) {
            if let Some(v) = value {
                *slot = v;
            }
        }
        set(&mut cfg.stride, self.stride);
        set(&mut cfg.depth_eps, self.depth_eps);
        set(&mut cfg.close_radius, self.close_radius);
        set(&mut cfg.unary_confidence, self.unary_confidence);
        set(&mut cfg.iterations, self.iterations);
        set(&mut cfg.occlusion_in_scoring, self.occlusion_in_scoring);
        set(
            &mut cfg.recursive_input,
            self.recursive_input.map(|m| match m {
                RecursiveMode::Augment => RecursiveInput::Augment,
                RecursiveMode::Replace => RecursiveInput::Replace,
            }),
        );
        set(&mut cfg.crf.w_app, self.crf_w_app);
        set(&mut cfg.crf.w_smooth, self.crf_w_smooth);
        set(&mut cfg.crf.theta_alpha, self.crf_theta_alpha);
        set(&mut cfg.crf.theta_beta, self.crf_theta_beta);
        set(&mut cfg.crf.theta_gamma, self.crf_theta_gamma);
        set(&mut cfg.crf.iterations, self.crf_iterations);
        set(&mut cfg.crf.normalize, self.crf_normalize);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Prints a line, ignoring a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn load_spec(spec: &str, seed: u64) -> Result<SceneSpec, Error> {
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "json") || path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let spec: SceneSpec =
            serde_json::from_str(&text).map_err(|e| Error::Malformed { path: path.into(), message: e.to_string() })?;
        spec.validate()?;
        Ok(spec)
    } else {
        builtin_spec(spec, seed)
    }
}

fn synth(spec: Option<&str>, seed: u64, out: &Path) -> Result<(), Error> {
    match spec {
        Some(spec) => {
            render(&load_spec(spec, seed)?)?.write_dir(out)?;
            say!("wrote {}", out.display());
        }
        None => {
            for spec in scene_suite(seed) {
                let dir = out.join(&spec.name);
                render(&spec)?.write_dir(&dir)?;
                say!("wrote {}", dir.display());
            }
        }
    }
    Ok(())
}

fn propose(scene: &Path, cfg: &PipelineConfig, out: &Path) -> Result<(), Error> {
    let scene = load_scene(scene)?;
    let proposals = generate_proposals(&scene, &scene.labels, cfg)?;
    save_proposals(&scene, &proposals, out)?;
    say!("wrote {} proposals to {}", proposals.len(), out.display());
    Ok(())
}

fn iterate(scene: &Path, predictions: &Path, cfg: &PipelineConfig, out: &Path) -> Result<(), Error> {
    let scene = load_scene(scene)?;
    let predictions = load_label_maps(predictions)?;
    let proposals = recursive_refine(&scene, &predictions, &scene.labels, cfg)?;
    save_proposals(&scene, &proposals, out)?;
    say!("wrote {} proposals to {}", proposals.len(), out.display());
    Ok(())
}

fn print_table(report: &EvalReport) {
    say!("{:>5}  {:>7}  {:>12}  {:>12}", "class", "iou", "intersection", "union");
    for (class, iou) in &report.per_class_iou {
        let counts = report.counts.get(class).copied().unwrap_or_default();
        say!("{class:>5}  {iou:>7.4}  {:>12}  {:>12}", counts.intersection, counts.union);
    }
    say!("{:>5}  {:>7.4}", "miou", report.miou);
}

fn eval(pred: &Path, gt: &Path, json: Option<&Path>) -> Result<(), Error> {
    let report = evaluate(&load_label_maps(pred)?, &load_label_maps(gt)?)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match json {
        None => print_table(&report),
        Some(path) if path == Path::new("-") => say!("{text}"),
        Some(path) => fs::write(path, text + "\n").map_err(|e| io_error(path, e))?,
    }
    Ok(())
}

fn debug_dump(scene: &Path, class: ClassId, cfg: &PipelineConfig, out: &Path) -> Result<(), Error> {
    let scene = load_scene(scene)?;
    let labels: Vec<_> = scene.labels.iter().filter(|l| l.class_id == class).cloned().collect();
    if labels.is_empty() {
        return Err(Error::Validation(format!("scene has no labels of class {class}")));
    }
    let clouds = lift_clouds(&scene, &labels, cfg)?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    clouds[0].write_text(&out.join(format!("cloud_{class}.txt")))?;
    let masks = splat_all(&clouds, &scene.views, cfg.depth_eps);
    let mut splats = BTreeMap::new();
    for ((view_id, _), mask) in &masks {
        mask.write_png(&out.join(format!("objectness_{view_id}_{class}.png")))?;
        splats.insert(view_id.as_str(), mask.splat_count());
    }
    say!("class {class}: {} points, max score {}", clouds[0].len(), clouds[0].max_score());
    for (view_id, n) in splats {
        say!("  {view_id}: {n} splats");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Synth { spec, seed, out } => synth(spec.as_deref(), seed, &out),
        Command::Propose { scene, config, out } => propose(&scene, &config.resolve()?, &out),
        Command::Iterate { scene, predictions, config, out } => iterate(&scene, &predictions, &config.resolve()?, &out),
        Command::Eval { pred, gt, json } => eval(&pred, &gt, json.as_deref()),
        Command::DebugDump { scene, class, config, out } => debug_dump(&scene, class, &config.resolve()?, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
