use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use log::info;
use serde_json::Value;

use sarslide_core::detection::{export_detections, slide, SlideConfig};
use sarslide_core::nn::{build_reference_model, load_checkpoint, save_checkpoint};
use sarslide_core::raster::{
    compose, normalize, read_grid, read_sources_dir, write_grid, NormalizationSpec, Recipe,
};
use sarslide_core::sampling::{
    extract_patches, load_patchset, read_polygons, save_patchset, split, AugmentationConfig,
    ExtractConfig,
};
use sarslide_core::synth::{generate, write_scene, SynthConfig};
use sarslide_core::training::{evaluate, format_table, train_with_state, EvalReport, TrainConfig};
use sarslide_core::{AdamState, Model};

/// Landslide mapping from SAR/optical composites with a small CNN.
#[derive(Debug, Parser)]
#[command(name = "sarslide", version, args_override_self = true)]
struct Cli {
    /// Seed for every random choice (scene synthesis, split, init, shuffling, augmentation).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 keeps runs bitwise reproducible.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,

    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    /// JSON file of flag values; explicit command-line flags win.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene with known landslide ground truth.
    Synth(SynthArgs),
    /// Build a normalized 3-band composite from source grids.
    Compose(ComposeArgs),
    /// Cut labeled patches from a composite and split them by polygon.
    Sample(SampleArgs),
    /// Train the reference CNN on a patch set.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a patch set.
    Eval(EvalArgs),
    /// Slide the classifier over a composite and export detections.
    Map(MapArgs),
    /// Tabulate evaluation reports side by side.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output scene directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of landslide regions.
    #[arg(long, default_value_t = 12)]
    landslides: usize,
    /// Number of annotated stable-ground regions [default: same as --landslides].
    #[arg(long)]
    non_landslides: Option<usize>,
    /// Scene width in pixels.
    #[arg(long, default_value_t = 256)]
    width: usize,
    /// Scene height in pixels.
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// After/before VV amplitude ratio inside landslides.
    #[arg(long, default_value_t = 2.0)]
    contrast: f64,
    /// After/before VH amplitude ratio inside landslides.
    #[arg(long, default_value_t = 1.7)]
    contrast_vh: f64,
    /// Equivalent number of looks of the speckle.
    #[arg(long, default_value_t = 4.0)]
    looks: f64,
    /// Smallest region radius in pixels.
    #[arg(long, default_value_t = 16.0)]
    radius_min: f64,
    /// Largest region radius in pixels.
    #[arg(long, default_value_t = 24.0)]
    radius_max: f64,
    /// DEM fractal persistence in (0, 1).
    #[arg(long, default_value_t = 0.55)]
    roughness: f64,
}

#[derive(Debug, Args)]
struct ComposeArgs {
    /// Directory of source grids (bands named VV_before, DEM, Red, ...).
    #[arg(long)]
    sources: PathBuf,
    /// Recipe name: RGB, SSD, SSS, BAD, BAS, HHH, BAA, BAC or BAH.
    #[arg(long, required_unless_present = "all", conflicts_with = "all")]
    recipe: Option<Recipe>,
    /// Compose every recipe; --out is then a directory.
    #[arg(long)]
    all: bool,
    /// Output grid (or directory with --all). A `<stem>.stats.json` sidecar
    /// records the normalization ranges.
    #[arg(long)]
    out: PathBuf,
    /// Replay normalization ranges from a stats sidecar instead of fitting them.
    #[arg(long, conflicts_with = "all")]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Normalized 3-band composite grid.
    #[arg(long)]
    composite: PathBuf,
    /// GeoJSON polygons in pixel coordinates with a `label` property.
    #[arg(long)]
    polygons: PathBuf,
    /// Output patch-set directory.
    #[arg(long)]
    out: PathBuf,
    /// Window stride inside each polygon's bounding box.
    #[arg(long, default_value_t = 13)]
    stride: usize,
    /// Minimum fraction of a window inside its polygon.
    #[arg(long, default_value_t = 0.5)]
    min_overlap: f64,
    /// Share of each label's patches held out, split by whole polygons.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Patch-set directory from `sample`.
    #[arg(long)]
    patches: PathBuf,
    /// Output checkpoint (weights and optimizer state).
    #[arg(long)]
    out: PathBuf,
    /// Training options as JSON (epochs, batch_size, learning_rate, augmentation, ...).
    #[arg(long, value_name = "JSON")]
    train_config: Option<PathBuf>,
    /// Passes over the training split [default: 50].
    #[arg(long)]
    epochs: Option<usize>,
    /// Patches per optimizer step [default: 32].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam step size [default: 0.001].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Disable flips, rotation, zoom and translation.
    #[arg(long)]
    no_augment: bool,
    /// Stop after this many epochs without test-loss improvement.
    #[arg(long)]
    early_stop: Option<usize>,
    /// Continue from a checkpoint, including its optimizer state.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Evaluation report path [default: <out>.report.json].
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dataset name recorded in the report.
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SplitChoice {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint from `train`.
    #[arg(long)]
    model: PathBuf,
    /// Patch-set directory from `sample`.
    #[arg(long)]
    patches: PathBuf,
    /// Output report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Which split to score.
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    split: SplitChoice,
    /// Dataset name recorded in the report.
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Debug, Args)]
struct MapArgs {
    /// Checkpoint from `train`.
    #[arg(long)]
    model: PathBuf,
    /// 3-band composite grid to scan.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory for detections.geojson, detections.csv and probability.grid.
    #[arg(long)]
    out: PathBuf,
    /// Window step in pixels.
    #[arg(long, default_value_t = 2)]
    step: usize,
    /// Landslide probability above which a window is a detection.
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    /// Windows per forward pass.
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Normalize the scene with these recorded ranges first.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report JSON files from `train` or `eval`.
    #[arg(long, required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads as usize)
        .build_global()
    {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Parses argv, then fills every flag not given on the command line from
/// the `--config` file and parses again.
/// Every failure here is a usage error.
fn parse(argv: Vec<OsString>) -> anyhow::Result<Cli> {
    let clap_exit = |e: clap::Error| -> anyhow::Error {
        use clap::error::ErrorKind::{
            DisplayHelp, DisplayHelpOnMissingArgumentOrSubcommand, DisplayVersion,
        };
        match e.kind() {
            DisplayHelp | DisplayVersion => {
                let _ = e.print();
                std::process::exit(0);
            }
            DisplayHelpOnMissingArgumentOrSubcommand => {
                let _ = e.print();
                std::process::exit(1);
            }
            _ => {
                let text = e.render().to_string();
                anyhow!("{}", text.trim_end().trim_start_matches("error: "))
            }
        }
    };
    let mut cmd = Cli::command();
    cmd.build();
    let matches = cmd.clone().try_get_matches_from(&argv).map_err(clap_exit)?;
    let cli = Cli::from_arg_matches(&matches).map_err(clap_exit)?;
    let Some(config_path) = cli.config.clone() else {
        return Ok(cli);
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let extra = config_tokens(&config_path, &cmd, name, &matches, sub)?;
    if extra.is_empty() {
        return Ok(cli);
    }
    let mut full = argv;
    full.extend(extra);
    let matches = cmd.try_get_matches_from(&full).map_err(clap_exit)?;
    Cli::from_arg_matches(&matches).map_err(clap_exit)
}

fn from_command_line(top: &ArgMatches, sub: &ArgMatches, id: &str) -> bool {
    let explicit = |m: &ArgMatches| {
        m.try_contains_id(id).unwrap_or(false)
            && m.value_source(id) == Some(ValueSource::CommandLine)
    };
    explicit(top) || explicit(sub)
}

/// Config keys are long flag names (`-` or `_`). Top-level scalars apply to
/// global flags and to the running subcommand where they match; an object
/// under the subcommand's name must only contain that subcommand's flags.
fn config_tokens(
    path: &Path,
    cmd: &clap::Command,
    name: &str,
    top: &ArgMatches,
    sub: &ArgMatches,
) -> anyhow::Result<Vec<OsString>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let Value::Object(root) = serde_json::from_str::<Value>(&text)
        .with_context(|| format!("parsing {}", path.display()))?
    else {
        bail!("{}: expected a JSON object", path.display());
    };
    let subcmd = cmd.find_subcommand(name).expect("parsed subcommand exists");
    let known = |key: &str| {
        let id = key.replace('-', "_");
        cmd.get_arguments()
            .chain(subcmd.get_arguments())
            .find(|a| a.get_id().as_str() == id && a.get_long().is_some())
            .cloned()
    };
    let mut entries: Vec<(String, Value, bool)> = Vec::new();
    for (k, v) in &root {
        if k == name {
            let Value::Object(section) = v else {
                bail!("config section `{name}` must be an object");
            };
            entries.extend(section.iter().map(|(k, v)| (k.clone(), v.clone(), true)));
        } else if !v.is_object() {
            entries.push((k.clone(), v.clone(), false));
        }
    }
    let mut out = Vec::new();
    for (key, value, strict) in entries {
        let Some(arg) = known(&key) else {
            if strict {
                bail!("config: `{name}` has no flag --{}", key.replace('_', "-"));
            }
            continue;
        };
        let id = arg.get_id().as_str();
        if id == "config" || from_command_line(top, sub, id) {
            continue;
        }
        let flag = format!("--{}", arg.get_long().expect("long flags only"));
        let takes_value = arg.get_num_args().is_some_and(|n| n.takes_values());
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            other => Err(anyhow!("config: --{key} cannot take {other}")),
        };
        match (&value, takes_value) {
            (Value::Bool(true), false) => out.push(flag.into()),
            (Value::Bool(false), false) => {}
            (_, false) => bail!("config: --{key} is a switch; use true or false"),
            (Value::Array(items), true) => {
                out.push(flag.into());
                for it in items {
                    out.push(scalar(it)?.into());
                }
            }
            (v, true) => {
                out.push(flag.into());
                out.push(scalar(v)?.into());
            }
        }
    }
    Ok(out)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::Compose(a) => compose_cmd(a),
        Command::Sample(a) => sample(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Eval(a) => eval_cmd(a),
        Command::Map(a) => map_cmd(a),
        Command::Report(a) => report(a),
    }
}

fn synth(a: &SynthArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        width: a.width,
        height: a.height,
        landslide_count: a.landslides,
        non_landslide_count: a.non_landslides.unwrap_or(a.landslides),
        radius_min: a.radius_min,
        radius_max: a.radius_max,
        looks: a.looks,
        contrast_vv: a.contrast,
        contrast_vh: a.contrast_vh,
        roughness: a.roughness,
        seed: seed.unwrap_or(0),
        ..SynthConfig::default()
    };
    let scene = generate(&cfg)?;
    write_scene(&scene, &cfg, &a.out)?;
    info!(
        "scene {} with {} polygons, {} landslide pixels",
        a.out.display(),
        scene.truth_polygons.len(),
        scene.truth_mask.count()
    );
    Ok(())
}

fn stats_path(grid_path: &Path) -> PathBuf {
    grid_path.with_extension("stats.json")
}

fn read_spec(path: &Path) -> anyhow::Result<NormalizationSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn compose_cmd(a: &ComposeArgs) -> anyhow::Result<()> {
    let sources = read_sources_dir(&a.sources)?;
    let jobs: Vec<(Recipe, PathBuf)> = if a.all {
        fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
        Recipe::ALL
            .iter()
            .map(|&r| (r, a.out.join(format!("{}.grid", r.name()))))
            .collect()
    } else {
        vec![(
            a.recipe.expect("clap enforces --recipe or --all"),
            a.out.clone(),
        )]
    };
    let spec = match &a.stats {
        Some(p) => read_spec(p)?,
        None => NormalizationSpec::MinMax,
    };
    for (recipe, out) in jobs {
        let raw = compose(recipe, &sources).with_context(|| format!("recipe {}", recipe.name()))?;
        let (grid, used) = normalize(&raw, &spec)?;
        let out = out.with_extension("grid");
        write_grid(&grid, &out)?;
        fs::write(stats_path(&out), serde_json::to_string_pretty(&used)?)?;
        info!("{} -> {}", recipe.name(), out.display());
    }
    Ok(())
}

fn sample(a: &SampleArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let composite = read_grid(&a.composite)?;
    let polygons = read_polygons(&a.polygons)?;
    let cfg = ExtractConfig {
        stride: a.stride,
        min_overlap: a.min_overlap,
    };
    let extraction = extract_patches(&composite, &polygons, &cfg)?;
    let mut set = split(extraction.patches, a.test_fraction, seed.unwrap_or(0))?;
    let sidecar = stats_path(&a.composite.with_extension("grid"));
    if sidecar.exists() {
        set.normalization = Some(read_spec(&sidecar)?);
    }
    save_patchset(&set, &a.out)?;
    info!(
        "{} train / {} test patches, {} polygons skipped",
        set.train.len(),
        set.test.len(),
        extraction.skipped.len()
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = match &a.train_config {
        Some(p) => TrainConfig::from_json_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.augmentation.seed = s;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if a.no_augment {
        cfg.augmentation = AugmentationConfig {
            seed: cfg.augmentation.seed,
            ..AugmentationConfig::disabled()
        };
    }
    if a.early_stop.is_some() {
        cfg.early_stop_patience = a.early_stop;
    }
    cfg.validate()?;
    let set = load_patchset(&a.patches)?;
    let (model, adam): (Model, Option<AdamState>) = match &a.resume {
        Some(p) => load_checkpoint(p)?,
        None => (build_reference_model(cfg.seed), None),
    };
    let outcome = train_with_state(model, adam, &set, &cfg)?;
    save_checkpoint(&outcome.model, Some(&outcome.adam), &a.out)?;
    let mut report = outcome.report;
    report.dataset = a.dataset.clone();
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| a.out.with_extension("report.json"));
    report.write_json(&report_path)?;
    info!(
        "{} epochs, test accuracy {:.4}",
        outcome.epochs_run, report.accuracy
    );
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> anyhow::Result<()> {
    let (model, _): (Model, _) = load_checkpoint(&a.model)?;
    let set = load_patchset(&a.patches)?;
    let patches = match a.split {
        SplitChoice::Train => set.train,
        SplitChoice::Test => set.test,
        SplitChoice::All => set.train.into_iter().chain(set.test).collect(),
    };
    let mut report = evaluate(&model, &patches)?;
    report.dataset = a.dataset.clone();
    report.write_json(&a.out)?;
    Ok(())
}

fn map_cmd(a: &MapArgs) -> anyhow::Result<()> {
    let (model, _): (Model, _) = load_checkpoint(&a.model)?;
    let mut scene = read_grid(&a.scene)?;
    if let Some(p) = &a.stats {
        scene = normalize(&scene, &read_spec(p)?)?.0;
    }
    let cfg = SlideConfig {
        step: a.step,
        batch: a.batch,
        threshold: a.threshold,
    };
    let ds = slide(&scene, &model, &cfg)?;
    export_detections(&ds, &a.out)?;
    info!(
        "{} of {} windows flagged",
        ds.detections.len(),
        ds.windows_evaluated
    );
    Ok(())
}

fn report(a: &ReportArgs) -> anyhow::Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| {
            let mut r = EvalReport::read_json(p)?;
            if r.dataset.is_none() {
                let stem = p.file_name().and_then(|s| s.to_str()).unwrap_or("?");
                r.dataset = Some(stem.split('.').next().unwrap_or(stem).to_string());
            }
            Ok(r)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let table = format_table(&reports);
    match &a.out {
        Some(p) => fs::write(p, table).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{table}"),
    }
    Ok(())
}
