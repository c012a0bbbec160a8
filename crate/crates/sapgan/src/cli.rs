//! Command-line interface.
//!
//! Exit status: 0 on success, 1 on runtime errors, 2 on usage errors
//! (unknown subcommand, flag or configuration key).

use std::ffi::OsString;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use sapgan_core::data::synth_landscape;
use sapgan_core::edge::EdgeParams;
use sapgan_core::image::RawImage;
use sapgan_core::neighbors::nearest_neighbors;
use sapgan_core::paint::PaintConfig;
use sapgan_core::pipeline::{generate, latent_walk};
use sapgan_core::sketch::{LatentSpec, SketchConfig};
use sapgan_core::survey::{turing_report, Unit};
use sapgan_core::tensor::AdamConfig;
use sapgan_core::{data, Stream};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_paint_generator, load_sketch_generator};
use crate::error::{Error, Result};
use crate::io::{load_image, save_png};
use crate::manifest::{build_manifest, DatasetManifest, ManifestOptions};
use crate::report::render_text;
use crate::responses::load_responses;
use crate::server::{serve, ServerOptions};
use crate::train::{run_train_paint, run_train_sketch, LoopOptions};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "sapgan", version, about = "Sketch-and-paint GAN pipeline for Chinese landscape paintings")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Cmd {
    /// Tile paintings, extract edge maps and write a manifest.
    Preprocess(PreprocessArgs),
    /// Write procedural landscape paintings for desk-scale runs.
    Synth(SynthArgs),
    /// Train the sketch GAN on the manifest's edge maps.
    TrainSketch(TrainSketchArgs),
    /// Train the edge-to-painting GAN on the manifest's pairs.
    TrainPaint(TrainPaintArgs),
    /// Sample sketches and paint them.
    Generate(GenerateArgs),
    /// Render a latent walk between two random points.
    Interpolate(InterpolateArgs),
    /// Find the dataset tiles nearest to a query image.
    NnTest(NnTestArgs),
    /// Summarize a response CSV.
    TuringStats(TuringStatsArgs),
    /// Serve the questionnaire API.
    ServeSurvey(ServeArgs),
    /// Paint a single edge map (or the edges of a painting).
    Translate(TranslateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ConfigArg {
    /// key = value file supplying defaults for this subcommand's flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Directory of paintings; subdirectories name the source collection.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = data::DEFAULT_TILE)]
    pub tile: usize,
    #[arg(long, default_value_t = data::DEFAULT_RATIO_THRESHOLD)]
    pub ratio_threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    pub blur_sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub low: f64,
    #[arg(long, default_value_t = 0.2)]
    pub high: f64,
    /// Dark edges on a light background.
    #[arg(long)]
    pub invert: bool,
    /// Comma-separated subdirectory names to include.
    #[arg(long, value_delimiter = ',')]
    pub sources: Option<Vec<String>>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Paintings go to `<out>/synthetic/`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainSketchArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 2)]
    pub pack: usize,
    #[arg(long, default_value_t = 128)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 0.002)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
    #[arg(long, default_value = "runs/sketch.sapg")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainPaintArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub pack: usize,
    #[arg(long, default_value_t = 100.0)]
    pub lambda_l1: f64,
    /// Weight of the adversarial term; 0 trains on L1 alone.
    #[arg(long, default_value_t = 1.0)]
    pub adv_weight: f64,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 16)]
    pub disc_width: usize,
    #[arg(long, default_value_t = 3)]
    pub disc_layers: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.0002)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
    #[arg(long, default_value = "runs/paint.sapg")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value = "runs/sketch.sapg")]
    pub sketch: PathBuf,
    #[arg(long, default_value = "runs/paint.sapg")]
    pub paint: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "generated")]
    pub out: PathBuf,
    /// Also write the intermediate sketches.
    #[arg(long)]
    pub save_sketches: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct InterpolateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long, default_value_t = 6)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "walk")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct NnTestArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitArg {
    Participant,
    Painting,
}

#[derive(Debug, Args, Serialize)]
pub struct TuringStatsArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub responses: PathBuf,
    /// What per-unit statistics are averaged over.
    #[arg(long, value_enum, default_value_t = UnitArg::Participant)]
    pub unit: UnitArg,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub human: PathBuf,
    #[arg(long)]
    pub baseline: PathBuf,
    #[arg(long)]
    pub sapgan: PathBuf,
    #[arg(long, default_value = "responses.csv")]
    pub responses: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of built frontend assets.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Test mode: deterministic sessions from this seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TranslateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Treat the input as a painting and extract its edge map first.
    #[arg(long)]
    pub extract_edges: bool,
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
    }
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found")))
    }
}

impl Cmd {
    /// Checks that every input path exists before any work starts.
    pub fn validate_paths(&self) -> Result<()> {
        match self {
            Cmd::Preprocess(a) => require_dir(&a.input),
            Cmd::Synth(_) => Ok(()),
            Cmd::TrainSketch(a) => require_file(&a.manifest),
            Cmd::TrainPaint(a) => require_file(&a.manifest),
            Cmd::Generate(GenerateArgs { models, .. }) | Cmd::Interpolate(InterpolateArgs { models, .. }) => {
                require_file(&models.sketch)?;
                require_file(&models.paint)
            }
            Cmd::NnTest(a) => {
                require_file(&a.query)?;
                require_file(&a.manifest)
            }
            Cmd::TuringStats(a) => require_file(&a.responses),
            Cmd::ServeSurvey(a) => {
                for d in [&a.human, &a.baseline, &a.sapgan] {
                    require_dir(d)?;
                }
                a.static_dir.as_deref().map_or(Ok(()), require_dir)
            }
            Cmd::Translate(a) => {
                require_file(&a.checkpoint)?;
                require_file(&a.input)
            }
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Cmd::Synth(a) => Some(a.seed),
            Cmd::TrainSketch(a) => Some(a.seed),
            Cmd::TrainPaint(a) => Some(a.seed),
            Cmd::Generate(a) => Some(a.seed),
            Cmd::Interpolate(a) => Some(a.seed),
            Cmd::ServeSurvey(a) => a.seed,
            _ => None,
        }
    }

    /// SHA-256 of the fully resolved arguments.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("arguments serialize");
        hex::encode(Sha256::digest(json))
    }
}

pub enum Parsed {
    Run(Cmd),
    /// Help or version text was requested; print it and exit 0.
    Info(clap::Error),
}

/// Parses arguments, splicing in values from `--config` when present.
pub fn parse(args: Vec<OsString>) -> std::result::Result<Parsed, (u8, String)> {
    let mut cmd = Cli::command();
    let usage = |e: clap::Error| -> std::result::Result<Parsed, (u8, String)> {
        use clap::error::ErrorKind::*;
        match e.kind() {
            DisplayHelp | DisplayVersion => Ok(Parsed::Info(e)),
            _ => Err((EXIT_USAGE, e.render().to_string())),
        }
    };
    let mut argv = args;
    if let Some(path) = crate::config::find_config_path(&argv) {
        let path = PathBuf::from(path);
        let text = std::fs::read_to_string(&path).map_err(|e| (EXIT_RUNTIME, Error::io(&path, e).to_string()))?;
        let entries = crate::config::parse(&text, &path).map_err(|e| (EXIT_USAGE, e.to_string()))?;
        // The subcommand is the first argument after the program name that
        // names one; flags never precede it.
        let sub_name = argv.get(1).map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let Some(sub) = cmd.find_subcommand(&sub_name) else {
            return match cmd.try_get_matches_from_mut(&argv) {
                Err(e) => usage(e),
                Ok(_) => Err((EXIT_USAGE, "--config must follow a subcommand\n".into())),
            };
        };
        let extra = crate::config::to_args(&entries, sub, &path).map_err(|e| (EXIT_USAGE, format!("error: {e}\n")))?;
        argv.splice(2..2, extra);
    }
    let matches = match cmd.try_get_matches_from_mut(&argv) {
        Ok(m) => m,
        Err(e) => return usage(e),
    };
    Cli::from_arg_matches(&matches).map(|c| Parsed::Run(c.command)).or_else(usage)
}

fn write_batch(dir: &Path, prefix: &str, batch: &sapgan_core::Tensor<f32>) -> Result<Vec<PathBuf>> {
    let n = batch.shape()[0];
    (0..n)
        .map(|i| {
            let path = dir.join(format!("{prefix}-{i:03}.png"));
            save_png(&path, &data::denormalize(batch, i)?)?;
            Ok(path)
        })
        .collect()
}

fn edge_tensor(img: &RawImage, size: usize, extract: bool) -> Result<sapgan_core::Tensor<f32>> {
    let img = if (img.width(), img.height()) == (size, size) { img.clone() } else { img.resize_bilinear(size, size)? };
    let gray = if extract {
        sapgan_core::edge::edge_map(&img, &EdgeParams::default())?
    } else if img.channels() == 1 {
        img
    } else {
        let l = img.luma();
        RawImage::from_fn(size, size, 1, |x, y, _| l[y * size + x].round().clamp(0.0, 255.0) as u8)?
    };
    Ok(data::normalize(&gray))
}

/// Runs a parsed command.
pub fn execute(cmd: Cmd) -> Result<()> {
    cmd.validate_paths()?;
    if let Some(seed) = cmd.seed() {
        log::info!("seed {seed}");
    }
    log::info!("config digest sha256:{}", cmd.digest());
    match cmd {
        Cmd::Preprocess(a) => {
            let opts = ManifestOptions {
                tile: a.tile,
                ratio_threshold: a.ratio_threshold,
                edge: EdgeParams { blur_sigma: a.blur_sigma, low: a.low, high: a.high, invert: a.invert },
            };
            let m = build_manifest(&a.input, &a.out, &opts, a.sources.as_deref())?;
            for (source, n) in &m.counts_by_source {
                println!("{source}: {n}");
            }
            println!("total: {}", m.records.len());
        }
        Cmd::Synth(a) => {
            let root = Stream::new(a.seed);
            let dir = a.out.join("synthetic");
            for i in 0..a.n {
                let img = synth_landscape(&mut root.derive_index(i as u64), a.size)?;
                save_png(&dir.join(format!("synth-{i:04}.png")), &img)?;
            }
            println!("wrote {} paintings to {}", a.n, dir.display());
        }
        Cmd::TrainSketch(a) => {
            let cfg = SketchConfig {
                latent_dim: a.latent_dim,
                size: a.size,
                width: a.width,
                pack: a.pack,
                adam: AdamConfig { lr: a.lr, beta1: a.beta1, beta2: a.beta2, ..AdamConfig::default() },
            };
            let opts = LoopOptions { steps: a.steps, batch: a.batch, seed: a.seed, log_every: a.log_every };
            run_train_sketch(&a.manifest, cfg, opts, &a.out)?;
        }
        Cmd::TrainPaint(a) => {
            let cfg = PaintConfig {
                size: a.size,
                width: a.width,
                disc_width: a.disc_width,
                disc_layers: a.disc_layers,
                pack: a.pack,
                batch: a.batch,
                lambda_l1: a.lambda_l1,
                adv_weight: a.adv_weight,
                dropout: a.dropout,
                adam: AdamConfig { lr: a.lr, beta1: a.beta1, beta2: a.beta2, ..AdamConfig::default() },
                ..PaintConfig::default()
            };
            let opts = LoopOptions { steps: a.steps, batch: a.batch, seed: a.seed, log_every: a.log_every };
            run_train_paint(&a.manifest, cfg, opts, &a.out)?;
        }
        Cmd::Generate(a) => {
            let sketch = load_sketch_generator(&a.models.sketch)?;
            let paint = load_paint_generator(&a.models.paint)?;
            let latent = LatentSpec::new(sketch.config().latent_dim)?;
            let z = latent.sample(a.n, &mut Stream::new(a.seed).derive("generate"));
            let out = generate(&sketch, &paint, &z)?;
            for p in write_batch(&a.out, "painting", &out.paintings)? {
                println!("{}", p.display());
            }
            if a.save_sketches {
                write_batch(&a.out, "sketch", &out.sketches)?;
            }
        }
        Cmd::Interpolate(a) => {
            let sketch = load_sketch_generator(&a.models.sketch)?;
            let paint = load_paint_generator(&a.models.paint)?;
            let latent = LatentSpec::new(sketch.config().latent_dim)?;
            let z = latent.sample(2, &mut Stream::new(a.seed).derive("interpolate"));
            let dim = sketch.config().latent_dim;
            let walk = latent_walk(&sketch, &paint, &z.data()[..dim], &z.data()[dim..], a.frames)?;
            write_batch(&a.out, "frame", &walk.frames.paintings)?;
            write_batch(&a.out, "sketch", &walk.frames.sketches)?;
            for (i, t) in walk.ts.iter().enumerate() {
                println!("frame {i}: t = {t:.3}");
            }
        }
        Cmd::NnTest(a) => {
            let manifest = DatasetManifest::load(&a.manifest)?;
            let root = a.manifest.parent().unwrap_or(Path::new("."));
            let corpus = manifest
                .records
                .iter()
                .map(|r| Ok((r.id.as_str(), load_image(&root.join(&r.painting))?)))
                .collect::<Result<Vec<_>>>()?;
            let query = load_image(&a.query)?;
            let hits = nearest_neighbors(&query, corpus.iter().map(|(id, img)| (*id, img)), a.k)?;
            for (rank, h) in hits.iter().enumerate() {
                println!("{}. {} {:.6}", rank + 1, h.id, h.distance);
            }
        }
        Cmd::TuringStats(a) => {
            let rows = load_responses(&a.responses)?;
            let unit = match a.unit {
                UnitArg::Participant => Unit::Participant,
                UnitArg::Painting => Unit::Painting,
            };
            let report = turing_report(&rows, unit).map_err(|e| Error::format(&a.responses, e))?;
            print!("{}", render_text(&report));
            if let Some(path) = &a.json {
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
            }
        }
        Cmd::ServeSurvey(a) => {
            let opts = ServerOptions {
                pools: [a.human, a.baseline, a.sapgan],
                responses: a.responses,
                static_dir: a.static_dir,
                seed: a.seed,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Config(format!("runtime: {e}")))?;
            rt.block_on(serve(opts, SocketAddr::new(a.host, a.port)))?;
        }
        Cmd::Translate(a) => {
            let model = load_paint_generator(&a.checkpoint)?;
            let input = load_image(&a.input)?;
            let edges = edge_tensor(&input, model.config().size, a.extract_edges)?;
            let painting = model.translate(&edges)?;
            save_png(&a.out, &data::denormalize(&painting, 0)?)?;
            println!("{}", a.out.display());
        }
    }
    Ok(())
}

/// Full entry point: parse, run, and map the outcome to an exit status.
pub fn run(args: Vec<OsString>) -> u8 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match parse(args) {
        Ok(Parsed::Info(e)) => {
            let _ = e.print();
            0
        }
        Err((code, msg)) => {
            eprint!("{msg}");
            code
        }
        Ok(Parsed::Run(cmd)) => match execute(cmd) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_RUNTIME
            }
        },
    }
}
