//! Command-line surface. [`run`] returns the process exit code: 0 on
//! success, 2 on a usage error, 1 on a runtime failure.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use vesselid_core::preset::Preset;
use vesselid_seg::Variant;

use crate::service::{self, ServiceState};
use crate::stages::{self, Layout, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "vesselid", version, about = "Patient-specific portal-vein branch identification pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Root seed; every stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// JSON file merged over the preset defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    /// Run directory holding every artifact.
    #[arg(long, global = true, default_value = "vesselid-run")]
    pub dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SegmenterArg {
    AttentionUnet,
    Vesselness,
    BruteForce,
}

impl From<SegmenterArg> for Variant {
    fn from(s: SegmenterArg) -> Self {
        match s {
            SegmenterArg::AttentionUnet => Variant::AttentionUnet,
            SegmenterArg::Vesselness => Variant::Vesselness,
            SegmenterArg::BruteForce => Variant::BruteForce,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the labeled vessel phantom.
    Phantom,
    /// Simulate a tracked freehand sweep over the phantom.
    Sweep,
    /// Reconstruct the sweep into a volume with projected labels.
    Reconstruct,
    /// Reslice the reconstruction into an annotated 2D dataset.
    Augment {
        /// Sample count (default: the preset's).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train the segmentation network on the dataset.
    Train {
        #[arg(long)]
        quiet: bool,
    },
    /// Segment one stored image.
    Infer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = SegmenterArg::AttentionUnet)]
        segmenter: SegmenterArg,
    },
    /// Score every available segmenter on a held-out sweep.
    Evaluate,
    /// Time reslicing plus inference at the model input size.
    Bench {
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Serve /meta, /reslice and /stream over the reconstruction.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: SocketAddr,
        /// Segmenter used for the predicted mask; defaults to the trained
        /// model when one exists.
        #[arg(long, value_enum)]
        segmenter: Option<SegmenterArg>,
        /// Serve the phantom instead of the reconstruction.
        #[arg(long)]
        phantom: bool,
    },
}

/// Parses `argv` (including the program name) and runs it.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: {first} (see `vesselid --help`)");
            return EXIT_USAGE;
        }
    };
    if cli.global.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return EXIT_USAGE;
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {line}");
            EXIT_RUNTIME
        }
    }
}

/// Preset defaults for `(preset, seed)` with the `--config` file merged in.
pub fn load_config(g: &Global) -> Result<RunConfig> {
    let cfg = RunConfig::new(g.preset.into(), g.seed);
    match &g.config {
        None => Ok(cfg),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
            let v: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", path.display()))?;
            cfg.with_overrides(&v).with_context(|| format!("config {}", path.display()))
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let layout = Layout::new(&cli.global.dir);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build()?;
    pool.install(|| dispatch(&cli.command, cfg, &layout))
}

fn dispatch(cmd: &Command, mut cfg: RunConfig, layout: &Layout) -> Result<()> {
    match cmd {
        Command::Phantom => {
            let m = stages::phantom(&cfg, layout)?;
            println!(
                "phantom {}x{}x{} at {} mm -> {}",
                m.dims[0],
                m.dims[1],
                m.dims[2],
                m.spacing_mm,
                layout.phantom_dir().display()
            );
        }
        Command::Sweep => {
            let m = stages::sweep(&cfg, layout)?;
            println!("sweep of {} frames -> {}", m.frames, layout.sweep_file().display());
        }
        Command::Reconstruct => {
            let m = stages::reconstruct(&cfg, layout)?;
            println!(
                "reconstruction {}x{}x{} in {:.1} s, {} known voxels -> {}",
                m.dims[0],
                m.dims[1],
                m.dims[2],
                m.seconds,
                m.stats.known_voxels,
                layout.recon_dir().display()
            );
            if let Some(mae) = m.mae_vs_phantom {
                println!("MAE vs phantom {mae:.4}");
            }
        }
        Command::Augment { n } => {
            let s = stages::augment(&cfg, layout, *n)?;
            println!(
                "{} samples in {:.1} s ({:.0}/s) -> {}",
                s.samples,
                s.stats.seconds,
                s.stats.samples_per_second,
                s.dir.display()
            );
        }
        Command::Train { quiet } => {
            let hook: Option<Box<dyn FnMut(&vesselid_seg::train::EpochStats)>> = if *quiet {
                None
            } else {
                Some(Box::new(|e: &vesselid_seg::train::EpochStats| {
                    eprintln!(
                        "epoch {:>3}  train {:.4}  val {:.4}  val dice {:.4}  {:.1} s",
                        e.epoch, e.train_loss, e.val_loss, e.val_dice, e.seconds
                    )
                }))
            };
            let r = stages::train(&cfg, layout, hook)?;
            println!(
                "best {} val dice {:.4} -> {}",
                r.checkpoint_id,
                r.best_val_dice,
                layout.model_file().display()
            );
        }
        Command::Infer { input, output, segmenter } => {
            let s = stages::infer(&cfg, layout, input, output, (*segmenter).into())?;
            println!("{} {}x{} labels {:?} -> {}", s.segmenter, s.width, s.height, s.label_counts, s.output.display());
        }
        Command::Evaluate => {
            let r = stages::evaluate(&cfg, layout)?;
            print!("{}", r.to_table());
        }
        Command::Bench { frames } => {
            if let Some(n) = frames {
                cfg.bench.frames = *n;
            }
            let r = stages::bench(&cfg, layout)?;
            print!("{}", r.to_table());
        }
        Command::Serve { addr, segmenter, phantom } => {
            let state = service_state(&cfg, layout, segmenter.map(Into::into), *phantom)?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(service::serve(Arc::new(state), *addr))?;
        }
    }
    Ok(())
}

/// Loads the artifacts the service needs.
pub fn service_state(cfg: &RunConfig, layout: &Layout, segmenter: Option<Variant>, phantom: bool) -> Result<ServiceState> {
    let (volume, labels) = if phantom {
        let ph = stages::load_phantom(layout)?;
        (ph.intensity, ph.labels)
    } else {
        let r = stages::load_reconstruction(layout)?;
        (r.volume, r.labels)
    };
    let variant = segmenter.or_else(|| layout.model_file().exists().then_some(Variant::AttentionUnet));
    let segmenter = variant.map(|v| stages::load_segmenter(cfg, layout, v)).transpose()?;
    Ok(ServiceState {
        volume,
        labels,
        geometry: cfg.pipeline.dataset.crop,
        segmenter,
    })
}
