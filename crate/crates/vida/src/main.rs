use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use vida_core::forge::Split;
use vida_core::metrics::{Ablation, Method};
use vida_core::room::{rt60_schroeder, simulate_rir, Pose, RirOptions, ShoeboxRoom};

use vida::config::{KEYS_BUILD, KEYS_DEREVERB, KEYS_EVALUATE, KEYS_GRADCHECK, KEYS_RIR, KEYS_TRAIN};
use vida::dataset::{build_dataset, CleanSource, Dataset};
use vida::error::EXIT_USAGE;
use vida::evaluate::{evaluate, table, write_report, Processor};
use vida::tensor_file::read_panorama;
use vida::wav::{read_wav, write_rir, write_wav};
use vida::{PipelineConfig, Result, VidaError};

#[derive(Parser)]
#[command(name = "vida", version, about = "Visually-informed speech dereverberation")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    None,
    Wpe,
    AudioOnly,
    Vida,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::None => Method::None,
            MethodArg::Wpe => Method::Wpe,
            MethodArg::AudioOnly => Method::AudioOnly,
            MethodArg::Vida => Method::Vida,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DereverbArg {
    Wpe,
    /// A trained checkpoint, visual or audio-only.
    Model,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    FullPano,
    Fov80,
    NoSpeaker,
    NoMatching,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::FullPano => Ablation::FullPano,
            AblationArg::Fov80 => Ablation::Fov80,
            AblationArg::NoSpeaker => Ablation::NoSpeaker,
            AblationArg::NoMatching => Ablation::NoMatching,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Image-source impulse response of a shoebox room.
    #[command(after_help = KEYS_RIR)]
    SimulateRir {
        /// Room size in metres, `x,y,z`.
        #[arg(long)]
        room: String,
        /// One absorption coefficient for every wall, or six.
        #[arg(long, default_value = "0.3")]
        absorption: String,
        #[arg(long)]
        src: String,
        #[arg(long)]
        mic: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize train/val/test splits.
    #[command(after_help = KEYS_BUILD)]
    BuildDataset {
        #[arg(long)]
        out: PathBuf,
        /// Directory of clean mono WAVs. Synthetic speech when absent.
        #[arg(long, conflicts_with = "synthetic")]
        corpus: Option<PathBuf>,
        /// N samples of synthetic speech; val and test get ceil(N/8) each.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on the train split.
    #[command(after_help = KEYS_TRAIN)]
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many optimizer steps.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        audio_only: bool,
        /// Drop the matching loss.
        #[arg(long)]
        no_matching: bool,
        #[arg(long)]
        early_fusion: bool,
    },
    /// Dereverberate one file.
    #[command(after_help = KEYS_DEREVERB)]
    Dereverb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "model")]
        method: DereverbArg,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// `pano.bin` of the scene; required by visual checkpoints.
        #[arg(long)]
        pano: Option<PathBuf>,
    },
    /// Score a method on a split.
    #[command(after_help = KEYS_EVALUATE)]
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Defaults to `eval.ablation` from the config.
        #[arg(long, value_enum)]
        ablation: Option<AblationArg>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of layers and the model objective.
    #[command(after_help = KEYS_GRADCHECK)]
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        audio_only: bool,
    },
}

fn floats(arg: &str, what: &str) -> Result<Vec<f64>> {
    arg.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| VidaError::Usage(format!("{what}: cannot parse {s:?}"))))
        .collect()
}

fn triple(arg: &str, what: &str) -> Result<[f64; 3]> {
    floats(arg, what)?.try_into().map_err(|_| VidaError::Usage(format!("{what}: expected x,y,z")))
}

fn write_sidecar(path: &Path, value: serde_json::Value) -> Result<()> {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    let p = PathBuf::from(p);
    std::fs::write(&p, serde_json::to_vec_pretty(&value).expect("json serializes")).map_err(|e| VidaError::io(&p, e))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::SimulateRir { room, absorption, src, mic, out } => {
            let a = floats(&absorption, "absorption")?;
            let absorption: [f64; 6] = match a.len() {
                1 => [a[0]; 6],
                6 => a.try_into().unwrap(),
                _ => return Err(VidaError::Usage("absorption: expected one or six values".into())),
            };
            let room = ShoeboxRoom::new(triple(&room, "room")?, absorption)?;
            let [sx, sy, sz] = triple(&src, "src")?;
            let [mx, my, mz] = triple(&mic, "mic")?;
            let opts = RirOptions { max_order: cfg.sampler.max_order, ..RirOptions::default() };
            let rir = simulate_rir(&room, &Pose::new(sx, sy, sz), &Pose::new(mx, my, mz), opts)?;
            write_rir(&out, &rir)?;
            let rt60 = rt60_schroeder(&rir).ok();
            write_sidecar(&out, json!({ "config_digest": cfg.digest(), "samples": rir.samples.len(), "rt60": rt60 }))?;
            println!("wrote {} ({} samples, rt60 {})", out.display(), rir.samples.len(), rt60.map_or("n/a".into(), |t| format!("{t:.3} s")));
        }
        Command::BuildDataset { out, corpus, synthetic, seed } => {
            if let Some(n) = synthetic {
                if n < 3 {
                    return Err(VidaError::Usage("--synthetic needs at least 3 samples".into()));
                }
                let held_out = n.div_ceil(8);
                cfg.sampler.val_samples = held_out;
                cfg.sampler.test_samples = held_out;
                cfg.sampler.train_samples = n - 2 * held_out;
            }
            if let Some(s) = seed {
                cfg.sampler.rng_seed = s;
            }
            let source = match corpus {
                Some(dir) => CleanSource::corpus(&dir)?,
                None => CleanSource::Synthetic,
            };
            let info = build_dataset(&cfg, &source, &out)?;
            println!("wrote {} ({:?}), manifest sha256 {}", out.display(), info.counts, info.manifest_sha256);
        }
        Command::Train { dataset, out, steps, seed, audio_only, no_matching, early_fusion } => {
            if let Some(s) = seed {
                cfg.train.seed = s;
                cfg.model.seed = s;
            }
            cfg.model.audio_only |= audio_only;
            cfg.model.van.early_fusion |= early_fusion;
            if no_matching {
                cfg.train.lambda_match = 0.0;
            }
            let ds = Dataset::open(&dataset)?;
            let s = vida::train::train(&cfg, &ds, &out, steps)?;
            println!("trained {} steps ({} epochs), checkpoint {}", s.steps, s.epochs_completed, s.checkpoint.display());
        }
        Command::Dereverb { input, out, method, ckpt, pano } => {
            let proc = match method {
                DereverbArg::Wpe => Processor::Wpe,
                DereverbArg::Model => {
                    let path = ckpt.as_deref().ok_or_else(|| VidaError::Usage("--method model needs --ckpt".into()))?;
                    Processor::from_checkpoint(&cfg, path, Ablation::FullPano)?
                }
            };
            let clip = read_wav(&input)?;
            let pano = pano.as_deref().map(read_panorama).transpose()?;
            let y = proc.run(&cfg, &clip, pano.as_ref())?;
            write_wav(&out, &y)?;
            let method = proc.method();
            write_sidecar(&out, json!({ "config_digest": cfg.digest(), "method": method, "input": input, "checkpoint": ckpt }))?;
        }
        Command::Evaluate { dataset, split, method, ablation, ckpt, out } => {
            let ds = Dataset::open(&dataset)?;
            let ablation = ablation.map_or(cfg.eval.ablation, Ablation::from);
            let report = evaluate(&cfg, &ds, split.into(), method.into(), ablation, ckpt.as_deref())?;
            write_report(&out, &cfg, &report)?;
            print!("{}", table(&report));
        }
        Command::Gradcheck { seed, audio_only } => {
            let mut model = cfg.model.clone();
            model.audio_only |= audio_only;
            let rows = vida::gradcheck::run(&model, &cfg, seed)?;
            for r in &rows {
                println!("{:<40} max_rel_error {:.3e} checked {:>4} kinks {}", r.name, r.max_rel_error, r.checked, r.skipped_kinks);
            }
            vida::gradcheck::verdict(&rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
        Err(e) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    if let Ok(n) = std::env::var("VIDA_WORKERS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error[usage]: VIDA_WORKERS must be a positive integer");
                return ExitCode::from(EXIT_USAGE as u8);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
