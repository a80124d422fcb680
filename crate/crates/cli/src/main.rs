mod output;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lift3d::geometry::{load_rgbd, write_mesh_ply};
use lift3d::guidance::{two_tone_sphere, Guidance, RemoteGuidance, SyntheticOracle};
use lift3d::latentfield::write_checkpoint;
use lift3d::trainer::{build_bank, build_scaffold, calibrate_oracle, codec_for, run, RunInputs, TrainConfig};
use lift3d::{Tensor3, Vec3};
use output::{write_error, write_frames, FileRecord, Manifest};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

const EXIT_INTERNAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CONNECTIVITY: u8 = 3;

#[derive(Parser)]
#[command(name = "lift3d", version, about = "Lift a single view into a trained 3D latent field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the scaffold, train the field and export an orbit of frames.
    Run(RunArgs),
    /// Build the scaffold and its view bank from an RGB-D image.
    Scaffold(ScaffoldArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Oracle,
    Remote,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Oracle => "oracle",
            Mode::Remote => "remote",
        }
    }
}

#[derive(Args)]
struct GuidanceArgs {
    /// `oracle` trains against a built-in synthetic target; `remote` talks to
    /// the diffusion sidecar.
    #[arg(long, value_enum, default_value = "oracle")]
    guidance: Mode,
    #[arg(long, env = "LIFT3D_GUIDANCE_URL", default_value = "http://127.0.0.1:8765")]
    endpoint: String,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    /// Extra attempts for unreachable or timed-out requests.
    #[arg(long, default_value_t = 1)]
    retries: usize,
}

#[derive(Args)]
struct RunArgs {
    /// Object description.
    #[arg(long)]
    text: String,
    /// Reference image (PNG); generated from the text when absent.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Depth for `--image` (raw f32 or tensor file); estimated when absent.
    #[arg(long, requires = "image")]
    depth: Option<PathBuf>,
    #[command(flatten)]
    guidance: GuidanceArgs,
    /// JSON training configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Total iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Pre-rendered in-boundary views.
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    orbit_views: Option<usize>,
    #[arg(long)]
    latent_side: Option<usize>,
    #[arg(long)]
    field_resolution: Option<usize>,
    /// Print a progress line every this many iterations (0 disables).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Args)]
struct ScaffoldArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    /// Pre-rendered in-boundary views.
    #[arg(long, default_value_t = 64)]
    views: usize,
    #[arg(long, default_value = "scaffold")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    guidance: GuidanceArgs,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Connectivity(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Connectivity(_) => EXIT_CONNECTIVITY,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Connectivity(e) | Failure::Internal(e) => e,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Scaffold(args) => cmd_scaffold(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig, Failure> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .map_err(Failure::Usage)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))
                .map_err(Failure::Usage)
        }
    }
}

fn run_config(args: &RunArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(n) = args.iterations {
        cfg = cfg.with_total(n);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(v) = args.views {
        cfg.n_prerender = v;
    }
    if let Some(v) = args.orbit_views {
        cfg.orbit_views = v;
    }
    if let Some(v) = args.latent_side {
        cfg.latent_side = v;
    }
    if let Some(v) = args.field_resolution {
        cfg.field_resolution = v;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    Ok(cfg)
}

/// Guidance backend for a run. The oracle's target is calibrated to the
/// configuration; the remote sidecar must answer its health probe.
fn connect(args: &GuidanceArgs, cfg: &TrainConfig) -> Result<Box<dyn Guidance>, Failure> {
    match args.guidance {
        Mode::Oracle => {
            let raw = SyntheticOracle::new(two_tone_sphere(Vec3::zeros(), 0.6));
            let oracle = calibrate_oracle(&raw, cfg)
                .context("calibrating the synthetic oracle")
                .map_err(Failure::Internal)?;
            Ok(Box::new(oracle))
        }
        Mode::Remote => {
            let remote = RemoteGuidance::new(&args.endpoint, Duration::from_secs(args.timeout), args.retries);
            match remote.health() {
                Ok(models) => eprintln!("guidance at {} serves {}", args.endpoint, models.join(", ")),
                Err(e) if e.is_transient() => {
                    return Err(Failure::Connectivity(anyhow!("guidance at {} is unreachable: {e}", args.endpoint)))
                }
                Err(e) => return Err(Failure::Internal(anyhow!("guidance health check failed: {e}"))),
            }
            Ok(Box::new(remote))
        }
    }
}

fn load_image(path: &Path) -> anyhow::Result<Tensor3> {
    let img = image::open(path)
        .with_context(|| format!("reading {}", path.display()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor3::zeros(3, h, w);
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            t.set(c, y as usize, x as usize, p[c] as f64 / 255.0);
        }
    }
    Ok(t)
}

fn load_inputs(args: &RunArgs) -> anyhow::Result<RunInputs> {
    let mut inputs = RunInputs::text(&args.text);
    match (&args.image, &args.depth) {
        (Some(image), Some(depth)) => {
            let rgbd = load_rgbd(image, depth)?;
            let plane = rgbd.width * rgbd.height;
            let mut data = vec![0.0; 3 * plane];
            for (p, px) in rgbd.rgb.iter().enumerate() {
                for c in 0..3 {
                    data[c * plane + p] = px[c];
                }
            }
            inputs.image = Tensor3::from_vec(3, rgbd.height, rgbd.width, data);
            inputs.depth = Some(rgbd.depth);
        }
        (Some(image), None) => inputs.image = Some(load_image(image)?),
        _ => {}
    }
    Ok(inputs)
}

/// Records a failure in the run directory and passes it on.
fn fail(out: &Path, stage: &str, f: Failure) -> Failure {
    if let Err(e) = write_error(out, stage, f.error(), f.code()) {
        eprintln!("could not write the error file: {e:#}");
    }
    f
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let cfg = run_config(&args)?;
    let out = args.out.clone();
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::Internal)?;
    output::clear_previous(&out).map_err(Failure::Internal)?;

    let inputs_hashed = [args.image.as_deref(), args.depth.as_deref()]
        .into_iter()
        .flatten()
        .map(FileRecord::hash)
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(Failure::Usage)?;
    let manifest = Manifest::for_run(&cfg, &args.text, inputs_hashed, args.guidance.guidance.as_str(), &args.guidance.endpoint);
    manifest.write(&out).map_err(Failure::Internal)?;

    let guidance = connect(&args.guidance, &cfg).map_err(|f| fail(&out, "guidance", f))?;
    let inputs = load_inputs(&args).map_err(|e| fail(&out, "input", Failure::Internal(e)))?;

    let log_every = args.log_every;
    let mut progress = |b: &lift3d::trainer::LossBreakdown| {
        if log_every > 0 && b.iteration % log_every == 0 {
            eprintln!(
                "iter {:>5}  ({:6.1}, {:5.1}) {}  side {:>3}  L_R {:.4}  L_sp {:.4}  |g| {:.3}",
                b.iteration,
                b.theta,
                b.phi,
                if b.is_ib { "IB" } else { "OB" },
                b.side,
                b.l_r,
                b.l_sp,
                b.l_isds_grad_norm
            );
        }
    };
    let result = match run(&cfg, &inputs, guidance.as_ref(), &mut progress) {
        Ok(r) => r,
        Err(e) => {
            let stage = e.stage.to_string();
            let f = if e.is_connectivity() {
                Failure::Connectivity(e.into())
            } else {
                Failure::Internal(e.into())
            };
            return Err(fail(&out, &stage, f));
        }
    };

    let export = || -> anyhow::Result<()> {
        output::write_json(&out.join(output::REPORT_FILE), &result.report)?;
        write_checkpoint(&out.join(output::CHECKPOINT_FILE), &result.field, cfg.t_total)?;
        write_frames(&out.join(output::FRAMES_DIR), &result.frames)?;
        Ok(())
    };
    export().map_err(|e| fail(&out, "export", Failure::Internal(e)))?;
    eprintln!("wrote {} frames to {}", result.frames.len(), out.display());
    Ok(())
}

fn cmd_scaffold(args: ScaffoldArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.n_prerender = args.views;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    let rgbd = load_rgbd(&args.image, &args.depth)
        .with_context(|| format!("loading {} and {}", args.image.display(), args.depth.display()))
        .map_err(Failure::Usage)?;
    let plane = rgbd.width * rgbd.height;
    let mut rgb = Tensor3::zeros(3, rgbd.height, rgbd.width);
    for (p, px) in rgbd.rgb.iter().enumerate() {
        for c in 0..3 {
            rgb.data[c * plane + p] = px[c];
        }
    }
    let scaffold = build_scaffold(&rgb, &rgbd.depth, &cfg).map_err(|e| Failure::Internal(e.into()))?;

    let guidance: Box<dyn Guidance> = match args.guidance.guidance {
        Mode::Oracle => Box::new(SyntheticOracle::new(two_tone_sphere(Vec3::zeros(), 0.6))),
        Mode::Remote => connect(&args.guidance, &cfg)?,
    };
    let codec = codec_for(guidance.as_ref());
    let bank = build_bank(&scaffold.mesh, &cfg, codec.as_ref()).map_err(|e| Failure::Internal(e.into()))?;

    let write = || -> anyhow::Result<()> {
        std::fs::create_dir_all(&args.out)?;
        write_mesh_ply(&args.out.join("scaffold.ply"), &scaffold.mesh)?;
        bank.save(&args.out.join("bank"))?;
        Ok(())
    };
    write().map_err(Failure::Internal)?;
    eprintln!(
        "scaffold: {} vertices, {} faces, watertight {}; {} views in {}",
        scaffold.mesh.vertices.len(),
        scaffold.mesh.faces.len(),
        scaffold.mesh.is_watertight(),
        bank.len(),
        args.out.join("bank").display()
    );
    Ok(())
}
