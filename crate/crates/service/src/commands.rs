//! Command-line front end. Every subcommand mirrors one step of the HTTP
//! workflow so the whole pipeline can run headless.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use scenemask::bundle::{load_bundle, parse_ply, save_bundle, ObjectCloud, SceneBundle};
use scenemask::propagation::{propagate_trajectory, PlacementTrajectory, PropagationConfig};
use scenemask::refselect::{select_from_directories, BaselineEmbedder, EmbeddingProvider};
use scenemask::render::export::{write_masks, write_results};
use scenemask::render::{render_sequence, RenderConfig};
use scenemask::synth::{sphere_cloud, synthesize_scene, SceneKind, SyntheticSceneSpec};
use scenemask::RigidPlacement;

use crate::embed_client::{HttpEmbeddingProvider, DEFAULT_MAX_IN_FLIGHT};
use crate::session::{ServiceConfig, SessionManager};

pub type CliResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Debug, Parser)]
#[command(name = "scenemask", version, about = "Place a 3D object in a reconstructed scene and render its masks over time")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene bundle with ground truth.
    Synth(SynthArgs),
    /// Load a bundle and report what it holds.
    Validate {
        bundle: PathBuf,
    },
    /// Propagate an initial placement through every frame.
    Propagate(PropagateArgs),
    /// Render masks along a trajectory.
    Render(RenderArgs),
    /// Pick the candidate reference image closest to the masked frames.
    SelectRef(SelectRefArgs),
    /// Placement in, masks out: propagate, render and export in one go.
    Pipeline(PipelineArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "occluder-sweep")]
    pub kind: KindArg,
    #[arg(long, default_value_t = 128)]
    pub width: u32,
    #[arg(long, default_value_t = 96)]
    pub height: u32,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Scene point sampling stride in pixels.
    #[arg(long)]
    pub stride: Option<u32>,
    /// Full scene description as JSON; overrides the shape flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Points in the generated sphere object; 0 skips it.
    #[arg(long, default_value_t = 800)]
    pub object_points: usize,
    #[arg(long, default_value_t = 0.2)]
    pub object_radius: f64,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum KindArg {
    GroundPlane,
    MovingCarrier,
    OrbitCamera,
    OccluderSweep,
}

impl From<KindArg> for SceneKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::GroundPlane => SceneKind::GroundPlane,
            KindArg::MovingCarrier => SceneKind::MovingCarrier,
            KindArg::OrbitCamera => SceneKind::OrbitCamera,
            KindArg::OccluderSweep => SceneKind::OccluderSweep,
        }
    }
}

#[derive(Debug, Args)]
pub struct ObjectArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// PLY path, or the name of an object stored in the bundle. Defaults to
    /// the bundle's first object.
    #[arg(long)]
    pub object: Option<String>,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub input: ObjectArgs,
    /// Frame-0 placement JSON.
    #[arg(long)]
    pub placement: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trajectory JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub input: ObjectArgs,
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for masks and previews.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectRefArgs {
    /// Directory of RGB frames, `%05d.png`.
    #[arg(long)]
    pub frames: PathBuf,
    /// Directory of masks matching the frames.
    #[arg(long)]
    pub masks: PathBuf,
    /// Candidate images; `candidates.json` fixes their order if present.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Number of frames sampled evenly across the sequence.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    /// External embedding service; the built-in baseline embedder is used otherwise.
    #[arg(long, env = "SCENEMASK_EMBED_URL")]
    pub embed_url: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    pub max_in_flight: usize,
    #[arg(long, default_value = "selection.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub input: ObjectArgs,
    #[arg(long)]
    pub placement: PathBuf,
    #[arg(long)]
    pub propagation_config: Option<PathBuf>,
    #[arg(long)]
    pub render_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SCENEMASK_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "SCENEMASK_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, env = "SCENEMASK_SESSION_LIMIT")]
    pub session_limit: Option<usize>,
    /// Service configuration JSON; flags override its fields.
    #[arg(long, env = "SCENEMASK_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "SCENEMASK_PROPAGATION_CONFIG")]
    pub propagation_config: Option<PathBuf>,
    #[arg(long, env = "SCENEMASK_RENDER_CONFIG")]
    pub render_config: Option<PathBuf>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> CliResult<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json(p))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Resolves `--object` against the bundle: an existing file is read as PLY,
/// anything else must name a bundled object.
pub fn load_object(bundle: &SceneBundle, object: Option<&str>) -> CliResult<ObjectCloud> {
    match object {
        Some(o) if Path::new(o).is_file() => Ok(parse_ply(&std::fs::read(o)?)?),
        Some(name) => Ok(bundle
            .objects
            .get(name)
            .cloned()
            .ok_or_else(|| format!("{name:?} is neither a file nor an object in the bundle"))?),
        None => Ok(bundle
            .objects
            .values()
            .next()
            .cloned()
            .ok_or("bundle has no objects; pass --object")?),
    }
}

fn load_inputs(args: &ObjectArgs) -> CliResult<(SceneBundle, ObjectCloud)> {
    let bundle = load_bundle(&args.bundle)?;
    let object = load_object(&bundle, args.object.as_deref())?;
    Ok((bundle, object))
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let mut spec = match &args.spec {
        Some(p) => read_json(p)?,
        None => SyntheticSceneSpec::new(args.kind.into(), args.width, args.height, args.frames),
    };
    if let Some(s) = args.stride {
        spec.stride = s;
    }
    let (mut bundle, gt) = synthesize_scene(&spec)?;
    if args.object_points > 0 {
        bundle.objects.insert("sphere".into(), sphere_cloud(args.object_points, args.object_radius));
    }
    save_bundle(&bundle, &args.out)?;
    write_json(&args.out.join("suggested_placement.json"), &gt.suggested_placement)?;
    tracing::info!(out = %args.out.display(), frames = bundle.frame_count(), "bundle written");
    Ok(())
}

#[derive(Serialize)]
struct BundleSummary {
    frames: usize,
    width: u32,
    height: u32,
    stride: u32,
    has_rgb: bool,
    scene_points: Vec<usize>,
    objects: Vec<(String, usize)>,
}

pub fn validate(path: &Path) -> CliResult<()> {
    let b = load_bundle(path)?;
    let summary = BundleSummary {
        frames: b.frame_count(),
        width: b.intrinsics.width,
        height: b.intrinsics.height,
        stride: b.stride,
        has_rgb: b.rgb_frames.is_some(),
        scene_points: b.scene_points.iter().map(|s| s.len()).collect(),
        objects: b.objects.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn propagate(args: &PropagateArgs) -> CliResult<()> {
    let (bundle, object) = load_inputs(&args.input)?;
    let placement: RigidPlacement = read_json(&args.placement)?;
    let config: PropagationConfig = read_json_or_default(args.config.as_ref())?;
    let traj = propagate_trajectory(&placement, &object, &bundle, &config)?;
    for w in &traj.warnings {
        tracing::warn!("{w:?}");
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&args.out, traj.to_json())?;
    Ok(())
}

pub fn render(args: &RenderArgs) -> CliResult<()> {
    let (bundle, object) = load_inputs(&args.input)?;
    let traj = PlacementTrajectory::from_json(&std::fs::read_to_string(&args.trajectory)?)?;
    let config: RenderConfig = read_json_or_default(args.config.as_ref())?;
    let masks = render_sequence(&object, &traj, &bundle, &config)?;
    write_masks(&args.out, &masks, &config)?;
    Ok(())
}

pub fn select_ref(args: &SelectRefArgs) -> CliResult<()> {
    let provider: Box<dyn EmbeddingProvider> = match &args.embed_url {
        Some(url) => Box::new(HttpEmbeddingProvider::new(url.clone(), args.embed_dim, args.max_in_flight)?),
        None => Box::new(BaselineEmbedder),
    };
    let selection = select_from_directories(provider.as_ref(), &args.frames, &args.masks, &args.candidates, args.samples)?;
    tracing::info!(selected = %selection.candidates[selection.selected], provider = provider.name(), "reference selected");
    write_json(&args.out, &selection)
}

pub fn pipeline(args: &PipelineArgs) -> CliResult<()> {
    let (bundle, object) = load_inputs(&args.input)?;
    let placement: RigidPlacement = read_json(&args.placement)?;
    let pconf: PropagationConfig = read_json_or_default(args.propagation_config.as_ref())?;
    let rconf: RenderConfig = read_json_or_default(args.render_config.as_ref())?;
    let traj = propagate_trajectory(&placement, &object, &bundle, &pconf)?;
    let masks = render_sequence(&object, &traj, &bundle, &rconf)?;
    write_results(&args.out, &placement, &traj, &masks, &rconf)?;
    tracing::info!(out = %args.out.display(), frames = masks.len(), "results exported");
    Ok(())
}

pub fn service_config(args: &ServeArgs) -> CliResult<ServiceConfig> {
    let mut config: ServiceConfig = read_json_or_default(args.config.as_ref())?;
    if let Some(w) = args.workers {
        config.workers = w;
    }
    if let Some(l) = args.session_limit {
        config.session_limit = l;
    }
    if let Some(p) = &args.propagation_config {
        config.propagation = read_json(p)?;
    }
    if let Some(p) = &args.render_config {
        config.render = read_json(p)?;
    }
    config.propagation.validate()?;
    config.render.validate()?;
    Ok(config)
}

pub fn serve(args: &ServeArgs) -> CliResult<()> {
    let config = service_config(args)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.listen).await?;
        tracing::info!(addr = %listener.local_addr()?, workers = config.workers, "listening");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        crate::http::serve(listener, SessionManager::new(config), shutdown).await?;
        Ok(())
    })
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Validate { bundle } => validate(bundle),
        Command::Propagate(a) => propagate(a),
        Command::Render(a) => render(a),
        Command::SelectRef(a) => select_ref(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Serve(a) => serve(a),
    }
}

/// Entry point of the `scenemask` binary.
pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
