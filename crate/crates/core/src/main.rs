use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use spiral_unroll::features::pipeline::{extract_features, FeatureParams, SURFACE_CHANNEL};
use spiral_unroll::fit::{fit, FitConfig};
use spiral_unroll::io;
use spiral_unroll::mesh::{default_steps, extract_mesh, sample_unrolled_volume};
use spiral_unroll::metrics::{evaluate, MetricsOptions};
use spiral_unroll::phantom::raster::{rasterize, RasterConfig};
use spiral_unroll::phantom::{make_phantom, PhantomConfig};
use spiral_unroll::volume::{quantize, Volume};
use spiral_unroll::Error;

const THREADS_ENV: &str = "UNROLL_THREADS";

#[derive(Parser)]
#[command(name = "unroll", version, about = "Fit a deformed spiral to a rolled-scroll scan and unroll it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scroll: observations, ground truth and a raster.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Extract paths, normals and winding links from a probability volume.
    Features {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fit the spiral model to a feature directory.
    Fit {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Export the fitted surface as an OBJ quad mesh with UVs.
    Mesh {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Angular step in radians; defaults to about one scan unit of arc.
        #[arg(long)]
        dtheta: Option<f64>,
        #[arg(long)]
        dz: Option<f64>,
    },
    /// Evaluate a fitted model against a labelled ground-truth mesh.
    Metrics {
        /// Ground-truth OBJ with `#w` winding labels.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// JSON report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Sample the scan along the fitted surface into a flattened stack.
    Render {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Total slab thickness along the normal, in scan units.
        #[arg(long, default_value_t = 4.0)]
        thickness: f64,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = SURFACE_CHANNEL)]
        channel: usize,
        #[arg(long)]
        dtheta: Option<f64>,
        #[arg(long)]
        dz: Option<f64>,
        /// Also write one 16-bit PGM per layer.
        #[arg(long)]
        pgm: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PhantomRun {
    #[serde(flatten)]
    phantom: PhantomConfig,
    raster: RasterConfig,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Data(other),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn resolve<T>(defaults: &T, args: &ConfigArgs) -> std::result::Result<T, Failure>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut kv = match &args.config {
        Some(p) => io::read_config(p)?,
        None => BTreeMap::new(),
    };
    for s in &args.set {
        let Some((k, v)) = s.split_once('=') else {
            return Err(Failure::Usage(format!("--set expects KEY=VALUE, got `{s}`")));
        };
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(io::apply_overrides(defaults, &kv)?)
}

fn write_snapshot<T: Serialize>(path: &Path, config: &T) -> Result<(), Error> {
    io::write_bytes(path, io::config_snapshot(config).as_bytes())
}

fn cmd_phantom(out: &Path, seed: Option<u64>, cfg: &ConfigArgs) -> CmdResult {
    let defaults = PhantomRun {
        phantom: PhantomConfig::default(),
        raster: RasterConfig {
            dims: [128, 128, 128],
            ..RasterConfig::default()
        },
    };
    let mut run = resolve(&defaults, cfg)?;
    if let Some(s) = seed {
        run.phantom.seed = s;
    }
    run.raster.validate()?;
    let ph = make_phantom(&run.phantom)?;
    write_snapshot(&out.join("phantom.conf"), &run)?;
    io::write_features(&out.join("observations"), &ph.features)?;
    io::write_model(&out.join("truth.spfm"), &ph.true_model())?;
    let (dth, dz) = default_steps(&ph.truth.spiral);
    let gt = ph.gt_mesh(dth, dz)?;
    io::write_bytes(&out.join("gt.obj"), io::encode_trimesh_obj(&gt).as_bytes())?;
    let vol = rasterize(&ph, &run.raster)?;
    io::write_volume(&out.join("volume.volp"), &vol)?;
    log::info!(
        "phantom: {} paths, {} links, {} normals",
        ph.features.paths.len(),
        ph.features.links.len(),
        ph.features.normals.len()
    );
    Ok(())
}

fn cmd_features(volume: &Path, out: &Path, seed: Option<u64>, cfg: &ConfigArgs) -> CmdResult {
    let mut params = resolve(&FeatureParams::default(), cfg)?;
    if let Some(s) = seed {
        params.seed = s;
    }
    let vol = io::read_volume(volume)?;
    let features = extract_features(&vol, &params)?;
    write_snapshot(&out.join("features.conf"), &params)?;
    io::write_features(out, &features)?;
    log::info!(
        "features: {} paths, {} links, {} normals",
        features.paths.len(),
        features.links.len(),
        features.normals.len()
    );
    Ok(())
}

fn cmd_fit(features: &Path, out: &Path, seed: Option<u64>, cfg: &ConfigArgs) -> CmdResult {
    let mut config = resolve(&FitConfig::default(), cfg)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let fs = io::read_features(features)?;
    write_snapshot(&out.join("fit.conf"), &config)?;
    let model = fit(&fs, &config)?;
    io::write_model(&out.join("model.spfm"), &model)?;
    io::write_bytes(&out.join("history.csv"), io::encode_history(&model.history).as_bytes())?;
    log::info!("fit: final loss {}", model.final_loss);
    Ok(())
}

fn steps_for(model: &spiral_unroll::fit::FittedModel, dtheta: Option<f64>, dz: Option<f64>) -> (f64, f64) {
    let (a, b) = default_steps(&model.transform.spiral);
    (dtheta.unwrap_or(a), dz.unwrap_or(b))
}

fn cmd_mesh(model: &Path, out: &Path, dtheta: Option<f64>, dz: Option<f64>) -> CmdResult {
    let m = io::read_model(model)?;
    let (dth, dz) = steps_for(&m, dtheta, dz);
    if !(dth > 0.0 && dz > 0.0) {
        return Err(Failure::Usage("--dtheta and --dz must be positive".into()));
    }
    let mesh = extract_mesh(&m.transform, dth, dz)?;
    io::write_bytes(out, io::encode_obj(&mesh).as_bytes())?;
    Ok(())
}

fn cmd_metrics(gt: &Path, model: &Path, out: Option<&Path>, seed: Option<u64>, cfg: &ConfigArgs) -> CmdResult {
    let mut opts = resolve(&MetricsOptions::default(), cfg)?;
    if let Some(s) = seed {
        opts.seed = s;
    }
    let gt = io::read_obj(gt)?;
    if gt.winding.is_none() {
        return Err(Failure::Data(Error::Domain("ground-truth mesh has no `#w` winding labels".into())));
    }
    let m = io::read_model(model)?;
    let (dth, dz) = default_steps(&m.transform.spiral);
    let mesh = extract_mesh(&m.transform, dth, dz)?;
    let report = evaluate(&gt, &m.transform, &mesh, &opts)?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match out {
        Some(p) => {
            io::write_bytes(p, text.as_bytes())?;
            if let Some(dir) = p.parent() {
                write_snapshot(&dir.join("metrics.conf"), &opts)?;
            }
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_render(
    model: &Path,
    volume: &Path,
    out: &Path,
    thickness: f64,
    layers: usize,
    channel: usize,
    dtheta: Option<f64>,
    dz: Option<f64>,
    pgm: bool,
) -> CmdResult {
    if layers == 0 || !(thickness >= 0.0) {
        return Err(Failure::Usage("--layers must be positive and --thickness non-negative".into()));
    }
    let m = io::read_model(model)?;
    let vol = io::read_volume(volume)?;
    if channel >= vol.channels.len() {
        return Err(Failure::Usage(format!("--channel {channel} but the volume has {} channels", vol.channels.len())));
    }
    let (dth, dz) = steps_for(&m, dtheta, dz);
    let mesh = extract_mesh(&m.transform, dth, dz)?;
    let stack = sample_unrolled_volume(&mesh, &vol, channel, thickness, layers)?;
    if stack.degenerate > 0 {
        log::warn!("{} vertices had no usable normal", stack.degenerate);
    }
    let mut flat = Volume::new([stack.ni, stack.nj, stack.layers], [1.0; 3], 1);
    for l in 0..stack.layers {
        for j in 0..stack.nj {
            for i in 0..stack.ni {
                let at = flat.index(i, j, l);
                flat.channels[0][at] = quantize(stack.get(i, j, l) as f64);
            }
        }
    }
    io::write_volume(&out.join("unrolled.volp"), &flat)?;
    if pgm {
        for l in 0..stack.layers {
            io::write_bytes(&out.join(format!("layer_{l:03}.pgm")), &io::encode_pgm_layer(&stack, l))?;
        }
    }
    Ok(())
}

fn configure_threads() -> std::result::Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    configure_threads()?;
    match &cli.command {
        Command::Phantom { out, seed, cfg } => cmd_phantom(out, *seed, cfg),
        Command::Features { volume, out, seed, cfg } => cmd_features(volume, out, *seed, cfg),
        Command::Fit { features, out, seed, cfg } => cmd_fit(features, out, *seed, cfg),
        Command::Mesh { model, out, dtheta, dz } => cmd_mesh(model, out, *dtheta, *dz),
        Command::Metrics { gt, model, out, seed, cfg } => cmd_metrics(gt, model, out.as_deref(), *seed, cfg),
        Command::Render {
            model,
            volume,
            out,
            thickness,
            layers,
            channel,
            dtheta,
            dz,
            pgm,
        } => cmd_render(model, volume, out, *thickness, *layers, *channel, *dtheta, *dz, *pgm),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
