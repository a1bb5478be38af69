//! `artmesh`: reconstruct a colored mesh from an artwork image and two depth
//! maps, score renders against artworks, and inspect PLY meshes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use artmesh::config::{ConfigError, MethodRenders, PipelineConfig};
use artmesh::mesh::{mesh_stats, read_ply};
use artmesh::pipeline::{run_eval, run_reconstruct, PipelineError};
use clap::{Args, Parser, Subcommand};

const EXIT_STAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "artmesh", about = "Artwork mesh reconstruction toolkit", disable_version_flag = true)]
struct Cli {
    /// Directory every relative path (config, inputs, outputs) is resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Increase log verbosity (-v info, -vv debug); RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run fusion through PLY export and write the artifacts to output.dir.
    Reconstruct(ReconstructArgs),
    /// Score render embeddings against artwork embeddings and print the table.
    Eval(EvalArgs),
    /// Print vertex, triangle and manifold statistics of a PLY mesh.
    Inspect(InspectArgs),
    /// Print the version.
    Version,
}

/// Declares one optional flag per config key; each given flag becomes a dotted override.
macro_rules! key_flags {
    ($($field:ident => $key:literal),* $(,)?) => {
        #[derive(Args, Default)]
        struct KeyFlags {
            $(
                #[arg(long = $key, value_name = "VALUE", help_heading = "Config keys")]
                $field: Option<String>,
            )*
        }

        impl KeyFlags {
            fn overrides(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push(($key.to_string(), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

key_flags! {
    input_image => "input.image",
    input_depth_glpn => "input.depth_glpn",
    input_depth_da => "input.depth_da",
    output_dir => "output.dir",
    fusion_alpha => "fusion.alpha",
    fusion_d_min => "fusion.d_min",
    fusion_d_max => "fusion.d_max",
    camera_fx => "camera.fx",
    camera_fy => "camera.fy",
    camera_cx => "camera.cx",
    camera_cy => "camera.cy",
    outliers_k => "outliers.k",
    outliers_std_ratio => "outliers.std_ratio",
    normals_k => "normals.k",
    poisson_depth => "poisson.depth",
    poisson_pad_fraction => "poisson.pad_fraction",
    poisson_cg_tolerance => "poisson.cg_tolerance",
    poisson_cg_max_iters => "poisson.cg_max_iters",
    poisson_iso_strategy => "poisson.iso_strategy",
    poisson_iso_value => "poisson.iso_value",
    trim_radius_cells => "trim.radius_cells",
    trim_min_count => "trim.min_count",
    export_format => "export.format",
    eval_artworks => "eval.artworks",
    eval_report => "eval.report",
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags given on the command line override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any config key as `KEY=VALUE`; applied after the dedicated flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    keys: KeyFlags,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Print the resolved config and validate inputs without running anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Render embeddings of one method as `NAME=PATH`; repeatable, replaces eval.methods.
    #[arg(long = "method", value_name = "NAME=PATH")]
    methods: Vec<String>,
}

#[derive(Args)]
struct InspectArgs {
    /// PLY mesh to inspect.
    mesh: PathBuf,
    /// Print the statistics as JSON.
    #[arg(long)]
    json: bool,
}

/// An error tagged with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_INPUT, error: error.into() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = if e.is_input_error() { EXIT_INPUT } else { EXIT_STAGE };
        Self { code, error: e.into() }
    }
}

fn split_pair(raw: &str, what: &str) -> Result<(String, String), Failure> {
    match raw.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(Failure::input(anyhow!("{what} expects NAME=VALUE, got `{raw}`"))),
    }
}

fn load_config(args: &ConfigArgs, workdir: &Path) -> Result<PipelineConfig, Failure> {
    let text = match &args.config {
        Some(p) => {
            let path = workdir.join(p);
            std::fs::read_to_string(&path)
                .map_err(|source| Failure::input(ConfigError::Io { path: path.clone(), source }))?
        }
        None => String::new(),
    };
    let mut overrides = args.keys.overrides();
    for raw in &args.set {
        overrides.push(split_pair(raw, "--set")?);
    }
    PipelineConfig::with_overrides(&text, &overrides).map_err(Failure::input)
}

fn reconstruct(args: &ReconstructArgs, workdir: &Path) -> Result<(), Failure> {
    let config = load_config(&args.config, workdir)?;
    if args.dry_run {
        print!("{}", config.to_toml());
        config.validate_reconstruct(workdir).map_err(Failure::input)?;
        config.poisson.to_params().map_err(Failure::input)?;
        log::info!("dry run: config and inputs are valid");
        return Ok(());
    }
    let outcome = run_reconstruct(&config, workdir)?;
    for path in [&outcome.fused_depth, &outcome.point_cloud, &outcome.mesh, &outcome.diagnostics] {
        println!("{}", path.display());
    }
    Ok(())
}

fn eval(args: &EvalArgs, workdir: &Path) -> Result<(), Failure> {
    let mut config = load_config(&args.config, workdir)?;
    if !args.methods.is_empty() {
        config.eval.methods = args
            .methods
            .iter()
            .map(|raw| split_pair(raw, "--method").map(|(name, path)| MethodRenders { name, renders: path.into() }))
            .collect::<Result<_, _>>()?;
    }
    let comparison = run_eval(&config, workdir)?;
    print!("{}", comparison.to_table());
    Ok(())
}

fn inspect(args: &InspectArgs, workdir: &Path) -> Result<(), Failure> {
    let path = workdir.join(&args.mesh);
    let mesh = read_ply(&path).with_context(|| format!("reading {}", path.display())).map_err(Failure::input)?;
    let s = mesh_stats(&mesh);
    if args.json {
        let json = serde_json::to_string_pretty(&s).map_err(|e| Failure { code: EXIT_STAGE, error: e.into() })?;
        println!("{json}");
        return Ok(());
    }
    println!("vertices: {}", s.vertices);
    println!("triangles: {}", s.triangles);
    println!("boundary_edges: {}", s.boundary_edges);
    println!("non_manifold_edges: {}", s.non_manifold_edges);
    println!("components: {}", s.components);
    println!("watertight: {}", s.watertight);
    println!("colors: {}", mesh.colors().is_some());
    if let (Some(lo), Some(hi)) = (s.bbox_min, s.bbox_max) {
        println!("bbox_min: {} {} {}", lo[0], lo[1], lo[2]);
        println!("bbox_max: {} {} {}", hi[0], hi[1], hi[2]);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Reconstruct(a) => reconstruct(a, &cli.workdir),
        Command::Eval(a) => eval(a, &cli.workdir),
        Command::Inspect(a) => inspect(a, &cli.workdir),
        Command::Version => {
            println!("artmesh {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
