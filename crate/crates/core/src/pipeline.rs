//! End-to-end drivers behind the `reconstruct` and `eval` commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::eval::{compare_methods, load_embeddings, MethodComparison};
use crate::fusion::{fuse, normalize_range};
use crate::geometry::{back_project, estimate_normals, remove_statistical_outliers};
use crate::mesh::{mesh_stats, transfer_colors, trim_low_support, write_ply_bytes, write_point_cloud_ply};
use crate::poisson::reconstruct;
use crate::raster::{encode_pfm, load_depth, load_rgb, resize_bilinear, resize_to_multiple_of_32};

pub const FUSED_DEPTH_FILE: &str = "depth_fused.pfm";
pub const CLOUD_FILE: &str = "point_cloud.ply";
pub const MESH_FILE: &str = "mesh.ply";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration or missing inputs; nothing was run.
    #[error(transparent)]
    Input(#[from] ConfigError),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl PipelineError {
    pub fn is_input_error(&self) -> bool {
        matches!(self, PipelineError::Input(_))
    }
}

fn stage_err<E: std::error::Error + Send + Sync + 'static>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, source: Box::new(e) }
}

/// One diagnostics line.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: &'static str,
    pub seconds: f64,
    #[serde(flatten)]
    pub details: Value,
}

#[derive(Debug, Clone)]
pub struct ReconstructOutcome {
    pub fused_depth: PathBuf,
    pub point_cloud: PathBuf,
    pub mesh: PathBuf,
    pub diagnostics: PathBuf,
    pub records: Vec<StageRecord>,
}

struct Recorder {
    records: Vec<StageRecord>,
    started: Instant,
}

impl Recorder {
    fn new() -> Self {
        Self { records: Vec::new(), started: Instant::now() }
    }

    fn finish(&mut self, stage: &'static str, details: Value) {
        let seconds = self.started.elapsed().as_secs_f64();
        log::info!("{stage}: {:.3}s {details}", seconds);
        self.records.push(StageRecord { stage, seconds, details });
        self.started = Instant::now();
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(stage_err("export"))
}

/// Runs every stage in order and writes the four artifacts into `output.dir`.
///
/// Inputs are validated before any work starts, and nothing is written unless
/// every stage succeeds.
pub fn run_reconstruct(config: &PipelineConfig, workdir: &Path) -> Result<ReconstructOutcome, PipelineError> {
    config.validate_reconstruct(workdir)?;
    let params = config.poisson.to_params()?;
    let input = |p: &Option<PathBuf>| workdir.join(p.as_ref().expect("validated"));
    let mut rec = Recorder::new();

    let image = load_rgb(&input(&config.input.image)).map_err(stage_err("load"))?;
    let d_glpn = load_depth(&input(&config.input.depth_glpn)).map_err(stage_err("load"))?;
    let d_da = load_depth(&input(&config.input.depth_da)).map_err(stage_err("load"))?;
    rec.finish(
        "load",
        json!({
            "image": [image.width(), image.height()],
            "depth_glpn": [d_glpn.width(), d_glpn.height()],
            "depth_da": [d_da.width(), d_da.height()],
        }),
    );

    let image = resize_to_multiple_of_32(&image).map_err(stage_err("resize"))?;
    rec.finish("resize", json!({ "image": [image.width(), image.height()] }));

    // The combined map lives on the GLPN grid; it is brought to the image grid
    // before normalization so the output range is exactly [d_min, d_max].
    let combined = fuse(&d_glpn, &d_da, &config.fusion).map_err(stage_err("fusion"))?;
    let combined = if (combined.width(), combined.height()) == (image.width(), image.height()) {
        combined
    } else {
        resize_bilinear(&combined, image.width(), image.height()).map_err(stage_err("fusion"))?
    };
    let depth = normalize_range(&combined, &config.fusion).map_err(stage_err("fusion"))?;
    let (lo, hi) = depth.range();
    rec.finish("fusion", json!({ "size": [depth.width(), depth.height()], "min": lo, "max": hi }));

    let camera = config.camera.resolve(image.width(), image.height());
    let cloud = back_project(&depth, &image, &camera).map_err(stage_err("back_projection"))?;
    rec.finish("back_projection", json!({ "points": cloud.len(), "camera": camera }));

    let (cloud, removed) = remove_statistical_outliers(&cloud, &config.outliers).map_err(stage_err("outliers"))?;
    rec.finish("outliers", json!({ "removed": removed.len(), "points": cloud.len() }));

    let (cloud, normal_stats) = estimate_normals(&cloud, config.normals.k).map_err(stage_err("normals"))?;
    rec.finish("normals", json!({ "degenerate": normal_stats.degenerate }));

    let recon = reconstruct(&cloud, &params).map_err(stage_err("poisson"))?;
    let before = mesh_stats(&recon.mesh);
    rec.finish(
        "poisson",
        json!({ "reconstruction": recon.diagnostics, "mesh": before }),
    );

    let radius = config.trim.radius_cells * recon.grid.cell_size();
    let (trimmed, trim_report) =
        trim_low_support(&recon.mesh, &cloud, radius, config.trim.min_count).map_err(stage_err("trim"))?;
    rec.finish("trim", json!({ "radius": radius, "report": trim_report, "mesh": mesh_stats(&trimmed) }));

    let colored = transfer_colors(&trimmed, &cloud).map_err(stage_err("color_transfer"))?;
    rec.finish("color_transfer", json!({ "vertices": colored.vertices().len() }));

    let out_dir = workdir.join(&config.output.dir);
    fs::create_dir_all(&out_dir).map_err(stage_err("export"))?;
    let outcome_paths = (
        out_dir.join(FUSED_DEPTH_FILE),
        out_dir.join(CLOUD_FILE),
        out_dir.join(MESH_FILE),
        out_dir.join(DIAGNOSTICS_FILE),
    );
    write_file(&outcome_paths.0, &encode_pfm(&depth))?;
    write_point_cloud_ply(&cloud, &outcome_paths.1).map_err(stage_err("export"))?;
    write_file(&outcome_paths.2, &write_ply_bytes(&colored, config.export.format))?;
    rec.finish("export", json!({ "format": config.export.format }));

    let mut lines = String::new();
    for r in &rec.records {
        lines.push_str(&serde_json::to_string(r).expect("records serialize"));
        lines.push('\n');
    }
    write_file(&outcome_paths.3, lines.as_bytes())?;

    Ok(ReconstructOutcome {
        fused_depth: outcome_paths.0,
        point_cloud: outcome_paths.1,
        mesh: outcome_paths.2,
        diagnostics: outcome_paths.3,
        records: rec.records,
    })
}

/// Scores every method's renders against the artworks; writes the table to
/// `eval.report` when set.
pub fn run_eval(config: &PipelineConfig, workdir: &Path) -> Result<MethodComparison, PipelineError> {
    config.validate_eval(workdir)?;
    let artworks = load_embeddings(&workdir.join(config.eval.artworks.as_ref().expect("validated")))
        .map_err(stage_err("load_embeddings"))?;
    let renders = config
        .eval
        .methods
        .iter()
        .map(|m| Ok((m.name.clone(), load_embeddings(&workdir.join(&m.renders))?)))
        .collect::<Result<Vec<_>, crate::eval::EvalError>>()
        .map_err(stage_err("load_embeddings"))?;
    let comparison = compare_methods(&artworks, &renders).map_err(stage_err("similarity"))?;
    if let Some(report) = &config.eval.report {
        let path = workdir.join(report);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(stage_err("report"))?;
        }
        fs::write(&path, comparison.to_table()).map_err(stage_err("report"))?;
    }
    Ok(comparison)
}
