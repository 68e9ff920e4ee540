//! The `gta` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data, matching or grounding
//! error, 3 execution failure (including an exhausted phase budget).

pub mod manifest;

use clap::{Args, Parser, Subcommand};
use gta_core::geometry::{CameraIntrinsics, PointCloud};
use gta_core::grounding::{cloud_from_depth, ground_spec, GroundingSpec, KeypointRef};
use gta_core::matching::io::{read_depth, read_grid, write_depth, write_grid, write_similarity_pgm};
use gta_core::matching::{match_keypoint_with_map, MatchConfig, MatchMode};
use gta_core::sim::render::{annotate, render_scene, RenderConfig};
use gta_core::sim::run::{load_reference, run_skill, RunConfig, RunError};
use gta_core::sim::validate::{reference_features, run_trial, summarize, ValidationConfig, ValidationObject};
use gta_core::sim::{Scene, SimError, Simulator};
use gta_core::skill::parse_skill;
use manifest::{compare, sha256_hex, HashCheck, Recorder, ReplayReport, RunManifest};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_EXEC: i32 = 3;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Exec(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Exec(_) => EXIT_EXEC,
        }
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "gta", version, about = "Grounded task-axis skills: matching, grounding, simulation and validation")]
pub struct Cli {
    /// Where to write the run manifest.
    #[arg(long, global = true, default_value = "gta-manifest.json")]
    pub manifest: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Transfer annotated reference pixels into a target feature grid.
    Match(MatchArgs),
    /// Ground a spec's keypoints and axes in a target image.
    Ground(GroundArgs),
    /// Run a skill in a simulated scene.
    Run(RunArgs),
    /// Grounding accuracy sweep over randomized scenes.
    Validate(ValidateArgs),
    /// Render a scene's feature grid and depth image.
    Render(RenderArgs),
    /// Fill a spec's keypoint pixels from a scene's ground-truth keypoints.
    Annotate(AnnotateArgs),
    /// Re-run a recorded command and compare its outputs.
    Replay(ReplayArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Match(_) => "match",
            Command::Ground(_) => "ground",
            Command::Run(_) => "run",
            Command::Validate(_) => "validate",
            Command::Render(_) => "render",
            Command::Annotate(_) => "annotate",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[arg(long)]
    pub reference: PathBuf,
    /// JSON list of `{object, label, pixel}`.
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long, default_value = "soft")]
    pub mode: MatchMode,
    #[arg(long, default_value_t = gta_core::matching::DEFAULT_TEMPERATURE)]
    pub temp: f64,
    /// Half-width of the reference averaging window.
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    /// Directory for one similarity-map PGM per keypoint.
    #[arg(long)]
    pub similarity_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GroundArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub depth: PathBuf,
    /// Camera intrinsics JSON.
    #[arg(long)]
    pub camera: PathBuf,
    /// Point cloud as a JSON list of `[x, y, z]`; deprojected from the
    /// depth image when absent.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// Reference `.fgrd` or scene `.json`; defaults to the spec's own.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Run configuration JSON (grounding and render sections are used).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub skill: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-tick log as JSON lines.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Run configuration JSON: gains, tolerances, limits, dt.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    /// Descriptor noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also emit per-trial results.
    #[arg(long)]
    pub trials_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Also write the point cloud as JSON triples.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub object: String,
    /// Spec whose keypoint pixels are filled in.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Manifest written by an earlier command.
    pub recorded: PathBuf,
}

/// Parses `args` (without the program name), runs the command and writes
/// its standard output to `out`. Returns the process exit code.
pub fn run_cli(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let argv = std::iter::once("gta".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let name = cli.command.name();
    let mut rec = Recorder::default();
    let code = match dispatch(&cli, &mut rec) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    };
    let skip_manifest = matches!(&cli.command, Command::Replay(r) if same_file(&r.recorded, &cli.manifest));
    let (manifest, stdout) = rec.finish(name, args, code);
    let _ = out.write_all(&stdout);
    if !skip_manifest {
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        if let Err(e) = std::fs::write(&cli.manifest, text) {
            let _ = writeln!(err, "error: {}: {e}", cli.manifest.display());
            if code == EXIT_OK {
                return EXIT_DATA;
            }
        }
    }
    code
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn dispatch(cli: &Cli, rec: &mut Recorder) -> Result<i32, CliError> {
    match &cli.command {
        Command::Match(a) => cmd_match(a, rec),
        Command::Ground(a) => cmd_ground(a, rec),
        Command::Run(a) => cmd_run(a, rec),
        Command::Validate(a) => cmd_validate(a, rec),
        Command::Render(a) => cmd_render(a, rec),
        Command::Annotate(a) => cmd_annotate(a, rec),
        Command::Replay(a) => cmd_replay(a, &cli.manifest, rec),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

/// Writes `text` to `path` when given, standard output otherwise.
fn emit(rec: &mut Recorder, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => rec.write(p, text.as_bytes()).map_err(|e| data_err(p, e)),
        None => {
            rec.print(text);
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(rec: &mut Recorder, path: &Path) -> Result<T, CliError> {
    let text = rec.read_string(path).map_err(|e| data_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| data_err(path, e))
}

fn load_config<T: serde::de::DeserializeOwned + Default>(
    rec: &mut Recorder,
    path: Option<&Path>,
) -> Result<T, CliError> {
    match path {
        Some(p) => read_json(rec, p),
        None => Ok(T::default()),
    }
}

#[derive(Debug, Serialize)]
struct MatchOutput {
    object: String,
    label: String,
    u: f64,
    v: f64,
    peak_score: f64,
    mode: MatchMode,
}

fn cmd_match(a: &MatchArgs, rec: &mut Recorder) -> Result<i32, CliError> {
    let cfg = MatchConfig {
        mode: a.mode,
        temperature: a.temp,
        radius: a.window,
    };
    rec.config = serde_json::to_value(cfg).expect("config serializes");
    let reference = read_grid(&mut rec.read(&a.reference).map_err(|e| data_err(&a.reference, e))?.as_slice())
        .map_err(|e| data_err(&a.reference, e))?;
    let target = read_grid(&mut rec.read(&a.target).map_err(|e| data_err(&a.target, e))?.as_slice())
        .map_err(|e| data_err(&a.target, e))?;
    let depth = read_depth(&mut rec.read(&a.depth).map_err(|e| data_err(&a.depth, e))?.as_slice())
        .map_err(|e| data_err(&a.depth, e))?;
    let keypoints: Vec<KeypointRef> = read_json(rec, &a.keypoints)?;
    let mut results = Vec::with_capacity(keypoints.len());
    for kp in &keypoints {
        let px = (kp.pixel[0] as usize, kp.pixel[1] as usize);
        let (m, sim) = match_keypoint_with_map(&reference, px, &target, &depth, &cfg)
            .map_err(|e| CliError::Data(format!("keypoint `{}`: {e}", kp.label)))?;
        if let Some(dir) = &a.similarity_dir {
            let mut buf = Vec::new();
            write_similarity_pgm(&mut buf, &sim).map_err(|e| data_err(dir, e))?;
            let path = dir.join(format!("{}_{}.pgm", kp.object, kp.label));
            rec.write(&path, &buf).map_err(|e| data_err(&path, e))?;
        }
        results.push(MatchOutput {
            object: kp.object.clone(),
            label: kp.label.clone(),
            u: m.u,
            v: m.v,
            peak_score: m.peak_score,
            mode: m.mode,
        });
    }
    emit(rec, a.out.as_deref(), &to_json(&results))?;
    Ok(EXIT_OK)
}

fn cmd_ground(a: &GroundArgs, rec: &mut Recorder) -> Result<i32, CliError> {
    let cfg: RunConfig = load_config(rec, a.config.as_deref())?;
    rec.config = serde_json::to_value(cfg).expect("config serializes");
    let spec: GroundingSpec = read_json(rec, &a.spec)?;
    let camera: CameraIntrinsics = read_json(rec, &a.camera)?;
    let target = read_grid(&mut rec.read(&a.target).map_err(|e| data_err(&a.target, e))?.as_slice())
        .map_err(|e| data_err(&a.target, e))?;
    let depth = read_depth(&mut rec.read(&a.depth).map_err(|e| data_err(&a.depth, e))?.as_slice())
        .map_err(|e| data_err(&a.depth, e))?;
    let cloud = match &a.cloud {
        Some(p) => {
            let text = rec.read_string(p).map_err(|e| data_err(p, e))?;
            PointCloud::from_json_triples(&text).map_err(|e| data_err(p, e))?
        }
        None => cloud_from_depth(&depth, &camera),
    };
    let ref_path = match &a.reference {
        Some(p) => p.clone(),
        None => a.spec.parent().unwrap_or(Path::new(".")).join(&spec.reference_image),
    };
    rec.note_input(&ref_path).map_err(|e| data_err(&ref_path, e))?;
    let reference = load_reference(&ref_path, &cfg.render).map_err(|e| CliError::Data(e.to_string()))?;
    let grounded = ground_spec(&spec, &reference, &target, &depth, &cloud, &camera, &cfg.grounding)
        .map_err(|e| CliError::Data(e.to_string()))?;
    emit(rec, a.out.as_deref(), &to_json(&grounded))?;
    Ok(EXIT_OK)
}

fn cmd_run(a: &RunArgs, rec: &mut Recorder) -> Result<i32, CliError> {
    let mut cfg: RunConfig = load_config(rec, a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    rec.config = serde_json::to_value(cfg).expect("config serializes");
    rec.seed = Some(cfg.seed);
    let text = rec.read_string(&a.skill).map_err(|e| data_err(&a.skill, e))?;
    let skill = parse_skill(&text).map_err(|e| data_err(&a.skill, e))?;
    let scene_text = rec.read_string(&a.scene).map_err(|e| data_err(&a.scene, e))?;
    let scene_spec = serde_json::from_str(&scene_text).map_err(|e| data_err(&a.scene, e))?;
    let scene = Scene::from_spec(&scene_spec, a.scene.parent().unwrap_or(Path::new(".")))
        .map_err(|e| data_err(&a.scene, e))?;
    let skill_dir = a.skill.parent().unwrap_or(Path::new("."));
    for u in &skill.uses {
        let spec_path = skill_dir.join(&u.spec);
        let spec: GroundingSpec = read_json(rec, &spec_path)?;
        let ref_path = spec_path.parent().unwrap_or(Path::new(".")).join(&spec.reference_image);
        rec.note_input(&ref_path).map_err(|e| data_err(&ref_path, e))?;
    }
    let inputs = gta_core::sim::load_role_inputs(&skill, skill_dir, &cfg.render)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let mut sim = Simulator::new(scene);
    let mut log = Vec::new();
    let logging = a.log.is_some();
    let result = run_skill(&skill, &mut sim, &inputs, &cfg, |r| {
        if logging {
            serde_json::to_writer(&mut log, r).expect("tick record serializes");
            log.push(b'\n');
        }
    });
    if let Some(p) = &a.log {
        rec.write(p, &log).map_err(|e| data_err(p, e))?;
    }
    let outcome = result.map_err(|e| match e {
        RunError::Exec(e) => CliError::Exec(e.to_string()),
        RunError::Sim(SimError::GraspTooFar { .. }) => CliError::Exec(e.to_string()),
        e => CliError::Data(e.to_string()),
    })?;
    emit(rec, a.out.as_deref(), &to_json(&outcome))?;
    Ok(if outcome.success { EXIT_OK } else { EXIT_EXEC })
}

const EMBEDDED_OBJECTS: [(&str, &str, &str); 6] = [
    ("spatula", include_str!("../../../data/spatula_ref.json"), include_str!("../../../data/spatula.json")),
    ("pan", include_str!("../../../data/pan_ref.json"), include_str!("../../../data/pan.json")),
    ("mug", include_str!("../../../data/mug_ref.json"), include_str!("../../../data/mug.json")),
    ("bowl", include_str!("../../../data/bowl_ref.json"), include_str!("../../../data/bowl.json")),
    ("screw", include_str!("../../../data/screw_ref.json"), include_str!("../../../data/screw.json")),
    ("block", include_str!("../../../data/block_ref.json"), include_str!("../../../data/block.json")),
];

/// The shipped single-object reference scenes with their grounding specs.
pub fn validation_objects() -> Vec<ValidationObject> {
    EMBEDDED_OBJECTS
        .iter()
        .map(|(name, scene, spec)| ValidationObject {
            scene: Scene::from_json(scene).expect("embedded scene is valid"),
            object: name.to_string(),
            spec: serde_json::from_str(spec).expect("embedded spec is valid"),
        })
        .collect()
}

fn cmd_validate(a: &ValidateArgs, rec: &mut Recorder) -> Result<i32, CliError> {
    let mut cfg: ValidationConfig = load_config(rec, a.config.as_deref())?;
    if let Some(n) = a.trials {
        cfg.trials = n;
    }
    if let Some(s) = a.noise {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(CliError::Usage(format!("--noise must be non-negative, got {s}")));
        }
        cfg.render.noise_sigma = s;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    rec.config = serde_json::to_value(cfg).expect("config serializes");
    rec.seed = Some(cfg.seed);
    let objects = validation_objects();
    let references = reference_features(&objects, &cfg.render).map_err(|e| CliError::Data(e.to_string()))?;
    let trials: Vec<_> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(&objects, &references, i, &cfg))
        .collect();
    if let Some(p) = &a.trials_out {
        rec.write(p, to_json(&trials).as_bytes()).map_err(|e| data_err(p, e))?;
    }
    let report = summarize(&trials, cfg.render.noise_sigma);
    emit(rec, a.out.as_deref(), &to_json(&report))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct RenderSummary {
    width: usize,
    height: usize,
    dim: usize,
    valid_pixels: usize,
}

fn cmd_render(a: &RenderArgs, rec: &mut Recorder) -> Result<i32, CliError> {
    let mut cfg = RenderConfig {
        noise_sigma: a.noise,
        seed: a.seed,
        stream: a.stream,
        ..Default::default()
    };
    if let Some(d) = a.dim {
        cfg.dim = d;
    }
    rec.config = serde_json::to_value(cfg).expect("config serializes");
    rec.seed = Some(a.seed);
    let text = rec.read_string(&a.scene).map_err(|e| data_err(&a.scene, e))?;
    let spec = serde_json::from_str(&text).map_err(|e| data_err(&a.scene, e))?;
    let scene = Scene::from_spec(&spec, a.scene.parent().unwrap_or(Path::new("."))).map_err(|e| data_err(&a.scene, e))?;
    let r = render_scene(&scene, &cfg).map_err(|e| data_err(&a.scene, e))?;
    let mut buf = Vec::new();
    write_grid(&mut buf, &r.features).map_err(|e| data_err(&a.features, e))?;
    rec.write(&a.features, &buf).map_err(|e| data_err(&a.features, e))?;
    let mut buf = Vec::new();
    write_depth(&mut buf, &r.depth).map_err(|e| data_err(&a.depth, e))?;
    rec.write(&a.depth, &buf).map_err(|e| data_err(&a.depth, e))?;
    if let Some(p) = &a.cloud {
        let cloud = cloud_from_depth(&r.depth, &scene.camera);
        rec.write(p, cloud.to_json_triples().as_bytes()).map_err(|e| data_err(p, e))?;
    }
    let summary = RenderSummary {
        width: r.features.width(),
        height: r.features.height(),
        dim: r.features.dim(),
        valid_pixels: r.depth.valid_count(),
    };
    rec.print(&to_json(&summary));
    Ok(EXIT_OK)
}

fn cmd_annotate(a: &AnnotateArgs, rec: &mut Recorder) -> Result<i32, CliError> {
    let text = rec.read_string(&a.scene).map_err(|e| data_err(&a.scene, e))?;
    let scene_spec = serde_json::from_str(&text).map_err(|e| data_err(&a.scene, e))?;
    let scene = Scene::from_spec(&scene_spec, a.scene.parent().unwrap_or(Path::new(".")))
        .map_err(|e| data_err(&a.scene, e))?;
    let mut spec: GroundingSpec = read_json(rec, &a.spec)?;
    let labels: Vec<String> = spec.keypoints.iter().map(|k| k.label.clone()).collect();
    let refs = annotate(&scene, &a.object, &labels, &RenderConfig::default()).map_err(|e| CliError::Data(e.to_string()))?;
    spec.keypoints = refs;
    emit(rec, a.out.as_deref(), &to_json(&spec))?;
    Ok(EXIT_OK)
}

fn cmd_replay(a: &ReplayArgs, own_manifest: &Path, rec: &mut Recorder) -> Result<i32, CliError> {
    let recorded: RunManifest = read_json(rec, &a.recorded)?;
    if recorded.command == "replay" {
        return Err(CliError::Usage("cannot replay a replay manifest".into()));
    }
    let current_inputs: BTreeMap<String, String> = recorded
        .inputs
        .keys()
        .filter_map(|p| std::fs::read(p).ok().map(|b| (p.clone(), sha256_hex(&b))))
        .collect();
    let inputs = compare(&recorded.inputs, &current_inputs);
    if let Some((path, _)) = inputs.iter().find(|(_, c)| !c.matches) {
        return Err(CliError::Data(format!("input `{path}` changed since the recorded run")));
    }

    // Re-run with the manifest diverted so the recorded one stays intact.
    static NEXT: AtomicUsize = AtomicUsize::new(0);
    let n = NEXT.fetch_add(1, Ordering::Relaxed);
    let scratch = std::env::temp_dir().join(format!("gta-replay-{}-{n}.json", std::process::id()));
    let mut args = recorded.args.clone();
    strip_manifest_flag(&mut args);
    args.push("--manifest".into());
    args.push(scratch.display().to_string());
    let mut sink = Vec::new();
    let mut errs = Vec::new();
    let code = run_cli(&args, &mut sink, &mut errs);
    let rerun: Result<RunManifest, _> = std::fs::read_to_string(&scratch)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()));
    let _ = std::fs::remove_file(&scratch);
    let rerun = rerun.map_err(|e| CliError::Exec(format!("replayed run left no manifest: {e}")))?;

    let outputs = compare(&recorded.outputs, &rerun.outputs);
    let exit_code = HashCheck {
        expected: recorded.exit_code.to_string(),
        actual: Some(code.to_string()),
        matches: code == recorded.exit_code,
    };
    let reproduced = exit_code.matches && outputs.values().all(|c| c.matches);
    let report = ReplayReport {
        command: recorded.command.clone(),
        inputs,
        outputs,
        exit_code,
        reproduced,
    };
    rec.config = serde_json::json!({ "recorded": a.recorded.display().to_string(), "manifest": own_manifest.display().to_string() });
    rec.print(&to_json(&report));
    Ok(if reproduced { EXIT_OK } else { EXIT_EXEC })
}

fn strip_manifest_flag(args: &mut Vec<String>) {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.drain(..);
    while let Some(a) = it.next() {
        if a == "--manifest" {
            it.next();
        } else if !a.starts_with("--manifest=") {
            out.push(a);
        }
    }
    drop(it);
    *args = out;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_manifest_flag_forms() {
        let mut a: Vec<String> = ["run", "--manifest", "m.json", "--seed", "3", "--manifest=x.json"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        strip_manifest_flag(&mut a);
        assert_eq!(a, vec!["run", "--seed", "3"]);
    }

    #[test]
    fn embedded_objects_load() {
        let objs = validation_objects();
        assert_eq!(objs.len(), 6);
        for o in &objs {
            assert!(o.scene.object(&o.object).is_some());
            o.spec.validate().unwrap();
        }
    }
}
