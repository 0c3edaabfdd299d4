//! Command implementations shared by the binary and the tests.

use std::path::{Path, PathBuf};

use evslam_core::diff::ParamVector;
use evslam_core::field::SceneField;
use evslam_core::geometry::{Aabb, PoseSE3};
use evslam_core::render::SamplingConfig;
use evslam_core::slam::{FrameObs, Slam, SlamConfig, SlamOutput};
use evslam_core::world::{synthesize, AnalyticScene, Calibration, DegradeMode, DegradeParams, OrbitPath, Sequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{slam_config, KeyValues};
use crate::dataset::{read_dataset, write_dataset, Dataset};
use crate::error::{read_file, write_file, CliError, CliResult};
use crate::formats::{checkpoint, losslog, ply, tum};
use crate::mesh::{extract_mesh, Mesh};
use crate::metrics::{compute_depth_l1, compute_mesh_metrics, DepthEval, MeshReport};

pub const TRAJ_EST: &str = "traj_est.txt";
pub const CHECKPOINT: &str = "field.ckpt";
pub const LOSS_LOG: &str = "losses.csv";

/// Dataset generation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub frames: usize,
    pub frame_rate: f64,
    pub scene_seed: u64,
    pub modes: Vec<DegradeMode>,
    pub degrade: DegradeParams,
    pub orbit: OrbitPath,
}

/// Required keys: `frames`, `frame_rate`. Optional: `seed` (overridden by
/// `seed_flag`), `modes` (comma list, overridden by `mode_flag`), `k_sub`,
/// `gamma`, and `orbit_*` trajectory shape keys.
pub fn gen_spec(kv: &KeyValues, seed_flag: Option<u64>, mode_flag: Option<DegradeMode>) -> CliResult<GenSpec> {
    let frames: usize = kv.require("frames")?;
    let frame_rate: f64 = kv.require("frame_rate")?;
    if frames == 0 || !(frame_rate > 0.0) {
        return Err(CliError::Config("frames and frame_rate must be positive".into()));
    }
    let config_seed: u64 = kv.or("seed", 0)?;
    let names: Vec<String> = kv.list("modes")?.unwrap_or_else(|| vec!["normal".into()]);
    let mut modes = Vec::new();
    for n in &names {
        let m = DegradeMode::parse(n).ok_or_else(|| CliError::Config(format!("unknown mode {n:?}")))?;
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    let d = DegradeParams::default();
    let o = OrbitPath::default();
    let spec = GenSpec {
        frames,
        frame_rate,
        scene_seed: seed_flag.unwrap_or(config_seed),
        modes: mode_flag.map(|m| vec![m]).unwrap_or(modes),
        degrade: DegradeParams {
            k_sub: kv.or("k_sub", d.k_sub)?,
            gamma: kv.or("gamma", d.gamma)?,
        },
        orbit: OrbitPath {
            radius_x: kv.or("orbit_radius_x", o.radius_x)?,
            radius_y: kv.or("orbit_radius_y", o.radius_y)?,
            height_amplitude: kv.or("orbit_height_amplitude", o.height_amplitude)?,
            angular_speed: kv.or("orbit_angular_speed", o.angular_speed)?,
            start_angle: kv.or("orbit_start_angle", o.start_angle)?,
            look_height: kv.or("orbit_look_height", o.look_height)?,
            ..o
        },
    };
    kv.finish()?;
    Ok(spec)
}

/// Scene and sequence of one mode.
pub fn synthesize_spec(spec: &GenSpec, mode: DegradeMode) -> CliResult<(AnalyticScene, Sequence)> {
    let scene = AnalyticScene::room(spec.scene_seed);
    let traj = spec.orbit.sample(spec.frames, spec.frame_rate)?;
    let seq = synthesize(&scene, &traj, &Calibration::default(), mode, &spec.degrade)?;
    Ok((scene, seq))
}

/// Write one dataset directory per mode under `out`, named after the mode.
pub fn cmd_gen(spec: &GenSpec, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for &mode in &spec.modes {
        let (scene, seq) = synthesize_spec(spec, mode)?;
        let dir = out.join(mode.name());
        write_dataset(&dir, &scene, &seq)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Ray sampling used by a pipeline with `cfg` on a scene with `bounds`.
pub fn sampling_for(cfg: &SlamConfig, bounds: &Aabb) -> SamplingConfig {
    SamplingConfig {
        m_strat: cfg.m_strat,
        m_surf: cfg.m_surf,
        near: cfg.near,
        far: bounds.diagonal(),
        tr: cfg.tr,
    }
}

/// Result of a pipeline run with timestamps attached.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub trajectory: Vec<(u64, PoseSE3)>,
    pub output: SlamOutput,
    pub sampling: SamplingConfig,
}

/// Track the whole dataset, starting from its first ground-truth pose.
pub fn run_pipeline(ds: &Dataset, cfg: SlamConfig) -> CliResult<RunResult> {
    let frames: Vec<FrameObs> = ds
        .trajectory
        .iter()
        .zip(ds.rgb.iter().zip(&ds.depth))
        .map(|((t, _), (rgb, depth))| FrameObs::new(*t, rgb.clone(), depth.clone(), &ds.calib))
        .collect();
    let sampling = sampling_for(&cfg, &ds.scene.bounds);
    let slam = Slam::new(cfg, &ds.calib, &frames, &ds.events, ds.scene.bounds)?;
    let output = slam.run(ds.trajectory[0].1)?;
    let finite = output.poses.iter().all(|p| p.translation().iter().all(|x| x.is_finite()) && p.rotation().coords.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(CliError::Numerical("estimated poses are not finite".into()));
    }
    let trajectory = ds.trajectory.iter().zip(&output.poses).map(|((t, _), p)| (*t, *p)).collect();
    Ok(RunResult {
        trajectory,
        output,
        sampling,
    })
}

/// Run configuration with the `--seed` override applied.
pub fn run_config(kv: &KeyValues, seed_flag: Option<u64>) -> CliResult<SlamConfig> {
    let mut cfg = slam_config(kv)?;
    kv.finish()?;
    if let Some(s) = seed_flag {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Run the pipeline on `dataset` and write the estimated trajectory, the
/// field checkpoint and the loss log into `out`. Nothing is written unless
/// the run succeeds.
pub fn cmd_run(dataset: &Path, cfg: SlamConfig, out: &Path) -> CliResult<RunResult> {
    let ds = read_dataset(dataset)?;
    let run = run_pipeline(&ds, cfg)?;
    write_file(&out.join(TRAJ_EST), tum::encode(&run.trajectory).as_bytes())?;
    write_file(
        &out.join(CHECKPOINT),
        &checkpoint::encode(&run.output.field, &run.output.params, &run.sampling),
    )?;
    write_file(&out.join(LOSS_LOG), losslog::encode(&run.output.log).as_bytes())?;
    Ok(run)
}

pub fn load_checkpoint(path: &Path) -> CliResult<checkpoint::Checkpoint> {
    checkpoint::decode(&read_file(path)?).map_err(|e| CliError::parse(path, e))
}

/// Depth L1 (cm) of a field against the ground-truth depth of `ds`.
pub fn field_depth_l1(field: &SceneField, params: &ParamVector, ds: &Dataset, eval: &DepthEval, seed: u64) -> CliResult<f64> {
    let views: Vec<(PoseSE3, &evslam_core::image::Image)> = ds.trajectory.iter().map(|(_, p)| *p).zip(&ds.depth).collect();
    let mut sc = field.scratch();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l1 = compute_depth_l1(|x| field.sdf(params.values(), x, &mut sc), &views, &ds.calib.rgb, eval, &mut rng)
        .map_err(CliError::Data)?;
    Ok(l1)
}

pub fn cmd_depth_l1(dataset: &Path, ckpt: &Path, poses: usize, pixels: usize, seed: u64) -> CliResult<f64> {
    let ds = read_dataset(dataset)?;
    let ck = load_checkpoint(ckpt)?;
    let eval = DepthEval {
        poses,
        pixels,
        ..DepthEval::new(ck.sampling.near, ck.sampling.far)
    };
    field_depth_l1(&ck.field, &ck.params, &ds, &eval, seed)
}

pub fn field_mesh(field: &SceneField, params: &ParamVector, resolution: usize) -> CliResult<Mesh> {
    let mut sc = field.scratch();
    extract_mesh(|x| field.sdf(params.values(), x, &mut sc), &field.config().bounds, resolution).map_err(CliError::Config)
}

pub fn cmd_mesh(ckpt: &Path, resolution: usize, out: &Path) -> CliResult<Mesh> {
    let ck = load_checkpoint(ckpt)?;
    let mesh = field_mesh(&ck.field, &ck.params, resolution)?;
    write_file(out, &ply::encode(&mesh))?;
    Ok(mesh)
}

pub fn cmd_mesh_metrics(mesh: &Path, scene: &Path, samples: usize, seed: u64) -> CliResult<MeshReport> {
    let m = ply::decode(&read_file(mesh)?).map_err(|e| CliError::parse(mesh, e))?;
    let s = crate::dataset::read_scene(scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    compute_mesh_metrics(&m, &s, samples, &mut rng).map_err(CliError::Data)
}
