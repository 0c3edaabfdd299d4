//! Acceptance checks, one PASS/FAIL line per criterion, then a summary.
//!
//! Run a subset with `cargo test --test acceptance -- 2 3 8`. Failures only
//! fail the process with `ACCEPTANCE_STRICT=1`, so that a plain workspace
//! test run still reaches the remaining test targets.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use evslam::commands::{cmd_run, field_depth_l1, run_pipeline, LOSS_LOG, TRAJ_EST, CHECKPOINT};
use evslam::dataset::{write_dataset, Dataset};
use evslam::mesh::extract_mesh;
use evslam::metrics::{compute_ate, compute_depth_l1, compute_mesh_metrics, Alignment, DepthEval};
use evslam_core::diff::{finite_difference_check_indices, Layout, ParamVector};
use evslam_core::event::{linlog, DEFAULT_THRESHOLD_C};
use evslam_core::field::{Activation, FieldConfig, SceneField};
use evslam_core::geometry::{Aabb, PoseSE3, Vec3};
use evslam_core::image::Image;
use evslam_core::render::{camera_ray, render_field, surface_guess, CameraId, RayScratch, SamplingConfig};
use evslam_core::slam::losses::{event_loss, EventLossMode};
use evslam_core::slam::objective::{Batch, EventRay, GradRequest, LossWeights, Objective, PoseGrad, PoseVar, RgbRay, Workspace};
use evslam_core::slam::pipeline::{FrameObs, Slam, SlamConfig};
use evslam_core::slam::sampling::{draw_patches, patch_probabilities, project_to_plane, splat_patch_losses, PatchGrid};
use evslam_core::world::trajectory::frame_timestamp;
use evslam_core::world::{
    synthesize, AnalyticScene, Calibration, DegradeMode, DegradeParams, OrbitPath, Sequence, Shading, Shape,
    SurfacePrimitive, Trajectory,
};
use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn orbit_sequence(scene: &AnalyticScene, frames: usize, mode: DegradeMode) -> Sequence {
    let traj = OrbitPath::default().sample(frames, 30.0).unwrap();
    synthesize(scene, &traj, &Calibration::default(), mode, &DegradeParams::default()).unwrap()
}

fn dataset(scene: AnalyticScene, seq: Sequence) -> Dataset {
    Dataset {
        calib: seq.calib,
        trajectory: seq.trajectory.poses.clone(),
        rgb: seq.frames.iter().map(|f| f.rgb.clone()).collect(),
        depth: seq.frames.iter().map(|f| f.depth.clone()).collect(),
        events: seq.events,
        scene,
    }
}

fn ate_cm(est: &[(u64, PoseSE3)], gt: &[(u64, PoseSE3)]) -> f64 {
    compute_ate(est, gt, Alignment::Se3).unwrap().rmse
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// 1. Gradient fidelity --------------------------------------------------------

fn c1_gradients() -> Verdict {
    let start = Instant::now();
    let mut fc = FieldConfig::new(Aabb::new(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, 1.0, 2.0)));
    fc.levels = vec![2, 3, 4];
    fc.grid_init = 2.0;
    // sigmoid-family activation: central differences never straddle a kink
    fc.activation = Activation::Softplus;
    let field = SceneField::new(fc);
    let n = field.param_len();
    let mut p = field.init_params(21).values().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for v in &mut p[field.crf_params()] {
        *v += rng.gen_range(-0.2..0.3);
    }
    field.project(&mut p);
    let calib = Calibration::default();
    let z = vec![0.35, 0.8, 1.05, 1.45];
    let batch = Batch {
        rgb: vec![
            RgbRay { frame: 0, pixel: (64, 47), color: [0.6, 0.3, 0.4], depth: 0.9, z: z.clone() },
            RgbRay { frame: 1, pixel: (101, 70), color: [0.2, 0.7, 0.5], depth: 1.3, z: z.clone() },
        ],
        events: vec![
            EventRay { cur: 1, prev: 0, pixel: (55, 44), count: 3.0, z_cur: z.clone(), z_prev: vec![0.3, 0.75, 1.1, 1.5] },
            EventRay { cur: 1, prev: 0, pixel: (75, 50), count: -2.0, z_cur: vec![0.2, 0.65, 1.2, 1.4], z_prev: z },
        ],
    };
    let bases = [
        PoseSE3::new(UnitQuaternion::from_euler_angles(0.04, -0.03, 0.02), Vec3::new(0.04, -0.03, 0.1)),
        PoseSE3::new(UnitQuaternion::from_euler_angles(-0.05, 0.02, 0.01), Vec3::new(-0.02, 0.05, 0.12)),
    ];
    let mut pose_layout = Layout::new();
    pose_layout.push("pose", &[2, 6]);
    let layout = Arc::new(field.layout().concat(&pose_layout));
    let mut x = p.clone();
    x.extend([0.02, -0.01, 0.015, 0.01, 0.0, -0.02, -0.01, 0.02, 0.005, 0.0, 0.015, 0.01]);
    let params = ParamVector::from_values(layout, x);
    let vars = |x: &[f64]| -> [PoseVar; 2] {
        [0, 1].map(|f| PoseVar {
            base: bases[f],
            phi: Vec3::new(x[6 * f], x[6 * f + 1], x[6 * f + 2]),
            rho: Vec3::new(x[6 * f + 3], x[6 * f + 4], x[6 * f + 5]),
        })
    };
    let mut worst = (0.0f64, String::new());
    let mut worst_fine = 0.0f64;
    let mut checked = 0;
    for mode in [EventLossMode::KnownC(DEFAULT_THRESHOLD_C), EventLossMode::Normalized] {
        // tr spans the toy depths so all five terms are active
        let obj = Objective { field: &field, calib: &calib, weights: LossWeights::default(), tr: 0.5, event_mode: mode };
        let work = |x: &[f64], grad: Option<&mut [f64]>| -> evslam_core::Result<f64> {
            let v = vars(&x[n..]);
            let poses = [v[0].pose(), v[1].pose()];
            let mut ws = Workspace::new();
            let Some(g) = grad else {
                return Ok(obj.evaluate(&mut ws, &x[..n], &poses, &batch, None)?.terms.total);
            };
            g.fill(0.0);
            let (gf, gp) = g.split_at_mut(n);
            let mut pg = [PoseGrad::default(); 2];
            let req = GradRequest { field: Some(gf), poses: Some(&mut pg), pose_mask: &[true, true] };
            let e = obj.evaluate(&mut ws, &x[..n], &poses, &batch, Some(req))?;
            for f in 0..2 {
                let (a, b) = v[f].chain(&pg[f]);
                gp[6 * f..6 * f + 3].copy_from_slice(a.as_slice());
                gp[6 * f + 3..6 * f + 6].copy_from_slice(b.as_slice());
            }
            let t = e.terms;
            assert!(t.ev > 0.0 && t.rgb > 0.0 && t.d > 0.0 && t.sdf > 0.0 && t.fs > 0.0, "inactive term {t:?}");
            Ok(t.total)
        };
        let all: Vec<usize> = (0..params.len()).collect();
        // near the rounding/truncation optimum eps^(1/3) for unit-scale inputs
        let report = finite_difference_check_indices(&params, &work, 1e-5, &all).unwrap();
        checked += report.checked;
        if report.max_rel_error >= worst.0 {
            worst = (report.max_rel_error, report.worst_index);
        }
        let fine = finite_difference_check_indices(&params, &work, 1e-6, &all).unwrap();
        worst_fine = worst_fine.max(fine.max_rel_error);
    }
    let t = secs(start);
    verdict(
        worst.0 < 1e-4 && t < 10.0,
        format!(
            "max rel err {:.2e} at {} with step 1e-5 over {checked} coordinates \
             (both event modes, 2 RGB-D + 2 event rays, M=4); step 1e-6 gives {worst_fine:.2e}; {t:.1} s",
            worst.0, worst.1
        ),
    )
}

// 2. Event telescoping --------------------------------------------------------

fn c2_telescoping() -> Verdict {
    let start = Instant::now();
    let scene = AnalyticScene::room(2);
    let seq = orbit_sequence(&scene, 50, DegradeMode::Normal);
    let sim_time = secs(start);
    let check = Instant::now();
    let c = seq.events.threshold_c();
    let b = seq.events.linlog_b();
    let ek = &seq.calib.event;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let level = |i: usize, u: usize, v: usize| linlog(seq.frames[i].intensity.get(u, v) as f64, b).unwrap();
    let (mut worst, mut worst_from_start, mut failures, mut cases) = (0.0f64, 0.0f64, 0, 0);
    for _ in 0..100 {
        let (u, v) = (rng.gen_range(0..ek.width), rng.gen_range(0..ek.height));
        for _ in 0..200 {
            let i = rng.gen_range(0..49);
            let j = rng.gen_range(i + 1..50);
            let n = seq.events.accumulate(u, v, seq.frames[i].timestamp, seq.frames[j].timestamp).unwrap();
            let err = (c * n as f64 - (level(j, u, v) - level(i, u, v))).abs();
            worst = worst.max(err);
            if i == 0 {
                worst_from_start = worst_from_start.max(err);
            }
            if err > c + 1e-9 {
                failures += 1;
            }
            cases += 1;
        }
    }
    let t = secs(start);
    verdict(
        failures == 0 && t < 5.0,
        format!(
            "{failures}/{cases} windows exceed C; worst |C*n - dL| = {:.3} C (windows from the first frame: {:.3} C); \
             simulation {sim_time:.1} s, check {:.3} s",
            worst / c,
            worst_from_start / c,
            secs(check)
        ),
    )
}

// 3. Exact event-loss zero ----------------------------------------------------

fn c3_event_zero() -> Verdict {
    let c = DEFAULT_THRESHOLD_C;
    // Flat-lit checkerboard wall whose two tones differ by just over 2C in
    // log intensity: every pixel change is 0 or one edge crossing, which the
    // simulator reports with a residual of 1e-4.
    let contrast = 1.0 - (-(2.0 * c + 1e-4)).exp();
    let wall = SurfacePrimitive::new(Shape::Plane { normal: Vec3::new(0.0, 0.0, -1.0), offset: 3.0 }, [0.8, 0.8, 0.8])
        .with_checker(0.3, contrast);
    let scene = AnalyticScene {
        primitives: vec![wall],
        ambient_level: 1.0,
        bounds: Aabb::new(Vec3::new(-4.0, -4.0, 0.0), Vec3::new(4.0, 4.0, 3.0)),
        light_dir: Vec3::new(0.0, 0.0, 1.0),
        shading: Shading::Flat,
    };
    let poses = vec![
        (frame_timestamp(0, 30.0), PoseSE3::from_translation(Vec3::new(0.0, 0.0, 1.0))),
        (frame_timestamp(1, 30.0), PoseSE3::from_translation(Vec3::new(0.03, 0.0, 1.0))),
    ];
    let traj = Trajectory::new(poses, 30.0).unwrap();
    let seq = synthesize(&scene, &traj, &Calibration::default(), DegradeMode::Normal, &DegradeParams::default()).unwrap();
    let ek = &seq.calib.event;
    let (t0, t1) = (seq.frames[0].timestamp, seq.frames[1].timestamp);
    // oracle field: the ground-truth renderer at the ground-truth event poses
    let oracle = |i: usize, u: usize, v: usize| linlog(seq.frames[i].intensity.get(u, v) as f64, seq.calib.linlog_b).unwrap();
    let (mut delta, mut counts) = (Vec::new(), Vec::new());
    for v in 0..ek.height {
        for u in 0..ek.width {
            delta.push(oracle(1, u, v) - oracle(0, u, v));
            counts.push(seq.events.accumulate(u, v, t0, t1).unwrap() as f64);
        }
    }
    let active = counts.iter().filter(|k| **k != 0.0).count();
    let loss = event_loss(&delta, &counts, EventLossMode::KnownC(c), None).unwrap();
    verdict(
        loss < 1e-6 && active > 0,
        format!("known-C event loss {loss:.2e} over {} pixels ({active} with events)", counts.len()),
    )
}

// 4. Overfit convergence ------------------------------------------------------

struct FrameFit {
    psnr: f64,
    depth_l1_cm: f64,
}

/// Render every other pixel of a frame through the field. Samples are
/// stratified plus a band around the field's own surface estimate.
fn assess_fit(field: &SceneField, params: &[f64], pose: &PoseSE3, rgb: &Image, depth: &Image, calib: &Calibration, sampling: &SamplingConfig) -> FrameFit {
    let k = &calib.rgb;
    let mut rs = RayScratch::new();
    let mut sc = field.scratch();
    let (mut se, mut count) = (0.0, 0usize);
    for v in (0..k.height).step_by(2) {
        for u in (0..k.width).step_by(2) {
            let ray = camera_ray(pose, k, u as f64, v as f64, CameraId::Rgbd);
            let bin = (sampling.far - sampling.near) / sampling.m_strat as f64;
            let mut z: Vec<f64> = (0..sampling.m_strat).map(|i| sampling.near + bin * (i as f64 + 0.5)).collect();
            if let Some(s) = surface_guess(field, params, &ray, sampling, 256, &mut sc) {
                let m = sampling.m_surf;
                z.extend((0..m).map(|i| s - sampling.tr + 2.0 * sampling.tr * (i as f64 + 0.5) / m as f64));
            }
            z.sort_by(|a, b| a.total_cmp(b));
            let out = render_field(field, params, &ray, &z, sampling.tr, &mut rs);
            let obs = rgb.pixel(u, v);
            se += out.color.iter().zip(obs).map(|(c, o)| (c - *o as f64).powi(2)).sum::<f64>();
            count += 3;
        }
    }
    let psnr = 10.0 * (1.0 / (se / count as f64)).log10();
    let eval = DepthEval { poses: 4, pixels: 500, ..DepthEval::new(sampling.near, sampling.far) };
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let depth_l1_cm = compute_depth_l1(|x| field.sdf(params, x, &mut sc), &[(*pose, depth)], k, &eval, &mut rng).unwrap();
    FrameFit { psnr, depth_l1_cm }
}

fn c4_overfit() -> Verdict {
    let start = Instant::now();
    let scene = AnalyticScene::room(3);
    let seq = orbit_sequence(&scene, 2, DegradeMode::Normal);
    let frames = FrameObs::from_sequence(&seq);
    let cfg = SlamConfig {
        eta: false,
        n_ba: 256,
        n_ev_ba: 64,
        // poses stay at ground truth
        lr_rot: 0.0,
        lr_trans: 0.0,
        seed: 4,
        ..SlamConfig::default()
    };
    let tr = cfg.tr;
    let mut slam = Slam::new(cfg, &seq.calib, &frames, &seq.events, scene.bounds).unwrap();
    let gt: Vec<PoseSE3> = seq.trajectory.poses.iter().map(|(_, p)| *p).collect();
    slam.poses = gt.clone();
    // frame 1: its RGB-D plus the events since frame 0
    slam.keyframes = vec![1];
    let mut sampling = SamplingConfig::new(scene.bounds.diagonal());
    sampling.tr = tr;
    let f = &seq.frames[1];
    let before = assess_fit(&slam.field, slam.params.values(), &gt[1], &f.rgb, &f.depth, &seq.calib, &sampling);
    slam.global_ba(2000).unwrap();
    let after = assess_fit(&slam.field, slam.params.values(), &gt[1], &f.rgb, &f.depth, &seq.calib, &sampling);
    let gain = after.psnr - before.psnr;
    let t = secs(start);
    verdict(
        gain >= 10.0 && after.depth_l1_cm < 2.0 * tr * 100.0 && t < 300.0,
        format!(
            "PSNR {:.1} -> {:.1} dB (+{gain:.1}), depth L1 {:.1} -> {:.2} cm (limit {:.0} cm), {t:.0} s",
            before.psnr,
            after.psnr,
            before.depth_l1_cm,
            after.depth_l1_cm,
            2.0 * tr * 100.0
        ),
    )
}

// 5. Tracking oracle ----------------------------------------------------------

fn tracking_config(seed: u64) -> SlamConfig {
    SlamConfig {
        init_iters: 100,
        n_track: 256,
        n_ba: 512,
        n_ev_track: 128,
        n_ev_ba: 256,
        seed,
        ..SlamConfig::default()
    }
}

fn c5_tracking() -> Verdict {
    let start = Instant::now();
    let scene = AnalyticScene::room(1);
    let ds = dataset(scene.clone(), orbit_sequence(&scene, 60, DegradeMode::Normal));
    let gt = &ds.trajectory;
    let held: Vec<(u64, PoseSE3)> = gt.iter().map(|(t, _)| (*t, gt[0].1)).collect();
    let baseline = ate_cm(&held, gt);
    let no_eta = run_pipeline(&ds, SlamConfig { eta: false, ..tracking_config(5) }).unwrap();
    let no_eta = ate_cm(&no_eta.trajectory, gt);
    let full = run_pipeline(&ds, tracking_config(5)).unwrap();
    let full = ate_cm(&full.trajectory, gt);
    verdict(
        full <= 0.2 * baseline,
        format!(
            "ATE RMSE {full:.2} cm = {:.1}% of the constant-pose baseline {baseline:.2} cm (no-ETA run {no_eta:.2} cm), {:.0} s",
            100.0 * full / baseline,
            secs(start)
        ),
    )
}

// 6 and 7. Ablation directions on degraded sequences ---------------------------

const SEEDS: [u64; 3] = [1, 2, 3];
const ABLATION_FRAMES: usize = 30;

fn ablation_config(seed: u64) -> SlamConfig {
    SlamConfig {
        init_iters: 100,
        n_track: 256,
        n_ba: 256,
        n_ev_track: 128,
        n_ev_ba: 128,
        seed,
        ..SlamConfig::default()
    }
}

#[derive(Default)]
struct ModeRuns {
    full_ate: Vec<f64>,
    no_eta_ate: Vec<f64>,
    no_ev_ate: Vec<f64>,
    full_l1: Vec<f64>,
    no_crf_l1: Vec<f64>,
}

fn ablation_runs(mode: DegradeMode, with_no_events: bool) -> ModeRuns {
    let mut out = ModeRuns::default();
    for seed in SEEDS {
        let scene = AnalyticScene::room(seed);
        let ds = dataset(scene.clone(), orbit_sequence(&scene, ABLATION_FRAMES, mode));
        let eval = DepthEval { poses: 10, pixels: 200, ..DepthEval::new(0.05, scene.bounds.diagonal()) };
        let depth_l1 = |cfg: SlamConfig| -> (f64, f64) {
            let r = run_pipeline(&ds, cfg).unwrap();
            let l1 = field_depth_l1(&r.output.field, &r.output.params, &ds, &eval, seed).unwrap();
            (ate_cm(&r.trajectory, &ds.trajectory), l1)
        };
        let (ate, l1) = depth_l1(ablation_config(seed));
        out.full_ate.push(ate);
        out.full_l1.push(l1);
        out.no_eta_ate.push(depth_l1(SlamConfig { eta: false, ..ablation_config(seed) }).0);
        out.no_crf_l1.push(depth_l1(SlamConfig { crf_enabled: false, ..ablation_config(seed) }).1);
        if with_no_events {
            let mut cfg = ablation_config(seed);
            cfg.weights.ev = 0.0;
            out.no_ev_ate.push(depth_l1(cfg).0);
        }
    }
    out
}

fn c6_ablations(blur: &ModeRuns, dark: &ModeRuns) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in [("blur", blur), ("dark", dark)] {
        let (eta, no_eta) = (mean(&r.full_ate), mean(&r.no_eta_ate));
        let (crf, no_crf) = (mean(&r.full_l1), mean(&r.no_crf_l1));
        pass &= eta <= no_eta && crf <= no_crf;
        parts.push(format!(
            "{name}: ATE eta {eta:.2} vs no-eta {no_eta:.2} cm, depth L1 crf {crf:.2} vs no-crf {no_crf:.2} cm"
        ));
    }
    verdict(pass, format!("{} (means over {} seeds)", parts.join("; "), SEEDS.len()))
}

fn c7_dark_events(dark: &ModeRuns) -> Verdict {
    let (with_ev, without) = (mean(&dark.full_ate), mean(&dark.no_ev_ate));
    verdict(
        with_ev < without,
        format!(
            "dark ATE event-joint {with_ev:.2} cm vs lambda_ev = 0 {without:.2} cm (seeds {:?}: {:.2?} vs {:.2?})",
            SEEDS, dark.full_ate, dark.no_ev_ate
        ),
    )
}

// 8. Sampling law -------------------------------------------------------------

fn c8_sampling() -> Verdict {
    let calib = Calibration::default();
    let (k, km) = (&calib.rgb, &calib.mini);
    let grid = PatchGrid::new(8, 8, k.width, k.height);
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let losses: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.01..1.0f64).powi(2)).collect();
    let depth: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(1.0..3.5)).collect();
    let mini = splat_patch_losses(&grid, &losses, &depth, k, km, &calib.t_ec);
    let probs = patch_probabilities(&mini).unwrap();
    let draws = 100_000;
    let mut freq = vec![0usize; probs.len()];
    for q in draw_patches(&probs, draws, &mut rng) {
        freq[q] += 1;
    }
    let (mut chi2, mut cells) = (0.0, 0);
    for (&o, &p) in freq.iter().zip(&probs) {
        if p > 0.0 {
            let e = p * draws as f64;
            chi2 += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    let critical = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.99);
    let mut exact = true;
    for _ in 0..1000 {
        let m = (rng.gen_range(0..k.width) as f64, rng.gen_range(0..k.height) as f64);
        let (out, _) = project_to_plane(m, rng.gen_range(0.2..5.0), k, k, &PoseSE3::identity()).unwrap();
        exact &= out == m;
    }
    verdict(
        chi2 < critical && exact,
        format!(
            "chi2 {chi2:.1} < {critical:.1} (99th percentile, {} dof, {draws} draws); identity projection exact on 1000 pixels: {exact}",
            cells - 1
        ),
    )
}

// 9. Metric sanity ------------------------------------------------------------

fn c9_metrics() -> Verdict {
    let traj = OrbitPath::default().sample(60, 30.0).unwrap();
    let gt = traj.poses.clone();
    let same = ate_cm(&gt, &gt);
    let motion = PoseSE3::new(
        UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(Vec3::new(0.3, -0.5, 0.8)), 0.7),
        Vec3::new(1.5, -2.0, 0.4),
    );
    let moved: Vec<(u64, PoseSE3)> = gt.iter().map(|(t, p)| (*t, motion.compose(p))).collect();
    let rigid = ate_cm(&moved, &gt);

    let (center, radius, tr) = (Vec3::new(0.1, -0.05, 0.02), 0.6, 0.1);
    let scene = AnalyticScene {
        primitives: vec![SurfacePrimitive::new(Shape::Sphere { center, radius }, [0.5; 3])],
        ambient_level: 1.0,
        bounds: Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)),
        light_dir: Vec3::new(0.0, 0.0, 1.0),
        shading: Shading::Flat,
    };
    let resolution = 40;
    let voxel_cm = 100.0 * 2.0 / resolution as f64;
    let tsdf = |p: &Vec3| ((p - center).norm() - radius).clamp(-tr, tr);
    let mesh = extract_mesh(tsdf, &scene.bounds, resolution).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let report = compute_mesh_metrics(&mesh, &scene, 20_000, &mut rng).unwrap();
    let acc = report.accuracy.unwrap_or(f64::INFINITY);
    verdict(
        same == 0.0 && rigid < 1e-9 && acc < 1.5 * voxel_cm,
        format!(
            "identical ATE {same:e} cm, rigidly moved ATE {rigid:.1e} cm, sphere mesh accuracy {acc:.3} cm = {:.3} voxels",
            acc / voxel_cm
        ),
    )
}

// 10. Determinism -------------------------------------------------------------

fn c10_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let scene = AnalyticScene::room(6);
    let seq = orbit_sequence(&scene, 8, DegradeMode::Normal);
    let data = tmp.path().join("data");
    write_dataset(&data, &scene, &seq).unwrap();
    let cfg = SlamConfig {
        init_iters: 20,
        n_track: 128,
        n_ba: 128,
        n_ev_track: 64,
        n_ev_ba: 64,
        seed: 9,
        ..SlamConfig::default()
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cmd_run(&data, cfg.clone(), &a).unwrap();
    cmd_run(&data, cfg, &b).unwrap();
    let same = |f: &str| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    let (traj, log, ckpt) = (same(TRAJ_EST), same(LOSS_LOG), same(CHECKPOINT));
    verdict(
        traj && log,
        format!("identical bytes: {TRAJ_EST} {traj}, {LOSS_LOG} {log} ({CHECKPOINT} {ckpt})"),
    )
}

// -----------------------------------------------------------------------------

fn report(n: usize, name: &str, f: impl FnOnce() -> Verdict) -> (usize, bool) {
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    });
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} {tag} [{name}] {} ({:.1} s)", v.detail, secs(start));
    (n, v.pass)
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut results = Vec::new();
    if want(1) {
        results.push(report(1, "gradient fidelity", c1_gradients));
    }
    if want(2) {
        results.push(report(2, "event telescoping", c2_telescoping));
    }
    if want(3) {
        results.push(report(3, "exact event-loss zero", c3_event_zero));
    }
    if want(4) {
        results.push(report(4, "overfit convergence", c4_overfit));
    }
    if want(5) {
        results.push(report(5, "tracking oracle", c5_tracking));
    }
    if want(6) || want(7) {
        let start = Instant::now();
        let runs = catch_unwind(|| {
            let blur = if want(6) { ablation_runs(DegradeMode::Blur, false) } else { ModeRuns::default() };
            (blur, ablation_runs(DegradeMode::Dark, want(7)))
        });
        eprintln!("ablation runs took {:.0} s", secs(start));
        match runs {
            Ok((blur, dark)) => {
                if want(6) {
                    results.push(report(6, "ablation directions", || c6_ablations(&blur, &dark)));
                }
                if want(7) {
                    results.push(report(7, "dark-mode event advantage", || c7_dark_events(&dark)));
                }
            }
            Err(_) => {
                for n in [6, 7].into_iter().filter(|&n| want(n)) {
                    results.push(report(n, "ablation runs", || verdict(false, "a pipeline run panicked".into())));
                }
            }
        }
    }
    if want(8) {
        results.push(report(8, "sampling law", c8_sampling));
    }
    if want(9) {
        results.push(report(9, "metric sanity", c9_metrics));
    }
    if want(10) {
        results.push(report(10, "determinism", c10_determinism));
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria passed; failed: {failed:?}", results.len() - failed.len(), results.len());
    if !failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
