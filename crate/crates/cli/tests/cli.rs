use std::path::Path;
use std::process::Command;

const GEN: &str = "frames = 10\nframe_rate = 30\nseed = 4\nmodes = normal, blur, dark\n";
const RUN: &str = "init_iters = 20\ntrack_iters = 3\nba_iters = 2\nn_track = 64\nn_ba = 128\nn_ev_track = 32\nn_ev_ba = 32\nlevels = 8, 16\nhidden = 16\n";

fn evslam(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_evslam")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn generation_run_and_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let gen = write(&root.join("gen.cfg"), GEN);
    let data = root.join("data");
    let (code, _, err) = evslam(&["gen", "--config", &gen, "--out", &s(&data)]);
    assert_eq!(code, 0, "{err}");

    // three modes share one trajectory; frames and events are counted
    let traj = read(&data.join("normal/traj_gt.txt"));
    for m in ["blur", "dark"] {
        assert_eq!(read(&data.join(m).join("traj_gt.txt")), traj);
    }
    let frames: Vec<_> = std::fs::read_dir(data.join("normal/frames")).unwrap().collect();
    assert_eq!(frames.len(), 20);
    assert!(data.join("normal/events.evs").exists() && data.join("normal/calib.txt").exists());
    assert_eq!(read(&data.join("blur/events.evs")), read(&data.join("normal/events.evs")));
    assert_ne!(read(&data.join("dark/frames/000005.rgb.pfm")), read(&data.join("normal/frames/000005.rgb.pfm")));

    // same seed, same bytes
    let again = root.join("again");
    assert_eq!(evslam(&["gen", "--config", &gen, "--out", &s(&again), "--mode", "blur"]).0, 0);
    for f in ["traj_gt.txt", "events.evs", "calib.txt", "scene.json", "frames/000007.rgb.pfm", "frames/000007.depth.pfm"] {
        assert_eq!(read(&again.join("blur").join(f)), read(&data.join("blur").join(f)), "{f}");
    }
    assert!(!again.join("normal").exists());

    // run writes one trajectory row per frame and the pinned log header
    let run_cfg = write(&root.join("run.cfg"), RUN);
    let run = root.join("run");
    let (code, _, err) = evslam(&["run", "--dataset", &s(&data.join("normal")), "--config", &run_cfg, "--out", &s(&run), "--seed", "3"]);
    assert_eq!(code, 0, "{err}");
    let est = String::from_utf8(read(&run.join("traj_est.txt"))).unwrap();
    assert_eq!(est.lines().filter(|l| !l.starts_with('#')).count(), 10);
    let log = String::from_utf8(read(&run.join("losses.csv"))).unwrap();
    assert_eq!(log.lines().next(), Some("frame,L_ev,L_rgb,L_d,L_sdf,L_fs,total,prev_id"));
    assert_eq!(log.lines().count(), 11);

    // without events the files have the same schema
    let no_ev = write(&root.join("noev.cfg"), &format!("{RUN}lambda_ev = 0\n"));
    let run0 = root.join("run0");
    assert_eq!(evslam(&["run", "--dataset", &s(&data.join("normal")), "--config", &no_ev, "--out", &s(&run0)]).0, 0);
    let log0 = String::from_utf8(read(&run0.join("losses.csv"))).unwrap();
    assert_eq!(log0.lines().next(), log.lines().next());
    assert_eq!(log0.lines().count(), 11);

    // evaluation commands
    let gt = s(&data.join("normal/traj_gt.txt"));
    let (code, out, _) = evslam(&["ate", "--est", &gt, "--gt", &gt]);
    assert_eq!(code, 0);
    assert!(out.starts_with("rmse_cm=0.0000 mean_cm=0.0000 median_cm=0.0000 matches=10 align=se3"), "{out}");
    let (code, out, _) = evslam(&["ate", "--est", &s(&run.join("traj_est.txt")), "--gt", &gt, "--align", "sim3"]);
    assert_eq!(code, 0);
    assert!(out.contains("align=sim3"));
    let ckpt = s(&run.join("field.ckpt"));
    let (code, out, err) = evslam(&["depth-l1", "--dataset", &s(&data.join("normal")), "--checkpoint", &ckpt, "--poses", "3", "--pixels", "20"]);
    assert_eq!(code, 0, "{err}");
    let l1: f64 = out.trim().strip_prefix("depth_l1_cm=").unwrap().parse().unwrap();
    assert!(l1.is_finite() && l1 >= 0.0);
    let mesh = s(&root.join("mesh.ply"));
    assert_eq!(evslam(&["mesh", "--checkpoint", &ckpt, "--resolution", "16", "--out", &mesh]).0, 0);
    let (code, out, err) = evslam(&["mesh-metrics", "--mesh", &mesh, "--scene", &s(&data.join("normal/scene.json")), "--samples", "500"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("accuracy_cm="));
    assert_eq!(evslam(&["mesh", "--checkpoint", &ckpt, "--resolution", "2", "--out", &mesh]).0, 2);

    // events
    let (code, out, _) = evslam(&["events", "dump", &s(&data.join("normal/events.evs")), "--limit", "2"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("# width=128 height=96 threshold_c=0.2"));
    assert_eq!(lines[1], "t,u,v,p");
    assert_eq!(lines.len(), 4);
    let evs = root.join("sim.evs");
    assert_eq!(evslam(&["events", "simulate", "--config", &gen, "--out", &s(&evs)]).0, 0);
    assert_eq!(read(&evs), read(&data.join("normal/events.evs")));

    // a corrupted event file is a data error and leaves no trajectory
    let bad = data.join("normal/events.evs");
    let bytes = read(&bad);
    std::fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    let out_bad = root.join("bad");
    let (code, _, err) = evslam(&["run", "--dataset", &s(&data.join("normal")), "--config", &run_cfg, "--out", &s(&out_bad)]);
    assert_eq!(code, 3);
    assert!(err.contains("byte"), "{err}");
    assert!(!out_bad.join("traj_est.txt").exists());
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(&tmp.path().join("gen.cfg"), "frame_rate = 30\n");
    let (code, _, err) = evslam(&["gen", "--config", &cfg, "--out", &s(tmp.path())]);
    assert_eq!(code, 2);
    assert!(err.contains("frames"), "{err}");
    let typo = write(&tmp.path().join("typo.cfg"), "frames = 2\nframe_rate = 30\nframerate = 3\n");
    let (code, _, err) = evslam(&["gen", "--config", &typo, "--out", &s(tmp.path())]);
    assert_eq!(code, 2);
    assert!(err.contains("framerate"));
    assert_eq!(evslam(&["gen", "--config", &cfg, "--out", &s(tmp.path()), "--mode", "foggy"]).0, 2);
}

#[test]
fn missing_inputs_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = s(&tmp.path().join("nope.txt"));
    assert_eq!(evslam(&["ate", "--est", &missing, "--gt", &missing]).0, 3);
    assert_eq!(evslam(&["run", "--dataset", &missing, "--out", &s(tmp.path())]).0, 3);
}
