//! Dataset directories:
//!
//! ```text
//! scene.json               analytic scene
//! traj_gt.txt              ground-truth poses (TUM)
//! calib.txt                intrinsics, extrinsics, exposure and event constants
//! events.evs               event stream
//! frames/%06d.rgb.pfm      color, 3 channels in [0, 1]
//! frames/%06d.depth.pfm    z-depth in meters, 0 where invalid
//! ```

use std::path::{Path, PathBuf};

use evslam_core::event::EventStream;
use evslam_core::geometry::PoseSE3;
use evslam_core::image::Image;
use evslam_core::world::{AnalyticScene, Calibration, Sequence};

use crate::error::{read_file, write_file, CliError, CliResult};
use crate::formats::{calib, evs, pfm, scene, tum};

pub const SCENE: &str = "scene.json";
pub const TRAJECTORY: &str = "traj_gt.txt";
pub const CALIB: &str = "calib.txt";
pub const EVENTS: &str = "events.evs";
pub const FRAMES: &str = "frames";

pub fn rgb_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(FRAMES).join(format!("{i:06}.rgb.pfm"))
}

pub fn depth_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(FRAMES).join(format!("{i:06}.depth.pfm"))
}

/// A dataset loaded from disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub scene: AnalyticScene,
    pub calib: Calibration,
    pub trajectory: Vec<(u64, PoseSE3)>,
    pub rgb: Vec<Image>,
    pub depth: Vec<Image>,
    pub events: EventStream,
}

pub fn write_dataset(dir: &Path, scene_desc: &AnalyticScene, seq: &Sequence) -> CliResult<()> {
    write_file(&dir.join(SCENE), scene::encode(scene_desc).as_bytes())?;
    write_file(&dir.join(TRAJECTORY), tum::encode(&seq.trajectory.poses).as_bytes())?;
    write_file(&dir.join(CALIB), calib::encode(&seq.calib).as_bytes())?;
    write_file(&dir.join(EVENTS), &evs::encode(&seq.events))?;
    for (i, f) in seq.frames.iter().enumerate() {
        write_file(&rgb_path(dir, i), &pfm::encode(&f.rgb))?;
        write_file(&depth_path(dir, i), &pfm::encode(&f.depth))?;
    }
    Ok(())
}

fn text(path: &Path) -> CliResult<String> {
    String::from_utf8(read_file(path)?).map_err(|_| CliError::parse(path, "not UTF-8"))
}

fn image(path: &Path, channels: usize, k: &evslam_core::geometry::PinholeIntrinsics) -> CliResult<Image> {
    let img = pfm::decode(&read_file(path)?).map_err(|e| CliError::parse(path, e))?;
    if img.channels != channels || img.width != k.width || img.height != k.height {
        return Err(CliError::parse(
            path,
            format!(
                "expected {}x{}x{channels}, found {}x{}x{}",
                k.width, k.height, img.width, img.height, img.channels
            ),
        ));
    }
    Ok(img)
}

pub fn read_events(path: &Path) -> CliResult<EventStream> {
    evs::decode(&read_file(path)?).map_err(|e| CliError::parse(path, e))
}

pub fn read_trajectory(path: &Path) -> CliResult<Vec<(u64, PoseSE3)>> {
    tum::decode(&text(path)?).map_err(|e| CliError::parse(path, e))
}

pub fn read_scene(path: &Path) -> CliResult<AnalyticScene> {
    scene::decode(&text(path)?).map_err(|e| CliError::parse(path, e))
}

pub fn read_dataset(dir: &Path) -> CliResult<Dataset> {
    let scene = read_scene(&dir.join(SCENE))?;
    let calib_path = dir.join(CALIB);
    let calib = calib::decode(&text(&calib_path)?).map_err(|e| CliError::parse(&calib_path, e))?;
    let trajectory = read_trajectory(&dir.join(TRAJECTORY))?;
    if trajectory.is_empty() {
        return Err(CliError::parse(&dir.join(TRAJECTORY), "no poses"));
    }
    let events = read_events(&dir.join(EVENTS))?;
    if events.resolution() != (calib.event.width, calib.event.height) {
        return Err(CliError::parse(&dir.join(EVENTS), "resolution differs from calib.txt"));
    }
    let mut rgb = Vec::with_capacity(trajectory.len());
    let mut depth = Vec::with_capacity(trajectory.len());
    for i in 0..trajectory.len() {
        rgb.push(image(&rgb_path(dir, i), 3, &calib.rgb)?);
        depth.push(image(&depth_path(dir, i), 1, &calib.rgb)?);
    }
    Ok(Dataset {
        scene,
        calib,
        trajectory,
        rgb,
        depth,
        events,
    })
}
