//! `calib.txt`: one `name values...` line per entry.

use std::collections::BTreeMap;

use evslam_core::geometry::{PinholeIntrinsics, PoseSE3, Vec3};
use evslam_core::world::Calibration;
use nalgebra::{Quaternion, UnitQuaternion};

fn intrinsics_line(name: &str, k: &PinholeIntrinsics) -> String {
    format!("{name} {} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height)
}

pub fn encode(c: &Calibration) -> String {
    let (t, q) = (c.t_ec.translation(), c.t_ec.rotation());
    let mut out = String::from("# intrinsics: fx fy cx cy width height; T_ec maps RGB to event camera: tx ty tz qx qy qz qw\n");
    out += &intrinsics_line("K", &c.rgb);
    out += &intrinsics_line("K_event", &c.event);
    out += &intrinsics_line("K_mini", &c.mini);
    out += &format!("T_ec {} {} {} {} {} {} {}\n", t.x, t.y, t.z, q.i, q.j, q.k, q.w);
    out += &format!("exposure_rgb {}\n", c.exposure_rgb);
    out += &format!("exposure_event {}\n", c.exposure_event);
    out += &format!("threshold_c {}\n", c.threshold_c);
    out += &format!("linlog_b {}\n", c.linlog_b);
    out
}

pub fn decode(text: &str) -> Result<Calibration, String> {
    let mut lines: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let mut f = line.split_whitespace();
        let name = f.next().unwrap_or_default();
        lines.insert(name, f.collect());
    }
    let nums = |name: &str, n: usize| -> Result<Vec<f64>, String> {
        let f = lines.get(name).ok_or_else(|| format!("missing entry {name}"))?;
        if f.len() != n {
            return Err(format!("{name}: expected {n} values, found {}", f.len()));
        }
        f.iter()
            .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("{name}: bad number {s:?}")))
            .collect()
    };
    let intr = |name: &str| -> Result<PinholeIntrinsics, String> {
        let v = nums(name, 6)?;
        if v[4] < 1.0 || v[5] < 1.0 || v[4].fract() != 0.0 || v[5].fract() != 0.0 {
            return Err(format!("{name}: bad image size"));
        }
        Ok(PinholeIntrinsics::new(v[0], v[1], v[2], v[3], v[4] as usize, v[5] as usize))
    };
    let t = nums("T_ec", 7)?;
    let q = Quaternion::new(t[6], t[3], t[4], t[5]);
    if q.norm() < 1e-6 {
        return Err("T_ec: zero quaternion".into());
    }
    Ok(Calibration {
        rgb: intr("K")?,
        event: intr("K_event")?,
        mini: intr("K_mini")?,
        t_ec: PoseSE3::new(UnitQuaternion::from_quaternion(q), Vec3::new(t[0], t[1], t[2])),
        exposure_rgb: nums("exposure_rgb", 1)?[0],
        exposure_event: nums("exposure_event", 1)?[0],
        threshold_c: nums("threshold_c", 1)?[0],
        linlog_b: nums("linlog_b", 1)?[0],
    })
}
