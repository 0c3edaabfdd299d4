//! TUM trajectories: one `t tx ty tz qx qy qz qw` line per pose, `t` in
//! seconds, camera-to-world.

use evslam_core::geometry::{PoseSE3, Vec3};
use nalgebra::{Quaternion, UnitQuaternion};

/// Exact decimal seconds of a nanosecond timestamp.
pub fn format_time(t_ns: u64) -> String {
    format!("{}.{:09}", t_ns / 1_000_000_000, t_ns % 1_000_000_000)
}

/// Seconds text to nanoseconds, exact for up to 9 decimals.
pub fn parse_time(s: &str) -> Option<u64> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: u64 = whole.parse().ok()?;
    let mut ns = 0u64;
    for (i, b) in frac.bytes().enumerate() {
        if i < 9 {
            ns = ns * 10 + (b - b'0') as u64;
        }
    }
    ns *= 10u64.pow(9 - frac.len().min(9) as u32);
    secs.checked_mul(1_000_000_000)?.checked_add(ns)
}

pub fn encode(poses: &[(u64, PoseSE3)]) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (t, p) in poses {
        let (tr, q) = (p.translation(), p.rotation());
        out.push_str(&format!(
            "{} {:.12} {:.12} {:.12} {:.12} {:.12} {:.12} {:.12}\n",
            format_time(*t),
            tr.x,
            tr.y,
            tr.z,
            q.i,
            q.j,
            q.k,
            q.w
        ));
    }
    out
}

pub fn decode(text: &str) -> Result<Vec<(u64, PoseSE3)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(format!("line {}: expected 8 fields, found {}", n + 1, f.len()));
        }
        let t = parse_time(f[0]).ok_or_else(|| format!("line {}: bad timestamp {:?}", n + 1, f[0]))?;
        let mut v = [0.0f64; 7];
        for (k, s) in f[1..].iter().enumerate() {
            v[k] = s.parse().map_err(|_| format!("line {}: bad number {s:?}", n + 1))?;
            if !v[k].is_finite() {
                return Err(format!("line {}: non-finite value", n + 1));
            }
        }
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        if q.norm() < 1e-6 {
            return Err(format!("line {}: zero quaternion", n + 1));
        }
        let pose = PoseSE3::new(UnitQuaternion::from_quaternion(q), Vec3::new(v[0], v[1], v[2]));
        out.push((t, pose));
    }
    Ok(out)
}
