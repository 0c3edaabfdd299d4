//! Per-frame loss log, CSV with a fixed column order.

use evslam_core::slam::FrameLog;

pub const HEADER: &str = "frame,L_ev,L_rgb,L_d,L_sdf,L_fs,total,prev_id";

/// `prev_id` is empty for frames without an event partner.
pub fn encode(log: &[FrameLog]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for l in log {
        let t = &l.terms;
        let prev = l.prev.map(|p| p.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{},{},{},{}\n", l.frame, t.ev, t.rgb, t.d, t.sdf, t.fs, t.total, prev));
    }
    out
}
