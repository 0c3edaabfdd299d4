//! Previous-index table and the adaptive forward query of the event
//! temporal aggregation strategy.

use alloc::vec::Vec;

/// What a tracking or mapping pass recorded for one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableEntry {
    pub loss: f64,
    pub cur: usize,
    pub prev: Option<usize>,
}

/// Per-frame record of the final loss and the chosen partner frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrevIndexTable {
    entries: Vec<Option<TableEntry>>,
}

impl PrevIndexTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, frame: usize, entry: TableEntry) {
        if self.entries.len() <= frame {
            self.entries.resize(frame + 1, None);
        }
        self.entries[frame] = Some(entry);
    }

    pub fn get(&self, frame: usize) -> Option<&TableEntry> {
        self.entries.get(frame).and_then(|e| e.as_ref())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn loss(&self, frame: usize) -> f64 {
        self.get(frame).map_or(f64::INFINITY, |e| e.loss)
    }
}

/// Partner frame for frame `i` (requires `i >= 1`): `i - w_d` clamped to 0,
/// replaced by the lowest-loss processed frame in
/// `[i - w_d - w_s, i - w_d + w_s] ∩ [0, i - 1]` when its loss exceeds
/// `l_s`. Ties go to the earlier frame.
pub fn forward_query(table: &PrevIndexTable, i: usize, w_d: usize, w_s: usize, l_s: f64) -> usize {
    assert!(i >= 1, "forward query needs a prior frame");
    let center = i.saturating_sub(w_d);
    if table.loss(center) <= l_s {
        return center;
    }
    let lo = center.saturating_sub(w_s);
    let hi = (center + w_s).min(i - 1);
    let mut best = center;
    let mut best_loss = table.loss(center);
    for j in lo..=hi {
        let l = table.loss(j);
        if l < best_loss || (l == best_loss && j < best) {
            best = j;
            best_loss = l;
        }
    }
    best
}

/// Forward-query threshold: `factor` times the median of the last
/// `window` frame losses; infinite until a loss has been recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct LossThreshold {
    pub window: usize,
    pub factor: f64,
    recent: Vec<f64>,
}

impl LossThreshold {
    pub fn new(window: usize, factor: f64) -> Self {
        Self {
            window,
            factor,
            recent: Vec::new(),
        }
    }

    pub fn push(&mut self, loss: f64) {
        if !loss.is_finite() {
            return;
        }
        self.recent.push(loss);
        if self.recent.len() > self.window {
            self.recent.remove(0);
        }
    }

    pub fn value(&self) -> f64 {
        if self.recent.is_empty() {
            return f64::INFINITY;
        }
        let mut v = self.recent.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        self.factor * median
    }
}
