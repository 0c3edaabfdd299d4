//! Event camera model: lin-log photoreceptor response, threshold-crossing
//! event generation with per-pixel memory, and windowed polarity queries.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Default contrast threshold, log-intensity units.
pub const DEFAULT_THRESHOLD_C: f64 = 0.2;
/// Default lin-log break point on the 0..255 intensity scale.
pub const DEFAULT_LINLOG_B: f64 = 20.0;

/// Guard so that a log change of exactly `k * C` yields `k` events despite
/// rounding in the subtraction.
const COUNT_EPS: f64 = 1e-9;

/// Lin-log response: linear below `b`, logarithmic above, continuous at `b`.
pub fn linlog(intensity: f64, b: f64) -> Result<f64> {
    if !(intensity >= 0.0) {
        return Err(Error::Domain {
            op: "linlog",
            value: intensity,
        });
    }
    Ok(if intensity < b {
        intensity * b.ln() / b
    } else {
        intensity.ln()
    })
}

/// One polarity event. Timestamps are nanoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub u: u16,
    pub v: u16,
    pub t: u64,
    pub p: i8,
}

/// Time-ordered, immutable event stream with a per-pixel index.
#[derive(Clone, Debug)]
pub struct EventStream {
    records: Vec<EventRecord>,
    width: usize,
    height: usize,
    threshold_c: f64,
    linlog_b: f64,
    // CSR index: events of pixel `i` are `order[offsets[i]..offsets[i + 1]]`
    offsets: Vec<u32>,
    times: Vec<u64>,
    cumulative: Vec<i32>,
}

impl PartialEq for EventStream {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
            && self.width == other.width
            && self.height == other.height
            && self.threshold_c.to_bits() == other.threshold_c.to_bits()
            && self.linlog_b.to_bits() == other.linlog_b.to_bits()
    }
}

impl EventStream {
    pub fn new(
        records: Vec<EventRecord>,
        width: usize,
        height: usize,
        threshold_c: f64,
        linlog_b: f64,
    ) -> Result<Self> {
        if !(threshold_c > 0.0) {
            return Err(Error::Domain {
                op: "event threshold C",
                value: threshold_c,
            });
        }
        if !(linlog_b > 0.0) {
            return Err(Error::Domain {
                op: "lin-log break point B",
                value: linlog_b,
            });
        }
        for (i, r) in records.iter().enumerate() {
            if r.u as usize >= width || r.v as usize >= height {
                return Err(Error::PixelOutOfBounds {
                    u: r.u as usize,
                    v: r.v as usize,
                });
            }
            if r.p != 1 && r.p != -1 {
                return Err(Error::Domain {
                    op: "event polarity",
                    value: r.p as f64,
                });
            }
            if i > 0 && records[i - 1].t > r.t {
                return Err(Error::NotIncreasing {
                    what: "event timestamps",
                    index: i,
                });
            }
        }
        let n_pix = width * height;
        let mut counts = vec![0u32; n_pix + 1];
        for r in &records {
            counts[r.v as usize * width + r.u as usize + 1] += 1;
        }
        for i in 0..n_pix {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut fill = offsets.clone();
        let mut times = vec![0u64; records.len()];
        let mut polarity = vec![0i32; records.len()];
        for r in &records {
            let pix = r.v as usize * width + r.u as usize;
            let slot = fill[pix] as usize;
            times[slot] = r.t;
            polarity[slot] = r.p as i32;
            fill[pix] += 1;
        }
        let mut cumulative = polarity;
        for pix in 0..n_pix {
            let (a, b) = (offsets[pix] as usize, offsets[pix + 1] as usize);
            for k in a + 1..b {
                cumulative[k] += cumulative[k - 1];
            }
        }
        Ok(Self {
            records,
            width,
            height,
            threshold_c,
            linlog_b,
            offsets,
            times,
            cumulative,
        })
    }

    pub fn empty(width: usize, height: usize, threshold_c: f64, linlog_b: f64) -> Result<Self> {
        Self::new(Vec::new(), width, height, threshold_c, linlog_b)
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn threshold_c(&self) -> f64 {
        self.threshold_c
    }

    pub fn linlog_b(&self) -> f64 {
        self.linlog_b
    }

    /// Sum of polarities at `(u, v)` over events with `t_a < t <= t_b`.
    pub fn accumulate(&self, u: usize, v: usize, t_a: u64, t_b: u64) -> Result<i64> {
        if u >= self.width || v >= self.height {
            return Err(Error::PixelOutOfBounds { u, v });
        }
        if t_a > t_b {
            return Err(Error::NotIncreasing {
                what: "accumulation window",
                index: 0,
            });
        }
        let pix = v * self.width + u;
        let (a, b) = (self.offsets[pix] as usize, self.offsets[pix + 1] as usize);
        let times = &self.times[a..b];
        let cum = &self.cumulative[a..b];
        let upto = |t: u64| -> i64 {
            let n = times.partition_point(|&x| x <= t);
            if n == 0 {
                0
            } else {
                cum[n - 1] as i64
            }
        };
        Ok(upto(t_b) - upto(t_a))
    }

    /// Events at one pixel, time ordered.
    pub fn pixel_event_count(&self, u: usize, v: usize) -> usize {
        let pix = v * self.width + u;
        (self.offsets[pix + 1] - self.offsets[pix]) as usize
    }
}

/// Per-pixel reference log level and last event time.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMemory {
    width: usize,
    height: usize,
    pub last_log_level: Vec<f64>,
    pub last_event_time: Vec<u64>,
}

impl PixelMemory {
    pub fn new(width: usize, height: usize, level: f64) -> Self {
        Self {
            width,
            height,
            last_log_level: vec![level; width * height],
            last_event_time: vec![0; width * height],
        }
    }

    /// Memory initialised to the first observed frame.
    pub fn from_levels(width: usize, height: usize, levels: &[f64], t: u64) -> Result<Self> {
        if levels.len() != width * height {
            return Err(Error::ResolutionMismatch {
                expected: (width, height),
                found: (levels.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            last_log_level: levels.to_vec(),
            last_event_time: vec![t; width * height],
        })
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// A per-pixel log-intensity frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LogFrame {
    pub t: u64,
    pub levels: Vec<f64>,
}

/// Streaming threshold-crossing simulator. Memory persists across frames and
/// is never reset.
#[derive(Clone, Debug)]
pub struct EventSimulator {
    threshold_c: f64,
    memory: PixelMemory,
    last: Option<LogFrame>,
}

impl EventSimulator {
    pub fn new(threshold_c: f64, memory: PixelMemory) -> Result<Self> {
        if !(threshold_c > 0.0) {
            return Err(Error::Domain {
                op: "event threshold C",
                value: threshold_c,
            });
        }
        Ok(Self {
            threshold_c,
            memory,
            last: None,
        })
    }

    pub fn memory(&self) -> &PixelMemory {
        &self.memory
    }

    /// Feed the next frame and append the events it triggers to `out`.
    pub fn push_frame(&mut self, frame: LogFrame, out: &mut Vec<EventRecord>) -> Result<()> {
        let (w, h) = self.memory.resolution();
        if frame.levels.len() != w * h {
            return Err(Error::ResolutionMismatch {
                expected: (w, h),
                found: (frame.levels.len(), 1),
            });
        }
        let Some(prev) = self.last.take() else {
            self.last = Some(frame);
            return Ok(());
        };
        if frame.t <= prev.t {
            return Err(Error::NotIncreasing {
                what: "frame timestamps",
                index: 0,
            });
        }
        let c = self.threshold_c;
        let dt = (frame.t - prev.t) as f64;
        let start = out.len();
        for (pix, (&l0, &l1)) in prev.levels.iter().zip(&frame.levels).enumerate() {
            let mem = self.memory.last_log_level[pix];
            let delta = l1 - mem;
            let n = (delta.abs() / c + COUNT_EPS).floor() as u64;
            if n == 0 {
                continue;
            }
            let sign = if delta > 0.0 { 1.0 } else { -1.0 };
            let (u, v) = ((pix % w) as u16, (pix / w) as u16);
            let span = l1 - l0;
            let mut t = prev.t;
            for k in 1..=n {
                let level = mem + sign * k as f64 * c;
                let frac = if span.abs() > 0.0 {
                    ((level - l0) / span).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let offset = ((frac * dt).round() as u64).max(1);
                t = prev.t + offset.min(frame.t - prev.t);
                out.push(EventRecord {
                    u,
                    v,
                    t,
                    p: sign as i8,
                });
            }
            self.memory.last_log_level[pix] = mem + sign * n as f64 * c;
            self.memory.last_event_time[pix] = t;
        }
        out[start..].sort_by_key(|e| (e.t, e.v, e.u));
        self.last = Some(frame);
        Ok(())
    }
}

/// Run the simulator over a whole log-frame sequence.
pub fn generate_events(
    frames: &[LogFrame],
    threshold_c: f64,
    linlog_b: f64,
    memory: &mut PixelMemory,
) -> Result<EventStream> {
    for (i, pair) in frames.windows(2).enumerate() {
        if pair[1].t <= pair[0].t {
            return Err(Error::NotIncreasing {
                what: "frame timestamps",
                index: i + 1,
            });
        }
    }
    let (w, h) = memory.resolution();
    let mut sim = EventSimulator::new(threshold_c, memory.clone())?;
    let mut out = Vec::new();
    for f in frames {
        sim.push_frame(f.clone(), &mut out)?;
    }
    *memory = sim.memory;
    EventStream::new(out, w, h, threshold_c, linlog_b)
}
