//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use evslam_core::field::Activation;
use evslam_core::slam::{EventLossMode, SlamConfig};

use crate::error::{read_file, CliError, CliResult};

/// Parsed key-value pairs. Keys that are never read are reported by
/// [`KeyValues::finish`], so typos do not pass silently.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyValues {
    /// `#` starts a comment; blank lines are ignored; duplicate keys are an
    /// error.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected key = value", n + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key {k}", n + 1)));
            }
        }
        Ok(Self {
            entries,
            used: Default::default(),
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read_file(path).map_err(|e| CliError::Config(e.to_string()))?;
        let text = String::from_utf8(bytes).map_err(|_| CliError::Config(format!("{}: not UTF-8", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("invalid value for {key}: {v:?}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CliResult<T> {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key {key}")))
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("invalid list for {key}: {v:?}")))
    }

    /// Error on keys that were never read.
    pub fn finish(&self) -> CliResult<()> {
        let used = self.used.borrow();
        match self.entries.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(CliError::Config(format!("unknown key {k}"))),
            None => Ok(()),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("invalid value for {key}: {v:?}"))),
    }
}

fn flag(kv: &KeyValues, key: &str, default: bool) -> CliResult<bool> {
    match kv.raw(key) {
        None => Ok(default),
        Some(v) => parse_bool(key, v),
    }
}

/// Build a pipeline configuration: every key is optional and overrides the
/// default of the same name.
pub fn slam_config(kv: &KeyValues) -> CliResult<SlamConfig> {
    let d = SlamConfig::default();
    let w = d.weights;
    let mut c = SlamConfig {
        weights: evslam_core::slam::LossWeights {
            ev: kv.or("lambda_ev", w.ev)?,
            rgb: kv.or("lambda_rgb", w.rgb)?,
            d: kv.or("lambda_d", w.d)?,
            sdf: kv.or("lambda_sdf", w.sdf)?,
            fs: kv.or("lambda_fs", w.fs)?,
        },
        eta: flag(kv, "eta", d.eta)?,
        m_strat: kv.or("m_strat", d.m_strat)?,
        m_surf: kv.or("m_surf", d.m_surf)?,
        near: kv.or("near", d.near)?,
        tr: kv.or("tr", d.tr)?,
        n_track: kv.or("n_track", d.n_track)?,
        n_ba: kv.or("n_ba", d.n_ba)?,
        n_ev_track: kv.or("n_ev_track", d.n_ev_track)?,
        n_ev_ba: kv.or("n_ev_ba", d.n_ev_ba)?,
        track_iters: kv.or("track_iters", d.track_iters)?,
        track_outlier_factor: kv.or("track_outlier_factor", d.track_outlier_factor)?,
        ba_iters: kv.or("ba_iters", d.ba_iters)?,
        init_iters: kv.or("init_iters", d.init_iters)?,
        keyframe_every: kv.or("keyframe_every", d.keyframe_every)?,
        ba_every: kv.or("ba_every", d.ba_every)?,
        w_d: kv.or("w_d", d.w_d)?,
        w_s: kv.or("w_s", d.w_s)?,
        median_window: kv.or("median_window", d.median_window)?,
        median_factor: kv.or("median_factor", d.median_factor)?,
        patch_cols: kv.or("patch_cols", d.patch_cols)?,
        patch_rows: kv.or("patch_rows", d.patch_rows)?,
        lr_rot: kv.or("lr_rot", d.lr_rot)?,
        lr_trans: kv.or("lr_trans", d.lr_trans)?,
        lr_grid: kv.or("lr_grid", d.lr_grid)?,
        lr_decoder: kv.or("lr_decoder", d.lr_decoder)?,
        lr_crf: kv.or("lr_crf", d.lr_crf)?,
        bounds_margin: kv.or("bounds_margin", d.bounds_margin)?,
        levels: kv.list("levels")?.unwrap_or(d.levels.clone()),
        features: kv.or("features", d.features)?,
        hidden: kv.or("hidden", d.hidden)?,
        crf_enabled: flag(kv, "crf", d.crf_enabled)?,
        mapper_uses_h: flag(kv, "mapper_uses_h", d.mapper_uses_h)?,
        scalar_radiance: flag(kv, "scalar_radiance", d.scalar_radiance)?,
        seed: kv.or("seed", d.seed)?,
        ..d
    };
    c.event_mode = match kv.raw("event_mode") {
        None => c.event_mode,
        Some("normalized") => EventLossMode::Normalized,
        Some(v) => match v.strip_prefix("known:") {
            Some(cv) => EventLossMode::KnownC(
                cv.parse()
                    .map_err(|_| CliError::Config(format!("invalid value for event_mode: {v:?}")))?,
            ),
            None => return Err(CliError::Config(format!("invalid value for event_mode: {v:?}"))),
        },
    };
    c.validate()?;
    Ok(c)
}

pub fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Softplus => "softplus",
    }
}

pub fn parse_activation(s: &str) -> Option<Activation> {
    match s {
        "relu" => Some(Activation::Relu),
        "softplus" => Some(Activation::Softplus),
        _ => None,
    }
}
