//! Field checkpoints: a versioned header, the field and sampling settings
//! as `key = value` text, a segment table (name and shape), then every
//! parameter as a little-endian f32 in segment order.

use evslam_core::diff::ParamVector;
use evslam_core::field::{FieldConfig, SceneField};
use evslam_core::geometry::{Aabb, Vec3};
use evslam_core::render::SamplingConfig;

use crate::config::{activation_name, parse_activation, KeyValues};

pub const MAGIC: [u8; 4] = *b"EVCK";
pub const VERSION: u32 = 1;

/// A field with its parameters and the ray sampling it was trained with.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub field: SceneField,
    pub params: ParamVector,
    pub sampling: SamplingConfig,
}

fn meta(field: &SceneField, sampling: &SamplingConfig) -> String {
    let c = field.config();
    let (lo, hi) = (c.bounds.min, c.bounds.max);
    let levels: Vec<String> = c.levels.iter().map(|l| l.to_string()).collect();
    let [er, ee] = field.log_exposure_ratio;
    format!(
        "bounds_min = {},{},{}\nbounds_max = {},{},{}\nlevels = {}\nfeatures = {}\nhidden = {}\nhidden_layers = {}\nactivation = {}\nh_width = {}\ncrf_hidden = {}\nmapper_uses_h = {}\nscalar_radiance = {}\ncrf_enabled = {}\ngrid_init = {}\nlog_exposure_ratio = {er},{ee}\nm_strat = {}\nm_surf = {}\nnear = {}\nfar = {}\ntr = {}\n",
        lo.x, lo.y, lo.z, hi.x, hi.y, hi.z,
        levels.join(","),
        c.features, c.hidden, c.hidden_layers, activation_name(c.activation), c.h_width, c.crf_hidden,
        c.mapper_uses_h, c.scalar_radiance, c.crf_enabled, c.grid_init,
        sampling.m_strat, sampling.m_surf, sampling.near, sampling.far, sampling.tr,
    )
}

pub fn encode(field: &SceneField, params: &ParamVector, sampling: &SamplingConfig) -> Vec<u8> {
    let meta = meta(field, sampling);
    let layout = params.layout();
    let mut out = Vec::with_capacity(64 + meta.len() + 4 * params.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&(layout.segments().len() as u32).to_le_bytes());
    for s in layout.segments() {
        out.extend_from_slice(&(s.name.len() as u16).to_le_bytes());
        out.extend_from_slice(s.name.as_bytes());
        out.push(s.shape.len() as u8);
        for d in &s.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
    }
    for x in params.values() {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.bytes.len() - self.pos < n {
            return Err(format!("truncated at byte {}", self.pos));
        }
        self.pos += n;
        Ok(&self.bytes[self.pos - n..self.pos])
    }

    fn u32(&mut self) -> Result<u32, String> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn field_config(kv: &KeyValues) -> Result<(FieldConfig, [f64; 2], SamplingConfig), String> {
    let e = |e: crate::error::CliError| e.to_string();
    let v3 = |key: &str| -> Result<Vec3, String> {
        match kv.list::<f64>(key).map_err(e)?.as_deref() {
            Some([x, y, z]) => Ok(Vec3::new(*x, *y, *z)),
            _ => Err(format!("bad or missing {key}")),
        }
    };
    let mut c = FieldConfig::new(Aabb::new(v3("bounds_min")?, v3("bounds_max")?));
    c.levels = kv.list("levels").map_err(e)?.ok_or("missing levels")?;
    c.features = kv.require("features").map_err(e)?;
    c.hidden = kv.require("hidden").map_err(e)?;
    c.hidden_layers = kv.require("hidden_layers").map_err(e)?;
    let act: String = kv.require("activation").map_err(e)?;
    c.activation = parse_activation(&act).ok_or_else(|| format!("unknown activation {act:?}"))?;
    c.h_width = kv.require("h_width").map_err(e)?;
    c.crf_hidden = kv.require("crf_hidden").map_err(e)?;
    c.mapper_uses_h = kv.require("mapper_uses_h").map_err(e)?;
    c.scalar_radiance = kv.require("scalar_radiance").map_err(e)?;
    c.crf_enabled = kv.require("crf_enabled").map_err(e)?;
    c.grid_init = kv.require("grid_init").map_err(e)?;
    let ratio = match kv.list::<f64>("log_exposure_ratio").map_err(e)?.as_deref() {
        Some([a, b]) => [*a, *b],
        _ => return Err("bad or missing log_exposure_ratio".into()),
    };
    let s = SamplingConfig {
        m_strat: kv.require("m_strat").map_err(e)?,
        m_surf: kv.require("m_surf").map_err(e)?,
        near: kv.require("near").map_err(e)?,
        far: kv.require("far").map_err(e)?,
        tr: kv.require("tr").map_err(e)?,
    };
    kv.finish().map_err(e)?;
    if c.levels.is_empty() || c.levels.contains(&0) || c.features == 0 {
        return Err("degenerate field configuration".into());
    }
    Ok((c, ratio, s))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(n)?).map_err(|_| "header text is not UTF-8".to_string())?;
    let kv = KeyValues::parse(text).map_err(|e| e.to_string())?;
    let (config, ratio, sampling) = field_config(&kv)?;
    let mut field = SceneField::new(config);
    field.log_exposure_ratio = ratio;
    let layout = field.layout().clone();
    let count = r.u32()? as usize;
    if count != layout.segments().len() {
        return Err(format!("expected {} segments, found {count}", layout.segments().len()));
    }
    for seg in layout.segments() {
        let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "segment name is not UTF-8".to_string())?;
        let ndim = r.take(1)?[0] as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if name != seg.name || shape != seg.shape {
            return Err(format!("segment {name} {shape:?} does not match {} {:?}", seg.name, seg.shape));
        }
    }
    let data = r.take(4 * layout.len())?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let params = ParamVector::from_values(layout, values);
    params.check_finite("checkpoint").map_err(|e| e.to_string())?;
    Ok(Checkpoint { field, params, sampling })
}
