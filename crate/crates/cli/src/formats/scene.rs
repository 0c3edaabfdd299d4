//! `scene.json`: analytic scene description.

use evslam_core::geometry::{Aabb, Vec3};
use evslam_core::world::scene::Checker;
use evslam_core::world::{AnalyticScene, Shading, Shape, SurfacePrimitive};
use serde_json::{json, Value};

fn v3(v: &Vec3) -> Value {
    json!([v.x, v.y, v.z])
}

fn shape_json(s: &Shape) -> Value {
    match s {
        Shape::Sphere { center, radius } => json!({"type": "sphere", "center": v3(center), "radius": radius}),
        Shape::Box { center, half } => json!({"type": "box", "center": v3(center), "half": v3(half)}),
        Shape::Plane { normal, offset } => json!({"type": "plane", "normal": v3(normal), "offset": offset}),
    }
}

pub fn encode(scene: &AnalyticScene) -> String {
    let prims: Vec<Value> = scene
        .primitives
        .iter()
        .map(|p| {
            let mut o = json!({"shape": shape_json(&p.shape), "albedo": p.albedo});
            if let Some(c) = p.checker {
                o["checker"] = json!({"period": c.period, "contrast": c.contrast});
            }
            o
        })
        .collect();
    let doc = json!({
        "bounds": {"min": v3(&scene.bounds.min), "max": v3(&scene.bounds.max)},
        "ambient_level": scene.ambient_level,
        "light_dir": v3(&scene.light_dir),
        "shading": match scene.shading { Shading::Lambertian => "lambertian", Shading::Flat => "flat" },
        "primitives": prims,
    });
    serde_json::to_string_pretty(&doc).expect("scene serializes") + "\n"
}

fn num(v: &Value, what: &str) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("{what}: expected a number"))
}

fn vec3(v: &Value, what: &str) -> Result<Vec3, String> {
    match v.as_array().map(Vec::as_slice) {
        Some([x, y, z]) => Ok(Vec3::new(num(x, what)?, num(y, what)?, num(z, what)?)),
        _ => Err(format!("{what}: expected [x, y, z]")),
    }
}

fn shape(v: &Value) -> Result<Shape, String> {
    match v["type"].as_str() {
        Some("sphere") => Ok(Shape::Sphere {
            center: vec3(&v["center"], "sphere.center")?,
            radius: num(&v["radius"], "sphere.radius")?,
        }),
        Some("box") => Ok(Shape::Box {
            center: vec3(&v["center"], "box.center")?,
            half: vec3(&v["half"], "box.half")?,
        }),
        Some("plane") => Ok(Shape::Plane {
            normal: vec3(&v["normal"], "plane.normal")?,
            offset: num(&v["offset"], "plane.offset")?,
        }),
        other => Err(format!("unknown shape type {other:?}")),
    }
}

pub fn decode(text: &str) -> Result<AnalyticScene, String> {
    let doc: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut primitives = Vec::new();
    for (i, p) in doc["primitives"].as_array().ok_or("missing primitives")?.iter().enumerate() {
        let albedo = vec3(&p["albedo"], &format!("primitives[{i}].albedo"))?;
        let checker = match &p["checker"] {
            Value::Null => None,
            c => Some(Checker {
                period: num(&c["period"], "checker.period")?,
                contrast: num(&c["contrast"], "checker.contrast")?,
            }),
        };
        primitives.push(SurfacePrimitive {
            shape: shape(&p["shape"])?,
            albedo: [albedo.x, albedo.y, albedo.z],
            checker,
        });
    }
    Ok(AnalyticScene {
        primitives,
        ambient_level: num(&doc["ambient_level"], "ambient_level")?,
        bounds: Aabb::new(vec3(&doc["bounds"]["min"], "bounds.min")?, vec3(&doc["bounds"]["max"], "bounds.max")?),
        light_dir: vec3(&doc["light_dir"], "light_dir")?,
        shading: match doc["shading"].as_str() {
            Some("lambertian") => Shading::Lambertian,
            Some("flat") => Shading::Flat,
            other => return Err(format!("unknown shading {other:?}")),
        },
    })
}
