//! Binary little-endian PLY triangle meshes (f32 vertices, u8-counted
//! i32 index lists).

use crate::mesh::Mesh;

const HEADER_END: &str = "end_header\n";

pub fn encode(mesh: &Mesh) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\n{HEADER_END}",
        mesh.vertices.len(),
        mesh.faces.len()
    )
    .into_bytes();
    for v in &mesh.vertices {
        for c in v {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for i in f {
            out.extend_from_slice(&(*i as i32).to_le_bytes());
        }
    }
    out
}

/// Reads meshes in the layout written by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<Mesh, String> {
    let end = bytes
        .windows(HEADER_END.len())
        .position(|w| w == HEADER_END.as_bytes())
        .ok_or("missing end_header")?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| "header is not UTF-8".to_string())?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") || lines.next() != Some("format binary_little_endian 1.0") {
        return Err("expected a binary little-endian PLY".into());
    }
    let (mut nv, mut nf) = (None, None);
    for l in lines {
        if let Some(n) = l.strip_prefix("element vertex ") {
            nv = n.trim().parse::<usize>().ok();
        } else if let Some(n) = l.strip_prefix("element face ") {
            nf = n.trim().parse::<usize>().ok();
        }
    }
    let (nv, nf) = (nv.ok_or("missing vertex count")?, nf.ok_or("missing face count")?);
    let body = &bytes[end + HEADER_END.len()..];
    let need = nv * 12 + nf * 13;
    if body.len() != need {
        return Err(format!("expected {need} data bytes, found {}", body.len()));
    }
    let f32_at = |i: usize| f32::from_le_bytes([body[i], body[i + 1], body[i + 2], body[i + 3]]) as f64;
    let vertices = (0..nv).map(|k| [f32_at(12 * k), f32_at(12 * k + 4), f32_at(12 * k + 8)]).collect();
    let mut faces = Vec::with_capacity(nf);
    for k in 0..nf {
        let at = nv * 12 + 13 * k;
        if body[at] != 3 {
            return Err(format!("face {k} is not a triangle"));
        }
        let idx = |j: usize| i32::from_le_bytes([body[at + 1 + 4 * j], body[at + 2 + 4 * j], body[at + 3 + 4 * j], body[at + 4 + 4 * j]]);
        let f = [idx(0), idx(1), idx(2)];
        if f.iter().any(|&i| i < 0 || i as usize >= nv) {
            return Err(format!("face {k} indexes outside the vertex list"));
        }
        faces.push([f[0] as u32, f[1] as u32, f[2] as u32]);
    }
    Ok(Mesh { vertices, faces })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_golden_header() {
        let mesh = Mesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.5, -2.0]],
            faces: vec![[0, 1, 2]],
        };
        let bytes = encode(&mesh);
        let header = "ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n";
        assert!(bytes.starts_with(header.as_bytes()));
        assert_eq!(bytes.len(), header.len() + 36 + 13);
        assert_eq!(decode(&bytes).unwrap(), mesh);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn empty_mesh() {
        let m = Mesh::default();
        assert_eq!(decode(&encode(&m)).unwrap(), m);
    }
}
