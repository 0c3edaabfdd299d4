//! Zero-isosurface extraction and point-to-mesh distances.

use std::collections::HashMap;

use evslam_core::geometry::{Aabb, Vec3};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

/// Indexed triangle mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
}

/// Smallest accepted number of cells along the longest axis.
pub const MIN_RESOLUTION: usize = 4;

// Six tetrahedra sharing the cube diagonal 0-7; corner bits are (x, y, z).
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 3, 2, 7],
    [0, 2, 6, 7],
    [0, 6, 4, 7],
    [0, 4, 5, 7],
    [0, 5, 1, 7],
];

fn v(p: [f64; 3]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [v(self.vertices[a as usize]), v(self.vertices[b as usize]), v(self.vertices[c as usize])]
    }

    pub fn area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// `n` points drawn uniformly over the surface area.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec3> {
        let areas: Vec<f64> = (0..self.faces.len()).map(|f| self.area(f)).collect();
        let Ok(dist) = WeightedIndex::new(&areas) else {
            return Vec::new();
        };
        (0..n)
            .map(|_| {
                let [a, b, c] = self.triangle(dist.sample(rng));
                let (mut r1, mut r2) = (rng.gen::<f64>(), rng.gen::<f64>());
                if r1 + r2 > 1.0 {
                    r1 = 1.0 - r1;
                    r2 = 1.0 - r2;
                }
                a + (b - a) * r1 + (c - a) * r2
            })
            .collect()
    }
}

/// Grid of cubic voxels over `bounds` with `resolution` cells along the
/// longest axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub voxel: f64,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn new(bounds: &Aabb, resolution: usize) -> Result<Self, String> {
        if resolution < MIN_RESOLUTION {
            return Err(format!("resolution {resolution} is too coarse (minimum {MIN_RESOLUTION})"));
        }
        let e = bounds.extent();
        let voxel = e.max() / resolution as f64;
        if !(voxel > 0.0) {
            return Err("empty bounds".into());
        }
        let dims = [0, 1, 2].map(|a| ((e[a] / voxel - 1e-9).ceil() as usize).max(1));
        Ok(Self {
            origin: bounds.min,
            voxel,
            dims,
        })
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.voxel
    }
}

/// Triangulate the zero level set of `sdf` (positive in free space) with
/// marching tetrahedra. Triangles face the positive side; vertices on shared
/// grid edges are shared.
pub fn extract_mesh<F: FnMut(&Vec3) -> f64>(mut sdf: F, bounds: &Aabb, resolution: usize) -> Result<Mesh, String> {
    let g = VoxelGrid::new(bounds, resolution)?;
    let [nx, ny, nz] = g.dims.map(|d| d + 1);
    let idx = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
    let mut values = vec![0.0; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let s = sdf(&g.point(i, j, k));
                if !s.is_finite() {
                    return Err(format!("non-finite field value at grid point ({i}, {j}, {k})"));
                }
                values[idx(i, j, k)] = s;
            }
        }
    }
    let mut mesh = Mesh::default();
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();
    let mut vertex_on = |a: usize, b: usize, pa: Vec3, pb: Vec3, sa: f64, sb: f64, mesh: &mut Mesh| -> u32 {
        let key = (a.min(b), a.max(b));
        *edge_vertex.entry(key).or_insert_with(|| {
            let t = sa / (sa - sb);
            let p = pa + (pb - pa) * t;
            mesh.vertices.push([p.x, p.y, p.z]);
            (mesh.vertices.len() - 1) as u32
        })
    };
    for k in 0..g.dims[2] {
        for j in 0..g.dims[1] {
            for i in 0..g.dims[0] {
                let corner = |c: usize| (i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let ids: [usize; 8] = std::array::from_fn(|c| {
                    let (a, b, d) = corner(c);
                    idx(a, b, d)
                });
                let s: [f64; 8] = ids.map(|n| values[n]);
                if s.iter().all(|&x| x >= 0.0) || s.iter().all(|&x| x < 0.0) {
                    continue;
                }
                let pos: [Vec3; 8] = std::array::from_fn(|c| {
                    let (a, b, d) = corner(c);
                    g.point(a, b, d)
                });
                for tet in TETS {
                    let inside: Vec<usize> = tet.iter().copied().filter(|&c| s[c] < 0.0).collect();
                    let outside: Vec<usize> = tet.iter().copied().filter(|&c| s[c] >= 0.0).collect();
                    if inside.is_empty() || outside.is_empty() {
                        continue;
                    }
                    let mut cut = |a: usize, b: usize| vertex_on(ids[a], ids[b], pos[a], pos[b], s[a], s[b], &mut mesh);
                    let tris: Vec<[u32; 3]> = match (inside.len(), outside.len()) {
                        (1, 3) => vec![[cut(inside[0], outside[0]), cut(inside[0], outside[1]), cut(inside[0], outside[2])]],
                        (3, 1) => vec![[cut(outside[0], inside[0]), cut(outside[0], inside[1]), cut(outside[0], inside[2])]],
                        _ => {
                            let (a, b, c, d) = (inside[0], inside[1], outside[0], outside[1]);
                            let (p, q, r, t) = (cut(a, c), cut(a, d), cut(b, d), cut(b, c));
                            vec![[p, q, r], [p, r, t]]
                        }
                    };
                    // orient toward the free side
                    let c_in = inside.iter().map(|&c| pos[c]).sum::<Vec3>() / inside.len() as f64;
                    let c_out = outside.iter().map(|&c| pos[c]).sum::<Vec3>() / outside.len() as f64;
                    for mut t in tris {
                        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                            continue;
                        }
                        let [a, b, c] = t.map(|n| v(mesh.vertices[n as usize]));
                        if (b - a).cross(&(c - a)).dot(&(c_out - c_in)) < 0.0 {
                            t.swap(1, 2);
                        }
                        mesh.faces.push(t);
                    }
                }
            }
        }
    }
    Ok(mesh)
}

/// Closest point of triangle `abc` to `p` (Ericson, real-time collision
/// detection).
pub fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Exact point-to-mesh distance queries over a uniform grid of triangle
/// buckets.
pub struct MeshDistance<'a> {
    mesh: &'a Mesh,
    min: Vec3,
    cell: f64,
    dims: [i64; 3],
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> MeshDistance<'a> {
    pub fn new(mesh: &'a Mesh, cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for p in &mesh.vertices {
            min = min.inf(&v(*p));
            max = max.sup(&v(*p));
        }
        let dims = if mesh.vertices.is_empty() {
            min = Vec3::zeros();
            [1; 3]
        } else {
            [0, 1, 2].map(|a| ((max[a] - min[a]) / cell).floor() as i64 + 1)
        };
        let mut d = Self {
            mesh,
            min,
            cell,
            dims,
            buckets: HashMap::new(),
        };
        for f in 0..mesh.faces.len() {
            let t = mesh.triangle(f);
            let lo = d.cell_of(&t[0].inf(&t[1]).inf(&t[2]));
            let hi = d.cell_of(&t[0].sup(&t[1]).sup(&t[2]));
            for x in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for z in lo[2]..=hi[2] {
                        d.buckets.entry([x, y, z]).or_default().push(f as u32);
                    }
                }
            }
        }
        d
    }

    fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|a| (((p[a] - self.min[a]) / self.cell).floor() as i64).clamp(0, self.dims[a] - 1))
    }

    /// Distance from `p` to the nearest triangle; `None` for an empty mesh.
    pub fn distance(&self, p: &Vec3) -> Option<f64> {
        if self.mesh.faces.is_empty() {
            return None;
        }
        let base = self.cell_of(p);
        let lo = self.min;
        let hi = self.min + Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.cell;
        let outside = (p - p.sup(&lo).inf(&hi)).norm();
        let mut best = f64::INFINITY;
        let max_ring = *self.dims.iter().max().expect("three axes");
        for r in 0..=max_ring {
            for x in base[0] - r..=base[0] + r {
                for y in base[1] - r..=base[1] + r {
                    for z in base[2] - r..=base[2] + r {
                        let on_shell = (x - base[0]).abs() == r || (y - base[1]).abs() == r || (z - base[2]).abs() == r;
                        if !on_shell {
                            continue;
                        }
                        let Some(list) = self.buckets.get(&[x, y, z]) else {
                            continue;
                        };
                        for &f in list {
                            let [a, b, c] = self.mesh.triangle(f as usize);
                            best = best.min((closest_on_triangle(p, &a, &b, &c) - p).norm());
                        }
                    }
                }
            }
            // points in later rings are r cells away along some axis, and
            // every bucketed point is at least `outside` away
            if best <= outside.max(r as f64 * self.cell) {
                break;
            }
        }
        Some(best)
    }
}
