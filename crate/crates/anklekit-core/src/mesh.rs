//! Indexed triangle meshes with the bookkeeping the exporters need:
//! vertex welding, degenerate-face removal, an edge census for watertightness
//! and little-endian binary STL round-tripping.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o failure writing mesh: {0}")]
    Io(#[from] std::io::Error),
    #[error("stl file truncated or malformed: {0}")]
    MalformedStl(String),
    #[error("triangle index {0} out of bounds for {1} vertices")]
    IndexOutOfBounds(u32, usize),
}

/// Indexed triangle mesh. Winding is counter-clockwise seen from outside.
#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn validate_indices(&self) -> Result<(), MeshError> {
        let n = self.vertices.len();
        for tri in &self.triangles {
            for &i in tri {
                if i as usize >= n {
                    return Err(MeshError::IndexOutOfBounds(i, n));
                }
            }
        }
        Ok(())
    }

    /// Merges vertices closer than `tol` and remaps triangle indices.
    /// Faces that collapse to fewer than three distinct vertices are dropped.
    pub fn weld(&mut self, tol: f64) {
        let inv = 1.0 / tol.max(f64::MIN_POSITIVE);
        let mut cell_map: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let mut remap = vec![0u32; self.vertices.len()];
        let mut kept: Vec<Point3<f64>> = Vec::with_capacity(self.vertices.len());

        for (vi, p) in self.vertices.iter().enumerate() {
            let key = (
                (p.x * inv).round() as i64,
                (p.y * inv).round() as i64,
                (p.z * inv).round() as i64,
            );
            let mut found = None;
            'outer: for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let k = (key.0 + dx, key.1 + dy, key.2 + dz);
                        if let Some(ids) = cell_map.get(&k) {
                            for &id in ids {
                                if (kept[id as usize] - p).norm() <= tol {
                                    found = Some(id);
                                    break 'outer;
                                }
                            }
                        }
                    }
                }
            }
            let id = match found {
                Some(id) => id,
                None => {
                    let id = kept.len() as u32;
                    kept.push(*p);
                    cell_map.entry(key).or_default().push(id);
                    id
                }
            };
            remap[vi] = id;
        }

        self.vertices = kept;
        for tri in &mut self.triangles {
            for i in tri.iter_mut() {
                *i = remap[*i as usize];
            }
        }
        self.triangles
            .retain(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2]);
    }

    /// Removes faces with area at or below `min_area`.
    pub fn drop_degenerate(&mut self, min_area: f64) {
        let verts = &self.vertices;
        self.triangles.retain(|t| {
            let a = verts[t[0] as usize];
            let b = verts[t[1] as usize];
            let c = verts[t[2] as usize];
            0.5 * (b - a).cross(&(c - a)).norm() > min_area
        });
    }

    pub fn triangle_normal(&self, tri: usize) -> Vector3<f64> {
        let [i, j, k] = self.triangles[tri];
        let a = self.vertices[i as usize];
        let b = self.vertices[j as usize];
        let c = self.vertices[k as usize];
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize];
                let b = self.vertices[t[1] as usize];
                let c = self.vertices[t[2] as usize];
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Signed enclosed volume by the divergence theorem; positive when the
    /// winding gives outward normals.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize].coords;
                let b = self.vertices[t[1] as usize].coords;
                let c = self.vertices[t[2] as usize].coords;
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Edge census: a mesh is watertight when every undirected edge is shared
    /// by exactly two faces, and orientation-consistent when every directed
    /// edge appears exactly once.
    pub fn edge_census(&self) -> EdgeCensus {
        let mut undirected: HashMap<(u32, u32), u32> = HashMap::new();
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *directed.entry(e).or_insert(0) += 1;
                let key = if e.0 < e.1 { e } else { (e.1, e.0) };
                *undirected.entry(key).or_insert(0) += 1;
            }
        }
        let watertight = !self.triangles.is_empty() && undirected.values().all(|&c| c == 2);
        let oriented = directed.values().all(|&c| c == 1);
        let boundary_edges = undirected.values().filter(|&&c| c != 2).count();
        EdgeCensus {
            watertight,
            oriented,
            boundary_edges,
            unique_edges: undirected.len(),
        }
    }

    /// Appends all faces of `other`, reindexing its vertices.
    pub fn append(&mut self, other: &TriMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }

    /// Writes binary STL: 80-byte header, u32 triangle count, then per
    /// triangle normal + 3 vertices as f32 little-endian and a zero
    /// attribute word.
    pub fn write_stl(&self, path: &Path) -> Result<(), MeshError> {
        self.validate_indices()?;
        let mut buf: Vec<u8> = Vec::with_capacity(84 + 50 * self.triangles.len());
        let mut header = [0u8; 80];
        let tag = b"anklekit binary stl";
        header[..tag.len()].copy_from_slice(tag);
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for (ti, t) in self.triangles.iter().enumerate() {
            let n = self.triangle_normal(ti);
            for v in [n.x, n.y, n.z] {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            for &i in t {
                let p = self.vertices[i as usize];
                for v in [p.x, p.y, p.z] {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            buf.extend_from_slice(&0u16.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    /// Reads a binary STL written by [`TriMesh::write_stl`] (or any
    /// conforming binary STL). Vertices are not welded.
    pub fn read_stl(path: &Path) -> Result<TriMesh, MeshError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 84 {
            return Err(MeshError::MalformedStl("shorter than 84-byte preamble".into()));
        }
        let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        let expect = 84 + 50 * count;
        if bytes.len() < expect {
            return Err(MeshError::MalformedStl(format!(
                "expected {} bytes for {} triangles, found {}",
                expect,
                count,
                bytes.len()
            )));
        }
        let mut mesh = TriMesh::new();
        let read_f32 = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        for ti in 0..count {
            let base = 84 + 50 * ti + 12; // skip stored normal
            let mut tri = [0u32; 3];
            for (vi, slot) in tri.iter_mut().enumerate() {
                let off = base + 12 * vi;
                let p = Point3::new(
                    read_f32(off) as f64,
                    read_f32(off + 4) as f64,
                    read_f32(off + 8) as f64,
                );
                *slot = mesh.vertices.len() as u32;
                mesh.vertices.push(p);
            }
            mesh.triangles.push(tri);
        }
        Ok(mesh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeCensus {
    pub watertight: bool,
    pub oriented: bool,
    pub boundary_edges: usize,
    pub unique_edges: usize,
}
