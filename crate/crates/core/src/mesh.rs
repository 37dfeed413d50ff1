//! Triangle meshes carrying per-vertex descriptors, the mesh database, and
//! built-in primitive generators.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub const DEFAULT_DESCRIPTOR_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    descriptor_dim: usize,
    /// Row-major `vertex_count x descriptor_dim`.
    descriptors: Vec<f64>,
}

impl TriMesh {
    /// Builds a mesh with all-zero descriptors of dimension `descriptor_dim`.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>, descriptor_dim: usize) -> Result<Self> {
        let n = vertices.len();
        Self::with_descriptors(vertices, faces, descriptor_dim, vec![0.0; n * descriptor_dim])
    }

    pub fn with_descriptors(
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[u32; 3]>,
        descriptor_dim: usize,
        descriptors: Vec<f64>,
    ) -> Result<Self> {
        if descriptor_dim == 0 {
            return Err(Error::invalid("descriptor dimension must be at least 1"));
        }
        if descriptors.len() != vertices.len() * descriptor_dim {
            return Err(Error::invalid(format!(
                "expected {} descriptor values, got {}",
                vertices.len() * descriptor_dim,
                descriptors.len()
            )));
        }
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid("mesh has non-finite vertex coordinates"));
        }
        if descriptors.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("mesh has non-finite descriptors"));
        }
        let n = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= n) {
                return Err(Error::invalid(format!("face {i} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("face {i} repeats a vertex")));
            }
        }
        Ok(Self {
            vertices,
            faces,
            descriptor_dim,
            descriptors,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    pub fn descriptors(&self) -> &[f64] {
        &self.descriptors
    }

    pub fn descriptor(&self, vertex: usize) -> &[f64] {
        let d = self.descriptor_dim;
        &self.descriptors[vertex * d..(vertex + 1) * d]
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Replaces all descriptors; `values` is row-major `vertex_count x dim`.
    pub fn set_descriptors(&mut self, dim: usize, values: Vec<f64>) -> Result<()> {
        if dim == 0 || values.len() != self.vertices.len() * dim {
            return Err(Error::invalid(format!(
                "descriptor table of {} values does not fit {} vertices of dimension {dim}",
                values.len(),
                self.vertices.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite descriptor"));
        }
        self.descriptor_dim = dim;
        self.descriptors = values;
        Ok(())
    }

    pub fn with_constant_descriptor(mut self, value: &[f64]) -> Result<Self> {
        let values = value.repeat(self.vertices.len());
        self.set_descriptors(value.len(), values)?;
        Ok(self)
    }

    pub fn bounding_box(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounding_box().map_or(0.0, |(lo, hi)| (hi - lo).norm())
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> TriMesh {
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v += offset;
        }
        m
    }

    pub fn triangle(&self, face: usize) -> [Vector3<f64>; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Object-frame point at barycentric weights `bary` on `face`.
    pub fn surface_point(&self, face: usize, bary: &[f64; 3]) -> Vector3<f64> {
        let [a, b, c] = self.triangle(face);
        a * bary[0] + b * bary[1] + c * bary[2]
    }

    /// Writes the interpolated descriptor at `bary` on `face` into `out`.
    pub fn interpolate_descriptor(&self, face: usize, bary: &[f64; 3], out: &mut [f64]) {
        let f = self.faces[face];
        out.fill(0.0);
        for (k, &vi) in f.iter().enumerate() {
            let d = self.descriptor(vi as usize);
            for (o, &x) in out.iter_mut().zip(d) {
                *o += bary[k] * x;
            }
        }
    }

    fn append(&mut self, other: &TriMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        self.descriptors.extend_from_slice(&other.descriptors);
    }
}

/// Index into a [`MeshDb`].
pub type MeshId = usize;

#[derive(Debug, Clone, Default)]
pub struct MeshDb {
    meshes: Vec<TriMesh>,
    names: Vec<String>,
}

impl MeshDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, mesh: TriMesh) -> MeshId {
        self.meshes.push(mesh);
        self.names.push(name.into());
        self.meshes.len() - 1
    }

    pub fn get(&self, id: MeshId) -> Result<&TriMesh> {
        self.meshes.get(id).ok_or(Error::UnknownMesh(id))
    }

    pub fn get_mut(&mut self, id: MeshId) -> Result<&mut TriMesh> {
        self.meshes.get_mut(id).ok_or(Error::UnknownMesh(id))
    }

    pub fn name(&self, id: MeshId) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn find(&self, name: &str) -> Option<MeshId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.meshes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meshes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MeshId, &str, &TriMesh)> {
        self.meshes
            .iter()
            .zip(&self.names)
            .enumerate()
            .map(|(i, (m, n))| (i, n.as_str(), m))
    }
}

/// Axis-aligned box centered at the origin, each face split into
/// `subdivisions x subdivisions` quads.
pub fn make_box(size: Vector3<f64>, subdivisions: usize) -> TriMesh {
    let n = subdivisions.max(1);
    let h = size / 2.0;
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    // (normal axis, sign, u axis, v axis) with u x v pointing outward.
    let sides: [(usize, f64, usize, usize); 6] = [
        (0, 1.0, 1, 2),
        (0, -1.0, 2, 1),
        (1, 1.0, 2, 0),
        (1, -1.0, 0, 2),
        (2, 1.0, 0, 1),
        (2, -1.0, 1, 0),
    ];
    for (axis, sign, u, v) in sides {
        let base = verts.len() as u32;
        for j in 0..=n {
            for i in 0..=n {
                let mut p = Vector3::zeros();
                p[axis] = sign * h[axis];
                p[u] = -h[u] + size[u] * i as f64 / n as f64;
                p[v] = -h[v] + size[v] * j as f64 / n as f64;
                verts.push(p);
            }
        }
        let row = (n + 1) as u32;
        for j in 0..n as u32 {
            for i in 0..n as u32 {
                let a = base + j * row + i;
                let b = a + 1;
                let c = a + row;
                let d = c + 1;
                faces.push([a, b, d]);
                faces.push([a, d, c]);
            }
        }
    }
    weld(verts, faces)
}

/// Closed cylinder along the object z axis, centered at the origin.
pub fn make_cylinder(radius: f64, height: f64, segments: usize, rings: usize) -> TriMesh {
    let segs = segments.max(3);
    let rings = rings.max(1);
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for r in 0..=rings {
        let z = -height / 2.0 + height * r as f64 / rings as f64;
        for s in 0..segs {
            let t = std::f64::consts::TAU * s as f64 / segs as f64;
            verts.push(Vector3::new(radius * t.cos(), radius * t.sin(), z));
        }
    }
    let idx = |r: usize, s: usize| (r * segs + s % segs) as u32;
    for r in 0..rings {
        for s in 0..segs {
            let a = idx(r, s);
            let b = idx(r, s + 1);
            let c = idx(r + 1, s);
            let d = idx(r + 1, s + 1);
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    let bottom = verts.len() as u32;
    verts.push(Vector3::new(0.0, 0.0, -height / 2.0));
    let top = verts.len() as u32;
    verts.push(Vector3::new(0.0, 0.0, height / 2.0));
    for s in 0..segs {
        faces.push([bottom, idx(0, s + 1), idx(0, s)]);
        faces.push([top, idx(rings, s), idx(rings, s + 1)]);
    }
    TriMesh::new(verts, faces, DEFAULT_DESCRIPTOR_DIM).expect("cylinder construction is valid")
}

/// A cylinder body with a box handle on its +x side.
pub fn make_mug(radius: f64, height: f64) -> TriMesh {
    let mut body = make_cylinder(radius, height, 32, 4);
    let handle = make_box(Vector3::new(radius * 0.6, radius * 0.35, height * 0.55), 2)
        .translated(&Vector3::new(radius * 1.2, 0.0, 0.0));
    body.append(&handle);
    body
}

/// Subdivided icosahedron; `level` subdivisions give `20 * 4^level` faces.
pub fn make_icosphere(radius: f64, level: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache = std::collections::HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                verts.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut verts {
        *v *= radius;
    }
    TriMesh::new(verts, faces, DEFAULT_DESCRIPTOR_DIM).expect("icosphere construction is valid")
}

/// Regular grid in the object xy plane with heights `height(x, y)` along z.
pub fn make_heightfield(
    extent: f64,
    cells: usize,
    height: impl Fn(f64, f64) -> f64,
) -> TriMesh {
    let n = cells.max(1);
    let mut verts = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = -extent / 2.0 + extent * i as f64 / n as f64;
            let y = -extent / 2.0 + extent * j as f64 / n as f64;
            verts.push(Vector3::new(x, y, height(x, y)));
        }
    }
    let row = (n + 1) as u32;
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n as u32 {
        for i in 0..n as u32 {
            let a = j * row + i;
            faces.push([a, a + 1, a + row + 1]);
            faces.push([a, a + row + 1, a + row]);
        }
    }
    TriMesh::new(verts, faces, DEFAULT_DESCRIPTOR_DIM).expect("heightfield construction is valid")
}

/// Merges bit-identical vertex positions.
fn weld(verts: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> TriMesh {
    let mut index = std::collections::HashMap::new();
    let mut out = Vec::new();
    let remap: Vec<u32> = verts
        .iter()
        .map(|v| {
            let key = [v[0].to_bits(), v[1].to_bits(), v[2].to_bits()];
            *index.entry(key).or_insert_with(|| {
                out.push(*v);
                out.len() as u32 - 1
            })
        })
        .collect();
    let faces = faces
        .into_iter()
        .map(|f| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]])
        .collect();
    TriMesh::new(out, faces, DEFAULT_DESCRIPTOR_DIM).expect("welded mesh is valid")
}

/// Built-in primitive by name: `box`, `cube`, `cylinder`, `mug`, `sphere`.
/// Sizes are desk scale (a few centimeters), except `cube` which is the unit cube.
pub fn builtin(name: &str) -> Option<TriMesh> {
    Some(match name {
        "box" => make_box(Vector3::new(0.08, 0.06, 0.10), 4),
        "cube" => make_box(Vector3::new(1.0, 1.0, 1.0), 8),
        "cylinder" => make_cylinder(0.035, 0.10, 48, 6),
        "mug" => make_mug(0.04, 0.09),
        "sphere" => make_icosphere(0.05, 3),
        _ => return None,
    })
}

pub const BUILTIN_NAMES: [&str; 5] = ["box", "cube", "cylinder", "mug", "sphere"];
