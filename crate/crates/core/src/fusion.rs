//! Feature-annotated meshes: the procedural descriptor oracle and multi-view
//! fusion of per-pixel descriptors onto mesh vertices.
//!
//! Fusion collects `(object-frame point, descriptor)` pairs from every covered
//! pixel of every view, averages them inside voxels whose size is chosen from
//! the bounding box so the occupied-cell count lands near a budget, and gives
//! each vertex the inverse-distance-weighted mean of its four nearest cells.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{PinholeCamera, RigidPose};
use crate::kdtree::KdTree;
use crate::mesh::{MeshDb, TriMesh};
use crate::raster::{rasterize, FrameBuffers};
use crate::sampling::{rng_from_seed, uniform_in, unit_vector};
use crate::scene::Scene;

pub const DEFAULT_VOXEL_BUDGET: usize = 5000;
pub const DEFAULT_VIEW_COUNT: usize = 50;
/// Regularizer of the inverse-distance weights, in meters.
pub const IDW_EPSILON: f64 = 1e-6;
const IDW_NEIGHBORS: usize = 4;

/// Descriptor equal to the object-frame position normalized by the bounding
/// box to `[-1, 1]^3`. Axes of zero extent map to 0.
pub fn procedural_descriptors(mesh: &TriMesh) -> Result<TriMesh> {
    let (lo, hi) = mesh
        .bounding_box()
        .ok_or_else(|| Error::invalid("procedural descriptors need at least one vertex"))?;
    let center = (lo + hi) / 2.0;
    let half = (hi - lo) / 2.0;
    let mut values = Vec::with_capacity(mesh.vertex_count() * 3);
    for v in mesh.vertices() {
        for k in 0..3 {
            values.push(if half[k] > 0.0 { (v[k] - center[k]) / half[k] } else { 0.0 });
        }
    }
    let mut out = mesh.clone();
    out.set_descriptors(3, values)?;
    Ok(out)
}

/// Descriptor invariant under rotation about the object z axis: normalized
/// distance from the axis, normalized height, and zero. Stands in for learned
/// features of a rotationally symmetric object, which cannot tell its
/// symmetric poses apart.
pub fn axisymmetric_descriptors(mesh: &TriMesh) -> Result<TriMesh> {
    let (lo, hi) = mesh
        .bounding_box()
        .ok_or_else(|| Error::invalid("axisymmetric descriptors need at least one vertex"))?;
    let zc = (lo.z + hi.z) / 2.0;
    let zh = (hi.z - lo.z) / 2.0;
    let rmax = mesh.vertices().iter().map(|v| v.xy().norm()).fold(0.0, f64::max);
    let mut values = Vec::with_capacity(mesh.vertex_count() * 3);
    for v in mesh.vertices() {
        values.push(if rmax > 0.0 { 2.0 * v.xy().norm() / rmax - 1.0 } else { 0.0 });
        values.push(if zh > 0.0 { (v.z - zc) / zh } else { 0.0 });
        values.push(0.0);
    }
    let mut out = mesh.clone();
    out.set_descriptors(3, values)?;
    Ok(out)
}

/// Default fusion camera: 320x240, `fx = fy = 280`.
pub fn fusion_camera() -> PinholeCamera {
    PinholeCamera::new(280.0, 280.0, 159.5, 119.5, 320, 240, 0.01, 100.0).expect("valid constants")
}

/// `n` object-to-camera poses whose camera centers lie at a uniform direction
/// and uniform distance in `[min_distance, max_distance]` from the origin, each
/// looking at the origin with a random roll.
pub fn sample_view_poses(n: usize, min_distance: f64, max_distance: f64, seed: u64) -> Result<Vec<RigidPose>> {
    sample_view_poses_around(&Vector3::zeros(), n, min_distance, max_distance, seed)
}

/// [`sample_view_poses`] looking at `target` instead of the origin.
pub fn sample_view_poses_around(
    target: &Vector3<f64>,
    n: usize,
    min_distance: f64,
    max_distance: f64,
    seed: u64,
) -> Result<Vec<RigidPose>> {
    if n == 0 {
        return Err(Error::invalid("at least one view is required"));
    }
    if !(min_distance > 0.0 && min_distance <= max_distance) {
        return Err(Error::invalid("view distances need 0 < min <= max"));
    }
    let mut rng = rng_from_seed(seed);
    let mut poses = Vec::with_capacity(n);
    for _ in 0..n {
        let dir = unit_vector(&mut rng);
        let dist = uniform_in(&mut rng, min_distance, max_distance);
        let roll = uniform_in(&mut rng, 0.0, std::f64::consts::TAU);
        let eye = target + dir * dist;
        // Camera axes expressed in the object frame.
        let z = -dir;
        let helper = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let x0 = helper.cross(&z).normalize();
        let y0 = z.cross(&x0);
        let (s, c) = roll.sin_cos();
        let x = x0 * c + y0 * s;
        let y = z.cross(&x);
        let axes = Matrix3::from_columns(&[x, y, z]);
        let rotation = axes.transpose();
        poses.push(RigidPose::new(rotation, -(rotation * eye))?);
    }
    Ok(poses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSample {
    pub pose: RigidPose,
    pub buffers: FrameBuffers,
}

/// Renders `mesh` alone at each pose.
pub fn render_views(mesh: &TriMesh, camera: &PinholeCamera, poses: &[RigidPose]) -> Result<Vec<ViewSample>> {
    let mut db = MeshDb::new();
    let id = db.add("fusion", mesh.clone());
    poses
        .iter()
        .map(|pose| {
            let scene = Scene::new(*camera).with_instance(id, *pose);
            Ok(ViewSample {
                pose: *pose,
                buffers: rasterize(&scene, &db)?,
            })
        })
        .collect()
}

/// Views for fusion: `n` poses at 1.2 to 2 bounding-box diagonals from the box
/// center, rendered with the fusion camera.
pub fn default_views(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<ViewSample>> {
    let (lo, hi) = mesh
        .bounding_box()
        .ok_or_else(|| Error::invalid("mesh has no vertices"))?;
    let diag = (hi - lo).norm().max(1e-6);
    let poses = sample_view_poses_around(&((lo + hi) / 2.0), n, 1.2 * diag, 2.0 * diag, seed)?;
    render_views(mesh, &fusion_camera(), &poses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCell {
    pub position: Vector3<f64>,
    pub descriptor: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelAggregate {
    pub voxel_size: f64,
    pub cells: BTreeMap<[i64; 3], VoxelCell>,
}

impl VoxelAggregate {
    fn build(samples: &[(Vector3<f64>, Vec<f64>)], dim: usize, voxel_size: f64) -> Self {
        let mut sums: BTreeMap<[i64; 3], (Vector3<f64>, Vec<f64>, usize)> = BTreeMap::new();
        for (p, d) in samples {
            let key = [
                (p.x / voxel_size).floor() as i64,
                (p.y / voxel_size).floor() as i64,
                (p.z / voxel_size).floor() as i64,
            ];
            let e = sums.entry(key).or_insert_with(|| (Vector3::zeros(), vec![0.0; dim], 0));
            e.0 += p;
            for (a, b) in e.1.iter_mut().zip(d) {
                *a += b;
            }
            e.2 += 1;
        }
        let cells = sums
            .into_iter()
            .map(|(k, (p, d, n))| {
                let inv = 1.0 / n as f64;
                (
                    k,
                    VoxelCell {
                        position: p * inv,
                        descriptor: d.into_iter().map(|v| v * inv).collect(),
                        count: n,
                    },
                )
            })
            .collect();
        Self { voxel_size, cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub mesh: TriMesh,
    pub voxels: VoxelAggregate,
    pub sample_count: usize,
    /// Vertices incident to no face seen in any view.
    pub unobserved_vertices: Vec<usize>,
}

impl FusionResult {
    pub fn observed(&self, vertex: usize) -> bool {
        self.unobserved_vertices.binary_search(&vertex).is_err()
    }
}

/// Fuses the views' descriptors onto the vertices of `mesh`. The geometry of
/// `mesh` must be the one the views were rendered from.
pub fn fuse(mesh: &TriMesh, views: &[ViewSample], voxel_budget: usize) -> Result<FusionResult> {
    if voxel_budget == 0 {
        return Err(Error::invalid("voxel budget must be positive"));
    }
    let dim = match views.first() {
        Some(v) => v.buffers.descriptor().dim(),
        None => return Err(Error::FusionEmpty),
    };
    let mut samples = Vec::new();
    let mut seen = vec![false; mesh.vertex_count()];
    for view in views {
        let fb = &view.buffers;
        if fb.descriptor().dim() != dim {
            return Err(Error::invalid("views have different descriptor dimensions"));
        }
        for idx in 0..fb.pixel_count() {
            if !fb.is_covered(idx) {
                continue;
            }
            let face = fb.face_ids()[idx] as usize;
            if face >= mesh.face_count() {
                return Err(Error::invalid("view references a face the mesh does not have"));
            }
            for &v in &mesh.faces()[face] {
                seen[v as usize] = true;
            }
            samples.push((mesh.surface_point(face, &fb.barycentrics()[idx]), fb.descriptor().pixel(idx)));
        }
    }
    if samples.is_empty() {
        return Err(Error::FusionEmpty);
    }

    let diag = mesh.bbox_diagonal().max(1e-9);
    let first = diag / (voxel_budget as f64).cbrt();
    let n1 = VoxelAggregate::build(&samples, dim, first).len();
    // Occupied cells of a surface scale with the inverse square of the size.
    let size = first * (n1 as f64 / voxel_budget as f64).sqrt();
    let voxels = VoxelAggregate::build(&samples, dim, size);

    let cells: Vec<&VoxelCell> = voxels.cells.values().collect();
    let positions: Vec<Vector3<f64>> = cells.iter().map(|c| c.position).collect();
    let tree = KdTree::build(&positions);
    let mut values = Vec::with_capacity(mesh.vertex_count() * dim);
    for v in mesh.vertices() {
        let nn = tree.nearest_k(v, IDW_NEIGHBORS);
        let mut acc = vec![0.0; dim];
        let mut wsum = 0.0;
        for (i, d) in nn {
            let w = 1.0 / (d + IDW_EPSILON);
            wsum += w;
            for (a, b) in acc.iter_mut().zip(&cells[i].descriptor) {
                *a += w * b;
            }
        }
        values.extend(acc.into_iter().map(|a| a / wsum));
    }
    let mut out = mesh.clone();
    out.set_descriptors(dim, values)?;
    let unobserved_vertices = seen
        .iter()
        .enumerate()
        .filter(|(_, s)| !**s)
        .map(|(i, _)| i)
        .collect();
    Ok(FusionResult {
        mesh: out,
        voxels,
        sample_count: samples.len(),
        unobserved_vertices,
    })
}

/// Procedural annotation, `n_views` renders and fusion in one call.
pub fn annotate(mesh: &TriMesh, n_views: usize, voxel_budget: usize, seed: u64) -> Result<FusionResult> {
    fuse_rendered(&procedural_descriptors(mesh)?, n_views, voxel_budget, seed)
}

/// Renders an already annotated mesh from `n_views` views and fuses the
/// rendered descriptors back onto it.
pub fn fuse_rendered(annotated: &TriMesh, n_views: usize, voxel_budget: usize, seed: u64) -> Result<FusionResult> {
    let views = default_views(annotated, n_views, seed)?;
    fuse(annotated, &views, voxel_budget)
}

/// Root mean squared per-component difference between two meshes'
/// descriptors over the selected vertices.
pub fn descriptor_rmse(a: &TriMesh, b: &TriMesh, vertices: impl IntoIterator<Item = usize>) -> Result<f64> {
    if a.vertex_count() != b.vertex_count() || a.descriptor_dim() != b.descriptor_dim() {
        return Err(Error::invalid("meshes differ in vertex count or descriptor dimension"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in vertices {
        for (x, y) in a.descriptor(v).iter().zip(b.descriptor(v)) {
            sum += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("RMSE over no vertices".into()));
    }
    Ok((sum / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::builtin;

    #[test]
    fn cube_corners_map_to_box_corners() {
        let m = procedural_descriptors(&builtin("cube").unwrap()).unwrap();
        for (i, v) in m.vertices().iter().enumerate() {
            if v.iter().all(|c| c.abs() == 0.5) {
                for k in 0..3 {
                    assert_eq!(m.descriptor(i)[k], v[k].signum());
                }
            }
        }
    }

    #[test]
    fn axisymmetric_descriptors_ignore_axis_rotation() {
        let m = axisymmetric_descriptors(&builtin("cylinder").unwrap()).unwrap();
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 0.7);
        let turned = TriMesh::new(m.vertices().iter().map(|v| rot * v).collect(), m.faces().to_vec(), 3).unwrap();
        let t = axisymmetric_descriptors(&turned).unwrap();
        for (x, y) in m.descriptors().iter().zip(t.descriptors()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn translation_invariant() {
        let m = builtin("box").unwrap();
        let a = procedural_descriptors(&m).unwrap();
        let b = procedural_descriptors(&m.translated(&Vector3::new(0.3, -1.0, 2.0))).unwrap();
        for (x, y) in a.descriptors().iter().zip(b.descriptors()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_axis_maps_to_zero() {
        let m = TriMesh::new(
            vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 1.0), Vector3::new(0.0, 1.0, 1.0)],
            vec![[0, 1, 2]],
            3,
        )
        .unwrap();
        let d = procedural_descriptors(&m).unwrap();
        assert!(d.descriptors().chunks(3).all(|c| c[2] == 0.0));
    }

    #[test]
    fn view_poses_deterministic_and_in_range() {
        let a = sample_view_poses(20, 0.5, 0.8, 3).unwrap();
        let b = sample_view_poses(20, 0.5, 0.8, 3).unwrap();
        assert_eq!(a, b);
        for p in &a {
            let eye = -(p.rotation().transpose() * p.translation());
            assert!(eye.norm() >= 0.5 - 1e-12 && eye.norm() <= 0.8 + 1e-12);
            // The origin sits on the optical axis.
            let o = p.transform_point(&Vector3::zeros());
            assert!(o.x.abs() < 1e-12 && o.y.abs() < 1e-12 && o.z > 0.0);
        }
        assert!(sample_view_poses(0, 0.5, 0.8, 3).is_err());
    }

    #[test]
    fn constant_descriptor_survives_fusion() {
        let m = builtin("sphere").unwrap().with_constant_descriptor(&[0.25, -0.5, 0.75]).unwrap();
        let views = default_views(&m, 6, 1).unwrap();
        let r = fuse(&m, &views, 500).unwrap();
        for c in r.mesh.descriptors().chunks(3) {
            assert!((c[0] - 0.25).abs() < 1e-6 && (c[1] + 0.5).abs() < 1e-6 && (c[2] - 0.75).abs() < 1e-6);
        }
    }

    #[test]
    fn no_views_is_fusion_empty() {
        let m = builtin("sphere").unwrap();
        assert!(matches!(fuse(&m, &[], 100), Err(Error::FusionEmpty)));
        let away = RigidPose::from_translation(Vector3::new(0.0, 0.0, -5.0));
        let views = render_views(&m, &fusion_camera(), &[away]).unwrap();
        assert!(matches!(fuse(&m, &views, 100), Err(Error::FusionEmpty)));
    }
}
