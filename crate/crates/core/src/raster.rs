//! Z-buffered triangle rasterization of descriptor-annotated meshes.
//!
//! Each covered pixel stores the winning instance and face together with the
//! perspective-corrected barycentric weights of the surface point seen at the
//! pixel center, so the descriptor at the pixel is exactly the weighted sum of
//! the face's vertex descriptors. Equal depths go to the lower
//! `(instance_id, face_id)` pair. Triangles are clipped against the near plane;
//! there is no backface culling and no anti-aliasing.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::PinholeCamera;
use crate::image::{DescriptorImage, Mask};
use crate::mesh::{MeshDb, TriMesh, DEFAULT_DESCRIPTOR_DIM};
use crate::scene::Scene;

pub const BACKGROUND: i32 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    width: usize,
    height: usize,
    descriptor: DescriptorImage,
    depth: Vec<f64>,
    instance_id: Vec<i32>,
    face_id: Vec<i32>,
    barycentric: Vec<[f64; 3]>,
}

impl FrameBuffers {
    pub fn empty(dim: usize, width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            descriptor: DescriptorImage::zeros(dim, width, height),
            depth: vec![f64::INFINITY; n],
            instance_id: vec![BACKGROUND; n],
            face_id: vec![BACKGROUND; n],
            barycentric: vec![[0.0; 3]; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn descriptor(&self) -> &DescriptorImage {
        &self.descriptor
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn instance_ids(&self) -> &[i32] {
        &self.instance_id
    }

    pub fn face_ids(&self) -> &[i32] {
        &self.face_id
    }

    pub fn barycentrics(&self) -> &[[f64; 3]] {
        &self.barycentric
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn is_covered(&self, idx: usize) -> bool {
        self.instance_id[idx] >= 0
    }

    /// Number of covered pixels per instance, for instances `0..count`.
    pub fn coverage_counts(&self, count: usize) -> Vec<usize> {
        let mut out = vec![0; count];
        for &id in &self.instance_id {
            if id >= 0 && (id as usize) < count {
                out[id as usize] += 1;
            }
        }
        out
    }

    /// Object-frame surface point at a covered pixel, from face id and barycentrics.
    pub fn object_point(&self, scene: &Scene, meshes: &MeshDb, idx: usize) -> Result<Option<Vector3<f64>>> {
        let inst = self.instance_id[idx];
        if inst < 0 {
            return Ok(None);
        }
        let mesh = meshes.get(scene.instance(inst as usize)?.mesh)?;
        let face = self.face_id[idx] as usize;
        if face >= mesh.face_count() {
            return Err(Error::invalid("buffers do not match the scene meshes"));
        }
        Ok(Some(mesh.surface_point(face, &self.barycentric[idx])))
    }
}

#[derive(Clone, Copy)]
struct ClipVertex {
    p: Vector3<f64>,
    bary: [f64; 3],
}

fn lerp_vertex(a: &ClipVertex, b: &ClipVertex, t: f64) -> ClipVertex {
    ClipVertex {
        p: a.p + (b.p - a.p) * t,
        bary: [
            a.bary[0] + (b.bary[0] - a.bary[0]) * t,
            a.bary[1] + (b.bary[1] - a.bary[1]) * t,
            a.bary[2] + (b.bary[2] - a.bary[2]) * t,
        ],
    }
}

/// Sutherland-Hodgman against `z >= near`. Returns the polygon vertex count (0, 3 or 4).
fn clip_near(tri: &[ClipVertex; 3], near: f64, out: &mut [ClipVertex; 4]) -> usize {
    let mut n = 0;
    for i in 0..3 {
        let a = &tri[i];
        let b = &tri[(i + 1) % 3];
        let a_in = a.p[2] >= near;
        let b_in = b.p[2] >= near;
        if a_in {
            out[n] = *a;
            n += 1;
        }
        if a_in != b_in {
            let t = (near - a.p[2]) / (b.p[2] - a.p[2]);
            let mut v = lerp_vertex(a, b, t);
            v.p[2] = near;
            out[n] = v;
            n += 1;
        }
    }
    n
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, px: f64, py: f64) -> f64 {
    (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
}

struct Target<'a> {
    camera: &'a PinholeCamera,
    depth: &'a mut [f64],
    instance_id: &'a mut [i32],
    face_id: &'a mut [i32],
    barycentric: &'a mut [[f64; 3]],
}

impl Target<'_> {
    fn draw(&mut self, verts: [&ClipVertex; 3], instance: i32, face: i32) {
        let cam = self.camera;
        let s = verts.map(|v| cam.project_unchecked(&v.p));
        let area = edge(&s[0], &s[1], s[2][0], s[2][1]);
        if !(area.abs() > 1e-12) {
            return;
        }
        let w = cam.width as f64;
        let h = cam.height as f64;
        let min_x = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_x = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).floor().min(w - 1.0);
        let min_y = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_y = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).floor().min(h - 1.0);
        if !(min_x <= max_x && min_y <= max_y) {
            return;
        }
        let inv_area = 1.0 / area;
        let inv_z = [1.0 / verts[0].p[2], 1.0 / verts[1].p[2], 1.0 / verts[2].p[2]];
        let (x0, x1, y0, y1) = (min_x as usize, max_x as usize, min_y as usize, max_y as usize);
        for y in y0..=y1 {
            let py = y as f64;
            for x in x0..=x1 {
                let px = x as f64;
                let l0 = edge(&s[1], &s[2], px, py) * inv_area;
                let l1 = edge(&s[2], &s[0], px, py) * inv_area;
                let l2 = edge(&s[0], &s[1], px, py) * inv_area;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let q = [l0 * inv_z[0], l1 * inv_z[1], l2 * inv_z[2]];
                let sum = q[0] + q[1] + q[2];
                let z = (1.0 / sum).max(cam.near);
                let idx = y * cam.width + x;
                if !(z < self.depth[idx]) || z > cam.far {
                    continue;
                }
                let mut bary = [0.0; 3];
                for (k, v) in verts.iter().enumerate() {
                    let wk = q[k] / sum;
                    for (b, vb) in bary.iter_mut().zip(&v.bary) {
                        *b += wk * vb;
                    }
                }
                self.depth[idx] = z;
                self.instance_id[idx] = instance;
                self.face_id[idx] = face;
                self.barycentric[idx] = bary;
            }
        }
    }
}

fn scene_descriptor_dim(scene: &Scene, meshes: &MeshDb) -> Result<usize> {
    let mut dim = None;
    for inst in &scene.instances {
        let d = meshes.get(inst.mesh)?.descriptor_dim();
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(Error::invalid(format!(
                    "scene mixes descriptor dimensions {prev} and {d}"
                )))
            }
            _ => {}
        }
    }
    Ok(dim
        .or_else(|| meshes.iter().next().map(|(_, _, m)| m.descriptor_dim()))
        .unwrap_or(DEFAULT_DESCRIPTOR_DIM))
}

/// Renders descriptor, depth, instance id, face id and barycentric buffers.
pub fn rasterize(scene: &Scene, meshes: &MeshDb) -> Result<FrameBuffers> {
    scene.validate(meshes)?;
    let cam = &scene.camera;
    let dim = scene_descriptor_dim(scene, meshes)?;
    let mut fb = FrameBuffers::empty(dim, cam.width, cam.height);
    let mut target = Target {
        camera: cam,
        depth: &mut fb.depth,
        instance_id: &mut fb.instance_id,
        face_id: &mut fb.face_id,
        barycentric: &mut fb.barycentric,
    };
    let mut cam_verts = Vec::new();
    for (inst_idx, inst) in scene.instances.iter().enumerate() {
        let mesh = meshes.get(inst.mesh)?;
        if mesh.face_count() == 0 {
            continue;
        }
        cam_verts.clear();
        cam_verts.extend(mesh.vertices().iter().map(|v| inst.pose.transform_point(v)));
        for (face_idx, f) in mesh.faces().iter().enumerate() {
            let tri = [
                ClipVertex {
                    p: cam_verts[f[0] as usize],
                    bary: [1.0, 0.0, 0.0],
                },
                ClipVertex {
                    p: cam_verts[f[1] as usize],
                    bary: [0.0, 1.0, 0.0],
                },
                ClipVertex {
                    p: cam_verts[f[2] as usize],
                    bary: [0.0, 0.0, 1.0],
                },
            ];
            let inside = tri.iter().filter(|v| v.p[2] >= cam.near).count();
            if inside == 0 || tri.iter().all(|v| v.p[2] > cam.far) {
                continue;
            }
            if inside == 3 {
                target.draw([&tri[0], &tri[1], &tri[2]], inst_idx as i32, face_idx as i32);
            } else {
                let mut poly = [tri[0]; 4];
                let n = clip_near(&tri, cam.near, &mut poly);
                for k in 1..n.saturating_sub(1) {
                    target.draw([&poly[0], &poly[k], &poly[k + 1]], inst_idx as i32, face_idx as i32);
                }
            }
        }
    }
    resolve_descriptors(&mut fb, scene, meshes)?;
    Ok(fb)
}

fn resolve_descriptors(fb: &mut FrameBuffers, scene: &Scene, meshes: &MeshDb) -> Result<()> {
    let mesh_refs: Vec<&TriMesh> = scene
        .instances
        .iter()
        .map(|i| meshes.get(i.mesh))
        .collect::<Result<_>>()?;
    let dim = fb.descriptor.dim();
    let n = fb.pixel_count();
    let mut buf = vec![0.0; dim];
    for idx in 0..n {
        let inst = fb.instance_id[idx];
        if inst < 0 {
            continue;
        }
        let mesh = mesh_refs[inst as usize];
        mesh.interpolate_descriptor(fb.face_id[idx] as usize, &fb.barycentric[idx], &mut buf);
        let data = fb.descriptor.data_mut();
        for (c, &v) in buf.iter().enumerate() {
            data[c * n + idx] = v;
        }
    }
    Ok(())
}

pub fn instance_mask(buffers: &FrameBuffers, instance: i32) -> Mask {
    let data = buffers.instance_id.iter().map(|&id| id == instance).collect();
    Mask::from_data(buffers.width, buffers.height, data).expect("buffer sizes are consistent")
}

/// Intersection over union of two masks, in percent. Two empty masks give 0.
pub fn pixel_overlap(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid(format!(
            "mask size mismatch: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        0.0
    } else {
        100.0 * inter as f64 / union as f64
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidPose;

    fn camera() -> PinholeCamera {
        PinholeCamera::new(40.0, 40.0, 16.0, 16.0, 32, 32, 0.1, 10.0).unwrap()
    }

    fn quad(half: f64, desc: &[f64]) -> TriMesh {
        let v = vec![
            Vector3::new(-half, -half, 0.0),
            Vector3::new(half, -half, 0.0),
            Vector3::new(half, half, 0.0),
            Vector3::new(-half, half, 0.0),
        ];
        TriMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], desc.len())
            .unwrap()
            .with_constant_descriptor(desc)
            .unwrap()
    }

    #[test]
    fn empty_scene_is_background() {
        let db = MeshDb::new();
        let fb = rasterize(&Scene::new(camera()), &db).unwrap();
        assert!(fb.instance_ids().iter().all(|&i| i == BACKGROUND));
        assert!(fb.depth().iter().all(|d| d.is_infinite()));
        assert!(fb.descriptor().data().iter().all(|&d| d == 0.0));
        assert_eq!(instance_mask(&fb, 0).count(), 0);
    }

    #[test]
    fn single_triangle_constant_descriptor() {
        let mut db = MeshDb::new();
        let tri = TriMesh::new(
            vec![
                Vector3::new(-1.0, -1.0, 0.0),
                Vector3::new(1.0, -1.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
            3,
        )
        .unwrap()
        .with_constant_descriptor(&[1.0, 0.0, 0.0])
        .unwrap();
        let id = db.add("tri", tri);
        let scene = Scene::new(camera())
            .with_instance(id, RigidPose::from_translation(Vector3::new(0.0, 0.0, 2.0)));
        let fb = rasterize(&scene, &db).unwrap();
        let c = fb.index(16, 16);
        assert_eq!(fb.instance_ids()[c], 0);
        assert_eq!(fb.descriptor().pixel(c), vec![1.0, 0.0, 0.0]);
        assert!((fb.depth()[c] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zbuffer_keeps_nearest() {
        let mut db = MeshDb::new();
        let near = db.add("near", quad(0.2, &[1.0, 0.0, 0.0]));
        let far = db.add("far", quad(0.5, &[0.0, 1.0, 0.0]));
        // Far quad listed first so draw order cannot explain the result.
        let scene = Scene::new(camera())
            .with_instance(far, RigidPose::from_translation(Vector3::new(0.0, 0.0, 2.0)))
            .with_instance(near, RigidPose::from_translation(Vector3::new(0.0, 0.0, 1.0)));
        let fb = rasterize(&scene, &db).unwrap();
        let c = fb.index(16, 16);
        assert_eq!(fb.instance_ids()[c], 1);
        assert_eq!(fb.depth()[c], 1.0);
        let corner = fb.index(7, 7);
        assert_eq!(fb.instance_ids()[corner], 0);
    }

    #[test]
    fn equal_depth_prefers_lower_instance() {
        let mut db = MeshDb::new();
        let a = db.add("a", quad(0.3, &[1.0, 0.0, 0.0]));
        let b = db.add("b", quad(0.3, &[0.0, 1.0, 0.0]));
        let pose = RigidPose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let fb1 = rasterize(&Scene::new(camera()).with_instance(a, pose).with_instance(b, pose), &db).unwrap();
        let c = fb1.index(16, 16);
        assert_eq!(fb1.instance_ids()[c], 0);
        assert_eq!(fb1.descriptor().pixel(c), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        let mut db = MeshDb::new();
        // Plane tilted so that part of it lies in front of the near plane.
        let v = vec![
            Vector3::new(-1.0, -1.0, 0.05),
            Vector3::new(1.0, -1.0, 0.05),
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(-1.0, 1.0, 1.0),
        ];
        let m = TriMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], 3).unwrap();
        let id = db.add("tilt", m);
        let fb = rasterize(&Scene::new(camera()).with_instance(id, RigidPose::identity()), &db).unwrap();
        let covered: Vec<usize> = (0..fb.pixel_count()).filter(|&i| fb.is_covered(i)).collect();
        assert!(!covered.is_empty());
        for &i in &covered {
            assert!(fb.depth()[i] >= 0.1 && fb.depth()[i] <= 10.0);
            let b = fb.barycentrics()[i];
            assert!(b.iter().all(|&w| w >= 0.0));
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_face_mesh_is_skipped() {
        let mut db = MeshDb::new();
        let id = db.add("pts", TriMesh::new(vec![Vector3::zeros()], vec![], 3).unwrap());
        let fb = rasterize(
            &Scene::new(camera()).with_instance(id, RigidPose::from_translation(Vector3::z())),
            &db,
        )
        .unwrap();
        assert_eq!(instance_mask(&fb, 0).count(), 0);
    }

    #[test]
    fn unknown_mesh_is_an_error() {
        let db = MeshDb::new();
        let scene = Scene::new(camera()).with_instance(3, RigidPose::identity());
        assert!(matches!(rasterize(&scene, &db), Err(Error::UnknownMesh(3))));
    }

    #[test]
    fn overlap_examples() {
        let a = Mask::from_data(2, 1, vec![true, true]).unwrap();
        let b = Mask::from_data(2, 1, vec![true, false]).unwrap();
        assert_eq!(pixel_overlap(&a, &b).unwrap(), 50.0);
        assert_eq!(pixel_overlap(&a, &a).unwrap(), 100.0);
        let c = Mask::from_data(2, 1, vec![false, true]).unwrap();
        assert_eq!(pixel_overlap(&b, &c).unwrap(), 0.0);
        let e = Mask::new(2, 1);
        assert_eq!(pixel_overlap(&e, &e).unwrap(), 0.0);
        assert!(pixel_overlap(&a, &Mask::new(1, 2)).is_err());
    }
}
