#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use poserefine::geometry::{PinholeCamera, PoseDelta, RigidPose, pose_update};
use poserefine::image::DescriptorImage;
use poserefine::fusion::procedural_descriptors;
use poserefine::mesh::{builtin, make_box, MeshDb, TriMesh};
use poserefine::raster::rasterize;
use poserefine::refine::pixelwise_loss;
use poserefine::sampling::{axis_angle, rng_from_seed, uniform_rotation};
use poserefine::scene::Scene;

pub fn camera(w: usize, h: usize, f: f64) -> PinholeCamera {
    PinholeCamera::new(f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h, 0.05, 10.0).unwrap()
}

/// Builtins with procedural descriptors, named `builtin:<name>`.
pub fn procedural_db(names: &[&str]) -> MeshDb {
    let mut db = MeshDb::new();
    for n in names {
        db.add(format!("builtin:{n}"), procedural_descriptors(&builtin(n).unwrap()).unwrap());
    }
    db
}

pub fn pose(r: Matrix3<f64>, t: [f64; 3]) -> RigidPose {
    RigidPose::new(r, Vector3::from(t)).unwrap()
}

pub fn random_rotation(seed: u64) -> Matrix3<f64> {
    uniform_rotation(&mut rng_from_seed(seed))
}

pub fn rot(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
    axis_angle(&Vector3::from(axis), angle)
}

/// Rendered pixel-wise loss of `scene` against `observed`.
pub fn rendered_loss(scene: &Scene, meshes: &MeshDb, observed: &DescriptorImage) -> f64 {
    pixelwise_loss(&rasterize(scene, meshes).unwrap(), observed).unwrap().0
}

pub fn with_delta(scene: &Scene, instance: usize, delta: &[f64; 6]) -> Scene {
    let mut s = scene.clone();
    let d = PoseDelta::from_vector(&nalgebra::Vector6::from_row_slice(delta));
    s.instances[instance].pose = pose_update(&s.instances[instance].pose, &d).unwrap();
    s
}

/// Central difference of the rendered loss along one delta coordinate.
pub fn fd_delta(scene: &Scene, meshes: &MeshDb, observed: &DescriptorImage, instance: usize, k: usize, h: f64) -> f64 {
    let mut plus = [0.0; 6];
    plus[k] = h;
    let mut minus = [0.0; 6];
    minus[k] = -h;
    let lp = rendered_loss(&with_delta(scene, instance, &plus), meshes, observed);
    let lm = rendered_loss(&with_delta(scene, instance, &minus), meshes, observed);
    (lp - lm) / (2.0 * h)
}

/// Large box that fills the view from half a meter, so the rendered loss
/// has no silhouette discontinuities.
pub fn wall_mesh() -> TriMesh {
    procedural_descriptors(&make_box(Vector3::new(1.2, 1.2, 0.2), 12)).unwrap()
}

/// Nearest ray hit through the sample point of pixel (x, y): (instance, face, depth, barycentrics).
pub type Hit = (usize, usize, f64, [f64; 3]);

/// Independent ray caster: intersects the pixel ray with every triangle
/// (Moller-Trumbore) and keeps the nearest hit inside [near, far].
pub fn ray_cast(scene: &Scene, meshes: &MeshDb, x: usize, y: usize) -> Option<Hit> {
    let cam = &scene.camera;
    let dir = Vector3::new((x as f64 - cam.cx) / cam.fx, (y as f64 - cam.cy) / cam.fy, 1.0);
    let mut best: Option<Hit> = None;
    for (i, inst) in scene.instances.iter().enumerate() {
        let mesh = meshes.get(inst.mesh).unwrap();
        for (f, face) in mesh.faces().iter().enumerate() {
            let p: Vec<Vector3<f64>> = face
                .iter()
                .map(|&v| inst.pose.transform_point(&mesh.vertices()[v as usize]))
                .collect();
            let e1 = p[1] - p[0];
            let e2 = p[2] - p[0];
            let pv = dir.cross(&e2);
            let det = e1.dot(&pv);
            if det.abs() < 1e-14 {
                continue;
            }
            let tv = -p[0];
            let u = tv.dot(&pv) / det;
            let qv = tv.cross(&e1);
            let v = dir.dot(&qv) / det;
            if u < 0.0 || v < 0.0 || u + v > 1.0 {
                continue;
            }
            let t = e2.dot(&qv) / det;
            // dir.z = 1, so the ray parameter is the depth.
            if t < cam.near || t > cam.far {
                continue;
            }
            if best.is_none_or(|b| t < b.2) {
                best = Some((i, f, t, [1.0 - u - v, u, v]));
            }
        }
    }
    best
}

pub fn oracle_descriptor(scene: &Scene, meshes: &MeshDb, hit: &Hit) -> Vec<f64> {
    let mesh = meshes.get(scene.instances[hit.0].mesh).unwrap();
    let mut out = vec![0.0; mesh.descriptor_dim()];
    let face = mesh.faces()[hit.1];
    for (k, &v) in face.iter().enumerate() {
        for (o, d) in out.iter_mut().zip(mesh.descriptor(v as usize)) {
            *o += hit.3[k] * d;
        }
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
