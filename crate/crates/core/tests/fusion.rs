mod common;

use nalgebra::Vector3;
use poserefine::fusion::{
    annotate, default_views, fuse, procedural_descriptors, sample_view_poses, DEFAULT_VOXEL_BUDGET,
};
use poserefine::mesh::{builtin, make_icosphere};

#[test]
fn view_directions_are_uniform() {
    let poses = sample_view_poses(1000, 1.0, 2.0, 11).unwrap();
    let mut mean = Vector3::zeros();
    for p in &poses {
        // Camera center in the object frame.
        let eye = -(p.rotation().transpose() * p.translation());
        let d = eye.norm();
        assert!((1.0 - 1e-9..=2.0 + 1e-9).contains(&d));
        mean += eye / d;
        // The optical axis passes through the origin.
        assert!(p.translation().xy().norm() < 1e-9);
    }
    mean /= poses.len() as f64;
    assert!(mean.norm() < 0.1, "{}", mean.norm());
    assert_eq!(poses, sample_view_poses(1000, 1.0, 2.0, 11).unwrap());
}

#[test]
fn fused_descriptors_are_convex_combinations() {
    let mesh = procedural_descriptors(&builtin("mug").unwrap()).unwrap();
    let views = default_views(&mesh, 20, 3).unwrap();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in &views {
        for idx in 0..v.buffers.pixel_count() {
            if v.buffers.is_covered(idx) {
                for (c, d) in v.buffers.descriptor().pixel(idx).iter().enumerate() {
                    lo[c] = lo[c].min(*d);
                    hi[c] = hi[c].max(*d);
                }
            }
        }
    }
    let fused = fuse(&mesh, &views, 2000).unwrap();
    for vtx in 0..fused.mesh.vertex_count() {
        for (c, d) in fused.mesh.descriptor(vtx).iter().enumerate() {
            assert!(*d >= lo[c] - 1e-9 && *d <= hi[c] + 1e-9);
        }
    }
    for cell in fused.voxels.cells.values() {
        assert!(cell.count >= 1);
        assert!(cell.descriptor.iter().all(|d| d.is_finite()));
    }
}

#[test]
fn view_order_does_not_matter() {
    let mesh = procedural_descriptors(&builtin("box").unwrap()).unwrap();
    let views = default_views(&mesh, 12, 4).unwrap();
    let a = fuse(&mesh, &views, 3000).unwrap();
    let mut reversed = views.clone();
    reversed.reverse();
    reversed.swap(0, 5);
    let b = fuse(&mesh, &reversed, 3000).unwrap();
    assert_eq!(a.voxels.cells.len(), b.voxels.cells.len());
    assert_eq!(a.unobserved_vertices, b.unobserved_vertices);
    for (x, y) in a.mesh.descriptors().iter().zip(b.mesh.descriptors()) {
        assert!((x - y).abs() <= 1e-9);
    }
}

#[test]
fn voxel_budget_is_respected() {
    let mesh = procedural_descriptors(&make_icosphere(0.05, 4)).unwrap();
    let mut checked = 0;
    for budget in [500, 2000, DEFAULT_VOXEL_BUDGET] {
        let fused = annotate(&mesh, 50, budget, 9).unwrap();
        if fused.sample_count >= 10 * budget {
            checked += 1;
            let n = fused.voxels.len();
            assert!(n * 2 >= budget && n <= 2 * budget, "budget {budget}: {n} cells");
        }
        assert!(fused.voxels.voxel_size > 0.0);
    }
    assert_eq!(checked, 3);
}

#[test]
fn hidden_vertex_still_gets_a_descriptor() {
    let mut mesh = procedural_descriptors(&builtin("cube").unwrap()).unwrap();
    // A tiny triangle sealed inside the cube is never seen.
    let n = mesh.vertex_count() as u32;
    let mut verts = mesh.vertices().to_vec();
    verts.extend([Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.01, 0.0, 0.0), Vector3::new(0.0, 0.01, 0.0)]);
    let mut faces = mesh.faces().to_vec();
    faces.push([n, n + 1, n + 2]);
    let mut desc = mesh.descriptors().to_vec();
    desc.extend([0.0; 9]);
    mesh = poserefine::mesh::TriMesh::with_descriptors(verts, faces, 3, desc).unwrap();
    let fused = annotate(&mesh, 20, 2000, 1).unwrap();
    for v in [n, n + 1, n + 2] {
        assert!(!fused.observed(v as usize));
        assert!(fused.mesh.descriptor(v as usize).iter().all(|d| d.is_finite()));
    }
}
