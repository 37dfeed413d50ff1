mod common;

use common::*;
use nalgebra::Vector3;
use poserefine::geometry::{orthonormality_error, RigidPose};
use poserefine::harness::{
    experiment_camera, generate_occlusion_scene, generate_scene, perturb_pose, run_parallel, AblationConfig,
    PerturbationSpec, SceneRecipe,
};
use poserefine::image::DescriptorImage;
use poserefine::metrics::{add_error, adds_error, ModelPointSet};
use poserefine::raster::rasterize;
use poserefine::refine::{pixelwise_loss, refine, RefinementConfig};
use poserefine::sampling::{derive_seed, rng_from_seed, symmetric};
use poserefine::scene::Scene;

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn canonical_shift_converges() {
    let db = procedural_db(&["mug"]);
    let gt = pose(random_rotation(42), [0.0, 0.0, 0.5]);
    let scene = Scene::new(experiment_camera()).with_instance(0, gt);
    let observed = rasterize(&scene, &db).unwrap();
    let mut start = scene.clone();
    start.instances[0].pose = RigidPose::new(*gt.rotation(), gt.translation() + Vector3::new(0.01, 0.0, 0.0)).unwrap();
    let (out, trace) = refine(&start, &db, observed.descriptor(), &RefinementConfig::default()).unwrap();
    assert_eq!(trace.len(), 51);
    let model = ModelPointSet::from_mesh(db.get(0).unwrap()).unwrap();
    let add = add_error(&gt, &out.instances[0].pose, &model);
    assert!(add < 0.002, "{add}");
    assert!(trace.final_loss().unwrap() < trace.initial_loss().unwrap());
}

#[test]
fn occluded_pairs_both_improve() {
    let db = procedural_db(&["box", "cylinder", "mug", "sphere"]);
    let mut recipe = SceneRecipe::new(experiment_camera(), 2, vec![0, 1, 2, 3]);
    recipe.max_attempts = 5000;
    let mut cfg = AblationConfig::new(100, recipe, 10);
    cfg.min_occlusion = 0.35;
    cfg.max_occlusion = 0.45;
    let spec = PerturbationSpec {
        translation_range: 0.01,
        rotation_angle_range: 10f64.to_radians(),
    };
    let models: Vec<ModelPointSet> = db.iter().map(|(_, _, m)| ModelPointSet::from_mesh(m).unwrap()).collect();
    let improved = run_parallel(100, workers(), |i| {
        let (gt, occ) = generate_occlusion_scene(&cfg, &db, derive_seed(10, i as u64)).unwrap();
        assert!((0.35..=0.45).contains(&occ));
        let observed = rasterize(&gt, &db).unwrap();
        let mut start = gt.clone();
        for (k, inst) in start.instances.iter_mut().enumerate() {
            inst.pose = perturb_pose(&inst.pose, &spec, derive_seed(11, (2 * i + k) as u64)).unwrap();
        }
        let (out, _) = refine(&start, &db, observed.descriptor(), &RefinementConfig::default()).unwrap();
        (0..2).all(|k| {
            let m = &models[gt.instances[k].mesh];
            add_error(&gt.instances[k].pose, &out.instances[k].pose, m)
                < add_error(&gt.instances[k].pose, &start.instances[k].pose, m)
        })
    });
    let n = improved.iter().filter(|&&b| b).count();
    assert!(n >= 90, "{n}/100");
}

#[test]
fn rotations_stay_valid_and_order_does_not_matter() {
    let db = procedural_db(&["box", "cylinder", "mug", "sphere"]);
    let recipe = SceneRecipe::new(experiment_camera(), 3, vec![0, 1, 2, 3]);
    for s in 0..5 {
        let gt = generate_scene(&recipe, &db, derive_seed(20, s)).unwrap();
        let observed = rasterize(&gt, &db).unwrap();
        let spec = PerturbationSpec {
            translation_range: 0.02,
            rotation_angle_range: 15f64.to_radians(),
        };
        let mut start = gt.clone();
        for (k, inst) in start.instances.iter_mut().enumerate() {
            inst.pose = perturb_pose(&inst.pose, &spec, derive_seed(21, 10 * s + k as u64)).unwrap();
        }
        let cfg = RefinementConfig::default();
        let (out, trace) = refine(&start, &db, observed.descriptor(), &cfg).unwrap();
        for rec in &trace.records {
            for p in &rec.poses {
                assert!(orthonormality_error(p.rotation()) <= 1e-6);
            }
        }

        let order = [2usize, 0, 1];
        let mut permuted = start.clone();
        permuted.instances = order.iter().map(|&k| start.instances[k]).collect();
        let (out_p, _) = refine(&permuted, &db, observed.descriptor(), &cfg).unwrap();
        for (j, &k) in order.iter().enumerate() {
            let (a, b) = (&out.instances[k].pose, &out_p.instances[j].pose);
            assert!((a.translation() - b.translation()).norm() < 1e-9);
            assert!((a.rotation() - b.rotation()).norm() < 1e-9);
        }
    }
}

#[test]
fn median_error_drops() {
    let db = procedural_db(&["box", "cylinder", "mug", "sphere"]);
    let recipe = SceneRecipe::new(experiment_camera(), 1, vec![0, 1, 2, 3]);
    let spec = PerturbationSpec {
        translation_range: 0.02,
        rotation_angle_range: 15f64.to_radians(),
    };
    let models: Vec<ModelPointSet> = db.iter().map(|(_, _, m)| ModelPointSet::from_mesh(m).unwrap()).collect();
    let pairs = run_parallel(100, workers(), |i| {
        let gt = generate_scene(&recipe, &db, derive_seed(30, i as u64)).unwrap();
        let observed = rasterize(&gt, &db).unwrap();
        let mut start = gt.clone();
        start.instances[0].pose = perturb_pose(&gt.instances[0].pose, &spec, derive_seed(31, i as u64)).unwrap();
        let (out, _) = refine(&start, &db, observed.descriptor(), &RefinementConfig::default()).unwrap();
        let m = &models[gt.instances[0].mesh];
        let g = &gt.instances[0].pose;
        (add_error(g, &start.instances[0].pose, m), add_error(g, &out.instances[0].pose, m))
    });
    let initial = median(pairs.iter().map(|p| p.0).collect());
    let fin = median(pairs.iter().map(|p| p.1).collect());
    assert!(fin < initial, "{fin} vs {initial}");
}

#[test]
fn symmetric_cylinder_recovers_shape_not_spin() {
    let mut db = poserefine::mesh::MeshDb::new();
    db.add("sym", poserefine::scene_io::builtin_source("cylinder-sym").unwrap());
    let model = ModelPointSet::from_mesh(db.get(0).unwrap()).unwrap();
    for s in 0..5u64 {
        let gt = pose(random_rotation(50 + s), [0.0, 0.0, 0.5]);
        let scene = Scene::new(experiment_camera()).with_instance(0, gt);
        let observed = rasterize(&scene, &db).unwrap();
        // Spin about the object's own axis plus a small shift.
        let spin = rot([0.0, 0.0, 1.0], 0.6 + 0.1 * s as f64);
        let start_pose = RigidPose::new(gt.rotation() * spin, gt.translation() + Vector3::new(0.004, -0.003, 0.0)).unwrap();
        let start = Scene::new(experiment_camera()).with_instance(0, start_pose);
        let (out, _) = refine(&start, &db, observed.descriptor(), &RefinementConfig::default()).unwrap();
        let fin = out.instances[0].pose;
        let (add, adds) = (add_error(&gt, &fin, &model), adds_error(&gt, &fin, &model));
        assert!(adds < add, "{adds} vs {add}");
        assert!(adds < 0.005, "{adds}");
    }
}

#[test]
fn pixelwise_gradient_matches_differences() {
    let db = procedural_db(&["mug"]);
    let scene = Scene::new(camera(16, 16, 20.0)).with_instance(0, pose(random_rotation(3), [0.0, 0.0, 0.5]));
    let fb = rasterize(&scene, &db).unwrap();
    let mut rng = rng_from_seed(4);
    let data: Vec<f64> = (0..3 * 256).map(|_| symmetric(&mut rng, 1.0)).collect();
    let observed = DescriptorImage::from_data(3, 16, 16, data).unwrap();
    let (loss, g) = pixelwise_loss(&fb, &observed).unwrap();
    let g = g.into_inner();
    let l = |r: &DescriptorImage| -> f64 { r.data().iter().zip(observed.data()).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum() };
    assert!((l(fb.descriptor()) - loss).abs() <= 1e-12 * loss);
    // The loss is quadratic, so a large step has no truncation error and keeps rounding small.
    let h = 1e-3;
    for i in 0..g.data().len() {
        let mut p = fb.descriptor().clone();
        p.data_mut()[i] += h;
        let mut m = fb.descriptor().clone();
        m.data_mut()[i] -= h;
        let fd = (l(&p) - l(&m)) / (2.0 * h);
        let a = g.data()[i];
        assert!((a - fd).abs() <= 1e-7 * a.abs().max(fd.abs()).max(1e-3), "{a} vs {fd}");
    }
    let (zero, zg) = pixelwise_loss(&fb, fb.descriptor()).unwrap();
    assert_eq!(zero, 0.0);
    assert!(zg.into_inner().data().iter().all(|v| *v == 0.0));
}
