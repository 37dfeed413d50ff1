//! Acceptance suite. Each test prints one `PASS` / `FAIL` line for its
//! criterion before asserting, so `cargo test --test acceptance -- --nocapture`
//! shows the full scorecard.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::Vector3;
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};

use poserefine::correspondence::{
    background_loss, combined_loss, contrastive_loss, CorrespondenceSet, Pixel, DEFAULT_BACKGROUND_WEIGHT,
};
use poserefine::fusion::{
    annotate, descriptor_rmse, procedural_descriptors,
    DEFAULT_VIEW_COUNT, DEFAULT_VOXEL_BUDGET,
};
use poserefine::geometry::RigidPose;
use poserefine::gradient::{backprop_to_pose, classify_boundaries, Corrections};
use poserefine::harness::{
    ablation_experiment, annotated_builtins, basin_experiment, experiment_camera, AblationConfig, BasinConfig,
    ExperimentReport, SceneRecipe, Study,
};
use poserefine::image::DescriptorImage;
use poserefine::mesh::{builtin, make_box, make_cylinder, MeshDb};
use poserefine::metrics::{add_error, adds_error, auc, ModelPointSet};
use poserefine::raster::rasterize;
use poserefine::refine::{pixelwise_loss, refine, RefinementConfig};
use poserefine::sampling::{derive_seed, rng_from_seed, symmetric, uniform_in, unit_vector};
use poserefine::scene::Scene;

use common::*;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

// 1. Gradient fidelity -------------------------------------------------------

/// Wall scene with a random tilt and placement, observed at a small random
/// offset from the start pose.
fn fidelity_scene(seed: u64, db: &MeshDb) -> (Scene, DescriptorImage) {
    let mut rng = rng_from_seed(seed);
    let tilt = common::rot(unit_vector(&mut rng).into(), uniform_in(&mut rng, 0.0, 20f64.to_radians()));
    let t = [symmetric(&mut rng, 0.05), symmetric(&mut rng, 0.05), uniform_in(&mut rng, 0.55, 0.65)];
    let start = pose(tilt, t);
    let off = Vector3::new(symmetric(&mut rng, 0.01), symmetric(&mut rng, 0.01), symmetric(&mut rng, 0.01));
    let turn = common::rot(unit_vector(&mut rng).into(), uniform_in(&mut rng, 0.0, 3f64.to_radians()));
    let target = RigidPose::new(turn * start.rotation(), start.translation() + off).unwrap();
    let cam = camera(64, 64, 64.0);
    let observed = rasterize(&Scene::new(cam).with_instance(0, target), db).unwrap();
    (Scene::new(cam).with_instance(0, start), observed.descriptor().clone())
}

#[test]
fn criterion_01_gradient_fidelity() {
    let started = Instant::now();
    let mut db = MeshDb::new();
    db.add("wall", wall_mesh());
    let trials = 100;
    let (mut fd_ok, mut descent_ok) = (0, 0);
    let mut worst = 0.0f64;
    for i in 0..trials {
        let (scene, observed) = fidelity_scene(derive_seed(1, i), &db);
        let fb = rasterize(&scene, &db).unwrap();
        let (_, up) = pixelwise_loss(&fb, &observed).unwrap();
        let classes = classify_boundaries(&fb);
        let g = backprop_to_pose(&fb, &up, &classes, &scene, &db, 0, &Corrections::default())
            .unwrap()
            .gradient;
        let fd: Vector3<f64> = Vector3::from_fn(|k, _| fd_delta(&scene, &db, &observed, 0, 3 + k, 1e-4));
        let err = (g.fixed_rows::<3>(3) - fd).norm() / fd.norm();
        worst = worst.max(err);
        if err <= 0.25 {
            fd_ok += 1;
        }
        let dir = -g / g.norm();
        let eps = 1e-3;
        let l0 = rendered_loss(&scene, &db, &observed);
        let step: [f64; 6] = std::array::from_fn(|k| eps * dir[k]);
        if rendered_loss(&with_delta(&scene, 0, &step), &db, &observed) < l0 {
            descent_ok += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = fd_ok == trials && descent_ok >= 95 && secs < 120.0;
    report(
        1,
        "gradient fidelity",
        pass,
        format!("{fd_ok}/{trials} within 25% of finite differences (worst {worst:.3}), {descent_ok}/{trials} descent, {secs:.1} s"),
    );
    assert!(pass);
}

// 2. Fixed point -------------------------------------------------------------

#[test]
fn criterion_02_fixed_point() {
    let db = procedural_db(&["box", "cylinder", "mug", "sphere"]);
    let mut worst_t = 0.0f64;
    let mut worst_r = 0.0f64;
    for i in 0..20u64 {
        let recipe = SceneRecipe::new(experiment_camera(), 1 + (i % 3) as usize, vec![0, 1, 2, 3]);
        let scene = poserefine::harness::generate_scene(&recipe, &db, derive_seed(2, i)).unwrap();
        let observed = rasterize(&scene, &db).unwrap();
        let (out, trace) = refine(&scene, &db, observed.descriptor(), &RefinementConfig::default()).unwrap();
        assert_eq!(trace.len(), 51);
        for (a, b) in scene.instances.iter().zip(&out.instances) {
            worst_t = worst_t.max((a.pose.translation() - b.pose.translation()).norm());
            worst_r = worst_r.max(a.pose.rotation_angle_to(&b.pose));
        }
    }
    let pass = worst_t <= 1e-6 && worst_r <= 1e-4;
    report(2, "fixed point", pass, format!("20 scenes, max drift {worst_t:.2e} m / {worst_r:.2e} rad"));
    assert!(pass);
}

// 3-4. Convergence basins ----------------------------------------------------

const BASIN_MESHES: [&str; 4] = ["box", "cylinder", "mug", "sphere"];

fn basin(study: Study, meshes: &[&str], trials: usize, seed: u64) -> ExperimentReport {
    let db = annotated_builtins(meshes, seed).unwrap();
    let recipe = SceneRecipe::new(experiment_camera(), 1, (0..db.len()).collect());
    let mut cfg = BasinConfig::new(study, trials, recipe, seed);
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let r = basin_experiment(&cfg, &db).unwrap();
    assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), trials);
    for b in &r.bins {
        println!(
            "    {:>12} n={:<4} ADD {:>5.1} -> {:>5.1}   ADD-S {:>5.1} -> {:>5.1}",
            b.label,
            b.count,
            b.initial_add_auc.unwrap_or(f64::NAN),
            b.final_add_auc.unwrap_or(f64::NAN),
            b.initial_adds_auc.unwrap_or(f64::NAN),
            b.final_adds_auc.unwrap_or(f64::NAN)
        );
    }
    r
}

#[test]
fn criterion_03_translation_basin() {
    let started = Instant::now();
    let r = basin(Study::Translation, &BASIN_MESHES, 200, 3);
    let th = 0.1;
    let high = r.pooled_auc(&[6, 7, 8, 9], th, |t| t.final_add).unwrap();
    let low = r.pooled_auc(&[0, 1], th, |t| t.final_add).unwrap();
    let regressions: Vec<&str> = r
        .bins
        .iter()
        .filter(|b| matches!((b.initial_add_auc, b.final_add_auc), (Some(i), Some(f)) if f < i))
        .map(|b| b.label.as_str())
        .collect();
    let secs = started.elapsed().as_secs_f64();
    let pass = high - low >= 15.0 && regressions.is_empty() && r.failed() == 0 && secs < 900.0;
    report(
        3,
        "translation basin",
        pass,
        format!(
            "final ADD AUC (60-100]% {high:.1} vs (0-20]% {low:.1}, gap {:.1} (need 15); bins regressing: {regressions:?}; {secs:.0} s",
            high - low
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_rotation_basin() {
    let r = basin(Study::Rotation, &BASIN_MESHES, 200, 4);
    let first = r.bins[0].final_add_auc.unwrap();
    let last = r.bins[8].final_add_auc.unwrap();
    println!("    symmetric cylinder:");
    let s = basin(Study::Rotation, &["cylinder-sym"], 200, 4);
    let s_first = s.bins[0].final_adds_auc.unwrap();
    let s_last = s.bins[8].final_adds_auc.unwrap();
    let pass = first - last >= 15.0 && (s_first - s_last).abs() <= 10.0 && r.failed() == 0 && s.failed() == 0;
    report(
        4,
        "rotation basin",
        pass,
        format!(
            "final ADD AUC (0-5] {first:.1} vs (40-45] {last:.1}, gap {:.1} (need 15); symmetric cylinder ADD-S {s_first:.1} vs {s_last:.1}, gap {:.1} (max 10)",
            first - last,
            s_first - s_last
        ),
    );
    assert!(pass);
}

// 5. Correction ablation -----------------------------------------------------

#[test]
fn criterion_05_correction_ablation() {
    let db = annotated_builtins(&BASIN_MESHES, 5).unwrap();
    let recipe = SceneRecipe::new(experiment_camera(), 2, (0..db.len()).collect());
    let mut cfg = AblationConfig::new(100, recipe, 5);
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let r = ablation_experiment(&cfg, &db).unwrap();
    assert!(r
        .trials
        .iter()
        .all(|t| t.error.is_some() || t.occlusion.unwrap() >= 0.3));
    let mean = |label: &str| r.bin(label).unwrap().mean_final_add.unwrap();
    let both = mean("suppression+dilation");
    let others = [
        ("dilation-only", mean("dilation-only")),
        ("suppression-only", mean("suppression-only")),
        ("none", mean("none")),
    ];
    let pass = r.failed() == 0 && others.iter().all(|(_, v)| both <= *v);
    report(
        5,
        "correction ablation",
        pass,
        format!("100 trials, mean final ADD both {both:.4} m vs {others:?}"),
    );
    assert!(pass);
}

// 6. Losses ------------------------------------------------------------------

fn random_image(seed: u64, dim: usize, w: usize, h: usize) -> DescriptorImage {
    let mut rng = rng_from_seed(seed);
    let data = (0..dim * w * h).map(|_| symmetric(&mut rng, 1.0)).collect();
    DescriptorImage::from_data(dim, w, h, data).unwrap()
}

fn random_pixels(seed: u64, n: usize, w: usize, h: usize) -> Vec<Pixel> {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| Pixel::new(rng.random_range(0..w as u32), rng.random_range(0..h as u32)))
        .collect()
}

/// Largest relative mismatch between `grad` and central differences of `f`.
fn fd_mismatch(img: &DescriptorImage, grad: &DescriptorImage, f: &dyn Fn(&DescriptorImage) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..img.data().len() {
        let mut p = img.clone();
        p.data_mut()[i] += h;
        let mut m = img.clone();
        m.data_mut()[i] -= h;
        let fd = (f(&p) - f(&m)) / (2.0 * h);
        let a = grad.data()[i];
        let scale = a.abs().max(fd.abs());
        if scale > 1e-9 {
            worst = worst.max((a - fd).abs() / scale);
        } else {
            worst = worst.max((a - fd).abs());
        }
    }
    worst
}

#[test]
fn criterion_06_losses() {
    let mut a = DescriptorImage::zeros(3, 2, 1);
    a.set(0, 0, 0, 0.2);
    a.set(1, 1, 0, 0.1);
    let b = DescriptorImage::zeros(3, 2, 1);
    let mut corr = CorrespondenceSet::new(0.5);
    corr.positives.push((Pixel::new(0, 0), Pixel::new(0, 0)));
    corr.negatives.push((Pixel::new(1, 0), Pixel::new(1, 0)));
    let l = contrastive_loss(&a, &b, &corr).unwrap();
    let example_ok = (l.positive - 0.04).abs() <= 1e-12
        && (l.negative - 0.16).abs() <= 1e-12
        && (l.value - 0.20).abs() <= 1e-12
        && l.hard_negatives == 1;

    let mut worst = 0.0f64;
    for s in 0..5u64 {
        let (w, h) = (16, 16);
        let a = random_image(derive_seed(60, s), 3, w, h);
        let b = random_image(derive_seed(61, s), 3, w, h);
        let mut corr = CorrespondenceSet::new(1.5);
        let pa = random_pixels(derive_seed(62, s), 40, w, h);
        let pb = random_pixels(derive_seed(63, s), 40, w, h);
        corr.positives = pa[..20].iter().copied().zip(pb[..20].iter().copied()).collect();
        corr.negatives = pa[20..].iter().copied().zip(pb[20..].iter().copied()).collect();
        corr.background_a = random_pixels(derive_seed(64, s), 30, w, h);
        corr.background_b = random_pixels(derive_seed(65, s), 30, w, h);

        let c = contrastive_loss(&a, &b, &corr).unwrap();
        assert!(c.hard_negatives > 0);
        worst = worst.max(fd_mismatch(&a, &c.grad_a, &|x| contrastive_loss(x, &b, &corr).unwrap().value));
        worst = worst.max(fd_mismatch(&b, &c.grad_b, &|x| contrastive_loss(&a, x, &corr).unwrap().value));

        let bg = background_loss(&a, &corr.background_a, DEFAULT_BACKGROUND_WEIGHT).unwrap();
        worst = worst.max(fd_mismatch(&a, &bg.grad, &|x| {
            background_loss(x, &corr.background_a, DEFAULT_BACKGROUND_WEIGHT).unwrap().value
        }));

        let cl = combined_loss(&a, &b, &corr, DEFAULT_BACKGROUND_WEIGHT).unwrap();
        worst = worst.max(fd_mismatch(&a, &cl.grad_a, &|x| {
            combined_loss(x, &b, &corr, DEFAULT_BACKGROUND_WEIGHT).unwrap().value
        }));
        worst = worst.max(fd_mismatch(&b, &cl.grad_b, &|x| {
            combined_loss(&a, x, &corr, DEFAULT_BACKGROUND_WEIGHT).unwrap().value
        }));

        // The pixel-wise refinement loss, through a rendering.
        let db = procedural_db(&["mug"]);
        let scene = Scene::new(camera(w, h, 20.0)).with_instance(0, pose(random_rotation(s), [0.0, 0.0, 0.5]));
        let fb = rasterize(&scene, &db).unwrap();
        let (_, g) = pixelwise_loss(&fb, &b).unwrap();
        let g = g.into_inner();
        let loss_of = |x: &DescriptorImage| -> f64 {
            x.data().iter().zip(b.data()).map(|(r, o)| 0.5 * (r - o) * (r - o)).sum()
        };
        worst = worst.max(fd_mismatch(fb.descriptor(), &g, &loss_of));
    }
    let pass = example_ok && worst <= 1e-4;
    report(
        6,
        "losses",
        pass,
        format!(
            "worked example L+={} L-={} LC={}; worst finite-difference mismatch {worst:.2e}",
            l.positive, l.negative, l.value
        ),
    );
    assert!(pass);
}

// 7. Metrics -----------------------------------------------------------------

fn add_oracle(gt: &RigidPose, est: &RigidPose, pts: &[Vector3<f64>]) -> f64 {
    let mut s = 0.0;
    for p in pts {
        s += (gt.transform_point(p) - est.transform_point(p)).norm();
    }
    s / pts.len() as f64
}

fn adds_oracle(gt: &RigidPose, est: &RigidPose, pts: &[Vector3<f64>]) -> f64 {
    let mut s = 0.0;
    for p in pts {
        let a = gt.transform_point(p);
        let mut best = f64::INFINITY;
        for q in pts {
            best = best.min((a - est.transform_point(q)).norm());
        }
        s += best;
    }
    s / pts.len() as f64
}

fn random_pose(rng: &mut poserefine::sampling::SeededRng) -> RigidPose {
    let r = poserefine::sampling::uniform_rotation(rng);
    RigidPose::new(r, Vector3::new(symmetric(rng, 0.3), symmetric(rng, 0.3), uniform_in(rng, 0.3, 1.0))).unwrap()
}

#[test]
fn criterion_07_metrics() {
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let mut rng = rng_from_seed(derive_seed(70, i));
        let n = 20 + (i as usize * 7) % 200;
        let pts: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(symmetric(&mut rng, 0.1), symmetric(&mut rng, 0.1), symmetric(&mut rng, 0.1)))
            .collect();
        let model = ModelPointSet::new(pts.clone()).unwrap();
        let (gt, est) = (random_pose(&mut rng), random_pose(&mut rng));
        worst = worst.max((add_error(&gt, &est, &model) - add_oracle(&gt, &est, &pts)).abs());
        worst = worst.max((adds_error(&gt, &est, &model) - adds_oracle(&gt, &est, &pts)).abs());
    }

    let mut runner = TestRunner::new(PtConfig {
        cases: 100_000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let strategy = (any::<u64>(), 1usize..12);
    let dominance = runner.run(&strategy, |(seed, n)| {
        let mut rng = rng_from_seed(seed);
        let pts: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(symmetric(&mut rng, 0.1), symmetric(&mut rng, 0.1), symmetric(&mut rng, 0.1)))
            .collect();
        let model = ModelPointSet::new(pts).unwrap();
        let (gt, est) = (random_pose(&mut rng), random_pose(&mut rng));
        prop_assert!(adds_error(&gt, &est, &model) <= add_error(&gt, &est, &model));
        Ok(())
    });
    let half = auc(&[0.05], 0.1).unwrap();
    let pass = worst <= 1e-9 && dominance.is_ok() && half == 50.0;
    report(
        7,
        "metrics",
        pass,
        format!(
            "max oracle deviation {worst:.1e}; ADD-S <= ADD on 1e5 cases: {}; auc({{0.05}}, 0.1) = {half}",
            if dominance.is_ok() { "held" } else { "violated" }
        ),
    );
    assert!(pass);
}

// 8. Fusion round trip -------------------------------------------------------

#[test]
fn criterion_08_fusion_round_trip() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, name) in ["cube", "cylinder"].iter().enumerate() {
        let mesh = builtin(name).unwrap();
        let fused = annotate(&mesh, DEFAULT_VIEW_COUNT, DEFAULT_VOXEL_BUDGET, derive_seed(8, i as u64)).unwrap();
        let reference = procedural_descriptors(&mesh).unwrap();
        let seen: Vec<usize> = (0..mesh.vertex_count()).filter(|&v| fused.observed(v)).collect();
        let rmse = descriptor_rmse(&fused.mesh, &reference, seen.iter().copied()).unwrap();
        let cells = fused.voxels.len();
        pass &= rmse < 0.05 && (2500..=10000).contains(&cells) && !seen.is_empty();
        lines.push(format!("{name}: rmse {rmse:.4}, {cells} voxels"));
    }
    report(8, "fusion round trip", pass, lines.join("; "));
    assert!(pass);
}

// 9. Performance -------------------------------------------------------------

#[test]
fn criterion_09_performance() {
    let slack = 3.0;
    let mut db = MeshDb::new();
    db.add("box", procedural_descriptors(&make_box(Vector3::new(0.08, 0.06, 0.1), 29)).unwrap());
    db.add("cylinder", procedural_descriptors(&make_cylinder(0.04, 0.1, 100, 49)).unwrap());
    let tris: Vec<usize> = db.iter().map(|(_, _, m)| m.face_count()).collect();
    assert!(tris.iter().all(|&t| t >= 10_000), "{tris:?}");
    let cam = poserefine::geometry::PinholeCamera::new(500.0, 500.0, 319.5, 239.5, 640, 480, 0.05, 10.0).unwrap();
    let mut gt = Scene::new(cam);
    for k in 0..5 {
        let x = -0.12 + 0.06 * k as f64;
        gt = gt.with_instance(k % 2, pose(random_rotation(90 + k as u64), [x, 0.01 * k as f64, 0.5 + 0.03 * k as f64]));
    }
    rasterize(&gt, &db).unwrap();
    let runs = 5;
    let t0 = Instant::now();
    for _ in 0..runs {
        rasterize(&gt, &db).unwrap();
    }
    let raster_ms = t0.elapsed().as_secs_f64() * 1000.0 / runs as f64;

    let observed = rasterize(&gt, &db).unwrap();
    let mut start = gt.clone();
    for inst in &mut start.instances {
        inst.pose = RigidPose::new(*inst.pose.rotation(), inst.pose.translation() + Vector3::new(0.005, -0.003, 0.004))
            .unwrap();
    }
    let t1 = Instant::now();
    let (_, trace) = refine(&start, &db, observed.descriptor(), &RefinementConfig::default()).unwrap();
    let refine_s = t1.elapsed().as_secs_f64();
    assert_eq!(trace.len(), 51);
    let pass = raster_ms < 100.0 * slack && refine_s < 30.0 * slack;
    report(
        9,
        "performance",
        pass,
        format!(
            "640x480, 5 objects of >=10k triangles: rasterize {raster_ms:.1} ms (budget {}), 50 iterations {refine_s:.2} s (budget {})",
            100.0 * slack,
            30.0 * slack
        ),
    );
    assert!(pass);
}

// 10. CLI determinism --------------------------------------------------------

fn cli(args: &[&str], out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_poserefine"))
        .args(args)
        .args(["--seed", "17", "--workers", "3", "--out-dir"])
        .arg(out)
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "{args:?}");
}

#[test]
fn criterion_10_cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let meshes = root.join("meshes");
    std::fs::create_dir(&meshes).unwrap();
    poserefine::mesh_io::write_obj(&builtin("mug").unwrap(), std::fs::File::create(meshes.join("mug.obj")).unwrap())
        .unwrap();
    let scene = |t: [f64; 3]| {
        let mut f = poserefine::scene_io::SceneFile {
            camera: experiment_camera(),
            instances: vec![],
        };
        f.instances.push(poserefine::scene_io::InstanceEntry {
            mesh: "meshes/mug.obj".into(),
            pose: pose(random_rotation(3), t),
        });
        f.instances.push(poserefine::scene_io::InstanceEntry {
            mesh: "builtin:box".into(),
            pose: pose(random_rotation(4), [0.06, 0.02, 0.55]),
        });
        f
    };
    scene([0.0, 0.0, 0.5]).write(std::fs::File::create(root.join("gt.json")).unwrap()).unwrap();
    scene([0.008, 0.0, 0.5]).write(std::fs::File::create(root.join("init.json")).unwrap()).unwrap();

    let s = |p: &Path| p.to_str().unwrap().to_string();
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for run in ["a", "b"] {
        let out = root.join(run);
        cli(&["annotate", &s(&meshes), "--views", "10"], &out);
        std::fs::copy(meshes.join("mug.desc"), out.join("mug.desc")).unwrap();
        cli(&["render", &s(&root.join("gt.json"))], &out.join("render"));
        cli(
            &["refine", &s(&root.join("init.json")), "--observed-scene", &s(&root.join("gt.json"))],
            &out.join("refine"),
        );
        cli(&["eval", &s(&out.join("refine/poses.csv"))], &out.join("eval"));
        cli(&["basin", "--trials", "6", "--study", "rotation", "--meshes", "box,mug"], &out.join("basin"));
        cli(&["ablate", "--trials", "2", "--meshes", "box,mug", "--iterations", "10"], &out.join("ablate"));
    }
    let files = [
        "annotate.csv",
        "mug.desc",
        "render/render.csv",
        "refine/trace.csv",
        "refine/poses.csv",
        "eval/errors.csv",
        "eval/summary.csv",
        "basin/trials.csv",
        "basin/bins.csv",
        "ablate/trials.csv",
        "ablate/bins.csv",
    ];
    for f in files {
        let a = std::fs::read(root.join("a").join(f)).unwrap();
        let b = std::fs::read(root.join("b").join(f)).unwrap();
        compared += 1;
        if a != b || a.is_empty() {
            mismatches.push(f);
        }
    }
    let pass = mismatches.is_empty();
    report(
        10,
        "cli determinism",
        pass,
        format!("{compared} output files compared across two runs, mismatched: {mismatches:?}"),
    );
    assert!(pass);
}
