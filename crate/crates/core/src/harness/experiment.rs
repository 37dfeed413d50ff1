//! Basin-of-attraction studies and the corrections ablation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{fuse_rendered, DEFAULT_VIEW_COUNT, DEFAULT_VOXEL_BUDGET};
use crate::geometry::RigidPose;
use crate::gradient::Corrections;
use crate::harness::report::{config_hash, BinSummary, ExperimentReport, TrialRecord};
use crate::harness::scenes::{
    generate_scene, sample_origin, sample_perturbation, visibility_fractions, PerturbationSpec, SceneRecipe,
};
use crate::mesh::MeshDb;
use crate::metrics::{add_error, adds_error, auc, ModelPointSet, DEFAULT_AUC_THRESHOLD};
use crate::raster::{instance_mask, pixel_overlap, rasterize};
use crate::refine::{refine, RefinementConfig};
use crate::sampling::{derive_seed, rng_from_seed, uniform_rotation};
use crate::scene::Scene;
use crate::scene_io::{builtin_source, BUILTIN_PREFIX};

/// Builtin meshes annotated by rendering their descriptors from
/// [`DEFAULT_VIEW_COUNT`] views and fusing them back, named `builtin:<name>`.
/// [`SYMMETRIC_CYLINDER`] is the cylinder with axisymmetric descriptors; every
/// other name gets procedural descriptors.
pub fn annotated_builtins(names: &[&str], seed: u64) -> Result<MeshDb> {
    let mut db = MeshDb::new();
    for (i, name) in names.iter().enumerate() {
        let mesh = builtin_source(name)?;
        let fused = fuse_rendered(&mesh, DEFAULT_VIEW_COUNT, DEFAULT_VOXEL_BUDGET, derive_seed(seed, i as u64))?;
        db.add(format!("{BUILTIN_PREFIX}{name}"), fused.mesh);
    }
    Ok(db)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    /// Translation-only perturbations, binned by initial pixel overlap.
    Translation,
    /// Rotation-only perturbations, binned by angle.
    Rotation,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Translation => "translation",
            Study::Rotation => "rotation",
        }
    }

    /// Perturbation ranges of the study: the default range on its own axis and
    /// zero on the other.
    pub fn spec(self) -> PerturbationSpec {
        let d = PerturbationSpec::default();
        match self {
            Study::Translation => PerturbationSpec {
                rotation_angle_range: 0.0,
                ..d
            },
            Study::Rotation => PerturbationSpec {
                translation_range: 0.0,
                ..d
            },
        }
    }

    /// Bin edges: overlap in 10% steps, angle in 5 degree steps.
    pub fn bin_edges(self, spec: &PerturbationSpec) -> Vec<f64> {
        match self {
            Study::Translation => (0..=10).map(|k| 10.0 * k as f64).collect(),
            Study::Rotation => {
                let max = spec.rotation_angle_range.to_degrees().max(5.0);
                let n = (max / 5.0 - 1e-9).ceil() as usize;
                (0..=n).map(|k| 5.0 * k as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinConfig {
    pub study: Study,
    pub trials: usize,
    pub seed: u64,
    pub recipe: SceneRecipe,
    pub perturbation: PerturbationSpec,
    pub refinement: RefinementConfig,
    pub auc_threshold: f64,
    /// Threads only; results do not depend on it, so it is left out of the config hash.
    #[serde(skip)]
    pub workers: usize,
}

impl BasinConfig {
    pub fn new(study: Study, trials: usize, recipe: SceneRecipe, seed: u64) -> Self {
        Self {
            study,
            trials,
            seed,
            recipe,
            perturbation: study.spec(),
            refinement: RefinementConfig::default(),
            auc_threshold: DEFAULT_AUC_THRESHOLD,
            workers: 1,
        }
    }
}

/// Runs `f(i)` for every index on up to `workers` threads, returning results in index order.
pub fn run_parallel<T: Send, F: Fn(usize) -> T + Sync>(n: usize, workers: usize, f: F) -> Vec<T> {
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(&f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                s.spawn(move || (w..n).step_by(workers).map(|i| (i, f(i))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|v| v.expect("every index ran")).collect()
}

fn models(meshes: &MeshDb) -> Result<Vec<ModelPointSet>> {
    meshes.iter().map(|(_, _, m)| ModelPointSet::from_mesh(m)).collect()
}

fn basin_trial(cfg: &BasinConfig, meshes: &MeshDb, models: &[ModelPointSet], index: usize) -> TrialRecord {
    let seed = derive_seed(cfg.seed, index as u64);
    let mut rec = TrialRecord::new(index, 0);
    let outcome = (|| -> Result<()> {
        let mut recipe = cfg.recipe.clone();
        recipe.object_count = 1;
        let gt_scene = generate_scene(&recipe, meshes, seed)?;
        let gt = gt_scene.instances[0].pose;
        let mesh = gt_scene.instances[0].mesh;
        rec.mesh = meshes.name(mesh).unwrap_or("").to_string();
        let observed_fb = rasterize(&gt_scene, meshes)?;
        let mut rng = rng_from_seed(derive_seed(seed, 1));
        let p = sample_perturbation(&cfg.perturbation, &mut rng);
        let init = p.apply(&gt)?;
        rec.translation_offset = p.translation.norm();
        rec.rotation_angle_deg = p.angle.abs().to_degrees();
        let mut start = gt_scene.clone();
        start.instances[0].pose = init;
        let init_fb = rasterize(&start, meshes)?;
        rec.overlap = pixel_overlap(&instance_mask(&observed_fb, 0), &instance_mask(&init_fb, 0))?;
        let model = &models[mesh];
        rec.initial_add = add_error(&gt, &init, model);
        rec.initial_adds = adds_error(&gt, &init, model);
        let (refined, trace) = refine(&start, meshes, observed_fb.descriptor(), &cfg.refinement)?;
        let fin = refined.instances[0].pose;
        rec.final_add = add_error(&gt, &fin, model);
        rec.final_adds = adds_error(&gt, &fin, model);
        rec.iterations = trace.len() - 1;
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec
}

fn bin_value(study: Study, rec: &TrialRecord) -> f64 {
    match study {
        Study::Translation => rec.overlap,
        Study::Rotation => rec.rotation_angle_deg,
    }
}

/// Bin index with bins `(e_k, e_{k+1}]`, the lowest bin also holding `e_0`
/// and the highest everything above its upper edge.
pub fn bin_index(edges: &[f64], v: f64) -> usize {
    let n = edges.len() - 1;
    (1..=n).find(|&k| v <= edges[k]).map_or(n - 1, |k| k - 1)
}

pub(crate) fn summarize(
    label: &str,
    lo: f64,
    hi: f64,
    recs: &[&TrialRecord],
    threshold: f64,
) -> Result<BinSummary> {
    let ok: Vec<&&TrialRecord> = recs.iter().filter(|r| r.error.is_none()).collect();
    let col = |f: fn(&TrialRecord) -> f64| -> Result<Option<f64>> {
        if ok.is_empty() {
            return Ok(None);
        }
        let v: Vec<f64> = ok.iter().map(|r| f(r)).collect();
        auc(&v, threshold).map(Some)
    };
    let mean = |f: fn(&TrialRecord) -> f64| -> Option<f64> {
        (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64)
    };
    Ok(BinSummary {
        label: label.to_string(),
        mean_initial_add: mean(|r| r.initial_add),
        mean_final_add: mean(|r| r.final_add),
        lo,
        hi,
        count: recs.len(),
        failed: recs.len() - ok.len(),
        initial_add_auc: col(|r| r.initial_add)?,
        final_add_auc: col(|r| r.final_add)?,
        initial_adds_auc: col(|r| r.initial_adds)?,
        final_adds_auc: col(|r| r.final_adds)?,
    })
}

/// Single-object perturbation study over `cfg.trials` generated scenes.
pub fn basin_experiment(cfg: &BasinConfig, meshes: &MeshDb) -> Result<ExperimentReport> {
    cfg.refinement.validate()?;
    cfg.perturbation.validate()?;
    let models = models(meshes)?;
    let hash = config_hash(cfg)?;
    let mut trials = run_parallel(cfg.trials, cfg.workers, |i| basin_trial(cfg, meshes, &models, i));
    let edges = cfg.study.bin_edges(&cfg.perturbation);
    for t in &mut trials {
        t.bin = Some(bin_index(&edges, bin_value(cfg.study, t)));
    }
    let unit = match cfg.study {
        Study::Translation => "%",
        Study::Rotation => "deg",
    };
    let mut bins = Vec::new();
    for k in 0..edges.len() - 1 {
        let members: Vec<&TrialRecord> = trials.iter().filter(|t| t.bin == Some(k)).collect();
        let label = format!("({}-{}]{unit}", edges[k], edges[k + 1]);
        bins.push(summarize(&label, edges[k], edges[k + 1], &members, cfg.auc_threshold)?);
    }
    Ok(ExperimentReport {
        kind: format!("basin-{}", cfg.study.name()),
        config_hash: hash,
        trials,
        bins,
    })
}

/// Settings of the two-object occlusion ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub trials: usize,
    pub seed: u64,
    pub recipe: SceneRecipe,
    pub perturbation: PerturbationSpec,
    pub refinement: RefinementConfig,
    /// Required occluded fraction of the target's unoccluded mask.
    pub min_occlusion: f64,
    /// Largest accepted occluded fraction, so the target stays refinable.
    pub max_occlusion: f64,
    pub auc_threshold: f64,
    /// Threads only; results do not depend on it, so it is left out of the config hash.
    #[serde(skip)]
    pub workers: usize,
}

impl AblationConfig {
    pub fn new(trials: usize, recipe: SceneRecipe, seed: u64) -> Self {
        Self {
            trials,
            seed,
            recipe,
            perturbation: PerturbationSpec {
                translation_range: 0.02,
                rotation_angle_range: 10f64.to_radians(),
            },
            refinement: RefinementConfig::default(),
            min_occlusion: 0.3,
            max_occlusion: 0.8,
            auc_threshold: DEFAULT_AUC_THRESHOLD,
            workers: 1,
        }
    }
}

/// Target (instance 0) plus an occluder placed nearer to the camera so that
/// the target's occluded fraction lies in the configured range.
pub fn generate_occlusion_scene(cfg: &AblationConfig, meshes: &MeshDb, seed: u64) -> Result<(Scene, f64)> {
    let recipe = &cfg.recipe;
    if recipe.meshes.is_empty() {
        return Err(Error::invalid("scene recipe lists no meshes"));
    }
    let mut rng = rng_from_seed(seed);
    use rand::Rng;
    for _ in 0..recipe.max_attempts {
        let pick = |rng: &mut crate::sampling::SeededRng| recipe.meshes[rng.random_range(0..recipe.meshes.len())];
        let target_mesh = pick(&mut rng);
        let target = RigidPose::new(uniform_rotation(&mut rng), sample_origin(recipe, &mut rng))?;
        let occluder_mesh = pick(&mut rng);
        // The occluder sits on the target's line of sight, nearer and shifted sideways.
        let t = target.translation();
        let depth_scale = rng.random_range(0.7..0.85);
        let shift = nalgebra::Vector3::new(rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04), 0.0);
        let occ_t = t * depth_scale + shift * depth_scale;
        let occluder = RigidPose::new(uniform_rotation(&mut rng), occ_t)?;
        let scene = Scene::new(recipe.camera)
            .with_instance(target_mesh, target)
            .with_instance(occluder_mesh, occluder);
        let fb = rasterize(&scene, meshes)?;
        let vis = visibility_fractions(&scene, meshes, &fb)?;
        let occlusion = 1.0 - vis[0];
        if vis[1] > 0.0 && occlusion >= cfg.min_occlusion && occlusion <= cfg.max_occlusion {
            return Ok((scene, occlusion));
        }
    }
    Err(Error::PlacementFailure {
        attempts: recipe.max_attempts,
    })
}

fn ablation_trials(
    cfg: &AblationConfig,
    meshes: &MeshDb,
    models: &[ModelPointSet],
    corrections: Corrections,
    index: usize,
) -> TrialRecord {
    let seed = derive_seed(cfg.seed, index as u64);
    let mut rec = TrialRecord::new(index, 0);
    rec.corrections = Some(corrections);
    let outcome = (|| -> Result<()> {
        let (gt_scene, occlusion) = generate_occlusion_scene(cfg, meshes, seed)?;
        rec.occlusion = Some(occlusion);
        let mesh = gt_scene.instances[0].mesh;
        rec.mesh = meshes.name(mesh).unwrap_or("").to_string();
        let observed = rasterize(&gt_scene, meshes)?;
        let mut rng = rng_from_seed(derive_seed(seed, 1));
        let mut start = gt_scene.clone();
        for inst in &mut start.instances {
            inst.pose = sample_perturbation(&cfg.perturbation, &mut rng).apply(&inst.pose)?;
        }
        let gt = gt_scene.instances[0].pose;
        let init = start.instances[0].pose;
        rec.translation_offset = (init.translation() - gt.translation()).norm();
        rec.rotation_angle_deg = gt.rotation_angle_to(&init).to_degrees();
        let init_fb = rasterize(&start, meshes)?;
        rec.overlap = pixel_overlap(&instance_mask(&observed, 0), &instance_mask(&init_fb, 0))?;
        let model = &models[mesh];
        rec.initial_add = add_error(&gt, &init, model);
        rec.initial_adds = adds_error(&gt, &init, model);
        let config = RefinementConfig {
            corrections,
            ..cfg.refinement
        };
        let (refined, trace) = refine(&start, meshes, observed.descriptor(), &config)?;
        let fin = refined.instances[0].pose;
        rec.final_add = add_error(&gt, &fin, model);
        rec.final_adds = adds_error(&gt, &fin, model);
        rec.iterations = trace.len() - 1;
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec
}

/// Runs the same occluded two-object trials under all four correction
/// settings. One bin per setting; its `mean_final_add` is the target's.
pub fn ablation_experiment(cfg: &AblationConfig, meshes: &MeshDb) -> Result<ExperimentReport> {
    cfg.refinement.validate()?;
    cfg.perturbation.validate()?;
    let models = models(meshes)?;
    let hash = config_hash(cfg)?;
    let jobs: Vec<(Corrections, usize)> = Corrections::ALL
        .iter()
        .flat_map(|c| (0..cfg.trials).map(move |i| (*c, i)))
        .collect();
    let trials = run_parallel(jobs.len(), cfg.workers, |j| {
        let (c, i) = jobs[j];
        ablation_trials(cfg, meshes, &models, c, i)
    });
    let mut trials = trials;
    let mut bins = Vec::new();
    for (k, c) in Corrections::ALL.iter().enumerate() {
        for t in trials.iter_mut().filter(|t| t.corrections == Some(*c)) {
            t.bin = Some(k);
        }
        let members: Vec<&TrialRecord> = trials.iter().filter(|t| t.corrections == Some(*c)).collect();
        bins.push(summarize(c.label(), k as f64, k as f64 + 1.0, &members, cfg.auc_threshold)?);
    }
    Ok(ExperimentReport {
        kind: "ablation".into(),
        config_hash: hash,
        trials,
        bins,
    })
}
