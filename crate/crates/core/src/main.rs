use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use poserefine::fusion::{annotate, descriptor_rmse, DEFAULT_VIEW_COUNT, DEFAULT_VOXEL_BUDGET};
use poserefine::gradient::Corrections;
use poserefine::harness::{
    ablation_experiment, annotated_builtins, basin_experiment, evaluate_poses, experiment_camera, AblationConfig,
    BasinConfig, ExperimentReport, SceneRecipe, Study,
};
use poserefine::image_io::{depth_image, read_pfm, write_instance_png, write_pfm};
use poserefine::mesh_io::{load_mesh, sidecar_path, write_sidecar};
use poserefine::metrics::DEFAULT_AUC_THRESHOLD;
use poserefine::raster::rasterize;
use poserefine::refine::{refine_with_observer, RefinementConfig};
use poserefine::sampling::derive_seed;
use poserefine::scene_io::{load_scene, load_source, read_pose_csv, write_pose_csv, PoseRecord, SceneFile};
use poserefine::{Error, Result};

#[derive(Parser)]
#[command(name = "poserefine", version, about = "Render-and-compare 6D pose refinement")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 50)]
    iterations: usize,
    #[arg(long, global = true, default_value_t = 1e-2)]
    lr: f64,
    /// Per-iteration learning-rate multiplier.
    #[arg(long = "lr-decay", global = true, default_value_t = 0.99)]
    lr_decay: f64,
    #[arg(long, global = true)]
    no_boundary_suppression: bool,
    #[arg(long, global = true)]
    no_mask_dilation: bool,
    /// Worker threads for experiments.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

impl Common {
    fn refinement(&self) -> RefinementConfig {
        RefinementConfig {
            iterations: self.iterations,
            learning_rate: self.lr,
            lr_decay: self.lr_decay,
            corrections: Corrections {
                boundary_suppression: !self.no_boundary_suppression,
                mask_dilation: !self.no_mask_dilation,
            },
            ..RefinementConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Translation,
    Rotation,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a fused descriptor sidecar next to every OBJ/PLY mesh in a
    /// directory and a per-mesh summary to annotate.csv.
    Annotate {
        mesh_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VIEW_COUNT)]
        views: usize,
        #[arg(long, default_value_t = DEFAULT_VOXEL_BUDGET)]
        voxel_budget: usize,
    },
    /// Renders a scene file to descriptor, depth and instance-id images.
    Render { scene: PathBuf },
    /// Refines the poses of a scene file against an observed descriptor image.
    Refine {
        scene: PathBuf,
        /// Observed descriptor image (stacked PFM).
        #[arg(long, conflicts_with = "observed_scene", required_unless_present = "observed_scene")]
        observed: Option<PathBuf>,
        /// Scene file rendered as the observation; its poses are the ground truth in poses.csv.
        #[arg(long)]
        observed_scene: Option<PathBuf>,
        /// Also write every iteration's descriptor rendering to renders/NNN.pfm.
        #[arg(long)]
        dump_renders: bool,
    },
    /// Basin-of-attraction study on generated single-object scenes.
    Basin {
        #[arg(long, value_enum, default_value = "translation")]
        study: StudyArg,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Comma-separated builtin meshes.
        #[arg(long, default_value = "box,cylinder,mug,sphere", value_delimiter = ',')]
        meshes: Vec<String>,
    },
    /// Scores a pose CSV with ADD / ADD-S.
    Eval {
        poses: PathBuf,
        #[arg(long, default_value_t = DEFAULT_AUC_THRESHOLD)]
        threshold: f64,
    },
    /// Boundary-correction ablation on occluded two-object scenes.
    Ablate {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value = "box,cylinder,mug,sphere", value_delimiter = ',')]
        meshes: Vec<String>,
    },
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Mesh source usable from any directory: builtins stay as they are, file
/// paths are made absolute against the scene's directory.
fn portable_source(name: &str, scene_dir: &Path) -> String {
    if name.starts_with("builtin:") {
        return name.to_string();
    }
    let p = scene_dir.join(name);
    fs::canonicalize(&p).unwrap_or(p).to_string_lossy().into_owned()
}

fn run_annotate(c: &Common, dir: &Path, views: usize, budget: usize) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            matches!(ext.as_deref(), Some("obj" | "ply"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no .obj or .ply meshes in {}", dir.display())));
    }
    let mut w = csv::Writer::from_writer(create(&c.out_dir, "annotate.csv")?);
    w.write_record(["mesh", "vertices", "faces", "voxels", "samples", "unobserved", "rmse", "error"])?;
    let mut failures = 0;
    for (i, path) in paths.iter().enumerate() {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let outcome = (|| -> Result<Vec<String>> {
            let mesh = load_mesh(path)?;
            let fused = annotate(&mesh, views, budget, derive_seed(c.seed, i as u64))?;
            let reference = poserefine::fusion::procedural_descriptors(&mesh)?;
            let seen = (0..mesh.vertex_count()).filter(|&v| fused.observed(v));
            let rmse = descriptor_rmse(&fused.mesh, &reference, seen)?;
            write_sidecar(&fused.mesh, BufWriter::new(fs::File::create(sidecar_path(path))?))?;
            Ok(vec![
                mesh.vertex_count().to_string(),
                mesh.face_count().to_string(),
                fused.voxels.len().to_string(),
                fused.sample_count.to_string(),
                fused.unobserved_vertices.len().to_string(),
                rmse.to_string(),
                String::new(),
            ])
        })();
        let mut row = vec![name.clone()];
        match outcome {
            Ok(cols) => row.extend(cols),
            Err(e) => {
                failures += 1;
                eprintln!("{name}: {e}");
                row.extend(["", "", "", "", "", ""].map(String::from));
                row.push(e.to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    if failures > 0 {
        return Err(Error::InvalidInput(format!("{failures} of {} meshes failed", paths.len())));
    }
    Ok(())
}

fn run_render(c: &Common, scene_path: &Path) -> Result<()> {
    let (scene, meshes) = load_scene(scene_path)?;
    let fb = rasterize(&scene, &meshes)?;
    write_pfm(fb.descriptor(), create(&c.out_dir, "descriptor.pfm")?)?;
    write_pfm(&depth_image(&fb), create(&c.out_dir, "depth.pfm")?)?;
    write_instance_png(&fb, create(&c.out_dir, "instances.png")?)?;
    let counts = fb.coverage_counts(scene.instances.len());
    let mut w = csv::Writer::from_writer(create(&c.out_dir, "render.csv")?);
    w.write_record(["instance_id", "mesh", "pixels"])?;
    for (i, inst) in scene.instances.iter().enumerate() {
        w.write_record([
            i.to_string(),
            meshes.name(inst.mesh).unwrap_or("").to_string(),
            counts[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_refine(
    c: &Common,
    scene_path: &Path,
    observed: Option<&Path>,
    observed_scene: Option<&Path>,
    dump_renders: bool,
) -> Result<()> {
    let (scene, meshes) = load_scene(scene_path)?;
    let dim = meshes.get(scene.instance(0)?.mesh)?.descriptor_dim();
    let (image, gt) = match (observed, observed_scene) {
        (Some(p), _) => (read_pfm(fs::File::open(p)?, dim)?, scene.poses()),
        (None, Some(p)) => {
            let (obs, obs_meshes) = load_scene(p)?;
            if obs.instances.len() != scene.instances.len() {
                return Err(Error::InvalidInput("observed scene has a different instance count".into()));
            }
            (rasterize(&obs, &obs_meshes)?.descriptor().clone(), obs.poses())
        }
        (None, None) => return Err(Error::InvalidInput("no observation given".into())),
    };
    let dump_dir = c.out_dir.join("renders");
    if dump_renders {
        fs::create_dir_all(&dump_dir)?;
    }
    let mut dump_error = None;
    let result = refine_with_observer(&scene, &meshes, &image, &c.refinement(), |k, fb| {
        if dump_renders && dump_error.is_none() {
            let written = create(&dump_dir, &format!("{k:03}.pfm")).and_then(|f| write_pfm(fb.descriptor(), f));
            dump_error = written.err();
        }
    });
    if let Some(e) = dump_error {
        return Err(e);
    }
    let (refined, trace) = match result {
        Ok(v) => v,
        Err(Error::NumericFailure { message, trace }) => {
            if let Some(t) = &trace {
                t.write_csv(create(&c.out_dir, "trace.csv")?)?;
            }
            return Err(Error::NumericFailure { message, trace });
        }
        Err(e) => return Err(e),
    };
    trace.write_csv(create(&c.out_dir, "trace.csv")?)?;
    let scene_id = file_stem(scene_path);
    let scene_dir = scene_path.parent().unwrap_or(Path::new("."));
    let records: Vec<PoseRecord> = refined
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| PoseRecord {
            scene_id: scene_id.clone(),
            instance_id: i,
            mesh: portable_source(meshes.name(inst.mesh).unwrap_or(""), scene_dir),
            gt: gt[i],
            est: inst.pose,
        })
        .collect();
    write_pose_csv(&records, create(&c.out_dir, "poses.csv")?)?;
    let mut refined_file = SceneFile::from_scene(&refined, &meshes)?;
    for e in &mut refined_file.instances {
        e.mesh = portable_source(&e.mesh, scene_dir);
    }
    refined_file.write(create(&c.out_dir, "refined.json")?)?;
    if let (Some(first), Some(last)) = (trace.initial_loss(), trace.final_loss()) {
        eprintln!("loss {first} -> {last} over {} iterations", trace.len() - 1);
    }
    Ok(())
}

fn builtin_names(names: &[String]) -> Vec<&str> {
    names
        .iter()
        .map(|n| n.trim())
        .map(|n| n.strip_prefix("builtin:").unwrap_or(n))
        .collect()
}

fn write_report(c: &Common, report: &ExperimentReport) -> Result<()> {
    report.write_trials_csv(create(&c.out_dir, "trials.csv")?)?;
    report.write_bins_csv(create(&c.out_dir, "bins.csv")?)?;
    fs::write(c.out_dir.join("report.svg"), report.to_svg())?;
    for b in &report.bins {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
        eprintln!(
            "{:>22} n={:<4} ADD {} -> {}  ADD-S {} -> {}",
            b.label,
            b.count,
            show(b.initial_add_auc),
            show(b.final_add_auc),
            show(b.initial_adds_auc),
            show(b.final_adds_auc)
        );
    }
    Ok(())
}

fn run_basin(c: &Common, study: StudyArg, trials: usize, names: &[String]) -> Result<()> {
    let meshes = annotated_builtins(&builtin_names(names), c.seed)?;
    let study = match study {
        StudyArg::Translation => Study::Translation,
        StudyArg::Rotation => Study::Rotation,
    };
    let recipe = SceneRecipe::new(experiment_camera(), 1, (0..meshes.len()).collect());
    let mut cfg = BasinConfig::new(study, trials, recipe, c.seed);
    cfg.refinement = c.refinement();
    cfg.workers = c.workers;
    write_report(c, &basin_experiment(&cfg, &meshes)?)
}

fn run_ablate(c: &Common, trials: usize, names: &[String]) -> Result<()> {
    let meshes = annotated_builtins(&builtin_names(names), c.seed)?;
    let recipe = SceneRecipe::new(experiment_camera(), 2, (0..meshes.len()).collect());
    let mut cfg = AblationConfig::new(trials, recipe, c.seed);
    cfg.refinement = c.refinement();
    cfg.workers = c.workers;
    write_report(c, &ablation_experiment(&cfg, &meshes)?)
}

fn run_eval(c: &Common, poses: &Path, threshold: f64) -> Result<()> {
    let records = read_pose_csv(fs::File::open(poses)?)?;
    let base = poses.parent().unwrap_or(Path::new("."));
    let mut meshes = poserefine::mesh::MeshDb::new();
    for r in &records {
        if meshes.find(&r.mesh).is_none() {
            meshes.add(r.mesh.clone(), load_source(&r.mesh, base)?);
        }
    }
    let report = evaluate_poses(&records, &meshes, threshold)?;
    report.write_errors_csv(create(&c.out_dir, "errors.csv")?)?;
    report.write_summary_csv(create(&c.out_dir, "summary.csv")?)?;
    for s in &report.summary {
        eprintln!("{:>20} n={:<5} ADD {:.2}  ADD-S {:.2}", s.object, s.count, s.add_auc, s.adds_auc);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    fs::create_dir_all(&c.out_dir)?;
    match &cli.command {
        Command::Annotate {
            mesh_dir,
            views,
            voxel_budget,
        } => run_annotate(c, mesh_dir, *views, *voxel_budget),
        Command::Render { scene } => run_render(c, scene),
        Command::Refine {
            scene,
            observed,
            observed_scene,
            dump_renders,
        } => run_refine(c, scene, observed.as_deref(), observed_scene.as_deref(), *dump_renders),
        Command::Basin { study, trials, meshes } => run_basin(c, *study, *trials, meshes),
        Command::Eval { poses, threshold } => run_eval(c, poses, *threshold),
        Command::Ablate { trials, meshes } => run_ablate(c, *trials, meshes),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
