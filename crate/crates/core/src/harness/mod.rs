//! Experiment orchestration: synthetic scenes, perturbation studies, the
//! corrections ablation, batch evaluation and report emission.

pub mod eval;
pub mod experiment;
pub mod report;
pub mod scenes;

pub use eval::{evaluate_poses, EvalReport};
pub use experiment::{
    ablation_experiment, annotated_builtins, basin_experiment, bin_index, generate_occlusion_scene, run_parallel,
    AblationConfig, BasinConfig, Study,
};
pub use report::{config_hash, BinSummary, ExperimentReport, TrialRecord};
pub use scenes::{experiment_camera, generate_scene, perturb_pose, PerturbationSpec, SceneRecipe};
