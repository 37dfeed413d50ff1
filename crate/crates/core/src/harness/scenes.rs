//! Synthetic scene generation and pose perturbation.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PinholeCamera, RigidPose};
use crate::mesh::{MeshDb, MeshId};
use crate::raster::{instance_mask, rasterize, FrameBuffers};
use crate::sampling::{axis_angle, rng_from_seed, symmetric, uniform_in, uniform_rotation, unit_vector};
use crate::scene::Scene;

/// Minimum visible fraction of each object's unoccluded mask.
pub const MIN_VISIBILITY: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub camera: PinholeCamera,
    pub object_count: usize,
    /// Candidate meshes; each object draws one uniformly.
    pub meshes: Vec<MeshId>,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Fraction of the image on each side kept free of object origins.
    pub border: f64,
    pub max_attempts: usize,
}

impl SceneRecipe {
    pub fn new(camera: PinholeCamera, object_count: usize, meshes: Vec<MeshId>) -> Self {
        Self {
            camera,
            object_count,
            meshes,
            depth_min: 0.45,
            depth_max: 0.6,
            border: 0.25,
            max_attempts: 200,
        }
    }
}

/// Default experiment camera: 128x128 with a 160 pixel focal length.
pub fn experiment_camera() -> PinholeCamera {
    PinholeCamera::new(160.0, 160.0, 63.5, 63.5, 128, 128, 0.05, 10.0).expect("valid constants")
}

pub(crate) fn sample_origin<R: Rng + ?Sized>(recipe: &SceneRecipe, rng: &mut R) -> Vector3<f64> {
    let cam = &recipe.camera;
    let z = uniform_in(rng, recipe.depth_min, recipe.depth_max);
    let (w, h) = (cam.width as f64 - 1.0, cam.height as f64 - 1.0);
    let u = uniform_in(rng, recipe.border * w, (1.0 - recipe.border) * w);
    let v = uniform_in(rng, recipe.border * h, (1.0 - recipe.border) * h);
    cam.unproject(&Vector2::new(u, v), z)
}

/// Visible pixel count of each instance in `buffers` divided by its pixel
/// count when rendered alone.
pub fn visibility_fractions(scene: &Scene, meshes: &MeshDb, buffers: &FrameBuffers) -> Result<Vec<f64>> {
    let visible = buffers.coverage_counts(scene.instances.len());
    (0..scene.instances.len())
        .map(|i| {
            let alone = rasterize(&scene.isolate(i)?, meshes)?;
            let full = instance_mask(&alone, 0).count();
            Ok(if full == 0 { 0.0 } else { visible[i] as f64 / full as f64 })
        })
        .collect()
}

/// Places `object_count` objects with uniform rotations and origins inside
/// the view volume, resampling the whole scene until every object is at least
/// [`MIN_VISIBILITY`] visible. The scene poses are the ground truth.
pub fn generate_scene(recipe: &SceneRecipe, meshes: &MeshDb, seed: u64) -> Result<Scene> {
    recipe.camera.validate()?;
    if recipe.object_count == 0 {
        return Ok(Scene::new(recipe.camera));
    }
    if recipe.meshes.is_empty() {
        return Err(Error::invalid("scene recipe lists no meshes"));
    }
    for &m in &recipe.meshes {
        meshes.get(m)?;
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..recipe.max_attempts {
        let mut scene = Scene::new(recipe.camera);
        for _ in 0..recipe.object_count {
            let mesh = recipe.meshes[rng.random_range(0..recipe.meshes.len())];
            let pose = RigidPose::new(uniform_rotation(&mut rng), sample_origin(recipe, &mut rng))?;
            scene = scene.with_instance(mesh, pose);
        }
        let buffers = rasterize(&scene, meshes)?;
        if visibility_fractions(&scene, meshes, &buffers)?
            .iter()
            .all(|&v| v >= MIN_VISIBILITY)
        {
            return Ok(scene);
        }
    }
    Err(Error::PlacementFailure {
        attempts: recipe.max_attempts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Per-axis translation offset range, meters.
    pub translation_range: f64,
    /// Rotation angle range, radians.
    pub rotation_angle_range: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            translation_range: 0.05,
            rotation_angle_range: 45f64.to_radians(),
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.translation_range >= 0.0 && self.rotation_angle_range >= 0.0) {
            return Err(Error::invalid("perturbation ranges must be nonnegative"));
        }
        Ok(())
    }
}

/// Applied perturbation, in the camera frame about the object origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub translation: Vector3<f64>,
    pub axis: Vector3<f64>,
    /// Signed angle in radians.
    pub angle: f64,
}

impl Perturbation {
    pub fn apply(&self, gt: &RigidPose) -> Result<RigidPose> {
        let r = axis_angle(&self.axis, self.angle) * gt.rotation();
        RigidPose::new(r, gt.translation() + self.translation)
    }
}

pub fn sample_perturbation<R: Rng + ?Sized>(spec: &PerturbationSpec, rng: &mut R) -> Perturbation {
    let translation = Vector3::new(
        symmetric(rng, spec.translation_range),
        symmetric(rng, spec.translation_range),
        symmetric(rng, spec.translation_range),
    );
    let axis = unit_vector(rng);
    let angle = symmetric(rng, spec.rotation_angle_range);
    Perturbation {
        translation,
        axis,
        angle,
    }
}

/// Offsets the translation uniformly per axis and rotates about a uniform
/// axis by a uniform angle.
pub fn perturb_pose(gt: &RigidPose, spec: &PerturbationSpec, seed: u64) -> Result<RigidPose> {
    spec.validate()?;
    sample_perturbation(spec, &mut rng_from_seed(seed)).apply(gt)
}
