//! Render-and-compare refinement of all instance poses with AdaGrad.

use std::io::Write;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pose_update, PoseDelta, RigidPose};
use crate::gradient::{backprop_to_pose, classify_boundaries, Corrections, PixelGradient};
use crate::image::DescriptorImage;
use crate::mesh::MeshDb;
use crate::raster::{rasterize, FrameBuffers};
use crate::scene::Scene;

/// Optional early stop once the loss has stopped improving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauStop {
    /// Number of iterations to look back.
    pub window: usize,
    /// Stop when the relative loss decrease over the window falls below this.
    pub relative_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub adagrad_epsilon: f64,
    pub corrections: Corrections,
    pub plateau: Option<PlateauStop>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            learning_rate: 1e-2,
            lr_decay: 0.99,
            adagrad_epsilon: 1e-8,
            corrections: Corrections::default(),
            plateau: None,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr decay must be in (0, 1]"));
        }
        if !(self.adagrad_epsilon >= 0.0) {
            return Err(Error::invalid("adagrad epsilon must be nonnegative"));
        }
        if let Some(p) = &self.plateau {
            if p.window == 0 || !(p.relative_tolerance >= 0.0) {
                return Err(Error::invalid("plateau stop needs a positive window and nonnegative tolerance"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub gradient_norms: Vec<f64>,
    pub poses: Vec<RigidPose>,
}

/// Record 0 is the initial state; record `k` holds the loss and gradient
/// evaluated at the poses after `k` updates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefinementTrace {
    pub records: Vec<TraceRecord>,
}

impl RefinementTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// Columns: `iteration, loss`, then per instance `grad_norm_<i>` and the
    /// twelve pose numbers `pose_<i>_<k>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.records.first().map_or(0, |r| r.poses.len());
        let mut header = vec!["iteration".to_string(), "loss".to_string()];
        for i in 0..n {
            header.push(format!("grad_norm_{i}"));
            header.extend((0..12).map(|k| format!("pose_{i}_{k}")));
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string(), r.loss.to_string()];
            for (g, p) in r.gradient_norms.iter().zip(&r.poses) {
                row.push(g.to_string());
                row.extend(p.to_array().iter().map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `sum 1/2 (A_R - A_O)^2` over all pixels and channels, with gradient `A_R - A_O`.
pub fn pixelwise_loss(rendered: &FrameBuffers, observed: &DescriptorImage) -> Result<(f64, PixelGradient)> {
    let r = rendered.descriptor();
    r.check_same_shape(observed)?;
    let diff: Vec<f64> = r.data().iter().zip(observed.data()).map(|(a, b)| a - b).collect();
    let value = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
    if !value.is_finite() {
        return Err(Error::NumericFailure {
            message: "non-finite pixel loss".into(),
            trace: None,
        });
    }
    let grad = DescriptorImage::from_data(r.dim(), r.width(), r.height(), diff)?;
    Ok((value, PixelGradient::new(grad)?))
}

/// One AdaGrad step: `acc += g^2`, `update = -lr g / sqrt(acc + eps)`.
pub fn adagrad_step(
    state: &Vector6<f64>,
    gradient: &Vector6<f64>,
    lr: f64,
    epsilon: f64,
) -> (PoseDelta, Vector6<f64>) {
    let acc = state + gradient.component_mul(gradient);
    let mut update = Vector6::zeros();
    for k in 0..6 {
        let denom = (acc[k] + epsilon).sqrt();
        if gradient[k] != 0.0 && denom > 0.0 {
            update[k] = -lr * gradient[k] / denom;
        }
    }
    (PoseDelta::from_vector(&update), acc)
}

struct Evaluation {
    loss: f64,
    gradients: Vec<Vector6<f64>>,
}

fn evaluate(
    scene: &Scene,
    meshes: &MeshDb,
    observed: &DescriptorImage,
    corrections: &Corrections,
    observer: &mut dyn FnMut(usize, &FrameBuffers),
    iteration: usize,
) -> Result<Evaluation> {
    let buffers = rasterize(scene, meshes)?;
    observer(iteration, &buffers);
    let (loss, upstream) = pixelwise_loss(&buffers, observed)?;
    let classes = classify_boundaries(&buffers);
    let gradients = (0..scene.instances.len())
        .map(|i| {
            backprop_to_pose(&buffers, &upstream, &classes, scene, meshes, i, corrections).map(|g| g.gradient)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation { loss, gradients })
}

fn record(iteration: usize, scene: &Scene, eval: &Evaluation) -> TraceRecord {
    TraceRecord {
        iteration,
        loss: eval.loss,
        gradient_norms: eval.gradients.iter().map(|g| g.norm()).collect(),
        poses: scene.poses(),
    }
}

fn numeric_failure(message: String, trace: RefinementTrace) -> Error {
    Error::NumericFailure {
        message,
        trace: Some(Box::new(trace)),
    }
}

pub fn refine(
    scene: &Scene,
    meshes: &MeshDb,
    observed: &DescriptorImage,
    config: &RefinementConfig,
) -> Result<(Scene, RefinementTrace)> {
    refine_with_observer(scene, meshes, observed, config, |_, _| {})
}

/// [`refine`] that hands every rendering to `observer` together with its
/// iteration index.
pub fn refine_with_observer<F: FnMut(usize, &FrameBuffers)>(
    scene: &Scene,
    meshes: &MeshDb,
    observed: &DescriptorImage,
    config: &RefinementConfig,
    mut observer: F,
) -> Result<(Scene, RefinementTrace)> {
    config.validate()?;
    if scene.instances.is_empty() {
        return Err(Error::invalid("refinement needs at least one instance"));
    }
    let cam = &scene.camera;
    if observed.width() != cam.width || observed.height() != cam.height {
        return Err(Error::invalid(format!(
            "observed image is {}x{}, camera is {}x{}",
            observed.width(),
            observed.height(),
            cam.width,
            cam.height
        )));
    }
    let mut current = scene.clone();
    let mut trace = RefinementTrace::default();
    let mut accumulators = vec![Vector6::zeros(); scene.instances.len()];
    let mut eval = evaluate(&current, meshes, observed, &config.corrections, &mut observer, 0)?;
    trace.records.push(record(0, &current, &eval));

    let mut lr = config.learning_rate;
    for k in 0..config.iterations {
        if let Some((i, _)) = eval.gradients.iter().enumerate().find(|(_, g)| !g.iter().all(|v| v.is_finite())) {
            return Err(numeric_failure(format!("non-finite gradient for instance {i} at iteration {k}"), trace));
        }
        // Every instance steps from the same rendering.
        for (i, g) in eval.gradients.iter().enumerate() {
            let (delta, acc) = adagrad_step(&accumulators[i], g, lr, config.adagrad_epsilon);
            accumulators[i] = acc;
            let inst = &mut current.instances[i];
            inst.pose = match pose_update(&inst.pose, &delta) {
                Ok(p) => p,
                Err(e) => return Err(numeric_failure(format!("pose update failed at iteration {k}: {e}"), trace)),
            };
        }
        lr *= config.lr_decay;
        eval = match evaluate(&current, meshes, observed, &config.corrections, &mut observer, k + 1) {
            Ok(e) => e,
            Err(Error::NumericFailure { message, .. }) => return Err(numeric_failure(message, trace)),
            Err(e) => return Err(e),
        };
        trace.records.push(record(k + 1, &current, &eval));
        if let Some(p) = &config.plateau {
            let n = trace.records.len();
            if n > p.window {
                let before = trace.records[n - 1 - p.window].loss;
                let now = eval.loss;
                if before - now <= p.relative_tolerance * before.abs() {
                    break;
                }
            }
        }
    }
    Ok((current, trace))
}
