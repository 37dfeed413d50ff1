//! Pose error metrics (ADD, ADD-S) and threshold-accuracy AUC.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::RigidPose;
use crate::kdtree::KdTree;
use crate::mesh::TriMesh;

/// Default upper threshold of the accuracy curve, in meters.
pub const DEFAULT_AUC_THRESHOLD: f64 = 0.1;

/// Model points in the object frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPointSet {
    points: Vec<Vector3<f64>>,
}

impl ModelPointSet {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("model point set is empty"));
        }
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid("model point set has non-finite points"));
        }
        Ok(Self { points })
    }

    pub fn from_mesh(mesh: &TriMesh) -> Result<Self> {
        Self::new(mesh.vertices().to_vec())
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Mean distance between correspondingly transformed model points.
pub fn add_error(gt: &RigidPose, est: &RigidPose, model: &ModelPointSet) -> f64 {
    let sum: f64 = model
        .points
        .iter()
        .map(|x| (gt.transform_point(x) - est.transform_point(x)).norm())
        .sum();
    sum / model.len() as f64
}

/// Mean distance from each ground-truth point to the nearest estimated point.
pub fn adds_error(gt: &RigidPose, est: &RigidPose, model: &ModelPointSet) -> f64 {
    let est_pts: Vec<Vector3<f64>> = model.points.iter().map(|x| est.transform_point(x)).collect();
    let tree = KdTree::build(&est_pts);
    let sum: f64 = model
        .points
        .iter()
        .map(|x| tree.nearest_distance(&gt.transform_point(x)))
        .sum();
    sum / model.len() as f64
}

/// Quadratic reference for [`adds_error`].
pub fn adds_error_bruteforce(gt: &RigidPose, est: &RigidPose, model: &ModelPointSet) -> f64 {
    let est_pts: Vec<Vector3<f64>> = model.points.iter().map(|x| est.transform_point(x)).collect();
    let sum: f64 = model
        .points
        .iter()
        .map(|x| {
            let p = gt.transform_point(x);
            est_pts
                .iter()
                .map(|q| (p - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / model.len() as f64
}

/// Area under the accuracy-vs-threshold curve on `[0, max_threshold]`, in percent.
///
/// `accuracy(t)` is the fraction of errors `<= t`; the integral of this step
/// function is evaluated exactly as `mean(max(0, max_threshold - e))`.
pub fn auc(errors: &[f64], max_threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::UndefinedMetric("AUC of an empty error list".into()));
    }
    if !(max_threshold > 0.0) {
        return Err(Error::invalid("AUC threshold must be positive"));
    }
    if errors.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::invalid("errors must be nonnegative"));
    }
    let area: f64 = errors.iter().map(|&e| (max_threshold - e).max(0.0)).sum();
    Ok(100.0 * area / (errors.len() as f64 * max_threshold))
}
