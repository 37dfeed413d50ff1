//! Batch pose evaluation: per-object and aggregate ADD / ADD-S AUC.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::mesh::MeshDb;
use crate::metrics::{add_error, adds_error, auc, ModelPointSet};
use crate::scene_io::PoseRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseErrors {
    pub scene_id: String,
    pub instance_id: usize,
    pub mesh: String,
    pub add: f64,
    pub adds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSummary {
    pub object: String,
    pub count: usize,
    pub add_auc: f64,
    pub adds_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub errors: Vec<PoseErrors>,
    /// One row per mesh in name order, then the aggregate row `ALL`.
    pub summary: Vec<ObjectSummary>,
}

/// Scores every record against the model points of the mesh it names.
pub fn evaluate_poses(records: &[PoseRecord], meshes: &MeshDb, threshold: f64) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("no poses to evaluate".into()));
    }
    let mut models: BTreeMap<&str, ModelPointSet> = BTreeMap::new();
    let mut errors = Vec::with_capacity(records.len());
    for r in records {
        if !models.contains_key(r.mesh.as_str()) {
            let id = meshes
                .find(&r.mesh)
                .ok_or_else(|| Error::invalid(format!("unknown mesh '{}'", r.mesh)))?;
            models.insert(&r.mesh, ModelPointSet::from_mesh(meshes.get(id)?)?);
        }
        let model = &models[r.mesh.as_str()];
        errors.push(PoseErrors {
            scene_id: r.scene_id.clone(),
            instance_id: r.instance_id,
            mesh: r.mesh.clone(),
            add: add_error(&r.gt, &r.est, model),
            adds: adds_error(&r.gt, &r.est, model),
        });
    }
    let summarize = |object: &str, rows: &[&PoseErrors]| -> Result<ObjectSummary> {
        let add: Vec<f64> = rows.iter().map(|e| e.add).collect();
        let adds: Vec<f64> = rows.iter().map(|e| e.adds).collect();
        Ok(ObjectSummary {
            object: object.to_string(),
            count: rows.len(),
            add_auc: auc(&add, threshold)?,
            adds_auc: auc(&adds, threshold)?,
        })
    };
    let mut summary = Vec::new();
    for name in models.keys() {
        let rows: Vec<&PoseErrors> = errors.iter().filter(|e| e.mesh == *name).collect();
        summary.push(summarize(name, &rows)?);
    }
    let all: Vec<&PoseErrors> = errors.iter().collect();
    summary.push(summarize("ALL", &all)?);
    Ok(EvalReport { errors, summary })
}

impl EvalReport {
    pub fn write_errors_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scene_id", "instance_id", "mesh", "add", "adds"])?;
        for e in &self.errors {
            w.write_record([
                e.scene_id.clone(),
                e.instance_id.to_string(),
                e.mesh.clone(),
                e.add.to_string(),
                e.adds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["object", "count", "add_auc", "adds_auc"])?;
        for s in &self.summary {
            w.write_record([
                s.object.clone(),
                s.count.to_string(),
                s.add_auc.to_string(),
                s.adds_auc.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidPose;
    use crate::mesh::builtin;
    use nalgebra::Vector3;

    #[test]
    fn perfect_and_offset_poses() {
        let mut db = MeshDb::new();
        db.add("builtin:box", builtin("box").unwrap());
        let gt = RigidPose::from_translation(Vector3::new(0.0, 0.0, 0.5));
        let off = RigidPose::from_translation(Vector3::new(0.05, 0.0, 0.5));
        let rec = |est| PoseRecord {
            scene_id: "s".into(),
            instance_id: 0,
            mesh: "builtin:box".into(),
            gt,
            est,
        };
        let r = evaluate_poses(&[rec(gt), rec(off)], &db, 0.1).unwrap();
        assert_eq!(r.summary.len(), 2);
        assert!((r.errors[1].add - 0.05).abs() < 1e-12);
        assert!((r.summary[1].add_auc - 75.0).abs() < 1e-9);
        let mut bad = rec(gt);
        bad.mesh = "nope".into();
        assert!(evaluate_poses(&[bad], &db, 0.1).is_err());
    }
}
