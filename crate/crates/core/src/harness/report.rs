//! Experiment reports: per-trial and per-bin CSV tables and an SVG bar chart.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::gradient::Corrections;

/// First 16 hex digits of the SHA-256 of the configuration's JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub instance_id: usize,
    pub mesh: String,
    pub translation_offset: f64,
    pub rotation_angle_deg: f64,
    /// Initial pixel overlap with the ground-truth mask, percent.
    pub overlap: f64,
    /// Occluded fraction of the target (ablation only).
    pub occlusion: Option<f64>,
    pub corrections: Option<Corrections>,
    pub initial_add: f64,
    pub final_add: f64,
    pub initial_adds: f64,
    pub final_adds: f64,
    pub iterations: usize,
    pub bin: Option<usize>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn new(trial: usize, instance_id: usize) -> Self {
        Self {
            trial,
            instance_id,
            mesh: String::new(),
            translation_offset: 0.0,
            rotation_angle_deg: 0.0,
            overlap: 0.0,
            occlusion: None,
            corrections: None,
            initial_add: f64::NAN,
            final_add: f64::NAN,
            initial_adds: f64::NAN,
            final_adds: f64::NAN,
            iterations: 0,
            bin: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinSummary {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub failed: usize,
    pub mean_initial_add: Option<f64>,
    pub mean_final_add: Option<f64>,
    pub initial_add_auc: Option<f64>,
    pub final_add_auc: Option<f64>,
    pub initial_adds_auc: Option<f64>,
    pub final_adds_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub kind: String,
    pub config_hash: String,
    pub trials: Vec<TrialRecord>,
    pub bins: Vec<BinSummary>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl ExperimentReport {
    pub fn bin(&self, label: &str) -> Option<&BinSummary> {
        self.bins.iter().find(|b| b.label == label)
    }

    pub fn failed(&self) -> usize {
        self.trials.iter().filter(|t| t.error.is_some()).count()
    }

    /// AUC over the trials of several bins pooled together.
    pub fn pooled_auc(&self, bins: &[usize], threshold: f64, field: fn(&TrialRecord) -> f64) -> Result<f64> {
        let v: Vec<f64> = self
            .trials
            .iter()
            .filter(|t| t.error.is_none() && t.bin.is_some_and(|b| bins.contains(&b)))
            .map(field)
            .collect();
        crate::metrics::auc(&v, threshold)
    }

    pub fn write_trials_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "config_hash",
            "kind",
            "trial",
            "instance_id",
            "mesh",
            "corrections",
            "translation_offset",
            "rotation_angle_deg",
            "overlap",
            "occlusion",
            "initial_add",
            "final_add",
            "initial_adds",
            "final_adds",
            "iterations",
            "bin",
            "error",
        ])?;
        for t in &self.trials {
            w.write_record([
                self.config_hash.clone(),
                self.kind.clone(),
                t.trial.to_string(),
                t.instance_id.to_string(),
                t.mesh.clone(),
                t.corrections.map_or_else(String::new, |c| c.label().to_string()),
                t.translation_offset.to_string(),
                t.rotation_angle_deg.to_string(),
                t.overlap.to_string(),
                opt(t.occlusion),
                t.initial_add.to_string(),
                t.final_add.to_string(),
                t.initial_adds.to_string(),
                t.final_adds.to_string(),
                t.iterations.to_string(),
                t.bin.map_or_else(String::new, |b| b.to_string()),
                t.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_bins_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "config_hash",
            "kind",
            "bin",
            "lo",
            "hi",
            "count",
            "failed",
            "mean_initial_add",
            "mean_final_add",
            "initial_add_auc",
            "final_add_auc",
            "initial_adds_auc",
            "final_adds_auc",
        ])?;
        for b in &self.bins {
            w.write_record([
                self.config_hash.clone(),
                self.kind.clone(),
                b.label.clone(),
                b.lo.to_string(),
                b.hi.to_string(),
                b.count.to_string(),
                b.failed.to_string(),
                opt(b.mean_initial_add),
                opt(b.mean_final_add),
                opt(b.initial_add_auc),
                opt(b.final_add_auc),
                opt(b.initial_adds_auc),
                opt(b.final_adds_auc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Grouped bar chart of initial and final ADD / ADD-S AUC per bin.
    pub fn to_svg(&self) -> String {
        type Series<'a> = (&'a str, &'a str, fn(&BinSummary) -> Option<f64>);
        let series: [Series; 4] = [
            ("initial ADD", "#bbbbbb", |b| b.initial_add_auc),
            ("final ADD", "#1f77b4", |b| b.final_add_auc),
            ("initial ADD-S", "#dddddd", |b| b.initial_adds_auc),
            ("final ADD-S", "#ff7f0e", |b| b.final_adds_auc),
        ];
        let (left, top, plot_h, group_w, bar_w) = (50.0, 30.0, 200.0, 70.0, 14.0);
        let width = left + group_w * self.bins.len().max(1) as f64 + 20.0;
        let height = top + plot_h + 60.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
        );
        let _ = writeln!(s, r#"<text x="{left}" y="15">{} ({})</text>"#, self.kind, self.config_hash);
        for k in 0..=4 {
            let v = 25.0 * k as f64;
            let y = top + plot_h - plot_h * v / 100.0;
            let _ = writeln!(
                s,
                "<line x1=\"{left}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#eeeeee\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v}</text>",
                width - 20.0,
                left - 4.0,
                y + 3.0
            );
        }
        for (i, b) in self.bins.iter().enumerate() {
            let x0 = left + group_w * i as f64 + 5.0;
            for (j, (_, color, f)) in series.iter().enumerate() {
                if let Some(v) = f(b) {
                    let h = plot_h * v / 100.0;
                    let _ = writeln!(
                        s,
                        r#"<rect x="{}" y="{}" width="{bar_w}" height="{h}" fill="{color}"/>"#,
                        x0 + bar_w * j as f64,
                        top + plot_h - h
                    );
                }
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="{}" y="{}" text-anchor="middle">n={}</text>"#,
                x0 + 2.0 * bar_w,
                top + plot_h + 14.0,
                b.label,
                x0 + 2.0 * bar_w,
                top + plot_h + 26.0,
                b.count
            );
        }
        for (j, (name, color, _)) in series.iter().enumerate() {
            let x = left + 90.0 * j as f64;
            let y = top + plot_h + 42.0;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{name}</text>"#,
                y - 9.0,
                x + 14.0,
                y
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
