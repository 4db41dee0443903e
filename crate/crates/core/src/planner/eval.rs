use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::pipeline::Models;
use crate::camera::{resample, trajectory_mse, Trajectory};
use crate::dataset::TextTrajPair;
use crate::error::{Error, Result};
use crate::gpt::{generate_trajectory, SamplerParams};

pub const TRANSLATION_COLUMN: &str = "Translation MSE";
pub const ROTATION_COLUMN: &str = "Rotation MSE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub index: usize,
    pub prompt: String,
    pub translation_mse: f64,
    pub rotation_mse: f64,
}

/// Per-pair and mean errors; translation in scene units², rotation in degrees².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    pub mean_translation_mse: f64,
    pub mean_rotation_mse: f64,
}

impl EvalReport {
    fn from_rows(method: &str, seed: u64, rows: Vec<EvalRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("evaluation set is empty".into()));
        }
        let n = rows.len() as f64;
        let mean_translation_mse = rows.iter().map(|r| r.translation_mse).sum::<f64>() / n;
        let mean_rotation_mse = rows.iter().map(|r| r.rotation_mse).sum::<f64>() / n;
        Ok(Self { method: method.into(), seed, rows, mean_translation_mse, mean_rotation_mse })
    }

    /// Summary table with one row per method, as a plain-text grid.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let w = self.method.len().max(6);
        let _ = writeln!(s, "| {:<w$} | {TRANSLATION_COLUMN} | {ROTATION_COLUMN} |", "Method");
        let _ = writeln!(s, "|{}|{}|{}|", "-".repeat(w + 2), "-".repeat(TRANSLATION_COLUMN.len() + 2), "-".repeat(ROTATION_COLUMN.len() + 2));
        let _ = writeln!(
            s,
            "| {:<w$} | {:>15.4} | {:>12.4} |",
            self.method, self.mean_translation_mse, self.mean_rotation_mse
        );
        s
    }

    /// Per-pair table followed by the mean.
    pub fn detailed_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| # | Prompt | {TRANSLATION_COLUMN} | {ROTATION_COLUMN} |");
        let _ = writeln!(s, "|---|---|---|---|");
        for r in &self.rows {
            let _ = writeln!(s, "| {} | {} | {:.4} | {:.4} |", r.index, r.prompt, r.translation_mse, r.rotation_mse);
        }
        let _ = writeln!(s, "| mean | | {:.4} | {:.4} |", self.mean_translation_mse, self.mean_rotation_mse);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn compare(generated: &Trajectory, truth: &Trajectory) -> Result<(f64, f64)> {
    let g = if generated.len() == truth.len() { generated.clone() } else { resample(generated, truth.len())? };
    let m = trajectory_mse(&g, truth)?;
    Ok((m.translation, m.rotation))
}

/// Generates a trajectory for every prompt and compares it with the ground truth after
/// resampling to the ground-truth frame count. Pair `i` uses seed `sampler.seed + i`.
pub fn evaluate(models: &Models, pairs: &[TextTrajPair], sampler: &SamplerParams) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let s = SamplerParams { seed: sampler.seed.wrapping_add(i as u64), ..sampler.clone() };
        let g = generate_trajectory(&models.gpt.model, &models.gpt.vocab, &models.tokenizer, &p.text, &s)?;
        let (t, r) = compare(&g.trajectory, &p.traj)?;
        rows.push(EvalRow { index: i, prompt: p.text.clone(), translation_mse: t, rotation_mse: r });
    }
    EvalReport::from_rows("CineGPT", sampler.seed, rows)
}

/// Same metrics for tokenize → decode, i.e. the best any generator over this codebook can do.
pub fn reconstruction_floor(tokenizer: &crate::tokenizer::TokenizerModel, pairs: &[TextTrajPair]) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let seq = tokenizer.tokenize(&p.traj)?;
        let rec = tokenizer.decode(&seq.ids, Some(seq.duration_s))?;
        let (t, r) = compare(&rec, &p.traj)?;
        rows.push(EvalRow { index: i, prompt: p.text.clone(), translation_mse: t, rotation_mse: r });
    }
    EvalReport::from_rows("Tokenizer reconstruction", 0, rows)
}
