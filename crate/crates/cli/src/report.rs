//! Run artifacts: the result JSON, the per-epoch loss CSV, and the ablation
//! table CSV. Everything written here is a pure function of the run
//! configuration and seed; wall-clock time is reported on standard output
//! only, so identical runs produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use ddian_core::trainer::{AblationReport, RunResult};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Serialize)]
struct ResultDoc<'a> {
    seed: u64,
    config: &'a RunConfig,
    source_val_accuracy: Option<f64>,
    target_accuracy: Option<f64>,
    target_reads_during_training: u64,
    loss_series: Vec<LossRow>,
    val_history: Vec<ValRow>,
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    l_cls: f64,
    l_dm: f64,
    l_dc: f64,
    l_dis: f64,
    total: f64,
}

#[derive(Serialize)]
struct ValRow {
    epoch: usize,
    accuracy: f64,
}

pub fn result_json(config: &RunConfig, result: &RunResult, target_reads: u64) -> String {
    let doc = ResultDoc {
        seed: result.seed,
        config,
        source_val_accuracy: result.source_val_accuracy,
        target_accuracy: result.target_accuracy,
        target_reads_during_training: target_reads,
        loss_series: result
            .loss_series
            .iter()
            .enumerate()
            .map(|(epoch, b)| LossRow {
                epoch,
                l_cls: b.l_cls,
                l_dm: b.l_dm,
                l_dc: b.l_dc,
                l_dis: b.l_dis,
                total: b.total,
            })
            .collect(),
        val_history: result
            .val_history
            .iter()
            .map(|e| ValRow {
                epoch: e.epoch,
                accuracy: e.accuracy,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("result serializes");
    text.push('\n');
    text
}

pub fn losses_csv(result: &RunResult) -> String {
    let mut out = String::from("epoch,l_cls,l_dm,l_dc,l_dis,total\n");
    for (epoch, b) in result.loss_series.iter().enumerate() {
        out.push_str(&format!(
            "{epoch},{:?},{:?},{:?},{:?},{:?}\n",
            b.l_cls, b.l_dm, b.l_dc, b.l_dis, b.total
        ));
    }
    out
}

pub fn ablation_csv(report: &AblationReport) -> String {
    let mut out = String::from("variant,seed,target_acc,source_val_acc,final_total_loss\n");
    for row in &report.rows {
        let val = row
            .source_val_accuracy
            .map(|v| format!("{v:?}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:?},{},{:?}\n",
            row.variant, row.seed, row.target_accuracy, val, row.final_total_loss
        ));
    }
    out
}

pub fn ablation_summary_table(report: &AblationReport) -> String {
    let mut out = format!("{:<22} {:>10} {:>10}\n", "variant", "mean_acc", "std");
    for s in &report.summaries {
        out.push_str(&format!(
            "{:<22} {:>10.4} {:>10.4}\n",
            s.variant, s.mean_target_accuracy, s.std_target_accuracy
        ));
    }
    out
}

/// Removes the files it was told about unless `disarm` was called; keeps
/// failed runs from leaving partial outputs behind.
pub struct OutputGuard {
    written: Vec<PathBuf>,
    armed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        OutputGuard {
            written: Vec::new(),
            armed: true,
        }
    }

    pub fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        fs::write(path, contents)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn record(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    pub fn disarm(mut self) {
        self.armed = false;
    }
}

impl Default for OutputGuard {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.armed {
            for path in &self.written {
                let _ = fs::remove_file(path);
            }
        }
    }
}
