//! Per-run output directory: config echo, checkpoint metrics, edit events,
//! cohort snapshots, catch-up points, online accuracy, final mask and summary.
//!
//! Records are flushed as they are produced so an aborted run leaves a usable
//! partial log.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use plasticity_core::metrics::{CatchupPoint, CohortRecord};
use plasticity_core::nn::UnitMask;
use plasticity_core::structural::EditEvent;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

/// Version of the CSV/JSON layouts described in `docs/schemas.md`.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Cycle,
    Ticket,
}

/// One evaluation checkpoint (end of a cycle or task).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub checkpoint: usize,
    /// Structural edits applied so far.
    pub cycle: usize,
    pub task: usize,
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    /// Checkpoint accuracy: cumulative over seen tasks for split streams,
    /// current task otherwise.
    pub acc: f64,
    pub evaluated: bool,
    /// Accuracy on each task seen so far (split streams) or the current task.
    pub task_accs: Vec<f64>,
    pub active: Vec<usize>,
    pub train_loss: f64,
    pub online_acc: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointRow {
    checkpoint: usize,
    cycle: usize,
    task: usize,
    epoch: usize,
    step: usize,
    lr: f64,
    acc: f64,
    evaluated: bool,
    task_accs: String,
    active: String,
    train_loss: f64,
    online_acc: f64,
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

fn split_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|v| v.parse().map_err(|_| HarnessError::Other(format!("bad list entry {v:?}"))))
        .collect()
}

impl CheckpointRecord {
    fn to_row(&self) -> CheckpointRow {
        CheckpointRow {
            checkpoint: self.checkpoint,
            cycle: self.cycle,
            task: self.task,
            epoch: self.epoch,
            step: self.step,
            lr: self.lr,
            acc: self.acc,
            evaluated: self.evaluated,
            task_accs: join(&self.task_accs),
            active: join(&self.active),
            train_loss: self.train_loss,
            online_acc: self.online_acc,
        }
    }

    fn from_row(r: CheckpointRow) -> Result<Self> {
        Ok(CheckpointRecord {
            checkpoint: r.checkpoint,
            cycle: r.cycle,
            task: r.task,
            epoch: r.epoch,
            step: r.step,
            lr: r.lr,
            acc: r.acc,
            evaluated: r.evaluated,
            task_accs: split_list(&r.task_accs)?,
            active: split_list(&r.active)?,
            train_loss: r.train_loss,
            online_acc: r.online_acc,
        })
    }
}

/// Accuracy of one training mini-batch measured before its update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRecord {
    pub step: usize,
    pub task: usize,
    pub loss: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMask {
    pub widths: Vec<usize>,
    pub masks: Vec<Vec<u8>>,
}

impl FinalMask {
    pub fn from_masks(masks: &[UnitMask]) -> Self {
        FinalMask {
            widths: masks.iter().map(UnitMask::len).collect(),
            masks: masks.iter().map(|m| m.bits().to_vec()).collect(),
        }
    }

    pub fn unit_masks(&self) -> Vec<UnitMask> {
        self.masks.iter().map(|b| UnitMask::from_bits(b)).collect()
    }
}

/// Headline numbers of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub run_id: String,
    pub protocol: ProtocolKind,
    pub method: String,
    pub seed: u64,
    pub compactness: f64,
    pub schedule: String,
    pub cycles: usize,
    pub epochs_per_cycle: usize,
    pub interventions: Vec<String>,
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub acc_final: f64,
    pub taa: f64,
    pub taoa: f64,
    pub early_taa: f64,
    /// Cycle run this ticket was retrained from.
    pub paired_run: Option<String>,
    /// Ticket final minus paired cycle final.
    pub delta_wt_c: Option<f64>,
    pub final_active: Vec<usize>,
    pub unit_targets: Vec<usize>,
    pub steps: usize,
    pub epochs: usize,
    pub wall_clock_s: f64,
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: RunConfig,
    pub summary: RunSummary,
    pub checkpoints: Vec<CheckpointRecord>,
    pub events: Vec<EditEvent>,
    pub cohorts: Vec<CohortRecord>,
    pub catchup: Vec<CatchupPoint>,
    pub online: Vec<OnlineRecord>,
    pub final_mask: FinalMask,
}

impl RunLog {
    /// Checkpoint accuracies that count toward ACC and TAA.
    pub fn trajectory(&self) -> Vec<f64> {
        self.checkpoints.iter().filter(|c| c.evaluated).map(|c| c.acc).collect()
    }

    /// Reads a run directory written by [`RunWriter`].
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))
        };
        let config: RunConfig = serde_json::from_str(&read("config.json")?)?;
        let summary: RunSummary = serde_json::from_str(&read("summary.json")?)?;
        let final_mask: FinalMask = serde_json::from_str(&read("mask_final.json")?)?;
        let events = read("events.jsonl")?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<EditEvent>, _>>()?;
        let checkpoints = read_csv::<CheckpointRow>(&dir.join("metrics.csv"))?
            .into_iter()
            .map(CheckpointRecord::from_row)
            .collect::<Result<Vec<_>>>()?;
        Ok(RunLog {
            config,
            summary,
            checkpoints,
            events,
            cohorts: read_csv(&dir.join("cohorts.csv"))?,
            catchup: read_csv(&dir.join("catchup.csv"))?,
            online: read_csv(&dir.join("online.csv"))?,
            final_mask,
        })
    }
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    rdr.deserialize().map(|r| r.map_err(HarnessError::from)).collect()
}

/// Streams records of one run into its output directory.
pub struct RunWriter {
    dir: PathBuf,
    metrics: csv::Writer<File>,
    events: BufWriter<File>,
    cohorts: csv::Writer<File>,
    catchup: csv::Writer<File>,
    online: csv::Writer<File>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(f))
}

impl RunWriter {
    /// Creates `dir`, writes `config.json` and opens the record files.
    pub fn create(dir: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_json(&dir.join("config.json"), config)?;
        let events_path = dir.join("events.jsonl");
        let events = File::create(&events_path).map_err(|e| HarnessError::io(&events_path, e))?;
        let mut w = RunWriter {
            dir: dir.to_path_buf(),
            metrics: csv_writer(&dir.join("metrics.csv"))?,
            events: BufWriter::new(events),
            cohorts: csv_writer(&dir.join("cohorts.csv"))?,
            catchup: csv_writer(&dir.join("catchup.csv"))?,
            online: csv_writer(&dir.join("online.csv"))?,
        };
        // headers are written even when no rows follow
        w.metrics.write_record([
            "checkpoint", "cycle", "task", "epoch", "step", "lr", "acc", "evaluated", "task_accs", "active",
            "train_loss", "online_acc",
        ])?;
        w.cohorts
            .write_record(["cycle", "layer", "timepoint", "cohort", "units", "mean_act", "mean_grad"])?;
        w.catchup.write_record([
            "cycle", "layer", "age", "newborn_act", "incumbent_act", "newborn_grad", "incumbent_grad",
        ])?;
        w.online.write_record(["step", "task", "loss", "acc"])?;
        w.flush_all()?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn flush_all(&mut self) -> Result<()> {
        let io = |e| HarnessError::io(&self.dir, e);
        self.metrics.flush().map_err(io)?;
        self.cohorts.flush().map_err(io)?;
        self.catchup.flush().map_err(io)?;
        self.online.flush().map_err(io)?;
        self.events.flush().map_err(io)?;
        Ok(())
    }

    pub fn checkpoint(&mut self, rec: &CheckpointRecord) -> Result<()> {
        self.metrics.serialize(rec.to_row())?;
        self.metrics.flush().map_err(|e| HarnessError::io(&self.dir, e))?;
        self.online.flush().map_err(|e| HarnessError::io(&self.dir, e))?;
        Ok(())
    }

    pub fn events(&mut self, events: &[EditEvent]) -> Result<()> {
        for e in events {
            serde_json::to_writer(&mut self.events, e)?;
            self.events.write_all(b"\n").map_err(|e| HarnessError::io(&self.dir, e))?;
        }
        self.events.flush().map_err(|e| HarnessError::io(&self.dir, e))
    }

    pub fn cohort(&mut self, rec: &CohortRecord) -> Result<()> {
        self.cohorts.serialize(rec)?;
        self.cohorts.flush().map_err(|e| HarnessError::io(&self.dir, e))
    }

    pub fn catchup(&mut self, p: &CatchupPoint) -> Result<()> {
        self.catchup.serialize(p)?;
        Ok(())
    }

    pub fn online(&mut self, r: &OnlineRecord) -> Result<()> {
        self.online.serialize(r)?;
        Ok(())
    }

    /// Writes the final mask and summary.
    pub fn finish(mut self, mask: &FinalMask, summary: &RunSummary) -> Result<()> {
        self.flush_all()?;
        write_json(&self.dir.join("mask_final.json"), mask)?;
        write_json(&self.dir.join("summary.json"), summary)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads `mask_final.json` from a run directory or a direct file path.
pub fn load_final_mask(path: &Path) -> Result<FinalMask> {
    let file = if path.is_dir() { path.join("mask_final.json") } else { path.to_path_buf() };
    let f = File::open(&file).map_err(|e| HarnessError::io(&file, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}
