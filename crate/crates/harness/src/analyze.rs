//! Post-hoc reports over run directories: cohort parity, survivor stability,
//! catch-up curves, seed aggregates, Welch tests and rank correlation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plasticity_core::metrics::{
    catchup_series, layer_averaged, mean_ci95, parity_records, spearman_rho, survivor_stability, welch_ttest,
    CatchupRow, Cohort, ParityRecord, Timepoint, PARITY_EPS,
};
use plasticity_core::structural::replay_masks;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::protocol::build_network;
use crate::runlog::{write_json, ProtocolKind, RunLog};

/// Layer-averaged parity of one edit cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleParity {
    pub cycle: usize,
    pub log_act: f64,
    pub log_grad: f64,
}

/// Survivor stability of the kept cohort between Post and End of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorRow {
    pub cycle: usize,
    pub layer: usize,
    pub additive: f64,
    pub log: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub run_id: String,
    pub dir: PathBuf,
    pub method: String,
    pub protocol: ProtocolKind,
    pub compactness: f64,
    pub interventions: Vec<String>,
    pub seed: u64,
    pub acc_final: f64,
    pub taa: f64,
    pub delta_wt_c: Option<f64>,
    /// Per-(cycle, layer) parity rows.
    pub parity: Vec<ParityRecord>,
    pub cycle_parity: Vec<CycleParity>,
    /// Mean over cycles of the layer-averaged log-parities.
    pub mean_log_act: Option<f64>,
    pub mean_log_grad: Option<f64>,
    pub survivor: Vec<SurvivorRow>,
    pub catchup: Vec<CatchupRow>,
    /// Whether replaying the logged events reproduces the logged final mask.
    pub replay_ok: bool,
}

/// Seed aggregate of runs sharing method, protocol, compactness and
/// interventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub method: String,
    pub protocol: ProtocolKind,
    pub compactness: f64,
    pub interventions: String,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_ci95: f64,
    pub taa_mean: f64,
    pub taa_ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelchReport {
    pub metric: String,
    pub group_a: String,
    pub group_b: String,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunAnalysis>,
    pub groups: Vec<GroupRow>,
    pub welch: Vec<WelchReport>,
    /// Spearman correlation of cycle TAA with mean birth gradient log-parity
    /// across grow cycle runs.
    pub spearman_taa_grad: Option<f64>,
    pub notes: Vec<String>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Whether the logged events rebuild the logged final mask.
pub fn replay_check(log: &RunLog) -> Result<bool> {
    if log.summary.protocol == ProtocolKind::Ticket {
        return Ok(log.events.is_empty());
    }
    let net = build_network(&log.config, &log.summary.input_shape, log.summary.classes, 0)?;
    let masks = replay_masks(&net, &log.events)?;
    Ok(masks.iter().map(|m| m.bits().to_vec()).collect::<Vec<_>>() == log.final_mask.masks)
}

pub fn analyze_run(log: &RunLog, dir: &Path) -> Result<RunAnalysis> {
    let s = &log.summary;
    let parity = match (s.method.as_str(), s.protocol) {
        ("grow", ProtocolKind::Cycle) => {
            parity_records(&log.cohorts, Timepoint::Post, Cohort::Newborn, Cohort::Incumbent, PARITY_EPS)
        }
        ("prune", ProtocolKind::Cycle) => {
            parity_records(&log.cohorts, Timepoint::Exit, Cohort::Kept, Cohort::Pruned, PARITY_EPS)
        }
        _ => Vec::new(),
    };
    let cycle_parity: Vec<CycleParity> = layer_averaged(&parity)
        .into_iter()
        .map(|(cycle, log_act, log_grad)| CycleParity {
            cycle,
            log_act,
            log_grad,
        })
        .collect();
    let mut kept: BTreeMap<(usize, usize), (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in log.cohorts.iter().filter(|r| r.cohort == Cohort::Kept) {
        let slot = kept.entry((r.cycle, r.layer)).or_default();
        match r.timepoint {
            Timepoint::Post => slot.0 = Some(r.mean_act),
            Timepoint::End => slot.1 = Some(r.mean_act),
            Timepoint::Exit => {}
        }
    }
    let survivor = kept
        .into_iter()
        .filter_map(|((cycle, layer), pair)| match pair {
            (Some(post), Some(end)) => {
                let (additive, log) = survivor_stability(&[post], &[end], PARITY_EPS);
                Some(SurvivorRow {
                    cycle,
                    layer,
                    additive,
                    log,
                })
            }
            _ => None,
        })
        .collect();
    Ok(RunAnalysis {
        run_id: s.run_id.clone(),
        dir: dir.to_path_buf(),
        method: s.method.clone(),
        protocol: s.protocol,
        compactness: s.compactness,
        interventions: s.interventions.clone(),
        seed: s.seed,
        acc_final: s.acc_final,
        taa: s.taa,
        delta_wt_c: s.delta_wt_c,
        mean_log_act: mean(&cycle_parity.iter().map(|c| c.log_act).collect::<Vec<_>>()),
        mean_log_grad: mean(&cycle_parity.iter().map(|c| c.log_grad).collect::<Vec<_>>()),
        parity,
        cycle_parity,
        survivor,
        catchup: catchup_series(&log.catchup, PARITY_EPS),
        replay_ok: replay_check(log)?,
    })
}

fn group_key(r: &RunAnalysis) -> (String, ProtocolKind, String, String) {
    (
        r.method.clone(),
        r.protocol,
        format!("{:.4}", r.compactness),
        r.interventions.join("+"),
    )
}

/// Analyzes every run directory and writes the report files into `out`.
pub fn analyze_dirs(dirs: &[PathBuf], out: &Path) -> Result<Report> {
    let mut runs = Vec::with_capacity(dirs.len());
    for d in dirs {
        let log = RunLog::load(d)?;
        runs.push(analyze_run(&log, d)?);
    }
    let mut notes = vec!["parity is computed per layer, then averaged over layers with equal weight".to_string()];

    let mut by_group: BTreeMap<(String, ProtocolKind, String, String), Vec<&RunAnalysis>> = BTreeMap::new();
    for r in &runs {
        by_group.entry(group_key(r)).or_default().push(r);
    }
    let mut groups = Vec::new();
    for ((method, protocol, _, interventions), rs) in &by_group {
        let accs: Vec<f64> = rs.iter().map(|r| r.acc_final).collect();
        let taas: Vec<f64> = rs.iter().map(|r| r.taa).collect();
        let (acc_mean, acc_ci95) = mean_ci95(&accs)?;
        let (taa_mean, taa_ci95) = mean_ci95(&taas)?;
        groups.push(GroupRow {
            method: method.clone(),
            protocol: *protocol,
            compactness: rs[0].compactness,
            interventions: interventions.clone(),
            runs: rs.len(),
            acc_mean,
            acc_ci95,
            taa_mean,
            taa_ci95,
        });
    }

    let mut welch = Vec::new();
    let cycle_taa = |m: &str| -> Vec<f64> {
        runs.iter()
            .filter(|r| r.method == m && r.protocol == ProtocolKind::Cycle && r.interventions.is_empty())
            .map(|r| r.taa)
            .collect()
    };
    let (g, p) = (cycle_taa("grow"), cycle_taa("prune"));
    if g.len() >= 2 && p.len() >= 2 {
        match welch_ttest(&g, &p) {
            Ok(w) => welch.push(WelchReport {
                metric: "cycle_taa".into(),
                group_a: "grow".into(),
                group_b: "prune".into(),
                t: w.t,
                df: w.df,
                p: w.p,
            }),
            Err(e) => notes.push(format!("welch grow vs prune: {e}")),
        }
    }

    let pairs: Vec<(f64, f64)> = runs
        .iter()
        .filter(|r| r.method == "grow" && r.protocol == ProtocolKind::Cycle)
        .filter_map(|r| r.mean_log_grad.map(|g| (r.taa, g)))
        .collect();
    let spearman_taa_grad = if pairs.len() >= 3 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        match spearman_rho(&xs, &ys) {
            Ok(rho) => Some(rho),
            Err(e) => {
                notes.push(format!("spearman: {e}"));
                None
            }
        }
    } else {
        None
    };
    for r in runs.iter().filter(|r| !r.replay_ok) {
        notes.push(format!("{}: event replay does not reproduce the final mask", r.run_id));
    }

    let report = Report {
        runs,
        groups,
        welch,
        spearman_taa_grad,
        notes,
    };
    write_report(&report, out)?;
    Ok(report)
}

fn write_report(report: &Report, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    write_json(&out.join("report.json"), report)?;

    let mut w = csv::Writer::from_path(out.join("parity.csv"))?;
    w.write_record(["run_id", "cycle", "layer", "reference", "comparison", "r_act", "log_act", "r_grad", "log_grad"])?;
    for r in &report.runs {
        for p in &r.parity {
            w.write_record([
                r.run_id.clone(),
                p.cycle.to_string(),
                p.layer.to_string(),
                format!("{:?}", p.reference).to_lowercase(),
                format!("{:?}", p.comparison).to_lowercase(),
                p.r_act.to_string(),
                p.log_act.to_string(),
                p.r_grad.to_string(),
                p.log_grad.to_string(),
            ])?;
        }
        for c in &r.cycle_parity {
            w.write_record([
                r.run_id.clone(),
                c.cycle.to_string(),
                "mean".into(),
                String::new(),
                String::new(),
                String::new(),
                c.log_act.to_string(),
                String::new(),
                c.log_grad.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(out, e))?;

    let mut w = csv::Writer::from_path(out.join("survivor.csv"))?;
    w.write_record(["run_id", "cycle", "layer", "additive", "log"])?;
    for r in &report.runs {
        for s in &r.survivor {
            w.write_record([
                r.run_id.clone(),
                s.cycle.to_string(),
                s.layer.to_string(),
                s.additive.to_string(),
                s.log.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(out, e))?;

    let mut w = csv::Writer::from_path(out.join("catchup_summary.csv"))?;
    w.write_record(["run_id", "age", "events", "ratio_act", "ratio_grad"])?;
    for r in &report.runs {
        for c in &r.catchup {
            w.write_record([
                r.run_id.clone(),
                c.age.to_string(),
                c.events.to_string(),
                c.ratio_act.to_string(),
                c.ratio_grad.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(out, e))?;

    let mut w = csv::Writer::from_path(out.join("groups.csv"))?;
    for g in &report.groups {
        w.serialize(g)?;
    }
    w.flush().map_err(|e| HarnessError::io(out, e))?;
    Ok(())
}
