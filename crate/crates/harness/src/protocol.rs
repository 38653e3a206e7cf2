//! Cycle, winning-ticket and stress-test protocols.

use std::path::Path;
use std::time::Instant;

use plasticity_core::budget::{layer_budgets, plan_targets, CompactnessPlan};
use plasticity_core::data::{BatchPlan, Budget, DataPair, ReplayBuffer, Sample, Task, TaskStream};
use plasticity_core::metrics::{
    acc_final, cohort_record, early_task_taa, measure_units, taa, taoa, ticket_cycle_delta, CatchupPoint, Cohort,
    CohortRecord, Timepoint, UnitStats,
};
use plasticity_core::nn::{Activation, MaskedNetwork, UnitMask};
use plasticity_core::optim::{moment_transplant, newborn_slices, select_donor, OptimizerState, TwoSpeed};
use plasticity_core::structural::{
    grow_step, prune_step, seed_grow_masks, EditAction, EditEvent, GrowOptions, GrowScorer, InitPolicy,
    RewindSnapshot,
};
use plasticity_core::Tensor;
use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Arch, Method, RunConfig};
use crate::dataset::build_stream;
use crate::error::{HarnessError, Result};
use crate::runlog::{
    write_json, CheckpointRecord, FinalMask, OnlineRecord, ProtocolKind, RunLog, RunSummary, RunWriter,
    SCHEMA_VERSION,
};
use crate::trainer::{batch_tensors, evaluate, make_optimizer, next_batch, train_step};

/// XOR-ed into the run seed for winning-ticket retraining.
pub const TICKET_SEED_XOR: u64 = 0x7E1C_4E7A_5EED_0001;

const STREAM_INIT: u64 = 1;
const STREAM_ORDER: u64 = 2;
const STREAM_EDIT: u64 = 3;
const STREAM_DIAG: u64 = 4;

/// Independent generator `stream` of the family seeded by `seed`.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn run_id(cfg: &RunConfig, protocol: ProtocolKind, seed: u64) -> String {
    let tag = match protocol {
        ProtocolKind::Cycle => "cycle",
        ProtocolKind::Ticket => "ticket",
    };
    let mut id = format!("{}-c{:.0}-{}-{}", cfg.method.name(), cfg.c() * 100.0, cfg.schedule, tag);
    for name in cfg.interventions.names() {
        id.push('-');
        id.push_str(name);
    }
    format!("{id}-s{seed}")
}

/// Builds the configured architecture for the data's input shape.
pub fn build_network(cfg: &RunConfig, input_shape: &[usize], classes: usize, init_seed: u64) -> Result<MaskedNetwork> {
    let act = match cfg.interventions.rsl {
        Some(p) => Activation::Rsl(p),
        None => Activation::Relu,
    };
    let net = match cfg.model.arch {
        Arch::Mlp => MaskedNetwork::mlp(input_shape.iter().product(), &cfg.model.hidden, classes, act, init_seed)?,
        Arch::Convnet => {
            if input_shape.len() != 3 {
                return Err(HarnessError::invalid(format!(
                    "model.arch = \"convnet\" needs [c, h, w] inputs, data has shape {input_shape:?}"
                )));
            }
            MaskedNetwork::convnet(
                [input_shape[0], input_shape[1], input_shape[2]],
                &cfg.model.channels,
                &cfg.model.head,
                classes,
                act,
                init_seed,
            )?
        }
    };
    Ok(net)
}

/// One training segment: a task plus the structural edit that opens it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub task: usize,
    pub edit: Option<usize>,
}

/// IID streams repeat their single task once per cycle; task streams run each
/// task once, with the `T` edits spread over task boundaries.
pub fn plan_segments(stream: &TaskStream, cycles: usize) -> Vec<Segment> {
    if stream.kind == plasticity_core::data::StreamKind::Iid {
        return (1..=cycles).map(|t| Segment { task: 0, edit: Some(t) }).collect();
    }
    let n = stream.len();
    let mut segs: Vec<Segment> = (0..n).map(|task| Segment { task, edit: None }).collect();
    for t in 1..=cycles.min(n) {
        segs[(t - 1) * n / cycles].edit = Some(t);
    }
    segs
}

/// Frozen-mask input for [`execute`].
#[derive(Debug, Clone)]
pub struct TicketSpec {
    pub mask: FinalMask,
    pub paired_run: Option<String>,
    pub paired_final: Option<f64>,
}

struct EditContext {
    cycle: usize,
    layers: Vec<EditLayer>,
    diag: Option<(Tensor, Vec<usize>)>,
}

struct EditLayer {
    incumbents: Vec<usize>,
    /// Units flipped by the edit: newborns for grow, pruned units for prune.
    edited: Vec<usize>,
    kept: Vec<usize>,
}

fn diag_batch<R: RngCore>(data: &DataPair, task: &Task, size: usize, rng: &mut R) -> (Tensor, Vec<usize>) {
    let n = size.min(task.train.len());
    let mut idx = sample(rng, task.train.len(), n).into_vec();
    idx.sort_unstable();
    let picked: Vec<Sample> = idx.iter().map(|&i| task.train[i]).collect();
    batch_tensors(data, task, &picked, true)
}

fn records_for(
    stats: &[UnitStats],
    ctx: &EditContext,
    timepoint: Timepoint,
    cohorts: &[Cohort],
    out: &mut Vec<CohortRecord>,
) {
    for (h, layer) in ctx.layers.iter().enumerate() {
        for &c in cohorts {
            let units = match c {
                Cohort::Newborn | Cohort::Pruned => &layer.edited,
                Cohort::Incumbent => &layer.incumbents,
                Cohort::Kept => &layer.kept,
            };
            if let Some(r) = cohort_record(&stats[h], units, ctx.cycle, h, timepoint, c) {
                out.push(r);
            }
        }
    }
}

fn catchup_points(stats: &[UnitStats], ctx: &EditContext, age: usize) -> Vec<CatchupPoint> {
    ctx.layers
        .iter()
        .enumerate()
        .filter_map(|(h, l)| {
            let (na, ng) = stats[h].cohort_means(&l.edited)?;
            let (ia, ig) = stats[h].cohort_means(&l.incumbents)?;
            Some(CatchupPoint {
                cycle: ctx.cycle,
                layer: h,
                age,
                newborn_act: na,
                incumbent_act: ia,
                newborn_grad: ng,
                incumbent_grad: ig,
            })
        })
        .collect()
}

/// Mutable state threaded through one run.
struct RunState<'a> {
    cfg: &'a RunConfig,
    data: &'a DataPair,
    stream: &'a TaskStream,
    net: MaskedNetwork,
    opt: OptimizerState,
    two_speed: Option<TwoSpeed>,
    order_rng: ChaCha8Rng,
    edit_rng: ChaCha8Rng,
    diag_rng: ChaCha8Rng,
    replay: Option<ReplayBuffer>,
    rewind: Option<RewindSnapshot>,
    global_step: usize,
    global_epoch: usize,
    total_epochs: usize,
    total_steps: usize,
    epoch_schedule: bool,
    edits_done: usize,
    log: LogBuffers,
}

#[derive(Default)]
struct LogBuffers {
    checkpoints: Vec<CheckpointRecord>,
    events: Vec<EditEvent>,
    cohorts: Vec<CohortRecord>,
    catchup: Vec<CatchupPoint>,
    online: Vec<OnlineRecord>,
    online_by_task: Vec<Vec<f64>>,
}

impl RunState<'_> {
    fn lr(&self) -> f64 {
        let o = &self.cfg.optimizer;
        if self.epoch_schedule {
            o.schedule.lr(o.lr, self.global_epoch as f64, self.total_epochs as f64)
        } else {
            o.schedule.lr(o.lr, self.global_step as f64, self.total_steps as f64)
        }
    }

    fn diagnostics_on(&self) -> bool {
        self.cfg.diagnostics.enabled
    }

    fn emit_events(&mut self, events: Vec<EditEvent>, w: &mut RunWriter) -> Result<()> {
        w.events(&events)?;
        self.log.events.extend(events);
        Ok(())
    }

    fn emit_cohorts(&mut self, recs: Vec<CohortRecord>, w: &mut RunWriter) -> Result<()> {
        for r in &recs {
            w.cohort(r)?;
        }
        self.log.cohorts.extend(recs);
        Ok(())
    }

    fn measure(&self, ctx: &EditContext) -> Result<Option<Vec<UnitStats>>> {
        match &ctx.diag {
            Some((x, y)) => Ok(Some(measure_units(&self.net, x, y, self.cfg.tau)?)),
            None => Ok(None),
        }
    }

    /// Applies cycle `t`'s edit at the start of a segment and records the
    /// pre- and post-edit snapshots.
    fn edit(&mut self, plan: &CompactnessPlan, t: usize, task: &Task, w: &mut RunWriter) -> Result<EditContext> {
        let need_diag = self.diagnostics_on() || self.cfg.interventions.moment_transplant;
        let diag = if need_diag || self.cfg.method == Method::Grow {
            Some(diag_batch(self.data, task, self.cfg.diagnostics.batch, &mut self.diag_rng))
        } else {
            None
        };
        let pre_masks = self.net.masks();
        let mut ctx = EditContext {
            cycle: t,
            layers: Vec::new(),
            diag,
        };
        let pre_stats = if need_diag { self.measure(&ctx)? } else { None };
        let (x, y) = ctx.diag.clone().unwrap_or_else(|| (Tensor::zeros(&[0, 1]), Vec::new()));
        let events = match self.cfg.method {
            Method::Grow => {
                let iv = &self.cfg.interventions;
                let opts = GrowOptions {
                    scorer: if iv.gradmax { GrowScorer::GradMax } else { self.cfg.grow.scorer },
                    init: match iv.net2wider {
                        Some(n) => InitPolicy::Net2Wider { noise_eps: n.noise_eps },
                        None => InitPolicy::FreshKaiming,
                    },
                    tau: self.cfg.tau,
                };
                grow_step(&mut self.net, plan, t, &opts, &x, &y, &mut self.edit_rng)?
            }
            Method::Prune => prune_step(&mut self.net, plan, t, self.rewind.as_ref())?,
            Method::Dense => Vec::new(),
        };
        for (h, e) in events.iter().enumerate() {
            let incumbents = pre_masks[h].active_indices();
            let kept = match e.action {
                EditAction::Prune => incumbents.iter().copied().filter(|j| !e.units.contains(j)).collect(),
                EditAction::Grow => incumbents.clone(),
            };
            ctx.layers.push(EditLayer {
                incumbents,
                edited: e.units.clone(),
                kept,
            });
        }
        if self.cfg.method == Method::Grow {
            for e in &events {
                if let Some(ts) = self.two_speed.as_mut() {
                    for &j in &e.units {
                        ts.register(newborn_slices(&self.net, e.layer, j));
                    }
                }
                if self.cfg.interventions.moment_transplant && !e.units.is_empty() {
                    let rates = &pre_stats.as_ref().expect("diagnostics measured")[e.layer].act;
                    let donor = select_donor(rates, &pre_masks[e.layer]).ok_or_else(|| {
                        HarnessError::Other(format!("layer {}: no active donor for moment transplant", e.layer))
                    })?;
                    for &j in &e.units {
                        moment_transplant(&mut self.opt, &self.net, e.layer, j, donor)?;
                    }
                }
            }
        }
        self.emit_events(events, w)?;
        self.edits_done = t;

        if self.diagnostics_on() {
            let mut recs = Vec::new();
            if self.cfg.method == Method::Prune {
                if let Some(exit) = &pre_stats {
                    records_for(exit, &ctx, Timepoint::Exit, &[Cohort::Kept, Cohort::Pruned], &mut recs);
                }
            }
            if let Some(post) = self.measure(&ctx)? {
                match self.cfg.method {
                    Method::Grow => {
                        records_for(&post, &ctx, Timepoint::Post, &[Cohort::Newborn, Cohort::Incumbent], &mut recs);
                        if self.cfg.diagnostics.catchup {
                            for p in catchup_points(&post, &ctx, 0) {
                                w.catchup(&p)?;
                                self.log.catchup.push(p);
                            }
                        }
                    }
                    Method::Prune => records_for(&post, &ctx, Timepoint::Post, &[Cohort::Kept], &mut recs),
                    Method::Dense => {}
                }
            }
            self.emit_cohorts(recs, w)?;
        }
        Ok(ctx)
    }

    /// Trains one segment; returns (mean loss, mean online accuracy).
    fn train_segment(&mut self, task: &Task, ctx: Option<&EditContext>, w: &mut RunWriter) -> Result<(f64, f64)> {
        let mut plan = BatchPlan::new(task);
        let frac = self.cfg.stream.replay.map(|r| r.fraction).unwrap_or(0.0);
        let (mut loss_sum, mut acc_sum, mut n) = (0.0, 0.0, 0usize);
        let mut epochs_seen = 0;
        let mut lr = self.lr();
        loop {
            let replay = self.replay.as_ref().map(|b| (b, frac));
            let Some((samples, n_cur)) = next_batch(&mut plan, task, replay, &mut self.order_rng) else {
                break;
            };
            let (x, y) = batch_tensors(self.data, task, &samples, true);
            if !self.epoch_schedule {
                lr = self.lr();
            }
            let stats = train_step(
                &mut self.net,
                &mut self.opt,
                self.two_speed.as_mut(),
                &x,
                &y,
                n_cur,
                lr,
                &mut self.order_rng,
            )?;
            self.global_step += 1;
            loss_sum += stats.loss;
            acc_sum += stats.online_acc;
            n += 1;
            let rec = OnlineRecord {
                step: self.global_step,
                task: task.id,
                loss: stats.loss,
                acc: stats.online_acc,
            };
            w.online(&rec)?;
            self.log.online.push(rec);
            self.log.online_by_task[task.id].push(stats.online_acc);

            if plan.epochs_done() > epochs_seen {
                epochs_seen = plan.epochs_done();
                self.global_epoch += 1;
                if self.epoch_schedule {
                    lr = self.lr();
                }
                self.after_epoch(epochs_seen, ctx, w)?;
            }
        }
        let n = n.max(1) as f64;
        Ok((loss_sum / n, acc_sum / n))
    }

    fn after_epoch(&mut self, age: usize, ctx: Option<&EditContext>, w: &mut RunWriter) -> Result<()> {
        if self.cfg.method == Method::Prune
            && self.cfg.prune.rewind
            && self.cfg.prune.rewind_epoch > 0
            && self.global_epoch == self.cfg.prune.rewind_epoch
        {
            self.rewind = Some(RewindSnapshot::capture(&self.net, self.global_epoch));
        }
        if let Some(ctx) = ctx {
            if self.cfg.method == Method::Grow && self.diagnostics_on() && self.cfg.diagnostics.catchup {
                if let Some(stats) = self.measure(ctx)? {
                    for p in catchup_points(&stats, ctx, age) {
                        w.catchup(&p)?;
                        self.log.catchup.push(p);
                    }
                }
            }
        }
        Ok(())
    }

    fn end_snapshot(&mut self, ctx: &EditContext, w: &mut RunWriter) -> Result<()> {
        if !self.diagnostics_on() {
            return Ok(());
        }
        let Some(stats) = self.measure(ctx)? else {
            return Ok(());
        };
        let mut recs = Vec::new();
        match self.cfg.method {
            Method::Grow => records_for(&stats, ctx, Timepoint::End, &[Cohort::Newborn, Cohort::Incumbent], &mut recs),
            Method::Prune => records_for(&stats, ctx, Timepoint::End, &[Cohort::Kept], &mut recs),
            Method::Dense => {}
        }
        self.emit_cohorts(recs, w)
    }

    fn checkpoint(&mut self, seg_idx: usize, task: &Task, loss: f64, online: f64, w: &mut RunWriter) -> Result<()> {
        let (acc, task_accs) = if self.stream.cumulative_eval() {
            let accs = self.stream.tasks[..=task.id]
                .iter()
                .map(|t| evaluate(&self.net, self.data, t))
                .collect::<Result<Vec<f64>>>()?;
            (plasticity_core::metrics::cum_acc(&accs)?, accs)
        } else if task.evaluated {
            let a = evaluate(&self.net, self.data, task)?;
            (a, vec![a])
        } else {
            (f64::NAN, Vec::new())
        };
        let rec = CheckpointRecord {
            checkpoint: seg_idx + 1,
            cycle: self.edits_done,
            task: task.id,
            epoch: self.global_epoch,
            step: self.global_step,
            lr: self.lr(),
            acc,
            evaluated: task.evaluated,
            task_accs,
            active: self.net.masks().iter().map(UnitMask::active_count).collect(),
            train_loss: loss,
            online_acc: online,
        };
        log::info!(
            "checkpoint {} task {} epoch {} acc {:.4} active {:?}",
            rec.checkpoint,
            rec.task,
            rec.epoch,
            rec.acc,
            rec.active
        );
        w.checkpoint(&rec)?;
        self.log.checkpoints.push(rec);
        Ok(())
    }
}

fn stream_totals(stream: &TaskStream, segs: &[Segment]) -> (bool, usize, usize) {
    let epoch_schedule = segs
        .iter()
        .all(|s| matches!(stream.tasks[s.task].budget, Budget::Epochs(_)));
    let total_epochs = segs
        .iter()
        .map(|s| match stream.tasks[s.task].budget {
            Budget::Epochs(e) => e,
            Budget::Steps(_) => 0,
        })
        .sum();
    let total_steps = segs.iter().map(|s| stream.tasks[s.task].total_steps()).sum();
    (epoch_schedule, total_epochs, total_steps)
}

/// Runs one seed of the cycle protocol (`ticket = None`) or a winning-ticket
/// retraining (`ticket = Some`), writing records into `out_dir`.
pub fn execute(
    cfg: &RunConfig,
    data: &DataPair,
    seed: u64,
    ticket: Option<&TicketSpec>,
    out_dir: &Path,
) -> Result<RunLog> {
    let started = Instant::now();
    cfg.validate()?;
    let stream = build_stream(cfg, data, seed)?;
    let protocol = if ticket.is_some() { ProtocolKind::Ticket } else { ProtocolKind::Cycle };
    let id = run_id(cfg, protocol, seed);
    let train_seed = if ticket.is_some() { seed ^ TICKET_SEED_XOR } else { seed };
    let input_shape = data.train.example_shape().to_vec();
    let init_seed = derived_rng(train_seed, STREAM_INIT).next_u64();
    let mut net = build_network(cfg, &input_shape, stream.classes, init_seed)?;
    let plan = plan_targets(&layer_budgets(&net), cfg.c(), &cfg.bias_schedule()?, cfg.cycles)?;
    let mut writer = RunWriter::create(out_dir, cfg)?;
    let mut edit_rng = derived_rng(train_seed, STREAM_EDIT);

    let mut seed_events = Vec::new();
    if let Some(t) = ticket {
        if t.mask.widths != net.masked_widths() {
            return Err(HarnessError::invalid(format!(
                "ticket mask widths {:?} do not match the network's masked widths {:?}",
                t.mask.widths,
                net.masked_widths()
            )));
        }
        net.set_masks(&t.mask.unit_masks())?;
    } else if cfg.method == Method::Grow {
        seed_events = seed_grow_masks(&mut net, &plan, cfg.grow.seed_fraction, &mut edit_rng)?;
    }

    let segs = plan_segments(&stream, cfg.cycles);
    let (epoch_schedule, total_epochs, total_steps) = stream_totals(&stream, &segs);
    let rewind = (ticket.is_none() && cfg.method == Method::Prune && cfg.prune.rewind && cfg.prune.rewind_epoch == 0)
        .then(|| RewindSnapshot::capture(&net, 0));
    let two_speed = match (ticket, cfg.interventions.two_speed) {
        (None, Some(c)) => Some(TwoSpeed::new(c)?),
        _ => None,
    };
    let opt = make_optimizer(&cfg.optimizer, &net);
    let mut st = RunState {
        cfg,
        data,
        stream: &stream,
        net,
        opt,
        two_speed,
        order_rng: derived_rng(train_seed, STREAM_ORDER),
        edit_rng,
        diag_rng: derived_rng(train_seed, STREAM_DIAG),
        replay: cfg.stream.replay.map(ReplayBuffer::new),
        rewind,
        global_step: 0,
        global_epoch: 0,
        total_epochs,
        total_steps,
        epoch_schedule,
        edits_done: 0,
        log: LogBuffers {
            online_by_task: vec![Vec::new(); stream.len()],
            ..Default::default()
        },
    };
    st.emit_events(seed_events, &mut writer)?;

    for (i, seg) in segs.iter().enumerate() {
        let task = &stream.tasks[seg.task];
        let ctx = match (seg.edit, ticket) {
            (Some(t), None) if cfg.method != Method::Dense => Some(st.edit(&plan, t, task, &mut writer)?),
            (Some(t), _) => {
                st.edits_done = t;
                None
            }
            _ => None,
        };
        let (loss, online) = st.train_segment(task, ctx.as_ref(), &mut writer)?;
        if let Some(ctx) = &ctx {
            st.end_snapshot(ctx, &mut writer)?;
        }
        st.checkpoint(i, task, loss, online, &mut writer)?;
        let task_ends = segs.get(i + 1).map_or(true, |n| n.task != seg.task);
        if task_ends {
            if let Some(buf) = st.replay.as_mut() {
                buf.insert_task(&task.train);
            }
        }
    }

    let masks = st.net.masks();
    let final_mask = FinalMask::from_masks(&masks);
    let traj: Vec<f64> = st.log.checkpoints.iter().filter(|c| c.evaluated).map(|c| c.acc).collect();
    let evaluated_online: Vec<Vec<f64>> = stream
        .tasks
        .iter()
        .filter(|t| t.evaluated)
        .map(|t| st.log.online_by_task[t.id].clone())
        .collect();
    let flat_online: Vec<f64> = evaluated_online.iter().flatten().copied().collect();
    let final_acc = acc_final(&traj)?;
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        run_id: id,
        protocol,
        method: cfg.method.name().to_string(),
        seed,
        compactness: cfg.c(),
        schedule: cfg.schedule.clone(),
        cycles: cfg.cycles,
        epochs_per_cycle: cfg.epochs_per_cycle,
        interventions: cfg.interventions.names().into_iter().map(String::from).collect(),
        input_shape,
        classes: stream.classes,
        acc_final: final_acc,
        taa: taa(&traj)?,
        taoa: taoa(&flat_online).unwrap_or(f64::NAN),
        early_taa: early_task_taa(&evaluated_online, cfg.diagnostics.early_window).unwrap_or(f64::NAN),
        paired_run: ticket.and_then(|t| t.paired_run.clone()),
        delta_wt_c: ticket.and_then(|t| t.paired_final).map(|c| ticket_cycle_delta(final_acc, c)),
        final_active: masks.iter().map(UnitMask::active_count).collect(),
        unit_targets: plan.unit_targets.clone(),
        steps: st.global_step,
        epochs: st.global_epoch,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    writer.finish(&final_mask, &summary)?;
    let log = st.log;
    Ok(RunLog {
        config: cfg.clone(),
        summary,
        checkpoints: log.checkpoints,
        events: log.events,
        cohorts: log.cohorts,
        catchup: log.catchup,
        online: log.online,
        final_mask,
    })
}

/// Cycle protocol for one seed.
pub fn run_cycle_protocol(cfg: &RunConfig, data: &DataPair, seed: u64, out_dir: &Path) -> Result<RunLog> {
    execute(cfg, data, seed, None, out_dir)
}

/// Retrains `mask` from a fresh initialization on a derived seed, with the
/// mask frozen and the same stream and epoch budget as the cycle run.
pub fn run_winning_ticket(
    cfg: &RunConfig,
    data: &DataPair,
    seed: u64,
    mask: &FinalMask,
    paired: Option<&RunSummary>,
    out_dir: &Path,
) -> Result<RunLog> {
    let spec = TicketSpec {
        mask: mask.clone(),
        paired_run: paired.map(|p| p.run_id.clone()),
        paired_final: paired.map(|p| p.acc_final),
    };
    execute(cfg, data, seed, Some(&spec), out_dir)
}

/// One row of a stress test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressRow {
    pub k: usize,
    pub seed: u64,
    pub epochs_per_cycle: usize,
    pub total_epochs: usize,
    pub grow_events: usize,
    pub taa: f64,
    pub acc_final: f64,
}

/// Repeats the cycle protocol with `K` cycles of `horizon / K` epochs each.
pub fn run_stress_test(
    cfg: &RunConfig,
    data: &DataPair,
    seed: u64,
    ks: &[usize],
    horizon: usize,
    out_dir: &Path,
) -> Result<Vec<StressRow>> {
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        if k == 0 || horizon % k != 0 {
            return Err(HarnessError::invalid(format!("stress: horizon {horizon} is not divisible by K = {k}")));
        }
        let mut c = cfg.clone();
        c.cycles = k;
        c.epochs_per_cycle = horizon / k;
        let log = run_cycle_protocol(&c, data, seed, &out_dir.join(format!("K{k}")))?;
        let cycles_with_growth = log
            .events
            .iter()
            .filter(|e| e.action == EditAction::Grow && e.cycle > 0)
            .map(|e| e.cycle)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        rows.push(StressRow {
            k,
            seed,
            epochs_per_cycle: c.epochs_per_cycle,
            total_epochs: log.summary.epochs,
            grow_events: cycles_with_growth,
            taa: log.summary.taa,
            acc_final: log.summary.acc_final,
        });
    }
    let path = out_dir.join("stress.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    write_json(&out_dir.join("stress.json"), &rows)?;
    Ok(rows)
}
