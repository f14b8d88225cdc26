//! The training loop: per-layer projector refresh, optimizer step, metric
//! emission and checkpointing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sara_core::matcore::{set_deterministic, svd, Matrix, RngStream};
use sara_core::metrics::{anchor_overlap, subspace_overlap, update_spectrum, ProjectorRecord};
use sara_core::objectives::{GradientSample, Objective};
use sara_core::optimizers::{step_dispatch, HyperParams, OptimizerKind, OptimizerState, StepInputs};
use sara_core::subspace::{is_refresh_step, refresh_projector, select_dominant, singular_weights, Projector, SelectorKind, SelectorSpec};
use sara_core::theory::{delta_of_weights, horizon_threshold, schedule_from_theorem, Schedule, TheoryParams};

use crate::artifacts::{
    create_dir, load_checkpoint, load_checkpoint_weights, metrics_to_csv, projector_sidecar, read_metrics,
    read_projector_basis, read_projector_log, save_checkpoint, write_json, write_projector_basis, write_projector_log,
    write_text, Checkpoint, CheckpointManifest, MetricRow, ProjectorLogEntry, ALL_LAYERS, CONFIG_FILE, METRICS_FILE,
    SUMMARY_FILE,
};
use crate::config::{BuiltObjective, RunConfig};
use crate::error::{HarnessError, Result};

pub const LOSS: &str = "loss";
pub const SAMPLE_LOSS: &str = "sample_loss";
pub const GRAD_NORM_SQ: &str = "grad_norm_sq";
pub const NOISE_NORM: &str = "noise_norm";
pub const WALL_TIME: &str = "wall_time";
pub const DELTA: &str = "delta";
pub const DELTA_APRIORI: &str = "delta_apriori";
pub const ADJACENT_OVERLAP: &str = "adjacent_overlap";
pub const ANCHOR_OVERLAP: &str = "anchor_overlap";
pub const GRADIENT_DOMINANT_OVERLAP: &str = "gradient_dominant_overlap";
pub const STABLE_RANK_PREFIX: &str = "stable_rank_from_";
pub const SCHEDULE_BETA1: &str = "schedule_beta1";
pub const SCHEDULE_TAU: &str = "schedule_tau";
pub const SCHEDULE_ETA: &str = "schedule_eta";
pub const THEORY_L: &str = "theory_L";
pub const THEORY_DELTA_GAP: &str = "theory_Delta";
pub const THEORY_SIGMA_SQ: &str = "theory_sigma_sq";
pub const THEORY_THRESHOLD: &str = "theory_threshold";

const NOISE_TAG: u64 = 0x4E01;
const SELECT_TAG: u64 = 0x5E1E;
const DELTA_TAG: u64 = 0xDE17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableRankEntry {
    pub from: u64,
    pub to: u64,
    pub layer: String,
    pub stable_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub step: u64,
    pub layer: Option<String>,
    pub message: String,
}

/// Per-run digest, derivable from the metrics CSV plus the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub objective_id: String,
    pub objective_kind: String,
    pub optimizer: OptimizerKind,
    pub selector: SelectorKind,
    pub seed: u64,
    pub total_steps: u64,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub grad_norm_sq_min: Option<f64>,
    pub grad_norm_sq_mean: Option<f64>,
    pub grad_norm_sq_first_decile_mean: Option<f64>,
    pub grad_norm_sq_last_decile_mean: Option<f64>,
    pub delta_apriori: Option<f64>,
    pub delta_running_min: Option<f64>,
    pub refreshes: BTreeMap<String, u64>,
    pub mean_adjacent_overlap: BTreeMap<String, f64>,
    pub mean_anchor_overlap: BTreeMap<String, f64>,
    pub mean_gradient_dominant_overlap: BTreeMap<String, f64>,
    pub checkpoint_stable_ranks: Vec<StableRankEntry>,
    pub schedule: Option<Schedule>,
    pub failure: Option<RunFailure>,
}

impl RunSummary {
    pub fn load(path: &Path) -> Result<Self> {
        crate::artifacts::read_json(path)
    }

    /// Mean over layers of the per-layer mean adjacent overlap.
    pub fn overall_adjacent_overlap(&self) -> Option<f64> {
        mean(self.mean_adjacent_overlap.values().copied())
    }

    pub fn overall_anchor_overlap(&self) -> Option<f64> {
        mean(self.mean_anchor_overlap.values().copied())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn per_layer_mean(rows: &[MetricRow], metric: &str) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        let e = acc.entry(r.layer.clone()).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn global_rows<'a>(rows: &'a [MetricRow], metric: &'a str) -> impl Iterator<Item = &'a MetricRow> + 'a {
    rows.iter().filter(move |r| r.metric == metric && r.layer == ALL_LAYERS)
}

/// Recomputes a summary from metric rows; the config supplies identity fields.
pub fn summarize(config: &RunConfig, rows: &[MetricRow]) -> RunSummary {
    let t = config.total_steps;
    let global = |metric: &'static str| global_rows(rows, metric);
    let loss_at = |step: u64| global(LOSS).find(|r| r.step == step).map(|r| r.value);
    let grads: Vec<&MetricRow> = global(GRAD_NORM_SQ).collect();
    let decile = t / 10;
    let in_steps = |lo: u64, hi: u64| mean(grads.iter().filter(|r| r.step >= lo && r.step < hi).map(|r| r.value));
    let (first, last) = if decile > 0 {
        (in_steps(0, decile), in_steps(t - decile, t))
    } else {
        (None, None)
    };
    let mut refreshes = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == DELTA) {
        *refreshes.entry(r.layer.clone()).or_insert(0) += 1;
    }
    let single = |metric: &'static str| global(metric).next().map(|r| r.value);
    let schedule = match (single(SCHEDULE_BETA1), single(SCHEDULE_TAU), single(SCHEDULE_ETA)) {
        (Some(beta1), Some(tau), Some(eta)) => Some(Schedule {
            beta1,
            tau: tau as u64,
            eta,
        }),
        _ => None,
    };
    let checkpoint_stable_ranks = rows
        .iter()
        .filter_map(|r| {
            let from = r.metric.strip_prefix(STABLE_RANK_PREFIX)?.parse().ok()?;
            Some(StableRankEntry {
                from,
                to: r.step,
                layer: r.layer.clone(),
                stable_rank: r.value,
            })
        })
        .collect();
    RunSummary {
        config_hash: config.hash(),
        objective_id: config.objective_id(),
        objective_kind: config.objective.kind().to_string(),
        optimizer: config.optimizer,
        selector: config.selector.kind,
        seed: config.seed,
        total_steps: t,
        initial_loss: loss_at(0),
        final_loss: global(LOSS).max_by_key(|r| r.step).map(|r| r.value),
        grad_norm_sq_min: grads.iter().map(|r| r.value).reduce(f64::min),
        grad_norm_sq_mean: mean(grads.iter().map(|r| r.value)),
        grad_norm_sq_first_decile_mean: first,
        grad_norm_sq_last_decile_mean: last,
        delta_apriori: single(DELTA_APRIORI),
        delta_running_min: rows.iter().filter(|r| r.metric == DELTA).map(|r| r.value).reduce(f64::min),
        refreshes,
        mean_adjacent_overlap: per_layer_mean(rows, ADJACENT_OVERLAP),
        mean_anchor_overlap: per_layer_mean(rows, ANCHOR_OVERLAP),
        mean_gradient_dominant_overlap: per_layer_mean(rows, GRADIENT_DOMINANT_OVERLAP),
        checkpoint_stable_ranks,
        schedule,
        failure: None,
    }
}

/// Summary and the directory holding the run's artifacts.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub dir: PathBuf,
}

pub fn run_experiment(config: &RunConfig) -> Result<RunOutcome> {
    execute(config, None)
}

/// Continues a run from the checkpoint at `from_step` inside the config's
/// output directory; artifacts end up identical to an uninterrupted run.
pub fn resume_experiment(config: &RunConfig, from_step: u64) -> Result<RunOutcome> {
    execute(config, Some(from_step))
}

struct Failure {
    step: u64,
    layer: Option<String>,
    error: HarnessError,
}

fn fail<E: Into<HarnessError>>(step: u64, layer: Option<&str>) -> impl FnOnce(E) -> Failure {
    let layer = layer.map(str::to_string);
    move |e| Failure {
        step,
        layer,
        error: e.into(),
    }
}

fn execute(config: &RunConfig, resume: Option<u64>) -> Result<RunOutcome> {
    if config.deterministic {
        set_deterministic(true);
    }
    let built = config.objective.build(&config.noise)?;
    let shapes = built.as_dyn().layer_shapes();
    config.validate(&shapes)?;
    let dir = config.output_dir();
    create_dir(&dir.join("projectors"))?;
    let mut stored = config.clone();
    stored.output_dir = None;
    write_json(&dir.join(CONFIG_FILE), &stored)?;

    let mut trainer = Trainer::new(config, &built, dir.clone());
    match trainer.run(resume) {
        Ok(()) => {
            let summary = summarize(config, &trainer.rows);
            write_json(&dir.join(SUMMARY_FILE), &summary)?;
            Ok(RunOutcome { summary, dir })
        }
        Err(f) => {
            let message = f.error.to_string();
            let mut stub = summarize(config, &trainer.rows);
            stub.failure = Some(RunFailure {
                step: f.step,
                layer: f.layer.clone(),
                message: message.clone(),
            });
            write_json(&dir.join(SUMMARY_FILE), &stub)?;
            Err(HarnessError::RunFailed {
                step: f.step,
                layer: f.layer,
                message,
            })
        }
    }
}

struct LayerOutput {
    x: Matrix,
    refreshed: Option<Projector>,
    rows: Vec<MetricRow>,
}

struct Trainer<'a> {
    config: &'a RunConfig,
    built: &'a BuiltObjective,
    names: Vec<String>,
    dir: PathBuf,
    rows: Vec<MetricRow>,
    log: Vec<ProjectorLogEntry>,
    started: Instant,
}

impl<'a> Trainer<'a> {
    fn new(config: &'a RunConfig, built: &'a BuiltObjective, dir: PathBuf) -> Self {
        Self {
            config,
            built,
            names: built.as_dyn().layer_names(),
            dir,
            rows: Vec::new(),
            log: Vec::new(),
            started: Instant::now(),
        }
    }

    fn objective(&self) -> &'a dyn Objective {
        self.built.as_dyn()
    }

    fn sample(&self, x: &[Matrix], step: u64) -> sara_core::Result<GradientSample> {
        let mut rng = RngStream::derive(self.config.seed, &[NOISE_TAG, step]);
        self.objective().sample(x, step, &mut rng)
    }

    fn push(&mut self, step: u64, layer: &str, metric: &str, value: f64) {
        self.rows.push(MetricRow::new(step, layer, metric, value));
    }

    fn run(&mut self, resume: Option<u64>) -> std::result::Result<(), Failure> {
        let config = self.config;
        let kind = config.optimizer;
        let low_rank = kind.is_low_rank();
        let total = config.total_steps;
        let shapes = self.objective().layer_shapes();
        let x0 = self.objective().initial_params(config.seed);

        let mut selector = config.selector;
        let mut hp = HyperParams {
            rank: selector.rank,
            refresh_period: selector.refresh_period,
            ..config.hyper
        };

        let mut setup_rows = Vec::new();
        if low_rank {
            let s0 = self.sample(&x0, 0).map_err(fail(0, None))?;
            let mut apriori = f64::INFINITY;
            for (l, g) in s0.grads.iter().enumerate() {
                let d = self.delta_for(selector.kind, g, l, 0).map_err(fail(0, Some(&self.names[l])))?;
                apriori = apriori.min(d);
            }
            setup_rows.push(MetricRow::new(0, ALL_LAYERS, DELTA_APRIORI, apriori));
            if config.theory_schedule {
                let BuiltObjective::Quadratic(q) = self.built else {
                    return Err(fail(0, None)(HarnessError::Config("theory_schedule needs a quadratic".into())));
                };
                let params = TheoryParams {
                    l: q.smoothness(),
                    delta_gap: q.initial_gap(&x0).map_err(fail(0, None))?,
                    sigma_sq: q.noise().sigma_sq(),
                    delta: apriori,
                    t: total,
                };
                let threshold = horizon_threshold(&params).map_err(fail(0, None))?;
                let sched = schedule_from_theorem(&params).map_err(fail(0, None))?;
                hp.eta = sched.eta;
                hp.beta1 = sched.beta1;
                hp.refresh_period = sched.tau;
                selector.refresh_period = sched.tau;
                for (metric, v) in [
                    (THEORY_L, params.l),
                    (THEORY_DELTA_GAP, params.delta_gap),
                    (THEORY_SIGMA_SQ, params.sigma_sq),
                    (THEORY_THRESHOLD, threshold),
                    (SCHEDULE_BETA1, sched.beta1),
                    (SCHEDULE_TAU, sched.tau as f64),
                    (SCHEDULE_ETA, sched.eta),
                ] {
                    setup_rows.push(MetricRow::new(0, ALL_LAYERS, metric, v));
                }
                if let Some(a) = config.anchor_step {
                    if a % sched.tau != 0 || a >= total {
                        return Err(fail(0, None)(HarnessError::Config(format!(
                            "anchor_step {a} is not a refresh step under the derived period {}",
                            sched.tau
                        ))));
                    }
                }
            }
        }
        check_hyper(kind, &hp).map_err(fail(0, None))?;

        let start = resume.unwrap_or(0);
        let (mut x, mut states, mut projectors, mut gbases) = match resume {
            None => {
                let states = shapes
                    .iter()
                    .map(|&(m, n)| OptimizerState::init(kind, m, n, selector.rank))
                    .collect::<Vec<_>>();
                let projectors: Vec<Option<Projector>> = shapes
                    .iter()
                    .map(|&(m, _)| (!low_rank).then(|| Projector::identity(m, 0)))
                    .collect();
                (x0, states, projectors, vec![None; shapes.len()])
            }
            Some(s) => self.restore(s, low_rank, &shapes).map_err(fail(s, None))?,
        };
        if start == 0 {
            self.rows.extend(setup_rows);
        }
        if start > total {
            return Err(fail(start, None)(HarnessError::Config(format!(
                "resume step {start} exceeds total_steps {total}"
            ))));
        }

        for t in start..=total {
            if config.checkpoint_steps.contains(&t) {
                self.checkpoint(t, &x, &states, &projectors, &gbases).map_err(fail(t, None))?;
            }
            let metric_step = t % config.metric_cadence == 0 || t == total;
            if t == total && !metric_step {
                break;
            }
            let sample = self.sample(&x, t).map_err(fail(t, None))?;
            if metric_step {
                self.record_metrics(t, &x, &sample, low_rank.then_some(selector.rank), &mut gbases)?;
            }
            if t == total {
                break;
            }
            let hp_t = HyperParams {
                eta: hp.eta * config.lr_schedule.multiplier(t),
                ..hp
            };
            let refresh = low_rank && is_refresh_step(t, selector.refresh_period);
            let outputs: Vec<std::result::Result<LayerOutput, Failure>> = x
                .par_iter()
                .zip(states.par_iter_mut())
                .zip(projectors.par_iter())
                .zip(sample.grads.par_iter())
                .enumerate()
                .map(|(l, (((xl, st), pl), gl))| {
                    self.step_layer(l, t, refresh, &selector, &hp_t, xl, gl, st, pl.as_ref())
                        .map_err(fail(t, Some(&self.names[l])))
                })
                .collect();
            for (l, out) in outputs.into_iter().enumerate() {
                let out = out?;
                x[l] = out.x;
                self.rows.extend(out.rows);
                if let Some(p) = out.refreshed {
                    let entry = ProjectorLogEntry {
                        step: t,
                        layer: self.names[l].clone(),
                        layer_index: l,
                        rows: p.basis.rows(),
                        cols: p.basis.cols(),
                        source_indices: p.source_indices.clone(),
                        file: projector_sidecar(l, t),
                    };
                    write_projector_basis(&self.dir, &entry, &p.basis).map_err(fail(t, Some(&self.names[l])))?;
                    self.log.push(entry);
                    projectors[l] = Some(p);
                }
            }
        }

        self.finish().map_err(fail(total, None))
    }

    #[allow(clippy::too_many_arguments)]
    fn step_layer(
        &self,
        l: usize,
        t: u64,
        refresh: bool,
        selector: &SelectorSpec,
        hp: &HyperParams,
        x: &Matrix,
        g: &Matrix,
        state: &mut OptimizerState,
        prev: Option<&Projector>,
    ) -> Result<LayerOutput> {
        let name = &self.names[l];
        let mut rows = Vec::new();
        let fresh = if refresh {
            let mut rng = RngStream::derive(self.config.seed, &[SELECT_TAG, l as u64, t]);
            let p = refresh_projector(selector, g, prev, t, &mut rng)?;
            rows.push(MetricRow::new(t, name, DELTA, self.delta_for(selector.kind, g, l, t)?));
            if let Some(old) = prev {
                rows.push(MetricRow::new(t, name, ADJACENT_OVERLAP, subspace_overlap(&old.basis, &p.basis)?));
            }
            Some(p)
        } else {
            None
        };
        let active = fresh.as_ref().or(prev).ok_or(sara_core::Error::MissingProjector { step: t })?;
        let input = StepInputs {
            x,
            g,
            projector: active,
            prev_projector: prev,
            refreshed: refresh && prev.is_some(),
        };
        let new_x = step_dispatch(self.config.optimizer, input, state, hp)?;
        Ok(LayerOutput {
            x: new_x,
            refreshed: fresh,
            rows,
        })
    }

    /// Minimum inclusion probability of the selector's sampling law at `g`.
    fn delta_for(&self, kind: SelectorKind, g: &Matrix, l: usize, t: u64) -> sara_core::Result<f64> {
        let r = self.config.selector.rank;
        let m = g.rows();
        Ok(match kind {
            SelectorKind::Dominant => {
                if r == m {
                    1.0
                } else {
                    0.0
                }
            }
            SelectorKind::RandomOrthonormal => r as f64 / m as f64,
            SelectorKind::Sara => {
                let w = singular_weights(&svd(g)?.s)?;
                let mut rng = RngStream::derive(self.config.seed, &[DELTA_TAG, l as u64, t]);
                delta_of_weights(&w, r, self.config.delta_trials, &mut rng)?
            }
        })
    }

    fn record_metrics(
        &mut self,
        t: u64,
        x: &[Matrix],
        sample: &GradientSample,
        rank: Option<usize>,
        gbases: &mut [Option<Matrix>],
    ) -> std::result::Result<(), Failure> {
        let obj = self.objective();
        let loss = obj.loss(x).map_err(fail(t, None))?;
        let full = obj.gradient(x).map_err(fail(t, None))?;
        self.push(t, ALL_LAYERS, LOSS, loss);
        self.push(t, ALL_LAYERS, SAMPLE_LOSS, sample.loss);
        self.push(t, ALL_LAYERS, GRAD_NORM_SQ, full.iter().map(Matrix::sum_sq).sum());
        for l in 0..full.len() {
            let name = self.names[l].clone();
            self.push(t, &name, GRAD_NORM_SQ, full[l].sum_sq());
            let noise = sample.grads[l].sub(&full[l]).map_err(fail(t, Some(&name)))?;
            self.push(t, &name, NOISE_NORM, noise.frobenius_norm());
            if let (Some(r), true) = (rank, self.config.gradient_overlap) {
                let basis = select_dominant(&sample.grads[l], r, t).map_err(fail(t, Some(&name)))?.basis;
                if let Some(prev) = &gbases[l] {
                    let v = subspace_overlap(prev, &basis).map_err(fail(t, Some(&name)))?;
                    self.push(t, &name, GRADIENT_DOMINANT_OVERLAP, v);
                }
                gbases[l] = Some(basis);
            }
        }
        let wall = if self.config.deterministic {
            0.0
        } else {
            self.started.elapsed().as_secs_f64()
        };
        self.push(t, ALL_LAYERS, WALL_TIME, wall);
        Ok(())
    }

    fn checkpoint(
        &self,
        step: u64,
        x: &[Matrix],
        states: &[OptimizerState],
        projectors: &[Option<Projector>],
        gbases: &[Option<Matrix>],
    ) -> Result<()> {
        let low_rank = self.config.optimizer.is_low_rank();
        let kept: Vec<Option<Projector>> = projectors.iter().map(|p| p.clone().filter(|_| low_rank)).collect();
        let ck = Checkpoint {
            manifest: CheckpointManifest {
                step,
                config_hash: self.config.hash(),
                optimizer: self.config.optimizer,
                layers: self.names.clone(),
                state_step_counts: states.iter().map(OptimizerState::step_count).collect(),
                projector_steps: kept.iter().map(|p| p.as_ref().map(|p| p.created_at_step)).collect(),
                projector_indices: kept.iter().map(|p| p.as_ref().and_then(|p| p.source_indices.clone())).collect(),
                has_gradient_basis: gbases.iter().map(Option::is_some).collect(),
            },
            weights: x.to_vec(),
            states: states.to_vec(),
            projectors: kept,
            gradient_bases: gbases.to_vec(),
        };
        save_checkpoint(&self.dir, &ck)
    }

    #[allow(clippy::type_complexity)]
    fn restore(
        &mut self,
        step: u64,
        low_rank: bool,
        shapes: &[(usize, usize)],
    ) -> Result<(Vec<Matrix>, Vec<OptimizerState>, Vec<Option<Projector>>, Vec<Option<Matrix>>)> {
        let ck = load_checkpoint(&self.dir, step)?;
        if ck.manifest.config_hash != self.config.hash() {
            return Err(HarnessError::Config(format!(
                "checkpoint at step {step} was written by config {}, not {}",
                ck.manifest.config_hash,
                self.config.hash()
            )));
        }
        self.rows = read_metrics(&self.dir)?
            .into_iter()
            .filter(|r| r.step < step && r.metric != ANCHOR_OVERLAP && !r.metric.starts_with(STABLE_RANK_PREFIX))
            .collect();
        self.log = read_projector_log(&self.dir)?.into_iter().filter(|e| e.step < step).collect();
        let projectors = if low_rank {
            ck.projectors
        } else {
            shapes.iter().map(|&(m, _)| Some(Projector::identity(m, 0))).collect()
        };
        Ok((ck.weights, ck.states, projectors, ck.gradient_bases))
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(anchor) = self.config.anchor_step {
            let records = self
                .log
                .iter()
                .map(|e| {
                    Ok(ProjectorRecord {
                        step: e.step,
                        layer: e.layer.clone(),
                        basis: read_projector_basis(&self.dir, e)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            for p in anchor_overlap(&records, anchor)?.points {
                self.push(p.step, &p.layer, ANCHOR_OVERLAP, p.value);
            }
        }
        for w in self.config.checkpoint_steps.windows(2) {
            let (names, a) = load_checkpoint_weights(&self.dir, w[0])?;
            let (_, b) = load_checkpoint_weights(&self.dir, w[1])?;
            for rep in update_spectrum(&names, &a, &b)? {
                self.push(w[1], &rep.layer, &format!("{STABLE_RANK_PREFIX}{}", w[0]), rep.stable_rank);
            }
        }
        self.rows.sort_by_key(|r| r.step);
        write_text(&self.dir.join(METRICS_FILE), &metrics_to_csv(&self.rows))?;
        write_projector_log(&self.dir, &self.log)
    }
}

fn check_hyper(kind: OptimizerKind, hp: &HyperParams) -> sara_core::Result<()> {
    if kind == OptimizerKind::Msgd {
        if !(hp.eta > 0.0 && hp.eta.is_finite()) || !(hp.beta1 > 0.0 && hp.beta1 <= 1.0) {
            return Err(sara_core::Error::InvalidParameter(format!(
                "msgd needs eta > 0 and beta1 in (0, 1], got eta = {}, beta1 = {}",
                hp.eta, hp.beta1
            )));
        }
        Ok(())
    } else {
        hp.validate()
    }
}
