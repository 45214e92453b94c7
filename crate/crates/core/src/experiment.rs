//! Seeded Monte-Carlo sweeps over surface size, radar threshold,
//! self-interference level and baseline mode.
//!
//! Every (cell, seed) job is independent. Jobs run on the rayon pool when the
//! `parallel` feature is enabled and sequentially otherwise. Results reach the
//! output files through one writer thread that emits rows in job order, so a
//! rerun with the same master seed reproduces every file except timings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::orchestrator::{run, Mode, RunOptions, RunReport, Termination};
use crate::scenario::generate_channels;

/// Header of `results.csv`.
pub const RESULTS_HEADER: &str =
    "cell_id,seed,mode,M,Nt,Nr,K,gamma_r_db,si_db,sum_rate,sinr_radar_db,outer_iters,wall_ms,status";

const CHANNEL_TAG: u64 = 0x6368_616e;
const PHASE_TAG: u64 = 0x7068_6173;

/// Sweep axes. An empty axis keeps the base configuration's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub m: Vec<usize>,
    pub gamma_db: Vec<f64>,
    pub si_db: Vec<f64>,
    pub modes: Vec<Mode>,
    pub seeds: usize,
    pub master_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            m: Vec::new(),
            gamma_db: Vec::new(),
            si_db: Vec::new(),
            modes: vec![Mode::Full],
            seeds: 20,
            master_seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub mode: Mode,
    pub m: usize,
    pub gamma_db: f64,
    pub si_db: f64,
}

impl Cell {
    pub fn config(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone().with_ris(self.m);
        cfg.radar_threshold_db = self.gamma_db;
        cfg.si_path_loss_db = self.si_db;
        cfg
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config {
                field: "seeds".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.modes.is_empty() {
            return Err(Error::Config {
                field: "mode".into(),
                reason: "at least one mode is required".into(),
            });
        }
        if let Some(&m) = self.m.iter().find(|&&m| m == 0) {
            return Err(Error::Config {
                field: "m".into(),
                reason: format!("surface size {m} must be at least 1"),
            });
        }
        if let Some(v) = self.gamma_db.iter().chain(&self.si_db).find(|v| !v.is_finite()) {
            return Err(Error::Config {
                field: "sweep".into(),
                reason: format!("value {v} is not finite"),
            });
        }
        Ok(())
    }

    /// Cartesian product of the axes, mode varying slowest.
    pub fn cells(&self, base: &ScenarioConfig) -> Vec<Cell> {
        let or = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let ms = if self.m.is_empty() { vec![base.n_ris] } else { self.m.clone() };
        let gammas = or(&self.gamma_db, base.radar_threshold_db);
        let sis = or(&self.si_db, base.si_path_loss_db);
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &m in &ms {
                for &gamma_db in &gammas {
                    for &si_db in &sis {
                        out.push(Cell {
                            id: out.len(),
                            mode,
                            m,
                            gamma_db,
                            si_db,
                        });
                    }
                }
            }
        }
        out
    }
}

fn derive_seed(words: [u64; 4]) -> u64 {
    let mut seed = [0u8; 32];
    for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed).next_u64()
}

/// Channel seed of Monte-Carlo draw `seed`. Shared by all cells so that
/// cells are compared on the same draws.
pub fn channel_seed(master: u64, seed: u64) -> u64 {
    derive_seed([master, CHANNEL_TAG, 0, seed])
}

/// Phase seed of job (`cell`, `seed`).
pub fn phase_seed(master: u64, cell: usize, seed: u64) -> u64 {
    derive_seed([master, PHASE_TAG, cell as u64, seed])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxOuter,
    Infeasible,
    Failed,
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell_id: usize,
    pub seed: u64,
    pub mode: Mode,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(rename = "Nr")]
    pub nr: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub gamma_r_db: f64,
    pub si_db: f64,
    pub sum_rate: Option<f64>,
    pub sinr_radar_db: Option<f64>,
    pub outer_iters: Option<usize>,
    pub wall_ms: f64,
    pub status: Status,
}

impl ResultRow {
    pub fn feasible(&self) -> bool {
        matches!(self.status, Status::Converged | Status::MaxOuter)
    }
}

/// One row of `traces.csv`.
#[derive(Debug, Clone, Serialize)]
struct TraceRow {
    cell_id: usize,
    seed: u64,
    iter: usize,
    sum_rate: f64,
    sinr_radar_db: f64,
    pdd_outer_iters: usize,
    mm_iters: usize,
    admm_iters: usize,
    phase_accepted: bool,
    beamformer_accepted: bool,
    power_accepted: bool,
    user_filters_accepted: bool,
    radar_filter_accepted: bool,
    phase_ms: f64,
    beamformer_ms: f64,
    power_ms: f64,
    filters_ms: f64,
}

#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub row: ResultRow,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    /// Rayon pool; sequential when built without the `parallel` feature.
    Parallel,
    Sequential,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub base: ScenarioConfig,
    pub sweep: SweepSpec,
    pub run: RunOptions,
    pub execution: Execution,
}

/// Run one (cell, seed) job.
pub fn run_job(base: &ScenarioConfig, cell: &Cell, master: u64, seed: u64, opts: &RunOptions) -> JobOutcome {
    let cfg = cell.config(base);
    let start = Instant::now();
    let mut row = ResultRow {
        cell_id: cell.id,
        seed,
        mode: cell.mode,
        m: cfg.n_ris,
        nt: cfg.n_tx,
        nr: cfg.n_rx,
        k: cfg.n_users,
        gamma_r_db: cell.gamma_db,
        si_db: cell.si_db,
        sum_rate: None,
        sinr_radar_db: None,
        outer_iters: None,
        wall_ms: 0.0,
        status: Status::Failed,
    };
    let result = cfg.validate().and_then(|s| {
        let ch = generate_channels(&s, channel_seed(master, seed))?;
        let opts = RunOptions {
            mode: cell.mode,
            seed: phase_seed(master, cell.id, seed),
            ..*opts
        };
        run(&s, &ch, &opts)
    });
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match result {
        Ok(rep) => {
            row.sum_rate = Some(rep.final_sum_rate);
            row.sinr_radar_db = Some(rep.final_sinr_radar_db);
            row.outer_iters = Some(rep.iterations);
            row.status = match rep.termination {
                Termination::Converged => Status::Converged,
                Termination::MaxOuter => Status::MaxOuter,
            };
            JobOutcome {
                row,
                report: Some(rep),
                error: None,
            }
        }
        Err(e) => {
            row.status = if matches!(e, Error::Infeasible(_)) {
                Status::Infeasible
            } else {
                Status::Failed
            };
            log::warn!("cell {} seed {seed}: {e}", cell.id);
            JobOutcome {
                row,
                report: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Output files of a sweep.
struct Sink {
    results: csv::Writer<fs::File>,
    traces: csv::Writer<fs::File>,
    runs: PathBuf,
}

impl Sink {
    fn create(out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        let runs = out.join("runs");
        fs::create_dir_all(&runs)?;
        Ok(Sink {
            results: csv::Writer::from_path(out.join("results.csv"))?,
            traces: csv::Writer::from_path(out.join("traces.csv"))?,
            runs,
        })
    }

    fn write(&mut self, job: &JobOutcome) -> Result<()> {
        self.results.serialize(&job.row)?;
        self.results.flush()?;
        let name = format!("cell{:03}_seed{:03}.json", job.row.cell_id, job.row.seed);
        let path = self.runs.join(name);
        match &job.report {
            Some(rep) => {
                for r in &rep.records {
                    self.traces.serialize(TraceRow {
                        cell_id: job.row.cell_id,
                        seed: job.row.seed,
                        iter: r.iter,
                        sum_rate: r.sum_rate,
                        sinr_radar_db: r.sinr_radar_db,
                        pdd_outer_iters: r.pdd_outer_iters,
                        mm_iters: r.mm_iters,
                        admm_iters: r.admm_iters,
                        phase_accepted: r.accepted.phase,
                        beamformer_accepted: r.accepted.beamformer,
                        power_accepted: r.accepted.power,
                        user_filters_accepted: r.accepted.user_filters,
                        radar_filter_accepted: r.accepted.radar_filter,
                        phase_ms: r.timing.phase_ms,
                        beamformer_ms: r.timing.beamformer_ms,
                        power_ms: r.timing.power_ms,
                        filters_ms: r.timing.user_filter_ms + r.timing.radar_filter_ms,
                    })?;
                }
                self.traces.flush()?;
                fs::write(path, serde_json::to_string_pretty(rep)?)?;
            }
            None => {
                let err = serde_json::json!({ "row": job.row, "error": job.error });
                fs::write(path, serde_json::to_string_pretty(&err)?)?;
            }
        }
        Ok(())
    }
}

/// Sink that receives outcomes in any order and writes them in job order.
fn ordered_writer(mut sink: Option<Sink>, rx: mpsc::Receiver<(usize, JobOutcome)>) -> Result<Vec<JobOutcome>> {
    let mut pending = BTreeMap::new();
    let mut out = Vec::new();
    for (idx, job) in rx {
        pending.insert(idx, job);
        while let Some(job) = pending.remove(&out.len()) {
            if let Some(sink) = sink.as_mut() {
                sink.write(&job)?;
            }
            out.push(job);
        }
    }
    out.extend(pending.into_values());
    Ok(out)
}

impl Experiment {
    pub fn new(base: ScenarioConfig, sweep: SweepSpec) -> Self {
        Experiment {
            base,
            sweep,
            run: RunOptions::default(),
            execution: Execution::Parallel,
        }
    }

    fn jobs(&self) -> Vec<(Cell, u64)> {
        let cells = self.sweep.cells(&self.base);
        cells
            .iter()
            .flat_map(|c| (0..self.sweep.seeds as u64).map(move |s| (*c, s)))
            .collect()
    }

    /// Run every job, writing `results.csv`, `traces.csv`, `sweep.json` and
    /// one JSON report per run below `out` when given.
    pub fn execute(&self, out: Option<&Path>) -> Result<Vec<JobOutcome>> {
        self.sweep.validate()?;
        self.run.validate()?;
        for cell in self.sweep.cells(&self.base) {
            cell.config(&self.base).validate()?;
        }
        let sink = match out {
            Some(dir) => {
                let sink = Sink::create(dir)?;
                let meta = serde_json::json!({
                    "base": self.base,
                    "sweep": self.sweep,
                    "options": self.run,
                    "cells": self.sweep.cells(&self.base),
                });
                fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&meta)?)?;
                Some(sink)
            }
            None => None,
        };
        let jobs = self.jobs();
        let (tx, rx) = mpsc::channel();
        let writer = std::thread::spawn(move || ordered_writer(sink, rx));
        let work = |(idx, (cell, seed)): (usize, &(Cell, u64))| {
            let job = run_job(&self.base, cell, self.sweep.master_seed, *seed, &self.run);
            (idx, job)
        };
        match self.execution {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                jobs.par_iter().enumerate().map(work).for_each_with(tx, |tx, item| {
                    // The writer only stops on an I/O error, reported below.
                    let _ = tx.send(item);
                });
            }
            _ => {
                for item in jobs.iter().enumerate().map(work) {
                    let _ = tx.send(item);
                }
                drop(tx);
            }
        }
        writer.join().expect("writer thread panicked")
    }
}

/// Mean sum rate per cell over the seeds feasible in every listed cell.
/// Returns `(means, common seeds)`.
pub fn paired_means(outcomes: &[JobOutcome], cells: &[usize]) -> (Vec<f64>, Vec<u64>) {
    let rate = |cell: usize, seed: u64| {
        outcomes
            .iter()
            .find(|o| o.row.cell_id == cell && o.row.seed == seed && o.row.feasible())
            .and_then(|o| o.row.sum_rate)
    };
    let mut seeds: Vec<u64> = outcomes.iter().map(|o| o.row.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds.retain(|&s| cells.iter().all(|&c| rate(c, s).is_some()));
    let means = cells
        .iter()
        .map(|&c| {
            let total: f64 = seeds.iter().filter_map(|&s| rate(c, s)).sum();
            total / seeds.len().max(1) as f64
        })
        .collect();
    (means, seeds)
}
