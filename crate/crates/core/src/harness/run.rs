//! Experiment drivers. Cells run on a pool of `jobs` threads; rows are
//! sorted before they are written, so the output bytes never depend on
//! scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentKind, RunConfig};
use super::results::{aggregate, format_aggregate, format_results, sort_records, verify_aggregate};
use super::{AggregateRow, Method, MetricsRecord};
use crate::baseline::altproj_lowrank_sparse;
use crate::covmodel::run_trial;
use crate::error::{Error, Result};
use crate::markov::{
    build_structured_pair, empirical_frequency, plugin_transition, simulate_trajectory, transfer_markov_estimate,
    write_trajectory, zero_mass_rows, StructuredPair,
};
use crate::matcore::{frob_norm, full_svd, read_matrix_file, sin_theta_distance, truncated_svd, write_matrix_file};
use crate::transfer::{
    estimate_source, incoherence_check, make_anchors, measure_coherence, transfer_altproj, Incoherence, SourceEstimate,
    TransferConfig, TransferResult,
};

pub const FAILURES_HEADER: &str = "n,trial,error";
pub const TRANSITION_HEADER: &str =
    "method,n,trial,p_err_fro,p_err_row_l1_max,max_row_sum_dev,min_entry,counts_exact,zero_mass_rows";

/// Fraction of failed cells above which a run counts as failed.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// Objective trace of one iterative fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub method: Method,
    pub n: usize,
    pub trial: usize,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRecord {
    pub n: usize,
    pub trial: usize,
    pub message: String,
}

/// Transition-matrix diagnostics for one Markov fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub method: Method,
    pub n: usize,
    pub trial: usize,
    pub p_err_fro: f64,
    pub p_err_row_l1_max: f64,
    pub max_row_sum_dev: f64,
    /// Smallest entry of the estimated transition matrix.
    pub min_entry: f64,
    /// Empirical counts add up to the number of transitions.
    pub counts_exact: bool,
    pub zero_mass_rows: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub traces: Vec<TraceRecord>,
    pub failures: Vec<FailureRecord>,
    pub transitions: Vec<TransitionRecord>,
    /// Number of `(n, trial)` cells attempted.
    pub cells: usize,
}

impl ExperimentOutput {
    pub fn failure_fraction(&self) -> f64 {
        if self.cells == 0 {
            0.0
        } else {
            self.failures.len() as f64 / self.cells as f64
        }
    }

    pub fn too_many_failures(&self) -> bool {
        self.failure_fraction() > MAX_FAILURE_FRACTION
    }
}

struct CellOutput {
    rows: Vec<MetricsRecord>,
    traces: Vec<TraceRecord>,
    transitions: Vec<TransitionRecord>,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

fn collect(cells: Vec<((usize, usize), Result<CellOutput>)>) -> ExperimentOutput {
    let mut out = ExperimentOutput {
        cells: cells.len(),
        ..ExperimentOutput::default()
    };
    for ((n, trial), res) in cells {
        match res {
            Ok(c) => {
                out.rows.extend(c.rows);
                out.traces.extend(c.traces);
                out.transitions.extend(c.transitions);
            }
            Err(e) => {
                log::warn!("cell n={n} trial={trial} failed: {e}");
                out.failures.push(FailureRecord {
                    n,
                    trial,
                    message: e.to_string(),
                });
            }
        }
    }
    sort_records(&mut out.rows);
    out.traces.sort_by_key(|t| (t.n, t.trial, t.method));
    out.transitions.sort_by_key(|t| (t.n, t.trial, t.method));
    out.failures.sort_by_key(|f| (f.n, f.trial));
    out.aggregate = aggregate(&out.rows);
    out
}

fn check_kind(cfg: &RunConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::Config(format!("expected a `{kind}` config, got `{}`", cfg.kind)));
    }
    cfg.validate()
}

/// Covariance study: every `(n2, trial)` cell generates its instance, draws
/// both sample covariances, and fits all three methods.
pub fn run_covariance_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    check_kind(cfg, ExperimentKind::Covariance)?;
    let spec = &cfg.cov;
    let cells: Vec<(usize, usize)> = spec
        .n2_grid
        .iter()
        .flat_map(|&n| (0..spec.trials).map(move |t| (n, t)))
        .collect();
    let timing = cfg.timing;
    let solver = cfg.solver;
    let results = pool(cfg.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(n, trial)| {
                log::info!("cov n2={n} trial={trial}");
                let res = run_trial(spec, n, trial, solver).map(|(mut rows, est)| {
                    let mut traces = Vec::new();
                    for (row, e) in rows.iter_mut().zip(&est) {
                        if timing {
                            row.wall_ms = e.wall_ms;
                        }
                        if !e.objective_trace.is_empty() {
                            traces.push(TraceRecord {
                                method: e.method,
                                n,
                                trial,
                                trace: e.objective_trace.clone(),
                            });
                        }
                    }
                    CellOutput {
                        rows,
                        traces,
                        transitions: Vec::new(),
                    }
                });
                ((n, trial), res)
            })
            .collect::<Vec<_>>()
    });
    let out = collect(results);
    write_outputs(&cfg.out, &out, false)?;
    Ok(out)
}

fn markov_cell(
    pair: &StructuredPair,
    src: &SourceEstimate,
    cfg: &RunConfig,
    n: usize,
    trial: usize,
    seed: u64,
) -> Result<CellOutput> {
    let spec = &cfg.markov;
    let p2 = spec.p2;
    let path = simulate_trajectory(&pair.target, n + 1, seed);
    if cfg.dump_trajectories {
        write_text(
            &cfg.out.join("trajectories").join(format!("target_n{n}_t{trial}.txt")),
            &write_trajectory(&path, p2, seed),
        )?;
    }
    let f2 = empirical_frequency(&path, p2)?;
    let counts_exact = f2.total_is_exact();

    let clock = Instant::now();
    let tcfg = TransferConfig {
        tolerance: cfg.solver.tolerance,
        max_iterations: cfg.solver.max_iterations,
        ..TransferConfig::new(spec.rank_increment, spec.sparse_edits)
    };
    let tr = transfer_markov_estimate(&f2, src, &tcfg)?;
    let tr_ms = crate::covmodel::elapsed_ms(clock);
    let clock = Instant::now();
    let nt = altproj_lowrank_sparse(
        f2.values(),
        spec.r2(),
        spec.sparse_edits,
        cfg.solver.tolerance,
        cfg.solver.max_iterations,
    )?;
    let nt_f = &nt.l_hat + &nt.s_hat;
    let nt_p = plugin_transition(&nt_f)?;
    let nt_ms = crate::covmodel::elapsed_ms(clock);

    let p_true = pair.target.transition();
    let r2 = spec.r2();
    let fits = [
        (Method::Transfer, &tr.fit.l_hat2.value, &tr.fit.s_hat2, &tr.f_hat, &tr.p_hat, tr.fit.iterations, tr.fit.converged, &tr.fit.objective_trace, tr_ms),
        (Method::Nontransfer, &nt.l_hat, &nt.s_hat, &nt_f, &nt_p, nt.iterations, nt.converged, &nt.objective_trace, nt_ms),
    ];
    let mut out = CellOutput {
        rows: Vec::new(),
        traces: Vec::new(),
        transitions: Vec::new(),
    };
    for (method, l, s, f, p, iterations, converged, trace, ms) in fits {
        let u_hat = truncated_svd(l, r2)?.u;
        out.rows.push(MetricsRecord {
            experiment: "markov".into(),
            method,
            n,
            trial,
            err_l_fro: frob_norm(&(l - &pair.l2)),
            err_s_fro: frob_norm(&(s - &pair.s2)),
            err_theta_fro: frob_norm(&(f - pair.f2.values())),
            sin_theta: sin_theta_distance(&pair.u2, &u_hat)?,
            iterations,
            converged,
            wall_ms: if cfg.timing { ms } else { 0.0 },
        });
        let diff = p - p_true;
        let row_l1 = (0..p2).map(|i| diff.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let row_dev = p.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        out.transitions.push(TransitionRecord {
            method,
            n,
            trial,
            p_err_fro: frob_norm(&diff),
            p_err_row_l1_max: row_l1,
            max_row_sum_dev: row_dev,
            min_entry: p.as_slice().iter().copied().fold(f64::INFINITY, f64::min),
            counts_exact,
            zero_mass_rows: zero_mass_rows(f).len(),
        });
        out.traces.push(TraceRecord {
            method,
            n,
            trial,
            trace: trace.clone(),
        });
    }
    Ok(out)
}

/// Markov study: one structured pair; per trial a source trajectory and a
/// target trajectory for every length in the grid. The trajectory for cell
/// `c` is seeded with `seed ^ c`, where the source of trial `t` is cell
/// `t * (g + 1)` and its `k`-th target length is cell `t * (g + 1) + k + 1`
/// for a grid of `g` lengths.
pub fn run_markov_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    check_kind(cfg, ExperimentKind::Markov)?;
    let spec = &cfg.markov;
    let pair = build_structured_pair(spec)?;
    log::info!(
        "pair built: coherence {:.3}, sparse bound {}, structure violation {:e}",
        pair.coherence,
        if pair.sparse_bound_holds { "holds" } else { "does not hold" },
        pair.structure_violation
    );
    let stride = spec.n2.len() as u64 + 1;
    let trials: Vec<usize> = (0..cfg.markov_trials).collect();
    let results = pool(cfg.jobs)?.install(|| {
        trials
            .par_iter()
            .flat_map_iter(|&trial| {
                let base = trial as u64 * stride;
                let src_seed = spec.seed ^ base;
                let src = (|| {
                    let path = simulate_trajectory(&pair.source, spec.n1 + 1, src_seed);
                    if cfg.dump_trajectories {
                        write_text(
                            &cfg.out.join("trajectories").join(format!("source_t{trial}.txt")),
                            &write_trajectory(&path, spec.p1, src_seed),
                        )?;
                    }
                    let f1 = empirical_frequency(&path, spec.p1)?;
                    estimate_source(f1.values(), spec.rank, 0)
                })();
                spec.n2
                    .iter()
                    .enumerate()
                    .map(|(k, &n)| {
                        log::info!("markov n2={n} trial={trial}");
                        let res = match &src {
                            Ok(src) => markov_cell(&pair, src, cfg, n, trial, spec.seed ^ (base + k as u64 + 1)),
                            Err(e) => Err(Error::Construction(format!("source estimate failed: {e}"))),
                        };
                        ((n, trial), res)
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    });
    let out = collect(results);
    write_outputs(&cfg.out, &out, true)?;
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn format_failures(failures: &[FailureRecord]) -> String {
    let mut out = String::from(FAILURES_HEADER);
    out.push('\n');
    for f in failures {
        let msg = f.message.replace([',', '\n'], ";");
        let _ = writeln!(out, "{},{},{msg}", f.n, f.trial);
    }
    out
}

pub fn format_transitions(rows: &[TransitionRecord]) -> String {
    let mut out = String::from(TRANSITION_HEADER);
    out.push('\n');
    for t in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            t.method,
            t.n,
            t.trial,
            t.p_err_fro,
            t.p_err_row_l1_max,
            t.max_row_sum_dev,
            t.min_entry,
            t.counts_exact,
            t.zero_mass_rows
        );
    }
    out
}

/// Writes `results.csv`, `aggregate.csv`, `failures.csv` and, for Markov
/// runs, `markov_transition.csv`, then re-reads the first two and checks
/// the aggregate against the rows.
pub fn write_outputs(dir: &Path, out: &ExperimentOutput, markov: bool) -> Result<()> {
    let results = format_results(&out.rows);
    let agg = format_aggregate(&out.aggregate);
    write_text(&dir.join("results.csv"), &results)?;
    write_text(&dir.join("aggregate.csv"), &agg)?;
    write_text(&dir.join("failures.csv"), &format_failures(&out.failures))?;
    if markov {
        write_text(&dir.join("markov_transition.csv"), &format_transitions(&out.transitions))?;
    }
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    };
    verify_aggregate(&read("results.csv")?, &read("aggregate.csv")?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutput {
    pub fit: TransferResult,
    pub anchor_rank: usize,
    pub coherence: f64,
    pub incoherence: Option<Incoherence>,
}

pub fn format_diagnostics(d: &DenoiseOutput, cfg: &RunConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "iterations = {}", d.fit.iterations);
    let _ = writeln!(out, "converged = {}", d.fit.converged);
    let _ = writeln!(out, "anchor_rank = {}", d.anchor_rank);
    let _ = writeln!(out, "rank_increment = {}", cfg.denoise.rank_increment);
    let _ = writeln!(out, "edit_budget = {}", cfg.denoise.edit_budget);
    let _ = writeln!(out, "coherence = {}", d.coherence);
    if let Some(inc) = d.incoherence {
        let _ = writeln!(out, "incoherence_mu = {}", cfg.denoise.incoherence_mu.unwrap_or(f64::NAN));
        let _ = writeln!(out, "incoherence_passes = {}", inc.passes);
    }
    let trace: Vec<String> = d.fit.objective_trace.iter().map(|x| x.to_string()).collect();
    let _ = writeln!(out, "objective_trace = {}", trace.join(" "));
    out
}

/// Denoises the matrix in `y2` using a source read from `l1`/`s1` or
/// estimated from `y1`; writes `L_hat.txt`, `S_hat.txt` and
/// `diagnostics.txt`.
pub fn denoise_file(cfg: &RunConfig) -> Result<DenoiseOutput> {
    check_kind(cfg, ExperimentKind::Denoise)?;
    let d = &cfg.denoise;
    let y2 = read_matrix_file(d.y2.as_deref().expect("validated"))?;
    let src = match (&d.l1, &d.s1, &d.y1) {
        (Some(l1), Some(s1), _) => {
            let l = read_matrix_file(l1)?;
            let s = read_matrix_file(s1)?;
            let rank = match d.rank {
                Some(r) => r,
                None => full_svd(&l)?.rank(),
            };
            SourceEstimate::from_parts(l, s, rank)?
        }
        (_, _, Some(y1)) => estimate_source(&read_matrix_file(y1)?, d.rank.expect("validated"), d.sparsity)?,
        _ => unreachable!("validated"),
    };
    let (basis, s0) = make_anchors(&src, y2.rows(), y2.cols(), d.rank_increment)?;
    let tcfg = TransferConfig {
        tolerance: cfg.solver.tolerance,
        max_iterations: cfg.solver.max_iterations,
        incoherence_mu: d.incoherence_mu,
        ..TransferConfig::new(d.rank_increment, d.edit_budget)
    };
    let fit = transfer_altproj(&y2, &basis, &s0, &tcfg)?;
    let coherence = measure_coherence(&fit.l_hat2.value)?;
    let incoherence = match d.incoherence_mu {
        Some(mu) => Some(incoherence_check(&fit.l_hat2, mu)?),
        None => None,
    };
    let out = DenoiseOutput {
        anchor_rank: fit.l_hat2.anchor_rank(),
        fit,
        coherence,
        incoherence,
    };
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_matrix_file(&cfg.out.join("L_hat.txt"), &out.fit.l_hat2.value)?;
    write_matrix_file(&cfg.out.join("S_hat.txt"), &out.fit.s_hat2)?;
    write_text(&cfg.out.join("diagnostics.txt"), &format_diagnostics(&out, cfg))?;
    Ok(out)
}

/// Mean of a metric over rows of one method and `n`.
pub fn mean_metric(rows: &[MetricsRecord], method: Method, n: usize, metric: impl Fn(&MetricsRecord) -> f64) -> f64 {
    let vals: Vec<f64> = rows.iter().filter(|r| r.method == method && r.n == n).map(metric).collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}
