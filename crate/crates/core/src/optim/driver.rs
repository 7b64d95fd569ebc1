//! Multi-seed run driver: builds a method from its parameter set, advances
//! it for a fixed budget, and captures per-iteration metrics.

use std::time::Instant;

pub use crate::constants::MethodKind;
use crate::constants::MethodParams;
use crate::error::{Error, Result};
use crate::optim::methods::{
    build_nodes, AdianaParams, AdianaPlus, DcgdPlus, DianaPlus, DianaPp, DistributedMethod,
    IsegaPlus,
};
use crate::problem::DistributedProblem;
use crate::sampling::Sampling;
use crate::Vector;

/// Guard factor: a run aborts when the residual exceeds this multiple of its
/// initial value (a mis-set step size).
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// One run cell: method, per-node samplings, theory parameters, budget.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: MethodKind,
    pub samplings: Vec<Sampling>,
    pub master_sampling: Option<Sampling>,
    pub params: MethodParams,
    pub x0: Vector,
    pub iters: usize,
    /// Reference solution; enables the residual column and early stopping.
    pub xstar: Option<Vector>,
    /// Reference value; enables the f-gap column.
    pub fstar: Option<f64>,
    /// Early-stop threshold on the residual (or the f-gap when no `xstar`).
    pub target: Option<f64>,
    /// Evaluate the objective each iteration (costs one data pass).
    pub record_objective: bool,
}

impl RunConfig {
    pub fn new(
        method: MethodKind,
        samplings: Vec<Sampling>,
        params: MethodParams,
        x0: Vector,
        iters: usize,
    ) -> Self {
        Self {
            method,
            samplings,
            master_sampling: None,
            params,
            x0,
            iters,
            xstar: None,
            fstar: None,
            target: None,
            record_objective: false,
        }
    }

    pub fn with_reference(mut self, xstar: Vector, fstar: f64) -> Self {
        self.xstar = Some(xstar);
        self.fstar = Some(fstar);
        self
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_master_sampling(mut self, s: Sampling) -> Self {
        self.master_sampling = Some(s);
        self
    }

    pub fn with_objective_recording(mut self) -> Self {
        self.record_objective = true;
        self
    }
}

/// One trace row. Counters are cumulative; they are `f64` so that per-seed
/// rows (exact integers) and mean-over-seed rows share the same shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: u64,
    pub coords_up: f64,
    pub coords_down: f64,
    pub bits_up: f64,
    pub bits_down: f64,
    /// `|x^k - x*|^2`, NaN when `x*` is unknown.
    pub residual: f64,
    /// `F(x^k) - F*`; against the best seen value when `f*` is unknown.
    pub fgap: f64,
}

/// Per-iteration metrics of a run (row 0 is the initial point).
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub wall_secs: f64,
}

pub const CSV_HEADER: &str = "iter,coords_up,coords_down,bits_up,bits_down,residual,fgap";

impl RunTrace {
    pub fn final_residual(&self) -> f64 {
        self.rows.last().map(|r| r.residual).unwrap_or(f64::NAN)
    }

    /// First iteration whose residual is at or below `threshold`.
    pub fn iters_to_residual(&self, threshold: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.residual <= threshold)
            .map(|r| r.iter)
    }

    pub fn residual_at(&self, iter: u64) -> Option<f64> {
        self.rows.get(iter as usize).map(|r| {
            debug_assert_eq!(r.iter, iter);
            r.residual
        })
    }

    /// CSV serialization (deterministic; floats use the shortest
    /// round-trippable form).
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iter, r.coords_up, r.coords_down, r.bits_up, r.bits_down, r.residual, r.fgap
            ));
        }
        out
    }

    /// Row-wise mean over several traces, truncated to the shortest.
    pub fn mean(traces: &[RunTrace]) -> RunTrace {
        assert!(!traces.is_empty());
        let len = traces.iter().map(|t| t.rows.len()).min().unwrap();
        let n = traces.len() as f64;
        let rows = (0..len)
            .map(|k| {
                let mut acc = TraceRow {
                    iter: traces[0].rows[k].iter,
                    coords_up: 0.0,
                    coords_down: 0.0,
                    bits_up: 0.0,
                    bits_down: 0.0,
                    residual: 0.0,
                    fgap: 0.0,
                };
                for t in traces {
                    let r = &t.rows[k];
                    acc.coords_up += r.coords_up;
                    acc.coords_down += r.coords_down;
                    acc.bits_up += r.bits_up;
                    acc.bits_down += r.bits_down;
                    acc.residual += r.residual;
                    acc.fgap += r.fgap;
                }
                acc.coords_up /= n;
                acc.coords_down /= n;
                acc.bits_up /= n;
                acc.bits_down /= n;
                acc.residual /= n;
                acc.fgap /= n;
                acc
            })
            .collect();
        RunTrace {
            rows,
            wall_secs: traces.iter().map(|t| t.wall_secs).sum::<f64>() / n,
        }
    }
}

fn build_method(
    cfg: &RunConfig,
    problem: &DistributedProblem,
    seed: u64,
) -> Result<Box<dyn DistributedMethod>> {
    let matrix_aware = cfg.method.is_matrix_aware();
    let nodes = build_nodes(problem, &cfg.samplings, matrix_aware, seed)?;
    let reg = *problem.reg();
    let x0 = cfg.x0.clone();
    match (cfg.method, cfg.params) {
        (MethodKind::Dcgd | MethodKind::DcgdPlus, MethodParams::Dcgd { gamma }) => {
            Ok(Box::new(DcgdPlus::new(x0, gamma, reg, nodes)))
        }
        (MethodKind::Diana | MethodKind::DianaPlus, MethodParams::Diana { gamma, alpha }) => {
            Ok(Box::new(DianaPlus::new(x0, gamma, alpha, reg, nodes)))
        }
        (
            MethodKind::Adiana | MethodKind::AdianaPlus,
            MethodParams::Adiana {
                eta,
                gamma,
                beta,
                alpha,
                theta1,
                theta2,
                q,
            },
        ) => Ok(Box::new(AdianaPlus::new(
            x0,
            AdianaParams {
                eta,
                gamma,
                beta,
                alpha,
                theta1,
                theta2,
                q,
            },
            reg,
            nodes,
            seed,
        ))),
        (MethodKind::IsegaPlus, MethodParams::Isega { gamma }) => {
            Ok(Box::new(IsegaPlus::new(x0, gamma, reg, nodes)))
        }
        (MethodKind::DianaPp, MethodParams::DianaPp { gamma, alpha, beta }) => {
            let master = cfg
                .master_sampling
                .as_ref()
                .ok_or(Error::MissingConstant("master sampling"))?;
            Ok(Box::new(DianaPp::new(
                x0, gamma, alpha, beta, reg, nodes, problem, master, seed,
            )?))
        }
        _ => Err(Error::invalid(format!(
            "parameter set does not match method {}",
            cfg.method.name()
        ))),
    }
}

/// Runs one seed. Deterministic: the same seed yields the same trace,
/// bitwise.
pub fn run(problem: &DistributedProblem, cfg: &RunConfig, seed: u64) -> Result<RunTrace> {
    let start = Instant::now();
    let mut method = build_method(cfg, problem, seed)?;

    let residual_of = |x: &Vector| -> f64 {
        cfg.xstar
            .as_ref()
            .map(|xs| (x - xs).norm_squared())
            .unwrap_or(f64::NAN)
    };
    let objective_of = |x: &Vector| -> f64 {
        if cfg.record_objective {
            problem.value(x) + problem.reg().value(x)
        } else {
            f64::NAN
        }
    };

    let mut rows = Vec::with_capacity(cfg.iters + 1);
    let r0 = residual_of(&cfg.x0);
    let f0 = objective_of(&cfg.x0);
    let mut best_f = f0;
    rows.push(TraceRow {
        iter: 0,
        coords_up: 0.0,
        coords_down: 0.0,
        bits_up: 0.0,
        bits_down: 0.0,
        residual: r0,
        fgap: f64::NAN, // patched below once f* (or best-seen) is known
    });
    let mut fvals = vec![f0];

    let mut cum = [0.0_f64; 4];
    let guard = if r0.is_finite() && r0 > 0.0 {
        DIVERGENCE_FACTOR * r0
    } else {
        f64::INFINITY
    };

    for k in 1..=cfg.iters {
        let stats = method.step(problem)?;
        cum[0] += stats.coords_up as f64;
        cum[1] += stats.coords_down as f64;
        cum[2] += stats.bits_up as f64;
        cum[3] += stats.bits_down as f64;

        let x = method.iterate();
        let res = residual_of(x);
        let fv = objective_of(x);
        if fv.is_finite() {
            best_f = best_f.min(fv);
        }
        fvals.push(fv);
        rows.push(TraceRow {
            iter: k as u64,
            coords_up: cum[0],
            coords_down: cum[1],
            bits_up: cum[2],
            bits_down: cum[3],
            residual: res,
            fgap: f64::NAN,
        });

        if res.is_finite() && res > guard {
            return Err(Error::Diverged {
                iter: k,
                residual: res,
            });
        }
        if cfg.xstar.is_some() && !res.is_finite() {
            return Err(Error::NonFinite("residual"));
        }

        if let Some(target) = cfg.target {
            let stop_metric = if cfg.xstar.is_some() {
                res
            } else if let Some(fstar) = cfg.fstar {
                fv - fstar
            } else {
                f64::INFINITY
            };
            if stop_metric <= target {
                break;
            }
        }
    }

    // F-gap column: against f* when known, else against the best seen value.
    let baseline = cfg.fstar.unwrap_or(best_f);
    for (row, &fv) in rows.iter_mut().zip(&fvals) {
        row.fgap = fv - baseline;
    }

    Ok(RunTrace {
        rows,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs every seed and returns the per-seed traces plus their row-wise mean.
pub fn run_mean(
    problem: &DistributedProblem,
    cfg: &RunConfig,
    seeds: &[u64],
) -> Result<(Vec<RunTrace>, RunTrace)> {
    if seeds.is_empty() {
        return Err(Error::invalid("seed list must not be empty"));
    }
    let mut traces = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        traces.push(run(problem, cfg, seed)?);
    }
    let mean = RunTrace::mean(&traces);
    Ok((traces, mean))
}
