//! Quenched averages: every disorder realization is solved and measured on
//! its own, and the per-realization values are averaged per distance.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ed::{ed_ground_state, ed_two_site_rdm};
use crate::error::{Error, Result};
use crate::freefermion::{correlators, solve_realization, two_site_rdm};
use crate::model::{
    ordered_realization, sample_realization, Boundary, ChainSpec, DisorderSpec, ModelKind, Realization,
};
use crate::mps::{default_margin, dmrg_ground_state, mps_two_site_rdm_with_margin, DmrgConfig};
use crate::qcorr::{concurrence, discord_auto, mutual_information, Party, TwoSiteState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Concurrence,
    Discord,
    MutualInformation,
    ClassicalCorrelation,
}

impl Measure {
    pub fn evaluate(self, state: &TwoSiteState, measured: Party) -> Result<f64> {
        Ok(match self {
            Measure::Concurrence => concurrence(state),
            Measure::MutualInformation => mutual_information(state),
            Measure::Discord => discord_auto(state, measured)?.discord,
            Measure::ClassicalCorrelation => discord_auto(state, measured)?.classical_correlation,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Concurrence => "concurrence",
            Measure::Discord => "discord",
            Measure::MutualInformation => "mutual_information",
            Measure::ClassicalCorrelation => "classical_correlation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScheme {
    /// Site 0 against every other site up to half the ring (periodic) or the
    /// far end (open).
    FixedIAllJ,
    /// Site `N/2 - 1` against sites to its right, stopping `margin` sites
    /// before the end.
    CentralSiteDistanceR,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Freefermion,
    Ed,
    Mps,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Freefermion => "freefermion",
            SolverKind::Ed => "ed",
            SolverKind::Mps => "mps",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    Abort,
    /// Leave failed realizations out of the average and record them.
    SkipAndLog,
}

/// Everything applied to one solved realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub measure: Measure,
    pub pair_scheme: PairScheme,
    pub solver: SolverKind,
    pub measured_party: Party,
    /// Minimum distance of RDM sites from the chain ends for the MPS solver
    /// and the central-site scheme; `None` means `N/4`.
    pub margin: Option<usize>,
    pub dmrg: DmrgConfig,
}

impl Pipeline {
    pub fn new(measure: Measure, pair_scheme: PairScheme, solver: SolverKind) -> Self {
        Pipeline {
            measure,
            pair_scheme,
            solver,
            measured_party: Party::First,
            margin: None,
            dmrg: DmrgConfig::default(),
        }
    }

    fn margin_for(&self, n: usize) -> usize {
        self.margin.unwrap_or_else(|| default_margin(n))
    }

    /// Site pairs `(i, j)` measured for a chain of `spec`.
    pub fn pairs(&self, spec: &ChainSpec) -> Vec<(usize, usize)> {
        let n = spec.n_sites;
        match self.pair_scheme {
            PairScheme::FixedIAllJ => {
                let last = match spec.boundary {
                    Boundary::Periodic => n / 2,
                    Boundary::Open => n - 1,
                };
                (1..=last).map(|j| (0, j)).collect()
            }
            PairScheme::CentralSiteDistanceR => {
                let i = (n / 2).saturating_sub(1);
                let end = (n - 1).saturating_sub(self.margin_for(n));
                (i + 1..=end).map(|j| (i, j)).collect()
            }
        }
    }

    pub fn validate(&self, spec: &ChainSpec) -> Result<()> {
        spec.validate()?;
        match (self.solver, spec.model_kind) {
            (SolverKind::Freefermion, ModelKind::Xyz) => {
                return Err(Error::Unsupported { solver: "freefermion", what: "XYZ chains".into() })
            }
            (SolverKind::Mps, _) if spec.boundary == Boundary::Periodic => {
                return Err(Error::Unsupported { solver: "mps", what: "periodic boundaries".into() })
            }
            (SolverKind::Mps, ModelKind::Xy) => {
                return Err(Error::Unsupported { solver: "mps", what: "XY chains".into() })
            }
            (SolverKind::Ed, _) if spec.n_sites > crate::ed::MAX_SITES => return Err(Error::TooLarge(spec.n_sites)),
            _ => {}
        }
        if self.solver == SolverKind::Mps {
            self.dmrg.validate()?;
        }
        let pairs = self.pairs(spec);
        if pairs.is_empty() {
            return Err(Error::InvalidSpec(format!("no site pairs for {} sites", spec.n_sites)));
        }
        if self.solver == SolverKind::Mps || self.pair_scheme == PairScheme::CentralSiteDistanceR {
            let margin = self.margin_for(spec.n_sites);
            if let Some(&(i, j)) = pairs.iter().find(|(i, j)| (*i).min(spec.n_sites - 1 - j) < margin) {
                return Err(Error::MarginViolation { i, j, margin });
            }
        }
        Ok(())
    }

    /// Measure value for every pair of one realization.
    pub fn evaluate(&self, r: &Realization) -> Result<Vec<f64>> {
        let pairs = self.pairs(&r.spec);
        let states: Vec<TwoSiteState> = match self.solver {
            SolverKind::Freefermion => {
                let sol = solve_realization(r)?;
                correlators(&sol, &pairs)?.entries.iter().map(two_site_rdm).collect::<Result<_>>()?
            }
            SolverKind::Ed => {
                let gs = ed_ground_state(r)?;
                pairs.iter().map(|&(i, j)| ed_two_site_rdm(&gs, i, j)).collect::<Result<_>>()?
            }
            SolverKind::Mps => {
                let mps = dmrg_ground_state(r, &self.dmrg)?;
                let margin = self.margin_for(r.n_sites());
                pairs
                    .iter()
                    .map(|&(i, j)| mps_two_site_rdm_with_margin(&mps, i, j, margin))
                    .collect::<Result<_>>()?
            }
        };
        states.iter().map(|s| self.measure.evaluate(s, self.measured_party)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchPlan {
    pub spec: ChainSpec,
    pub dis: DisorderSpec,
    pub n_realizations: u64,
    pub master_seed: u64,
    pub pipeline: Pipeline,
    pub failure_policy: FailurePolicy,
}

impl QuenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations < 1 {
            return Err(Error::InvalidSpec("n_realizations must be at least 1".into()));
        }
        self.dis.validate()?;
        self.pipeline.validate(&self.spec)
    }

    pub fn distances(&self) -> Vec<f64> {
        self.pipeline.pairs(&self.spec).iter().map(|(i, j)| (j - i) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchSeries {
    pub distances: Vec<f64>,
    pub mean: Vec<f64>,
    /// Standard deviation over realizations divided by `√R`.
    pub std_error: Vec<f64>,
    pub n_realizations: u64,
}

impl QuenchSeries {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "r,mean,std_error,n_realizations")?;
        for k in 0..self.distances.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.distances[k], self.mean[k], self.std_error[k], self.n_realizations
            )?;
        }
        Ok(())
    }

    /// Two whitespace-separated columns `r value`, for plotting.
    pub fn write_dat<W: Write>(&self, out: &mut W) -> Result<()> {
        for (r, m) in self.distances.iter().zip(&self.mean) {
            writeln!(out, "{r} {m}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedRealization {
    pub index: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchReport {
    pub series: QuenchSeries,
    pub skipped: Vec<SkippedRealization>,
    pub wall_time_s: f64,
}

/// Sum in a fixed binary tree over the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Mean and standard error per column of `rows` (one row per realization).
fn aggregate(distances: Vec<f64>, rows: &[Vec<f64>]) -> QuenchSeries {
    let r = rows.len();
    let mut mean = Vec::with_capacity(distances.len());
    let mut std_error = Vec::with_capacity(distances.len());
    for k in 0..distances.len() {
        let column: Vec<f64> = rows.iter().map(|row| row[k]).collect();
        if column.iter().all(|&x| x == column[0]) {
            // Identical values (e.g. no disorder) are reproduced exactly.
            mean.push(column[0]);
            std_error.push(0.0);
            continue;
        }
        let m = pairwise_sum(&column) / r as f64;
        let se = if r > 1 {
            let sq: Vec<f64> = column.iter().map(|x| (x - m) * (x - m)).collect();
            (pairwise_sum(&sq) / (r - 1) as f64).sqrt() / (r as f64).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        std_error.push(se);
    }
    QuenchSeries { distances, mean, std_error, n_realizations: r as u64 }
}

pub fn run_quench(plan: &QuenchPlan) -> Result<QuenchSeries> {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    Ok(run_quench_report(plan, workers)?.series)
}

/// Runs every realization on a pool of `workers` threads. The result does
/// not depend on `workers`: values are collected by realization index and
/// reduced in that order.
pub fn run_quench_report(plan: &QuenchPlan, workers: usize) -> Result<QuenchReport> {
    plan.validate()?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let one = |k: u64| -> Result<Vec<f64>> {
        let r = sample_realization(&plan.spec, &plan.dis, plan.master_seed, k as i64)?;
        plan.pipeline.evaluate(&r)
    };
    let results: Vec<Result<Vec<f64>>> = pool.install(|| (0..plan.n_realizations).into_par_iter().map(one).collect());

    let mut rows = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (k, res) in results.into_iter().enumerate() {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => match plan.failure_policy {
                FailurePolicy::Abort => {
                    return Err(Error::Realization { index: k as u64, source: Box::new(e) });
                }
                FailurePolicy::SkipAndLog => {
                    log::warn!("realization {k} skipped: {e}");
                    skipped.push(SkippedRealization { index: k as u64, error: e.to_string() });
                }
            },
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("every realization failed".into()));
    }
    Ok(QuenchReport {
        series: aggregate(plan.distances(), &rows),
        skipped,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Series of the ordered chain with uniform coupling `j` and field `h`.
pub fn ordered_series(spec: &ChainSpec, j: f64, h: f64, pipeline: &Pipeline) -> Result<QuenchSeries> {
    pipeline.validate(spec)?;
    let r = ordered_realization(spec, j, h);
    let row = pipeline.evaluate(&r)?;
    let distances = pipeline.pairs(spec).iter().map(|(i, j)| (j - i) as f64).collect();
    Ok(aggregate(distances, &[row]))
}
