//! Named configurations pinned to the published parameter sets.

use quenchcorr::fitting::Weights;
use quenchcorr::model::{Boundary, DisorderTarget, ModelKind};
use quenchcorr::mps::DmrgConfig;
use quenchcorr::qcorr::Party;
use quenchcorr::quench::{FailurePolicy, Measure, PairScheme, SolverKind};

use crate::config::{
    DisorderSection, ExperimentConfig, FitSection, ModelSection, Panel, RunSection, ScalingMode, SCHEMA_VERSION,
};

pub const NAMES: [&str; 8] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "table1"];

const XY_REALIZATIONS: u64 = 10_000;
const XYZ_REALIZATIONS: u64 = 8_000;
const XY_RATIOS: [f64; 4] = [0.5, 0.8, 1.1, 1.5];

fn label(prefix: &str, x: f64) -> String {
    format!("{prefix}{x}")
}

fn xy_panels(prefix: &str) -> Vec<Panel> {
    XY_RATIOS
        .iter()
        .map(|&j| Panel { label: label(prefix, j), coupling: j, field: 1.0, n_sites: None, delta: None })
        .collect()
}

fn xyz_panels() -> Vec<Panel> {
    let mut out = Vec::new();
    for delta in [0.1, 0.5] {
        for j in [0.5, 1.5] {
            out.push(Panel {
                label: format!("delta{delta}_J{j}"),
                coupling: j,
                field: 1.0,
                n_sites: None,
                delta: Some(delta),
            });
        }
    }
    out
}

fn xy(name: &str, target: DisorderTarget, measure: Measure, panels: Vec<Panel>) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        model: ModelSection { kind: ModelKind::Xy, n_sites: 50, gamma: 0.5, delta: 0.0, boundary: None },
        disorder: DisorderSection { target, ..DisorderSection::default() },
        run: RunSection {
            measures: vec![measure],
            solver: SolverKind::Freefermion,
            pair_scheme: PairScheme::FixedIAllJ,
            realizations: XY_REALIZATIONS,
            seed: 2024,
            failure_policy: FailurePolicy::Abort,
            ordered: true,
            disordered: true,
            measured_party: Party::default(),
            margin: None,
        },
        fit: FitSection { weights: Weights::Uniform, ..FitSection::default() },
        dmrg: DmrgConfig::default(),
        panels,
    }
}

fn xyz(name: &str, measure: Measure) -> ExperimentConfig {
    let mut cfg = xy(name, DisorderTarget::Coupling, measure, xyz_panels());
    cfg.model = ModelSection { kind: ModelKind::Xyz, n_sites: 24, gamma: 0.5, delta: 0.1, boundary: Some(Boundary::Open) };
    cfg.run.solver = SolverKind::Mps;
    cfg.run.pair_scheme = PairScheme::CentralSiteDistanceR;
    cfg.run.realizations = XYZ_REALIZATIONS;
    cfg
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name {
        "fig1" => xy(name, DisorderTarget::Coupling, Measure::Concurrence, xy_panels("J")),
        "fig2" => xy(name, DisorderTarget::Coupling, Measure::Discord, xy_panels("J")),
        "fig3" => {
            let panels = [10, 20, 30, 40, 50]
                .into_iter()
                .map(|n| Panel { label: format!("N{n}"), coupling: 0.5, field: 1.0, n_sites: Some(n), delta: None })
                .collect();
            let mut cfg = xy(name, DisorderTarget::Coupling, Measure::Discord, panels);
            cfg.run.ordered = false;
            cfg.fit.scaling = ScalingMode::DeviationFromLargest;
            cfg
        }
        "fig4" => xy(name, DisorderTarget::Field, Measure::Concurrence, xy_panels("J")),
        "fig5" => xy(name, DisorderTarget::Field, Measure::Discord, xy_panels("J")),
        "fig6" => xyz(name, Measure::Concurrence),
        "fig7" => xyz(name, Measure::Discord),
        "table1" => xyz(name, Measure::Discord),
        _ => return None,
    };
    Some(cfg)
}
