//! Experiment configuration: a versioned TOML document with one entry per
//! panel, and the cross-field checks run before anything is computed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use quenchcorr::fitting::{DecayModel, FitOptions, Weights};
use quenchcorr::model::{Boundary, ChainSpec, DisorderSpec, DisorderTarget, Distribution, ModelKind};
use quenchcorr::mps::DmrgConfig;
use quenchcorr::qcorr::Party;
use quenchcorr::quench::{FailurePolicy, Measure, PairScheme, Pipeline, QuenchPlan, SolverKind};
use quenchcorr::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub model: ModelSection,
    #[serde(default)]
    pub disorder: DisorderSection,
    pub run: RunSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub dmrg: DmrgConfig,
    pub panels: Vec<Panel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub n_sites: usize,
    pub gamma: f64,
    #[serde(default)]
    pub delta: f64,
    /// Periodic for XY and open for XYZ when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSection {
    pub target: DisorderTarget,
    pub std_dev: f64,
    pub distribution: String,
}

impl Default for DisorderSection {
    fn default() -> Self {
        DisorderSection { target: DisorderTarget::None, std_dev: 1.0, distribution: "gaussian".into() }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub measures: Vec<Measure>,
    pub solver: SolverKind,
    pub pair_scheme: PairScheme,
    pub realizations: u64,
    pub seed: u64,
    #[serde(default)]
    pub failure_policy: FailurePolicy,
    /// Also compute the ordered chain at the panel's mean parameters.
    #[serde(default = "yes")]
    pub ordered: bool,
    #[serde(default = "yes")]
    pub disordered: bool,
    #[serde(default)]
    pub measured_party: Party,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    #[default]
    None,
    /// Regress the quenched length itself against `N`.
    Identity,
    /// Regress `|ξ(N) - ξ(N_max)|` against `N`, dropping the largest size.
    DeviationFromLargest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub zero_threshold: f64,
    pub weights: Weights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_range: Option<[f64; 2]>,
    pub scaling: ScalingMode,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { zero_threshold: 1e-6, weights: Weights::Uniform, fit_range: None, scaling: ScalingMode::None }
    }
}

impl FitSection {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            fit_range: self.fit_range.map(|[a, b]| (a, b)),
            weights: self.weights,
            zero_threshold: self.zero_threshold,
            ..FitOptions::default()
        }
    }
}

/// One curve family: mean coupling and field, with optional per-panel
/// overrides of the chain length and zz-coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub label: String,
    pub coupling: f64,
    pub field: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sites: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn diag(field: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic { field: field.into(), message: message.into() }
}

pub fn decay_model(measure: Measure) -> DecayModel {
    match measure {
        Measure::Concurrence => DecayModel::PureExponential,
        _ => DecayModel::OffsetExponential,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn chain_spec(&self, panel: &Panel) -> quenchcorr::Result<ChainSpec> {
        let n = panel.n_sites.unwrap_or(self.model.n_sites);
        let delta = panel.delta.unwrap_or(self.model.delta);
        let spec = match self.model.kind {
            ModelKind::Xy => ChainSpec::xy(n, self.model.gamma, panel.coupling, panel.field)?,
            ModelKind::Xyz => ChainSpec::xyz(n, self.model.gamma, delta, panel.coupling, panel.field)?,
        };
        match self.model.boundary {
            Some(b) => spec.with_boundary(b),
            None => Ok(spec),
        }
    }

    pub fn disorder_spec(&self, panel: &Panel) -> quenchcorr::Result<DisorderSpec> {
        let distribution = Distribution::from_str(&self.disorder.distribution)?;
        let mean = match self.disorder.target {
            DisorderTarget::Coupling => panel.coupling,
            DisorderTarget::Field => panel.field,
            DisorderTarget::None => return Ok(DisorderSpec::none()),
        };
        Ok(DisorderSpec { distribution, ..DisorderSpec::gaussian(self.disorder.target, mean, self.disorder.std_dev) })
    }

    pub fn pipeline(&self, measure: Measure) -> Pipeline {
        Pipeline {
            measured_party: self.run.measured_party,
            margin: self.run.margin,
            dmrg: self.dmrg,
            ..Pipeline::new(measure, self.run.pair_scheme, self.run.solver)
        }
    }

    pub fn plan(&self, panel: &Panel, measure: Measure) -> quenchcorr::Result<QuenchPlan> {
        Ok(QuenchPlan {
            spec: self.chain_spec(panel)?,
            dis: self.disorder_spec(panel)?,
            n_realizations: self.run.realizations,
            master_seed: self.run.seed,
            pipeline: self.pipeline(measure),
            failure_policy: self.run.failure_policy,
        })
    }

    /// Schema and cross-field checks; empty when the configuration can run.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(diag(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            out.push(diag("name", "must be a non-empty name without path separators"));
        }
        let m = &self.model;
        if m.n_sites < 2 {
            out.push(diag("model.n_sites", format!("{} sites; at least 2 are needed", m.n_sites)));
        }
        if !(0.0..=1.0).contains(&m.gamma) {
            out.push(diag("model.gamma", format!("{} is outside [0, 1]", m.gamma)));
        }
        if m.kind == ModelKind::Xyz && m.boundary == Some(Boundary::Periodic) {
            out.push(diag("model.boundary", "XYZ chains are open"));
        }
        if m.kind == ModelKind::Xy && m.delta != 0.0 {
            out.push(diag("model.delta", "zz-coupling requires kind = \"xyz\""));
        }
        if let Err(e) = Distribution::from_str(&self.disorder.distribution) {
            out.push(diag("disorder.distribution", e.to_string()));
        }
        if !(self.disorder.std_dev >= 0.0 && self.disorder.std_dev.is_finite()) {
            out.push(diag("disorder.std_dev", format!("{} must be finite and non-negative", self.disorder.std_dev)));
        }
        let r = &self.run;
        if r.measures.is_empty() {
            out.push(diag("run.measures", "at least one measure is required"));
        }
        if r.realizations < 1 {
            out.push(diag("run.realizations", "at least one realization is required"));
        }
        if !r.ordered && !r.disordered {
            out.push(diag("run", "both ordered and disordered runs are disabled"));
        }
        match (r.solver, m.kind) {
            (SolverKind::Freefermion, ModelKind::Xyz) => {
                out.push(diag("run.solver", "freefermion solves XY chains only; use mps or ed for XYZ"))
            }
            (SolverKind::Mps, ModelKind::Xy) => {
                out.push(diag("run.solver", "mps is for XYZ chains; use freefermion for XY"))
            }
            _ => {}
        }
        let periodic = match m.boundary {
            Some(b) => b == Boundary::Periodic,
            None => m.kind == ModelKind::Xy,
        };
        if r.solver == SolverKind::Mps && periodic {
            out.push(diag("run.solver", "mps is open-boundary only; set model.boundary = \"open\""));
        }
        if r.solver == SolverKind::Mps {
            if let Err(e) = self.dmrg.validate() {
                out.push(diag("dmrg", e.to_string()));
            }
        }
        let f = &self.fit;
        if !(f.zero_threshold > 0.0) {
            out.push(diag("fit.zero_threshold", "must be positive"));
        }
        if let Some([a, b]) = f.fit_range {
            if !(a < b) {
                out.push(diag("fit.fit_range", format!("[{a}, {b}] is empty")));
            }
        }
        if self.panels.is_empty() {
            out.push(diag("panels", "at least one panel is required"));
        }
        if f.scaling != ScalingMode::None {
            let mut sizes: Vec<usize> =
                self.panels.iter().map(|p| p.n_sites.unwrap_or(self.model.n_sites)).collect();
            sizes.sort_unstable();
            sizes.dedup();
            let needed = if f.scaling == ScalingMode::DeviationFromLargest { 4 } else { 3 };
            if sizes.len() < needed {
                out.push(diag("fit.scaling", format!("needs at least {needed} distinct chain lengths")));
            }
            if !r.disordered {
                out.push(diag("fit.scaling", "scaling uses the quenched lengths; enable run.disordered"));
            }
        }
        let mut labels: Vec<&str> = self.panels.iter().map(|p| p.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            out.push(diag("panels", "labels must be unique"));
        }
        if !out.is_empty() {
            return out;
        }
        // Per-panel checks through the library's own validation.
        for (k, panel) in self.panels.iter().enumerate() {
            let at = format!("panels[{k}]");
            if panel.label.is_empty() || !panel.label.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c)) {
                out.push(diag(format!("{at}.label"), "use letters, digits, '.', '_' or '-'"));
            }
            for measure in &r.measures {
                match self.plan(panel, *measure).and_then(|p| p.validate()) {
                    Ok(()) => {}
                    Err(e) => out.push(diag(field_for(&e, &at), e.to_string())),
                }
            }
        }
        out.dedup();
        out
    }
}

/// Config field most responsible for a library validation error.
fn field_for(e: &Error, panel: &str) -> String {
    match e {
        Error::Unsupported { .. } => "run.solver".into(),
        Error::MarginViolation { .. } => "run.margin".into(),
        Error::TooLarge(_) => format!("{panel}.n_sites"),
        Error::UnsupportedDistribution(_) => "disorder.distribution".into(),
        _ => panel.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn presets_validate_cleanly() {
        for name in presets::NAMES {
            let cfg = presets::preset(name).unwrap();
            assert_eq!(cfg.validate(), Vec::<Diagnostic>::new(), "preset {name}");
        }
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for name in presets::NAMES {
            let cfg = presets::preset(name).unwrap();
            let text = cfg.to_toml();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg, "preset {name}");
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = presets::preset("fig1").unwrap().to_toml();
        text = text.replace("[run]\n", "[run]\nrealisations = 5\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.contains("realisations"), "{err}");
    }

    #[test]
    fn negative_realizations_fail_to_parse() {
        let cfg = presets::preset("fig1").unwrap();
        let text = cfg.to_toml().replace(
            &format!("realizations = {}", cfg.run.realizations),
            "realizations = -3",
        );
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    fn fields(cfg: &ExperimentConfig) -> Vec<String> {
        cfg.validate().into_iter().map(|d| d.field).collect()
    }

    #[test]
    fn solver_model_mismatches() {
        let mut cfg = presets::preset("table1").unwrap();
        cfg.run.solver = SolverKind::Freefermion;
        assert_eq!(fields(&cfg), vec!["run.solver"]);

        let mut cfg = presets::preset("fig2").unwrap();
        cfg.run.solver = SolverKind::Mps;
        assert!(fields(&cfg).contains(&"run.solver".to_string()));
        cfg.model.boundary = Some(Boundary::Periodic);
        let f = fields(&cfg);
        assert!(f.iter().all(|x| x == "run.solver") && f.len() == 2, "{f:?}");
    }

    #[test]
    fn field_level_messages() {
        let mut cfg = presets::preset("fig1").unwrap();
        cfg.model.gamma = 1.5;
        cfg.run.realizations = 0;
        cfg.disorder.distribution = "cauchy".into();
        cfg.schema_version = 7;
        let f = fields(&cfg);
        for want in ["model.gamma", "run.realizations", "disorder.distribution", "schema_version"] {
            assert!(f.contains(&want.to_string()), "{want} missing from {f:?}");
        }
    }

    #[test]
    fn panel_level_errors_name_the_panel() {
        let mut cfg = presets::preset("table1").unwrap();
        cfg.panels[1].n_sites = Some(6);
        cfg.run.margin = Some(3);
        assert!(fields(&cfg).iter().any(|f| f.starts_with("run.margin") || f.starts_with("panels[1]")));
    }
}
