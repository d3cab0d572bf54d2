//! Chain specifications and reproducible sampling of disorder realizations.
//!
//! Hamiltonians are written in units of the energy scale `kappa`, which is
//! fixed to one:
//!
//! ```text
//! H = Σ_i J_i/4 [(1+γ) σx_i σx_{i+1} + (1-γ) σy_i σy_{i+1}] + Δ/4 σz_i σz_{i+1}
//!     - Σ_i h_i/2 σz_i
//! ```
//!
//! The XY chain has `Δ = 0` and is periodic by default. The XYZ chain is
//! always open.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Xy,
    Xyz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_sites: usize,
    pub gamma: f64,
    pub delta: f64,
    pub kappa: f64,
    pub boundary: Boundary,
    pub model_kind: ModelKind,
    /// Uniform coupling used when the couplings are not disordered.
    pub coupling: f64,
    /// Uniform field used when the fields are not disordered.
    pub field: f64,
}

impl ChainSpec {
    /// Periodic XY chain.
    pub fn xy(n_sites: usize, gamma: f64, coupling: f64, field: f64) -> Result<Self> {
        let spec = ChainSpec {
            n_sites,
            gamma,
            delta: 0.0,
            kappa: 1.0,
            boundary: Boundary::Periodic,
            model_kind: ModelKind::Xy,
            coupling,
            field,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Open XYZ chain.
    pub fn xyz(n_sites: usize, gamma: f64, delta: f64, coupling: f64, field: f64) -> Result<Self> {
        let spec = ChainSpec {
            n_sites,
            gamma,
            delta,
            kappa: 1.0,
            boundary: Boundary::Open,
            model_kind: ModelKind::Xyz,
            coupling,
            field,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Result<Self> {
        self.boundary = boundary;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::InvalidSpec(format!(
                "n_sites must be at least 2, got {}",
                self.n_sites
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidSpec(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.kappa != 1.0 {
            return Err(Error::InvalidSpec(format!(
                "kappa is fixed to 1, got {}",
                self.kappa
            )));
        }
        if self.model_kind == ModelKind::Xyz && self.boundary != Boundary::Open {
            return Err(Error::InvalidSpec(
                "the XYZ chain is only defined with open boundaries".into(),
            ));
        }
        if self.model_kind == ModelKind::Xy && self.delta != 0.0 {
            return Err(Error::InvalidSpec(format!(
                "the XY chain has no zz coupling, got delta = {}",
                self.delta
            )));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("coupling", self.coupling),
            ("field", self.field),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Number of bonds that carry a coupling.
    pub fn n_bonds(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.n_sites,
            Boundary::Open => self.n_sites - 1,
        }
    }

    /// Coupling-to-field ratio at which the ordered XY ground state factorizes.
    pub fn factorization_ratio(gamma: f64) -> f64 {
        1.0 / (1.0 - gamma * gamma).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderTarget {
    Coupling,
    Field,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Gaussian,
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            other => Err(Error::UnsupportedDistribution(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub target: DisorderTarget,
    pub mean: f64,
    pub std_dev: f64,
    pub distribution: Distribution,
}

impl DisorderSpec {
    pub fn none() -> Self {
        DisorderSpec {
            target: DisorderTarget::None,
            mean: 0.0,
            std_dev: 0.0,
            distribution: Distribution::Gaussian,
        }
    }

    pub fn gaussian(target: DisorderTarget, mean: f64, std_dev: f64) -> Self {
        DisorderSpec {
            target,
            mean,
            std_dev,
            distribution: Distribution::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target != DisorderTarget::None {
            if !(self.std_dev >= 0.0 && self.std_dev.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "std_dev must be finite and non-negative, got {}",
                    self.std_dev
                )));
            }
            if !self.mean.is_finite() {
                return Err(Error::InvalidSpec("disorder mean must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn is_disordered(&self) -> bool {
        self.target != DisorderTarget::None && self.std_dev > 0.0
    }
}

/// Identifies the random stream a realization was drawn from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub generator: String,
    pub master_seed: u64,
    pub stream: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub spec: ChainSpec,
    /// `couplings[i]` couples sites `i` and `i+1`; the last entry closes the
    /// ring and is unused for open chains.
    pub couplings: Vec<f64>,
    pub fields: Vec<f64>,
    pub realization_index: u64,
    pub seed_trace: Option<SeedTrace>,
}

impl Realization {
    pub fn n_sites(&self) -> usize {
        self.spec.n_sites
    }

    /// Bonds `(i, i+1 mod N, J_i)` present for the chain's boundary.
    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.spec.n_sites;
        (0..self.spec.n_bonds()).map(move |i| (i, (i + 1) % n, self.couplings[i]))
    }
}

/// RNG for realization `index`: one ChaCha stream per index, keyed by the
/// master seed. Independent of evaluation order.
pub fn realization_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

pub fn sample_realization(
    spec: &ChainSpec,
    dis: &DisorderSpec,
    master_seed: u64,
    index: i64,
) -> Result<Realization> {
    if index < 0 {
        return Err(Error::NegativeIndex(index));
    }
    spec.validate()?;
    dis.validate()?;
    let index = index as u64;
    let n = spec.n_sites;
    let mut couplings = vec![spec.coupling; n];
    let mut fields = vec![spec.field; n];

    let target = match dis.target {
        DisorderTarget::Coupling => Some(&mut couplings),
        DisorderTarget::Field => Some(&mut fields),
        DisorderTarget::None => None,
    };
    let mut trace = None;
    if let Some(values) = target {
        match dis.distribution {
            Distribution::Gaussian => {
                if dis.std_dev == 0.0 {
                    values.iter_mut().for_each(|v| *v = dis.mean);
                } else {
                    let normal = Normal::new(dis.mean, dis.std_dev)
                        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
                    let mut rng = realization_rng(master_seed, index);
                    values.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                }
            }
        }
        trace = Some(SeedTrace {
            generator: "chacha8".into(),
            master_seed,
            stream: index,
        });
    }

    Ok(Realization {
        spec: spec.clone(),
        couplings,
        fields,
        realization_index: index,
        seed_trace: trace,
    })
}

pub fn ordered_realization(spec: &ChainSpec, j: f64, h: f64) -> Realization {
    let n = spec.n_sites;
    let mut spec = spec.clone();
    spec.coupling = j;
    spec.field = h;
    Realization {
        spec,
        couplings: vec![j; n],
        fields: vec![h; n],
        realization_index: 0,
        seed_trace: None,
    }
}

/// Writes realizations as one line each: `index J_0 .. J_{N-1} h_0 .. h_{N-1}`.
/// Floats are printed in shortest round-trip form.
pub fn write_realizations<W: Write>(out: &mut W, realizations: &[Realization]) -> Result<()> {
    let Some(first) = realizations.first() else {
        return Ok(());
    };
    writeln!(out, "# n_sites={}", first.n_sites())?;
    for r in realizations {
        let mut line = r.realization_index.to_string();
        for v in r.couplings.iter().chain(&r.fields) {
            write!(line, " {v:e}").unwrap();
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// A parsed audit line: realization index, couplings and fields.
pub type RealizationRecord = (u64, Vec<f64>, Vec<f64>);

pub fn read_realizations<R: BufRead>(input: R) -> Result<Vec<RealizationRecord>> {
    let mut n_sites = None;
    let mut records = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(n) = rest.trim().strip_prefix("n_sites=") {
                n_sites = Some(
                    n.parse::<usize>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?,
                );
            }
            continue;
        }
        let n = n_sites.ok_or_else(|| Error::Parse("missing n_sites header".into()))?;
        let mut tokens = line.split_whitespace();
        let index = tokens
            .next()
            .unwrap()
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        let values = tokens
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        if values.len() != 2 * n {
            return Err(Error::Parse(format!(
                "line {}: expected {} values, found {}",
                lineno + 1,
                2 * n,
                values.len()
            )));
        }
        let (j, h) = values.split_at(n);
        records.push((index, j.to_vec(), h.to_vec()));
    }
    Ok(records)
}
