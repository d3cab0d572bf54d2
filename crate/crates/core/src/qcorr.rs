//! Two-qubit correlation measures: concurrence, mutual information,
//! classical correlation and quantum discord, plus the discord monogamy
//! witness.
//!
//! Basis convention: `|0>` is spin up (`σz = +1`) and the two-qubit index is
//! `2 a + b` with `a` the first site of the pair.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Eigenvalues below this are treated as zero in entropies.
const ENTROPY_FLOOR: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-9;
pub const PSD_FLOOR: f64 = 1e-9;
/// Off-X entries below this count as zero for the closed-form discord.
const XFORM_TOL: f64 = 1e-9;
/// Eigenvalues of `√ρ ρ̃ √ρ` below this are rounding noise; their square roots
/// would otherwise leak ~1e-8 into the concurrence of pure product states.
const R2_FLOOR: f64 = 1e-14;

/// Pauli matrices.
pub fn pauli(k: usize) -> Matrix2<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    match k {
        0 => Matrix2::identity(),
        1 => Matrix2::new(C0, C1, C1, C0),
        2 => Matrix2::new(C0, -i, i, C0),
        3 => Matrix2::new(C1, C0, C0, -C1),
        _ => panic!("pauli index {k} out of range"),
    }
}

pub fn kron(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> Matrix4<Complex64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// A two-site reduced density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSiteState {
    pub rho: Matrix4<Complex64>,
    pub labels: (usize, usize),
}

/// Which site of the pair carries the projective measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    #[default]
    First,
    Second,
}

impl Party {
    fn other(self) -> Party {
        match self {
            Party::First => Party::Second,
            Party::Second => Party::First,
        }
    }
}

impl TwoSiteState {
    /// Validates trace, Hermiticity and positivity. Hermiticity deviations up
    /// to `1e-9` are removed by symmetrizing.
    pub fn new(rho: Matrix4<Complex64>, labels: (usize, usize)) -> Result<Self> {
        let herm_dev = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_dev > HERMITIAN_TOL {
            return Err(Error::NonPhysical(format!(
                "not Hermitian (deviation {herm_dev:.3e})"
            )));
        }
        let rho = (rho + rho.adjoint()).scale(0.5);
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::NonPhysical(format!("trace {tr}")));
        }
        let state = TwoSiteState { rho, labels };
        let min_eig = state.eigenvalues().min();
        if min_eig < -PSD_FLOOR {
            return Err(Error::NonPhysical(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(state)
    }

    /// `ρ = ¼[I⊗I + m_i σz⊗I + m_j I⊗σz + Σ_α T^αα σα⊗σα]`.
    pub fn from_correlators(
        mz_i: f64,
        mz_j: f64,
        txx: f64,
        tyy: f64,
        tzz: f64,
        labels: (usize, usize),
    ) -> Result<Self> {
        for (name, v) in [("mz_i", mz_i), ("mz_j", mz_j), ("txx", txx), ("tyy", tyy), ("tzz", tzz)] {
            if !(v.abs() <= 1.0 + 1e-9) {
                return Err(Error::NonPhysical(format!("{name} = {v} outside [-1, 1]")));
            }
        }
        let mut rho = Matrix4::<Complex64>::zeros();
        let q = 0.25;
        rho[(0, 0)] = C1 * q * (1.0 + mz_i + mz_j + tzz);
        rho[(1, 1)] = C1 * q * (1.0 + mz_i - mz_j - tzz);
        rho[(2, 2)] = C1 * q * (1.0 - mz_i + mz_j - tzz);
        rho[(3, 3)] = C1 * q * (1.0 - mz_i - mz_j + tzz);
        rho[(0, 3)] = C1 * q * (txx - tyy);
        rho[(3, 0)] = rho[(0, 3)];
        rho[(1, 2)] = C1 * q * (txx + tyy);
        rho[(2, 1)] = rho[(1, 2)];
        TwoSiteState::new(rho, labels)
    }

    pub fn maximally_mixed(labels: (usize, usize)) -> Self {
        TwoSiteState {
            rho: Matrix4::identity().scale(0.25),
            labels,
        }
    }

    /// Pure state `|ψ><ψ|` from (unnormalized) amplitudes.
    pub fn pure(psi: Vector4<Complex64>, labels: (usize, usize)) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::NonPhysical("zero state vector".into()));
        }
        let psi = psi.unscale(norm);
        TwoSiteState::new(psi * psi.adjoint(), labels)
    }

    pub fn eigenvalues(&self) -> Vector4<f64> {
        SymmetricEigen::new(self.rho).eigenvalues
    }

    /// Expectation value of `σa ⊗ σb` (index 0 is the identity).
    pub fn pauli_expectation(&self, a: usize, b: usize) -> f64 {
        (self.rho * kron(&pauli(a), &pauli(b))).trace().re
    }

    pub fn reduced(&self, party: Party) -> Matrix2<Complex64> {
        let mut out = Matrix2::zeros();
        for r in 0..2 {
            for c in 0..2 {
                for k in 0..2 {
                    out[(r, c)] += match party {
                        Party::First => self.rho[(2 * r + k, 2 * c + k)],
                        Party::Second => self.rho[(2 * k + r, 2 * k + c)],
                    };
                }
            }
        }
        out
    }

    /// Largest modulus among entries outside the diagonal and anti-diagonal.
    pub fn off_x_magnitude(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..4 {
            for c in 0..4 {
                if r != c && r + c != 3 {
                    worst = worst.max(self.rho[(r, c)].norm());
                }
            }
        }
        worst
    }

    /// Zeroes every entry outside the X pattern.
    pub fn project_x(&self) -> Result<Self> {
        let mut rho = self.rho;
        for r in 0..4 {
            for c in 0..4 {
                if r != c && r + c != 3 {
                    rho[(r, c)] = C0;
                }
            }
        }
        TwoSiteState::new(rho, self.labels)
    }

    pub fn trace_distance(&self, other: &TwoSiteState) -> f64 {
        let d = self.rho - other.rho;
        0.5 * SymmetricEigen::new(d).eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
    }

    pub fn apply_local_unitaries(&self, ua: &Matrix2<Complex64>, ub: &Matrix2<Complex64>) -> Result<Self> {
        let u = kron(ua, ub);
        TwoSiteState::new(u * self.rho * u.adjoint(), self.labels)
    }
}

pub fn binary_entropy(x: f64) -> f64 {
    let h = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    h(x) + h(1.0 - x)
}

fn entropy_of(eigs: impl IntoIterator<Item = f64>) -> f64 {
    eigs.into_iter()
        .filter(|&l| l > ENTROPY_FLOOR)
        .map(|l| -l * l.log2())
        .sum()
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(state: &TwoSiteState) -> f64 {
    entropy_of(state.eigenvalues().iter().copied())
}

/// Entropy of a (possibly unnormalized) qubit operator `m / tr m`.
fn qubit_entropy(m: &Matrix2<Complex64>) -> f64 {
    let t = m[(0, 0)].re + m[(1, 1)].re;
    if t <= 0.0 {
        return 0.0;
    }
    let a = m[(0, 0)].re / t;
    let d = m[(1, 1)].re / t;
    let b = m[(0, 1)].norm() / t;
    let r = ((a - d) * (a - d) + 4.0 * b * b).sqrt().min(1.0);
    binary_entropy((1.0 + r) / 2.0)
}

/// Wootters concurrence in ebits.
pub fn concurrence(state: &TwoSiteState) -> f64 {
    let yy = kron(&pauli(2), &pauli(2));
    let flipped = yy * state.rho.conjugate() * yy;
    let eig = SymmetricEigen::new(state.rho);
    let sqrt_rho = eig.eigenvectors
        * Matrix4::from_diagonal(&eig.eigenvalues.map(|l| C1 * l.max(0.0).sqrt()))
        * eig.eigenvectors.adjoint();
    let r2 = sqrt_rho * flipped * sqrt_rho;
    let r2 = (r2 + r2.adjoint()).scale(0.5);
    let mut lambdas: Vec<f64> = SymmetricEigen::new(r2)
        .eigenvalues
        .iter()
        .map(|&l| if l < R2_FLOOR { 0.0 } else { l.sqrt() })
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0)
}

/// Quantum mutual information in bits.
pub fn mutual_information(state: &TwoSiteState) -> f64 {
    let sa = qubit_entropy(&state.reduced(Party::First));
    let sb = qubit_entropy(&state.reduced(Party::Second));
    (sa + sb - von_neumann_entropy(state)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscordMethod {
    XstateClosedForm,
    NumericMinimization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscordResult {
    pub mutual_information: f64,
    pub classical_correlation: f64,
    pub discord: f64,
    /// Bloch angles (polar, azimuthal) of the optimal projective measurement.
    pub optimal_measurement: (f64, f64),
    pub method: DiscordMethod,
}

/// Grid resolution and stopping tolerance of the numerical minimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizerSettings {
    pub n_theta: usize,
    pub n_phi: usize,
    pub tol: f64,
}

impl Default for MinimizerSettings {
    fn default() -> Self {
        MinimizerSettings {
            n_theta: 60,
            n_phi: 120,
            tol: 1e-8,
        }
    }
}

/// Average post-measurement entropy of the unmeasured qubit for a projective
/// measurement along the Bloch direction `(θ, φ)` on `party`.
pub fn conditional_entropy(state: &TwoSiteState, party: Party, theta: f64, phi: f64) -> f64 {
    let n = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
    let ns = pauli(1).scale(n[0]) + pauli(2).scale(n[1]) + pauli(3).scale(n[2]);
    let id = Matrix2::<Complex64>::identity();
    let mut total = 0.0;
    for sign in [1.0, -1.0] {
        let proj = (id + ns.scale(sign)).scale(0.5);
        let op = match party {
            Party::First => kron(&proj, &id),
            Party::Second => kron(&id, &proj),
        };
        let post = TwoSiteState {
            rho: op * state.rho * op,
            labels: state.labels,
        };
        let cond = post.reduced(party.other());
        let p = cond[(0, 0)].re + cond[(1, 1)].re;
        if p > ENTROPY_FLOOR {
            total += p * qubit_entropy(&cond);
        }
    }
    total
}

/// Correlators of an X-form state in the Pauli basis:
/// `(m_first, m_second, T^xx, T^yy, T^zz)`.
pub fn x_state_correlators(state: &TwoSiteState) -> (f64, f64, f64, f64, f64) {
    let r = &state.rho;
    let mi = r[(0, 0)].re + r[(1, 1)].re - r[(2, 2)].re - r[(3, 3)].re;
    let mj = r[(0, 0)].re - r[(1, 1)].re + r[(2, 2)].re - r[(3, 3)].re;
    let tzz = r[(0, 0)].re - r[(1, 1)].re - r[(2, 2)].re + r[(3, 3)].re;
    let txx = 2.0 * (r[(0, 3)].re + r[(1, 2)].re);
    let tyy = 2.0 * (r[(1, 2)].re - r[(0, 3)].re);
    (mi, mj, txx, tyy, tzz)
}

/// Whether the closed form applies: real X-form with `|T^xx| >= |T^yy|`.
pub fn closed_form_applicable(state: &TwoSiteState) -> std::result::Result<(), String> {
    let off = state.off_x_magnitude();
    if off > XFORM_TOL {
        return Err(format!("state is not X-form (off-X entry {off:.3e})"));
    }
    let imag = state.rho[(0, 3)].im.abs().max(state.rho[(1, 2)].im.abs());
    if imag > XFORM_TOL {
        return Err(format!("anti-diagonal has imaginary part {imag:.3e}"));
    }
    let (_, _, txx, tyy, _) = x_state_correlators(state);
    if txx.abs() + XFORM_TOL < tyy.abs() {
        return Err(format!("|T^xx| = {:.3e} < |T^yy| = {:.3e}", txx.abs(), tyy.abs()));
    }
    Ok(())
}

pub fn discord(state: &TwoSiteState, measured: Party, method: DiscordMethod) -> Result<DiscordResult> {
    discord_with(state, measured, method, MinimizerSettings::default())
}

/// Closed form where it applies, numerical minimization otherwise. A real
/// X state with `|T^yy| > |T^xx|` is first rotated by π/2 about z on both
/// qubits, which swaps the two correlators and leaves discord unchanged.
pub fn discord_auto(state: &TwoSiteState, measured: Party) -> Result<DiscordResult> {
    if closed_form_applicable(state).is_ok() {
        return discord(state, measured, DiscordMethod::XstateClosedForm);
    }
    let mut rotated = state.clone();
    rotated.rho[(0, 3)] = -rotated.rho[(0, 3)];
    rotated.rho[(3, 0)] = -rotated.rho[(3, 0)];
    if closed_form_applicable(&rotated).is_ok() {
        let mut res = discord(&rotated, measured, DiscordMethod::XstateClosedForm)?;
        res.optimal_measurement.1 += std::f64::consts::FRAC_PI_2;
        return Ok(res);
    }
    discord(state, measured, DiscordMethod::NumericMinimization)
}

pub fn discord_with(
    state: &TwoSiteState,
    measured: Party,
    method: DiscordMethod,
    settings: MinimizerSettings,
) -> Result<DiscordResult> {
    let mi = mutual_information(state);
    let s_unmeasured = qubit_entropy(&state.reduced(measured.other()));
    let (classical, angles) = match method {
        DiscordMethod::XstateClosedForm => {
            closed_form_applicable(state).map_err(Error::ClosedFormInvalid)?;
            let (m_first, m_second, txx, _, _) = x_state_correlators(state);
            // The conditional states live on the unmeasured qubit.
            let m = match measured {
                Party::First => m_second,
                Party::Second => m_first,
            };
            let p = (m * m + txx * txx).sqrt().min(1.0);
            let j = binary_entropy((1.0 + m.clamp(-1.0, 1.0)) / 2.0) - binary_entropy((1.0 + p) / 2.0);
            (j, (std::f64::consts::FRAC_PI_2, 0.0))
        }
        DiscordMethod::NumericMinimization => {
            let (s_cond, theta, phi) = minimize_conditional_entropy(state, measured, settings);
            (s_unmeasured - s_cond, (theta, phi))
        }
    };
    let classical = classical.max(0.0);
    Ok(DiscordResult {
        mutual_information: mi,
        classical_correlation: classical,
        discord: mi - classical,
        optimal_measurement: angles,
        method,
    })
}

fn minimize_conditional_entropy(state: &TwoSiteState, party: Party, s: MinimizerSettings) -> (f64, f64, f64) {
    use std::f64::consts::PI;
    let f = |p: [f64; 2]| conditional_entropy(state, party, p[0], p[1]);
    let mut grid: Vec<(f64, [f64; 2])> = Vec::with_capacity(s.n_theta * s.n_phi);
    for a in 0..s.n_theta {
        let theta = if s.n_theta > 1 {
            PI * a as f64 / (s.n_theta - 1) as f64
        } else {
            PI / 2.0
        };
        for b in 0..s.n_phi {
            let phi = 2.0 * PI * b as f64 / s.n_phi as f64;
            grid.push((f([theta, phi]), [theta, phi]));
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let step = [PI / s.n_theta.max(2) as f64, 2.0 * PI / s.n_phi.max(2) as f64];
    let mut best = (grid[0].0, grid[0].1);
    // Polish a few of the best grid points; distinct basins are rare.
    for &(_, start) in grid.iter().take(4) {
        let (fx, x) = nelder_mead(&f, start, step, s.tol * 1e-4, 2000);
        if fx < best.0 {
            best = (fx, x);
        }
    }
    (best.0, best.1[0], best.1[1])
}

/// Two-dimensional Nelder-Mead; stops when the simplex values spread less
/// than `ftol`.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: &F,
    start: [f64; 2],
    step: [f64; 2],
    ftol: f64,
    max_iter: usize,
) -> (f64, [f64; 2]) {
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(|p| f(p));
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|k| simplex[k]);
        values = order.map(|k| values[k]);
        if values[2] - values[0] < ftol {
            let spread = (simplex[2][0] - simplex[0][0]).abs() + (simplex[2][1] - simplex[0][1]).abs();
            if spread < 1e-9 || values[2] - values[0] < ftol * 1e-3 {
                break;
            }
        }
        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] {
                lerp(centroid, reflected, 0.5)
            } else {
                lerp(centroid, simplex[2], 0.5)
            };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = lerp(simplex[0], simplex[k], 0.5);
                    values[k] = f(simplex[k]);
                }
            }
        }
    }
    let k = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (values[k], simplex[k])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonogamyReport {
    pub nodal_site: usize,
    pub pairwise_discords: Vec<f64>,
    pub sum: f64,
    /// The sum exceeds the one-bit bound on the nodal qubit's discord with
    /// the rest of the chain.
    pub witness_violated: bool,
}

/// Monogamy witness for discords `D(ρ_{1,i})`, `i = 2..N`, with site 1 nodal.
pub fn monogamy_witness(discords: &[f64]) -> Result<MonogamyReport> {
    if discords.is_empty() {
        return Err(Error::InvalidInput("no pairwise discords given".into()));
    }
    if let Some(bad) = discords.iter().find(|d| !(-1e-9..=1.0 + 1e-9).contains(*d)) {
        return Err(Error::InvalidInput(format!("discord {bad} outside [0, 1]")));
    }
    let sum: f64 = discords.iter().sum();
    Ok(MonogamyReport {
        nodal_site: 0,
        pairwise_discords: discords.to_vec(),
        sum,
        witness_violated: sum > 1.0,
    })
}
