//! Finite-chain two-site DMRG for open XYZ chains, and two-site reduced
//! density matrices of the resulting matrix-product state.
//!
//! Site tensors are stored as one `Dl × Dr` matrix per physical state
//! (index 0 is spin up). The Hamiltonian is encoded as a bond-dimension-5
//! MPO with real operators `X`, `iY` and `Z`, using `σyσy = -(iY)(iY)`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LanczosSettings};
use crate::model::{Boundary, ModelKind, Realization};
use crate::qcorr::TwoSiteState;

/// Off-X magnitude above which a projected RDM is reported.
pub const OFF_X_WARN: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warmup {
    /// Grow the chain from both ends, two sites per step.
    InfiniteGrowth,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmrgConfig {
    pub chi_max: usize,
    pub n_sweeps: usize,
    pub energy_tol: f64,
    pub warmup: Warmup,
    /// Discarded weight allowed in each truncation.
    pub svd_cutoff: f64,
    /// Discarded weight in a single truncation above which a run that hits
    /// `chi_max` fails.
    pub max_truncation: f64,
    /// Seed for the random initial state.
    pub seed: u64,
}

impl Default for DmrgConfig {
    fn default() -> Self {
        DmrgConfig {
            chi_max: 64,
            n_sweeps: 8,
            energy_tol: 1e-9,
            warmup: Warmup::InfiniteGrowth,
            svd_cutoff: 1e-12,
            max_truncation: 1e-6,
            seed: 0,
        }
    }
}

impl DmrgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chi_max < 2 {
            return Err(Error::InvalidSpec(format!("chi_max = {} must be at least 2", self.chi_max)));
        }
        if self.n_sweeps < 1 {
            return Err(Error::InvalidSpec("n_sweeps must be at least 1".into()));
        }
        if !(self.energy_tol > 0.0) {
            return Err(Error::InvalidSpec(format!("energy_tol = {} must be positive", self.energy_tol)));
        }
        if !(self.svd_cutoff >= 0.0) || !(self.max_truncation >= 0.0) {
            return Err(Error::InvalidSpec("truncation thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

/// `[A(up), A(down)]`, each `Dl × Dr`.
pub type SiteTensor = [DMatrix<f64>; 2];

#[derive(Clone, Debug, PartialEq)]
pub struct MpsState {
    pub site_tensors: Vec<SiteTensor>,
    /// Sites left of the center are left-normalized, sites right of it are
    /// right-normalized.
    pub canonical_center: usize,
    pub energy: f64,
    /// Discarded weight summed over the truncations of the final sweep.
    pub truncation_error: f64,
    /// Energy after warmup, then after each full sweep.
    pub sweep_energies: Vec<f64>,
}

impl MpsState {
    pub fn n_sites(&self) -> usize {
        self.site_tensors.len()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.site_tensors.iter().skip(1).map(|t| t[0].nrows()).collect()
    }

    /// Bond-dimension-1 state from per-site amplitudes `(up, down)`.
    pub fn product(amplitudes: &[[f64; 2]]) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidInput("empty product state".into()));
        }
        let mut site_tensors = Vec::with_capacity(amplitudes.len());
        for a in amplitudes {
            let norm = (a[0] * a[0] + a[1] * a[1]).sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidInput("zero site amplitude".into()));
            }
            site_tensors.push([
                DMatrix::from_element(1, 1, a[0] / norm),
                DMatrix::from_element(1, 1, a[1] / norm),
            ]);
        }
        Ok(MpsState {
            site_tensors,
            canonical_center: 0,
            energy: f64::NAN,
            truncation_error: 0.0,
            sweep_energies: Vec::new(),
        })
    }

    /// `⟨ψ|ψ⟩`.
    pub fn norm_squared(&self) -> f64 {
        let mut e = DMatrix::from_element(1, 1, 1.0);
        for t in &self.site_tensors {
            e = transfer_left(&e, t);
        }
        e[(0, 0)]
    }

    /// Largest deviation from the left/right normalization conditions
    /// implied by `canonical_center`.
    pub fn gauge_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, t) in self.site_tensors.iter().enumerate() {
            let m = if k < self.canonical_center {
                t[0].tr_mul(&t[0]) + t[1].tr_mul(&t[1])
            } else if k > self.canonical_center {
                &t[0] * t[0].transpose() + &t[1] * t[1].transpose()
            } else {
                continue;
            };
            let id = DMatrix::<f64>::identity(m.nrows(), m.ncols());
            worst = worst.max((m - id).abs().max());
        }
        worst
    }

    /// Same state with the orthogonality center moved to `k`.
    pub fn with_center(&self, k: usize) -> Result<MpsState> {
        if k >= self.n_sites() {
            return Err(Error::InvalidInput(format!("center {k} outside chain of {}", self.n_sites())));
        }
        let mut out = self.clone();
        while out.canonical_center < k {
            let c = out.canonical_center;
            left_normalize_into_next(&mut out.site_tensors, c);
            out.canonical_center += 1;
        }
        while out.canonical_center > k {
            let c = out.canonical_center;
            right_normalize_into_prev(&mut out.site_tensors, c);
            out.canonical_center -= 1;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Matrix-product operator

#[derive(Clone, Copy, Debug)]
enum Op {
    Id,
    X,
    IY,
    Z,
}

impl Op {
    /// Nonzero entries `(out, in, value)` in the (up, down) basis.
    fn entries(self) -> &'static [(usize, usize, f64)] {
        match self {
            Op::Id => &[(0, 0, 1.0), (1, 1, 1.0)],
            Op::X => &[(0, 1, 1.0), (1, 0, 1.0)],
            Op::IY => &[(0, 1, 1.0), (1, 0, -1.0)],
            Op::Z => &[(0, 0, 1.0), (1, 1, -1.0)],
        }
    }
}

const MPO_DIM: usize = 5;
/// Automaton state: every term completed.
const DONE: usize = 0;
/// Automaton state: no term placed yet.
const START: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Term {
    from: usize,
    to: usize,
    op: Op,
    coef: f64,
}

fn site_mpo(r: &Realization, i: usize) -> Vec<Term> {
    let n = r.n_sites();
    let g = r.spec.gamma;
    let t = |from, to, op, coef| Term { from, to, op, coef };
    let mut terms = vec![
        t(START, START, Op::Id, 1.0),
        t(DONE, DONE, Op::Id, 1.0),
        t(1, DONE, Op::X, 1.0),
        t(2, DONE, Op::IY, 1.0),
        t(3, DONE, Op::Z, 1.0),
    ];
    let h = r.fields[i];
    if h != 0.0 {
        terms.push(t(START, DONE, Op::Z, -h / 2.0));
    }
    if i + 1 < n {
        let j = r.couplings[i];
        for (to, op, coef) in [
            (1, Op::X, j * (1.0 + g) / 4.0),
            (2, Op::IY, -j * (1.0 - g) / 4.0),
            (3, Op::Z, r.spec.delta / 4.0),
        ] {
            if coef != 0.0 {
                terms.push(t(START, to, op, coef));
            }
        }
    }
    terms
}

/// Environment blocks, one `D × D` matrix (bra row, ket column) per MPO
/// state.
type Env = Vec<DMatrix<f64>>;

fn left_boundary() -> Env {
    let mut env = vec![DMatrix::zeros(1, 1); MPO_DIM];
    env[START][(0, 0)] = 1.0;
    env
}

fn right_boundary() -> Env {
    let mut env = vec![DMatrix::zeros(1, 1); MPO_DIM];
    env[DONE][(0, 0)] = 1.0;
    env
}

fn extend_left(env: &Env, a: &SiteTensor, terms: &[Term]) -> Env {
    let dr = a[0].ncols();
    let mut out = vec![DMatrix::zeros(dr, dr); MPO_DIM];
    let mut cache: Vec<Option<DMatrix<f64>>> = vec![None; MPO_DIM * 2];
    for term in terms {
        for &(s, sp, v) in term.op.entries() {
            let key = term.from * 2 + sp;
            let la = cache[key].get_or_insert_with(|| &env[term.from] * &a[sp]);
            out[term.to].gemm_tr(term.coef * v, &a[s], la, 1.0);
        }
    }
    out
}

fn extend_right(env: &Env, b: &SiteTensor, terms: &[Term]) -> Env {
    let dl = b[0].nrows();
    let mut out = vec![DMatrix::zeros(dl, dl); MPO_DIM];
    let mut cache: Vec<Option<DMatrix<f64>>> = vec![None; MPO_DIM * 2];
    for term in terms {
        for &(s, sp, v) in term.op.entries() {
            let key = term.to * 2 + sp;
            let rb = cache[key].get_or_insert_with(|| &env[term.to] * b[sp].transpose());
            out[term.from].gemm(term.coef * v, &b[s], rb, 1.0);
        }
    }
    out
}

fn add_scaled(slot: &mut Option<DMatrix<f64>>, alpha: f64, m: &DMatrix<f64>) {
    match slot {
        Some(acc) => acc.zip_apply(m, |x, y| *x += alpha * y),
        None => *slot = Some(m * alpha),
    }
}

/// Two-site effective Hamiltonian acting on `θ[s1, s2]` blocks.
struct TwoSiteOperator<'a> {
    left: &'a Env,
    right_t: Vec<DMatrix<f64>>,
    w1: &'a [Term],
    w2: &'a [Term],
    dl: usize,
    dr: usize,
}

impl<'a> TwoSiteOperator<'a> {
    fn new(left: &'a Env, right: &Env, w1: &'a [Term], w2: &'a [Term]) -> Self {
        TwoSiteOperator {
            left,
            right_t: right.iter().map(|m| m.transpose()).collect(),
            w1,
            w2,
            dl: left[0].nrows(),
            dr: right[0].nrows(),
        }
    }

    fn dim(&self) -> usize {
        4 * self.dl * self.dr
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let block = self.dl * self.dr;
        let theta: Vec<DMatrix<f64>> = (0..4)
            .map(|k| DMatrix::from_column_slice(self.dl, self.dr, &x[k * block..(k + 1) * block]))
            .collect();
        // L[a] θ[s1 s2]
        let mut lx: Vec<Option<DMatrix<f64>>> = vec![None; MPO_DIM * 4];
        for a in 0..MPO_DIM {
            if self.left[a].iter().all(|v| *v == 0.0) {
                continue;
            }
            for k in 0..4 {
                lx[a * 4 + k] = Some(&self.left[a] * &theta[k]);
            }
        }
        // First site operator: (a, s1 s2) -> (b, t1 s2).
        let mut y1: Vec<Option<DMatrix<f64>>> = vec![None; MPO_DIM * 4];
        for term in self.w1 {
            for &(t1, s1, v) in term.op.entries() {
                for s2 in 0..2 {
                    if let Some(m) = &lx[term.from * 4 + s1 * 2 + s2] {
                        add_scaled(&mut y1[term.to * 4 + t1 * 2 + s2], term.coef * v, m);
                    }
                }
            }
        }
        // Second site operator: (b, t1 s2) -> (c, t1 t2).
        let mut y2: Vec<Option<DMatrix<f64>>> = vec![None; MPO_DIM * 4];
        for term in self.w2 {
            for &(t2, s2, v) in term.op.entries() {
                for t1 in 0..2 {
                    if let Some(m) = &y1[term.from * 4 + t1 * 2 + s2] {
                        add_scaled(&mut y2[term.to * 4 + t1 * 2 + t2], term.coef * v, m);
                    }
                }
            }
        }
        y.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..4 {
            let mut out = DMatrix::<f64>::zeros(self.dl, self.dr);
            for c in 0..MPO_DIM {
                if let Some(m) = &y2[c * 4 + k] {
                    out.gemm(1.0, m, &self.right_t[c], 1.0);
                }
            }
            y[k * block..(k + 1) * block].copy_from_slice(out.as_slice());
        }
    }
}

// ---------------------------------------------------------------------------
// Gauge manipulation

/// `E' = Σ_s A[s]ᵀ E A[s]`.
fn transfer_left(e: &DMatrix<f64>, a: &SiteTensor) -> DMatrix<f64> {
    a[0].tr_mul(&(e * &a[0])) + a[1].tr_mul(&(e * &a[1]))
}

/// `E' = Σ_s A[s] E A[s]ᵀ`.
fn transfer_right(e: &DMatrix<f64>, a: &SiteTensor) -> DMatrix<f64> {
    &a[0] * e * a[0].transpose() + &a[1] * e * a[1].transpose()
}

/// Left-normalizes site `k` and pushes the remainder into site `k + 1`.
fn left_normalize_into_next(tensors: &mut [SiteTensor], k: usize) {
    let (dl, dr) = tensors[k][0].shape();
    let mut m = DMatrix::<f64>::zeros(2 * dl, dr);
    m.rows_mut(0, dl).copy_from(&tensors[k][0]);
    m.rows_mut(dl, dl).copy_from(&tensors[k][1]);
    let qr = m.qr();
    let q = qr.q();
    let r = qr.r();
    tensors[k] = [q.rows(0, dl).into_owned(), q.rows(dl, dl).into_owned()];
    if k + 1 < tensors.len() {
        let next = &tensors[k + 1];
        tensors[k + 1] = [&r * &next[0], &r * &next[1]];
    } else {
        let s = r[(0, 0)];
        tensors[k][0] *= s;
        tensors[k][1] *= s;
    }
}

/// Right-normalizes site `k` and pushes the remainder into site `k - 1`.
fn right_normalize_into_prev(tensors: &mut [SiteTensor], k: usize) {
    let (dl, dr) = tensors[k][0].shape();
    let mut m = DMatrix::<f64>::zeros(2 * dr, dl);
    m.rows_mut(0, dr).copy_from(&tensors[k][0].transpose());
    m.rows_mut(dr, dr).copy_from(&tensors[k][1].transpose());
    let qr = m.qr();
    let q = qr.q();
    let r = qr.r();
    tensors[k] = [q.rows(0, dr).transpose(), q.rows(dr, dr).transpose()];
    if k > 0 {
        let prev = &tensors[k - 1];
        let rt = r.transpose();
        tensors[k - 1] = [&prev[0] * &rt, &prev[1] * &rt];
    } else {
        let s = r[(0, 0)];
        tensors[k][0] *= s;
        tensors[k][1] *= s;
    }
}

/// Truncated split of a two-site wavefunction.
struct Split {
    left: SiteTensor,
    right: SiteTensor,
    discarded: f64,
    capped: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Absorb {
    /// Singular values go to the right tensor (left one is left-normalized).
    Right,
    /// Singular values go to the left tensor.
    Left,
    /// Neither tensor carries them.
    Neither,
}

fn split_two_site(x: &[f64], dl: usize, dr: usize, chi_max: usize, cutoff: f64, absorb: Absorb) -> Result<Split> {
    let block = dl * dr;
    let mut m = DMatrix::<f64>::zeros(2 * dl, 2 * dr);
    for s1 in 0..2 {
        for s2 in 0..2 {
            let k = s1 * 2 + s2;
            let th = DMatrix::from_column_slice(dl, dr, &x[k * block..(k + 1) * block]);
            m.view_mut((s1 * dl, s2 * dr), (dl, dr)).copy_from(&th);
        }
    }
    let svd = m.try_svd(true, true, 1e-15, 0)
        .ok_or_else(|| Error::Decomposition("SVD of two-site tensor did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let total: f64 = sv.iter().map(|s| s * s).sum();

    // Smallest k whose tail weight stays within the cutoff.
    let mut keep = sv.len();
    let mut tail = 0.0;
    while keep > 1 {
        let w = sv[keep - 1] * sv[keep - 1];
        if (tail + w) / total > cutoff {
            break;
        }
        tail += w;
        keep -= 1;
    }
    let capped = keep > chi_max;
    let keep = keep.min(chi_max);
    let discarded = sv[keep..].iter().map(|s| s * s).sum::<f64>() / total;
    let kept_norm = sv[..keep].iter().map(|s| s * s).sum::<f64>().sqrt();
    let s: Vec<f64> = sv[..keep].iter().map(|v| v / kept_norm).collect();

    let uk = DMatrix::from_fn(2 * dl, keep, |r, c| u[(r, order[c])]);
    let vk = DMatrix::from_fn(keep, 2 * dr, |r, c| vt[(order[r], c)]);
    let (uk, vk) = match absorb {
        Absorb::Right => (uk, DMatrix::from_fn(keep, 2 * dr, |r, c| s[r] * vk[(r, c)])),
        Absorb::Left => (DMatrix::from_fn(2 * dl, keep, |r, c| uk[(r, c)] * s[c]), vk),
        Absorb::Neither => (uk, vk),
    };
    Ok(Split {
        left: [uk.rows(0, dl).into_owned(), uk.rows(dl, dl).into_owned()],
        right: [vk.columns(0, dr).into_owned(), vk.columns(dr, dr).into_owned()],
        discarded,
        capped,
    })
}

fn theta(a: &SiteTensor, b: &SiteTensor) -> Vec<f64> {
    let (dl, dr) = (a[0].nrows(), b[0].ncols());
    let mut x = Vec::with_capacity(4 * dl * dr);
    for s1 in 0..2 {
        for s2 in 0..2 {
            x.extend_from_slice((&a[s1] * &b[s2]).as_slice());
        }
    }
    x
}

fn lanczos_settings() -> LanczosSettings {
    LanczosSettings {
        n_eig: 1,
        tol: 1e-9,
        max_iter: 80,
        require_convergence: false,
    }
}

fn lowest_two_site(op: &TwoSiteOperator, start: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    let pairs = linalg::lanczos(op.dim(), |x, y| op.apply(x, y), start, lanczos_settings())?;
    Ok((pairs.values[0], pairs.vectors[0].clone()))
}

// ---------------------------------------------------------------------------
// DMRG driver

fn check_realization(r: &Realization) -> Result<()> {
    if r.spec.model_kind != ModelKind::Xyz {
        return Err(Error::Unsupported { solver: "mps", what: "XY chains (use the free-fermion solver)".into() });
    }
    if r.spec.boundary != Boundary::Open {
        return Err(Error::Unsupported { solver: "mps", what: "periodic boundaries".into() });
    }
    Ok(())
}

/// Grows the chain pairwise from both ends, then right-normalizes it with
/// the center at site 0.
fn warmup_growth(r: &Realization, mpo: &[Vec<Term>], cfg: &DmrgConfig) -> Result<(Vec<SiteTensor>, f64)> {
    let n = r.n_sites();
    let half = n / 2;
    let mut left_env = left_boundary();
    let mut right_env = right_boundary();
    let mut left: Vec<SiteTensor> = Vec::with_capacity(half);
    let mut right: Vec<SiteTensor> = Vec::with_capacity(half);
    let mut energy = f64::NAN;
    for l in 0..half {
        let rs = n - 1 - l;
        let op = TwoSiteOperator::new(&left_env, &right_env, &mpo[l], &mpo[rs]);
        let (e, x) = lowest_two_site(&op, None)?;
        energy = e;
        let last = l + 1 == half;
        let absorb = if last { Absorb::Left } else { Absorb::Neither };
        let split = split_two_site(&x, op.dl, op.dr, cfg.chi_max, cfg.svd_cutoff, absorb)?;
        if !last {
            left_env = extend_left(&left_env, &split.left, &mpo[l]);
            right_env = extend_right(&right_env, &split.right, &mpo[rs]);
        }
        left.push(split.left);
        right.push(split.right);
    }
    right.reverse();
    let mut tensors = left;
    tensors.extend(right);
    for k in (1..half).rev() {
        right_normalize_into_prev(&mut tensors, k);
    }
    Ok((tensors, energy))
}

fn random_state(n: usize, cfg: &DmrgConfig) -> Vec<SiteTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chi0 = cfg.chi_max.min(8);
    let dim = |k: usize| -> usize {
        // Bond k sits between sites k-1 and k.
        let cap = |e: usize| if e >= 6 { usize::MAX } else { 1usize << e };
        cap(k).min(cap(n - k)).min(chi0)
    };
    let mut tensors: Vec<SiteTensor> = (0..n)
        .map(|k| {
            let (dl, dr) = (dim(k), dim(k + 1));
            let mut gen = || DMatrix::from_fn(dl, dr, |_, _| rng.random::<f64>() - 0.5);
            [gen(), gen()]
        })
        .collect();
    for k in (0..n).rev() {
        right_normalize_into_prev(&mut tensors, k);
    }
    let norm = {
        let t = &tensors[0];
        (t[0].norm_squared() + t[1].norm_squared()).sqrt()
    };
    tensors[0][0] /= norm;
    tensors[0][1] /= norm;
    tensors
}

fn expectation(tensors: &[SiteTensor], mpo: &[Vec<Term>]) -> f64 {
    let mut env = left_boundary();
    for (t, w) in tensors.iter().zip(mpo) {
        env = extend_left(&env, t, w);
    }
    env[DONE][(0, 0)]
}

/// Variational energy `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` of an MPS for realization `r`.
pub fn mps_energy(s: &MpsState, r: &Realization) -> Result<f64> {
    check_realization(r)?;
    if s.n_sites() != r.n_sites() {
        return Err(Error::InvalidInput("MPS and realization sizes differ".into()));
    }
    let mpo: Vec<Vec<Term>> = (0..r.n_sites()).map(|i| site_mpo(r, i)).collect();
    Ok(expectation(&s.site_tensors, &mpo) / s.norm_squared())
}

pub fn dmrg_ground_state(r: &Realization, cfg: &DmrgConfig) -> Result<MpsState> {
    check_realization(r)?;
    cfg.validate()?;
    let n = r.n_sites();
    let mpo: Vec<Vec<Term>> = (0..n).map(|i| site_mpo(r, i)).collect();

    let (mut tensors, e0) = match cfg.warmup {
        Warmup::InfiniteGrowth if n % 2 == 0 => warmup_growth(r, &mpo, cfg)?,
        _ => {
            if cfg.warmup == Warmup::InfiniteGrowth {
                log::info!("odd chain length {n}: random initial state instead of growth");
            }
            let t = random_state(n, cfg);
            let e = expectation(&t, &mpo);
            (t, e)
        }
    };

    let mut right_envs: Vec<Env> = vec![Vec::new(); n + 1];
    right_envs[n] = right_boundary();
    for k in (1..n).rev() {
        right_envs[k] = extend_right(&right_envs[k + 1], &tensors[k], &mpo[k]);
    }
    let mut left_envs: Vec<Env> = vec![Vec::new(); n + 1];
    left_envs[0] = left_boundary();

    let mut energies = vec![e0];
    let mut converged = false;
    let mut sweep_discarded = 0.0;
    let mut worst_capped = 0.0f64;
    for _ in 0..cfg.n_sweeps {
        sweep_discarded = 0.0;
        worst_capped = 0.0;
        let mut energy = f64::NAN;
        let directions = [Absorb::Right, Absorb::Left];
        for dir in directions {
            let bonds: Vec<usize> = match dir {
                Absorb::Right => (0..n - 1).collect(),
                _ => (0..n - 1).rev().collect(),
            };
            for i in bonds {
                let start = theta(&tensors[i], &tensors[i + 1]);
                let op = TwoSiteOperator::new(&left_envs[i], &right_envs[i + 2], &mpo[i], &mpo[i + 1]);
                let (e, x) = lowest_two_site(&op, Some(&start))?;
                energy = e;
                let split = split_two_site(&x, op.dl, op.dr, cfg.chi_max, cfg.svd_cutoff, dir)?;
                sweep_discarded += split.discarded;
                if split.capped {
                    worst_capped = worst_capped.max(split.discarded);
                }
                tensors[i] = split.left;
                tensors[i + 1] = split.right;
                match dir {
                    Absorb::Right => left_envs[i + 1] = extend_left(&left_envs[i], &tensors[i], &mpo[i]),
                    _ => right_envs[i + 1] = extend_right(&right_envs[i + 2], &tensors[i + 1], &mpo[i + 1]),
                }
            }
        }
        let prev = *energies.last().expect("warmup energy");
        energies.push(energy);
        if (energy - prev).abs() < cfg.energy_tol {
            converged = true;
            break;
        }
    }
    let k = energies.len();
    if !converged {
        return Err(Error::DmrgNotConverged { prev: energies[k - 2], last: energies[k - 1] });
    }
    if worst_capped > cfg.max_truncation {
        return Err(Error::TruncationExceeded(worst_capped));
    }
    Ok(MpsState {
        site_tensors: tensors,
        canonical_center: 0,
        energy: energies[k - 1],
        truncation_error: sweep_discarded,
        sweep_energies: energies,
    })
}

// ---------------------------------------------------------------------------
// Reduced density matrices

/// Default distance from either chain end for RDM sites.
pub fn default_margin(n_sites: usize) -> usize {
    n_sites / 4
}

/// Two-site RDM for sites `i < j`, each at least `n/4` sites from the ends.
pub fn mps_two_site_rdm(s: &MpsState, i: usize, j: usize) -> Result<TwoSiteState> {
    mps_two_site_rdm_with_margin(s, i, j, default_margin(s.n_sites()))
}

pub fn mps_two_site_rdm_with_margin(s: &MpsState, i: usize, j: usize, margin: usize) -> Result<TwoSiteState> {
    let n = s.n_sites();
    if !(i < j && j < n) {
        return Err(Error::PairOutOfRange { i, j, n });
    }
    if i.min(n - 1 - j) < margin {
        return Err(Error::MarginViolation { i, j, margin });
    }
    let t = &s.site_tensors;
    let mut left = DMatrix::from_element(1, 1, 1.0);
    for a in &t[..i] {
        left = transfer_left(&left, a);
    }
    let mut right = DMatrix::from_element(1, 1, 1.0);
    for a in t[j + 1..].iter().rev() {
        right = transfer_right(&right, a);
    }
    let mut rho = Matrix4::<Complex64>::zeros();
    for s1 in 0..2 {
        for s1p in 0..2 {
            let mut f = t[i][s1].tr_mul(&(&left * &t[i][s1p]));
            for a in &t[i + 1..j] {
                f = transfer_left(&f, a);
            }
            for s2 in 0..2 {
                for s2p in 0..2 {
                    let g = t[j][s2].tr_mul(&(&f * &t[j][s2p]));
                    let v = g.component_mul(&right).sum();
                    rho[(2 * s1 + s2, 2 * s1p + s2p)] = Complex64::new(v, 0.0);
                }
            }
        }
    }
    let tr = rho.trace().re;
    if !(tr > 0.0) {
        return Err(Error::NonPhysical(format!("RDM trace {tr}")));
    }
    rho.unscale_mut(tr);
    let raw = TwoSiteState::new(rho, (i, j))?;
    let off = raw.off_x_magnitude();
    if off > OFF_X_WARN {
        log::warn!("RDM ({i}, {j}) has parity-odd entries up to {off:.2e}; projecting to X form");
    }
    raw.project_x()
}

// ---------------------------------------------------------------------------
// Checkpoints

const MAGIC: &[u8; 8] = b"QCORRMPS";
const FORMAT_VERSION: u32 = 1;

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Binary layout: magic, `u32` version, then little-endian `u64`/`f64`
/// fields: site count, center, energy, truncation error, sweep energies
/// (count + values), and per site `Dl`, `Dr` and both column-major blocks.
pub fn write_checkpoint<W: Write>(s: &MpsState, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    put_u64(w, s.n_sites() as u64)?;
    put_u64(w, s.canonical_center as u64)?;
    put_f64(w, s.energy)?;
    put_f64(w, s.truncation_error)?;
    put_u64(w, s.sweep_energies.len() as u64)?;
    for &e in &s.sweep_energies {
        put_f64(w, e)?;
    }
    for t in &s.site_tensors {
        put_u64(w, t[0].nrows() as u64)?;
        put_u64(w, t[0].ncols() as u64)?;
        for m in t {
            for &v in m.as_slice() {
                put_f64(w, v)?;
            }
        }
    }
    Ok(())
}

const MAX_CHECKPOINT_DIM: u64 = 1 << 16;

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<MpsState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not an MPS checkpoint".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let n = get_u64(r)?;
    let center = get_u64(r)?;
    if n == 0 || n > MAX_CHECKPOINT_DIM || center >= n {
        return Err(Error::Parse(format!("bad header: {n} sites, center {center}")));
    }
    let energy = get_f64(r)?;
    let truncation_error = get_f64(r)?;
    let n_energies = get_u64(r)?;
    if n_energies > MAX_CHECKPOINT_DIM {
        return Err(Error::Parse("implausible sweep count".into()));
    }
    let sweep_energies = (0..n_energies).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    let mut site_tensors = Vec::with_capacity(n as usize);
    let mut prev_dr = 1;
    for k in 0..n {
        let dl = get_u64(r)?;
        let dr = get_u64(r)?;
        if dl == 0 || dr == 0 || dl > MAX_CHECKPOINT_DIM || dr > MAX_CHECKPOINT_DIM || dl != prev_dr {
            return Err(Error::Parse(format!("inconsistent bond dimensions at site {k}")));
        }
        prev_dr = dr;
        let (dl, dr) = (dl as usize, dr as usize);
        let mut read_block = || -> Result<DMatrix<f64>> {
            let data = (0..dl * dr).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
            Ok(DMatrix::from_vec(dl, dr, data))
        };
        let up = read_block()?;
        let down = read_block()?;
        site_tensors.push([up, down]);
    }
    if prev_dr != 1 {
        return Err(Error::Parse("last bond dimension must be 1".into()));
    }
    Ok(MpsState {
        site_tensors,
        canonical_center: center as usize,
        energy,
        truncation_error,
        sweep_energies,
    })
}
