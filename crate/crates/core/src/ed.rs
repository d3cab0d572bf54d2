//! Exact diagonalization of XY and XYZ chains on the full `2^N` Hilbert
//! space. Used as a validation oracle for the free-fermion and DMRG solvers.
//!
//! Basis: bit `k` of a basis index is site `k`, with bit value 0 meaning spin
//! up (`σz = +1`). The Hamiltonians conserve `Π σz`, so each parity block is
//! diagonalized separately.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Eigenpairs, LanczosSettings};
use crate::model::{ModelKind, Realization};
use crate::qcorr::TwoSiteState;

pub const MAX_SITES: usize = 14;
/// Blocks up to this dimension are diagonalized densely, larger ones with
/// Lanczos.
const DENSE_BLOCK_MAX: usize = 256;
/// Energies closer than this are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ManyBodyState {
    pub n_sites: usize,
    pub amplitudes: Vec<f64>,
    pub energy: f64,
    pub degeneracy_multiplicity: usize,
}

#[derive(Clone, Copy, Debug)]
struct Bond {
    i: usize,
    j: usize,
    xx: f64,
    yy: f64,
    zz: f64,
}

struct SpinHamiltonian {
    bonds: Vec<Bond>,
    /// Coefficient of `σz_i` (i.e. `-h_i / 2`).
    z_fields: Vec<f64>,
}

impl SpinHamiltonian {
    fn from_realization(r: &Realization) -> Self {
        let g = r.spec.gamma;
        let delta = match r.spec.model_kind {
            ModelKind::Xy => 0.0,
            ModelKind::Xyz => r.spec.delta,
        };
        let bonds = r
            .bonds()
            .map(|(i, j, coupling)| Bond {
                i,
                j,
                xx: coupling * (1.0 + g) / 4.0,
                yy: coupling * (1.0 - g) / 4.0,
                zz: delta / 4.0,
            })
            .collect();
        SpinHamiltonian {
            bonds,
            z_fields: r.fields.iter().map(|h| -h / 2.0).collect(),
        }
    }

    fn z(state: usize, site: usize) -> f64 {
        if state >> site & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn diagonal(&self, s: usize) -> f64 {
        let mut e = 0.0;
        for b in &self.bonds {
            e += b.zz * Self::z(s, b.i) * Self::z(s, b.j);
        }
        for (k, f) in self.z_fields.iter().enumerate() {
            e += f * Self::z(s, k);
        }
        e
    }

    /// Off-diagonal entries `(s', amplitude)` of column `s`.
    fn flips(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.bonds.iter().map(move |b| {
            let aligned = (s >> b.i & 1) == (s >> b.j & 1);
            // σyσy|ab> = -(-1)^(a+b) |āb̄>
            let amp = if aligned { b.xx - b.yy } else { b.xx + b.yy };
            (s ^ (1 << b.i) ^ (1 << b.j), amp)
        })
    }

    fn apply_full(&self, x: &[f64], y: &mut [f64]) {
        for (s, ys) in y.iter_mut().enumerate() {
            *ys = self.diagonal(s) * x[s];
        }
        for s in 0..x.len() {
            if x[s] != 0.0 {
                for (t, amp) in self.flips(s) {
                    y[t] += amp * x[s];
                }
            }
        }
    }
}

/// Expectation value `<ψ|H|ψ>` for a normalized real state.
pub fn energy_expectation(r: &Realization, amplitudes: &[f64]) -> f64 {
    let h = SpinHamiltonian::from_realization(r);
    let mut y = vec![0.0; amplitudes.len()];
    h.apply_full(amplitudes, &mut y);
    linalg::dot(amplitudes, &y)
}

struct Block {
    states: Vec<usize>,
    index_of: Vec<usize>,
}

fn parity_block(n: usize, parity: u32) -> Block {
    let dim = 1usize << n;
    let mut index_of = vec![usize::MAX; dim];
    let mut states = Vec::with_capacity(dim / 2);
    for s in 0..dim {
        if s.count_ones() % 2 == parity {
            index_of[s] = states.len();
            states.push(s);
        }
    }
    Block { states, index_of }
}

fn lowest_in_block(h: &SpinHamiltonian, block: &Block) -> Result<Eigenpairs> {
    let dim = block.states.len();
    let mut lowest = if dim <= DENSE_BLOCK_MAX {
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for (c, &s) in block.states.iter().enumerate() {
            m[(c, c)] += h.diagonal(s);
            for (t, amp) in h.flips(s) {
                m[(block.index_of[t], c)] += amp;
            }
        }
        linalg::dense_eigh(m)
    } else {
        let apply = |x: &[f64], y: &mut [f64]| {
            for (c, &s) in block.states.iter().enumerate() {
                y[c] = h.diagonal(s) * x[c];
            }
            for (c, &s) in block.states.iter().enumerate() {
                for (t, amp) in h.flips(s) {
                    y[block.index_of[t]] += amp * x[c];
                }
            }
        };
        let settings = LanczosSettings {
            n_eig: 2.min(dim),
            tol: 1e-12,
            max_iter: 400,
            ..LanczosSettings::default()
        };
        linalg::lanczos(dim, apply, None, settings)?
    };
    lowest.values.truncate(2);
    lowest.vectors.truncate(2);
    Ok(lowest)
}

/// Fixes the sign so the largest-magnitude amplitude is positive.
fn fix_phase(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Ground state by exact diagonalization. When the two lowest levels agree
/// within [`DEGENERACY_TOL`], the equal superposition of the two
/// (phase-fixed) eigenvectors is returned.
pub fn ed_ground_state(r: &Realization) -> Result<ManyBodyState> {
    let n = r.n_sites();
    if n > MAX_SITES {
        return Err(Error::TooLarge(n));
    }
    let h = SpinHamiltonian::from_realization(r);
    let dim = 1usize << n;
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    for parity in [0, 1] {
        let block = parity_block(n, parity);
        let pairs = lowest_in_block(&h, &block)?;
        for (e, v) in pairs.values.into_iter().zip(pairs.vectors) {
            let mut full = vec![0.0; dim];
            for (c, &s) in block.states.iter().enumerate() {
                full[s] = v[c];
            }
            candidates.push((e, full));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (e0, mut v0) = candidates[0].clone();
    let (e1, mut v1) = candidates[1].clone();
    if (e1 - e0).abs() < DEGENERACY_TOL {
        fix_phase(&mut v0);
        fix_phase(&mut v1);
        let amplitudes: Vec<f64> = v0
            .iter()
            .zip(&v1)
            .map(|(a, b)| (a + b) / std::f64::consts::SQRT_2)
            .collect();
        Ok(ManyBodyState {
            n_sites: n,
            amplitudes,
            energy: 0.5 * (e0 + e1),
            degeneracy_multiplicity: 2,
        })
    } else {
        fix_phase(&mut v0);
        Ok(ManyBodyState {
            n_sites: n,
            amplitudes: v0,
            energy: e0,
            degeneracy_multiplicity: 1,
        })
    }
}

/// Exact reduced density matrix of sites `i < j`.
pub fn ed_two_site_rdm(s: &ManyBodyState, i: usize, j: usize) -> Result<TwoSiteState> {
    if !(i < j && j < s.n_sites) {
        return Err(Error::PairOutOfRange { i, j, n: s.n_sites });
    }
    let mut rho = Matrix4::<Complex64>::zeros();
    let mask = (1usize << i) | (1usize << j);
    for (idx, &amp) in s.amplitudes.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        let row = 2 * (idx >> i & 1) + (idx >> j & 1);
        let rest = idx & !mask;
        for col in 0..4 {
            let other = rest | ((col >> 1) << i) | ((col & 1) << j);
            rho[(row, col)] += Complex64::new(amp * s.amplitudes[other], 0.0);
        }
    }
    TwoSiteState::new(rho, (i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ordered_realization, sample_realization, Boundary, ChainSpec, DisorderSpec, DisorderTarget};

    #[test]
    fn decoupled_spins_align_with_field() {
        for gamma in [0.0, 0.5, 1.0] {
            let spec = ChainSpec::xy(2, gamma, 0.0, 1.0).unwrap();
            let gs = ed_ground_state(&ordered_realization(&spec, 0.0, 1.0)).unwrap();
            assert!((gs.energy + 1.0).abs() < 1e-12);
            assert!((gs.amplitudes[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_site_ising_bond() {
        // One bond, γ = 1, h = 0: H = (J/2) σxσx with ground energy -1/2.
        let spec = ChainSpec::xy(2, 1.0, 1.0, 0.0)
            .unwrap()
            .with_boundary(Boundary::Open)
            .unwrap();
        let gs = ed_ground_state(&ordered_realization(&spec, 1.0, 0.0)).unwrap();
        assert!((gs.energy + 0.5).abs() < 1e-12);
    }

    #[test]
    fn product_state_rdm_has_no_concurrence() {
        let spec = ChainSpec::xy(4, 0.5, 0.0, 1.0).unwrap();
        let gs = ed_ground_state(&ordered_realization(&spec, 0.0, 1.0)).unwrap();
        let rdm = ed_two_site_rdm(&gs, 0, 2).unwrap();
        assert!(crate::qcorr::concurrence(&rdm) < 1e-12);
        assert!((rdm.rho[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ghz_partial_trace() {
        // (|000> + |111>)/√2: every pair has T^zz = 1 and no xx/yy coherence.
        let mut amplitudes = vec![0.0; 8];
        amplitudes[0] = std::f64::consts::FRAC_1_SQRT_2;
        amplitudes[7] = std::f64::consts::FRAC_1_SQRT_2;
        let s = ManyBodyState { n_sites: 3, amplitudes, energy: 0.0, degeneracy_multiplicity: 1 };
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let rdm = ed_two_site_rdm(&s, i, j).unwrap();
            assert!((rdm.pauli_expectation(3, 3) - 1.0).abs() < 1e-14);
            assert!(rdm.pauli_expectation(1, 1).abs() < 1e-14);
            assert!(rdm.pauli_expectation(2, 2).abs() < 1e-14);
        }
        assert!(ed_two_site_rdm(&s, 2, 1).is_err());
        assert!(ed_two_site_rdm(&s, 0, 3).is_err());
    }

    #[test]
    fn ground_states_are_normalized_variational_and_x_form() {
        let dis = DisorderSpec::gaussian(DisorderTarget::Coupling, 0.5, 1.0);
        for (n, boundary) in [(6, Boundary::Periodic), (9, Boundary::Open), (10, Boundary::Periodic)] {
            let spec = ChainSpec::xy(n, 0.5, 0.5, 1.0).unwrap().with_boundary(boundary).unwrap();
            for k in 0..4 {
                let r = sample_realization(&spec, &dis, 11, k).unwrap();
                let gs = ed_ground_state(&r).unwrap();
                let norm: f64 = gs.amplitudes.iter().map(|a| a * a).sum();
                assert!((norm - 1.0).abs() < 1e-12);
                assert!((energy_expectation(&r, &gs.amplitudes) - gs.energy).abs() < 1e-10);
                if gs.degeneracy_multiplicity == 1 {
                    let rdm = ed_two_site_rdm(&gs, 0, n / 2).unwrap();
                    assert!(rdm.off_x_magnitude() < 1e-10);
                    assert!(rdm.pauli_expectation(1, 0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn xyz_chain_conserves_parity() {
        let spec = ChainSpec::xyz(8, 0.5, 0.5, 1.0, 1.0).unwrap();
        let dis = DisorderSpec::gaussian(DisorderTarget::Coupling, 0.5, 1.0);
        let r = sample_realization(&spec, &dis, 3, 0).unwrap();
        let gs = ed_ground_state(&r).unwrap();
        let rdm = ed_two_site_rdm(&gs, 2, 5).unwrap();
        assert!(rdm.off_x_magnitude() < 1e-10);
        assert!((energy_expectation(&r, &gs.amplitudes) - gs.energy).abs() < 1e-10);
    }

    #[test]
    fn rdm_is_phase_invariant() {
        let spec = ChainSpec::xy(6, 0.5, 0.8, 1.0).unwrap();
        let gs = ed_ground_state(&ordered_realization(&spec, 0.8, 1.0)).unwrap();
        let mut flipped = gs.clone();
        flipped.amplitudes.iter_mut().for_each(|a| *a = -*a);
        let a = ed_two_site_rdm(&gs, 1, 4).unwrap();
        let b = ed_two_site_rdm(&flipped, 1, 4).unwrap();
        assert!(a.trace_distance(&b) < 1e-15);
    }

    #[test]
    fn too_many_sites_is_an_error() {
        let spec = ChainSpec::xy(15, 0.5, 1.0, 1.0).unwrap();
        assert!(matches!(
            ed_ground_state(&ordered_realization(&spec, 1.0, 1.0)),
            Err(Error::TooLarge(15))
        ));
    }
}
