//! Exact ground states of (disordered) XY chains via the Jordan-Wigner
//! mapping to free fermions.
//!
//! With `σz = 2 c†c - 1` the XY Hamiltonian becomes
//! `H = Σ c†_i A_ij c_j + ½ Σ (c†_i B_ij c†_j + h.c.) + const`, which in
//! terms of Majorana operators `x = c† + c`, `y = i(c† - c)` reads
//! `H = (i/2) Σ x_i (A - B)_ij y_j + const`. A singular value decomposition
//! `A - B = U Σ Vᵀ` diagonalizes it; the ground state is encoded in the
//! contraction matrix `G_mn = <B_m A_n>` with `A_n = c†_n + c_n`,
//! `B_m = c†_m - c_m`.
//!
//! For periodic chains the boundary link picks up the factor `-P`, where `P`
//! is the fermion parity, so the even- and odd-parity sectors are solved
//! with antiperiodic and periodic fermions respectively.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Boundary, ModelKind, Realization};
use crate::qcorr::TwoSiteState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParitySector {
    Even,
    Odd,
    /// No boundary link; the matrices are the same in both sectors.
    Both,
}

impl ParitySector {
    /// Sign carried by the boundary link in this sector.
    fn boundary_sign(self) -> f64 {
        match self {
            ParitySector::Even => -1.0,
            ParitySector::Odd | ParitySector::Both => 1.0,
        }
    }

    /// Fermion parity `(-1)^{N_f}` of states in this sector.
    fn parity(self) -> Option<f64> {
        match self {
            ParitySector::Even => Some(1.0),
            ParitySector::Odd => Some(-1.0),
            ParitySector::Both => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub a_matrix: DMatrix<f64>,
    pub b_matrix: DMatrix<f64>,
    pub parity_sector: ParitySector,
    pub constant_offset: f64,
    /// Hopping and pairing amplitudes of the boundary link `(N-1, 0)`, which
    /// the matrices above hold with the odd-sector (periodic) sign.
    boundary_link: Option<(f64, f64)>,
}

impl QuadraticForm {
    pub fn n_modes(&self) -> usize {
        self.a_matrix.nrows()
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary_link.is_some()
    }

    /// The form restricted to one parity sector.
    pub fn in_sector(&self, sector: ParitySector) -> QuadraticForm {
        let mut q = self.clone();
        q.parity_sector = sector;
        if let Some((hop, pair)) = self.boundary_link {
            let n = self.n_modes();
            let shift = sector.boundary_sign() - 1.0;
            q.a_matrix[(n - 1, 0)] += shift * hop;
            q.a_matrix[(0, n - 1)] += shift * hop;
            q.b_matrix[(n - 1, 0)] += shift * pair;
            q.b_matrix[(0, n - 1)] -= shift * pair;
        }
        q
    }
}

pub fn build_quadratic_form(r: &Realization) -> Result<QuadraticForm> {
    if r.spec.model_kind != ModelKind::Xy {
        return Err(Error::Unsupported {
            solver: "free-fermion",
            what: "the XYZ chain".into(),
        });
    }
    let n = r.n_sites();
    let g = r.spec.gamma;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, n);
    for (k, &h) in r.fields.iter().enumerate() {
        a[(k, k)] = -h;
    }
    for (i, j, coupling) in r.bonds() {
        a[(i, j)] += coupling / 2.0;
        a[(j, i)] += coupling / 2.0;
        b[(i, j)] += g * coupling / 2.0;
        b[(j, i)] -= g * coupling / 2.0;
    }
    let boundary_link = (r.spec.boundary == Boundary::Periodic).then(|| {
        let coupling = r.couplings[n - 1];
        (coupling / 2.0, g * coupling / 2.0)
    });
    Ok(QuadraticForm {
        a_matrix: a,
        b_matrix: b,
        parity_sector: ParitySector::Both,
        constant_offset: r.fields.iter().sum::<f64>() / 2.0,
        boundary_link,
    })
}

/// One fermionic Gaussian eigenstate.
#[derive(Clone, Debug)]
pub struct GaussianState {
    pub g_matrix: DMatrix<f64>,
    pub energy: f64,
    pub parity: f64,
}

#[derive(Clone, Debug)]
pub struct GroundSolution {
    /// Contractions of the lowest state.
    pub g_matrix: DMatrix<f64>,
    pub energy: f64,
    pub degenerate: bool,
    /// The degenerate partner, whose correlators are averaged with those of
    /// the lowest state.
    pub partner: Option<GaussianState>,
    /// Ground energies of the even and odd sector (periodic chains only).
    pub sector_energies: Option<(f64, f64)>,
}

impl GroundSolution {
    pub fn n_sites(&self) -> usize {
        self.g_matrix.nrows()
    }

    fn states(&self) -> Vec<&DMatrix<f64>> {
        let mut v = vec![&self.g_matrix];
        if let Some(p) = &self.partner {
            v.push(&p.g_matrix);
        }
        v
    }
}

/// Relative tolerance (per site) for treating two energies as degenerate.
pub const DEGENERACY_TOL_PER_SITE: f64 = 1e-10;

fn sign_det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant().signum()
}

/// Vacuum and lowest single-mode excitation of the form.
fn gaussian_states(q: &QuadraticForm) -> Result<(GaussianState, GaussianState)> {
    let k = &q.a_matrix - &q.b_matrix;
    let svd = k
        .try_svd(true, true, 1e-15, 10_000)
        .ok_or_else(|| Error::Decomposition("SVD of A - B failed".into()))?;
    let u = svd.u.unwrap();
    let v = svd.v_t.unwrap().transpose();
    let sigma = svd.singular_values;
    let n = sigma.len();
    let vacuum_energy = -0.5 * sigma.sum() + 0.5 * q.a_matrix.trace() + q.constant_offset;
    let vacuum_parity = sign_det(&u) * sign_det(&v);
    let soft = sigma.imin();

    let contraction = |flip: Option<usize>| {
        let mut g = DMatrix::<f64>::zeros(n, n);
        for mode in 0..n {
            let eps = if Some(mode) == flip { -1.0 } else { 1.0 };
            // G_mn = -Σ_k ε_k V_mk U_nk
            for m in 0..n {
                let vm = eps * v[(m, mode)];
                for c in 0..n {
                    g[(m, c)] -= vm * u[(c, mode)];
                }
            }
        }
        g
    };
    let vacuum = GaussianState {
        g_matrix: contraction(None),
        energy: vacuum_energy,
        parity: vacuum_parity,
    };
    let excited = GaussianState {
        g_matrix: contraction(Some(soft)),
        energy: vacuum_energy + sigma[soft],
        parity: -vacuum_parity,
    };
    Ok((vacuum, excited))
}

pub fn solve_ground(q: &QuadraticForm) -> Result<GroundSolution> {
    let n = q.n_modes();
    let tol = DEGENERACY_TOL_PER_SITE * n as f64;
    let mut sector_energies = None;
    let mut candidates: Vec<GaussianState> = if q.is_periodic() {
        let mut out = Vec::with_capacity(2);
        for sector in [ParitySector::Even, ParitySector::Odd] {
            let form = q.in_sector(sector);
            let (vacuum, excited) = gaussian_states(&form)?;
            let want = sector.parity().unwrap();
            out.push(if vacuum.parity == want { vacuum } else { excited });
        }
        sector_energies = Some((out[0].energy, out[1].energy));
        out
    } else {
        let (vacuum, excited) = gaussian_states(q)?;
        vec![vacuum, excited]
    };
    candidates.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let second = candidates.pop().unwrap();
    let lowest = candidates.pop().unwrap();
    let degenerate = (second.energy - lowest.energy).abs() < tol;
    Ok(GroundSolution {
        g_matrix: lowest.g_matrix,
        energy: lowest.energy,
        degenerate,
        partner: degenerate.then_some(second),
        sector_energies,
    })
}

pub fn solve_realization(r: &Realization) -> Result<GroundSolution> {
    solve_ground(&build_quadratic_form(r)?)
}

/// One-point and diagonal two-point correlators of a site pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorEntry {
    pub i: usize,
    pub j: usize,
    pub mz_i: f64,
    pub mz_j: f64,
    pub txx: f64,
    pub tyy: f64,
    pub tzz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorTable {
    pub site_pairs: Vec<(usize, usize)>,
    /// Transverse magnetization of every site.
    pub mz: Vec<f64>,
    pub entries: Vec<CorrelatorEntry>,
}

impl CorrelatorTable {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "i,j,mz_i,mz_j,txx,tyy,tzz")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:e},{:e}",
                e.i, e.j, e.mz_i, e.mz_j, e.txx, e.tyy, e.tzz
            )?;
        }
        Ok(())
    }
}

pub fn write_g_matrix_csv<W: Write>(g: &DMatrix<f64>, out: &mut W) -> Result<()> {
    for r in 0..g.nrows() {
        let row: Vec<String> = (0..g.ncols()).map(|c| format!("{:e}", g[(r, c)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// `<σx_i σx_j>` as the determinant of `G_{i+a, i+1+b}`, `a, b < j - i`.
pub fn string_xx(g: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let r = j - i;
    DMatrix::from_fn(r, r, |a, b| g[(i + a, i + 1 + b)]).lu().determinant()
}

/// `<σy_i σy_j>` as the determinant of `G_{i+1+a, i+b}`, `a, b < j - i`.
pub fn string_yy(g: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let r = j - i;
    DMatrix::from_fn(r, r, |a, b| g[(i + 1 + a, i + b)]).lu().determinant()
}

fn entry_for(g: &DMatrix<f64>, i: usize, j: usize) -> CorrelatorEntry {
    CorrelatorEntry {
        i,
        j,
        mz_i: g[(i, i)],
        mz_j: g[(j, j)],
        txx: string_xx(g, i, j),
        tyy: string_yy(g, i, j),
        tzz: g[(i, i)] * g[(j, j)] - g[(i, j)] * g[(j, i)],
    }
}

/// Correlators for the given pairs. For a degenerate ground state the two
/// states' values are averaged: every observable here is parity-even, so
/// this equals the expectation in their equal superposition.
pub fn correlators(sol: &GroundSolution, pairs: &[(usize, usize)]) -> Result<CorrelatorTable> {
    let n = sol.n_sites();
    for &(i, j) in pairs {
        if !(i < j && j < n) {
            return Err(Error::PairOutOfRange { i, j, n });
        }
    }
    let states = sol.states();
    let weight = 1.0 / states.len() as f64;
    let mz = (0..n)
        .map(|k| states.iter().map(|g| g[(k, k)]).sum::<f64>() * weight)
        .collect();
    let entries = pairs
        .iter()
        .map(|&(i, j)| {
            let mut acc = CorrelatorEntry { i, j, mz_i: 0.0, mz_j: 0.0, txx: 0.0, tyy: 0.0, tzz: 0.0 };
            for g in &states {
                let e = entry_for(g, i, j);
                acc.mz_i += weight * e.mz_i;
                acc.mz_j += weight * e.mz_j;
                acc.txx += weight * e.txx;
                acc.tyy += weight * e.tyy;
                acc.tzz += weight * e.tzz;
            }
            acc
        })
        .collect();
    Ok(CorrelatorTable {
        site_pairs: pairs.to_vec(),
        mz,
        entries,
    })
}

pub fn two_site_rdm(c: &CorrelatorEntry) -> Result<TwoSiteState> {
    TwoSiteState::from_correlators(c.mz_i, c.mz_j, c.txx, c.tyy, c.tzz, (c.i, c.j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed;
    use crate::model::{ordered_realization, sample_realization, ChainSpec, DisorderSpec, DisorderTarget};

    #[test]
    fn decoupled_spins_form() {
        let spec = ChainSpec::xy(5, 0.5, 0.0, 1.0).unwrap();
        let q = build_quadratic_form(&ordered_realization(&spec, 0.0, 1.0)).unwrap();
        assert_eq!(q.a_matrix, DMatrix::from_diagonal_element(5, 5, -1.0));
        assert!(q.b_matrix.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn isotropic_chain_has_no_pairing() {
        let spec = ChainSpec::xy(6, 0.0, 0.7, 1.0).unwrap();
        let q = build_quadratic_form(&ordered_realization(&spec, 0.7, 1.0)).unwrap();
        assert!(q.b_matrix.iter().all(|&x| x == 0.0));
        assert!((&q.a_matrix - q.a_matrix.transpose()).amax() == 0.0);
    }

    #[test]
    fn xyz_is_rejected() {
        let spec = ChainSpec::xyz(6, 0.5, 0.1, 1.0, 1.0).unwrap();
        assert!(matches!(
            build_quadratic_form(&ordered_realization(&spec, 1.0, 1.0)),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn polarized_ground_state() {
        let spec = ChainSpec::xy(6, 0.5, 0.0, 1.0).unwrap();
        let sol = solve_realization(&ordered_realization(&spec, 0.0, 1.0)).unwrap();
        assert!((sol.energy + 3.0).abs() < 1e-12);
        assert!((&sol.g_matrix - DMatrix::<f64>::identity(6, 6)).amax() < 1e-12);
        let table = correlators(&sol, &[(0, 1), (1, 4)]).unwrap();
        for e in &table.entries {
            assert!((e.mz_i - 1.0).abs() < 1e-12);
            assert!((e.tzz - 1.0).abs() < 1e-12);
            assert!(e.txx.abs() < 1e-12 && e.tyy.abs() < 1e-12);
        }
    }

    #[test]
    fn ordered_energy_matches_ed() {
        let spec = ChainSpec::xy(8, 1.0, 0.5, 1.0).unwrap();
        let r = ordered_realization(&spec, 0.5, 1.0);
        let sol = solve_realization(&r).unwrap();
        let gs = ed::ed_ground_state(&r).unwrap();
        assert!((sol.energy - gs.energy).abs() < 1e-10, "{} vs {}", sol.energy, gs.energy);
    }

    #[test]
    fn random_chains_match_ed() {
        let cases = [
            (DisorderTarget::Coupling, 0.5, Boundary::Periodic),
            (DisorderTarget::Field, 1.0, Boundary::Periodic),
            (DisorderTarget::Coupling, 1.5, Boundary::Open),
            (DisorderTarget::Field, 1.0, Boundary::Open),
        ];
        for (target, mean, boundary) in cases {
            let spec = ChainSpec::xy(6, 0.5, 0.8, 1.0).unwrap().with_boundary(boundary).unwrap();
            let dis = DisorderSpec::gaussian(target, mean, 1.0);
            for k in 0..5 {
                let r = sample_realization(&spec, &dis, 21, k).unwrap();
                let sol = solve_realization(&r).unwrap();
                let gs = ed::ed_ground_state(&r).unwrap();
                assert!((sol.energy - gs.energy).abs() < 1e-9, "{target:?} {boundary:?} #{k}: {} vs {}", sol.energy, gs.energy);
                let pairs: Vec<_> = (1..6).map(|j| (0, j)).chain([(2, 5)]).collect();
                let table = correlators(&sol, &pairs).unwrap();
                for e in &table.entries {
                    let exact = ed::ed_two_site_rdm(&gs, e.i, e.j).unwrap();
                    let checks = [
                        (e.mz_i, exact.pauli_expectation(3, 0)),
                        (e.mz_j, exact.pauli_expectation(0, 3)),
                        (e.txx, exact.pauli_expectation(1, 1)),
                        (e.tyy, exact.pauli_expectation(2, 2)),
                        (e.tzz, exact.pauli_expectation(3, 3)),
                    ];
                    for (idx, (ff, x)) in checks.iter().enumerate() {
                        assert!((ff - x).abs() < 1e-8, "{target:?} {boundary:?} #{k} pair ({},{}) obs {idx}: {ff} vs {x}", e.i, e.j);
                    }
                }
            }
        }
    }

    #[test]
    fn nearest_neighbour_strings_are_single_entries() {
        let spec = ChainSpec::xy(10, 0.5, 0.8, 1.0).unwrap();
        let sol = solve_realization(&ordered_realization(&spec, 0.8, 1.0)).unwrap();
        for i in 0..9 {
            assert_eq!(string_xx(&sol.g_matrix, i, i + 1), sol.g_matrix[(i, i + 1)]);
            assert_eq!(string_yy(&sol.g_matrix, i, i + 1), sol.g_matrix[(i + 1, i)]);
        }
    }

    #[test]
    fn contractions_are_bounded() {
        let spec = ChainSpec::xy(30, 0.5, 0.5, 1.0).unwrap();
        let dis = DisorderSpec::gaussian(DisorderTarget::Coupling, 0.5, 1.0);
        for k in 0..5 {
            let sol = solve_realization(&sample_realization(&spec, &dis, 4, k).unwrap()).unwrap();
            assert!(sol.g_matrix.amax() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn out_of_range_pairs_are_rejected() {
        let spec = ChainSpec::xy(6, 0.5, 0.5, 1.0).unwrap();
        let sol = solve_realization(&ordered_realization(&spec, 0.5, 1.0)).unwrap();
        assert!(correlators(&sol, &[(2, 2)]).is_err());
        assert!(correlators(&sol, &[(3, 6)]).is_err());
    }

    #[test]
    fn correlator_csv_has_header() {
        let spec = ChainSpec::xy(4, 0.5, 0.5, 1.0).unwrap();
        let sol = solve_realization(&ordered_realization(&spec, 0.5, 1.0)).unwrap();
        let table = correlators(&sol, &[(0, 1), (0, 2)]).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,mz_i,mz_j,txx,tyy,tzz\n0,1,"));
        assert_eq!(text.lines().count(), 3);
    }
}
