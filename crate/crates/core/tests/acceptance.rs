//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails. Pass criterion numbers
//! as arguments to run a subset, e.g. `cargo test --test acceptance -- 2 4`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quenchcorr::ed::{ed_ground_state, ed_two_site_rdm};
use quenchcorr::fitting::{fit_decay, DecayFit, DecayModel, FitOptions};
use quenchcorr::freefermion::{correlators, solve_realization, two_site_rdm};
use quenchcorr::model::{
    ordered_realization, sample_realization, Boundary, ChainSpec, DisorderSpec, DisorderTarget, Realization,
};
use quenchcorr::mps::{dmrg_ground_state, mps_two_site_rdm, mps_two_site_rdm_with_margin, DmrgConfig};
use quenchcorr::qcorr::{
    closed_form_applicable, discord, discord_auto, monogamy_witness, DiscordMethod, Party, TwoSiteState,
};
use quenchcorr::quench::{
    ordered_series, run_quench_report, FailurePolicy, Measure, PairScheme, Pipeline, QuenchPlan, QuenchSeries,
    SolverKind,
};

type Outcome = Result<String, String>;

const GAMMA: f64 = 0.5;
const N_XY: usize = 50;
const N_XYZ: usize = 24;
const SEED: u64 = 2024;

fn check(ok: bool, what: String, failures: &mut Vec<String>, notes: &mut Vec<String>) {
    if ok {
        notes.push(what);
    } else {
        failures.push(what);
    }
}

fn verdict(failures: Vec<String>, notes: Vec<String>) -> Outcome {
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{} | passed: {}", failures.join("; "), notes.join("; ")))
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn max_entry_diff(a: &TwoSiteState, b: &TwoSiteState) -> f64 {
    (a.rho - b.rho).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn xy_ring(j: f64) -> ChainSpec {
    ChainSpec::xy(N_XY, GAMMA, j, 1.0).unwrap()
}

fn fit(series: &QuenchSeries, model: DecayModel) -> Result<DecayFit, String> {
    fit_decay(series, model, &FitOptions::default()).map_err(|e| e.to_string())
}

fn xi(series: &QuenchSeries, model: DecayModel) -> Result<f64, String> {
    fit(series, model)?.xi.ok_or_else(|| "length undefined".to_string())
}

fn ordered(spec: &ChainSpec, j: f64, measure: Measure, scheme: PairScheme, solver: SolverKind) -> QuenchSeries {
    ordered_series(spec, j, 1.0, &Pipeline::new(measure, scheme, solver)).unwrap()
}

fn quenched(
    spec: &ChainSpec,
    dis: DisorderSpec,
    measure: Measure,
    scheme: PairScheme,
    solver: SolverKind,
    r: u64,
    workers: usize,
) -> QuenchSeries {
    let plan = QuenchPlan {
        spec: spec.clone(),
        dis,
        n_realizations: r,
        master_seed: SEED,
        pipeline: Pipeline::new(measure, scheme, solver),
        failure_policy: FailurePolicy::Abort,
    };
    run_quench_report(&plan, workers).unwrap().series
}

fn csv(series: &QuenchSeries) -> Vec<u8> {
    let mut out = Vec::new();
    series.write_csv(&mut out).unwrap();
    out
}

/// Free-fermion correlators and RDMs against exact diagonalization on small
/// random chains.
fn oracle_equivalence(_: &mut Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = [0.0f64; 4];
    let mut count = 0;
    for n in [4, 6, 8, 10] {
        for target in [DisorderTarget::Coupling, DisorderTarget::Field, DisorderTarget::None] {
            for boundary in [Boundary::Periodic, Boundary::Open] {
                for k in 0..50 {
                    let gamma = rng.random_range(0.1..=1.0);
                    let j = rng.random_range(0.2..2.0);
                    let h = rng.random_range(0.2..2.0);
                    let spec = ChainSpec::xy(n, gamma, j, h).unwrap().with_boundary(boundary).unwrap();
                    let r: Realization = match target {
                        DisorderTarget::None => ordered_realization(&spec, j, h),
                        DisorderTarget::Coupling => {
                            sample_realization(&spec, &DisorderSpec::gaussian(target, j, 1.0), SEED, k).unwrap()
                        }
                        DisorderTarget::Field => {
                            sample_realization(&spec, &DisorderSpec::gaussian(target, h, 1.0), SEED, k).unwrap()
                        }
                    };
                    let sol = solve_realization(&r).map_err(|e| e.to_string())?;
                    let gs = ed_ground_state(&r).map_err(|e| e.to_string())?;
                    worst[0] = worst[0].max((sol.energy - gs.energy).abs());
                    let pairs: Vec<(usize, usize)> =
                        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
                    let table = correlators(&sol, &pairs).map_err(|e| e.to_string())?;
                    for e in &table.entries {
                        let exact = ed_two_site_rdm(&gs, e.i, e.j).unwrap();
                        worst[1] = worst[1]
                            .max((e.mz_i - exact.pauli_expectation(3, 0)).abs())
                            .max((e.mz_j - exact.pauli_expectation(0, 3)).abs());
                        for (t, (a, b)) in [(e.txx, (1, 1)), (e.tyy, (2, 2)), (e.tzz, (3, 3))] {
                            worst[2] = worst[2].max((t - exact.pauli_expectation(a, b)).abs());
                        }
                        let ff = two_site_rdm(e).unwrap();
                        worst[3] = worst[3].max(max_entry_diff(&ff, &exact.project_x().unwrap()));
                    }
                    count += 1;
                }
            }
        }
    }
    let msg = format!(
        "{count} chains; max |dE| {:.1e}, |dm^z| {:.1e}, |dT| {:.1e}, |drho| {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    );
    if worst.iter().all(|&w| w < 1e-8) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn factorization_point(_: &mut Shared) -> Outcome {
    let j = ChainSpec::factorization_ratio(GAMMA);
    let spec = xy_ring(j);
    let c = ordered(&spec, j, Measure::Concurrence, PairScheme::FixedIAllJ, SolverKind::Freefermion);
    let d = ordered(&spec, j, Measure::Discord, PairScheme::FixedIAllJ, SolverKind::Freefermion);
    let spread = d.mean.iter().cloned().fold(f64::MIN, f64::max) - d.mean.iter().cloned().fold(f64::MAX, f64::min);
    let f = fit(&d, DecayModel::OffsetExponential)?;
    let (mut failures, mut notes) = (Vec::new(), Vec::new());
    check(c.mean[0] < 1e-6, format!("nn concurrence {:.1e} < 1e-6", c.mean[0]), &mut failures, &mut notes);
    check(spread < 1e-6, format!("discord spread {spread:.1e} < 1e-6"), &mut failures, &mut notes);
    check(f.flat && f.xi.is_none(), format!("flat flag {}", f.flat), &mut failures, &mut notes);
    verdict(failures, notes)
}

fn ordered_discord_fits(_: &mut Shared) -> Outcome {
    let (mut failures, mut notes) = (Vec::new(), Vec::new());
    for (j, a, b, x) in [(0.5, 4.1e-3, 0.18, 0.56), (1.5, 0.093, 0.115, 0.80)] {
        let d = ordered(&xy_ring(j), j, Measure::Discord, PairScheme::FixedIAllJ, SolverKind::Freefermion);
        let f = fit(&d, DecayModel::OffsetExponential)?;
        for (name, got, want) in [("a", f.a, a), ("b", f.b, b), ("xi_D", f.xi, x)] {
            let got = got.unwrap_or(f64::NAN);
            check(
                within(got, want, 0.15),
                format!("J={j} {name}={got:.3e} (target {want})"),
                &mut failures,
                &mut notes,
            );
        }
    }
    verdict(failures, notes)
}

fn ordered_concurrence_range(_: &mut Shared) -> Outcome {
    let c = ordered(&xy_ring(0.5), 0.5, Measure::Concurrence, PairScheme::FixedIAllJ, SolverKind::Freefermion);
    let tail = c.distances.iter().zip(&c.mean).filter(|(r, _)| **r >= 4.0).map(|(_, v)| *v).fold(0.0, f64::max);
    let x = xi(&c, DecayModel::PureExponential)?;
    let (mut failures, mut notes) = (Vec::new(), Vec::new());
    check(tail < 1e-6, format!("max C(r>=4) {tail:.1e}"), &mut failures, &mut notes);
    check(within(x, 0.50, 0.15), format!("xi_C={x:.3} (target 0.50)"), &mut failures, &mut notes);
    verdict(failures, notes)
}

/// Quenched series shared between criteria so each expensive run happens once.
#[derive(Default)]
struct Shared {
    glass_discord_half: Option<QuenchSeries>,
}

fn spin_glass(j: f64) -> DisorderSpec {
    DisorderSpec::gaussian(DisorderTarget::Coupling, j, 1.0)
}

fn spin_glass_results(shared: &mut Shared) -> Outcome {
    const R: u64 = 10_000;
    let ff = SolverKind::Freefermion;
    let scheme = PairScheme::FixedIAllJ;
    let (mut failures, mut notes) = (Vec::new(), Vec::new());

    let spec = xy_ring(0.5);
    let qc = quenched(&spec, spin_glass(0.5), Measure::Concurrence, scheme, ff, R, 1);
    let xc = xi(&qc, DecayModel::PureExponential)?;
    check(within(xc, 0.69, 0.20), format!("xi_<C>(0.5)={xc:.3} (0.69)"), &mut failures, &mut notes);

    let qd = quenched(&spec, spin_glass(0.5), Measure::Discord, scheme, ff, R, 1);
    let xd = xi(&qd, DecayModel::OffsetExponential)?;
    let od = xi(&ordered(&spec, 0.5, Measure::Discord, scheme, ff), DecayModel::OffsetExponential)?;
    check(within(xd, 1.36, 0.20), format!("xi_<D>(0.5)={xd:.3} (1.36)"), &mut failures, &mut notes);
    check(xd / od >= 2.0, format!("xi_<D>/xi_D={:.2} >= 2", xd / od), &mut failures, &mut notes);
    shared.glass_discord_half = Some(qd);

    let spec = xy_ring(1.5);
    let qd = quenched(&spec, spin_glass(1.5), Measure::Discord, scheme, ff, R, 1);
    let xd = xi(&qd, DecayModel::OffsetExponential)?;
    check(within(xd, 1.21, 0.20), format!("xi_<D>(1.5)={xd:.3} (1.21)"), &mut failures, &mut notes);
    let od = ordered(&spec, 1.5, Measure::Discord, scheme, ff);
    let below = qd.distances.iter().zip(qd.mean.iter().zip(&od.mean)).filter(|(r, _)| **r >= 3.0).all(|(_, (q, o))| q < o);
    check(below, "quenched discord below ordered for r>=3 at J=1.5".into(), &mut failures, &mut notes);
    verdict(failures, notes)
}

fn random_field(_: &mut Shared) -> Outcome {
    const R: u64 = 2000;
    let ff = SolverKind::Freefermion;
    let scheme = PairScheme::FixedIAllJ;
    let near_factorization = ChainSpec::factorization_ratio(GAMMA);
    let (mut failures, mut notes) = (Vec::new(), Vec::new());
    for j in [0.5, 0.8, 1.1, 1.5] {
        let spec = xy_ring(j);
        let dis = DisorderSpec::gaussian(DisorderTarget::Field, 1.0, 1.0);
        let xd_o = xi(&ordered(&spec, j, Measure::Discord, scheme, ff), DecayModel::OffsetExponential);
        let xd_q = xi(&quenched(&spec, dis.clone(), Measure::Discord, scheme, ff, R, 1), DecayModel::OffsetExponential);
        let xc_o = xi(&ordered(&spec, j, Measure::Concurrence, scheme, ff), DecayModel::PureExponential)?;
        let xc_q = xi(&quenched(&spec, dis, Measure::Concurrence, scheme, ff, R, 1), DecayModel::PureExponential)?;
        check(
            (xc_q - xc_o).abs() <= 1.0,
            format!("J={j} xi_C {xc_o:.2} -> {xc_q:.2}"),
            &mut failures,
            &mut notes,
        );
        if (j - near_factorization).abs() < 0.1 {
            notes.push(format!("J={j} near factorization, discord exempt"));
            continue;
        }
        let (o, q) = (xd_o?, xd_q?);
        check(q > o, format!("J={j} xi_D {o:.3} -> {q:.3}"), &mut failures, &mut notes);
    }
    verdict(failures, notes)
}

/// Closed-form against numerically minimized discord on RDMs taken from
/// disordered runs.
fn discord_cross_check(_: &mut Shared) -> Outcome {
    let mut harvested = 0;
    let mut worst = 0.0f64;
    let mut rotated = 0;
    'outer: for (target, mean) in [(DisorderTarget::Coupling, 0.5), (DisorderTarget::Coupling, 1.5), (DisorderTarget::Field, 1.0)] {
        let spec = ChainSpec::xy(20, GAMMA, mean, 1.0).unwrap();
        let dis = DisorderSpec::gaussian(target, mean, 1.0);
        for k in 0..40 {
            let r = sample_realization(&spec, &dis, SEED, k).unwrap();
            let sol = solve_realization(&r).unwrap();
            let pairs: Vec<(usize, usize)> = (1..=10).map(|j| (0, j)).collect();
            for e in correlators(&sol, &pairs).unwrap().entries {
                let state = two_site_rdm(&e).unwrap();
                for party in [Party::First, Party::Second] {
                    let auto = discord_auto(&state, party).map_err(|e| e.to_string())?;
                    if auto.method != DiscordMethod::XstateClosedForm {
                        continue;
                    }
                    if closed_form_applicable(&state).is_err() {
                        rotated += 1;
                    }
                    let numeric = discord(&state, party, DiscordMethod::NumericMinimization).unwrap();
                    worst = worst.max((auto.discord - numeric.discord).abs());
                    harvested += 1;
                }
            }
            if harvested >= 2000 {
                break 'outer;
            }
        }
    }
    let msg = format!("{harvested} states ({rotated} via rotation), max |closed - numeric| {worst:.1e} bits");
    if harvested >= 1000 && worst <= 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn monogamy(_: &mut Shared) -> Outcome {
    let r = ordered_realization(&xy_ring(1.5), 1.5, 1.0);
    let sol = solve_realization(&r).unwrap();
    let pairs: Vec<(usize, usize)> = (1..N_XY).map(|j| (0, j)).collect();
    let ds: Vec<f64> = correlators(&sol, &pairs)
        .unwrap()
        .entries
        .iter()
        .map(|e| discord_auto(&two_site_rdm(e).unwrap(), Party::First).unwrap().discord)
        .collect();
    let report = monogamy_witness(&ds).map_err(|e| e.to_string())?;
    let msg = format!("sum of discords with site 1 = {:.3}", report.sum);
    if report.witness_violated {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn dmrg_validation(_: &mut Shared) -> Outcome {
    let cfg = DmrgConfig::default();
    let (mut de, mut drho) = (0.0f64, 0.0f64);
    for delta in [0.1, 0.5] {
        let spec = ChainSpec::xyz(8, GAMMA, delta, 0.8, 1.0).unwrap();
        let chains = [
            ordered_realization(&spec, 0.8, 1.0),
            sample_realization(&spec, &spin_glass(0.8), SEED, 0).unwrap(),
        ];
        for r in chains {
            let mps = dmrg_ground_state(&r, &cfg).map_err(|e| e.to_string())?;
            let gs = ed_ground_state(&r).unwrap();
            de = de.max((mps.energy - gs.energy).abs());
            for i in 0..8 {
                for j in i + 1..8 {
                    let a = mps_two_site_rdm_with_margin(&mps, i, j, 0).unwrap();
                    let b = ed_two_site_rdm(&gs, i, j).unwrap();
                    drho = drho.max(max_entry_diff(&a, &b));
                }
            }
        }
    }
    let spec = ChainSpec::xyz(N_XYZ, GAMMA, 0.0, 0.5, 1.0).unwrap();
    let mps = dmrg_ground_state(&ordered_realization(&spec, 0.5, 1.0), &cfg).map_err(|e| e.to_string())?;
    let xy = ChainSpec::xy(N_XYZ, GAMMA, 0.5, 1.0).unwrap().with_boundary(Boundary::Open).unwrap();
    let sol = solve_realization(&ordered_realization(&xy, 0.5, 1.0)).unwrap();
    let centre = N_XYZ / 2 - 1;
    let pairs: Vec<(usize, usize)> = (1..=6).map(|d| (centre, centre + d)).collect();
    let mut dcorr = 0.0f64;
    for e in correlators(&sol, &pairs).unwrap().entries {
        let rho = mps_two_site_rdm(&mps, e.i, e.j).unwrap();
        for (want, (a, b)) in [(e.mz_i, (3, 0)), (e.mz_j, (0, 3)), (e.txx, (1, 1)), (e.tyy, (2, 2)), (e.tzz, (3, 3))] {
            dcorr = dcorr.max((rho.pauli_expectation(a, b) - want).abs());
        }
    }
    let (mut failures, mut notes) = (Vec::new(), Vec::new());
    check(de < 1e-8, format!("N=8 max |dE| {de:.1e}"), &mut failures, &mut notes);
    check(drho < 1e-6, format!("N=8 max |drho| {drho:.1e}"), &mut failures, &mut notes);
    check(dcorr < 1e-5, format!("N=24 max correlator diff {dcorr:.1e}"), &mut failures, &mut notes);
    verdict(failures, notes)
}

fn xyz_lengths(_: &mut Shared) -> Outcome {
    const R: u64 = 500;
    let table = [
        (0.1, 0.5, 0.64, 1.26),
        (0.1, 1.5, 1.04, 1.26),
        (0.5, 0.5, 4.05, 0.86),
        (0.5, 1.5, 0.68, 0.73),
    ];
    let scheme = PairScheme::CentralSiteDistanceR;
    let (mut failures, mut notes) = (Vec::new(), Vec::new());
    let mut lengths = Vec::new();
    for (delta, j, want_o, want_q) in table {
        let spec = ChainSpec::xyz(N_XYZ, GAMMA, delta, j, 1.0).unwrap();
        let started = Instant::now();
        let o = xi(&ordered(&spec, j, Measure::Discord, scheme, SolverKind::Mps), DecayModel::OffsetExponential)?;
        let q = xi(
            &quenched(&spec, spin_glass(j), Measure::Discord, scheme, SolverKind::Mps, R, 1),
            DecayModel::OffsetExponential,
        )?;
        eprintln!("  delta={delta} J={j}: xi_D={o:.3} xi_<D>={q:.3} ({:.0} s)", started.elapsed().as_secs_f64());
        check(within(o, want_o, 0.25), format!("D{delta}/J{j} xi_D={o:.2} ({want_o})"), &mut failures, &mut notes);
        check(within(q, want_q, 0.25), format!("D{delta}/J{j} xi_<D>={q:.2} ({want_q})"), &mut failures, &mut notes);
        lengths.push((o, q));
    }
    let ratio = |k: usize| lengths[k].1 / lengths[k].0;
    check(ratio(0) > 1.0 && ratio(1) > 1.0, format!("enhanced at delta=0.1: x{:.2}, x{:.2}", ratio(0), ratio(1)), &mut failures, &mut notes);
    check(ratio(2) < ratio(0), format!("enhancement at delta=0.5, J=0.5 is x{:.2} < x{:.2}", ratio(2), ratio(0)), &mut failures, &mut notes);
    verdict(failures, notes)
}

fn determinism(shared: &mut Shared) -> Outcome {
    let reference = match shared.glass_discord_half.take() {
        Some(s) => s,
        None => quenched(&xy_ring(0.5), spin_glass(0.5), Measure::Discord, PairScheme::FixedIAllJ, SolverKind::Freefermion, 10_000, 1),
    };
    let four = quenched(&xy_ring(0.5), spin_glass(0.5), Measure::Discord, PairScheme::FixedIAllJ, SolverKind::Freefermion, 10_000, 4);
    if csv(&reference) == csv(&four) {
        Ok("R=10^4 discord CSV identical for 1 and 4 workers".into())
    } else {
        Err("CSV bodies differ between 1 and 4 workers".into())
    }
}

type Criterion = (u32, &'static str, fn(&mut Shared) -> Outcome);

const CRITERIA: [Criterion; 11] = [
    (1, "free-fermion vs exact diagonalization", oracle_equivalence),
    (2, "factorization point", factorization_point),
    (3, "ordered discord fits", ordered_discord_fits),
    (4, "ordered concurrence range", ordered_concurrence_range),
    (5, "spin-glass quenched lengths", spin_glass_results),
    (6, "random-field model", random_field),
    (7, "closed-form vs numeric discord", discord_cross_check),
    (8, "monogamy witness", monogamy),
    (9, "DMRG validation", dmrg_validation),
    (10, "XYZ discord lengths", xyz_lengths),
    (11, "worker-count determinism", determinism),
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    // Libtest flags such as `--list` or `--exact` carry no numbers; listing
    // would otherwise run everything.
    if std::env::args().any(|a| a == "--list") {
        for (n, name, _) in CRITERIA {
            println!("criterion_{n}: test ({name})");
        }
        return;
    }
    let mut shared = Shared::default();
    let mut failed = Vec::new();
    for (n, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut shared)))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n:>2} PASS [{name}] ({secs:.1} s): {msg}"),
            Err(msg) => {
                println!("criterion {n:>2} FAIL [{name}] ({secs:.1} s): {msg}");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}
