//! Executes a validated configuration. Every artifact is rendered in memory
//! first, so a failing run leaves the output directory untouched.

use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use serde::Serialize;

use quenchcorr::fitting::{fit_decay, fit_scaling, DecayFit, ScalingFit, ScalingTransform, Weights};
use quenchcorr::quench::{ordered_series, run_quench_report, Measure, QuenchSeries, SkippedRealization};

use crate::config::{decay_model, ExperimentConfig, Panel, ScalingMode};

#[derive(Debug, Default)]
pub struct Artifacts {
    /// File name and contents, in the order they were produced.
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn push(&mut self, name: String, body: Vec<u8>) {
        self.files.push((name, body));
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Ordered,
    Quenched,
}

impl SeriesKind {
    fn name(self) -> &'static str {
        match self {
            SeriesKind::Ordered => "ordered",
            SeriesKind::Quenched => "quenched",
        }
    }
}

#[derive(Debug, Serialize)]
struct FitRecord<'a> {
    panel: &'a str,
    measure: &'static str,
    kind: SeriesKind,
    n_sites: usize,
    delta: f64,
    coupling: f64,
    field: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<DecayFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct SkipRecord<'a> {
    panel: &'a str,
    measure: &'static str,
    #[serde(flatten)]
    skipped: &'a SkippedRealization,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    tool_version: &'static str,
    config: &'a ExperimentConfig,
    workers: usize,
    started_unix_s: u64,
    wall_time_s: f64,
    skipped_realizations: Vec<SkipRecord<'a>>,
}

#[derive(Debug, Serialize)]
struct ScalingRecord {
    measure: &'static str,
    sizes: Vec<usize>,
    lengths: Vec<f64>,
    transform: ScalingTransform,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<ScalingFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn series_bytes(series: &QuenchSeries) -> quenchcorr::Result<(Vec<u8>, Vec<u8>)> {
    let mut csv = Vec::new();
    series.write_csv(&mut csv)?;
    let mut dat = Vec::new();
    series.write_dat(&mut dat)?;
    Ok((csv, dat))
}

fn fmt_len(xi: Option<f64>) -> String {
    xi.map(|x| x.to_string()).unwrap_or_else(|| "nan".into())
}

struct PanelResult {
    ordered: Option<DecayFit>,
    quenched: Option<DecayFit>,
}

/// Runs every panel and measure; returns the artifacts or the first
/// pipeline error.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> quenchcorr::Result<Artifacts> {
    let started = Instant::now();
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut art = Artifacts::default();
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    let mut lengths = String::from("panel,measure,n_sites,delta,coupling,field,xi_ordered,xi_quenched\n");
    let mut quenched_lengths: Vec<(Measure, usize, Option<f64>)> = Vec::new();

    for panel in &cfg.panels {
        for &measure in &cfg.run.measures {
            let plan = cfg.plan(panel, measure)?;
            let n_sites = plan.spec.n_sites;
            let delta = plan.spec.delta;
            let mut result = PanelResult { ordered: None, quenched: None };
            let mut curves: Vec<(SeriesKind, QuenchSeries)> = Vec::new();
            if cfg.run.ordered {
                info!("{} {}: ordered chain", panel.label, measure.name());
                curves.push((SeriesKind::Ordered, ordered_series(&plan.spec, panel.coupling, panel.field, &plan.pipeline)?));
            }
            if cfg.run.disordered {
                info!("{} {}: {} realizations", panel.label, measure.name(), plan.n_realizations);
                let report = run_quench_report(&plan, workers)?;
                info!("{} {}: done in {:.1} s", panel.label, measure.name(), report.wall_time_s);
                skipped.extend(report.skipped.into_iter().map(|s| (panel.label.as_str(), measure.name(), s)));
                curves.push((SeriesKind::Quenched, report.series));
            }
            for (kind, series) in curves {
                let stem = format!("{}_{}_{}", panel.label, measure.name(), kind.name());
                let (csv, dat) = series_bytes(&series)?;
                art.push(format!("{stem}.csv"), csv);
                art.push(format!("{stem}.dat"), dat);
                let fit = fit_series(cfg, &series, measure, kind);
                let (fit, error) = match fit {
                    Ok(f) => (Some(f), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                match kind {
                    SeriesKind::Ordered => result.ordered = fit.clone(),
                    SeriesKind::Quenched => result.quenched = fit.clone(),
                }
                fits.push(record(panel, measure, kind, n_sites, delta, fit, error));
            }
            let xi = |f: &Option<DecayFit>| f.as_ref().and_then(|f| f.xi);
            lengths.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                panel.label,
                measure.name(),
                n_sites,
                delta,
                panel.coupling,
                panel.field,
                fmt_len(xi(&result.ordered)),
                fmt_len(xi(&result.quenched)),
            ));
            quenched_lengths.push((measure, n_sites, xi(&result.quenched)));
        }
    }

    art.push("fits.json".into(), to_json(&fits));
    art.push("lengths.csv".into(), lengths.into_bytes());
    if cfg.fit.scaling != ScalingMode::None {
        let records: Vec<ScalingRecord> =
            cfg.run.measures.iter().map(|&m| scaling_record(cfg.fit.scaling, m, &quenched_lengths)).collect();
        art.push("scaling.json".into(), to_json(&records));
    }
    let skipped: Vec<SkipRecord> =
        skipped.iter().map(|(panel, measure, s)| SkipRecord { panel, measure, skipped: s }).collect();
    let meta = Metadata {
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        workers,
        started_unix_s,
        wall_time_s: started.elapsed().as_secs_f64(),
        skipped_realizations: skipped,
    };
    art.push("metadata.json".into(), to_json(&meta));
    Ok(art)
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("records serialize");
    out.push(b'\n');
    out
}

fn record(
    panel: &Panel,
    measure: Measure,
    kind: SeriesKind,
    n_sites: usize,
    delta: f64,
    fit: Option<DecayFit>,
    error: Option<String>,
) -> FitRecord<'_> {
    FitRecord {
        panel: &panel.label,
        measure: measure.name(),
        kind,
        n_sites,
        delta,
        coupling: panel.coupling,
        field: panel.field,
        fit,
        error,
    }
}

fn fit_series(
    cfg: &ExperimentConfig,
    series: &QuenchSeries,
    measure: Measure,
    kind: SeriesKind,
) -> quenchcorr::Result<DecayFit> {
    let mut options = cfg.fit.options();
    // A single ordered state carries no sampling error to weight by.
    if kind == SeriesKind::Ordered {
        options.weights = Weights::Uniform;
    }
    fit_decay(series, decay_model(measure), &options)
}

fn scaling_record(mode: ScalingMode, measure: Measure, lengths: &[(Measure, usize, Option<f64>)]) -> ScalingRecord {
    let mut points: Vec<(usize, f64)> = lengths
        .iter()
        .filter(|(m, _, _)| *m == measure)
        .filter_map(|&(_, n, xi)| xi.map(|x| (n, x)))
        .collect();
    points.sort_by_key(|p| p.0);
    let (transform, used) = match (mode, points.last()) {
        (ScalingMode::DeviationFromLargest, Some(&(_, reference))) => {
            (ScalingTransform::DeviationFrom(reference), &points[..points.len() - 1])
        }
        _ => (ScalingTransform::Identity, &points[..]),
    };
    let xs: Vec<f64> = used.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1).collect();
    let (fit, error) = match fit_scaling(&xs, &ys, transform) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ScalingRecord {
        measure: measure.name(),
        sizes: points.iter().map(|p| p.0).collect(),
        lengths: points.iter().map(|p| p.1).collect(),
        transform,
        fit,
        error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn small(name: &str) -> ExperimentConfig {
        let mut cfg = presets::preset(name).unwrap();
        cfg.run.realizations = 6;
        cfg.model.n_sites = 12;
        cfg
    }

    fn names(art: &Artifacts) -> Vec<&str> {
        art.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    #[test]
    fn fig1_emits_series_pairs_for_every_panel() {
        let art = run(&small("fig1"), 2).unwrap();
        let names = names(&art);
        for j in ["0.5", "0.8", "1.1", "1.5"] {
            for kind in ["ordered", "quenched"] {
                for ext in ["csv", "dat"] {
                    let want = format!("J{j}_concurrence_{kind}.{ext}");
                    assert!(names.contains(&want.as_str()), "{want} missing");
                }
            }
        }
        for f in ["fits.json", "lengths.csv", "metadata.json"] {
            assert!(names.contains(&f));
        }
        let lengths = &art.files.iter().find(|(n, _)| n == "lengths.csv").unwrap().1;
        assert_eq!(String::from_utf8_lossy(lengths).lines().count(), 5);
    }

    #[test]
    fn series_bodies_do_not_depend_on_workers() {
        let cfg = small("fig2");
        let a = run(&cfg, 1).unwrap();
        let b = run(&cfg, 3).unwrap();
        for ((na, ba), (nb, bb)) in a.files.iter().zip(&b.files) {
            assert_eq!(na, nb);
            if na.ends_with(".csv") || na.ends_with(".dat") || na == "fits.json" {
                assert_eq!(ba, bb, "{na} differs");
            }
        }
    }

    #[test]
    fn scaling_drops_the_reference_size() {
        let lengths = vec![
            (Measure::Discord, 10, Some(2.0)),
            (Measure::Discord, 20, Some(1.5)),
            (Measure::Discord, 40, Some(1.25)),
            (Measure::Discord, 80, Some(1.125)),
            (Measure::Discord, 160, Some(1.0)),
        ];
        let rec = scaling_record(ScalingMode::DeviationFromLargest, Measure::Discord, &lengths);
        assert_eq!(rec.transform, ScalingTransform::DeviationFrom(1.0));
        let fit = rec.fit.unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-12, "{}", fit.exponent);
    }
}
