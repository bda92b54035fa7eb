//! One function per subcommand.

use std::path::Path;

use micromacro_core::detection::OfOutcome;
use micromacro_core::experiment::{
    fringe_channel, run_witness, threshold_sweep, ConcurrenceReport, Experiment, ScanPoint,
    WitnessReport,
};
use micromacro_core::macrostate::occupation_probability;
use micromacro_core::oracle::{ideal_linear_visibility, run_oracle_checks, OracleReport};
use micromacro_core::sampling::{AliceOutcome, MarginalTables};
use micromacro_core::stats::{fit_fringe, fit_fringe_free_period, CoincidenceCounts, FringeFit};
use micromacro_core::{Error as CoreError, FockOccupation, GainParams, MacroLabel};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{RunOutput, SCHEMA_VERSION};
use crate::svg::{heat_map, line_plot, Series};

/// Largest grid `distribution` will write.
const MAX_GRID_CELLS: u64 = 50_000_000;
/// Marginal tail allowed when the window is chosen automatically.
const AUTO_WINDOW_TAIL: f64 = 5e-7;

#[derive(Debug, Clone, Serialize)]
pub struct DistributionArgs {
    pub gain: f64,
    pub label: String,
    pub phi: f64,
    pub max_p: Option<u64>,
    pub max_q: Option<u64>,
    pub full_grid: bool,
}

#[derive(Serialize)]
struct DistRow {
    p: u64,
    q: u64,
    probability: f64,
}

pub fn distribution(args: &DistributionArgs, out: &Path) -> CliResult<()> {
    let gain = GainParams::new(args.gain)?;
    let label = match args.label.as_str() {
        "plus" => MacroLabel::plus(args.phi),
        "perp" => MacroLabel::perp(args.phi),
        other => {
            return Err(CliError::Usage(format!(
                "label must be `plus` or `perp`, got `{other}`"
            )))
        }
    };
    // automatic window: each pair index covers all but AUTO_WINDOW_TAIL
    let (auto_p, auto_q) = match (args.max_p, args.max_q) {
        (Some(p), Some(q)) => (p, q),
        _ => {
            let tables = MarginalTables::build(gain, AUTO_WINDOW_TAIL)?;
            let odd = 2 * (tables.cdf_i().len() as u64 - 1) + 1;
            let even = 2 * (tables.cdf_j().len() as u64 - 1);
            if label.is_parallel() {
                (odd, even)
            } else {
                (even, odd)
            }
        }
    };
    let max_p = args.max_p.unwrap_or(auto_p);
    let max_q = args.max_q.unwrap_or(auto_q);
    let cells = (max_p + 1).saturating_mul(max_q + 1);
    if cells > MAX_GRID_CELLS {
        return Err(CliError::Usage(format!(
            "a {}×{} grid is needed to hold all but {AUTO_WINDOW_TAIL:.0e} of the mass at g = {}, \
             above the {MAX_GRID_CELLS} cell limit; pass --max-p/--max-q for a truncated window",
            max_p + 1,
            max_q + 1,
            args.gain
        )));
    }

    let mut run = RunOutput::create(out, "distribution", None)?;
    let mut rows = Vec::new();
    let mut mass = 0.0;
    for p in 0..=max_p {
        for q in 0..=max_q {
            let prob = occupation_probability(label, FockOccupation::new(p, q), &gain);
            mass += prob;
            if prob > 0.0 || args.full_grid {
                rows.push(DistRow {
                    p,
                    q,
                    probability: prob,
                });
            }
        }
    }
    if 1.0 - mass > 1e-6 {
        eprintln!(
            "note: the {}×{} window holds {mass:.9} of the probability; \
             widen --max-p/--max-q (all but {AUTO_WINDOW_TAIL:.0e} needs about {auto_p} × {auto_q})",
            max_p + 1,
            max_q + 1
        );
    }

    let cells: Vec<(u64, u64, f64)> = rows.iter().map(|r| (r.p, r.q, r.probability)).collect();
    run.csv("distribution.csv", rows)?;
    run.json(
        "distribution_summary.json",
        &serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "gain": args.gain,
            "label": args.label,
            "phi": args.phi,
            "max_p": max_p,
            "max_q": max_q,
            "window_mass": mass,
        }),
    )?;
    run.text(
        "distribution.svg",
        &heat_map(
            &format!("P(p, q), g = {}, {}", args.gain, args.label),
            "p (injected mode)",
            "q (orthogonal mode)",
            &cells,
        ),
    )?;
    run.finish(args)?;
    println!(
        "window mass {mass:.12} over {} × {} cells",
        max_p + 1,
        max_q + 1
    );
    Ok(())
}

#[derive(Serialize)]
struct ScanRow {
    #[serde(rename = "phi_A")]
    phi_a: f64,
    n_pp: u64,
    n_pm: u64,
    n_mp: u64,
    n_mm: u64,
    n_inconclusive: u64,
    n_total: u64,
}

#[derive(Serialize)]
struct ScanSummary {
    schema_version: u32,
    threshold: f64,
    mean_arm_signal: Option<f64>,
    fit_n_pp: Option<FringeFitOut>,
    fit_n_pm: Option<FringeFitOut>,
    period_n_pp: Option<PeriodOut>,
}

#[derive(Serialize)]
struct FringeFitOut {
    offset: f64,
    amplitude: f64,
    phase: f64,
    r_squared: f64,
    visibility: f64,
}

#[derive(Serialize)]
struct PeriodOut {
    period: f64,
    stderr: f64,
}

impl From<FringeFit> for FringeFitOut {
    fn from(f: FringeFit) -> Self {
        Self {
            offset: f.offset,
            amplitude: f.amplitude,
            phase: f.phase,
            r_squared: f.r_squared,
            visibility: f.visibility(),
        }
    }
}

fn model_curve(fit: &FringeFitOut, x0: f64, x1: f64) -> Vec<(f64, f64)> {
    (0..=200)
        .map(|k| {
            let x = x0 + (x1 - x0) * k as f64 / 200.0;
            (x, fit.offset + fit.amplitude * (x - fit.phase).cos())
        })
        .collect()
}

pub fn scan(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    if cfg.phi_a_list.is_empty() {
        return Err(CliError::Usage(
            "phi_a_list is empty: nothing to scan".into(),
        ));
    }
    let mut run = RunOutput::create(out, "scan", Some(cfg.seed))?;
    let exp = Experiment::new(cfg.experiment()?)?;
    let points = exp.run_fringe_scan()?;
    let pp = fringe_channel(&points, AliceOutcome::Plus, OfOutcome::Plus);
    let pm = fringe_channel(&points, AliceOutcome::Plus, OfOutcome::Minus);
    let summary = ScanSummary {
        schema_version: SCHEMA_VERSION,
        threshold: exp.threshold(),
        mean_arm_signal: exp.mean_arm_signal(),
        fit_n_pp: fit_fringe(&pp).ok().map(Into::into),
        fit_n_pm: fit_fringe(&pm).ok().map(Into::into),
        period_n_pp: fit_fringe_free_period(&pp).ok().map(|f| PeriodOut {
            period: 2.0 * std::f64::consts::PI / f.omega,
            stderr: 2.0 * std::f64::consts::PI * f.omega_stderr / (f.omega * f.omega),
        }),
    };

    run.csv("scan.csv", points.iter().map(scan_row))?;
    run.json("scan_fit.json", &summary)?;
    let x0 = cfg.phi_a_list.iter().copied().fold(f64::INFINITY, f64::min);
    let x1 = cfg
        .phi_a_list
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut series = vec![
        Series {
            name: "n_pp",
            color: "#c0392b",
            points: pp,
            markers: true,
        },
        Series {
            name: "n_pm",
            color: "#2c5aa0",
            points: pm,
            markers: true,
        },
    ];
    if let Some(f) = &summary.fit_n_pp {
        series.push(Series {
            name: "fit n_pp",
            color: "#e6a19a",
            points: model_curve(f, x0, x1),
            markers: false,
        });
    }
    if let Some(f) = &summary.fit_n_pm {
        series.push(Series {
            name: "fit n_pm",
            color: "#9bb3d9",
            points: model_curve(f, x0, x1),
            markers: false,
        });
    }
    run.text(
        "scan.svg",
        &line_plot(
            "Coincidences vs Alice phase",
            "phi_A (rad)",
            "coincidences",
            &series,
        ),
    )?;
    run.finish(cfg)?;

    println!("phi_A      n_pp    n_pm    n_mp    n_mm  conclusive");
    for p in &points {
        let c = &p.counts;
        println!(
            "{:6.3} {:7} {:7} {:7} {:7} {:11}",
            p.phi_a,
            c.n_pp,
            c.n_pm,
            c.n_mp,
            c.n_mm,
            c.conclusive()
        );
    }
    if let Some(f) = &summary.fit_n_pp {
        println!(
            "fit n_pp: offset {:.2}, amplitude {:.2}, phase {:.4}, R² {:.4}",
            f.offset, f.amplitude, f.phase, f.r_squared
        );
    }
    Ok(())
}

fn scan_row(p: &ScanPoint) -> ScanRow {
    let c = &p.counts;
    ScanRow {
        phi_a: p.phi_a,
        n_pp: c.n_pp,
        n_pm: c.n_pm,
        n_mp: c.n_mp,
        n_mm: c.n_mm,
        n_inconclusive: c.n_inconclusive,
        n_total: c.n_total,
    }
}

#[derive(Serialize)]
struct Estimate {
    value: f64,
    stderr: f64,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct WitnessOut {
    schema_version: u32,
    V2: Estimate,
    V3: Estimate,
    S: f64,
    stderr: f64,
    significance: f64,
    violated: bool,
    p_filter: Estimate,
    inferred_N: Option<f64>,
    inferred_N_unfiltered: Option<f64>,
    inferred_N_unfiltered_stderr: Option<f64>,
    threshold: f64,
    mean_arm_signal: Option<f64>,
    /// Ideal-detector H/V visibility from the dense construction (small gains only).
    V1_ideal: Option<f64>,
    concurrence_report: ConcurrenceReport,
    counts_basis_2: CoincidenceCounts,
    counts_basis_3: CoincidenceCounts,
}

impl WitnessOut {
    fn new(r: WitnessReport, v1_ideal: Option<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            V2: Estimate {
                value: r.v2.value,
                stderr: r.v2.stderr,
            },
            V3: Estimate {
                value: r.v3.value,
                stderr: r.v3.stderr,
            },
            S: r.s,
            stderr: r.s_stderr,
            significance: r.significance,
            violated: r.violated,
            p_filter: Estimate {
                value: r.p_filter,
                stderr: r.p_filter_stderr,
            },
            inferred_N: r.inferred_n,
            inferred_N_unfiltered: r.inferred_n_unfiltered,
            inferred_N_unfiltered_stderr: r.inferred_n_unfiltered_stderr,
            threshold: r.threshold,
            mean_arm_signal: r.mean_arm_signal,
            V1_ideal: v1_ideal,
            concurrence_report: r.concurrence,
            counts_basis_2: r.counts_circular,
            counts_basis_3: r.counts_diagonal,
        }
    }
}

pub fn witness(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let exp_cfg = cfg.experiment()?;
    let mut run = RunOutput::create(out, "witness", Some(cfg.seed))?;
    let report = run_witness(&exp_cfg).map_err(|e| match e {
        CoreError::NoData => CliError::Physics(
            "no conclusive events in one of the bases; lower the threshold \
             (--threshold-multiple) or raise --trials"
                .into(),
        ),
        other => other.into(),
    })?;
    let v1_ideal = if cfg.gain <= 1.6 {
        ideal_linear_visibility(&exp_cfg.gain, 101).ok()
    } else {
        None
    };
    println!(
        "V2 = {:.4} ± {:.4}, V3 = {:.4} ± {:.4}, S = {:.4} ± {:.4}, p = {:.3e}, violated = {}",
        report.v2.value,
        report.v2.stderr,
        report.v3.value,
        report.v3.stderr,
        report.s,
        report.s_stderr,
        report.p_filter,
        report.violated
    );
    run.json("witness.json", &WitnessOut::new(report, v1_ideal))?;
    run.finish(cfg)?;
    Ok(())
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct SweepCsv {
    threshold: f64,
    threshold_absolute: f64,
    p: f64,
    p_err: f64,
    V2: Option<f64>,
    V2_err: Option<f64>,
    V3: Option<f64>,
    V3_err: Option<f64>,
    S: Option<f64>,
    S_err: Option<f64>,
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    if cfg.thresholds.is_empty() {
        return Err(CliError::Usage("no thresholds to sweep".into()));
    }
    let exp_cfg = cfg.experiment()?;
    let mut run = RunOutput::create(out, "sweep", Some(cfg.seed))?;
    let rows = threshold_sweep(&exp_cfg, &cfg.thresholds)?;
    let csv_rows: Vec<SweepCsv> = rows
        .iter()
        .map(|r| SweepCsv {
            threshold: r.threshold,
            threshold_absolute: r.threshold_absolute,
            p: r.p_filter,
            p_err: r.p_filter_stderr,
            V2: r.v2.map(|v| v.value),
            V2_err: r.v2.map(|v| v.stderr),
            V3: r.v3.map(|v| v.value),
            V3_err: r.v3.map(|v| v.stderr),
            S: r.s.map(|s| s.0),
            S_err: r.s.map(|s| s.1),
        })
        .collect();
    println!("threshold          p        V2        V3         S");
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in &csv_rows {
        println!(
            "{:9.3} {:10.3e} {:>9} {:>9} {:>9}",
            r.threshold,
            r.p,
            fmt(r.V2),
            fmt(r.V3),
            fmt(r.S)
        );
    }
    let s_curve: Vec<(f64, f64)> = csv_rows
        .iter()
        .filter_map(|r| r.S.map(|s| (r.threshold, s)))
        .collect();
    run.csv("sweep.csv", csv_rows)?;
    run.text(
        "sweep.svg",
        &line_plot(
            "Separability statistic vs threshold",
            "threshold",
            "S = V2 + V3",
            &[Series {
                name: "S",
                color: "#2c5aa0",
                points: s_curve,
                markers: true,
            }],
        ),
    )?;
    run.finish(cfg)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleArgs {
    pub gain: f64,
    pub cutoff: usize,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Serialize)]
struct OracleOut<'a> {
    schema_version: u32,
    passed: bool,
    #[serde(flatten)]
    report: &'a OracleReport,
}

pub fn oracle_check(args: &OracleArgs, out: &Path) -> CliResult<()> {
    let mut run = RunOutput::create(out, "oracle-check", Some(args.seed))?;
    let report = run_oracle_checks(args.gain, args.cutoff, args.samples, args.seed)?;
    for c in &report.checks {
        println!(
            "{} {:<28} measured {:.3e}  tolerance {:.3e}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance,
            c.detail
        );
    }
    run.json(
        "oracle.json",
        &OracleOut {
            schema_version: SCHEMA_VERSION,
            passed: report.all_passed(),
            report: &report,
        },
    )?;
    run.finish(args)?;
    if report.all_passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Physics(format!(
            "oracle checks failed: {}",
            failed.join(", ")
        )))
    }
}
