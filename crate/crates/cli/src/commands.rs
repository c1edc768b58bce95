use std::fmt::Display;
use std::fs;
use std::path::Path;

use maxent_income::empirical::{self, FitError, IncomeSample, TwoClassConfig, TwoClassFit};
use maxent_income::ensemble::{self, EnsembleMode, EnsembleSpec, HistogramEntry};
use maxent_income::model::ModelError;
use maxent_income::multiplicity::{self, Regime};
use maxent_income::pareto::{self, PowerLawConfig};
use maxent_income::solver::{self, EquilibriumSolution, SolverConfig};
use maxent_income::{EconomyParams, FeasibilityReport, IncomeGrid, OccupancyVector};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifact::{config_value, opt, write_json, Artifact, CsvOut, VERSION};
use crate::{
    CliError, CountArgs, EmitPlotArgs, FitArgs, OracleArgs, ParetoFitArgs, ParetoGenerateArgs,
    SampleArgs, SampleMode, SolveArgs,
};

/// Largest `Σ (a_k + g_k)` for which `count` also prints the exact integer.
const EXACT_LIMIT: u64 = 10_000;
const PLOT_ROWS: usize = 2000;

fn domain(e: impl Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_grid(path: &Path) -> Result<IncomeGrid, CliError> {
    read_json(path)
}

fn load_sample(path: &Path) -> Result<IncomeSample, CliError> {
    empirical::load_income_csv(path).map_err(|e| match e {
        FitError::Model(ModelError::Csv(m)) => CliError::Usage(format!("{}: {m}", path.display())),
        other => CliError::Domain(format!("{}: {other}", path.display())),
    })
}

#[derive(Serialize)]
struct CountReport {
    regime: Regime,
    log_omega: f64,
    exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stirling: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<String>,
}

pub fn count(a: &CountArgs) -> Result<(), CliError> {
    let occ: OccupancyVector = read_json(&a.occupancy)?;
    let grid = read_grid(&a.grid)?;
    let log_omega = multiplicity::log_omega(&occ, &grid, a.regime).map_err(domain)?;
    let size: f64 = occ.total() + grid.degeneracies().iter().map(|&g| g as f64).sum::<f64>();
    let exact = if occ.is_integral() && size <= EXACT_LIMIT as f64 {
        let m = multiplicity::omega_exact(&occ, &grid, a.regime).map_err(domain)?;
        m.exact_omega.map(|v| v.to_string())
    } else {
        None
    };
    let stirling = if a.stirling {
        if a.regime != Regime::Perfect {
            return Err(CliError::Usage(
                "--stirling applies to the perfect regime only".into(),
            ));
        }
        Some(multiplicity::log_omega_stirling(&occ, &grid).map_err(domain)?)
    } else {
        None
    };
    let oracle = if a.oracle {
        Some(
            multiplicity::oracle_count(&occ, &grid, a.regime)
                .map_err(domain)?
                .to_string(),
        )
    } else {
        None
    };
    let artifact = Artifact {
        kind: "count",
        version: VERSION,
        seed: None,
        config: config_value(a),
        result: CountReport {
            regime: a.regime,
            log_omega,
            exact,
            stirling,
            oracle,
        },
    };
    write_json(a.output.as_deref(), &artifact)
}

#[derive(Serialize)]
struct SolveReport<'a> {
    #[serde(flatten)]
    solution: &'a EquilibriumSolution,
    levels: &'a [f64],
    degeneracies: &'a [u64],
    feasibility: FeasibilityReport,
    solver: SolverConfig,
}

pub fn solve(a: &SolveArgs) -> Result<(), CliError> {
    let grid = read_grid(&a.grid)?;
    let mut cfg: SolverConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    if let Some(tol) = a.constraint_tol {
        cfg.constraint_tol = tol;
    }
    let params = EconomyParams::continuous(a.n, a.pi).map_err(domain)?;
    let solution = solver::solve_with(&params, &grid, a.regime, &cfg).map_err(domain)?;
    let artifact = Artifact {
        kind: "solve",
        version: VERSION,
        seed: None,
        config: config_value(a),
        result: SolveReport {
            solution: &solution,
            levels: grid.levels(),
            degeneracies: grid.degeneracies(),
            feasibility: solution.feasibility(&params, &grid),
            solver: cfg,
        },
    };
    write_json(a.output.as_deref(), &artifact)
}

#[derive(Serialize)]
struct HistogramReport<'a> {
    source: &'a str,
    mode: EnsembleMode,
    processed: u64,
    levels: &'a [f64],
    histogram: Vec<HistogramEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    most_probable: Option<Vec<Vec<u64>>>,
}

pub fn sample(a: &SampleArgs) -> Result<(), CliError> {
    let (params, mode) = match a.mode {
        SampleMode::Continuous => {
            if a.quantum.is_some() {
                return Err(CliError::Usage(
                    "--quantum applies to discrete sampling only".into(),
                ));
            }
            (
                EconomyParams::continuous(a.n, a.pi),
                EnsembleMode::SampleContinuous,
            )
        }
        SampleMode::Discrete => (
            EconomyParams::new(a.n, a.pi, a.quantum.unwrap_or(1.0)),
            EnsembleMode::SampleDiscrete,
        ),
    };
    let params = params.map_err(domain)?;
    let spec = EnsembleSpec::new(params, mode, a.count, a.seed).map_err(domain)?;
    let config = config_value(a);
    if let Some(grid_path) = &a.grid {
        let grid = read_grid(grid_path)?;
        let hist = ensemble::macrostate_histogram(&spec, &grid).map_err(domain)?;
        let artifact = Artifact {
            kind: "histogram",
            version: VERSION,
            seed: Some(a.seed),
            config,
            result: HistogramReport {
                source: "sample",
                mode,
                processed: hist.processed,
                levels: grid.levels(),
                histogram: hist.entries(),
                most_probable: None,
            },
        };
        return write_json(a.output.as_deref(), &artifact);
    }
    let draws = ensemble::sample_uniform(&spec).map_err(domain)?;
    let header: Vec<String> = (1..=a.n).map(|i| format!("r{i}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvOut::create(
        a.output.as_deref(),
        "sample",
        Some(a.seed),
        &config,
        &header,
    )?;
    for alloc in &draws {
        csv.row(alloc.incomes())?;
    }
    csv.finish()
}

pub fn oracle(a: &OracleArgs) -> Result<(), CliError> {
    let params = EconomyParams::new(a.n, a.pi, a.quantum).map_err(domain)?;
    let spec = EnsembleSpec::enumeration(params, !a.unlabeled).map_err(domain)?;
    let grid = match &a.grid {
        Some(p) => read_grid(p)?,
        None => {
            let q = params.quanta().map_err(domain)?;
            let levels = (0..=q).map(|k| k as f64 * a.quantum).collect();
            IncomeGrid::new(levels, vec![1; q as usize + 1]).map_err(domain)?
        }
    };
    let hist = ensemble::macrostate_histogram(&spec, &grid).map_err(domain)?;
    let histogram = hist.entries();
    let top = histogram.first().map_or(0, |e| e.count);
    let most_probable = histogram
        .iter()
        .take_while(|e| e.count == top)
        .map(|e| e.occupancy.clone())
        .collect();
    let artifact = Artifact {
        kind: "histogram",
        version: VERSION,
        seed: None,
        config: config_value(a),
        result: HistogramReport {
            source: "oracle",
            mode: spec.mode,
            processed: hist.processed,
            levels: grid.levels(),
            histogram,
            most_probable: Some(most_probable),
        },
    };
    write_json(a.output.as_deref(), &artifact)
}

pub fn pareto_generate(a: &ParetoGenerateArgs) -> Result<(), CliError> {
    let graph = pareto::generate_preferential_attachment(a.nodes, a.m, a.seed).map_err(domain)?;
    let incomes = pareto::degrees_to_income(&graph, a.scale).map_err(domain)?;
    let mut csv = CsvOut::create(
        a.output.as_deref(),
        "pareto-sample",
        Some(a.seed),
        &config_value(a),
        &["income"],
    )?;
    for x in incomes {
        csv.row([x])?;
    }
    csv.finish()
}

pub fn pareto_fit(a: &ParetoFitArgs) -> Result<(), CliError> {
    let sample = load_sample(&a.input)?;
    let config = PowerLawConfig::default();
    let tail = match a.xmin {
        Some(xmin) => pareto::fit_power_law_at(&sample.values, xmin, config.min_tail),
        None => pareto::fit_power_law_with(&sample.values, &config),
    }
    .map_err(domain)?;
    let artifact = Artifact {
        kind: "pareto-fit",
        version: VERSION,
        seed: None,
        config: config_value(a),
        result: tail,
    };
    write_json(a.output.as_deref(), &artifact)
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    fit: &'a TwoClassFit,
    source_label: &'a str,
    plot: Vec<empirical::PlotRow>,
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let sample = load_sample(&a.input)?;
    let grid = a.grid.as_deref().map(read_grid).transpose()?;
    let cfg = TwoClassConfig {
        body_kind: a.body,
        grid: grid.clone(),
        bootstrap: a.bootstrap,
        seed: a.seed,
        ..TwoClassConfig::default()
    };
    let fit = empirical::fit_two_class(&sample, &cfg).map_err(domain)?;
    let plot = empirical::plot_rows(&sample, &fit, grid.as_ref(), PLOT_ROWS);
    let config = config_value(a);
    if let Some(path) = &a.plot {
        write_fit_plot(Some(path), Some(a.seed), &config, &plot)?;
    }
    let artifact = Artifact {
        kind: "fit",
        version: VERSION,
        seed: Some(a.seed),
        config,
        result: FitReport {
            fit: &fit,
            source_label: &sample.source_label,
            plot,
        },
    };
    write_json(a.output.as_deref(), &artifact)
}

fn write_fit_plot(
    path: Option<&Path>,
    seed: Option<u64>,
    config: &Value,
    rows: &[empirical::PlotRow],
) -> Result<(), CliError> {
    let mut csv = CsvOut::create(
        path,
        "plot",
        seed,
        config,
        &["income", "empirical_ccdf", "body_ccdf", "tail_ccdf"],
    )?;
    for r in rows {
        csv.row([
            r.income.to_string(),
            r.empirical_ccdf.to_string(),
            opt(r.body_ccdf),
            opt(r.tail_ccdf),
        ])?;
    }
    csv.finish()
}

fn schema_err(what: &str) -> CliError {
    CliError::Usage(format!(
        "artifact is missing or has a malformed {what:?} field"
    ))
}

fn field<T: DeserializeOwned>(v: &Value, key: &str) -> Result<T, CliError> {
    v.get(key)
        .cloned()
        .and_then(|x| serde_json::from_value(x).ok())
        .ok_or_else(|| schema_err(key))
}

pub fn emit_plot(a: &EmitPlotArgs) -> Result<(), CliError> {
    let v: Value = read_json(&a.input)?;
    let kind = v.get("kind").and_then(Value::as_str).unwrap_or("");
    let seed = v.get("seed").and_then(Value::as_u64);
    let config = json!({ "input": a.input, "source_kind": kind, "source_config": v.get("config") });
    let out = a.output.as_deref();
    match kind {
        "solve" => {
            let levels: Vec<f64> = field(&v, "levels")?;
            let occ: OccupancyVector = field(&v, "occupancy")?;
            if occ.len() != levels.len() {
                return Err(schema_err("occupancy"));
            }
            let mut csv = CsvOut::create(out, "plot", seed, &config, &["epsilon", "occupancy"])?;
            for (e, c) in levels.iter().zip(&occ.counts) {
                csv.row([e, c])?;
            }
            csv.finish()
        }
        "fit" => {
            let rows: Vec<empirical::PlotRow> = field(&v, "plot")?;
            write_fit_plot(out, seed, &config, &rows)
        }
        "histogram" => {
            let rows: Vec<HistogramEntry> = field(&v, "histogram")?;
            let mut csv = CsvOut::create(
                out,
                "plot",
                seed,
                &config,
                &["occupancy_id", "count", "occupancy"],
            )?;
            for (i, r) in rows.iter().enumerate() {
                let occ: Vec<String> = r.occupancy.iter().map(u64::to_string).collect();
                csv.row([i.to_string(), r.count.to_string(), occ.join(" ")])?;
            }
            csv.finish()
        }
        other => Err(CliError::Usage(format!(
            "unrecognized artifact kind {other:?} (expected solve, fit or histogram)"
        ))),
    }
}
