//! Experiment orchestration: few-shot set × evaluation demands × models ×
//! strategies, scored against the exact solver, with CSV/Markdown reports.
//!
//! Scoring never trusts a model's claimed cost: the relative error is always
//! recomputed from the parsed vector through the cost function. Exact
//! solutions are cached per demand, so a run performs exactly one oracle
//! solve per evaluation demand regardless of how many models it scores.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Backend, ModelTarget};
use crate::prompt::{
    build_few_shot_set, parse_response, render_prompt, ParsedResponse, PromptBundle,
    ScenarioSpec, Strategy,
};
use crate::solver::{solve_ed, total_cost, violations, EdSolution};
use crate::system::{Dispatch, PowerSystem};

/// Knobs that shape a run without being part of the experiment definition.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Upper bound on concurrently scored cells (the gateway's in-flight bound).
    pub concurrency: usize,
    /// Score with the constant cost terms included. Off by default, matching
    /// the prompt convention.
    pub include_constants: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            concurrency: 2,
            include_constants: false,
        }
    }
}

/// One scored (demand, model, strategy) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub pd: f64,
    pub model: String,
    pub strategy: Strategy,
    pub parse_ok: bool,
    pub parsed: ParsedResponse,
    /// Cost of the parsed dispatch, recomputed under the active constants
    /// convention. Absent when the cell failed.
    pub llm_cost: Option<f64>,
    pub exact_cost: f64,
    pub rel_error_pct: Option<f64>,
    pub gen_violation: Option<f64>,
    pub balance_violation: Option<f64>,
    /// Transport or fixture failure, when the exchange never completed.
    pub failure: Option<String>,
}

/// Aggregates for one (strategy, model) group. Means cover scored rows only;
/// the failure count is always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub strategy: Strategy,
    pub model: String,
    pub scored: usize,
    pub failed: usize,
    pub mean_rel_error_pct: Option<f64>,
    pub mean_gen_violation: Option<f64>,
    pub mean_balance_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub scored: usize,
    pub failed: usize,
    pub mean_rel_error_pct: Option<f64>,
    pub mean_gen_violation: Option<f64>,
    pub mean_balance_violation: Option<f64>,
}

/// The exact solution for one evaluation demand, kept for dispatch overlays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactCell {
    pub pd: f64,
    pub cost: f64,
    pub pg: Vec<f64>,
}

/// A rendered prompt's identity, echoed into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRef {
    pub strategy: Strategy,
    pub pd: f64,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub results: Vec<ScenarioResult>,
    pub summaries: Vec<GroupSummary>,
    pub strategy_summaries: Vec<StrategySummary>,
    pub exact: Vec<ExactCell>,
    pub prompts: Vec<PromptRef>,
    /// Bus labels in canonical unit order, for the dispatch overlay.
    pub buses: Vec<u32>,
    /// Demand order of the run, used for report rows.
    pub eval_pds: Vec<f64>,
    /// Model order of the run, used for report columns.
    pub models: Vec<String>,
}

/// Run the full experiment grid. Partial failures (fixture misses, transport
/// errors, unparseable responses) become failed cells; the run never aborts.
pub fn run_benchmark(
    sys: &PowerSystem,
    spec: &ScenarioSpec,
    models: &[ModelTarget],
    strategies: &[Strategy],
    backend: &dyn Backend,
    options: &RunOptions,
) -> Result<BenchmarkReport> {
    if models.is_empty() {
        return Err(Error::Config("at least one model target is required".into()));
    }
    if strategies.is_empty() {
        return Err(Error::Config("at least one strategy is required".into()));
    }
    for m in models {
        m.validate()?;
    }
    spec.validate(sys)?;

    let few_shot = build_few_shot_set(sys, &spec.few_shot_pds)?;

    // One oracle solve per evaluation demand, cached up front.
    let exact: Vec<EdSolution> = spec
        .eval_pds
        .iter()
        .map(|&pd| solve_ed(sys, pd))
        .collect::<Result<_>>()?;

    // Prompts depend on (strategy, pd) only; render each once.
    let mut prompts: Vec<Vec<PromptBundle>> = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let row = spec
            .eval_pds
            .iter()
            .map(|&pd| render_prompt(sys, &few_shot, pd, strategy))
            .collect::<Result<Vec<_>>>()?;
        prompts.push(row);
    }

    // Cell grid in report order: strategy-major, then model, then demand.
    struct Cell<'a> {
        strategy: Strategy,
        model: &'a ModelTarget,
        bundle: &'a PromptBundle,
        exact: &'a EdSolution,
    }
    let mut cells = Vec::new();
    for (si, &strategy) in strategies.iter().enumerate() {
        for model in models {
            for (pi, _) in spec.eval_pds.iter().enumerate() {
                cells.push(Cell {
                    strategy,
                    model,
                    bundle: &prompts[si][pi],
                    exact: &exact[pi],
                });
            }
        }
    }

    let sum_c: f64 = sys.units().iter().map(|u| u.c).sum();
    let score_cell = |cell: &Cell| -> ScenarioResult {
        let pd = cell.exact.dispatch.pd;
        let exact_cost = if options.include_constants {
            cell.exact.cost + sum_c
        } else {
            cell.exact.cost
        };
        let base = ScenarioResult {
            pd,
            model: cell.model.name.clone(),
            strategy: cell.strategy,
            parse_ok: false,
            parsed: ParsedResponse {
                dispatch: None,
                claimed_cost: None,
                diagnostics: Vec::new(),
            },
            llm_cost: None,
            exact_cost,
            rel_error_pct: None,
            gen_violation: None,
            balance_violation: None,
            failure: None,
        };
        let exchange = match backend.complete(cell.bundle, cell.model) {
            Ok(exchange) => exchange,
            Err(e) => {
                return ScenarioResult {
                    failure: Some(e.to_string()),
                    ..base
                }
            }
        };
        let parsed = parse_response(&exchange.raw_response, sys.n_units());
        let Some(pg) = parsed.dispatch.clone() else {
            return ScenarioResult { parsed, ..base };
        };
        let dispatch = match Dispatch::new(pg, pd) {
            Ok(d) => d,
            Err(e) => {
                return ScenarioResult {
                    parsed,
                    failure: Some(e.to_string()),
                    ..base
                }
            }
        };
        let llm_cost = total_cost(&dispatch, sys, options.include_constants)
            .expect("length checked by parser");
        let (gen_violation, balance_violation) =
            violations(&dispatch, sys).expect("length checked by parser");
        ScenarioResult {
            parse_ok: true,
            parsed,
            llm_cost: Some(llm_cost),
            rel_error_pct: Some((llm_cost - exact_cost).abs() / exact_cost * 100.0),
            gen_violation: Some(gen_violation),
            balance_violation: Some(balance_violation),
            ..base
        }
    };

    // Independent cells, bounded concurrency, ordered reduction by index.
    let workers = options.concurrency.max(1).min(cells.len().max(1));
    let slots: Mutex<Vec<Option<ScenarioResult>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let result = score_cell(&cells[i]);
                slots.lock().expect("result slots")[i] = Some(result);
            });
        }
    });
    let results: Vec<ScenarioResult> = slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every cell scored"))
        .collect();

    let summaries = summarize(&results, strategies, models);
    let strategy_summaries = summarize_strategies(&results, strategies);

    Ok(BenchmarkReport {
        results,
        summaries,
        strategy_summaries,
        exact: exact
            .iter()
            .map(|s| ExactCell {
                pd: s.dispatch.pd,
                cost: s.cost,
                pg: s.dispatch.pg.clone(),
            })
            .collect(),
        prompts: strategies
            .iter()
            .enumerate()
            .flat_map(|(si, &strategy)| {
                prompts[si]
                    .iter()
                    .map(move |b| PromptRef {
                        strategy,
                        pd: b.target_pd,
                        fingerprint: b.fingerprint.clone(),
                    })
                    .collect::<Vec<_>>()
            })
            .collect(),
        buses: sys.units().iter().map(|u| u.bus).collect(),
        eval_pds: spec.eval_pds.clone(),
        models: models.iter().map(|m| m.name.clone()).collect(),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        None
    } else {
        Some(collected.iter().sum::<f64>() / collected.len() as f64)
    }
}

/// Per-(strategy, model) aggregation; order-insensitive over `results`.
pub fn summarize(
    results: &[ScenarioResult],
    strategies: &[Strategy],
    models: &[ModelTarget],
) -> Vec<GroupSummary> {
    let mut out = Vec::new();
    for &strategy in strategies {
        for model in models {
            let rows: Vec<&ScenarioResult> = results
                .iter()
                .filter(|r| r.strategy == strategy && r.model == model.name)
                .collect();
            let ok: Vec<&&ScenarioResult> = rows.iter().filter(|r| r.parse_ok).collect();
            out.push(GroupSummary {
                strategy,
                model: model.name.clone(),
                scored: ok.len(),
                failed: rows.len() - ok.len(),
                mean_rel_error_pct: mean(ok.iter().filter_map(|r| r.rel_error_pct)),
                mean_gen_violation: mean(ok.iter().filter_map(|r| r.gen_violation)),
                mean_balance_violation: mean(ok.iter().filter_map(|r| r.balance_violation)),
            });
        }
    }
    out
}

fn summarize_strategies(results: &[ScenarioResult], strategies: &[Strategy]) -> Vec<StrategySummary> {
    strategies
        .iter()
        .map(|&strategy| {
            let rows: Vec<&ScenarioResult> =
                results.iter().filter(|r| r.strategy == strategy).collect();
            let ok: Vec<&&ScenarioResult> = rows.iter().filter(|r| r.parse_ok).collect();
            StrategySummary {
                strategy,
                scored: ok.len(),
                failed: rows.len() - ok.len(),
                mean_rel_error_pct: mean(ok.iter().filter_map(|r| r.rel_error_pct)),
                mean_gen_violation: mean(ok.iter().filter_map(|r| r.gen_violation)),
                mean_balance_violation: mean(ok.iter().filter_map(|r| r.balance_violation)),
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Write the report files into `out_dir`:
/// `report_<strategy>.csv` / `.md` (rows = load demand, columns = models),
/// `violations.csv`, `dispatch_series.csv`, `results.json`, and
/// `run_manifest.json` echoing `config_echo` plus the prompt fingerprints.
/// Returns the written paths. Output is byte-identical for identical reports.
pub fn emit_report(
    report: &BenchmarkReport,
    out_dir: &Path,
    config_echo: &serde_json::Value,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let strategies: Vec<Strategy> = report
        .strategy_summaries
        .iter()
        .map(|s| s.strategy)
        .collect();

    let cell = |strategy: Strategy, model: &str, pd: f64| -> Option<&ScenarioResult> {
        report
            .results
            .iter()
            .find(|r| r.strategy == strategy && r.model == model && r.pd == pd)
    };

    for &strategy in &strategies {
        let mut csv = String::from("load_demand_mw");
        for m in &report.models {
            csv.push(',');
            csv.push_str(m);
        }
        csv.push('\n');
        let mut md = format!(
            "# Generation cost relative error, {} strategy (%)\n\n| Load demand (MW) |{}\n|---|{}\n",
            strategy,
            report
                .models
                .iter()
                .map(|m| format!(" {m} |"))
                .collect::<String>(),
            "---|".repeat(report.models.len())
        );
        for &pd in &report.eval_pds {
            csv.push_str(&crate::prompt::format_mw(pd));
            md.push_str(&format!("| {} |", crate::prompt::format_mw(pd)));
            for m in &report.models {
                let rel = cell(strategy, m, pd).and_then(|r| r.rel_error_pct);
                csv.push(',');
                csv.push_str(&fmt_opt(rel));
                md.push_str(&format!(
                    " {} |",
                    rel.map(|x| format!("{x:.4}")).unwrap_or_else(|| "failed".into())
                ));
            }
            csv.push('\n');
            md.push('\n');
        }
        let csv_path = out_dir.join(format!("report_{strategy}.csv"));
        std::fs::write(&csv_path, csv)?;
        written.push(csv_path);
        let md_path = out_dir.join(format!("report_{strategy}.md"));
        std::fs::write(&md_path, md)?;
        written.push(md_path);
    }

    let mut violations_csv = String::from(
        "strategy,model,scored,failed,mean_rel_error_pct,mean_gen_violation_mw,mean_balance_violation_mw\n",
    );
    for s in &report.summaries {
        violations_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.strategy,
            s.model,
            s.scored,
            s.failed,
            fmt_opt(s.mean_rel_error_pct),
            fmt_opt(s.mean_gen_violation),
            fmt_opt(s.mean_balance_violation),
        ));
    }
    let violations_path = out_dir.join("violations.csv");
    std::fs::write(&violations_path, violations_csv)?;
    written.push(violations_path);

    let mut series_csv = String::from("pd_mw,series,bus,pg_mw\n");
    for exact in &report.exact {
        for (bus, pg) in report.buses.iter().zip(&exact.pg) {
            series_csv.push_str(&format!(
                "{},exact,{bus},{pg:.6}\n",
                crate::prompt::format_mw(exact.pd)
            ));
        }
    }
    for r in &report.results {
        if let Some(pg) = &r.parsed.dispatch {
            for (bus, value) in report.buses.iter().zip(pg) {
                series_csv.push_str(&format!(
                    "{},{}/{},{bus},{value:.6}\n",
                    crate::prompt::format_mw(r.pd),
                    r.model,
                    r.strategy,
                ));
            }
        }
    }
    let series_path = out_dir.join("dispatch_series.csv");
    std::fs::write(&series_path, series_csv)?;
    written.push(series_path);

    let results_path = out_dir.join("results.json");
    std::fs::write(&results_path, serde_json::to_string_pretty(report)?)?;
    written.push(results_path);

    let manifest = serde_json::json!({
        "config": config_echo,
        "template_version": crate::prompt::TEMPLATE_VERSION,
        "prompts": report.prompts,
        "models": report.models,
        "eval_pds": report.eval_pds,
    });
    let manifest_path = out_dir.join("run_manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    written.push(manifest_path);

    Ok(written)
}
