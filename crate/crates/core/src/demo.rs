//! Oracle-response fixture generation for offline demo runs.
//!
//! Every (strategy, model, demand) cell gets a synthetic response whose
//! vector is the exact solver's dispatch, polished so the entries sum to the
//! demand bitwise. Replaying these fixtures yields an all-zeros error table
//! with zero violations, which pins down the scoring path end to end.

use std::path::Path;

use crate::error::Result;
use crate::gateway::{ReplayStore, StoredExchange};
use crate::prompt::{build_few_shot_set, render_prompt, ScenarioSpec, Strategy};
use crate::solver::solve_ed;
use crate::system::PowerSystem;

fn oracle_response(pg: &[f64], pd: f64, cost: f64) -> String {
    let body: Vec<String> = pg.iter().map(|v| v.to_string()).collect();
    format!(
        "Optimal dispatch for PD = {pd} MW.\nPG = [{}]\nCost = {cost}",
        body.join(", ")
    )
}

/// Write one fixture per (strategy, model, evaluation demand) into a fresh
/// replay store at `path`. Returns the number of records written.
pub fn write_oracle_fixtures(
    sys: &PowerSystem,
    spec: &ScenarioSpec,
    models: &[String],
    strategies: &[Strategy],
    path: &Path,
) -> Result<usize> {
    spec.validate(sys)?;
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    let store = ReplayStore::create(path)?;
    let few_shot = build_few_shot_set(sys, &spec.few_shot_pds)?;

    let mut written = 0;
    for &strategy in strategies {
        for &pd in &spec.eval_pds {
            let bundle = render_prompt(sys, &few_shot, pd, strategy)?;
            let sol = solve_ed(sys, pd)?;
            let response = oracle_response(&sol.dispatch.pg, pd, sol.cost);
            for model in models {
                store.put(StoredExchange {
                    fingerprint: bundle.fingerprint.clone(),
                    model: model.clone(),
                    raw_response: response.clone(),
                    latency_s: 0.0,
                    recorded_at: 0.0,
                    transport_meta: Default::default(),
                })?;
                written += 1;
            }
        }
    }
    Ok(written)
}

/// The four model names the bundled demo pretends to have asked.
pub fn demo_model_names() -> Vec<String> {
    ["O3-mini-high", "O3-mini", "O1", "DeepSeek R1"]
        .map(String::from)
        .to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::parse_response;

    #[test]
    fn solver_dispatches_for_demo_demands_sum_bitwise() {
        let sys = PowerSystem::bundled_ieee118();
        for pd in [727.0, 1257.0, 2802.0, 3227.0, 3747.0, 3951.0, 4398.0, 5627.0, 5917.0, 6122.0]
        {
            let sol = solve_ed(&sys, pd).unwrap();
            assert_eq!(sol.dispatch.pg.iter().sum::<f64>(), pd, "pd {pd}");
        }
    }

    #[test]
    fn oracle_response_round_trips_bitwise() {
        let sys = PowerSystem::bundled_ieee118();
        let sol = solve_ed(&sys, 3747.0).unwrap();
        let text = oracle_response(&sol.dispatch.pg, 3747.0, sol.cost);
        let parsed = parse_response(&text, 19).dispatch.unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&parsed), bits(&sol.dispatch.pg));
    }

    #[test]
    fn fixture_count_covers_the_grid() {
        let dir = tempfile::tempdir().unwrap();
        let sys = PowerSystem::bundled_ieee118();
        let spec = ScenarioSpec::default();
        let path = dir.path().join("demo.jsonl");
        let n = write_oracle_fixtures(
            &sys,
            &spec,
            &demo_model_names(),
            &Strategy::ALL,
            &path,
        )
        .unwrap();
        assert_eq!(n, 80);
        assert_eq!(ReplayStore::open(&path).unwrap().len(), 80);
    }
}
