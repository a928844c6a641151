//! Prompt construction and response parsing.
//!
//! Prompts carry four sections: a problem description, solved in-context
//! examples, a strategy-specific task instruction, and (for the evolutionary
//! strategy) a closing note. Cost coefficients and generation limits are
//! deliberately absent from the text; the examples are the only numeric
//! content. Rendering is deterministic and fingerprinted so recorded
//! exchanges can be replayed against the exact prompt that produced them.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::solver::solve_ed;
use crate::system::{Dispatch, PowerSystem};

/// Bump when any template wording changes; part of every fingerprint.
pub const TEMPLATE_VERSION: &str = "v1";

/// Balance slack tolerated in few-shot examples, in MW.
const FEW_SHOT_BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    NonEvolutionary,
    Evolutionary,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::NonEvolutionary, Strategy::Evolutionary];

    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::NonEvolutionary => "non-evolutionary",
            Strategy::Evolutionary => "evolutionary",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non-evolutionary" => Ok(Strategy::NonEvolutionary),
            "evolutionary" => Ok(Strategy::Evolutionary),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected `non-evolutionary` or `evolutionary`)"
            ))),
        }
    }
}

/// One solved loading scenario offered to the model as ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub pd: f64,
    /// Cost with the constant terms excluded, matching the prompt convention.
    pub cost: f64,
    pub dispatch: Dispatch,
}

/// The in-context example block: solved scenarios with strictly increasing
/// demands, each balanced to its demand within 1e-6 MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSet {
    examples: Vec<FewShotExample>,
}

impl FewShotSet {
    pub fn new(examples: Vec<FewShotExample>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Config("few-shot set must not be empty".into()));
        }
        for ex in &examples {
            let imbalance = (ex.dispatch.total_generation() - ex.pd).abs();
            if imbalance > FEW_SHOT_BALANCE_TOL {
                return Err(Error::Config(format!(
                    "few-shot example for pd {} is unbalanced by {imbalance} MW",
                    ex.pd
                )));
            }
        }
        for pair in examples.windows(2) {
            if pair[1].pd <= pair[0].pd {
                return Err(Error::Config(format!(
                    "few-shot demands must be strictly increasing ({} then {})",
                    pair[0].pd, pair[1].pd
                )));
            }
        }
        Ok(Self { examples })
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }
}

/// Demands used for the five bundled examples: evenly spaced from 700 to
/// 6500 MW (step 1450).
pub fn default_few_shot_pds() -> Vec<f64> {
    linspace(700.0, 6500.0, 5)
}

/// The ten evaluation demands used by the bundled benchmark.
pub fn default_eval_pds() -> Vec<f64> {
    vec![
        727.0, 1257.0, 2802.0, 3227.0, 3747.0, 3951.0, 4398.0, 5627.0, 5917.0, 6122.0,
    ]
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n as f64 - 1.0);
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Solve each demand and collect the examples, costs reported without the
/// constant terms.
pub fn build_few_shot_set(sys: &PowerSystem, pds: &[f64]) -> Result<FewShotSet> {
    let examples = pds
        .iter()
        .map(|&pd| {
            let sol = solve_ed(sys, pd)?;
            Ok(FewShotExample {
                pd,
                cost: sol.cost,
                dispatch: sol.dispatch,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FewShotSet::new(examples)
}

/// Which demands get solved for the examples and which get benchmarked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub few_shot_pds: Vec<f64>,
    pub eval_pds: Vec<f64>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            few_shot_pds: default_few_shot_pds(),
            eval_pds: default_eval_pds(),
        }
    }
}

impl ScenarioSpec {
    /// Every demand must be feasible and the two sets disjoint.
    pub fn validate(&self, sys: &PowerSystem) -> Result<()> {
        for &pd in self.few_shot_pds.iter().chain(&self.eval_pds) {
            sys.check_feasible(pd)?;
        }
        for &pd in &self.eval_pds {
            if self.few_shot_pds.contains(&pd) {
                return Err(Error::Config(format!(
                    "evaluation demand {pd} MW also appears in the few-shot set"
                )));
            }
        }
        Ok(())
    }
}

/// A rendered prompt, tagged with its strategy, demand, and content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub strategy: Strategy,
    pub target_pd: f64,
    pub text: String,
    pub fingerprint: String,
}

/// Render a number the way the example tables print them: at most two
/// decimals, trailing zeros trimmed.
pub fn format_mw(v: f64) -> String {
    let s = format!("{v:.2}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    if trimmed == "-0" {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}

fn pg_line(dispatch: &Dispatch) -> String {
    let body: Vec<String> = dispatch.pg.iter().map(|&v| format_mw(v)).collect();
    format!("PG = [{}]", body.join(", "))
}

const PROBLEM_DESCRIPTION: &str = "You are provided with a set of optimal generation dispatches (PG) for various loading scenarios, each associated with a specific total load demand (PD) and the corresponding minimum cost. The goal is to determine a new generation dispatch list for a total load demand, ensuring that the sum of the generation values equals the load demand while maintaining economic efficiency.";

const EVOLUTIONARY_STEPS: &str = "1. Choose two dispatch scenarios from the provided data. These sets serve as parent solutions for generating a new candidate.
2. Combine elements from the two selected parent dispatches to form a new candidate dispatch.
3. Mutate the candidate dispatch obtained from the crossover.
4. Repeat the selection, crossover, and mutation steps until you generate 10 candidate dispatch sets.
5. Evaluate these 10 candidates based on their estimated cost, then select the best solution and provide its vector form.";

const EVOLUTIONARY_NOTE: &str = "Note: Do not include any code; ensure the solution maintains exact power balance and respects the observed generator limits.";

/// Render the full prompt for one target demand.
///
/// Output is byte-identical for identical inputs; the fingerprint is a
/// SHA-256 over the template version and the rendered text.
pub fn render_prompt(
    sys: &PowerSystem,
    few_shot: &FewShotSet,
    target_pd: f64,
    strategy: Strategy,
) -> Result<PromptBundle> {
    sys.check_feasible(target_pd)?;

    let mut text = String::new();
    text.push_str("Description of Problem\n\n");
    text.push_str(PROBLEM_DESCRIPTION);
    text.push_str("\n\nIn-Context Examples (Population)\n");
    for ex in few_shot.examples() {
        text.push('\n');
        text.push_str(&format!(
            "PD = {} MW, Cost = {}\n",
            format_mw(ex.pd),
            format_mw(ex.cost)
        ));
        text.push_str(&pg_line(&ex.dispatch));
        text.push('\n');
    }
    match strategy {
        Strategy::NonEvolutionary => {
            text.push_str("\nNon-Evolutionary Algorithm Task Instruction\n\n");
            text.push_str(&format!(
                "Generate a new list of generation dispatches PG for a total load demand PD = {} MW. The solution should follow the trend observed in the given data, maintaining proportionality and logical scaling of generator contributions with minimum cost value.\n",
                format_mw(target_pd)
            ));
        }
        Strategy::Evolutionary => {
            text.push_str("\nEvolutionary Algorithm Task Instruction\n\n");
            text.push_str(&format!(
                "Generate a new candidate dispatch for a total load demand PD = {} MW by applying the following evolutionary procedure:\n",
                format_mw(target_pd)
            ));
            text.push_str(EVOLUTIONARY_STEPS);
            text.push_str("\n\n");
            text.push_str(EVOLUTIONARY_NOTE);
            text.push('\n');
        }
    }

    let mut hasher = Sha256::new();
    hasher.update(TEMPLATE_VERSION.as_bytes());
    hasher.update([0]);
    hasher.update(text.as_bytes());
    let fingerprint = hex::encode(hasher.finalize());

    Ok(PromptBundle {
        strategy,
        target_pd,
        text,
        fingerprint,
    })
}

/// What was salvaged from a model's free-form reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    /// The last bracketed numeric vector with one entry per unit, if any.
    pub dispatch: Option<Vec<f64>>,
    /// The last "cost"-labeled number, recorded but never trusted by scoring.
    pub claimed_cost: Option<f64>,
    pub diagnostics: Vec<String>,
}

impl ParsedResponse {
    pub fn parse_ok(&self) -> bool {
        self.dispatch.is_some()
    }
}

fn bracket_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)\[[^\[\]]*\]").expect("valid regex"))
}

fn thousands_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d),(\d{3})(\D|$)").expect("valid regex"))
}

fn cost_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)costs?\s*(?:is|=|:|of|≈|~)?\s*\$?\s*(-?\d[\d,]*(?:\.\d+)?)")
            .expect("valid regex")
    })
}

fn strip_thousands(s: &str) -> String {
    let mut out = s.to_string();
    loop {
        let next = thousands_re().replace_all(&out, "${1}${2}${3}").into_owned();
        if next == out {
            return out;
        }
        out = next;
    }
}

fn numeric_tokens(body: &str) -> Option<Vec<f64>> {
    let mut values = Vec::new();
    for token in body.split(',') {
        let v: f64 = token.trim().parse().ok()?;
        if !v.is_finite() {
            return None;
        }
        values.push(v);
    }
    Some(values)
}

/// Pull a dispatch vector and a claimed cost out of arbitrary response text.
///
/// Code fences are stripped (markers removed, content kept). Of all bracketed
/// numeric vectors, the LAST one with `n_units` entries wins; responses
/// often enumerate candidates before the final answer. Each bracketed chunk
/// is read verbatim first and with thousands separators stripped second, so
/// both `[50, 10, ...]` and `[..., 1,182, ...]` resolve; the length filter
/// arbitrates. Failure to find a vector is a result, not an error.
pub fn parse_response(raw: &str, n_units: usize) -> ParsedResponse {
    let text: String = raw
        .lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");

    let mut dispatch = None;
    let mut lengths = Vec::new();
    for m in bracket_re().find_iter(&text) {
        let body = &m.as_str()[1..m.as_str().len() - 1];
        let verbatim = numeric_tokens(body);
        let values = if verbatim.as_ref().is_some_and(|v| v.len() == n_units) {
            verbatim
        } else {
            let stripped = numeric_tokens(&strip_thousands(body));
            if stripped.as_ref().is_some_and(|v| v.len() == n_units) {
                stripped
            } else {
                verbatim.or(stripped)
            }
        };
        if let Some(values) = values {
            lengths.push(values.len());
            if values.len() == n_units {
                dispatch = Some(values);
            }
        }
    }

    let claimed_cost = cost_re()
        .captures_iter(&text)
        .last()
        .and_then(|cap| strip_thousands(&cap[1]).parse::<f64>().ok())
        .filter(|v| v.is_finite());

    let mut diagnostics = Vec::new();
    if lengths.is_empty() {
        diagnostics.push("no bracketed numeric vectors found".to_string());
    } else if dispatch.is_none() {
        diagnostics.push(format!(
            "no vector of length {n_units}; bracketed numeric vector lengths seen: {lengths:?}"
        ));
    }

    ParsedResponse {
        dispatch,
        claimed_cost,
        diagnostics,
    }
}
