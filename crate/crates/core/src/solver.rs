//! Exact economic dispatch: cost evaluation, constraint violations, and the
//! equal-incremental-cost (lambda bisection) solver.
//!
//! The problem is a separable convex QP with one equality constraint:
//! minimize `sum(a_i*pg_i^2 + b_i*pg_i + c_i)` subject to `sum(pg_i) = pd`
//! and `p_min_i <= pg_i <= p_max_i`. At the optimum every unit strictly
//! inside its box runs at the same marginal cost `lambda`; units pinned at a
//! bound have marginal cost on the profitable side of it. Each unit's output
//! as a function of lambda is `clamp((lambda - b_i) / (2*a_i), p_min, p_max)`,
//! which is nondecreasing in lambda, so bisection on lambda recovers the
//! global optimum exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{Dispatch, PowerSystem};

/// Power-balance tolerance of the solver, in MW.
pub const BALANCE_TOL: f64 = 1e-6;

/// Tolerance for the KKT stationarity certificate, in $/MWh.
pub const KKT_TOL: f64 = 1e-6;

const MAX_BISECT_ITERS: usize = 500;

/// An exact dispatch solution: the optimizer, its cost (constants excluded),
/// and the marginal price at the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdSolution {
    pub dispatch: Dispatch,
    pub cost: f64,
    pub lambda: f64,
}

/// Total generation cost of a dispatch in $/h.
///
/// Returns `sum(a_i*pg_i^2 + b_i*pg_i)`, adding `sum(c_i)` only when
/// `include_constants` is set. The bundled prompt costs (Table-style
/// `Cost = ...` lines) follow the constants-off convention.
pub fn total_cost(d: &Dispatch, sys: &PowerSystem, include_constants: bool) -> Result<f64> {
    sys.check_dimension(&d.pg)?;
    let variable: f64 = sys
        .units()
        .iter()
        .zip(&d.pg)
        .map(|(u, &p)| u.a * p * p + u.b * p)
        .sum();
    Ok(if include_constants {
        variable + sys.units().iter().map(|u| u.c).sum::<f64>()
    } else {
        variable
    })
}

/// Generation-limit and power-balance violations of a dispatch, in MW.
///
/// `gen_violation` sums each unit's excursion below `p_min` or above `p_max`;
/// `balance_violation` is `|sum(pg) - pd|`.
pub fn violations(d: &Dispatch, sys: &PowerSystem) -> Result<(f64, f64)> {
    sys.check_dimension(&d.pg)?;
    let gen: f64 = sys
        .units()
        .iter()
        .zip(&d.pg)
        .map(|(u, &p)| (u.p_min - p).max(0.0) + (p - u.p_max).max(0.0))
        .sum();
    let balance = (d.total_generation() - d.pd).abs();
    Ok((gen, balance))
}

/// Unit output at a given marginal price. For `a = 0` the marginal cost is
/// flat at `b`, so the output is a step; ties at `lambda == b` start at
/// `p_min` and the residual is distributed separately.
fn output_at_lambda(u: &crate::system::GeneratorUnit, lambda: f64) -> f64 {
    if u.a > 0.0 {
        ((lambda - u.b) / (2.0 * u.a)).clamp(u.p_min, u.p_max)
    } else if lambda > u.b {
        u.p_max
    } else {
        u.p_min
    }
}

fn total_at_lambda(sys: &PowerSystem, lambda: f64) -> f64 {
    sys.units().iter().map(|u| output_at_lambda(u, lambda)).sum()
}

/// Solve the dispatch problem exactly for demand `pd`.
///
/// The reported cost excludes the constant terms `c_i` (apply
/// [`total_cost`] with `include_constants` to restore them; the argmin does
/// not depend on the convention). The solver is a pure function: identical
/// inputs give bitwise-identical outputs.
pub fn solve_ed(sys: &PowerSystem, pd: f64) -> Result<EdSolution> {
    sys.check_feasible(pd)?;

    let lambda_lo = sys.units().iter().map(|u| u.b).fold(f64::INFINITY, f64::min);
    let lambda_hi = sys
        .units()
        .iter()
        .map(|u| u.marginal_cost(u.p_max))
        .fold(f64::NEG_INFINITY, f64::max);

    // At the aggregate bounds the optimum is the unique feasible point; return
    // it exactly rather than within bisection tolerance.
    if pd == sys.pd_min() {
        let pg: Vec<f64> = sys.units().iter().map(|u| u.p_min).collect();
        return finish(sys, pg, pd, lambda_lo);
    }
    if pd == sys.pd_max() {
        let pg: Vec<f64> = sys.units().iter().map(|u| u.p_max).collect();
        return finish(sys, pg, pd, lambda_hi);
    }

    let (mut lo, mut hi) = (lambda_lo, lambda_hi);
    for _ in 0..MAX_BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        let total = total_at_lambda(sys, mid);
        if (total - pd).abs() <= BALANCE_TOL {
            let pg: Vec<f64> = sys.units().iter().map(|u| output_at_lambda(u, mid)).collect();
            return finish(sys, pg, pd, mid);
        }
        if total < pd {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }

    // The bracket is exhausted without meeting the balance tolerance, so the
    // demand sits on a step discontinuity introduced by zero-`a` units tied at
    // lambda = b. Distribute the residual over the tied units proportionally
    // to headroom (ascending index order).
    let lambda = 0.5 * (lo + hi);
    let tie_width = hi - lo + f64::EPSILON * lambda.abs().max(1.0);
    let mut pg: Vec<f64> = sys.units().iter().map(|u| output_at_lambda(u, lo)).collect();
    let tied: Vec<usize> = sys
        .units()
        .iter()
        .enumerate()
        .filter(|(_, u)| u.a == 0.0 && (u.b - lambda).abs() <= tie_width)
        .map(|(i, _)| i)
        .collect();
    for &i in &tied {
        pg[i] = sys.units()[i].p_min;
    }
    let residual = pd - pg.iter().sum::<f64>();
    let headroom: f64 = tied.iter().map(|&i| sys.units()[i].range()).sum();
    if headroom > 0.0 && residual >= -BALANCE_TOL {
        let fraction = (residual / headroom).clamp(0.0, 1.0);
        for &i in &tied {
            let u = &sys.units()[i];
            pg[i] = u.p_min + fraction * u.range();
        }
    }
    let imbalance = pd - pg.iter().sum::<f64>();
    if imbalance.abs() > BALANCE_TOL {
        return Err(Error::Config(format!(
            "solver failed to balance demand {pd} MW; residual {imbalance} MW"
        )));
    }
    finish(sys, pg, pd, lambda)
}

/// Fold the bisection residual into the unit with the widest interior
/// margin, so the dispatch sums to `pd` bitwise whenever a unit can absorb
/// it without leaving its box. The shift is at most the balance tolerance,
/// orders of magnitude below the KKT tolerance's effect.
fn absorb_residual(pg: &mut [f64], pd: f64, sys: &PowerSystem) {
    let Some(j) = sys
        .units()
        .iter()
        .zip(pg.iter())
        .enumerate()
        .max_by(|(_, (ua, &pa)), (_, (ub, &pb))| {
            let margin_a = (pa - ua.p_min).min(ua.p_max - pa);
            let margin_b = (pb - ub.p_min).min(ub.p_max - pb);
            margin_a.total_cmp(&margin_b)
        })
        .map(|(i, _)| i)
    else {
        return;
    };
    let u = &sys.units()[j];
    for _ in 0..100 {
        let sum: f64 = pg.iter().sum();
        if sum == pd {
            return;
        }
        let shifted = pg[j] + (pd - sum);
        if shifted < u.p_min || shifted > u.p_max {
            return;
        }
        pg[j] = shifted;
    }
}

fn finish(sys: &PowerSystem, mut pg: Vec<f64>, pd: f64, lambda: f64) -> Result<EdSolution> {
    absorb_residual(&mut pg, pd, sys);
    let dispatch = Dispatch::new(pg, pd)?;
    let cost = total_cost(&dispatch, sys, false)?;
    let solution = EdSolution {
        dispatch,
        cost,
        lambda,
    };
    debug_assert!(
        kkt_certificate(&solution, sys, KKT_TOL).is_ok(),
        "solver output failed its own KKT certificate"
    );
    Ok(solution)
}

/// Check the optimality certificate of a solution.
///
/// Interior units must run at marginal cost `lambda` (within `tol`); units at
/// `p_max` must have marginal cost `<= lambda + tol`; units at `p_min` must
/// have marginal cost `>= lambda - tol`. Power balance and box limits are
/// checked as well. Returns a description of the first failure.
pub fn kkt_certificate(
    sol: &EdSolution,
    sys: &PowerSystem,
    tol: f64,
) -> std::result::Result<(), String> {
    sys.check_dimension(&sol.dispatch.pg)
        .map_err(|e| e.to_string())?;
    let balance = (sol.dispatch.total_generation() - sol.dispatch.pd).abs();
    if balance > BALANCE_TOL {
        return Err(format!("balance violation {balance} MW exceeds {BALANCE_TOL}"));
    }
    for (i, (u, &p)) in sys.units().iter().zip(&sol.dispatch.pg).enumerate() {
        if p < u.p_min || p > u.p_max {
            return Err(format!("unit {i} output {p} outside [{}, {}]", u.p_min, u.p_max));
        }
        let marginal = u.marginal_cost(p);
        let at_min = p <= u.p_min;
        let at_max = p >= u.p_max;
        if at_max && marginal > sol.lambda + tol {
            return Err(format!(
                "unit {i} at p_max has marginal {marginal} > lambda {} + tol",
                sol.lambda
            ));
        }
        if at_min && marginal < sol.lambda - tol {
            return Err(format!(
                "unit {i} at p_min has marginal {marginal} < lambda {} - tol",
                sol.lambda
            ));
        }
        if !at_min && !at_max && (marginal - sol.lambda).abs() > tol {
            return Err(format!(
                "interior unit {i} marginal {marginal} != lambda {}",
                sol.lambda
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{load_system, GeneratorUnit};

    fn sys() -> PowerSystem {
        PowerSystem::bundled_ieee118()
    }

    /// The PD = 700 MW in-context dispatch from the prompt fixtures.
    fn prompt_dispatch_700() -> Dispatch {
        Dispatch::new(
            vec![
                50.0, 10.0, 20.0, 40.0, 5.0, 5.0, 30.0, 10.0, 50.0, 20.0, 40.0, 80.0, 100.0,
                60.0, 2.0, 50.0, 108.0, 10.0, 10.0,
            ],
            700.0,
        )
        .unwrap()
    }

    fn prompt_dispatch_6500() -> Dispatch {
        Dispatch::new(
            vec![
                505.0, 70.0, 221.0, 485.0, 17.0, 20.0, 223.0, 53.0, 308.0, 195.0, 441.0, 784.0,
                1182.0, 509.0, 10.0, 637.0, 653.0, 108.0, 79.0,
            ],
            6500.0,
        )
        .unwrap()
    }

    #[test]
    fn cost_reproduces_printed_700() {
        let c = total_cost(&prompt_dispatch_700(), &sys(), false).unwrap();
        assert!((c - 18077.53).abs() <= 0.01, "got {c}");
    }

    #[test]
    fn cost_reproduces_printed_6500() {
        let c = total_cost(&prompt_dispatch_6500(), &sys(), false).unwrap();
        assert!((c - 189132.65).abs() <= 0.01, "got {c}");
    }

    #[test]
    fn constants_add_exactly_sum_c() {
        // sum of the c column, added by hand: 2730.
        let s = sys();
        let d = prompt_dispatch_700();
        let off = total_cost(&d, &s, false).unwrap();
        let on = total_cost(&d, &s, true).unwrap();
        assert_eq!(on - off, 2730.0);
    }

    #[test]
    fn zero_dispatch_costs_nothing() {
        let d = Dispatch::new(vec![0.0; 19], 0.0).unwrap();
        assert_eq!(total_cost(&d, &sys(), false).unwrap(), 0.0);
    }

    #[test]
    fn cost_checks_dimension() {
        let d = Dispatch::new(vec![0.0; 5], 0.0).unwrap();
        assert!(matches!(
            total_cost(&d, &sys(), false),
            Err(Error::DimensionMismatch { expected: 19, got: 5 })
        ));
    }

    #[test]
    fn solve_700_matches_prompt_structure() {
        let s = sys();
        let sol = solve_ed(&s, 700.0).unwrap();
        assert!((sol.cost - 18077.53).abs() <= 0.5, "got {}", sol.cost);
        // All units at p_min except the bus-100 unit (lowest b) at 108 MW.
        for (i, (u, &p)) in s.units().iter().zip(&sol.dispatch.pg).enumerate() {
            if u.bus == 100 {
                assert!((p - 108.0).abs() < 1e-3, "bus 100 at {p}");
            } else {
                assert!((p - u.p_min).abs() < 1e-9, "unit {i} at {p}, p_min {}", u.p_min);
            }
        }
    }

    #[test]
    fn boundary_demands_hit_the_exact_vertex() {
        let s = sys();
        let lo = solve_ed(&s, 652.0).unwrap();
        for (u, &p) in s.units().iter().zip(&lo.dispatch.pg) {
            assert_eq!(p, u.p_min);
        }
        let hi = solve_ed(&s, 6515.0).unwrap();
        for (u, &p) in s.units().iter().zip(&hi.dispatch.pg) {
            assert_eq!(p, u.p_max);
        }
    }

    #[test]
    fn infeasible_demand_reports_bounds() {
        match solve_ed(&sys(), 651.0) {
            Err(Error::InfeasibleDemand { pd_min, pd_max, .. }) => {
                assert_eq!(pd_min, 652.0);
                assert_eq!(pd_max, 6515.0);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
        assert!(solve_ed(&sys(), 6516.0).is_err());
    }

    #[test]
    fn solve_is_bitwise_deterministic() {
        let s = sys();
        let first = solve_ed(&s, 2802.0).unwrap();
        let second = solve_ed(&s, 2802.0).unwrap();
        assert_eq!(first.cost.to_bits(), second.cost.to_bits());
        assert_eq!(first.lambda.to_bits(), second.lambda.to_bits());
        let bits = |d: &Dispatch| d.pg.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&first.dispatch), bits(&second.dispatch));
    }

    #[test]
    fn kkt_holds_on_solver_output() {
        let s = sys();
        for pd in [700.0, 2150.0, 3600.0, 5050.0, 6500.0, 727.0, 6122.0] {
            let sol = solve_ed(&s, pd).unwrap();
            kkt_certificate(&sol, &s, KKT_TOL).unwrap();
        }
    }

    #[test]
    fn zero_a_units_split_residual_by_headroom() {
        let units = vec![
            GeneratorUnit { bus: 1, p_min: 0.0, p_max: 100.0, a: 0.0, b: 10.0, c: 0.0 },
            GeneratorUnit { bus: 2, p_min: 0.0, p_max: 50.0, a: 0.0, b: 10.0, c: 0.0 },
            GeneratorUnit { bus: 3, p_min: 0.0, p_max: 100.0, a: 0.01, b: 20.0, c: 0.0 },
        ];
        let s = PowerSystem::new(units).unwrap();
        let sol = solve_ed(&s, 90.0).unwrap();
        // Residual 90 split 2:1 between the tied units; the expensive unit idles.
        assert!((sol.dispatch.pg[0] - 60.0).abs() < 1e-6, "{:?}", sol.dispatch.pg);
        assert!((sol.dispatch.pg[1] - 30.0).abs() < 1e-6);
        assert!(sol.dispatch.pg[2].abs() < 1e-6);
        assert!((sol.cost - 900.0).abs() < 1e-3);

        // Past the step both zero-a units saturate and the quadratic unit
        // picks up the rest.
        let sol = solve_ed(&s, 160.0).unwrap();
        assert!((sol.dispatch.pg[0] - 100.0).abs() < 1e-6);
        assert!((sol.dispatch.pg[1] - 50.0).abs() < 1e-6);
        assert!((sol.dispatch.pg[2] - 10.0).abs() < 1e-6);
        assert!((sol.lambda - 20.2).abs() < 1e-6);
    }

    #[test]
    fn violations_of_feasible_prompt_dispatch_are_zero() {
        let (gen, bal) = violations(&prompt_dispatch_700(), &sys()).unwrap();
        assert_eq!(gen, 0.0);
        assert_eq!(bal, 0.0);
    }

    #[test]
    fn violations_single_unit_below_min() {
        let s = sys();
        let mut pg: Vec<f64> = s.units().iter().map(|u| u.p_min).collect();
        pg[0] -= 10.0;
        let d = Dispatch::new(pg, 642.0).unwrap();
        let (gen, bal) = violations(&d, &s).unwrap();
        assert_eq!(gen, 10.0);
        assert_eq!(bal, 0.0);
    }

    #[test]
    fn violations_pmin_vector_short_of_demand() {
        let s = sys();
        let pg: Vec<f64> = s.units().iter().map(|u| u.p_min).collect();
        let d = Dispatch::new(pg, 700.0).unwrap();
        let (gen, bal) = violations(&d, &s).unwrap();
        assert_eq!(gen, 0.0);
        assert_eq!(bal, 48.0);
    }

    #[test]
    fn loader_and_solver_cooperate_on_json_mirror() {
        let s = sys();
        let json = serde_json::to_string(s.units()).unwrap();
        let mirrored = load_system(json.as_bytes()).unwrap();
        let a = solve_ed(&s, 3600.0).unwrap();
        let b = solve_ed(&mirrored, 3600.0).unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    }
}
