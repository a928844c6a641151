#!/usr/bin/env python3
"""Smoke test for the edbench Python extension.

Builds nothing itself: compile the module first with

    cargo build -p edbench-py --release --features extension-module

then run

    python3 python/smoke_test.py

The script copies the built cdylib next to a temp dir as `edbench.so`,
imports it, and exercises the solver, cost/violation scoring, prompt
rendering, the response parser, and the GA baseline.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO / "target" / "release" / "libedbench.so",
        REPO / "target" / "debug" / "libedbench.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit(
            "libedbench.so not found; run "
            "`cargo build -p edbench-py --release --features extension-module` first"
        )
    stage = Path(tempfile.mkdtemp(prefix="edbench_py_"))
    shutil.copy2(built, stage / "edbench.so")
    sys.path.insert(0, str(stage))
    import edbench  # noqa: E402

    return edbench


checks = 0


def check(name, condition):
    global checks
    if not condition:
        sys.exit(f"FAIL {name}")
    checks += 1
    print(f"ok {name}")


def main():
    edbench = load_module()
    sys_118 = edbench.PowerSystem.bundled()
    check("bundled system shape", sys_118.n_units == 19)
    check("aggregate limits", (sys_118.pd_min, sys_118.pd_max) == (652.0, 6515.0))

    prompt_dispatch = [50, 10, 20, 40, 5, 5, 30, 10, 50, 20,
                      40, 80, 100, 60, 2, 50, 108, 10, 10]
    cost = edbench.total_cost(sys_118, prompt_dispatch)
    check("cost regression", abs(cost - 18077.53) <= 0.02)
    cost_on = edbench.total_cost(sys_118, prompt_dispatch, include_constants=True)
    check("constants convention", cost_on - cost == 2730.0)

    sol = edbench.solve_ed(sys_118, 700.0)
    check("solver parity", abs(sol.cost - 18077.53) <= 0.5)
    check("solver balance", abs(sum(sol.pg) - 700.0) <= edbench.BALANCE_TOL)

    gen, bal = edbench.violations(sys_118, prompt_dispatch, 700.0)
    check("violations zero", gen == 0.0 and bal == 0.0)

    short = [p - (10.0 if i == 0 else 0.0) for i, p in enumerate(prompt_dispatch)]
    gen, bal = edbench.violations(sys_118, short, 700.0)
    check("violations measured", gen == 10.0 and bal == 10.0)

    repaired = edbench.repair_balance(sys_118, short, 700.0)
    check("repair balances", abs(sum(repaired) - 700.0) <= 1e-9)

    bundle = edbench.render_prompt(sys_118, 727.0, "evolutionary")
    check("prompt instruction", "generate 10 candidate dispatch sets" in bundle.text)
    check("prompt note", "Do not include any code" in bundle.text)
    check("prompt fingerprint", len(bundle.fingerprint) == 64)
    again = edbench.render_prompt(sys_118, 727.0, "evolutionary")
    check("prompt deterministic", again.fingerprint == bundle.fingerprint)

    parsed = edbench.parse_response(bundle.text, 19)
    check("parser finds final vector", parsed.parse_ok and len(parsed.dispatch) == 19)
    check("parser rejects empty", not edbench.parse_response("", 19).parse_ok)

    ga = edbench.run_ga(sys_118, 727.0, seed=42, generations=60)
    exact = edbench.solve_ed(sys_118, 727.0)
    check("ga bounded by oracle", ga.best_cost >= exact.cost - 1e-6)
    check("ga near optimum", ga.best_cost <= exact.cost * 1.02)
    check("ga feasible", edbench.violations(sys_118, ga.best, 727.0)[0] == 0.0)

    try:
        edbench.solve_ed(sys_118, 100.0)
        sys.exit("FAIL infeasible demand should raise")
    except ValueError as e:
        check("infeasible raises ValueError", "652" in str(e))

    check("not nan anywhere", all(map(math.isfinite, sol.pg)))
    print(f"PASS: {checks} checks")


if __name__ == "__main__":
    main()
