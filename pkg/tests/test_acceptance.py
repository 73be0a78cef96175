"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the verdict lines go straight to
the terminal) or as a script, ``python tests/test_acceptance.py``, which runs
every criterion and prints the same lines without stopping at failures.
"""

import itertools
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from oracles import oracle_regressive_blades, oracle_star_blade, oracle_wedge_blades  # noqa: E402

from grassfol.exterior import KVector, blades, hodge_star, wedge_progressive, wedge_regressive  # noqa: E402
from grassfol.experiments import ExperimentConfig, run  # noqa: E402

PLANAR_CASES = (("R", 0.6309, "cantor"), ("R", 1.2619, "cantor-product"), ("C", 1.2619, "cantor-product"))
SPHERE_CASES = tuple(itertools.product(("small-circle", "one-chain", "chain-pointed"), ("cantor", "cantor-product")))


@lru_cache(maxsize=None)
def timed_run(experiment: str, threads: int = 1, **kwargs):
    config = ExperimentConfig(experiment, threads=threads, **kwargs)
    start = time.perf_counter()
    report = run(config)
    return report, time.perf_counter() - start


def rows_summary(rows) -> str:
    bad = [f"{r.case}={r.verdict}" for r in rows if r.verdict != "PASS"]
    return f"{len(rows) - len(bad)}/{len(rows)} rows pass" + (f"; not passing: {', '.join(bad)}" if bad else "")


# ------------------------------------------------------------- criteria


def criterion_1():
    report, seconds = timed_run("identities")
    rows = [r for r in report.rows if r.case.split()[0] not in ("double-star-sign", "regressive-containment")]
    worst = max(rows, key=lambda r: r.estimate)
    ok = all(r.estimate < 1e-8 for r in rows) and seconds < 30
    trials = min(r.detail["trials"] for r in rows)
    return ok, f"max error {worst.estimate:.3g} ({worst.case}), min trials {trials}, {seconds:.1f} s; {rows_summary(rows)}"


def blade_oracle_mismatches() -> int:
    bad = 0
    for dim in (3, 4):
        for k, l in itertools.product(range(dim + 1), repeat=2):
            for a in blades(dim, k):
                ea = KVector.blade(dim, a)
                for b in blades(dim, l):
                    eb = KVector.blade(dim, b)
                    got = wedge_progressive(ea, eb).coeffs
                    s, sign = oracle_wedge_blades(dim, a, b)
                    want = np.zeros_like(got)
                    if s is not None:
                        want[blades(dim, k + l).index(s)] = sign
                    bad += not np.array_equal(got, want)
                    if k + l >= dim:
                        got = wedge_regressive(ea, eb).coeffs
                        s, sign = oracle_regressive_blades(dim, a, b)
                        want = np.zeros_like(got)
                        if s is not None:
                            want[blades(dim, k + l - dim).index(s)] = sign
                        bad += not np.array_equal(got, want)
                got = hodge_star(ea).coeffs
                comp, sign = oracle_star_blade(dim, a)
                want = np.zeros_like(got)
                want[blades(dim, dim - k).index(comp)] = sign
                bad += not np.array_equal(got, want)
    return bad


def criterion_2():
    report, _ = timed_run("identities")
    star = [r for r in report.rows if r.case.startswith("double-star-sign")]
    meet = [r for r in report.rows if r.case.startswith("regressive-containment")]
    star_ok = all(r.estimate == 0.0 for r in star)
    meet_ok = all(r.estimate <= 1e-9 and r.detail["trials"] >= 10_000 for r in meet)
    bad = blade_oracle_mismatches()
    ok = star_ok and meet_ok and bad == 0 and bool(star) and bool(meet)
    worst = max(r.estimate for r in meet)
    return ok, f"double star exact: {star_ok}; containment max {worst:.3g} over {min(r.detail['trials'] for r in meet)} trials; blade-oracle mismatches {bad}"


def criterion_3():
    report, seconds = timed_run("tails")
    rows = [r for r in report.rows if r.case.startswith("subspace-distance")]
    ok = len(rows) == 4 and all(r.verdict == "PASS" for r in rows) and seconds < 120
    slopes = ", ".join(f"{r.case.split(' ', 1)[1]}: {'n/a' if r.estimate is None else f'{r.estimate:.3f}'}" for r in rows)
    return ok, f"{slopes}; {seconds:.1f} s for the full tail run; {rows_summary(rows)}"


def criterion_4():
    report, seconds = timed_run("tails")
    rows = [r for r in report.rows if not r.case.startswith("subspace-distance")]
    cases = {(r.case.split()[0], r.case.split()[1], r.case.split()[2]) for r in rows}
    expected_cases = 4 * 2 + 1  # random and pointed centers for four cases, plus the chain case
    ok = len(cases) == expected_cases and len(rows) == 5 * expected_cases and all(r.verdict == "PASS" for r in rows) and seconds < 300
    low = min((r.estimate - r.predicted for r in rows if r.estimate is not None), default=float("nan"))
    return ok, f"smallest slope margin {low:+.3f} (tolerance -0.15); {seconds:.1f} s; {rows_summary(rows)}"


def transverse_criterion(family: str):
    lines, ok = [], True
    for field, s, fractal in PLANAR_CASES:
        report, seconds = timed_run("marstrand", field=field, n=2, k=0, fractal=fractal, family=family)
        row = report.rows[0]
        expected_pred = min(s, 1.0 if field == "R" else 2.0)
        tol = 0.12 if field == "R" else 0.15
        good = row.verdict == "PASS" and abs(row.predicted - expected_pred) < 1e-3 and row.tolerance == tol and seconds < 300
        ok &= good
        est = "n/a" if row.estimate is None else f"{row.estimate:.3f}"
        lines.append(f"{field} s={s}: median {est} vs {row.predicted:.3f}+-{tol} [{row.verdict}, {seconds:.0f} s]")
    return ok, "; ".join(lines)


def criterion_5():
    return transverse_criterion("uniform")


def criterion_6():
    return transverse_criterion("pointed")


def criterion_7():
    lines, ok = [], True
    for family, fractal in SPHERE_CASES:
        report, seconds = timed_run("sphere_chains", family=family, fractal=fractal)
        row = report.rows[0]
        want = "at_least" if family == "chain-pointed" else "within"
        good = row.verdict == "PASS" and row.comparison == want and row.tolerance == 0.15
        ok &= good
        est = "n/a" if row.estimate is None else f"{row.estimate:.3f}"
        lines.append(f"{family}/{fractal}: {est} {want} {row.predicted:.3f} [{row.verdict}, {seconds:.0f} s]")
    return ok, "; ".join(lines)


def criterion_8():
    report, seconds = timed_run("energy", fractal="cantor")
    thr = report.rows[0].detail["threshold"]
    sig = [float(r.case.rsplit("sigma=", 1)[1]) for r in report.rows]
    bracket = any(r.case.startswith("energy-bounded") and thr - 0.1 - 1e-6 <= s < thr for r, s in zip(report.rows, sig)) and any(
        r.case.startswith("energy-growing") and thr < s <= thr + 0.1 + 1e-6 for r, s in zip(report.rows, sig)
    )
    ok = report.passed and bracket
    growth = ", ".join(f"sigma={s:g}: g={r.estimate:.3f} [{r.verdict}]" for r, s in zip(report.rows, sig))
    return ok, f"threshold {thr:.4f}; {growth}; {seconds:.0f} s"


def criterion_9():
    report, _ = timed_run("affine_check")
    ratio = next(r for r in report.rows if r.case.startswith("ratio"))
    lines = ", ".join(f"{r.case}={r.estimate:.3f}[{r.verdict}]" for r in report.rows)
    ok = report.passed and ratio.detail.get("pairs", 0) >= 10_000
    return ok, f"{lines}; pairs {ratio.detail.get('pairs')}"


def criterion_10():
    checks = []
    for experiment, kwargs in (
        ("identities", {}),
        ("tails", {}),
        ("marstrand", {"field": "R", "n": 2, "k": 0, "fractal": "cantor", "family": "uniform"}),
        ("affine_check", {}),
    ):
        a, _ = timed_run(experiment, 1, **kwargs)
        b, _ = timed_run(experiment, 3, **kwargs)
        checks.append((experiment, a.audit_hash == b.audit_hash))
    ok = all(good for _, good in checks)
    return ok, "threads 1 vs 3: " + ", ".join(f"{name} {'identical' if good else 'DIFFERENT'}" for name, good in checks)


CRITERIA = {
    1: ("identity suite", criterion_1),
    2: ("Hodge and regressive algebra", criterion_2),
    3: ("distance tail exponents", criterion_3),
    4: ("transversality tail exponents", criterion_4),
    5: ("transverse dimension, uniform centers", criterion_5),
    6: ("transverse dimension, pointed centers", criterion_6),
    7: ("sphere and chain foliations", criterion_7),
    8: ("energy boundedness split", criterion_8),
    9: ("affine equivalence", criterion_9),
    10: ("determinism across thread counts", criterion_10),
}


def verdict_line(number: int) -> tuple[bool, str]:
    name, fn = CRITERIA[number]
    try:
        ok, detail = fn()
    except Exception as exc:  # report the crash as a failed criterion
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    return ok, f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'} {name}: {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    ok, line = verdict_line(number)
    with capsys.disabled():
        print("\n" + line, flush=True)
    assert ok, line


if __name__ == "__main__":
    results = [verdict_line(n) for n in sorted(CRITERIA)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
