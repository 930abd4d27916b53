"""Edge cases crossing module boundaries: fallback solver, degenerate
sampling detection, xi verdict grading, and empirical cylinder laws."""

import math
from fractions import Fraction

import pytest

from rdsys import systems
from rdsys.graph import stationary_distribution
from rdsys.measures import (DegenerateSampling, XiParams, cylinder_measure,
                            enumerate_cylinders, xi_estimate)
from rdsys.model import (AffineMap, Edge, Interval, PiecewiseConstant,
                         SystemSpec)
from rdsys.dynamics import simulate
from rdsys.partition import extract_symbolic_chain, stable_partition

F = Fraction
STEP = systems.step_system()


def test_power_iteration_fallback_reports_residual():
    chain = extract_symbolic_chain(STEP, stable_partition(STEP))
    res = stationary_distribution(chain, exact_max_states=2)
    assert res.method == "power_iteration"
    assert res.residual < 1e-10
    exact = stationary_distribution(chain)
    for v in range(chain.n_states):
        assert abs(res.pi[v] - float(exact.pi[v])) < 1e-9


def test_degenerate_sampling_detected():
    unit = Interval(F(0), F(1))
    broken = SystemSpec(domain=unit, edges=(
        Edge("0", AffineMap(F(1, 3), F(0)), PiecewiseConstant(((unit, F(1, 3)),))),
        Edge("1", AffineMap(F(1, 3), F(1, 3)), PiecewiseConstant(((unit, F(1, 3)),))),
    ))
    with pytest.raises(DegenerateSampling):
        xi_estimate(broken, F(1, 2), F(1, 4),
                    XiParams(n_exact=3, n_mc=8, num_samples=8, seed=1))


def test_xi_same_class_pair_equivalent():
    params = XiParams(n_exact=5, n_mc=200, num_samples=200, seed=8)
    rep = xi_estimate(STEP, F(1, 2), F(2, 3), params)
    assert rep.verdict == "equivalent"
    assert rep.infinity_witness is None


def test_xi_table_entries_bounded():
    params = XiParams(n_exact=5, n_mc=64, num_samples=64, seed=8)
    rep = xi_estimate(STEP, F(1), F(1, 4), params)
    assert all(0 <= v <= 2 for v in rep.exact_tail_table.values())


def test_external_certificate_grants_equivalence():
    params = XiParams(n_exact=4, n_mc=64, num_samples=64, seed=8)
    rep = xi_estimate(systems.positive_step_system(), F(0), F(1), params,
                      external_certificate=True)
    assert rep.verdict == "equivalent"


def test_empirical_cylinder_frequencies_match_exact_masses():
    # fresh short traces from a fixed start reproduce depth-2 masses
    n_runs = 3000
    counts = {}
    for seed in range(n_runs):
        tr = simulate(STEP, 1, 2, seed=seed)
        word = tuple(tr.labels)
        counts[word] = counts.get(word, 0) + 1
    for word, mass in enumerate_cylinders(STEP, 1, 2):
        freq = counts.get(word, 0) / n_runs
        p = float(mass)
        sigma = math.sqrt(p * (1 - p) / n_runs)
        assert abs(freq - p) < 4 * sigma, word


def test_cli_partition_budget_exit(tmp_path):
    from rdsys.cli import run
    from rdsys.sysfile import save_system
    p0 = PiecewiseConstant((
        (Interval(F(0), F(1, 5), True, True), F(1, 2)),
        (Interval(F(1, 5), F(1), False, True), F(1, 3))))
    p1 = PiecewiseConstant((
        (Interval(F(0), F(1, 5), True, True), F(1, 2)),
        (Interval(F(1, 5), F(1), False, True), F(2, 3))))
    spec = SystemSpec(domain=Interval(F(0), F(1)), edges=(
        Edge("0", AffineMap(F(2, 3), F(0)), p0),
        Edge("1", AffineMap(F(1, 3), F(2, 3)), p1)))
    path = tmp_path / "expanding.txt"
    save_system(spec, path)
    assert run(["partition", str(path), "--seed", "1", "--refine-cap", "32"]) == 2
