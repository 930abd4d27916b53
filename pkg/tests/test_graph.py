import random
from fractions import Fraction

import numpy as np
import pytest

from rdsys import systems
from rdsys.graph import (Digraph, MomentResult, aggregated_matrix,
                         digraph_of_chain, eigenvalue_moduli,
                         exact_first_moment, is_aperiodic, is_irreducible,
                         is_recurrent, solve_exact, stationary_distribution,
                         stationary_from_matrix, strongly_connected_components,
                         terminal_components)
from rdsys.model import AffineMap, Edge, Interval, PiecewiseConstant, SystemSpec
from rdsys.partition import extract_symbolic_chain, refine_markov_partition

F = Fraction


def matrix_a2(b):
    return [[F(0), F(0), F(1)],
            [b, F(0), 1 - b],
            [F(0), b, 1 - b]]


def matrix_a3(b):
    return [[F(0), F(0), F(0), F(1)],
            [b, F(0), F(0), 1 - b],
            [F(0), b, F(0), 1 - b],
            [F(0), F(0), b, 1 - b]]


def graph_of_matrix(rows):
    arcs = []
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            if v != 0:
                arcs.append(((i, j), i, j))
    return Digraph(vertices=tuple(range(len(rows))), arcs=tuple(arcs))


def random_digraph(rng, n, p):
    arcs = []
    for i in range(n):
        for j in range(n):
            if rng.random() < p:
                arcs.append(((i, j), i, j))
    return Digraph(vertices=tuple(range(n)), arcs=tuple(arcs))


class TestStructuralFlags:
    def test_three_state_support_graph_irreducible(self):
        g = graph_of_matrix(matrix_a2(F(1, 2)))
        assert is_irreducible(g)
        assert is_recurrent(g)
        assert is_aperiodic(g)

    def test_full_step_graph_not_irreducible(self):
        chain = extract_symbolic_chain(systems.step_system(),
                                       refine_markov_partition(systems.step_system()))
        g = digraph_of_chain(chain)
        assert not is_irreducible(g)
        assert not is_recurrent(g)
        terms = terminal_components(g)
        assert terms == [[1, 2, 3]]
        sub_arcs = tuple(a for a in g.arcs if a[1] in terms[0] and a[2] in terms[0])
        sub = Digraph(vertices=tuple(terms[0]), arcs=sub_arcs)
        assert is_recurrent(sub)

    def test_single_loop_vertex(self):
        g = Digraph(vertices=(0,), arcs=((("l", 0), 0, 0),))
        assert is_irreducible(g) and is_aperiodic(g) and is_recurrent(g)

    def test_two_cycle_periodic(self):
        g = Digraph(vertices=(0, 1), arcs=((("a",), 0, 1), (("b",), 1, 0)))
        assert is_irreducible(g)
        assert not is_aperiodic(g)

    def test_a3_support_graph_aperiodic(self):
        assert is_aperiodic(graph_of_matrix(matrix_a3(F(1, 2))))

    def test_absorbing_unreachable_vertex(self):
        g = Digraph(vertices=(0, 1), arcs=((("a",), 0, 0), (("b",), 1, 1)))
        assert not is_recurrent(g)

    def test_recurrent_iff_irreducible_on_random_graphs(self, rng):
        for _ in range(60):
            g = random_digraph(rng, rng.randint(1, 7), rng.random())
            assert is_recurrent(g) == is_irreducible(g)

    def test_scc_partition(self, rng):
        for _ in range(30):
            g = random_digraph(rng, rng.randint(1, 8), 0.3)
            comps = strongly_connected_components(g)
            flat = sorted(v for comp in comps for v in comp)
            assert flat == sorted(g.vertices)


class TestStationary:
    @pytest.mark.parametrize("b", [F(1, 4), F(1, 3), F(1, 2), F(2, 3)])
    def test_three_state_formula(self, b):
        res = stationary_from_matrix(matrix_a2(b))
        z = 1 + b + b * b
        assert res.as_vector(range(3)) == [b * b / z, b / z, 1 / z]
        assert res.residual == 0 and res.method == "exact_solve"

    @pytest.mark.parametrize("b", [F(1, 4), F(1, 3), F(1, 2), F(2, 3)])
    def test_four_state_formula(self, b):
        res = stationary_from_matrix(matrix_a3(b))
        z = 1 + b + b * b + b ** 3
        assert res.as_vector(range(4)) == [b ** 3 / z, b * b / z, b / z, 1 / z]
        assert res.residual == 0

    def test_half_values(self):
        assert stationary_from_matrix(matrix_a2(F(1, 2))).as_vector(range(3)) == \
            [F(1, 7), F(2, 7), F(4, 7)]
        assert stationary_from_matrix(matrix_a3(F(1, 2))).as_vector(range(4)) == \
            [F(1, 15), F(2, 15), F(4, 15), F(8, 15)]

    def test_identity_chain(self):
        res = stationary_from_matrix([[F(1)]])
        assert res.as_vector([0]) == [F(1)]

    def test_step_chain_transient_weight_zero(self):
        spec = systems.step_system()
        chain = extract_symbolic_chain(spec, refine_markov_partition(spec))
        res = stationary_distribution(chain)
        assert res.as_vector(range(4)) == [F(0), F(1, 7), F(2, 7), F(4, 7)]
        assert res.unique

    def test_multiple_terminal_components_flagged(self):
        res = stationary_from_matrix([[F(1), F(0)], [F(0), F(1)]])
        assert not res.unique
        assert res.pi is None
        assert len(res.component_pis) == 2

    def test_float_matrix_agrees_with_exact(self):
        # independent numeric route: eigenvector of the aggregated matrix
        mat = matrix_a2(F(1, 2))
        arr = np.array([[float(v) for v in row] for row in mat]).T
        vals, vecs = np.linalg.eig(arr)
        k = int(np.argmax(vals.real))
        vec = np.abs(vecs[:, k].real)
        vec /= vec.sum()
        exact = stationary_from_matrix(mat).as_vector(range(3))
        assert np.allclose(vec, [float(v) for v in exact], atol=1e-10)


class TestMoments:
    def test_step_moments(self):
        spec = systems.step_system()
        chain = extract_symbolic_chain(spec, refine_markov_partition(spec))
        res = stationary_distribution(chain)
        mom = exact_first_moment(spec, chain, res)
        assert mom.per_class == {1: F(2, 43), 2: F(6, 43), 3: F(18, 43)}
        assert mom.global_mean == F(2, 7)
        assert mom.identity_residual == 0

    def test_step_mean_scalar_identity(self):
        # independent oracle: m = m/3 + (1/3)(1 - integral of p0)
        spec = systems.step_system()
        chain = extract_symbolic_chain(spec, refine_markov_partition(spec))
        res = stationary_distribution(chain)
        mom = exact_first_moment(spec, chain, res)
        p0_mass = F(1, 2) * (res.pi[2] + res.pi[3])
        assert mom.global_mean == mom.global_mean / 3 + F(1, 3) * (1 - p0_mass)

    def test_step_mean_fixed_point_iteration(self):
        # independent numeric oracle: iterate the moment map to its fixed point
        spec = systems.step_system()
        chain = extract_symbolic_chain(spec, refine_markov_partition(spec))
        res = stationary_distribution(chain)
        pi = {v: float(p) for v, p in res.pi.items()}
        maps = {e.edge_id: (float(e.map.slope), float(e.map.intercept))
                for e in spec.edges}
        m = {v: 0.5 for v in range(chain.n_states) if pi[v] > 0}
        for _ in range(200):
            nxt = {v: 0.0 for v in m}
            for (s, label), p in chain.prob.items():
                if s not in m:
                    continue
                t = chain.target[(s, label)]
                slope, icpt = maps[label]
                nxt[t] += pi[s] * float(p) * (slope * m[s] + icpt)
            m = {v: nxt[v] / pi[v] for v in nxt}
        mom = exact_first_moment(spec, chain, res)
        for v, exact in mom.per_class.items():
            assert abs(m[v] - float(exact)) < 1e-12

    def _single_map_chain(self, slope, intercept):
        unit = Interval(F(0), F(1))
        spec = SystemSpec(domain=unit, edges=(
            Edge("0", AffineMap(slope, intercept),
                 PiecewiseConstant(((unit, F(1)),))),))
        chain = extract_symbolic_chain(spec, refine_markov_partition(spec))
        return spec, chain

    def test_halving_map_mean_zero(self):
        spec, chain = self._single_map_chain(F(1, 2), F(0))
        mom = exact_first_moment(spec, chain, stationary_distribution(chain))
        assert mom.global_mean == 0

    def test_halving_map_with_shift_mean_one(self):
        spec, chain = self._single_map_chain(F(1, 2), F(1, 2))
        mom = exact_first_moment(spec, chain, stationary_distribution(chain))
        assert mom.global_mean == 1

    def test_moment_in_cell_hull(self):
        spec = systems.step_system(F(1, 27))
        chain = extract_symbolic_chain(spec, refine_markov_partition(spec))
        mom = exact_first_moment(spec, chain, stationary_distribution(chain))
        for v, m in mom.per_class.items():
            iv = chain.cells[v].interval
            assert iv.lo <= m <= iv.hi


class TestEigenDiagnostic:
    def test_subdominant_moduli_equal_b(self):
        for b in (F(1, 4), F(1, 2)):
            spec = systems.step_system(b=b)
            chain = extract_symbolic_chain(spec, refine_markov_partition(spec))
            moduli = eigenvalue_moduli(chain)
            assert abs(moduli[0] - 1.0) < 1e-9
            assert abs(moduli[1] - float(b)) < 1e-9


class TestSolver:
    def test_solve_exact_roundtrip(self, rng):
        for _ in range(20):
            n = rng.randint(1, 5)
            rows = [[F(rng.randint(-4, 4), rng.randint(1, 4)) for _ in range(n)]
                    for _ in range(n)]
            x = [F(rng.randint(-3, 3)) for _ in range(n)]
            rhs = [sum((rows[i][j] * x[j] for j in range(n)), F(0)) for i in range(n)]
            try:
                sol = solve_exact(rows, rhs)
            except Exception:
                continue  # singular draw
            assert sol == x
