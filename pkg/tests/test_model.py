import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from rdsys import systems
from rdsys.model import (AffineMap, DiscreteMeasure, Edge, Interval,
                         OutOfDomain, PiecewiseConstant, Point,
                         RationalityPredicate, SystemSpec, UnknownEdge,
                         apply_map, as_point, markov_operator, prob,
                         push_forward, validate_system)
from rdsys.sysfile import SpecFileError, format_system, parse_system

F = Fraction
UNIT = Interval(F(0), F(1))

rationals01 = st.fractions(min_value=0, max_value=1, max_denominator=50)


def two_edge_constant(p0, map0=None, map1=None):
    return SystemSpec(domain=UNIT, edges=(
        Edge("0", map0 or AffineMap(F(1, 3), F(0)),
             PiecewiseConstant(((UNIT, F(p0)),))),
        Edge("1", map1 or AffineMap(F(1, 3), F(1, 3)),
             PiecewiseConstant(((UNIT, 1 - F(p0)),))),
    ))


class TestValidation:
    def test_bundled_systems_validate(self):
        for name, builder in systems.BUILDERS.items():
            report = validate_system(builder())
            assert report.ok, f"{name}: {report}"

    def test_non_unit_sum_reported_with_value(self):
        spec = SystemSpec(domain=UNIT, edges=(
            Edge("0", AffineMap(F(1, 3), F(0)), PiecewiseConstant(((UNIT, F(1)),))),
            Edge("1", AffineMap(F(1, 3), F(1, 3)), PiecewiseConstant(((UNIT, F(1)),))),
        ))
        report = validate_system(spec)
        assert not report.ok
        assert any(i.kind == "NonUnitSum" and "2" in i.detail for i in report.issues)
        assert report.cell_sums[0][1] == 2

    def test_map_escaping_domain(self):
        spec = two_edge_constant(F(1, 2), map0=AffineMap(F(1), F(1)))
        report = validate_system(spec)
        assert any(i.kind == "MapEscapesDomain" and "edge 0" in i.detail
                   for i in report.issues)

    def test_gap_in_pieces_reported(self):
        broken = PiecewiseConstant((
            (Interval(F(0), F(1, 3), True, True), F(1, 2)),
            (Interval(F(1, 2), F(1), False, True), F(1, 2)),
        ))
        spec = SystemSpec(domain=UNIT, edges=(
            Edge("0", AffineMap(F(1, 3), F(0)), broken),
            Edge("1", AffineMap(F(1, 3), F(1, 3)),
                 PiecewiseConstant(((UNIT, F(1, 2)),))),
        ))
        report = validate_system(spec)
        assert any(i.kind == "OverlappingPieces" for i in report.issues)

    def test_per_cell_sums_listed(self):
        report = validate_system(systems.step_system())
        assert len(report.cell_sums) == 2  # two pieces, common refinement
        assert all(total == 1 for _d, total in report.cell_sums)

    def test_rationality_sums_checked_per_tag(self):
        spec = SystemSpec(domain=UNIT, edges=(
            Edge("0", AffineMap(F(1, 2), F(0)), RationalityPredicate(F(1, 4), F(1, 3))),
            Edge("1", AffineMap(F(1, 2), F(1, 2)), RationalityPredicate(F(3, 4), F(1, 2))),
        ))
        report = validate_system(spec)
        assert not report.ok  # irrational side sums to 5/6


class TestPointwiseOps:
    def test_apply_map_examples(self):
        spec = systems.step_system()
        assert apply_map(spec, "0", 1) == Point(F(1, 3))
        assert apply_map(spec, "1", 0) == Point(F(1, 3))

    def test_apply_map_propagates_tag(self):
        spec = systems.rational_split_system()
        image = apply_map(spec, "0", systems.IRRATIONAL_SAMPLE)
        assert image.irrational_tag
        assert abs(float(image.value) - 0.35355) < 1e-4

    def test_zero_slope_collapses_tag(self):
        m = AffineMap(F(0), F(1, 2))
        assert not m.apply_point(Point(F(1, 3), True)).irrational_tag

    def test_prob_examples(self):
        spec = systems.step_system()
        assert prob(spec, "0", F(1, 9)) == 0
        assert prob(spec, "0", F(1, 9) + F(1, 1000)) == F(1, 2)
        assert prob(systems.rational_split_system(), "0", F(2, 7)) == F(1, 4)

    def test_unknown_edge_and_domain(self):
        spec = systems.step_system()
        with pytest.raises(UnknownEdge):
            prob(spec, "7", F(1, 2))
        with pytest.raises(OutOfDomain):
            prob(spec, "0", F(3, 2))

    def test_markov_operator_examples(self):
        ident = lambda p: p.value
        assert markov_operator(systems.positive_step_system(), ident, 0) == F(1, 4)
        assert markov_operator(systems.step_system(), ident, 1) == F(1, 2)
        assert markov_operator(systems.step_system(), lambda p: F(1), F(2, 5)) == 1

    def test_markov_operator_skips_zero_edges(self):
        # f blows up on the image of the zero-probability edge
        spec = systems.step_system()

        def f(p):
            assert p.value != 0, "edge 0 image of x=0 must not be evaluated"
            return p.value

        assert markov_operator(spec, f, 0) == F(1, 3)

    def test_push_forward_examples(self):
        spec = systems.step_system()
        pushed = push_forward(spec, DiscreteMeasure.dirac(1))
        assert pushed.atoms == ((Point(F(1, 3)), F(1, 2)), (Point(F(2, 3)), F(1, 2)))
        assert push_forward(spec, DiscreteMeasure.dirac(0)).atoms == \
            ((Point(F(1, 3)), F(1)),)

    def test_push_forward_coalesces(self):
        spec = SystemSpec(domain=UNIT, edges=(
            Edge("a", AffineMap(F(0), F(1, 2)), PiecewiseConstant(((UNIT, F(1, 2)),))),
            Edge("b", AffineMap(F(0), F(1, 2)), PiecewiseConstant(((UNIT, F(1, 2)),))),
        ))
        pushed = push_forward(spec, DiscreteMeasure.dirac(F(1, 4)))
        assert pushed.atoms == ((Point(F(1, 2)), F(1)),)


class TestInvariants:
    @given(rationals01)
    def test_probabilities_sum_to_one(self, x):
        for builder in systems.BUILDERS.values():
            spec = builder()
            total = sum(prob(spec, e, x) for e in spec.edge_ids)
            assert total == 1

    @given(rationals01, st.booleans())
    def test_tagged_probability_sum(self, x, tag):
        spec = systems.rational_split_system()
        p = Point(x, tag)
        assert sum(prob(spec, e, p) for e in spec.edge_ids) == 1

    @given(rationals01)
    def test_affine_inverse_roundtrip(self, x):
        m = AffineMap(F(1, 3), F(1, 3))
        assert m.inverse().apply_value(m.apply_value(x)) == x

    def test_push_forward_preserves_mass(self, rng):
        from conftest import random_system
        for _ in range(20):
            spec = random_system(rng)
            nu = DiscreteMeasure.dirac(F(rng.randint(0, 8), 8))
            for _ in range(3):
                nu = push_forward(spec, nu)
            assert nu.total_mass == 1

    def test_point_membership_uses_value(self):
        assert UNIT.contains_value(Point(F(1, 2), True).value)


class TestInterval:
    def test_ownership_membership(self):
        iv = Interval(F(1, 9), F(1, 3), False, True)
        assert not iv.contains_value(F(1, 9))
        assert iv.contains_value(F(1, 3))

    def test_containment_with_ownership(self):
        outer = Interval(F(0), F(1, 2), True, False)
        assert outer.contains_interval(Interval(F(0), F(1, 2), True, False))
        assert not outer.contains_interval(Interval(F(0), F(1, 2), True, True))

    def test_degenerate(self):
        iv = Interval(F(1, 4), F(1, 4))
        assert iv.is_degenerate and iv.contains_value(F(1, 4))

    @given(st.fractions(max_denominator=20), st.fractions(max_denominator=20),
           rationals01)
    def test_affine_image_membership(self, a, b, x):
        lo, hi = min(a, b), max(a, b)
        if lo == hi:
            return
        iv = Interval(lo, hi, True, True)
        m = AffineMap(F(1, 2), F(1, 8))
        assert m.apply_interval(iv).contains_value(m.apply_value(lo + (hi - lo) * x))


class TestSysFile:
    def test_roundtrip_bundled(self):
        for name, builder in systems.BUILDERS.items():
            spec = builder()
            assert parse_system(format_system(spec)) == spec
            assert systems.bundled_text(name) == format_system(spec)

    def test_unknown_key_rejected(self):
        text = systems.bundled_text("step_ninth").replace(
            "[domain]\nlo = 0", "[domain]\ncolor = red\nlo = 0")
        with pytest.raises(SpecFileError, match="unknown keys"):
            parse_system(text)

    def test_unknown_section_rejected(self):
        text = systems.bundled_text("step_ninth") + "\n[extras]\nfoo = 1\n"
        with pytest.raises(SpecFileError, match="unknown section"):
            parse_system(text)

    def test_missing_edge_key_rejected(self):
        text = systems.bundled_text("step_ninth").replace("slope = 1/3\n", "", 1)
        with pytest.raises(SpecFileError, match="needs slope"):
            parse_system(text)

    def test_bad_rational_rejected(self):
        with pytest.raises(SpecFileError):
            parse_system("[domain]\nlo = zero\nhi = 1\n")

    def test_point_syntax(self):
        assert as_point("3/4") == Point(F(3, 4))
        assert as_point("irr:7/10") == Point(F(7, 10), True)
