import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rami.measures import (
    DiscreteMeasure,
    MeasureError,
    MeasureParseError,
    RegionSpec,
    dilate,
    emit_measure,
    parse_measure,
    scale_mass,
    split,
    support_radius,
    tail_mass,
    total_mass,
)

coord = st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 3))
mass = st.floats(0.01, 10, allow_nan=False)


@st.composite
def measures(draw, dim=None):
    d = draw(st.sampled_from([2, 3])) if dim is None else dim
    n = draw(st.integers(0, 12))
    pos = [[draw(coord) for _ in range(d)] for _ in range(n)]
    ms = [draw(mass) for _ in range(n)]
    return DiscreteMeasure(np.array(pos).reshape(n, d), ms, dim=d)


regions = st.one_of(
    st.floats(0.1, 6).map(RegionSpec.ball),
    st.floats(0.1, 6).map(RegionSpec.tail),
    st.integers(-3, 4).map(RegionSpec.shell),
    st.tuples(st.sampled_from([1, -1]), st.integers(0, 1)).map(lambda t: RegionSpec.halfspace(*t)),
)


def test_total_mass_examples():
    assert total_mass(DiscreteMeasure.empty(2)) == 0
    assert total_mass(DiscreteMeasure([[0, 1], [2, 0]], [2.0, 3.0])) == 5.0
    merged = DiscreteMeasure([[1, 1], [1, 1]], [1.0, 2.0])
    assert len(merged) == 1 and total_mass(merged) == 3.0


def test_tail_mass_examples():
    mu = DiscreteMeasure([[2, 0]], [1.5])
    assert tail_mass(mu, 1) == 1.5
    assert tail_mass(mu, 3) == 0
    two = DiscreteMeasure([[0.5, 0], [0, 1.5]], [1, 2])
    assert tail_mass(two, 1) == 2
    with pytest.raises(MeasureError):
        tail_mass(mu, 0)


def test_split_examples():
    mu = DiscreteMeasure([[0.5, 0], [2, 0]], [1, 1])
    inside, outside = split(mu, RegionSpec.ball(1))
    assert np.allclose(inside.positions, [[0.5, 0]])
    shell_in, _ = split(DiscreteMeasure([[0.3, 0]], [1]), RegionSpec.shell(1))
    assert len(shell_in) == 1
    _, ball_out = split(mu, RegionSpec.ball(1))
    tail_in, _ = split(mu, RegionSpec.tail(1))
    assert tail_in == ball_out


def test_split_boundary_goes_inside():
    mu = DiscreteMeasure([[1, 0], [0.5, 0]], [1, 1])
    inside, outside = split(mu, RegionSpec.ball(1))
    assert len(inside) == 2 and len(outside) == 0
    # shell (1/4, 1/2]: the outer radius is included, the inner one is not
    s_in, _ = split(DiscreteMeasure([[0.5, 0], [0.25, 0]], [1, 1]), RegionSpec.shell(1))
    assert np.allclose(s_in.positions, [[0.5, 0]])


def test_invalid_regions():
    with pytest.raises(MeasureError):
        RegionSpec.ball(0)
    with pytest.raises(MeasureError):
        RegionSpec("cube", r=1)


def test_scale_and_dilate_examples():
    mu = DiscreteMeasure([[1, 0], [0, 2]], [2, 3])
    assert scale_mass(mu, 1) == mu
    assert total_mass(scale_mass(mu, 2)) == 10
    assert scale_mass(scale_mass(mu, 2), 0.5) == mu
    assert dilate(mu, 1) == mu
    d3 = dilate(DiscreteMeasure([[1, 0]], [0.7]), 3)
    assert np.array_equal(d3.positions, [[3, 0]]) and d3.masses[0] == 0.7
    assert support_radius(dilate(mu, 2.5)) == pytest.approx(2.5 * support_radius(mu), rel=1e-15)


def test_support_radius_examples():
    assert support_radius(DiscreteMeasure.empty(3)) == 0
    assert support_radius(DiscreteMeasure([[0.5, 0], [0, 2.0]], [1, 1])) == 2.0


def test_construction_rejects_bad_input():
    with pytest.raises(MeasureError):
        DiscreteMeasure([[0, 1]], [0.0])
    with pytest.raises(MeasureError):
        DiscreteMeasure([[0]], [1.0])
    with pytest.raises(MeasureError):
        DiscreteMeasure([[0, np.nan]], [1.0])
    with pytest.raises(MeasureError):
        DiscreteMeasure([[0, 1]], [1.0], dim=3)


def test_negative_zero_merges():
    mu = DiscreteMeasure([[0.0, 1.0], [-0.0, 1.0]], [1, 1])
    assert len(mu) == 1


def test_parse_examples():
    mu = parse_measure("0,1,2.5")
    assert mu.dim == 2 and np.array_equal(mu.positions, [[0, 1]]) and mu.masses[0] == 2.5
    dup = parse_measure("0,1,1\n0,1,2\n")
    assert len(dup) == 1 and dup.masses[0] == 3
    with pytest.raises(MeasureParseError, match="nonpositive mass at row 1"):
        parse_measure("0,1,-1")


def test_parse_errors_name_rows():
    with pytest.raises(MeasureParseError, match="row 3"):
        parse_measure("x,y,mass\n0,1,1\n0,1\n")
    with pytest.raises(MeasureParseError, match="non-numeric.*row 2"):
        parse_measure("# comment\n0,abc,1\n")
    with pytest.raises(MeasureParseError):
        parse_measure("")


def test_parse_header_comments_and_empty():
    mu = parse_measure("# atoms\nx1,x2,x3,mass\n\n1,2,3,0.5\n")
    assert mu.dim == 3 and len(mu) == 1
    empty = parse_measure("x1,x2,mass\n")
    assert empty.dim == 2 and len(empty) == 0


def test_emit_is_sorted_and_parses_back():
    mu = DiscreteMeasure([[1, 0], [0, 1], [0, -1]], [1, 2, 3])
    text = emit_measure(mu)
    assert text.splitlines()[0] == "x1,x2,mass"
    assert text.splitlines()[1].startswith("0.0,-1.0")
    assert parse_measure(text) == mu


@settings(max_examples=60, deadline=None)
@given(measures(), regions)
def test_split_partitions_mass(mu, region):
    inside, outside = split(mu, region)
    assert len(inside) + len(outside) == len(mu)
    assert inside + outside == mu
    eps = np.spacing(max(total_mass(mu), 1.0)) * (len(mu) + 1)
    assert abs(total_mass(inside) + total_mass(outside) - total_mass(mu)) <= eps


@settings(max_examples=60, deadline=None)
@given(measures(), st.floats(0.05, 8), st.floats(0.05, 8))
def test_tail_mass_nonincreasing(mu, r1, r2):
    lo, hi = sorted((r1, r2))
    assert tail_mass(mu, hi) <= tail_mass(mu, lo)


@settings(max_examples=30, deadline=None)
@given(measures())
def test_tail_mass_right_continuity_at_atom_radii(mu):
    for r in mu.radii[mu.radii > 0]:
        at = tail_mass(mu, r)
        assert at >= tail_mass(mu, r * (1 + 1e-9))
        # the atom sitting at radius r is still counted
        assert at > tail_mass(mu, np.nextafter(r, np.inf)) or np.sum(mu.radii == r) == 0


@settings(max_examples=60, deadline=None)
@given(measures(), st.floats(0.1, 10), st.floats(0.1, 10))
def test_dilate_and_scale_commute(mu, lam, s):
    assert dilate(scale_mass(mu, s), lam) == scale_mass(dilate(mu, lam), s)


@settings(max_examples=60, deadline=None)
@given(measures())
def test_parse_emit_roundtrip(mu):
    assert parse_measure(emit_measure(mu), dim=mu.dim) == mu
