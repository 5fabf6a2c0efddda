import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qchemdyn import arith, oracle


def _pairs(m):
    return list(itertools.product(range(1 << m), repeat=2))


def test_fixed_point_spec():
    fp = arith.FixedPointSpec(6, scale=0.5)
    assert fp.M == 64 and fp.v_max == 63
    assert fp.delta_t == pytest.approx(2 * math.pi / 64)
    assert fp.encode(3.0) == 6 and fp.decode(6) == 3.0
    with pytest.raises(ValueError):
        fp.encode(40.0)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_add_sub_cadd_exhaustive(m):
    vals = _pairs(m)
    for build, ref in ((arith.draper_add, oracle.add), (arith.draper_sub, oracle.sub)):
        out = build(m).run_basis([{"a": a, "b": b} for a, b in vals])
        assert all(o["b"] == ref(a, b, m) and o["a"] == a for (a, b), o in zip(vals, out))
    ins = [{"c": c, "a": a, "b": b} for c in (0, 1) for a, b in vals]
    out = arith.controlled_add(m).run_basis(ins)
    assert all(o["b"] == oracle.cadd(i["c"], i["a"], i["b"], m) for i, o in zip(ins, out))


@pytest.mark.parametrize("guard,shift", [(0, 3), (1, 2), (2, 1), (0, 0)])
def test_multiply_and_square_exhaustive(guard, shift):
    m = 3
    ins = [{"a": a, "b": b, "acc": c} for a, b in _pairs(m) for c in (0, 5)]
    out = arith.multiply(m, shift, guard).run_basis(ins)
    M = 1 << (m + guard)
    assert all(o["acc"] == (i["acc"] + oracle.trunc_mul(i["a"], i["b"], m, shift, guard)) % M for i, o in zip(ins, out))
    out = arith.square(m, shift, guard).run_basis([{"a": a} for a in range(8)])
    assert [o["acc"] for o in out] == [oracle.square(a, m, shift, guard) for a in range(8)]


def test_trunc_mul_full_product_when_shift_equals_guard():
    # guard bits scale the result by 2^guard, so shift == guard keeps every bit of a*b
    for a, b in _pairs(4):
        assert oracle.trunc_mul(a, b, 4, 4, 4) == a * b


def test_r_squared_uncomputes_scratch():
    m = 3
    ac = arith.r_squared(m, dims=2, uncompute=True)
    ins = [dict(p1_0=a, p1_1=b, p2_0=c, p2_1=d) for a, b, c, d in itertools.product(range(8), repeat=4)]
    for i, o in zip(ins, ac.run_basis(ins)):
        acc, _ = oracle.r_squared([i["p1_0"], i["p1_1"]], [i["p2_0"], i["p2_1"]], m, m)
        assert o["acc"] == acc and o["d_0"] == o["d_1"] == o["sgn"] == 0


def test_abs_twos():
    assert oracle.abs_twos(0b111, 3) == 1
    assert oracle.abs_twos(0b100, 3) == 4  # -4 wraps to its own magnitude
    assert oracle.abs_twos(3, 3) == 3


def test_inv_sqrt_circuit_matches_oracle_m6():
    m = 6
    ac = arith.inv_sqrt(m)
    g = ac.params["guard"]
    out = ac.run_basis([{"S": s} for s in range(1 << m)])
    assert [o["u4"] >> g for o in out] == [oracle.inv_sqrt(s, m, g) for s in range(1 << m)]


def test_inv_sqrt_accuracy_sweep_m12():
    m = 12
    g = arith.default_guard(m)
    lo = math.ceil(oracle.NR_RANGE[0] * (1 << m))
    S = np.arange(lo, 1 << m)
    rel = [abs(oracle.inv_sqrt_value(int(s), m, g) * math.sqrt(s / (1 << m)) - 1) for s in S]
    assert max(rel) < 1e-3


def test_kinetic_oracle_matches_quadratic_mirror():
    ac = arith.kinetic_oracle(3, 6, [3, 5], 1)
    ins = [{"p0": a, "p1": b} for a, b in _pairs(3)]
    for i, o in zip(ins, ac.run_basis(ins)):
        want = (oracle.quadratic(i["p0"], 3, 1, 3, 6) + oracle.quadratic(i["p1"], 5, 1, 3, 6)) % 64
        assert o["acc"] == want and o["p0"] == i["p0"] and o["sgn"] == 0


def test_quadratic_mirror_tracks_real_values():
    # K / 2^k * |z - c|^2 up to per-bit-pair rounding
    K, ks, n = 1234, 10, 5
    for z in range(32):
        exact = K / 2 ** ks * (z - 16) ** 2
        assert abs(oracle.quadratic(z, K, ks, n, 16, 16) - exact) <= n * n


def test_coulomb_oracle_small_registers():
    m = 3
    fmt = arith.CoulombFormat.default(m)
    ac = arith.coulomb_oracle(fmt, [1.0, -2.0, 0.5], dims=1)
    ins = [{"p0_0": a, "p1_0": b, "p2_0": c, "acc": 1} for a, b, c in itertools.product(range(8), repeat=3)]
    for i, o in zip(ins, ac.run_basis(ins)):
        pos = [[i["p0_0"]], [i["p1_0"]], [i["p2_0"]]]
        assert o["acc"] == oracle.coulomb(pos, ac.params["kappas"], m, fmt.guard, fmt.r_shift, m, 1)
        assert all(o[n] == i.get(n, 0) for n in o if n != "acc")


def test_coulomb_kappa_units():
    fmt = arith.CoulombFormat.default(8, h=0.5, e_unit=0.01)
    # kappa * 2^m * u converts the fixed-point 1/r reading into energy counts
    r_counts = 0.8 * fmt.unit_counts
    assert fmt.calibrated(r_counts)
    u = 1 / math.sqrt((r_counts / fmt.unit_counts) ** 2) / 2
    energy = fmt.kappa(1.0) * (1 << fmt.m) * u * fmt.e_unit
    assert energy == pytest.approx(1 / (r_counts * fmt.h))


def test_audit_counts_and_exact_formulas():
    for m in (2, 4, 8):
        add = arith.audit_counts("add", m)
        cadd = arith.audit_counts("cadd", m)
        assert add["formula"] == Fraction(3, 2) * m * m
        # add: QFT and inverse QFT give m(m-1)/2 controlled rotations each, the adding block m(m+1)/2
        # cadd (compute section only): m(m+1)/2 doubly controlled rotations at weight 5
        assert add["measured"] == (3 * m * m - m) // 2
        assert cadd["measured"] == (5 * m * m + 5 * m) // 2
    with pytest.raises(ValueError):
        arith.audit_counts("add", 1)
    with pytest.raises(ValueError):
        arith.build_for_audit("div", 4)


def test_sections_partition_gates():
    ac = arith.controlled_add(4)
    total = sum(ac.tally(s).total for s in ("qft", "compute", "iqft"))
    assert total == ac.tally().total


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 31), st.integers(0, 31), st.integers(0, 1))
def test_property_controlled_add_m5(a, b, c):
    out = _CADD5.run_basis([{"a": a, "b": b, "c": c}])[0]
    assert out == {"c": c, "a": a, "b": (b + c * a) % 32}


_CADD5 = arith.controlled_add(5)
