"""Classical integer mirrors of the reversible arithmetic circuits.

These are written from the integer definitions (shifted partial products,
two's complement), not from the gate lists, so they can serve as
independent references for basis-state checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

NR_ITERATIONS = 4
NR_SEED = 0.68  # initial u = x/2, tuned for S in [0.3, 1)
NR_RANGE = (0.3, 1.0)


def add(a: int, b: int, m: int) -> int:
    return (a + b) % (1 << m)


def sub(a: int, b: int, m: int) -> int:
    """b - a mod 2^m."""
    return (b - a) % (1 << m)


def cadd(c: int, a: int, b: int, m: int) -> int:
    return add(a, b, m) if c else b


def _shift(v: int, s: int) -> int:
    return v >> s if s >= 0 else v << -s


def trunc_mul(a: int, b: int, m: int, shift: int, guard: int = 0) -> int:
    """Schoolbook product keeping bits from position ``shift - guard`` upward.

    Each shifted partial product ``a << i`` is truncated toward zero before
    it is summed; the sum is reduced modulo ``2^(m + guard)``.  With
    ``shift = m`` and ``guard = 0`` this is the top half of the 2m-bit
    product, minus the carries out of the discarded low half.
    """
    total = 0
    for i in range(m):
        if (b >> i) & 1:
            total += _shift(a << i, shift - guard)
    return total % (1 << (m + guard))


def square(a: int, m: int, shift: int, guard: int = 0) -> int:
    return trunc_mul(a, a, m, shift, guard)


def abs_twos(d: int, m: int) -> int:
    """|d| for an m-bit two's complement value (the most negative maps to itself)."""
    return (-d) % (1 << m) if d >> (m - 1) else d


def r_squared(p1: list[int], p2: list[int], m: int, shift: int) -> tuple[int, list[int]]:
    """Sum over axes of |p2 - p1|^2 truncated as in :func:`square`; also returns |d| per axis."""
    acc = 0
    mags = []
    for a, b in zip(p1, p2):
        d = abs_twos(sub(a, b, m), m)
        mags.append(d)
        acc = (acc + square(d, m, shift)) % (1 << m)
    return acc, mags


def nr_seed(m: int) -> int:
    return int(round(NR_SEED * (1 << m))) % (1 << m)


@dataclass(frozen=True)
class NRTrace:
    u: list[int]   # guarded registers u_0..u_4
    t1: list[int]
    t2: list[int]

    @property
    def result(self) -> int:
        return self.u[-1]


def inv_sqrt_trace(S: int, m: int, guard: int, iterations: int = NR_ITERATIONS) -> NRTrace:
    """Fixed-point Newton-Raphson for 1/sqrt(S / 2^m).

    Works on u = x / 2 with m fractional bits in (m + guard)-bit registers;
    operands are the top m bits.  Per iteration:
    ``t1 = u^2``, ``t2 = 3 - 4 S t1`` (m - 2 fractional bits),
    ``u' = u t2 / 2``.
    """
    W = m + guard
    mod = 1 << W
    top = lambda v: v >> guard
    u = [nr_seed(m) << guard]
    t1s, t2s = [], []
    for _ in range(iterations):
        un = top(u[-1])
        t1 = square(un, m, m, guard)
        t2 = ((3 << (m - 2 + guard)) - trunc_mul(S, top(t1), m, m, guard)) % mod
        u.append(trunc_mul(un, top(t2), m, m - 1, guard))
        t1s.append(t1)
        t2s.append(t2)
    return NRTrace(u, t1s, t2s)


def inv_sqrt(S: int, m: int, guard: int, iterations: int = NR_ITERATIONS) -> int:
    """Top m bits of the final iterate; 1/sqrt(S/2^m) ~= 2 * result / 2^m."""
    return inv_sqrt_trace(S, m, guard, iterations).result >> guard


def inv_sqrt_value(S: int, m: int, guard: int, iterations: int = NR_ITERATIONS) -> float:
    return 2.0 * inv_sqrt(S, m, guard, iterations) / (1 << m)


def constant_weights(kappa: float, m_in: int, m_out: int) -> list[int]:
    """Per-bit weights of ``kappa * u`` truncated toward zero, modulo 2^m_out."""
    return [int(math.trunc(kappa * (1 << k))) % (1 << m_out) for k in range(m_in)]


def scaled_add(u: int, kappa: float, m_in: int, m_out: int) -> int:
    w = constant_weights(kappa, m_in, m_out)
    return sum(wk for k, wk in enumerate(w) if (u >> k) & 1) % (1 << m_out)


def coulomb_pair(p1: list[int], p2: list[int], m: int, guard: int, r_shift: int,
                 kappa: float, acc_bits: int) -> int:
    """Contribution of one pair to the accumulator."""
    S = 0
    for a, b in zip(p1, p2):
        d = abs_twos(sub(a, b, m), m)
        S = (S + square(d, m, r_shift, guard)) % (1 << (m + guard))
    u = inv_sqrt(S >> guard, m, guard)
    return scaled_add(u, kappa, m, acc_bits)


def coulomb(positions: list[list[int]], kappas: dict[tuple[int, int], float], m: int, guard: int,
            r_shift: int, acc_bits: int, acc0: int = 0) -> int:
    acc = acc0
    B = len(positions)
    for i in range(B):
        for j in range(i + 1, B):
            acc = (acc + coulomb_pair(positions[i], positions[j], m, guard, r_shift,
                                      kappas[(i, j)], acc_bits)) % (1 << acc_bits)
    return acc


def _round_shift(v: int, s: int) -> int:
    """v / 2^s rounded half up (exact for s <= 0)."""
    return (v + (1 << (s - 1))) >> s if s > 0 else v << -s


def quadratic_weights(K_num: int, k_shift: int, n: int, m_out: int) -> tuple[dict, dict]:
    """Term weights: diagonal round(K 2^(2i) / 2^k_shift), off-diagonal twice round(K 2^(i+l) / 2^k_shift)."""
    mod = 1 << m_out
    diag = {i: _round_shift(K_num << (2 * i), k_shift) % mod for i in range(n)}
    off = {(i, l): (2 * _round_shift(K_num << (i + l), k_shift)) % mod for i in range(n) for l in range(i + 1, n)}
    return diag, off


def quadratic(z: int, K_num: int, k_shift: int, n: int, m_out: int, center: int = 0) -> int:
    """Quadratic form K |z - center|^2 / 2^k_shift on the bits of the magnitude.

    The magnitude is that of (z - center) mod 2^n in two's complement; each
    bit-pair product is rounded separately, as the circuit does.
    """
    mag = abs_twos((z - center) % (1 << n), n)
    total = 0
    for i in range(n):
        for l in range(n):
            if (mag >> i) & 1 and (mag >> l) & 1:
                total += _round_shift(K_num << (i + l), k_shift)
    return total % (1 << m_out)
