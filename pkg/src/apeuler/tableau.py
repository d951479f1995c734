"""IMEX Butcher pairs: storage, validation, classification and built-ins.

A pair couples a strictly lower triangular explicit tableau (A, b, c) with a
diagonally implicit one (At, bt, ct).  The built-in schemes are the 4-stage
third-order additive scheme of Kennedy & Carpenter, the 6-stage fourth-order
scheme with an ARS-type implicit part, and the optimal 3-stage third-order
SSP scheme as a fully explicit reference.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

COEFF_TOL = 1e-12


class TableauError(ValueError):
    """Structural problem with a Butcher pair."""


class UnknownTableauError(KeyError):
    """Requested built-in scheme does not exist."""


class SchemeType(enum.Enum):
    TYPE_I = "I"
    TYPE_II = "II"
    ARS = "ARS"


@dataclass(frozen=True)
class ButcherPair:
    """Companion explicit/implicit Butcher tableaux."""

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    At: np.ndarray
    bt: np.ndarray
    ct: np.ndarray

    @property
    def s(self) -> int:
        return len(self.b)

    @property
    def is_explicit_only(self) -> bool:
        """True when the implicit tableau is identically zero."""
        return bool(np.all(self.At == 0.0))


def validate(tab: ButcherPair) -> list[str]:
    """Return a list of violated invariants (empty when the pair is valid)."""
    s = tab.s
    out = []
    for mat, vec, label in ((tab.A, tab.b, "explicit"), (tab.At, tab.bt, "implicit")):
        if mat.shape != (s, s) or len(vec) != s:
            out.append(f"{label} tableau has inconsistent shapes")
    if out:
        return out
    if abs(np.sum(tab.b) - 1.0) > COEFF_TOL:
        out.append("sum(b) != 1")
    if abs(np.sum(tab.bt) - 1.0) > COEFF_TOL:
        out.append("sum(bt) != 1")
    for l in range(s):
        if abs(np.sum(tab.A[l]) - tab.c[l]) > COEFF_TOL:
            out.append(f"explicit row sum != c at stage {l + 1}")
        if abs(np.sum(tab.At[l]) - tab.ct[l]) > COEFF_TOL:
            out.append(f"implicit row sum != ct at stage {l + 1}")
        for m in range(s):
            if m >= l and tab.A[l, m] != 0.0:
                out.append(f"explicit tableau not strictly lower triangular at ({l + 1},{m + 1})")
            if m > l and tab.At[l, m] != 0.0:
                out.append(f"implicit tableau not lower triangular at ({l + 1},{m + 1})")
    return out


def classify(tab: ButcherPair) -> SchemeType:
    """Classify the implicit tableau as type I, type II or ARS."""
    At = tab.At
    s = tab.s
    scale = max(np.max(np.abs(At)), 1.0)
    if abs(np.linalg.det(At)) > 1e-12 * scale**s:
        return SchemeType.TYPE_I
    first_row_zero = np.all(np.abs(At[0]) <= COEFF_TOL)
    trailing = At[1:, 1:]
    trailing_ok = (s > 1
                   and abs(np.linalg.det(trailing)) > 1e-12 * scale ** (s - 1))
    if first_row_zero and trailing_ok:
        first_col_zero = np.all(np.abs(At[1:, 0]) <= COEFF_TOL)
        if first_col_zero and abs(tab.b[0]) <= COEFF_TOL:
            return SchemeType.ARS
        return SchemeType.TYPE_II
    raise TableauError(f"{tab.name}: implicit tableau is neither type I nor type II")


def is_stiffly_accurate(tab: ButcherPair) -> bool:
    """True when the implicit weights equal the last implicit stage row."""
    return bool(np.all(np.abs(tab.bt - tab.At[-1]) <= COEFF_TOL))


def r_infinity(tab: ButcherPair) -> float:
    """Residual of the L-stability condition for stiffly accurate type II pairs.

    R_inf = sum_{m>=2} w_{sm} at_{m1}, w being the inverse of the trailing
    implicit block.  ARS pairs return 0 without solving (their at_{m1}
    vanish identically).
    """
    kind = classify(tab)
    if kind == SchemeType.ARS:
        return 0.0
    if kind != SchemeType.TYPE_II:
        raise TableauError("r_infinity is defined for type II / ARS pairs")
    if not is_stiffly_accurate(tab):
        raise TableauError("r_infinity requires a stiffly accurate implicit part")
    trailing = tab.At[1:, 1:]
    try:
        w = np.linalg.inv(trailing)
    except np.linalg.LinAlgError as exc:
        raise TableauError("trailing implicit block is singular") from exc
    return float(w[-1] @ tab.At[1:, 0])


def implicit_stability_function(tab: ButcherPair, z: complex) -> complex:
    """R(z) of the implicit companion method (Dahlquist problem, lambda_E = 0)."""
    s = tab.s
    eye = np.eye(s, dtype=complex)
    stages = np.linalg.solve(eye - z * tab.At.astype(complex), np.ones(s, dtype=complex))
    return complex(1.0 + z * (tab.bt.astype(complex) @ stages))


def _pair(name, A_rows, b, c, At_rows, bt, ct) -> ButcherPair:
    s = len(b)
    A = np.zeros((s, s))
    At = np.zeros((s, s))
    for i, row in enumerate(A_rows):
        A[i, : len(row)] = row
    for i, row in enumerate(At_rows):
        At[i, : len(row)] = row
    return ButcherPair(name=name, A=A, b=np.array(b, dtype=float), c=np.array(c, dtype=float),
                       At=At, bt=np.array(bt, dtype=float), ct=np.array(ct, dtype=float))


def _ark3() -> ButcherPair:
    # 4-stage, 3rd order additive pair; type II, stiffly accurate, R_inf = 0.
    g = 1767732205903 / 4055673282236  # implicit diagonal
    c = [0.0, 1767732205903 / 2027836641118, 3 / 5, 1.0]
    b = [1471266399579 / 7840856788654,
         -4482444167858 / 7529755066697,
         11266239266428 / 11593286722821,
         g]
    A_rows = [
        [],
        [1767732205903 / 2027836641118],
        [5535828885825 / 10492691773637, 788022342437 / 10882634858940],
        [6485989280629 / 16251701735622, -4246266847089 / 9704473918619,
         10755448449292 / 10357097424841],
    ]
    At_rows = [
        [],
        [g, g],
        [2746238789719 / 10658868560708, -640167445237 / 6845629431997, g],
        list(b),
    ]
    return _pair("ark3", A_rows, b, c, At_rows, b, c)


def _ark4_ars() -> ButcherPair:
    # 6-stage, 4th order pair; implicit part of type ARS, stiffly accurate.
    c = [0.0, 1 / 4, 3 / 4, 11 / 20, 1 / 2, 1.0]
    b = [0.0, 25 / 24, -49 / 48, 125 / 16, -85 / 12, 1 / 4]
    A_rows = [
        [],
        [1 / 4],
        [-1 / 4, 1.0],
        [-13 / 100, 43 / 75, 8 / 75],
        [-6 / 85, 42 / 85, 179 / 1360, -15 / 272],
        [0.0, 79 / 24, -5 / 8, 25 / 2, -85 / 6],
    ]
    At_rows = [
        [],
        [0.0, 1 / 4],
        [0.0, 1 / 2, 1 / 4],
        [0.0, 17 / 50, -1 / 25, 1 / 4],
        [0.0, 371 / 1360, -137 / 2720, 15 / 544, 1 / 4],
        list(b),
    ]
    return _pair("ark4_ars", A_rows, b, c, At_rows, b, c)


def _ssp3_explicit() -> ButcherPair:
    # Optimal 3-stage third-order SSP scheme; implicit part identically zero
    # so the pair can drive fully explicit reference runs.
    A_rows = [[], [1.0], [1 / 4, 1 / 4]]
    b = [1 / 6, 1 / 6, 2 / 3]
    c = [0.0, 1.0, 1 / 2]
    At_rows = [[], [0.0], [0.0, 0.0]]
    return _pair("ssp3_explicit", A_rows, b, c, At_rows, b, [0.0, 0.0, 0.0])


_BUILTINS = {
    "ark3": _ark3,
    "ark4_ars": _ark4_ars,
    "ssp3_explicit": _ssp3_explicit,
}


def builtin(name: str) -> ButcherPair:
    """Return a built-in scheme by name."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise UnknownTableauError(
            f"unknown scheme {name!r}; available: {sorted(_BUILTINS)}") from None
    return factory()


def builtin_names() -> list[str]:
    return sorted(_BUILTINS)
