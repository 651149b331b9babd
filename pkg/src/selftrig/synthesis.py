"""Offline synthesis of per-loop gain/cost lookup tables.

For each admissible wait ``i`` the online controller needs a value matrix
``P(i)`` and a feedback gain ``L(i)``.  Both come from a single periodic
Riccati solve at the terminal period ``p`` followed by one backward step
per ``i``; no optimization runs online.  This module also computes the
contraction certificate ``epsilon`` that bounds the closed-loop value
function, and (de)serializes tables so that deployment never re-solves
anything.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    CertificateError,
    ConfigurationError,
    GainLookupError,
    SynthesisError,
)
from .model import LiftedModel, LtiSystem, WeightSpec, _readonly, lift_range, symmetrize

# |lambda^i - 1| below this counts as a root of unity; |lambda - 1| below it
# counts as the eigenvalue one.
ROOT_OF_UNITY_TOL = 1e-8
# Singular values below this fraction of the largest count as rank deficiency.
CTRB_RANK_RTOL = 1e-10

RICCATI_MAX_ITERATIONS = 100_000
RICCATI_RESIDUAL_TOL = 1e-12

TABLE_SCHEMA_VERSION = 1


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A: np.ndarray, B: np.ndarray) -> bool:
    """Rank test on [B, AB, ..., A^{n-1}B] with a relative singular-value cut."""
    sv = np.linalg.svd(controllability_matrix(A, B), compute_uv=False)
    if sv[0] == 0.0:
        return False
    return int(np.sum(sv > CTRB_RANK_RTOL * sv[0])) == A.shape[0]


def _unit_root_eigenvalues(A: np.ndarray, i: int) -> list[complex]:
    """Eigenvalues of A other than 1 whose i-th power is 1 (within tolerance)."""
    bad = []
    for lam in np.linalg.eigvals(A):
        if abs(lam - 1.0) < ROOT_OF_UNITY_TOL:
            continue
        if abs(lam**i - 1.0) < ROOT_OF_UNITY_TOL:
            bad.append(complex(lam))
    return bad


def downsampled_controllable(sys: LtiSystem, i: int) -> bool:
    """Whether the i-step lifted pair is controllable.

    Holds exactly when the base pair (A, B) is controllable and no
    eigenvalue of A other than 1 is an i-th root of unity.
    """
    if i < 1:
        raise ConfigurationError(f"downsampling factor must be >= 1, got {i}")
    return is_controllable(sys.A, sys.B) and not _unit_root_eigenvalues(sys.A, i)


def uncontrollable_reason(sys: LtiSystem, i: int) -> str | None:
    """Human-readable cause when the lifted pair is uncontrollable, else None.

    Distinguishes an uncontrollable base pair from a root-of-unity failure.
    """
    if not is_controllable(sys.A, sys.B):
        return "base pair (A, B) is not controllable"
    bad = _unit_root_eigenvalues(sys.A, i)
    if bad:
        lams = ", ".join(f"{lam:.6g}" for lam in bad)
        return f"eigenvalue(s) {lams} raised to the power {i} equal 1"
    return None


def select_pstar(systems, I0) -> int:
    """Largest wait in I0 at which every system stays controllable when lifted.

    A factor qualifies when, for every system, no eigenvalue other than 1
    is an i-th root of unity.  Raises when no factor qualifies, naming the
    offending eigenvalues.
    """
    factors = sorted(set(int(i) for i in I0))
    if not factors or factors[0] < 1:
        raise ConfigurationError(f"I0 must be a non-empty set of positive integers: {I0}")
    qualifying = []
    failures = {}
    for i in factors:
        bad = []
        for sys in systems:
            bad.extend(_unit_root_eigenvalues(sys.A, i))
        if bad:
            failures[i] = bad
        else:
            qualifying.append(i)
    if not qualifying:
        detail = "; ".join(
            f"i={i}: {', '.join(f'{lam:.6g}' for lam in bad)}" for i, bad in failures.items()
        )
        raise SynthesisError(
            f"no admissible terminal period in I0={factors}; offending eigenvalues: {detail}"
        )
    return max(qualifying)


def pstar_is_gamma(systems, I0) -> bool:
    """Whether the selected terminal period equals the maximum wait in I0."""
    return select_pstar(systems, I0) == max(I0)


def _gain_from(P: np.ndarray, lm: LiftedModel) -> tuple[np.ndarray, np.ndarray]:
    """One backward step: feedback gain and cross matrix for value matrix P."""
    G = lm.Ai.T @ P @ lm.Bi + lm.Ni
    H = lm.Ri + lm.Bi.T @ P @ lm.Bi
    try:
        L = np.linalg.solve(H, G.T)
    except np.linalg.LinAlgError as exc:
        raise SynthesisError(
            f"singular input-cost matrix at factor {lm.i}: {exc}"
        ) from exc
    return L, G


def solve_periodic_riccati(
    sys: LtiSystem,
    weights: WeightSpec,
    p: int,
    max_iterations: int = RICCATI_MAX_ITERATIONS,
    tol: float = RICCATI_RESIDUAL_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Stabilizing fixed point of the lifted Riccati recursion at period ``p``.

    Fixed-point iteration of the one-step backward recursion over the
    p-step lifted model, started from P = Qp.  Convergence is declared at
    relative residual max|P - rhs(P)| / max|P| <= tol.

    Returns (Pp, Lp) with Pp symmetric positive definite and the lifted
    closed loop Ap - Bp Lp strictly stable.
    """
    reason = uncontrollable_reason(sys, p)
    if reason is not None:
        raise SynthesisError(f"cannot synthesize at period {p}: {reason}")
    lm = lift_range(sys, weights, p)[-1]
    P = lm.Qi.copy()
    residual = np.inf
    for _ in range(max_iterations):
        L, G = _gain_from(P, lm)
        P_next = symmetrize(lm.Qi + lm.Ai.T @ P @ lm.Ai - G @ L)
        scale = np.max(np.abs(P_next))
        residual = np.max(np.abs(P_next - P)) / max(scale, np.finfo(float).tiny)
        P = P_next
        if residual <= tol:
            break
    else:
        raise SynthesisError(
            f"Riccati iteration did not converge within {max_iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
    L, _ = _gain_from(P, lm)
    closed = lm.Ai - lm.Bi @ L
    rho = max(abs(np.linalg.eigvals(closed)))
    if rho >= 1.0:
        raise SynthesisError(
            f"converged value matrix is not stabilizing at period {p} "
            f"(closed-loop spectral radius {rho:.6g})"
        )
    eigs = np.linalg.eigvalsh(P)
    if eigs[0] <= 0.0:
        raise SynthesisError(
            f"converged value matrix is not positive definite (min eigenvalue {eigs[0]:.3e})"
        )
    return _readonly(P), _readonly(L)


@dataclass(frozen=True)
class GainTable:
    """Per-loop lookup table of value matrices and feedback gains.

    ``entries`` maps each admissible wait i to its pair (P(i), L(i));
    (Pp, Lp) is the terminal-period pair the closed loop reverts to.
    All arrays are read-only; tables are safe to share across threads.
    """

    loop_id: str
    alpha: float
    entries: dict
    p: int
    Pp: np.ndarray
    Lp: np.ndarray
    I0: tuple
    gamma: int

    def __post_init__(self):
        I0 = tuple(sorted(set(int(i) for i in self.I0)))
        if not I0 or I0[0] < 1:
            raise ConfigurationError(f"I0 must be positive integers, got {self.I0}")
        object.__setattr__(self, "I0", I0)
        object.__setattr__(self, "gamma", max(I0))
        if set(self.entries) != set(I0):
            raise ConfigurationError(
                f"table entries {sorted(self.entries)} do not match I0 {list(I0)}"
            )
        if self.alpha < 0.0:
            raise ConfigurationError(f"alpha must be nonnegative, got {self.alpha}")
        if self.p in self.entries:
            Pi, Li = self.entries[self.p]
            drift = max(
                np.max(np.abs(Pi - self.Pp)) / max(1.0, np.max(np.abs(self.Pp))),
                np.max(np.abs(Li - self.Lp)) / max(1.0, np.max(np.abs(self.Lp))),
            )
            if drift > 1e-8:
                raise SynthesisError(
                    f"table row at i=p={self.p} deviates from the periodic solution "
                    f"by {drift:.3e} (relative)"
                )

    @property
    def n(self) -> int:
        return self.Pp.shape[0]

    @property
    def m(self) -> int:
        return self.Lp.shape[0]

    def P(self, i: int) -> np.ndarray:
        try:
            return self.entries[i][0]
        except KeyError:
            raise GainLookupError(
                f"loop {self.loop_id!r}: no table entry for wait {i}"
            ) from None

    def L(self, i: int) -> np.ndarray:
        try:
            return self.entries[i][1]
        except KeyError:
            raise GainLookupError(
                f"loop {self.loop_id!r}: no table entry for wait {i}"
            ) from None


def build_gain_table(
    sys: LtiSystem,
    weights: WeightSpec,
    I0,
    p: int,
    loop_id: str = "loop",
) -> GainTable:
    """Synthesize the full lookup table for one loop.

    Solves the periodic Riccati equation once at period ``p`` and derives
    every (P(i), L(i)) pair by a single backward step from the periodic
    value matrix.
    """
    factors = tuple(sorted(set(int(i) for i in I0)))
    if not factors or factors[0] < 1:
        raise ConfigurationError(f"I0 must be a non-empty set of positive integers: {I0}")
    gamma = max(factors)
    Pp, Lp = solve_periodic_riccati(sys, weights, p)
    lifted = lift_range(sys, weights, gamma)
    entries = {}
    for i in factors:
        lm = lifted[i - 1]
        L, G = _gain_from(Pp, lm)
        P = symmetrize(lm.Qi + lm.Ai.T @ Pp @ lm.Ai - G @ L)
        entries[i] = (_readonly(P), _readonly(L))
    return GainTable(
        loop_id=loop_id,
        alpha=weights.alpha,
        entries=entries,
        p=int(p),
        Pp=Pp,
        Lp=Lp,
        I0=factors,
        gamma=gamma,
    )


@dataclass(frozen=True)
class StabilityCertificate:
    """Contraction certificate for one synthesized loop.

    ``epsilon`` is the largest margin in (0, 1] such that every held-input
    closed-loop map contracts the value function:

        F(i)' Pp F(i) <= (1 - epsilon) P(i),   F(i) = A(i) - B(i) L(i)

    ``per_i_ratio`` holds the largest generalized eigenvalue of each pair
    (F(i)' Pp F(i), P(i)); epsilon = 1 - max ratio.  ``lower_bound`` and
    ``upper_bound`` bracket the limiting value of the online cost; they
    collapse to alpha/gamma when the terminal period equals gamma.
    ``Si`` maps i to P(i) - F(i)' Pp F(i), the accumulated-stage-cost
    quadratic form (positive semidefinite).
    """

    pstar: int
    epsilon: float
    lower_bound: float
    upper_bound: float
    per_i_ratio: dict
    Si: dict


def stability_certificate(
    gt: GainTable, sys: LtiSystem, pstar: int
) -> StabilityCertificate:
    """Compute the contraction margin and value bounds for one table.

    The table must have been synthesized with ``p == pstar``.  Raises
    CertificateError when any contraction ratio reaches 1, reporting the
    offending wait rather than silently clipping.
    """
    if gt.p != pstar:
        raise ConfigurationError(
            f"table for loop {gt.loop_id!r} was built with p={gt.p}, not pstar={pstar}"
        )
    # Only the transition part of the lift is needed here, so the i-step
    # pairs are accumulated directly instead of re-lifting the weights.
    ratios = {}
    Si = {}
    Ai, Bi = sys.A.copy(), sys.B.copy()
    for i in range(1, gt.gamma + 1):
        if i in gt.entries:
            Pi, Li = gt.entries[i]
            F = Ai - Bi @ Li
            G = symmetrize(F.T @ gt.Pp @ F)
            ratios[i] = float(np.max(scipy.linalg.eigh(G, Pi, eigvals_only=True)))
            S = symmetrize(Pi - G)
            s_eigs = np.linalg.eigvalsh(S)
            if s_eigs[0] < -1e-10 * max(1.0, abs(s_eigs[-1])):
                raise CertificateError(
                    f"loop {gt.loop_id!r}: accumulated-cost form at wait {i} is "
                    f"indefinite (min eigenvalue {s_eigs[0]:.3e})"
                )
            Si[i] = _readonly(S)
        Bi = sys.A @ Bi + sys.B
        Ai = sys.A @ Ai
    rho_max = max(ratios.values())
    if rho_max >= 1.0:
        worst = max(ratios, key=ratios.get)
        raise CertificateError(
            f"loop {gt.loop_id!r}: contraction fails at wait {worst} "
            f"(ratio {ratios[worst]:.6g} >= 1)"
        )
    epsilon = min(1.0, 1.0 - rho_max)
    lower = gt.alpha / gt.gamma
    upper = (gt.alpha / epsilon) * (1.0 / pstar - (1.0 - epsilon) / gt.gamma)
    return StabilityCertificate(
        pstar=int(pstar),
        epsilon=epsilon,
        lower_bound=lower,
        upper_bound=upper,
        per_i_ratio=ratios,
        Si=Si,
    )


def _fmt17(x: float) -> str:
    """A JSON number with 17 significant digits (lossless for float64)."""
    if not np.isfinite(x):
        raise ConfigurationError(f"cannot serialize non-finite value {x}")
    s = format(float(x), ".17g")
    return s


def _json17(obj, indent: int = 0) -> str:
    """Tiny JSON emitter that writes floats with 17 significant digits."""
    pad = "  " * indent
    if isinstance(obj, dict):
        items = [
            f'{pad}  {json.dumps(k)}: {_json17(v, indent + 1).lstrip()}'
            for k, v in obj.items()
        ]
        return pad + "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        inner = ", ".join(_json17(v, 0) for v in obj)
        return pad + "[" + inner + "]"
    if isinstance(obj, bool):
        return pad + ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return pad + str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return pad + _fmt17(float(obj))
    if isinstance(obj, str):
        return pad + json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _flat(M: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(M, dtype=float).ravel(order="C")]


def serialize_gain_table(gt: GainTable, cert: StabilityCertificate) -> str:
    """Render one loop's table plus certificate scalars as JSON text.

    Matrices are row-major flat lists; all floats carry 17 significant
    digits so a reload reproduces bit-identical values.
    """
    doc = {
        "schema_version": TABLE_SCHEMA_VERSION,
        "loop_id": gt.loop_id,
        "n": gt.n,
        "m": gt.m,
        "alpha": gt.alpha,
        "p": gt.p,
        "I0": list(gt.I0),
        "entries": [
            {"i": i, "P": _flat(gt.entries[i][0]), "L": _flat(gt.entries[i][1])}
            for i in gt.I0
        ],
        "Pp": _flat(gt.Pp),
        "Lp": _flat(gt.Lp),
        "epsilon": cert.epsilon,
        "pstar": cert.pstar,
    }
    return _json17(doc) + "\n"


def deserialize_gain_table(text: str) -> tuple[GainTable, float, int]:
    """Parse serialized table text; returns (table, stored epsilon, stored pstar)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"gain table is not valid JSON: {exc}") from exc
    required = {
        "schema_version", "loop_id", "n", "m", "alpha", "p", "I0",
        "entries", "Pp", "Lp", "epsilon", "pstar",
    }
    if set(doc) != required:
        extra = set(doc) - required
        missing = required - set(doc)
        raise ConfigurationError(
            f"gain table fields mismatch (missing {sorted(missing)}, unknown {sorted(extra)})"
        )
    if doc["schema_version"] != TABLE_SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported gain table schema version {doc['schema_version']}"
        )
    n, m = int(doc["n"]), int(doc["m"])

    def mat(flat, rows, cols, name):
        arr = np.asarray(flat, dtype=float)
        if arr.size != rows * cols:
            raise ConfigurationError(
                f"{name} should have {rows * cols} row-major entries, got {arr.size}"
            )
        return arr.reshape(rows, cols)

    entries = {}
    for rec in doc["entries"]:
        if set(rec) != {"i", "P", "L"}:
            raise ConfigurationError(f"bad table entry fields: {sorted(rec)}")
        i = int(rec["i"])
        entries[i] = (
            _readonly(mat(rec["P"], n, n, f"P({i})")),
            _readonly(mat(rec["L"], m, n, f"L({i})")),
        )
    gt = GainTable(
        loop_id=str(doc["loop_id"]),
        alpha=float(doc["alpha"]),
        entries=entries,
        p=int(doc["p"]),
        Pp=_readonly(mat(doc["Pp"], n, n, "Pp")),
        Lp=_readonly(mat(doc["Lp"], m, n, "Lp")),
        I0=tuple(int(i) for i in doc["I0"]),
        gamma=max(int(i) for i in doc["I0"]),
    )
    return gt, float(doc["epsilon"]), int(doc["pstar"])
