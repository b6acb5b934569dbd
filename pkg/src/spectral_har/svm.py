"""RBF-kernel support vector machine trained with SMO, one-vs-one multiclass.

Each unordered class pair (a, b), with a before b in label order, gets a
binary SVM: targets are +1 for a and -1 for b, and a test point votes for a
when the decision value is positive, for b otherwise. The per-class score
is the vote count; ties between equal vote counts are broken by the summed
signed decision values, folded into the score as a bounded (< 1/3)
perturbation that can never reorder distinct vote counts.

The dual problem is solved by sequential minimal optimization with an error
cache: alternating sweeps over all rows and over non-bound rows, second
index chosen to maximize |E_i - E_j| with deterministic fallbacks, until a
full sweep changes nothing (KKT satisfied to the tolerance) or the pass cap
is hit. The kernel matrix over training rows is precomputed once and shared
by all class pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3
_MAX_PASSES = 2000
_ALPHA_EPS = 1e-12


def rbf_kernel(x: np.ndarray, z: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||x - z||^2), computed via the Gram expansion."""
    x2 = np.einsum("ij,ij->i", x, x)
    z2 = np.einsum("ij,ij->i", z, z)
    d2 = x2[:, None] + z2[None, :] - 2.0 * (x @ z.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


def gamma_scale(x: np.ndarray) -> float:
    """1 / (D * mean per-feature population variance) of the training rows."""
    d = x.shape[1]
    var = float(x.var(axis=0).mean())
    if var <= 0.0:
        var = 1.0
    return 1.0 / (d * var)


@dataclass
class BinarySvm:
    """One trained class-pair problem, referencing rows of a shared SV matrix."""

    class_a: int
    class_b: int
    sv_rows: np.ndarray  # int64 indices into the model's sv_matrix
    coef: np.ndarray  # alpha_i * y_i per support vector
    bias: float


@dataclass
class SvmModel:
    """One-vs-one multiclass RBF SVM."""

    n_classes: int
    gamma: float
    c: float
    sv_matrix: np.ndarray  # (m, D) float64, union of all pairs' support vectors
    pairs: list[BinarySvm]


def _smo(
    k: np.ndarray, y: np.ndarray, c: float, tol: float
) -> tuple[np.ndarray, float]:
    """Solve the dual for one binary problem on a precomputed kernel.

    Returns (alpha, bias) with 0 <= alpha <= C. Raises NumericError when the
    pass cap is exceeded.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    b = 0.0
    errors = -y.astype(np.float64)  # decision(x_i) - y_i with f = 0

    def take_step(i: int, j: int) -> bool:
        nonlocal b
        if i == j:
            return False
        ai_old, aj_old = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        if yi != yj:
            lo, hi = max(0.0, aj_old - ai_old), min(c, c + aj_old - ai_old)
        else:
            lo, hi = max(0.0, ai_old + aj_old - c), min(c, ai_old + aj_old)
        if hi - lo < _ALPHA_EPS:
            return False
        eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
        if eta <= 0.0:
            return False
        aj = aj_old + yj * (errors[i] - errors[j]) / eta
        aj = min(hi, max(lo, aj))
        if abs(aj - aj_old) < _ALPHA_EPS * (aj + aj_old + _ALPHA_EPS):
            return False
        ai = ai_old + yi * yj * (aj_old - aj)
        di, dj = yi * (ai - ai_old), yj * (aj - aj_old)
        b1 = b - errors[i] - di * k[i, i] - dj * k[i, j]
        b2 = b - errors[j] - di * k[i, j] - dj * k[j, j]
        if 0.0 < ai < c:
            b_new = b1
        elif 0.0 < aj < c:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        errors += di * k[i] + dj * k[j] + (b_new - b)
        alpha[i], alpha[j] = ai, aj
        b = b_new
        return True

    def examine(i: int) -> bool:
        ei = errors[i]
        r = ei * y[i]
        if not ((r < -tol and alpha[i] < c) or (r > tol and alpha[i] > 0.0)):
            return False
        non_bound = np.nonzero((alpha > 0.0) & (alpha < c))[0]
        if non_bound.size > 1:
            j = int(non_bound[np.argmax(np.abs(ei - errors[non_bound]))])
            if take_step(i, j):
                return True
        for j in np.roll(non_bound, -int(np.searchsorted(non_bound, i + 1))):
            if take_step(i, int(j)):
                return True
        for j in range(i + 1, n):
            if take_step(i, j):
                return True
        for j in range(0, i):
            if take_step(i, j):
                return True
        return False

    examine_all = True
    for _ in range(_MAX_PASSES):
        n_changed = 0
        if examine_all:
            candidates = range(n)
        else:
            candidates = np.nonzero((alpha > 0.0) & (alpha < c))[0]
        for i in candidates:
            if examine(int(i)):
                n_changed += 1
        if examine_all:
            if n_changed == 0:
                return alpha, b
            examine_all = False
        elif n_changed == 0:
            examine_all = True
    raise NumericError(f"SMO did not converge within {_MAX_PASSES} passes")


def fit_svm(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    c: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    gamma: float | None = None,
) -> SvmModel:
    """Train one binary SVM per class pair on shared kernel rows."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if gamma is None:
        gamma = gamma_scale(x)
    k_full = rbf_kernel(x, x, gamma)

    raw_pairs = []
    sv_union: set[int] = set()
    for a in range(n_classes):
        for bcls in range(a + 1, n_classes):
            rows = np.nonzero((y == a) | (y == bcls))[0]
            if rows.size == 0:
                continue
            yy = np.where(y[rows] == a, 1.0, -1.0)
            alpha, bias = _smo(k_full[np.ix_(rows, rows)], yy, c, tol)
            sv_local = np.nonzero(alpha > _ALPHA_EPS)[0]
            sv_global = rows[sv_local]
            sv_union.update(int(g) for g in sv_global)
            raw_pairs.append((a, bcls, sv_global, alpha[sv_local] * yy[sv_local], bias))

    union = np.array(sorted(sv_union), dtype=np.int64)
    remap = {int(g): i for i, g in enumerate(union)}
    pairs = [
        BinarySvm(
            class_a=a,
            class_b=bcls,
            sv_rows=np.array([remap[int(g)] for g in sv_global], dtype=np.int64),
            coef=coef,
            bias=float(bias),
        )
        for a, bcls, sv_global, coef, bias in raw_pairs
    ]
    return SvmModel(
        n_classes=n_classes,
        gamma=gamma,
        c=c,
        sv_matrix=x[union].copy(),
        pairs=pairs,
    )


def decision_values(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Per-pair decision values for each row, (n, n_pairs)."""
    x = np.asarray(x, dtype=np.float64)
    k = rbf_kernel(x, model.sv_matrix, model.gamma)
    out = np.zeros((x.shape[0], len(model.pairs)))
    for p, pair in enumerate(model.pairs):
        out[:, p] = k[:, pair.sv_rows] @ pair.coef + pair.bias
    return out


def predict_scores(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Vote counts per class with the bounded decision-value tie-break folded in."""
    dec = decision_values(model, x)
    n = dec.shape[0]
    votes = np.zeros((n, model.n_classes))
    sums = np.zeros((n, model.n_classes))
    for p, pair in enumerate(model.pairs):
        d = dec[:, p]
        wins_a = d > 0.0
        votes[wins_a, pair.class_a] += 1.0
        votes[~wins_a, pair.class_b] += 1.0
        sums[:, pair.class_a] += d
        sums[:, pair.class_b] -= d
    scale = 3.0 * (np.abs(sums).max(axis=1, keepdims=True) + 1.0)
    return votes + sums / scale
