"""Estimators of expectation Shapley values.

Every estimator consumes a :class:`~esv.masking.SetFunction` ``v`` over ``M``
players and returns an :class:`~esv.explanation.Explanation`:

* :func:`exact_shapley` enumerates all ``2**M`` coalitions.
* :func:`permutation_estimate` averages marginal contributions over random
  feature orderings.
* :func:`kernel_shap_solve` fits the additive model by weighted least squares
  under the Shapley kernel, with the empty and full coalitions imposed as
  exact constraints, optionally after lasso support selection.
* :func:`lime_baseline_solve` is the same regression with an exponential
  proximity kernel, a free intercept and no constraints.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpstrf

from ._lasso import gram, lambda_max, lasso_cd
from .errors import BudgetRefusedError, DomainError, SingularSystemError
from .explanation import Explanation
from .masking import all_coalitions

__all__ = [
    "INFINITE",
    "shapley_kernel_weight",
    "exact_shapley",
    "permutation_estimate",
    "CoalitionSample",
    "sample_coalitions",
    "kernel_shap_solve",
    "lime_baseline_solve",
    "default_kernel_width",
    "EXACT_MAX_PLAYERS",
]

INFINITE = math.inf
EXACT_MAX_PLAYERS = 20

LASSO_GRID_SIZE = 5
LASSO_GRID_SPAN = (-0.5, -2.5)  # log10 of lambda / lambda_max at the ends of the grid
LASSO_FOLDS = 5
LASSO_TOL = 1e-9


def shapley_kernel_weight(M, s):
    """Shapley kernel weight of a coalition of size ``s`` among ``M`` players.

    ``(M - 1) / (C(M, s) * s * (M - s))`` for ``0 < s < M`` and
    :data:`INFINITE` for the empty and full coalitions.
    """
    if M < 1 or not 0 <= s <= M:
        raise DomainError(f"coalition size {s} out of range for M={M}")
    if s == 0 or s == M:
        return INFINITE
    return (M - 1) / (math.comb(M, s) * s * (M - s))


def _size_mass(M):
    """Total kernel weight per coalition size ``1..M-1`` (unnormalized)."""
    s = np.arange(1, M)
    return (M - 1) / (s * (M - s))


# -- exact -----------------------------------------------------------------


def exact_shapley(v, max_players=EXACT_MAX_PLAYERS):
    """Shapley values by enumeration of every coalition.

    ``phi_i = sum_S |S|! (M-|S|-1)! / M! * (v(S + i) - v(S))`` over all ``S``
    not containing ``i``. Costs ``2**M`` set-function evaluations, so ``M`` is
    capped at ``max_players``.
    """
    M = v.n_players
    if M > max_players:
        raise BudgetRefusedError(
            f"exact enumeration over M={M} players needs 2**{M} evaluations (cap is M={max_players})"
        )
    values = v.values(all_coalitions(M))
    masks = np.arange(2**M, dtype=np.int64)
    sizes = np.zeros(2**M, dtype=np.int64)
    for i in range(M):
        sizes += (masks >> i) & 1
    weight = np.array([1.0 / (M * math.comb(M - 1, s)) for s in range(M)])
    phi = np.empty(M)
    for i in range(M):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = np.sum(weight[sizes[without]] * (values[without | bit] - values[without]))
    return Explanation(values[0], phi, "exact", 2**M, 0)


# -- permutation sampling --------------------------------------------------


def _count_distinct(Z):
    packed = np.packbits(Z, axis=1)
    return int(np.unique(packed, axis=0).shape[0])


def permutation_estimate(v, n_orderings, seed=0):
    """Average marginal contributions over ``n_orderings`` random orderings.

    Each ordering walks from the empty to the full coalition adding one
    feature at a time, so the attributions of a single ordering telescope to
    ``v(full) - v(empty)``. Orderings are drawn uniformly with replacement
    from a PCG64 generator seeded with ``seed``; once ``n_orderings`` reaches
    ``M!`` every ordering is enumerated instead and the result is exact.
    """
    if n_orderings < 1:
        raise DomainError("n_orderings must be at least 1")
    M = v.n_players
    if M <= 12 and n_orderings >= math.factorial(M):
        orders = np.array(list(itertools.permutations(range(M))), dtype=np.int64)
        n_orderings = len(orders)
    else:
        rng = np.random.default_rng(seed)
        orders = np.array([rng.permutation(M) for _ in range(n_orderings)])
    # prefix coalitions: row (r, k) holds the first k features of ordering r
    rank = np.empty_like(orders)
    rows = np.arange(n_orderings)[:, None]
    rank[rows, orders] = np.arange(M)
    Z = rank[:, None, :] < np.arange(M + 1)[None, :, None]
    values = v.values(Z.reshape(-1, M)).reshape(n_orderings, M + 1)
    marginal = np.diff(values, axis=1)
    phi = np.zeros(M)
    np.add.at(phi, orders.ravel(), marginal.ravel())
    phi /= n_orderings
    budget = _count_distinct(Z.reshape(-1, M))
    return Explanation(values[0, 0], phi, "permutation", budget, seed,
                       extra={"n_orderings": int(n_orderings)})


# -- coalition sampling ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoalitionSample:
    """Distinct non-trivial coalitions with their regression weights.

    ``counts`` is how many times each row was drawn (1 when enumerated);
    ``weights`` are the Shapley-kernel regression weights: the kernel value
    itself for an enumerated design, and the draw count for a sampled one
    (sampling already follows the kernel, so each draw carries equal weight).
    """

    Z: np.ndarray
    counts: np.ndarray
    weights: np.ndarray
    enumerated: bool
    seed: int = 0

    def __len__(self):
        return self.Z.shape[0]

    @property
    def M(self):
        return self.Z.shape[1]


def _enumerate_pairs(M):
    """All non-trivial coalitions, each followed by its complement."""
    full = (1 << M) - 1
    k = np.arange(1, 2 ** (M - 1), dtype=np.int64)
    k = k[k < (full ^ k)]
    masks = np.stack([k, full ^ k], axis=1).ravel()
    return ((masks[:, None] >> np.arange(M)) & 1).astype(bool)


def sample_coalitions(M, budget, seed=0):
    """Choose at most ``budget`` distinct coalitions for the kernel regression.

    When ``2**M - 2 <= budget`` every non-trivial coalition is returned.
    Otherwise coalition sizes are drawn with probability proportional to
    their total kernel weight, a uniformly random coalition of that size is
    drawn, and it is added together with its complement. Draws that repeat an
    existing coalition raise its count instead of consuming budget.
    """
    if budget < 2:
        raise DomainError("budget must be at least 2")
    if M < 1:
        raise DomainError("M must be at least 1")
    if M < 63 and 2**M - 2 <= budget:
        Z = _enumerate_pairs(M) if M > 1 else np.zeros((0, M), dtype=bool)
        sizes = Z.sum(axis=1)
        weights = np.array([shapley_kernel_weight(M, int(s)) for s in sizes])
        return CoalitionSample(Z, np.ones(len(Z), dtype=np.int64), weights, True, seed)

    rng = np.random.default_rng(seed)
    mass = _size_mass(M)
    prob = mass / mass.sum()
    index = {}
    rows, counts = [], []
    batch = max(16, budget)
    draws = 0
    max_draws = 1000 * budget
    while len(rows) < budget and draws < max_draws:
        sizes = rng.choice(np.arange(1, M), size=batch, p=prob)
        ranks = rng.random((batch, M)).argsort(axis=1).argsort(axis=1)
        for s, r in zip(sizes, ranks):
            draws += 1
            z = r < s
            key = np.packbits(z).tobytes()
            comp = ~z
            ckey = np.packbits(comp).tobytes()
            if key in index:
                counts[index[key]] += 1
                if ckey in index:
                    counts[index[ckey]] += 1
                continue
            index[key] = len(rows)
            rows.append(z)
            counts.append(1)
            if len(rows) < budget:
                index[ckey] = len(rows)
                rows.append(comp)
                counts.append(1)
            if len(rows) >= budget:
                break
    Z = np.array(rows, dtype=bool).reshape(-1, M)
    counts = np.array(counts, dtype=np.int64)
    return CoalitionSample(Z, counts, counts.astype(float), False, seed)


# -- weighted least squares ------------------------------------------------


def _solve_normal(X, w, t, columns):
    """Solve ``min_b sum w (t - X b)^2`` through pivoted Cholesky of ``X'WX``.

    ``columns`` names the feature behind each column of ``X`` so that rank
    deficiency can be reported in terms of features.
    """
    p = X.shape[1]
    if p == 0:
        return np.zeros(0)
    Xw = X * w[:, None]
    A = Xw.T @ X
    b = Xw.T @ t
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
        raise SingularSystemError("normal equations are not finite", columns)
    U, piv, rank, info = dpstrf(A, lower=0)
    piv = piv - 1
    if info < 0:
        raise SingularSystemError(f"factorization failed (info={info})", columns)
    if rank < p:
        raise SingularSystemError(
            f"weighted design has rank {rank} < {p}", [columns[j] for j in sorted(piv[rank:])]
        )
    U = np.triu(U)
    y = solve_triangular(U, b[piv], trans="T", lower=False)
    sol = solve_triangular(U, y, lower=False)
    beta = np.empty(p)
    beta[piv] = sol
    return beta


def _constrained_fit(Z, w, y, phi0, total, support):
    """Weighted least squares with ``phi0`` fixed and ``sum(phi) = total``.

    Only features in ``support`` (sorted) may be non-zero; the last one is
    eliminated through the sum constraint.
    """
    M = Z.shape[1]
    phi = np.zeros(M)
    if len(support) == 0:
        return phi
    last = support[-1]
    if len(support) == 1:
        phi[last] = total
        return phi
    keep = list(support[:-1])
    zl = Z[:, last].astype(float)
    X = Z[:, keep].astype(float) - zl[:, None]
    t = y - phi0 - zl * total
    beta = _solve_normal(X, w, t, keep)
    phi[keep] = beta
    phi[last] = total - beta.sum()
    return phi


def _pruned_fit(Z, w, y, phi0, total, support):
    """Constrained refit that drops support features the data cannot separate.

    Returns ``(phi, pruned)``; ``pruned`` lists the features removed because
    their columns were linearly dependent on the rest of the support.
    """
    support = list(support)
    pruned = []
    while True:
        try:
            return _constrained_fit(Z, w, y, phi0, total, support), pruned
        except SingularSystemError as exc:
            drop = set(exc.columns)
            if not drop:
                raise
            pruned.extend(sorted(drop))
            support = [j for j in support if j not in drop]


def _fold_ids(n):
    # complement pairs share a fold
    return (np.arange(n) // 2) % LASSO_FOLDS


def _lasso_support(Z, w, y, phi0, lam, beta0=None):
    X = Z.astype(float)
    G, c = gram(X, w, y - phi0)
    beta, _ = lasso_cd(G, c, lam, beta0, tol=LASSO_TOL)
    # coefficients below the solver tolerance are numerical residue at the threshold
    beta[np.abs(beta) <= LASSO_TOL * max(1.0, np.abs(beta).max(initial=0.0))] = 0.0
    return np.flatnonzero(beta), beta


def _lasso_grid(Z, w, y, phi0):
    _, c = gram(Z.astype(float), w, y - phi0)
    lmax = lambda_max(c)
    return lmax * np.logspace(*LASSO_GRID_SPAN, LASSO_GRID_SIZE)


def _select_lambda(Z, w, y, phi0, total, grid):
    """Pick a penalty by K-fold held-out weighted deviance of the refit model.

    Uses the one-standard-error rule: the largest penalty whose mean fold
    deviance is within one standard error of the best one.
    """
    folds = _fold_ids(len(y))
    deviance = np.full((LASSO_FOLDS, len(grid)), np.nan)
    for f in range(LASSO_FOLDS):
        train, test = folds != f, folds == f
        if not test.any() or train.sum() < 2:
            continue
        beta = None
        for g, lam in enumerate(grid):
            support, beta = _lasso_support(Z[train], w[train], y[train], phi0, lam, beta)
            phi, _ = _pruned_fit(Z[train], w[train], y[train], phi0, total, support)
            resid = y[test] - phi0 - Z[test] @ phi
            deviance[f, g] = np.sum(w[test] * resid**2) / np.sum(w[test])
    deviance = deviance[~np.isnan(deviance).any(axis=1)]
    if deviance.shape[0] == 0:
        return float(grid[0]), deviance
    with np.errstate(invalid="ignore"):
        mean = deviance.mean(axis=0)
        best = int(np.argmin(mean))
        se = deviance[:, best].std(ddof=1) / np.sqrt(deviance.shape[0]) if deviance.shape[0] > 1 else 0.0
    if not np.isfinite(mean[best]):
        return float(grid[0]), deviance
    if not np.isfinite(se):
        se = 0.0
    # grid is decreasing, so the first admissible entry is the largest penalty
    chosen = int(np.flatnonzero(mean <= mean[best] + se)[0])
    return float(grid[chosen]), deviance


def _active_features(Z, y, empty, full):
    """Features whose toggle changes the value for some coalition.

    ``Z`` must hold every non-trivial coalition once.
    """
    M = Z.shape[1]
    table = np.empty(2**M)
    table[Z.astype(np.int64) @ (1 << np.arange(M, dtype=np.int64))] = y
    table[0], table[-1] = empty, full
    keys = np.arange(2**M)
    active = []
    for j in range(M):
        off = keys[(keys >> j) & 1 == 0]
        if np.any(table[off] != table[off | (1 << j)]):
            active.append(j)
    return active


def kernel_shap_solve(v, coalitions, l1_reg=None):
    """Fit the additive explanation by Shapley-kernel weighted least squares.

    Parameters
    ----------
    v : SetFunction
    coalitions : CoalitionSample
        Non-trivial coalitions and weights, usually from :func:`sample_coalitions`.
    l1_reg : None, "auto" or float
        ``None`` solves the full constrained regression. Otherwise a weighted
        lasso first selects a support (``"auto"`` picks the penalty by
        held-out validation over a log-spaced grid) and the constrained
        regression is refit on that support only, leaving all other
        attributions at exactly zero.

    The empty and full coalitions carry infinite kernel weight; they are
    imposed exactly by fixing ``phi0 = v(empty)`` and eliminating the last
    free attribution through ``sum(phi) = v(full) - phi0``.
    """
    M = v.n_players
    phi0 = v.empty_value
    total = v.full_value - phi0
    Z = np.asarray(coalitions.Z, dtype=bool)
    budget = len(Z) + 2
    name = "kernel" if l1_reg is None else "kernel-lasso"
    extra = {"enumerated": bool(coalitions.enumerated)}
    if M == 1:
        return Explanation(phi0, [total], name, 2, coalitions.seed, extra=extra)
    if len(Z) == 0:
        raise DomainError("kernel regression needs at least one non-trivial coalition")
    if Z.shape[1] != M or (Z.all(axis=1) | ~Z.any(axis=1)).any():
        raise DomainError("coalitions must be non-trivial rows of length M")
    w = np.asarray(coalitions.weights, dtype=float)
    y = v.values(Z)

    if l1_reg is None:
        phi = _constrained_fit(Z, w, y, phi0, total, list(range(M)))
        return Explanation(phi0, phi, name, budget, coalitions.seed, extra=extra)

    if isinstance(l1_reg, str):
        if l1_reg != "auto":
            raise DomainError(f"unknown l1_reg {l1_reg!r}; expected None, 'auto' or a penalty")
        if coalitions.enumerated:
            # no sampling noise to regularize away: keep exactly the features
            # that change the value somewhere
            support = _active_features(Z, y, phi0, v.full_value)
            phi, pruned = _pruned_fit(Z, w, y, phi0, total, support)
            extra.update(l1_reg=0.0, support=np.flatnonzero(phi).tolist(), pruned=pruned)
            return Explanation(phi0, phi, name, budget, coalitions.seed, extra=extra)
        lam, _ = _select_lambda(Z, w, y, phi0, total, _lasso_grid(Z, w, y, phi0))
    else:
        lam = float(l1_reg)
        if not lam >= 0:
            raise DomainError("lasso penalty must be non-negative")
    support, beta = _lasso_support(Z, w, y, phi0, lam)
    if support.size == 0 and total != 0:
        # nothing survived the penalty; the efficiency gap still needs a carrier
        _, c = gram(Z.astype(float), w, y - phi0)
        support = np.array([int(np.argmax(np.abs(c)))])
    phi, pruned = _pruned_fit(Z, w, y, phi0, total, support.tolist())
    extra.update(l1_reg=lam, support=np.flatnonzero(phi).tolist(), pruned=pruned)
    return Explanation(phi0, phi, name, budget, coalitions.seed, extra=extra)


# -- LIME baseline ---------------------------------------------------------


def default_kernel_width(M):
    return 0.75 * math.sqrt(M)


def lime_baseline_solve(v, coalitions, kernel_width=None):
    """Local linear fit with LIME's exponential proximity kernel.

    Row weight is ``count * exp(-d**2 / kernel_width**2)`` where ``d`` is the
    number of absent features. The intercept is free and no efficiency
    constraint is imposed, so the result need not sum to ``v(full)``.
    """
    M = v.n_players
    if kernel_width is None:
        kernel_width = default_kernel_width(M)
    if not kernel_width > 0:
        raise DomainError("kernel_width must be positive")
    Z = np.asarray(coalitions.Z, dtype=bool)
    if len(Z) == 0:
        raise DomainError("LIME regression needs at least one coalition")
    y = v.values(Z)
    d = M - Z.sum(axis=1)
    w = coalitions.counts * np.exp(-(d.astype(float) ** 2) / kernel_width**2)
    X = np.hstack([np.ones((len(Z), 1)), Z.astype(float)])
    beta = _solve_normal(X, w, y, ["intercept", *range(M)])
    return Explanation(beta[0], beta[1:], "lime", len(Z), coalitions.seed,
                       extra={"kernel_width": float(kernel_width)})
