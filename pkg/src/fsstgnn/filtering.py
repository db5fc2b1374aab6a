"""Correlation and precision filtering: covariance shrinkage, graphical
lasso, and the maximally filtered clique forest (MFCF), plus
cross-validated parameter selection and sparsity measurement.

All three filters take an empirical correlation matrix and return a
``FilterResult`` holding a filtered dense correlation, a (possibly
sparse) positive-definite precision matrix that inverts back to it, and
the realized off-diagonal sparsity.
"""

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    ConvergenceError,
    DataError,
    DefinitenessError,
    ParameterError,
)
from .linalg import (
    PD_PIVOT_FLOOR,
    CorrelationMatrix,
    PrecisionMatrix,
    TimeSeriesPanel,
    cholesky_lower,
    correlation_from_rows,
    invert_spd,
    symmetrize,
)

FILTER_METHODS = ("empirical", "shrinkage", "glasso", "mfcf")

# Candidate grids for cross-validated parameter selection.
ALPHA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 21), 10))
LAMBDA_GRID = tuple(np.logspace(-3.0, 0.0, 20))

# Diagonal jitter added (then renormalized to unit diagonal) when an
# empirical correlation is too close to singular to invert.
BASE_JITTER = 1e-8
PRECISION_ZERO_TOL = 1e-10


@dataclass(frozen=True)
class FilterConfig:
    """Parameters for all filtering methods.

    ``alpha`` (shrinkage weight) and ``lam`` (l1 penalty) may be None,
    meaning "select by cross-validation on the training segment".
    ``mfcf_gain_threshold`` drops squared-correlation gain contributions
    at or below its value; 0 keeps every contribution and reproduces the
    fixed-clique-size-4 triangulated filter exactly.
    """

    method: str = "mfcf"
    alpha: Optional[float] = None
    lam: Optional[float] = None
    min_clique: int = 4
    max_clique: int = 4
    mfcf_gain_threshold: float = 0.0
    cv_folds: int = 5

    def __post_init__(self):
        if self.method not in FILTER_METHODS:
            raise ParameterError(f"unknown filter method {self.method!r}; expected one of {FILTER_METHODS}")
        if self.alpha is not None and not (0.0 <= self.alpha <= 1.0):
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.lam is not None and self.lam < 0.0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if not (2 <= self.min_clique <= self.max_clique):
            raise ParameterError(
                f"clique bounds must satisfy 2 <= min <= max, got {self.min_clique}..{self.max_clique}"
            )
        if self.cv_folds < 2:
            raise ParameterError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.mfcf_gain_threshold < 0.0:
            raise ParameterError(f"mfcf_gain_threshold must be >= 0, got {self.mfcf_gain_threshold}")


class InsertionStep(NamedTuple):
    vertex: int
    face: tuple
    gain: float


@dataclass(frozen=True)
class CliqueForest:
    """Cliques and separators produced by the greedy clique-forest build.

    With min = max clique size 4 and no gain threshold the forest is the
    triangulated maximally filtered graph: n - 3 cliques of size 4 joined
    through n - 4 separators of size 3.
    """

    n: int
    cliques: tuple
    separators: tuple          # ((vertex tuple, multiplicity), ...)
    insertion_log: tuple

    def edge_pairs(self) -> set:
        """Undirected edges (i < j) covered by the cliques."""
        edges = set()
        for clique in self.cliques:
            for a_pos, a in enumerate(clique):
                for b in clique[a_pos + 1:]:
                    edges.add((min(a, b), max(a, b)))
        return edges

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edge_pairs():
            adj[i, j] = adj[j, i] = True
        return adj

    def validate(self) -> None:
        """Check the structural invariants; raises DataError on violation."""
        if not has_perfect_elimination_ordering(self.adjacency()):
            raise DataError("clique-forest edge union is not chordal")
        clique_sets = [set(c) for c in self.cliques]
        for sep, _mult in self.separators:
            hosts = sum(1 for c in clique_sets if set(sep) <= c)
            if hosts < 2:
                raise DataError(f"separator {sep} is contained in {hosts} cliques, expected >= 2")


@dataclass(frozen=True)
class FilterResult:
    """Filtered correlation, its precision, and how sparse the precision is."""

    correlation: CorrelationMatrix
    precision: PrecisionMatrix
    sparsity: float
    forest: Optional[CliqueForest] = None
    jitter: float = 0.0
    objective_values: Optional[tuple] = None
    sweeps: Optional[int] = None


def sparsity(precision) -> float:
    """Fraction of zero off-diagonal precision entries over n*(n-1)."""
    if isinstance(precision, PrecisionMatrix):
        n = precision.n
        nonzero = len(precision.sparsity_pattern)
    else:
        entries = np.asarray(precision, dtype=float)
        n = entries.shape[0]
        off = entries.copy()
        np.fill_diagonal(off, 0.0)
        nonzero = int(np.count_nonzero(off))
    if n < 2:
        return 1.0
    return 1.0 - nonzero / (n * (n - 1))


def _ensure_pd(entries: np.ndarray, base_jitter: float = BASE_JITTER):
    """Return a unit-diagonal PD version of ``entries`` plus the jitter used.

    Rank-deficient 14-sample windows are common; a tiny renormalized
    diagonal inflation restores definiteness without visibly moving the
    off-diagonal structure.
    """
    entries = symmetrize(np.asarray(entries, dtype=float))
    jitter = 0.0
    candidate = entries
    for attempt in range(8):
        try:
            cholesky_lower(candidate, min_pivot=PD_PIVOT_FLOOR)
            return candidate, jitter
        except DefinitenessError:
            jitter = base_jitter * (10.0 ** attempt)
            candidate = (entries + jitter * np.eye(entries.shape[0])) / (1.0 + jitter)
            np.fill_diagonal(candidate, 1.0)
    raise DefinitenessError(f"could not restore positive definiteness with jitter up to {jitter}")


def _dense_result(entries: np.ndarray, jitter: float = 0.0) -> FilterResult:
    corr = CorrelationMatrix.from_entries(entries)
    precision = PrecisionMatrix.from_entries(invert_spd(corr.entries), zero_tol=PRECISION_ZERO_TOL)
    return FilterResult(
        correlation=corr,
        precision=precision,
        sparsity=sparsity(precision),
        jitter=jitter,
    )


def empirical(corr: CorrelationMatrix) -> FilterResult:
    """No filtering: the empirical correlation and its straight inverse."""
    entries, jitter = _ensure_pd(corr.entries)
    return _dense_result(entries, jitter=jitter)


def shrink(corr: CorrelationMatrix, alpha: float) -> FilterResult:
    """Convex shrinkage toward the scaled identity.

    shrunk = (1 - alpha) * C + alpha * (tr C / n) * I, which for a
    correlation matrix scales every off-diagonal by (1 - alpha) and every
    eigenvalue to (1 - alpha) * e_i + alpha.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    entries = corr.entries
    target = np.trace(entries) / entries.shape[0]
    shrunk = (1.0 - alpha) * entries + alpha * target * np.eye(entries.shape[0])
    shrunk, jitter = _ensure_pd(shrunk)
    return _dense_result(shrunk, jitter=jitter)


def _soft_threshold(x: float, cut: float) -> float:
    if x > cut:
        return x - cut
    if x < -cut:
        return x + cut
    return 0.0


def _glasso_objective(s: np.ndarray, theta: np.ndarray, lam: float) -> float:
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return math.inf
    off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return float(-logdet + (s * theta).sum() + lam * off)


def _dual_gap(s: np.ndarray, theta: np.ndarray, lam: float) -> float:
    off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return float((s * theta).sum() - s.shape[0] + lam * off)


def glasso(corr: CorrelationMatrix, lam: float, *, max_sweeps: int = 500,
           tol: float = 1e-6, inner_tol: float = 1e-8, max_inner: int = 100) -> FilterResult:
    """L1-penalized precision estimation by primal block coordinate descent.

    Minimizes -logdet(T) + tr(C T) + lam * sum_{i!=j} |T_ij|. Each column
    update solves its lasso subproblem exactly (cyclic coordinate descent,
    warm-started), so the recorded objective never increases between
    sweeps. The diagonal is unpenalized, hence the lam -> inf limit is
    diag(C)^-1. Off-diagonal entries below 1e-10 become structural zeros.
    """
    if lam < 0.0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    s, jitter = _ensure_pd(corr.entries)
    p = s.shape[0]
    if p == 1:
        return _dense_result(s, jitter=jitter)

    theta = np.diag(1.0 / np.diag(s)).copy()
    w = np.diag(np.diag(s)).copy()                  # w tracks theta^{-1}
    objective = [_glasso_objective(s, theta, lam)]
    converged_sweeps = None
    for sweep in range(1, max_sweeps + 1):
        theta_prev = theta.copy()
        for j in range(p):
            rest = [k for k in range(p) if k != j]
            w11 = w[np.ix_(rest, rest)]
            w12 = w[rest, j]
            w22 = w[j, j]
            m = w11 - np.outer(w12, w12) / w22      # = (Theta_11)^{-1}
            s12 = s[rest, j]
            s22 = s[j, j]
            u = theta[rest, j].copy()
            diag_m = np.diag(m).copy()
            for _ in range(max_inner):
                delta = 0.0
                for k in range(p - 1):
                    residual = s12[k] + s22 * (m[k] @ u - diag_m[k] * u[k])
                    new_u = -_soft_threshold(residual, lam) / (s22 * diag_m[k])
                    delta = max(delta, abs(new_u - u[k]))
                    u[k] = new_u
                if delta < inner_tol:
                    break
            mu = m @ u
            gamma = 1.0 / s22
            theta[rest, j] = u
            theta[j, rest] = u
            theta[j, j] = gamma + u @ mu
            w[np.ix_(rest, rest)] = m + s22 * np.outer(mu, mu)
            w[rest, j] = -s22 * mu
            w[j, rest] = -s22 * mu
            w[j, j] = s22
        objective.append(_glasso_objective(s, theta, lam))
        if np.max(np.abs(theta - theta_prev)) < tol:
            converged_sweeps = sweep
            break
        w = invert_spd(theta)                       # refresh to kill float drift
    if converged_sweeps is None:
        raise ConvergenceError(
            f"graphical lasso did not converge in {max_sweeps} sweeps",
            gap=_dual_gap(s, theta, lam),
        )

    precision = PrecisionMatrix.from_entries(theta, zero_tol=PRECISION_ZERO_TOL)
    correlation = CorrelationMatrix.from_entries(invert_spd(precision.entries))
    return FilterResult(
        correlation=correlation,
        precision=precision,
        sparsity=sparsity(precision),
        jitter=jitter,
        objective_values=tuple(objective),
        sweeps=converged_sweeps,
    )


def _face_subsets(clique: tuple, vertex: int, size: int) -> list:
    """Subsets of ``clique`` of the given size that contain ``vertex``."""
    others = [v for v in clique if v != vertex]
    take = size - 1
    if take < 0 or take > len(others):
        return []
    return [tuple(sorted((vertex, *combo))) for combo in itertools.combinations(others, take)]


def mfcf(corr: CorrelationMatrix, config: FilterConfig) -> FilterResult:
    """Greedy clique-forest filter with clique/separator precision assembly.

    Seeds with the ``max_clique`` vertices of largest absolute correlation
    row sums, then repeatedly attaches the remaining vertex with the
    largest gain (sum of squared correlations to a candidate face,
    dropping contributions at or below the gain threshold). Each vertex is
    simplicial at insertion, so the edge union is chordal by construction.
    The precision matrix is the sum of embedded inverted clique blocks
    minus embedded inverted separator blocks, which is positive definite
    and matches the input correlation on every within-clique pair.
    """
    n = corr.n
    if n < config.max_clique:
        raise ParameterError(f"need at least max_clique={config.max_clique} series, got {n}")
    entries, jitter = _ensure_pd(corr.entries)
    gain_sq = entries ** 2
    np.fill_diagonal(gain_sq, 0.0)
    threshold = config.mfcf_gain_threshold
    face_size = config.max_clique - 1

    strength = np.abs(entries).sum(axis=0) - 1.0
    seed = tuple(sorted(np.argsort(-strength, kind="stable")[: config.max_clique].tolist()))
    cliques = [seed]
    separators: dict[tuple, int] = {}
    log: list[InsertionStep] = []
    faces = set(_face_subsets(seed, seed[0], face_size))
    for v in seed[1:]:
        faces.update(_face_subsets(seed, v, face_size))
    remaining = sorted(set(range(n)) - set(seed))

    while remaining:
        rem = np.array(remaining)
        best_gain = -1.0
        best_vertex = None
        best_face = None
        for face in sorted(faces):
            contrib = gain_sq[np.ix_(rem, list(face))]
            if threshold > 0.0:
                contrib = np.where(contrib > threshold, contrib, 0.0)
            gains = contrib.sum(axis=1)
            idx = int(np.argmax(gains))             # first max -> smallest vertex
            gain = float(gains[idx])
            vertex = int(rem[idx])
            if gain > best_gain or (gain == best_gain and vertex < best_vertex):
                best_gain, best_vertex, best_face = gain, vertex, face
        contrib = gain_sq[best_vertex, list(best_face)]
        if threshold > 0.0:
            keep = contrib > threshold
        else:
            keep = np.ones(len(best_face), dtype=bool)
        attached = tuple(sorted(u for u, k in zip(best_face, keep) if k))
        clique = tuple(sorted((best_vertex, *attached)))
        cliques.append(clique)
        if attached:
            separators[attached] = separators.get(attached, 0) + 1
        if len(attached) == face_size:
            faces.discard(best_face)
        new_size = min(len(clique), face_size)
        faces.update(_face_subsets(clique, best_vertex, new_size))
        remaining.remove(best_vertex)
        log.append(InsertionStep(best_vertex, best_face, best_gain))

    joint = np.zeros((n, n))
    for clique in cliques:
        idx = np.ix_(clique, clique)
        joint[idx] += invert_spd(entries[idx])
    for sep, mult in sorted(separators.items()):
        idx = np.ix_(sep, sep)
        joint[idx] -= mult * invert_spd(entries[idx])
    joint = symmetrize(joint)

    precision = PrecisionMatrix.from_entries(joint, zero_tol=PRECISION_ZERO_TOL)
    correlation = CorrelationMatrix.from_entries(invert_spd(precision.entries))
    forest = CliqueForest(
        n=n,
        cliques=tuple(cliques),
        separators=tuple(sorted(separators.items())),
        insertion_log=tuple(log),
    )
    return FilterResult(
        correlation=correlation,
        precision=precision,
        sparsity=sparsity(precision),
        forest=forest,
        jitter=jitter,
    )


def apply_filter(corr: CorrelationMatrix, config: FilterConfig) -> FilterResult:
    """Dispatch to the configured filter; alpha/lambda must be resolved."""
    if config.method == "empirical":
        return empirical(corr)
    if config.method == "shrinkage":
        if config.alpha is None:
            raise ParameterError("shrinkage needs alpha; select it by CV or set it explicitly")
        return shrink(corr, config.alpha)
    if config.method == "glasso":
        if config.lam is None:
            raise ParameterError("glasso needs lambda; select it by CV or set it explicitly")
        return glasso(corr, config.lam)
    return mfcf(corr, config)


def has_perfect_elimination_ordering(adj: np.ndarray) -> bool:
    """Chordality test: maximum cardinality search plus the standard
    parent-neighborhood verification."""
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]
    neighbors = [set(np.nonzero(adj[v])[0].tolist()) - {v} for v in range(n)]
    weight = [0] * n
    numbered: list[int] = []
    position = [-1] * n
    for step in range(n):
        candidates = [v for v in range(n) if position[v] < 0]
        v = max(candidates, key=lambda u: (weight[u], -u))
        position[v] = step
        numbered.append(v)
        for u in neighbors[v]:
            if position[u] < 0:
                weight[u] += 1
    for v in numbered:
        earlier = {u for u in neighbors[v] if position[u] < position[v]}
        if not earlier:
            continue
        parent = max(earlier, key=lambda u: position[u])
        if not (earlier - {parent}) <= neighbors[parent]:
            return False
    return True


def _gaussian_score(x: np.ndarray, sigma: np.ndarray) -> float:
    """Mean per-row Gaussian log-likelihood of centered rows under N(0, sigma)."""
    try:
        lower = cholesky_lower(sigma, min_pivot=PD_PIVOT_FLOOR)
    except DefinitenessError:
        return -math.inf
    logdet = 2.0 * float(np.log(np.diag(lower)).sum())
    solved = np.linalg.solve(lower, x.T)            # sigma^{-1} = L^-T L^-1
    quad = float((solved ** 2).sum()) / x.shape[0]
    n = sigma.shape[0]
    return -0.5 * (n * math.log(2.0 * math.pi) + logdet + quad)


def _forward_folds(panel: TimeSeriesPanel, folds: int):
    """Contiguous time blocks scored forward: train on everything before
    each validation block (never shuffled, never looking ahead)."""
    if folds < 2:
        raise ParameterError(f"cross-validation needs >= 2 folds, got {folds}")
    t = panel.n_steps
    edges = np.round(np.linspace(0, t, folds + 1)).astype(int)
    if np.any(np.diff(edges) < 1):
        raise DataError(f"{folds} folds over {t} rows leave an empty fold")
    for i in range(1, folds):
        train_stop = int(edges[i])
        val_stop = int(edges[i + 1])
        if train_stop < 2:
            raise DataError(
                f"fold {i} leaves only {train_stop} training rows; need at least 2"
            )
        yield (0, train_stop), (train_stop, val_stop)


def _standardized_validation(panel, train, val):
    rows_train = panel.values[train[0]: train[1]]
    rows_val = panel.values[val[0]: val[1]]
    mu = rows_train.mean(axis=0)
    sd = rows_train.std(axis=0, ddof=1)
    sd = np.where(sd == 0.0, 1.0, sd)
    return correlation_from_rows(rows_train).entries, (rows_val - mu) / sd


def select_alpha_cv(panel: TimeSeriesPanel, folds: int) -> float:
    """Shrinkage weight maximizing mean held-out Gaussian log-likelihood."""
    scores = np.zeros(len(ALPHA_GRID))
    for train, val in _forward_folds(panel, folds):
        corr_train, x_val = _standardized_validation(panel, train, val)
        eye = np.eye(corr_train.shape[0])
        for i, alpha in enumerate(ALPHA_GRID):
            sigma = (1.0 - alpha) * corr_train + alpha * eye
            scores[i] += _gaussian_score(x_val, sigma)
    return float(ALPHA_GRID[int(np.argmax(scores))])


def select_lambda_cv(panel: TimeSeriesPanel, folds: int) -> float:
    """L1 penalty maximizing mean held-out Gaussian log-likelihood over a
    logarithmic grid."""
    scores = np.zeros(len(LAMBDA_GRID))
    for train, val in _forward_folds(panel, folds):
        corr_train, x_val = _standardized_validation(panel, train, val)
        corr_obj = CorrelationMatrix.from_entries(corr_train)
        for i, lam in enumerate(LAMBDA_GRID):
            try:
                result = glasso(corr_obj, lam)
            except (ConvergenceError, DefinitenessError):
                scores[i] += -math.inf
                continue
            scores[i] += _gaussian_score(x_val, result.correlation.entries)
    return float(LAMBDA_GRID[int(np.argmax(scores))])
