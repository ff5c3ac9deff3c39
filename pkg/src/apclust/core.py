"""Exemplar-based clustering by damped message passing on a dense similarity matrix.

Every point starts as a candidate exemplar. Points exchange two kinds of
messages: the responsibility r(i, k), sent from point i to candidate k,
accumulates evidence for how well-suited k is to serve as i's exemplar
given the competing candidates; the availability a(i, k), sent from k back
to i, accumulates evidence from the support k receives from other points.
A point k is elected exemplar once a(k, k) + r(k, k) turns positive, and
iteration stops when those decisions stay constant for a configured number
of sweeps.

Similarities are negative squared Euclidean distances between planar
coordinates, so the maximum similarity is 0 (identical points). The
diagonal holds the exemplar preference: larger (closer to zero) preference
values make points more eager to become exemplars and produce more, smaller
clusters. Preferences are set from a quantile of the off-diagonal
similarities.

Updates are row/column vectorized; a run mutates only its own state, so
concurrent runs on separate inputs need no coordination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

# Row block size for pairwise distance construction; bounds peak memory at
# roughly block * n * 16 bytes regardless of n.
_DISTANCE_BLOCK_ROWS = 256


def _as_xy(points) -> np.ndarray:
    """Coerce a point sequence (array, tuples, or objects with .x/.y) to an (n, 2) float array."""
    if isinstance(points, np.ndarray):
        xy = np.asarray(points, dtype=np.float64)
    else:
        seq = list(points)
        if seq and hasattr(seq[0], "x"):
            xy = np.array([[p.x, p.y] for p in seq], dtype=np.float64)
        else:
            xy = np.asarray(seq, dtype=np.float64)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise InputError(f"expected planar (n, 2) coordinates, got shape {xy.shape}")
    return xy


@dataclass
class SimilarityMatrix:
    """Dense pairwise similarities plus the preference diagonal.

    ``s[i, k]`` holds the similarity of point i to candidate exemplar k
    (dimensionless, larger = more similar). The diagonal is NaN until a
    preference has been applied.
    """

    s: np.ndarray
    preference_applied: bool = False

    @property
    def n(self) -> int:
        return self.s.shape[0]

    def off_diagonal(self) -> np.ndarray:
        """All entries s(i, k) with i != k, as a flat array."""
        mask = ~np.eye(self.n, dtype=bool)
        return self.s[mask]

    def preferences(self) -> np.ndarray:
        if not self.preference_applied:
            raise ValueError("preference has not been applied")
        return self.s.diagonal()


@dataclass(frozen=True)
class ApcConfig:
    """Knobs for a clustering run.

    q is the preference quantile in [0, 1]: q=0 uses the minimum
    off-diagonal similarity (few, large clusters), q=1 the maximum (many,
    small clusters). Damping blends each new message with the previous one
    to prevent oscillation. jitter_scale optionally adds seeded noise to
    the off-diagonal similarities to break exact degeneracies; it defaults
    to 0, and all tie-breaking is deterministic by lowest index.
    """

    q: float = 0.5
    damping: float = 0.9
    max_iterations: int = 1000
    convergence_window: int = 100
    jitter_scale: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise InputError(f"q must be in [0, 1], got {self.q}")
        if not 0.5 <= self.damping < 1.0:
            raise InputError(f"damping must be in [0.5, 1), got {self.damping}")
        if self.max_iterations < 1:
            raise InputError("max_iterations must be positive")
        if self.convergence_window < 1:
            raise InputError("convergence_window must be positive")
        if self.convergence_window >= self.max_iterations:
            raise InputError("convergence_window must be smaller than max_iterations")
        if self.jitter_scale < 0:
            raise InputError("jitter_scale must be non-negative")


@dataclass
class MessageState:
    """Responsibility and availability matrices for one run."""

    r: np.ndarray
    a: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, n: int) -> "MessageState":
        return cls(r=np.zeros((n, n)), a=np.zeros((n, n)), iteration=0)


@dataclass(frozen=True)
class ClusterResult:
    """Exemplar indices and per-point assignments with convergence metadata."""

    exemplars: list[int]
    assignment: np.ndarray
    converged: bool
    iterations_run: int
    net_similarity: float

    @property
    def n_clusters(self) -> int:
        return len(self.exemplars)

    def members(self, exemplar: int) -> np.ndarray:
        """Indices of the points assigned to the given exemplar."""
        return np.flatnonzero(self.assignment == exemplar)


def build_similarity(points) -> SimilarityMatrix:
    """Build s(i, k) = -||x_i - x_k||^2 from planar metric coordinates.

    The diagonal is left NaN until apply_preference / set_preference fills
    it. Coordinates must already be projected to meters; differences are
    computed explicitly (blocked over rows) so identical points yield an
    exact similarity of 0.
    """
    xy = _as_xy(points)
    n = xy.shape[0]
    if n == 0:
        raise InputError("at least one point is required")
    bad = ~np.isfinite(xy).all(axis=1)
    if bad.any():
        raise InputError(f"non-finite coordinate at index {int(np.flatnonzero(bad)[0])}")

    s = np.empty((n, n), dtype=np.float64)
    for start in range(0, n, _DISTANCE_BLOCK_ROWS):
        stop = min(start + _DISTANCE_BLOCK_ROWS, n)
        diff = xy[start:stop, None, :] - xy[None, :, :]
        np.einsum("ijk,ijk->ij", diff, diff, out=s[start:stop])
    np.negative(s, out=s)
    np.fill_diagonal(s, np.nan)
    return SimilarityMatrix(s=s, preference_applied=False)


def apply_preference(m: SimilarityMatrix, q: float) -> SimilarityMatrix:
    """Set every diagonal entry to the q-quantile of the off-diagonal similarities.

    Uses linear interpolation, so q=0 gives the minimum and q=1 the
    maximum. A single-point matrix has no off-diagonal values; its
    preference is set to 0 by convention. Modifies m in place and returns it.
    """
    if m.preference_applied:
        raise ValueError("preference already applied")
    if not 0.0 <= q <= 1.0:
        raise InputError(f"q must be in [0, 1], got {q}")
    if m.n == 1:
        p = 0.0
    else:
        p = float(np.quantile(m.off_diagonal(), q))
    np.fill_diagonal(m.s, p)
    m.preference_applied = True
    return m


def set_preference(m: SimilarityMatrix, preference) -> SimilarityMatrix:
    """Set the diagonal to an explicit preference (scalar or per-point vector).

    Escape hatch for calibrated runs that bypass the quantile mapping,
    e.g. a preference strictly above the maximum off-diagonal similarity
    to force every point into its own cluster. In place, returns m.
    """
    p = np.asarray(preference, dtype=np.float64)
    if not np.isfinite(p).all():
        raise InputError("preference must be finite")
    np.fill_diagonal(m.s, p)
    m.preference_applied = True
    return m


def update_responsibilities(m: SimilarityMatrix, state: MessageState, damping: float) -> MessageState:
    """One responsibility sweep: r(i, k) = s(i, k) - max_{k' != k} {a(i, k') + s(i, k')}.

    The stored value is the damped blend damping * r_old + (1 - damping) * r_raw.
    For n = 1 there are no rival candidates and r_raw = s(1, 1). In place.
    """
    s = m.s
    r = state.r
    n = m.n
    if r.shape != s.shape or state.a.shape != s.shape:
        raise ValueError("message state shape does not match similarity matrix")
    if n == 1:
        raw = s.copy()
    else:
        cand = state.a + s
        rows = np.arange(n)
        top = cand.argmax(axis=1)
        first = cand[rows, top].copy()
        cand[rows, top] = -np.inf
        second = cand.max(axis=1)
        raw = s - first[:, None]
        raw[rows, top] = s[rows, top] - second
    r *= damping
    raw *= 1.0 - damping
    r += raw
    return state


def update_availabilities(state: MessageState, damping: float) -> MessageState:
    """One availability sweep.

    Off-diagonal: a(i, k) = min{0, r(k, k) + sum over i' not in {i, k} of
    max{0, r(i', k)}}, so availabilities never exceed zero. Diagonal:
    a(k, k) = sum over i' != k of max{0, r(i', k)}, a sum of non-negative
    support terms. Damped blend as in update_responsibilities. In place.
    """
    r = state.r
    a = state.a
    raw = np.maximum(r, 0.0)
    np.fill_diagonal(raw, r.diagonal())
    col_support = raw.sum(axis=0)
    # col_support - raw removes each recipient's own contribution from the column sum
    np.subtract(col_support[None, :], raw, out=raw)
    self_avail = raw.diagonal().copy()
    np.minimum(raw, 0.0, out=raw)
    np.fill_diagonal(raw, self_avail)
    a *= damping
    raw *= 1.0 - damping
    a += raw
    return state


def decide_exemplars(m: SimilarityMatrix, state: MessageState) -> tuple[np.ndarray, np.ndarray]:
    """Extract exemplar indices and per-point assignments from the message state.

    Point k is an exemplar when a(k, k) + r(k, k) > 0. If no point
    qualifies, the single best-scoring point is used as a fallback so a
    result always exists. Points are first partitioned by similarity to
    the chosen exemplars; then one refinement pass replaces each cluster's
    exemplar with the member of greatest summed similarity to the cluster
    and re-partitions. Ties break toward the lowest index, and exemplars
    are always assigned to themselves.
    """
    crit = state.a.diagonal() + state.r.diagonal()
    exemplars = np.flatnonzero(crit > 0)
    if exemplars.size == 0:
        exemplars = np.array([int(np.argmax(crit))], dtype=np.intp)
    labels = np.argmax(m.s[:, exemplars], axis=1)
    labels[exemplars] = np.arange(exemplars.size)
    for k in range(exemplars.size):
        members = np.flatnonzero(labels == k)
        within = m.s[np.ix_(members, members)].sum(axis=0)
        exemplars[k] = members[int(np.argmax(within))]
    exemplars.sort()
    assignment = exemplars[np.argmax(m.s[:, exemplars], axis=1)]
    assignment[exemplars] = exemplars
    return exemplars, assignment


def net_similarity(m: SimilarityMatrix, exemplars: np.ndarray, assignment: np.ndarray) -> float:
    """Sum of s(i, assignment(i)) over non-exemplars plus the preference of each exemplar.

    This is the objective the message passing approximately maximizes.
    """
    is_exemplar = np.zeros(m.n, dtype=bool)
    is_exemplar[exemplars] = True
    others = np.flatnonzero(~is_exemplar)
    value = float(m.s[others, assignment[others]].sum())
    value += float(m.preferences()[exemplars].sum())
    return value


def run_apc_on_matrix(
    m: SimilarityMatrix,
    config: ApcConfig,
    check_invariants: bool = False,
) -> ClusterResult:
    """Iterate message passing on a prepared similarity matrix until the exemplar decisions stabilize.

    Stops once the decision vector (which points satisfy a(k, k) + r(k, k) > 0)
    is unchanged for config.convergence_window consecutive iterations, or at
    config.max_iterations; the converged flag records which condition fired.
    When jitter is enabled, seeded noise is added to the off-diagonal entries
    of a working copy; exemplar refinement and net similarity always use the
    caller's clean matrix. check_invariants asserts the availability sign and
    finiteness invariants every iteration (test builds).
    """
    if not m.preference_applied:
        raise ValueError("apply a preference before running")
    n = m.n
    work = m
    if config.jitter_scale > 0:
        rng = np.random.default_rng(config.rng_seed)
        noise = rng.normal(0.0, config.jitter_scale, size=(n, n))
        np.fill_diagonal(noise, 0.0)
        work = SimilarityMatrix(s=m.s + noise, preference_applied=True)

    state = MessageState.zeros(n)
    previous = None
    stable = 0
    converged = False
    iterations = 0
    for iteration in range(1, config.max_iterations + 1):
        update_responsibilities(work, state, config.damping)
        update_availabilities(state, config.damping)
        state.iteration = iteration
        iterations = iteration
        if check_invariants:
            off = ~np.eye(n, dtype=bool)
            assert np.all(state.a[off] <= 0.0), "off-diagonal availability above zero"
            assert np.all(state.a.diagonal() >= 0.0), "negative self-availability"
            assert np.isfinite(state.r).all() and np.isfinite(state.a).all()
        decisions = (state.a.diagonal() + state.r.diagonal()) > 0
        if previous is not None and np.array_equal(decisions, previous):
            stable += 1
        else:
            stable = 0
        previous = decisions
        # The all-negative warm-up plateau is not a fixed point: under heavy
        # damping no diagonal crosses zero for many early iterations.
        if stable >= config.convergence_window and decisions.any():
            converged = True
            break

    exemplars, assignment = decide_exemplars(m, state)
    return ClusterResult(
        exemplars=[int(e) for e in exemplars],
        assignment=assignment.astype(np.int64),
        converged=converged,
        iterations_run=iterations,
        net_similarity=net_similarity(m, exemplars, assignment),
    )


def run_apc(points, config: ApcConfig, check_invariants: bool = False) -> ClusterResult:
    """Cluster planar points end to end: similarities, quantile preference, message passing.

    Deterministic given the point order, the config, and its seed.
    """
    m = build_similarity(points)
    apply_preference(m, config.q)
    return run_apc_on_matrix(m, config, check_invariants=check_invariants)
