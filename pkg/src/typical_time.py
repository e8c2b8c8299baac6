"""Escape probabilities along a path and the typical-time functionals.

For a simple path ``gamma`` of length ``n`` and ``0 <= i < n``,

    A_i(gamma) = sum_{k=1}^{n} (1/k) * Esc_k(gamma^i)^2,

where ``Esc_k(eta)`` is the probability that a ``k``-step walk from the tip of
``eta`` avoids the rest of ``eta``. ``T~(gamma) = sum_i A_i(gamma)`` is a proxy
for the typical time of ``gamma``, which is estimated directly by rejection
sampling in :func:`typical_time_mc`.

Escape probabilities are computed exactly by propagating the killed walk's
distribution on a box when the box fits in ``EXACT_ESCAPE_MAX_CELLS`` cells,
and by Monte Carlo otherwise.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

import lattice
import paths
from settings import config

logger = logging.getLogger(__name__)

EXACT_ESCAPE_MAX_CELLS = config("EXACT_ESCAPE_MAX_CELLS")
REJECTION_CUTOFF = config("REJECTION_CUTOFF")

# Walk positions held in memory at once by the Monte Carlo escape estimator
MC_BATCH_POSITIONS = 2**22
MAX_TYPICAL_TIME_LENGTH = 6


class RejectionSamplingError(RuntimeError):
    """No walk was accepted; carries the diagnostics of the attempt."""

    def __init__(self, message, trials, rejected, leaked):
        super().__init__(message)
        self.trials = trials
        self.rejected = rejected
        self.leaked = leaked


########################################################################################
## Escape probabilities
########################################################################################


@dataclass(frozen=True)
class EscapeCurve:
    """``Esc_k`` for ``k = 0..k_max`` with standard errors (zero when exact)."""

    values: np.ndarray
    std_errors: np.ndarray
    squares: np.ndarray
    method: str
    trials: int = 0


def _exact_curve(tip, forbidden, k_max):
    d = tip.size
    side = 2 * k_max + 1
    shape = (side,) * d
    killed = np.zeros(shape, dtype=bool)
    if forbidden.shape[0]:
        rel = forbidden - tip + k_max
        near = np.all((rel >= 0) & (rel < side), axis=1)
        killed[tuple(rel[near].T)] = True
    mass = np.zeros(shape)
    mass[(k_max,) * d] = 1.0
    values = [1.0]
    for _ in range(k_max):
        spread = np.zeros(shape)
        for axis in range(d):
            spread += np.roll(mass, 1, axis=axis) + np.roll(mass, -1, axis=axis)
        mass = spread / (2 * d)
        mass[killed] = 0.0
        values.append(float(mass.sum()))
    values = np.minimum(np.asarray(values), 1.0)
    return EscapeCurve(values, np.zeros(k_max + 1), values**2, "exact")


def _mc_curve(tip, forbidden, k_max, trials, seed):
    d = tip.size
    mask = lattice.SiteMask(forbidden, d=d)
    first_hit = np.full(trials, np.iinfo(np.int64).max, dtype=np.int64)
    batch = max(1, MC_BATCH_POSITIONS // max(1, k_max))
    rng = seed.generator()
    for lo in range(0, trials, batch):
        size = min(batch, trials - lo)
        incs = lattice.srw_increments(rng, d, (size, k_max))
        pos = tip + np.cumsum(incs, axis=1)
        hits = mask.hits(pos.reshape(-1, d)).reshape(size, k_max)
        any_hit = hits.any(axis=1)
        first_hit[lo : lo + size][any_hit] = np.argmax(hits[any_hit], axis=1) + 1
    survivors = np.array([(first_hit > k).sum() for k in range(k_max + 1)], dtype=float)
    values = survivors / trials
    errors = np.sqrt(values * (1 - values) / trials)
    if trials > 1:
        squares = survivors * (survivors - 1) / (trials * (trials - 1))
    else:
        squares = values**2
    return EscapeCurve(values, errors, squares, "mc", trials)


def escape_curve(eta, k_max, trials=4000, seed=0, method="auto"):
    """``Esc_k(eta)`` for ``k = 0..k_max``.

    ``method`` is ``"exact"``, ``"mc"`` or ``"auto"`` (exact whenever the
    ``(2 k_max + 1)^d`` box fits ``EXACT_ESCAPE_MAX_CELLS``). The Monte Carlo
    curve also carries the unbiased estimate ``X(X-1) / (T(T-1))`` of ``Esc_k^2``.
    """
    if method not in ("auto", "exact", "mc"):
        raise ValueError(f"unknown escape method {method!r}")
    if k_max < 0:
        raise ValueError("k must be nonnegative")
    pts = eta.points
    tip = pts[-1]
    forbidden = pts[:-1]
    d = eta.d
    if forbidden.shape[0] == 0:
        ones = np.ones(k_max + 1)
        return EscapeCurve(ones, np.zeros(k_max + 1), ones, "exact")
    cells = (2 * k_max + 1) ** d
    if method == "exact" or (method == "auto" and cells <= EXACT_ESCAPE_MAX_CELLS):
        if cells > EXACT_ESCAPE_MAX_CELLS:
            raise ValueError(f"exact propagation needs {cells} cells > {EXACT_ESCAPE_MAX_CELLS}")
        return _exact_curve(tip, forbidden, k_max)
    return _mc_curve(tip, forbidden, k_max, trials, lattice.as_seed(seed))


@dataclass(frozen=True)
class EscapeEstimate:
    value: float
    std_error: float
    method: str


def escape_probability(eta, k, trials=4000, seed=0, method="auto"):
    """``Esc_k(eta)``: probability that ``k`` steps from the tip of ``eta`` avoid
    its earlier points.

    Examples
    --------
    >>> line = paths.Path([(i, 0, 0, 0) for i in range(3)])
    >>> escape_probability(line, 1).value
    0.875
    """
    curve = escape_curve(eta, k, trials, seed, method)
    return EscapeEstimate(float(curve.values[k]), float(curve.std_errors[k]), curve.method)


########################################################################################
## A_i and T~
########################################################################################


@dataclass(frozen=True, eq=False)
class EscapeProfile:
    """Per-prefix escape data of a path.

    ``escape[i, k - 1]`` is ``Esc_k(gamma^i)`` for ``k = 1..n``.
    """

    path: paths.Path
    A: np.ndarray
    escape: np.ndarray
    methods: list = field(default_factory=list)
    trials: int = 0

    @property
    def n(self):
        return self.path.length

    @property
    def t_tilde(self):
        return float(self.A.sum())

    @property
    def harmonic_bound(self):
        return float(np.sum(1.0 / np.arange(1, self.n + 1)))

    def to_frame(self):
        n = self.n
        i, k = np.meshgrid(np.arange(n), np.arange(1, n + 1), indexing="ij")
        return pd.DataFrame(
            {
                "i": i.ravel(),
                "k": k.ravel(),
                "value": self.escape.ravel(),
                "method": np.repeat(np.asarray(self.methods, dtype=object), n),
            }
        )


def t_tilde(gamma, trials=4000, seed=0, method="auto"):
    """``T~(gamma) = sum_{i < n} A_i(gamma)`` together with its profile.

    The prefix ``gamma^0`` has nothing behind its tip, so ``Esc = 1`` and
    ``A_0`` is the harmonic number ``H_n``.
    """
    if not gamma.is_simple():
        raise ValueError("t_tilde needs a simple path")
    n = gamma.length
    if n < 1:
        raise ValueError("t_tilde needs a path with at least one step")
    seed = lattice.as_seed(seed)
    weights = 1.0 / np.arange(1, n + 1)
    A = np.empty(n)
    escape = np.empty((n, n))
    methods = []
    for i in range(n):
        curve = escape_curve(gamma.prefix(i), n, trials, seed.child(i), method)
        escape[i] = curve.values[1:]
        A[i] = float(np.sum(weights * curve.squares[1:]))
        methods.append(curve.method)
    profile = EscapeProfile(path=gamma, A=A, escape=escape, methods=methods, trials=trials)
    return profile.t_tilde, profile


def is_delta_good(profile, delta):
    """``sum_i A_i 1(A_i >= (log n)^{1/3 + delta}) <= delta n``, natural log."""
    n = profile.n
    if n < 2:
        raise ValueError("delta-goodness needs n >= 2")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    threshold = math.log(n) ** (1.0 / 3.0 + delta)
    flagged = profile.A[profile.A >= threshold]
    return bool(flagged.sum() <= delta * n)


########################################################################################
## Rejection sampling of the typical time
########################################################################################


@dataclass(frozen=True, eq=False)
class TypicalTimeResult:
    t_hat: float
    acceptance_rate: float
    loop_length_samples: np.ndarray
    hitting_times: np.ndarray
    increments: list
    accepted: int
    rejected: int
    leaked: int
    trials: int


def _as_site_set(sites):
    return {tuple(int(c) for c in s) for s in sites}


def typical_time_mc(gamma, A=None, B=None, trials=10_000, seed=0, cutoff=REJECTION_CUTOFF):
    """Rejection-sampling estimate of the ``(A, B)``-typical time of ``gamma``.

    Walks start at ``gamma``'s first point and run until they enter
    ``A cup B``. A walk is accepted when it enters ``A`` and its loop-erasure
    is ``gamma``; its sample is ``sum_i min(ell_i - ell_{i-1}, n)``. Walks
    still running after ``cutoff`` steps are tallied as leaked. ``A``
    defaults to ``{gamma's last point}`` and ``B`` to the empty set.
    """
    n = gamma.length
    if n > MAX_TYPICAL_TIME_LENGTH:
        raise ValueError(f"rejection sampling is limited to paths of length <= {MAX_TYPICAL_TIME_LENGTH}")
    if not gamma.is_simple():
        raise ValueError("typical_time_mc needs a simple path")
    A = {gamma.end} if A is None else _as_site_set(A)
    B = set() if B is None else _as_site_set(B)
    if A & B:
        raise ValueError("A and B must be disjoint")
    if gamma.end not in A:
        raise ValueError("gamma must end in A")
    if any(p in B for p in gamma):
        raise ValueError("gamma must avoid B")

    seed = lattice.as_seed(seed)
    absorbing = lattice.SiteMask(sorted(A | B), d=gamma.d)
    samples, hitting, increments = [], [], []
    rejected = leaked = 0
    for t in range(trials):
        pts, absorbed = lattice.walk_positions_until(
            gamma.start, absorbing, seed.generator(t), cutoff, include_start=True
        )
        if not absorbed:
            leaked += 1
            continue
        if tuple(int(c) for c in pts[-1]) not in A:
            rejected += 1
            continue
        record = paths.erase_loops(paths.Path(pts, validate=False))
        if record.erased != gamma:
            rejected += 1
            continue
        steps = np.diff(record.ell)
        increments.append(steps)
        samples.append(int(np.minimum(steps, n).sum()))
        hitting.append(pts.shape[0] - 1)

    accepted = len(samples)
    logger.info(
        "typical time: %d accepted, %d rejected, %d leaked of %d", accepted, rejected, leaked, trials
    )
    if accepted == 0:
        raise RejectionSamplingError(
            f"no accepted walks in {trials} trials ({rejected} rejected, {leaked} leaked)",
            trials=trials,
            rejected=rejected,
            leaked=leaked,
        )
    samples = np.asarray(samples, dtype=float)
    return TypicalTimeResult(
        t_hat=float(samples.mean()),
        acceptance_rate=accepted / trials,
        loop_length_samples=samples,
        hitting_times=np.asarray(hitting, dtype=np.int64),
        increments=increments,
        accepted=accepted,
        rejected=rejected,
        leaked=leaked,
        trials=trials,
    )


def concentration_profile(result, length, lambdas=(1, 2, 4, 8)):
    """Empirical ``P(|tau_A - T_hat| > lambda * length)`` over accepted walks.

    ``C`` is the smallest constant with ``tail <= C / lambda`` on the grid, and
    ``bound`` is ``3 C / lambda``.
    """
    tau = result.hitting_times.astype(float)
    lambdas = np.asarray(lambdas, dtype=float)
    tails = np.array([np.mean(np.abs(tau - result.t_hat) > lam * length) for lam in lambdas])
    C = float(np.max(lambdas * tails))
    return pd.DataFrame({"lam": lambdas, "tail": tails, "C": C, "bound": 3 * C / lambdas})
