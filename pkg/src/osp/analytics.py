"""In-database analytics: one-way ANOVA, OLS, logistic regression, k-means,
plus the FIFO job scheduler that runs them next to stored data.

Numerical choices: the ANOVA p-value comes from the F survival function
evaluated through the regularized incomplete beta function (continued
fraction, relative tolerance 1e-12), so no external statistics package is
needed at runtime.  OLS solves through a QR factorization with rank
detection at 1e-10 times the largest column norm.  Logistic regression is
iteratively reweighted least squares, converged at max |delta beta| <
1e-8 within 100 iterations; a coefficient norm above 1e6 flags
quasi-complete separation.  k-means uses k-means++ seeding driven by the
pinned SplitMix64 generator, Lloyd iterations with ties broken toward the
lowest centroid index, and empty clusters re-seeded with the farthest
point.
"""

from __future__ import annotations

import json
import math
import queue
import threading
import time
from dataclasses import dataclass, field
from itertools import count

import numpy as np

from .errors import (
    KTooLarge,
    NoConvergence,
    OspError,
    RankDeficient,
    Separation,
    UnknownJob,
)
from .prng import SplitMix64

# --- special functions -----------------------------------------------------------

_BETA_TOL = 1e-12
_BETA_MAX_ITER = 500


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_TOL:
            return h
    raise NoConvergence("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_survival(f: float, d1: float, d2: float) -> float:
    """P(F >= f) for the F distribution with (d1, d2) degrees of freedom."""
    if math.isinf(f):
        return 0.0
    if f <= 0.0:
        return 1.0
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


# --- one-way ANOVA ------------------------------------------------------------------

@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    df_between: int
    df_within: int
    p_value: float
    degenerate_within: bool = False

    def as_dict(self) -> dict:
        return {
            "f_statistic": self.f_statistic,
            "df_between": self.df_between,
            "df_within": self.df_within,
            "p_value": self.p_value,
            "degenerate_within": self.degenerate_within,
        }


def anova_oneway(groups) -> AnovaResult:
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(g.size == 0 for g in groups):
        raise ValueError("need at least two non-empty groups")
    n = sum(g.size for g in groups)
    k = len(groups)
    if n <= k:
        raise ValueError("need more observations than groups")
    grand = sum(g.sum() for g in groups) / n
    ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    df_between, df_within = k - 1, n - k
    if ss_within == 0.0:
        if ss_between == 0.0:
            # All values identical in every group: no variation at all.
            return AnovaResult(0.0, df_between, df_within, 1.0, True)
        return AnovaResult(math.inf, df_between, df_within, 0.0, True)
    f = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(f, df_between, df_within, f_survival(f, df_between, df_within))


# --- ordinary least squares -----------------------------------------------------------

@dataclass(frozen=True)
class OlsResult:
    coefficients: tuple[float, ...]
    residual_variance: float
    r_squared: float

    def as_dict(self) -> dict:
        return {
            "coefficients": list(self.coefficients),
            "residual_variance": self.residual_variance,
            "r_squared": self.r_squared,
        }


_RANK_TOL = 1e-10


def ols(X, y) -> OlsResult:
    """Least squares through QR; X already carries its intercept column."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValueError("need more rows than predictors")
    q, r = np.linalg.qr(X)
    tol = _RANK_TOL * max(np.linalg.norm(X, axis=0).max(), 1e-300)
    if np.abs(np.diag(r)).min() < tol:
        raise RankDeficient("design matrix is rank deficient", tolerance=tol)
    beta = np.linalg.solve(r, q.T @ y)
    residuals = y - X @ beta
    ss_res = float(residuals @ residuals)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else (1.0 if ss_res == 0.0 else 0.0)
    return OlsResult(tuple(beta.tolist()), ss_res / (n - p), r2)


# --- logistic regression -----------------------------------------------------------------

@dataclass(frozen=True)
class LogisticResult:
    coefficients: tuple[float, ...]
    iterations: int

    def as_dict(self) -> dict:
        return {"coefficients": list(self.coefficients), "iterations": self.iterations}


_LOGIT_TOL = 1e-8
_LOGIT_MAX_ITER = 100
_SEPARATION_NORM = 1e6


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logistic(X, y, tol: float = _LOGIT_TOL, max_iter: int = _LOGIT_MAX_ITER) -> LogisticResult:
    """Maximum likelihood for binary outcomes via IRLS.

    Under (quasi-)complete separation the likelihood has no maximum and
    the iterates diverge; the weights of saturated misclassified rows
    underflow and the coefficient norm blows up, tripping the separation
    check.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValueError("need more rows than predictors")
    if not (np.any(y == 0.0) and np.any(y == 1.0)) or not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("outcomes must be 0/1 with both classes present")
    beta = np.zeros(p)
    for iteration in range(1, max_iter + 1):
        eta = X @ beta
        prob = _sigmoid(eta)
        w = np.maximum(prob * (1.0 - prob), 1e-300)
        with np.errstate(over="ignore", invalid="ignore"):
            z = eta + (y - prob) / w
            wx = X * w[:, None]
            try:
                new_beta = np.linalg.solve(X.T @ wx, wx.T @ z)
            except np.linalg.LinAlgError:
                raise RankDeficient("weighted design matrix is singular") from None
        norm = float(np.linalg.norm(new_beta))
        if not math.isfinite(norm) or norm > _SEPARATION_NORM:
            raise Separation("coefficients diverged; data are (quasi-)separated")
        if np.abs(new_beta - beta).max() < tol:
            return LogisticResult(tuple(new_beta.tolist()), iteration)
        beta = new_beta
    raise NoConvergence(f"IRLS did not converge in {max_iter} iterations")


# --- k-means ----------------------------------------------------------------------------

@dataclass(frozen=True)
class KMeansResult:
    centroids: tuple[tuple[float, ...], ...]
    assignments: tuple[int, ...]
    inertia: float
    iterations: int
    inertia_trace: tuple[float, ...] = ()

    def as_dict(self) -> dict:
        return {
            "centroids": [list(c) for c in self.centroids],
            "assignments": list(self.assignments),
            "inertia": self.inertia,
            "iterations": self.iterations,
        }


def _kmeans_pp_init(points: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.below(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = rng.below(n)
        else:
            r = rng.unit() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(points, k: int, seed: int, max_iter: int = 100) -> KMeansResult:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} outside 1..{n}")
    rng = SplitMix64(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    assignments = np.full(n, -1, dtype=int)
    trace = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)          # argmin breaks ties toward low index
        # Re-seed empty clusters with the point farthest from its centroid.
        for j in range(k):
            if not (new_assign == j).any():
                assigned_d2 = d2[np.arange(n), new_assign]
                far = int(assigned_d2.argmax())
                centroids[j] = points[far]
                new_assign[far] = j
                d2[:, j] = ((points - centroids[j]) ** 2).sum(axis=1)
        inertia = float(d2[np.arange(n), new_assign].sum())
        if trace and inertia > trace[-1] + 1e-9 * max(1.0, trace[-1]):
            raise AssertionError("k-means inertia increased between iterations")
        trace.append(inertia)
        if (new_assign == assignments).all():
            break
        assignments = new_assign
        for j in range(k):
            centroids[j] = points[assignments == j].mean(axis=0)
    return KMeansResult(
        tuple(tuple(c) for c in centroids.tolist()),
        tuple(int(a) for a in assignments.tolist()),
        trace[-1],
        iterations,
        tuple(trace),
    )


# --- result rendering ----------------------------------------------------------------------

def render_value(v) -> str:
    """Serialize one scalar with 17 significant digits for floats."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if v != v:
            return "null"
        if math.isinf(v):
            return '"Infinity"' if v > 0 else '"-Infinity"'
        return format(v, ".17g")
    if isinstance(v, int):
        return str(v)
    if v is None:
        return "null"
    return json.dumps(v, ensure_ascii=False)


def render_result_json(obj) -> str:
    """JSON text with floats at 17 significant digits."""
    if isinstance(obj, dict):
        items = ",".join(f"{render_result_json(k)}:{render_result_json(v)}"
                         for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(render_result_json(v) for v in obj) + "]"
    return render_value(obj)


# --- job scheduler ----------------------------------------------------------------------------

JOB_KINDS = ("anova", "ols", "logistic", "kmeans")

QUEUED, RUNNING, DONE, FAILED = "queued", "running", "done", "failed"


@dataclass
class AnalyticsJob:
    job_id: str
    kind: str
    dataset: tuple[str, str, int]
    parameters: dict
    submitted_by: str
    state: str = QUEUED
    result: dict | None = None
    error: dict | None = None
    submitted_at: float = field(default_factory=time.time)
    finished_at: float | None = None


class JobScheduler:
    """Bounded worker pool draining a FIFO queue.

    Jobs are isolated: the runner receives the job spec and returns a
    result dict; shared state stays inside the repository the runner
    closes over.
    """

    def __init__(self, runner, workers: int = 2):
        self._runner = runner
        self._queue: queue.Queue = queue.Queue()
        self._jobs: dict[str, AnalyticsJob] = {}
        self._lock = threading.Lock()
        self._done = threading.Condition(self._lock)
        self._serial = count(1)
        self._workers = [
            threading.Thread(target=self._work, daemon=True, name=f"osp-job-{i}")
            for i in range(workers)
        ]
        for t in self._workers:
            t.start()

    def submit(self, kind: str, dataset, parameters: dict, principal: str) -> AnalyticsJob:
        if kind not in JOB_KINDS:
            raise ValueError(f"unknown job kind {kind!r}", )
        job = AnalyticsJob(f"job-{next(self._serial)}", kind, tuple(dataset),
                           dict(parameters), principal)
        with self._lock:
            self._jobs[job.job_id] = job
        self._queue.put(job.job_id)
        return job

    def get(self, job_id: str) -> AnalyticsJob:
        with self._lock:
            try:
                return self._jobs[job_id]
            except KeyError:
                raise UnknownJob(f"no job {job_id!r}") from None

    def wait(self, job_id: str, timeout: float = 30.0) -> AnalyticsJob:
        deadline = time.monotonic() + timeout
        with self._done:
            while True:
                job = self._jobs.get(job_id)
                if job is None:
                    raise UnknownJob(f"no job {job_id!r}")
                if job.state in (DONE, FAILED):
                    return job
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(f"job {job_id} still {job.state}")
                self._done.wait(remaining)

    def _work(self):
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            with self._lock:
                job = self._jobs[job_id]
                job.state = RUNNING
            try:
                result = self._runner(job)
                with self._done:
                    job.result = result
                    job.state = DONE
                    job.finished_at = time.time()
                    self._done.notify_all()
            except OspError as exc:
                with self._done:
                    job.error = {"code": exc.code, "message": exc.message}
                    job.state = FAILED
                    job.finished_at = time.time()
                    self._done.notify_all()
            except Exception as exc:                      # noqa: BLE001
                with self._done:
                    job.error = {"code": "InternalError", "message": str(exc)}
                    job.state = FAILED
                    job.finished_at = time.time()
                    self._done.notify_all()

    def stop(self):
        for _ in self._workers:
            self._queue.put(None)
        for t in self._workers:
            t.join(timeout=5)
