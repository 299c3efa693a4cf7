"""Generalization and test-retest harness.

Two procedures are provided:

* :func:`split_sample_sweep` repeatedly splits a cohort into two disjoint
  groups, estimates a precision on the first and scores it by the negative
  log-likelihood of the second group's covariance (lower is better).
* :func:`reliability_sweep` estimates one precision per scan and measures
  how much more alike the scans of one subject are than scans of different
  subjects, via ICC(C,1) of partial correlations and of network entropy.

Both iterate over a grid of (dimension, rho, alpha, method) cells and return
a :class:`ValidationReport` whose CSV/JSON renderings are byte-stable for a
fixed seed.
"""

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import NamedTuple

import numpy as np

from .analysis import NetworkSelection, partial_correlations, tsee_fast
from .errors import DegenerateInput, InvalidInput, RiccatiError
from .ingest import as_data, normalize
from .randproj import ProjectionConfig, derive_seed, gaussian_matrix, random_project
from .riccati import (
    PenaltyShape,
    densify,
    estimate,
    estimate_tikhonov,
    logdet,
    trace_product,
    trace_product_data,
)
from .shared import fit_shared, subject_precision

METHODS = ("tsvd", "rp", "tikhonov", "jsvd")


def nll(Q, C_heldout):
    """``<C, Q> - log det Q``.

    ``C_heldout`` is a dense covariance or a normalized :class:`DataMatrix`
    (then ``C = X X^T / T`` is never formed).
    """
    if isinstance(C_heldout, np.ndarray):
        tr = trace_product(Q, C_heldout)
    else:
        tr = trace_product_data(Q, C_heldout)
    return tr - logdet(Q)


def _anova(Y):
    # Y has shape (..., n, k); returns MS_R, MS_E, SS_T over the last two axes
    n, k = Y.shape[-2:]
    grand = Y.mean(axis=(-2, -1), keepdims=True)
    rows = Y.mean(axis=-1, keepdims=True)
    cols = Y.mean(axis=-2, keepdims=True)
    ss_r = k * np.sum((rows - grand) ** 2, axis=(-2, -1))
    ss_e = np.sum((Y - rows - cols + grand) ** 2, axis=(-2, -1))
    ss_t = np.sum((Y - grand) ** 2, axis=(-2, -1))
    return ss_r / (n - 1), ss_e / ((n - 1) * (k - 1)), ss_t


def _icc_from_ms(ms_r, ms_e, k, scale):
    denom = ms_r + (k - 1) * ms_e
    degenerate = denom <= 1e-12 * np.maximum(scale, np.finfo(float).tiny)
    with np.errstate(invalid="ignore", divide="ignore"):
        icc = (ms_r - ms_e) / denom
    return np.where(degenerate, np.nan, icc), degenerate


def icc_c1(ratings):
    """ICC(C,1): two-way mixed effects, consistency, single measure.

    ``(MS_R - MS_E) / (MS_R + (k-1) MS_E)`` for an (n subjects, k repetitions)
    table. Additive per-repetition offsets do not change the value.

    Raises
    ------
    DegenerateInput
        When the table has no between-subject or residual variance.
    """
    Y = np.asarray(ratings, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 2 or Y.shape[1] < 2:
        raise InvalidInput("ICC needs at least 2 subjects and 2 repetitions")
    if not np.all(np.isfinite(Y)):
        raise InvalidInput("ICC table has missing or non-finite cells")
    ms_r, ms_e, _ = _anova(Y)
    icc, degenerate = _icc_from_ms(ms_r, ms_e, Y.shape[1], np.mean(Y * Y))
    if degenerate:
        raise DegenerateInput("ratings have no between-subject or residual variance")
    return float(icc)


class EdgeIcc(NamedTuple):
    mean: float
    n_edges: int
    n_degenerate: int


def edge_icc_details(partials):
    """ICC(C,1) of every upper-triangle edge of (K subjects, R reps, n, n) matrices."""
    P = np.asarray(partials, dtype=np.float64)
    if P.ndim != 4 or P.shape[2] != P.shape[3]:
        raise InvalidInput("partials must have shape (subjects, repetitions, n, n)")
    K, R, n, _ = P.shape
    if K < 2 or R < 2:
        raise InvalidInput("edge ICC needs at least 2 subjects and 2 repetitions")
    iu, ju = np.triu_indices(n, k=1)
    if iu.size == 0:
        raise InvalidInput("matrices have no off-diagonal edges")
    Y = np.moveaxis(P[:, :, iu, ju], -1, 0)  # (edges, K, R)
    ms_r, ms_e, _ = _anova(Y)
    icc, degenerate = _icc_from_ms(ms_r, ms_e, R, np.mean(Y * Y, axis=(1, 2)))
    if np.all(degenerate):
        raise DegenerateInput("every edge is degenerate")
    return EdgeIcc(float(np.mean(icc[~degenerate])), int(iu.size), int(degenerate.sum()))


def edge_icc(partials):
    """Mean ICC(C,1) over upper-triangle edges; degenerate edges are skipped."""
    return edge_icc_details(partials).mean


@dataclass(frozen=True)
class SplitPlan:
    n_repetitions: int
    group_size: int
    seed: int = 0

    def __post_init__(self):
        if self.n_repetitions < 1:
            raise InvalidInput("need at least one repetition")
        if self.group_size < 2:
            raise InvalidInput("group size must be at least 2")

    def split(self, n_subjects, repetition):
        """Two disjoint index arrays for one repetition.

        The permutation is the stable argsort of documented uniform draws
        (see :func:`randproj.gaussian_matrix`), so it is platform-stable.
        """
        if n_subjects < 2 * self.group_size:
            raise InvalidInput(f"cohort of {n_subjects} cannot supply two groups of {self.group_size}")
        keys = gaussian_matrix(derive_seed(self.seed, repetition), (n_subjects,))
        perm = np.argsort(keys, kind="stable")
        g = self.group_size
        return np.sort(perm[:g]), np.sort(perm[g : 2 * g])


@dataclass(frozen=True)
class SweepGrid:
    """Grid axes. A dimension of ``None`` means no truncation ("full")."""

    dimensions: tuple = (None,)
    rhos: tuple = (1.0,)
    alphas: tuple = (1.0,)
    methods: tuple = ("rp",)
    power_iterations: int = 3
    network: NetworkSelection | None = None

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise InvalidInput(f"unknown method {m!r}; choose from {METHODS}")
        for d in self.dimensions:
            if d is not None and d < 1:
                raise InvalidInput("dimensions must be positive or None")
        for r in self.rhos:
            if not r > 0:
                raise InvalidInput("rho values must be positive")
        for a in self.alphas:
            if not a > 0:
                raise InvalidInput("alpha values must be positive")
            if a != 1.0 and self.network is None:
                raise InvalidInput("alpha != 1 needs a network of interest")

    def cells(self):
        return list(product(self.methods, self.dimensions, self.rhos, self.alphas))

    def penalty(self, n_nodes, rho, alpha):
        if alpha == 1.0 or self.network is None:
            return PenaltyShape.identity(rho)
        return PenaltyShape.roi(n_nodes, self.network.check(n_nodes), alpha, rho)


class Record(NamedTuple):
    dimension: object
    rho: float
    alpha: float
    method: str
    metric: str
    value: float
    repetition: int
    status: str = "ok"


def _fmt(x):
    if x is None:
        return "full"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


@dataclass
class ValidationReport:
    records: list = field(default_factory=list)

    CSV_COLUMNS = ("dimension", "rho", "alpha", "method", "metric", "value", "repetition", "status")

    def values(self, metric=None, **cell):
        """Successful values matching ``metric`` and the given cell coordinates."""
        out = []
        for r in self.records:
            if r.status != "ok" or (metric is not None and r.metric != metric):
                continue
            if all(getattr(r, k) == v for k, v in cell.items()):
                out.append(r.value)
        return np.array(out)

    def failures(self):
        return [r for r in self.records if r.status != "ok"]

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(self.CSV_COLUMNS) + "\n")
        for r in self.records:
            value = "" if r.status != "ok" else _fmt(float(r.value))
            status = r.status.replace(",", ";").replace("\n", " ")
            buf.write(
                ",".join(
                    [_fmt(r.dimension), _fmt(float(r.rho)), _fmt(float(r.alpha)), r.method, r.metric, value, str(r.repetition), status]
                )
                + "\n"
            )
        return buf.getvalue()

    def summary(self):
        cells = {}
        for r in self.records:
            key = (r.method, _fmt(r.dimension), float(r.rho), float(r.alpha), r.metric)
            cell = cells.setdefault(key, {"values": [], "failed": 0})
            if r.status == "ok":
                cell["values"].append(float(r.value))
            else:
                cell["failed"] += 1
        out = []
        for (method, dim, rho, alpha, metric), cell in cells.items():
            vals = np.array(cell["values"])
            out.append(
                {
                    "method": method,
                    "dimension": dim,
                    "rho": rho,
                    "alpha": alpha,
                    "metric": metric,
                    "count": int(vals.size),
                    "failed": cell["failed"],
                    "mean": float(vals.mean()) if vals.size else None,
                    "std": float(vals.std()) if vals.size else None,
                }
            )
        return {"cells": out}

    def to_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def _concat_normalized(subjects, idx):
    return normalize(np.hstack([as_data(subjects[i]).values for i in idx]))


def _cell_precision(X, method, dimension, penalty, power_iterations, seed):
    if method == "tikhonov":
        return estimate_tikhonov(X, penalty.rho, rank=dimension)
    if method == "tsvd":
        return estimate(X, penalty, rank=dimension)
    if method == "rp":
        if dimension is None:
            return estimate(X, penalty)
        Y, _ = random_project(X, ProjectionConfig(dimension, power_iterations, seed))
        return estimate(Y, penalty)
    raise InvalidInput(f"method {method!r} is not available here")


def split_sample_sweep(cohort, plan, grid, jobs=1):
    """Held-out negative log-likelihood over ``plan.n_repetitions`` random splits.

    Parameters
    ----------
    cohort : sequence of array_like or DataMatrix
        One (N, T_k) raw matrix per subject (T_k may be 1).
    plan : SplitPlan
    grid : SweepGrid
        ``"jsvd"`` is not a split-sample method and is rejected.
    jobs : int
        Worker threads; results do not depend on it.
    """
    if not cohort:
        raise InvalidInput("empty cohort")
    if "jsvd" in grid.methods:
        raise InvalidInput("jsvd is only available in reliability sweeps")
    n_nodes = as_data(cohort[0]).n_signals
    cells = grid.cells()
    splits = [plan.split(len(cohort), rep) for rep in range(plan.n_repetitions)]

    def run(rep):
        g1, g2 = splits[rep]
        X1 = _concat_normalized(cohort, g1)
        X2 = _concat_normalized(cohort, g2)
        rows = []
        for ci, (method, dim, rho, alpha) in enumerate(cells):
            try:
                penalty = grid.penalty(n_nodes, rho, alpha)
                Q = _cell_precision(X1, method, dim, penalty, grid.power_iterations, derive_seed(plan.seed, rep, ci))
                rows.append(Record(dim, rho, alpha, method, "nll", nll(Q, X2), rep))
            except RiccatiError as exc:
                rows.append(Record(dim, rho, alpha, method, "nll", math.nan, rep, f"failed: {exc}"))
        return rows

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        per_rep = list(pool.map(run, range(plan.n_repetitions)))
    # order records by cell, then repetition
    records = [per_rep[rep][ci] for ci in range(len(cells)) for rep in range(plan.n_repetitions)]
    return ValidationReport(records)


def _scan_precisions(scans, method, dim, penalty, power_iterations, seed):
    flat = [normalize(x) for subject in scans for x in subject]
    if method == "jsvd":
        width = min(x.values.shape[1] for x in flat)
        m = min(flat[0].n_signals, width) if dim is None else dim
        model = fit_shared(flat, m, penalty)
        return [subject_precision(model, i) for i in range(len(flat))]
    return [
        _cell_precision(x, method, dim, penalty, power_iterations, derive_seed(seed, i))
        for i, x in enumerate(flat)
    ]


def reliability_sweep(scans, grid, seed=0, metrics=("edge_icc", "tsee_icc"), jobs=1):
    """Test-retest reliability of per-scan biomarkers over a grid.

    Parameters
    ----------
    scans : sequence of sequences
        ``scans[k][r]`` is the raw (N, T) matrix of repetition ``r`` of
        subject ``k``; every subject needs the same number of repetitions.
    metrics : iterable of {"edge_icc", "tsee_icc", "retest_nll"}
        ``tsee_icc`` needs ``grid.network``. ``retest_nll`` fits on the first
        half of each subject's scans and scores the second half; it yields one
        value per subject (stored in the ``repetition`` column).
    """
    K = len(scans)
    if K < 2:
        raise InvalidInput("need at least two subjects")
    R = len(scans[0])
    if any(len(s) != R for s in scans) or R < 2:
        raise InvalidInput("every subject needs the same number (>= 2) of repetitions")
    if "tsee_icc" in metrics and grid.network is None:
        raise InvalidInput("tsee_icc needs a network of interest")
    n_nodes = as_data(scans[0][0]).n_signals
    cells = grid.cells()

    def run(ci):
        method, dim, rho, alpha = cells[ci]
        rows = []
        cell_seed = derive_seed(seed, ci)
        try:
            penalty = grid.penalty(n_nodes, rho, alpha)
            need_scans = any(m in metrics for m in ("edge_icc", "tsee_icc"))
            Qs = _scan_precisions(scans, method, dim, penalty, grid.power_iterations, cell_seed) if need_scans else []
        except RiccatiError as exc:
            return [Record(dim, rho, alpha, method, m, math.nan, 0, f"failed: {exc}") for m in metrics]
        for metric in metrics:
            try:
                if metric == "edge_icc":
                    P = np.array([partial_correlations(densify(Q)) for Q in Qs]).reshape(K, R, n_nodes, n_nodes)
                    rows.append(Record(dim, rho, alpha, method, metric, edge_icc(P), 0))
                elif metric == "tsee_icc":
                    ratings = np.array([tsee_fast(Q, grid.network) for Q in Qs]).reshape(K, R)
                    rows.append(Record(dim, rho, alpha, method, metric, icc_c1(ratings), 0))
                elif metric == "retest_nll":
                    for k, value in enumerate(_retest_nll(scans, method, dim, penalty, grid.power_iterations, cell_seed)):
                        rows.append(Record(dim, rho, alpha, method, metric, value, k))
                else:
                    raise InvalidInput(f"unknown metric {metric!r}")
            except RiccatiError as exc:
                rows.append(Record(dim, rho, alpha, method, metric, math.nan, 0, f"failed: {exc}"))
        return rows

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        per_cell = list(pool.map(run, range(len(cells))))
    return ValidationReport([r for rows in per_cell for r in rows])


def _retest_nll(scans, method, dim, penalty, power_iterations, seed):
    half = len(scans[0]) // 2
    first = [normalize(np.hstack([as_data(x).values for x in s[:half]])) for s in scans]
    second = [normalize(np.hstack([as_data(x).values for x in s[half:]])) for s in scans]
    if method == "jsvd":
        width = min(x.values.shape[1] for x in first)
        m = min(first[0].n_signals, width) if dim is None else dim
        model = fit_shared(first, m, penalty)
        Qs = [subject_precision(model, k) for k in range(len(first))]
    else:
        Qs = [
            _cell_precision(x, method, dim, penalty, power_iterations, derive_seed(seed, 1, k))
            for k, x in enumerate(first)
        ]
    return [nll(Q, X2) for Q, X2 in zip(Qs, second)]
