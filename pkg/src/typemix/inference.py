"""Column-type and row-type posteriors under the PFSM mixture.

Every row of a column of type ``k`` is a draw from the type-``k`` machine, the
missing machine or the anomaly machine, with weights ``pi[k]``.  All work is
done per unique value and weighted by counts; sums over rows are in log
space.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .machines import MachineCatalog
from .pfsm import encode_strings

logger = logging.getLogger(__name__)

TYPE, MISSING, ANOMALY = 0, 1, 2
ROW_LABELS = ("type", "missing", "anomaly")

DEFAULT_PI = (0.98, 0.01, 0.01)
DEFAULT_THRESHOLD = 0.5
DEFAULT_AMBIGUITY = 0.9


class InferenceError(ValueError):
    pass


class TypeSystem:
    """Catalog of machines plus the row-type weights and column-type prior.

    Parameters
    ----------
    catalog : MachineCatalog
    pi : array_like, optional
        Shape ``(K, 3)`` or ``(3,)``; columns are (type, missing, anomaly).
        A single triple is shared by every type.
    prior : array_like, optional
        Column-type prior over the K regular types; uniform by default.
    """

    def __init__(self, catalog: MachineCatalog, pi=DEFAULT_PI, prior=None):
        k = len(catalog)
        pi = np.asarray(pi, dtype=float)
        if pi.ndim == 1:
            pi = np.tile(pi, (k, 1))
        if pi.shape != (k, 3):
            raise InferenceError(f"pi must have shape ({k}, 3), got {pi.shape}")
        if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1) > 1e-12):
            raise InferenceError("each row of pi must be a probability triple")
        if np.any(pi[:, MISSING] >= pi[:, TYPE]) or np.any(pi[:, ANOMALY] >= pi[:, TYPE]):
            raise InferenceError("pi must favour the regular type over missing and anomaly")
        prior = np.full(k, 1.0 / k) if prior is None else np.asarray(prior, dtype=float)
        if prior.shape != (k,) or np.any(prior < 0) or abs(prior.sum() - 1) > 1e-12:
            raise InferenceError("prior must be a distribution over the regular types")
        self.catalog = catalog
        self.pi = pi
        self.prior = prior
        with np.errstate(divide="ignore"):
            self.log_pi = np.log(pi)
            self.log_prior = np.log(prior)

    @property
    def names(self):
        return self.catalog.names

    def __len__(self):
        return len(self.catalog)

    def with_catalog(self, catalog):
        return TypeSystem(catalog, self.pi, self.prior)

    def machine_log_probs(self, values: Sequence[str]) -> np.ndarray:
        """Log-likelihoods, shape ``(K + 2, U)``: regular types, missing, anomaly."""
        cps, offsets = encode_strings(values)
        machines = self.catalog.all_machines()
        out = np.empty((len(machines), len(values)))
        for i, m in enumerate(machines):
            out[i] = m.log_probs_encoded(cps, offsets)
        return out

    def mixture_log_probs(self, loglik: np.ndarray) -> np.ndarray:
        """``log p(x_u | t=k)`` for every type and unique value, shape ``(K, U)``."""
        k = len(self)
        stacked = np.stack([
            self.log_pi[:, TYPE, None] + loglik[:k],
            self.log_pi[:, MISSING, None] + loglik[k][None, :],
            self.log_pi[:, ANOMALY, None] + loglik[k + 1][None, :],
        ])
        return logsumexp(stacked, axis=0)

    def row_log_joint(self, loglik: np.ndarray, k: int) -> np.ndarray:
        """``log pi_k^j + log p(x_u | j)`` for j in (k, m, a); shape ``(3, U)``."""
        n = len(self)
        return np.stack([
            self.log_pi[k, TYPE] + loglik[k],
            self.log_pi[k, MISSING] + loglik[n],
            self.log_pi[k, ANOMALY] + loglik[n + 1],
        ])


class Column:
    """Cell strings of one column with their unique values and counts.

    Unique values are kept sorted so every downstream sum runs in the same
    order whatever the row order; this makes results bit-identical under row
    permutation.
    """

    def __init__(self, raw: Sequence[str], name: str = ""):
        self.name = name
        self.raw = list(raw)
        self.uniques = sorted(set(self.raw))
        index = {v: i for i, v in enumerate(self.uniques)}
        self.inverse = np.fromiter((index[v] for v in self.raw),
                                   dtype=np.int64, count=len(self.raw))
        self.counts = np.bincount(self.inverse, minlength=len(self.uniques)).astype(float)

    def __len__(self):
        return len(self.raw)

    @property
    def max_length(self):
        return max((len(u) for u in self.uniques), default=0)

    def unique_counts(self):
        return dict(zip(self.uniques, self.counts.astype(int).tolist()))

    def __repr__(self):
        return f"Column(name={self.name!r}, N={len(self.raw)}, U={len(self.uniques)})"


@dataclass
class ColumnScores:
    loglik: np.ndarray          # (K+2, U)
    log_mixture: np.ndarray     # (K, U)
    log_joint: np.ndarray       # (K,)
    posterior: np.ndarray       # (K,)
    diagnostics: list = field(default_factory=list)


def _normalize_log(log_joint):
    finite = np.isfinite(log_joint)
    if not finite.any():
        return np.full(log_joint.shape, 1.0 / log_joint.size), False
    return np.exp(log_joint - logsumexp(log_joint)), True


def score_column(column: Column, system: TypeSystem) -> ColumnScores:
    if len(column) == 0:
        raise InferenceError("empty column")
    loglik = system.machine_log_probs(column.uniques)
    log_mix = system.mixture_log_probs(loglik)
    with np.errstate(invalid="ignore"):
        log_joint = system.log_prior + log_mix @ column.counts
    posterior, ok = _normalize_log(log_joint)
    diagnostics = [] if ok else ["every type assigns zero likelihood; posterior set uniform"]
    return ColumnScores(loglik, log_mix, log_joint, posterior, diagnostics)


def column_type_posterior(column: Column, system: TypeSystem) -> np.ndarray:
    """``p(t = k | x)`` over the K regular types."""
    return score_column(column, system).posterior


def _row_posteriors(log_rows):
    """Normalise ``(3, U)`` log weights column-wise; all-zero rows -> uniform."""
    with np.errstate(invalid="ignore"):
        norm = logsumexp(log_rows, axis=0)
        post = np.exp(log_rows - norm)
    degenerate = ~np.isfinite(norm)
    post[:, degenerate] = 1.0 / 3.0
    return post.T, degenerate


def row_type_posterior(value: str, k, system: TypeSystem) -> np.ndarray:
    """``p(z = j | t = k, x)`` for j in (type k, missing, anomaly)."""
    if isinstance(k, str):
        k = system.catalog.index(k)
    if not 0 <= k < len(system):
        raise InferenceError(f"type index {k} out of range")
    loglik = system.machine_log_probs([value])
    post, _ = _row_posteriors(system.row_log_joint(loglik, k))
    return post[0]


@dataclass
class ColumnAnnotation:
    name: str
    type_names: tuple
    type_posterior: np.ndarray
    inferred_type: str
    unique_values: list
    unique_posteriors: np.ndarray   # (U, 3): type, missing, anomaly
    row_labels: list
    ambiguous: bool
    diagnostics: list = field(default_factory=list)
    _inverse: np.ndarray = field(default=None, repr=False)

    @property
    def row_posteriors(self):
        """Per unique value: distribution over (type, missing, anomaly)."""
        return dict(zip(self.unique_values, self.unique_posteriors))

    def non_type_rows(self):
        return [i for i, lab in enumerate(self.row_labels) if lab != "type"]

    def to_dict(self):
        rows = []
        for i in self.non_type_rows():
            u = int(self._inverse[i])
            p = self.unique_posteriors[u]
            rows.append({
                "row": i,
                "value": self.unique_values[u],
                "label": self.row_labels[i],
                "posterior": {lab: float(x) for lab, x in zip(ROW_LABELS, p)},
            })
        return {
            "name": self.name,
            "inferred_type": self.inferred_type,
            "type_posterior": {n: float(p) for n, p in zip(self.type_names, self.type_posterior)},
            "ambiguous": bool(self.ambiguous),
            "row_labels": list(self.row_labels),
            "non_type_rows": rows,
            "diagnostics": list(self.diagnostics),
        }


def annotate(column: Column, system: TypeSystem, threshold: float = DEFAULT_THRESHOLD,
             ambiguity_threshold: float = DEFAULT_AMBIGUITY) -> ColumnAnnotation:
    """Infer the column type, then label each row as type, missing or anomaly.

    The column type is the posterior argmax (ties go to the earlier catalog
    entry).  A row is non-type when ``1 - p(type) >= threshold``; it is then
    labelled missing or anomaly by whichever posterior is larger (missing on
    a tie).
    """
    if not 0.0 < threshold < 1.0:
        raise InferenceError("threshold must lie in (0, 1)")
    scores = score_column(column, system)
    k = int(np.argmax(scores.posterior))
    post, degenerate = _row_posteriors(system.row_log_joint(scores.loglik, k))
    diagnostics = list(scores.diagnostics)
    if degenerate.any():
        diagnostics.append(
            f"{int(degenerate.sum())} unique values have zero likelihood under the "
            f"type, missing and anomaly machines; their row posterior is uniform")
    non_type = 1.0 - post[:, TYPE] >= threshold
    label_idx = np.where(non_type, np.where(post[:, MISSING] >= post[:, ANOMALY], MISSING, ANOMALY), TYPE)
    labels = np.array(ROW_LABELS, dtype=object)[label_idx][column.inverse].tolist()
    return ColumnAnnotation(
        name=column.name,
        type_names=system.names,
        type_posterior=scores.posterior,
        inferred_type=system.names[k],
        unique_values=column.uniques,
        unique_posteriors=post,
        row_labels=labels,
        ambiguous=bool(scores.posterior[k] < ambiguity_threshold),
        diagnostics=diagnostics,
        _inverse=column.inverse,
    )


@dataclass
class TableResult:
    annotations: list          # ColumnAnnotation or None, in column order
    errors: list               # (column index, column name, message)

    @property
    def ok(self):
        return not self.errors


def infer_table(columns: Sequence[Column], system: TypeSystem, threshold=DEFAULT_THRESHOLD,
                ambiguity_threshold=DEFAULT_AMBIGUITY, strict=False, n_jobs=1) -> TableResult:
    """Annotate each column independently; results keep column order.

    With ``strict`` the first failing column raises; otherwise failures are
    recorded in ``errors`` and their annotation slot is ``None``.
    """
    def run(col):
        try:
            return annotate(col, system, threshold, ambiguity_threshold), None
        except InferenceError as exc:
            if strict:
                raise
            return None, str(exc)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, columns))
    else:
        results = [run(c) for c in columns]
    annotations, errors = [], []
    for i, (col, (ann, err)) in enumerate(zip(columns, results)):
        annotations.append(ann)
        if err is not None:
            logger.warning("column %d (%s): %s", i, col.name, err)
            errors.append((i, col.name, err))
    return TableResult(annotations, errors)
