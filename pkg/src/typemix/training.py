"""Discriminative training of the regular-type machines.

The objective is ``sum_j log p(t_j | x_j)`` over labelled columns.  For the
machine of type ``tau`` and a column labelled ``k``::

    d log p(k | x) / d theta_tau
        = ([tau == k] - p(tau | x)) * sum_i r_i(tau) * d log p(x_i | tau) / d theta_tau

where ``r_i(tau)`` is the posterior that row ``i`` was emitted by the type
component (rather than missing/anomaly) given column type ``tau``.  The
per-string derivative comes from forward-backward expected counts; through
the softmax it becomes ``E[n(option)] - p(option) * E[n(row)]``.

Missing and anomaly machines are never updated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .inference import ANOMALY, MISSING, TYPE, Column, TypeSystem
from .machines import CatalogError
from .pfsm import OracleLimitError, encode_strings, validate

logger = logging.getLogger(__name__)

PARAM_KINDS = ("init", "final", "trans")


class TrainingError(ValueError):
    pass


class TrainingBatch:
    """Labelled columns with their pooled unique values."""

    def __init__(self, columns: Sequence[Column], labels: Sequence[str]):
        if len(columns) != len(labels):
            raise TrainingError("one label per column is required")
        self.columns = list(columns)
        self.labels = list(labels)
        pool = {}
        self._members = []
        for col in self.columns:
            idx = np.fromiter((pool.setdefault(v, len(pool)) for v in col.uniques),
                              dtype=np.int64, count=len(col.uniques))
            self._members.append((idx, col.counts))
        self.values = list(pool)
        self.codepoints, self.offsets = encode_strings(self.values)
        self.objective_value = None

    def __len__(self):
        return len(self.columns)

    def label_indices(self, system):
        try:
            return [system.catalog.index(lab) for lab in self.labels]
        except CatalogError as exc:
            raise TrainingError(f"label not in catalog: {exc}") from None

    def count_matrix(self):
        """Dense ``(columns, pooled uniques)`` count matrix."""
        out = np.zeros((len(self.columns), len(self.values)))
        for j, (idx, counts) in enumerate(self._members):
            out[j, idx] = counts
        return out


@dataclass
class MachineGradient:
    init: np.ndarray
    final: np.ndarray
    trans: np.ndarray

    def flat(self, kinds=PARAM_KINDS):
        return np.concatenate([getattr(self, k) for k in kinds])

    def max_abs(self):
        return max((float(np.max(np.abs(a))) for a in (self.init, self.final, self.trans)
                    if a.size), default=0.0)


class GradientSet(dict):
    """Machine name -> MachineGradient, including zero entries for frozen machines."""

    def flat(self, names=None, kinds=PARAM_KINDS):
        names = list(self) if names is None else names
        return np.concatenate([self[n].flat(kinds) for n in names])

    def by_transition(self, name, machine):
        """Transition gradients of one machine keyed ``(src, symbol, dst)``."""
        return {(q, a, r): float(g)
                for (q, a, r, _), g in zip(machine.transitions(), self[name].trans)}


def _zero_gradient(machine):
    return MachineGradient(np.zeros(machine.init_z.size), np.zeros(machine.final_z.size),
                           np.zeros(machine.trans_z.size))


class _Evaluator:
    """Caches per-machine symbol codes and frozen-machine likelihoods for a batch."""

    def __init__(self, batch: TrainingBatch, system: TypeSystem):
        self.batch = batch
        self.targets = np.array(batch.label_indices(system), dtype=np.int64)
        self.counts = batch.count_matrix()
        cat = system.catalog
        self.codes = [m.symbol_codes(batch.codepoints) for m in cat.all_machines()]
        k = len(cat)
        self._frozen_ll = np.stack([
            _kernels.forward_logprob(cat.missing.kernel, self.codes[k], batch.offsets),
            _kernels.forward_logprob(cat.anomaly.kernel, self.codes[k + 1], batch.offsets),
        ]) if batch.values else np.empty((2, 0))

    def loglik(self, system):
        k = len(system)
        out = np.empty((k + 2, len(self.batch.values)))
        for i, m in enumerate(system.catalog.machines):
            out[i] = _kernels.forward_logprob(m.kernel, self.codes[i], self.batch.offsets)
        out[k:] = self._frozen_ll
        return out

    def terms(self, system, loglik=None):
        """Per-column ``L_c = log p(t_j, x_j)`` and ``L_f = log p(x_j)``, plus state."""
        if loglik is None:
            loglik = self.loglik(system)
        log_mix = system.mixture_log_probs(loglik)
        # pooled counts are zero for values a column lacks; keep 0 * -inf out
        impossible = ~np.isfinite(log_mix)
        log_joint = system.log_prior[None, :] + self.counts @ np.where(impossible, 0.0, log_mix).T
        log_joint[(self.counts > 0) @ impossible.T] = -np.inf             # (J, K)
        l_f = logsumexp(log_joint, axis=1) if log_joint.size else np.zeros(0)
        l_c = log_joint[np.arange(len(self.targets)), self.targets]
        return l_c, l_f, log_joint, log_mix, loglik

    def objective(self, system):
        if not self.batch.columns:
            return 0.0
        l_c, l_f, *_ = self.terms(system)
        if np.any(np.isneginf(l_f)):
            logger.warning("a column has zero likelihood under every type")
            return -math.inf
        return float(np.sum(l_c - l_f))

    def gradient(self, system):
        cat = system.catalog
        grads = GradientSet()
        if not self.batch.columns:
            for name, m in zip(cat.names + ("missing", "anomaly"), cat.all_machines()):
                grads[name] = _zero_gradient(m)
            return grads
        l_c, l_f, log_joint, log_mix, loglik = self.terms(system)
        if np.any(~np.isfinite(l_f)):
            raise TrainingError("objective is not finite; a column has zero likelihood")
        post = np.exp(log_joint - l_f[:, None])                   # (J, K)
        coef = -post
        coef[np.arange(len(self.targets)), self.targets] += 1.0
        col_weight = coef.T @ self.counts                          # (K, U)
        with np.errstate(invalid="ignore"):
            resp = np.exp(system.log_pi[:, TYPE, None] + loglik[:len(cat)] - log_mix)
        resp = np.where(np.isfinite(loglik[:len(cat)]), resp, 0.0)
        for tau, (name, m) in enumerate(cat.regular):
            w = resp[tau] * col_weight[tau]
            e_t, e_f, e_i = _kernels.expected_counts(m.kernel, self.codes[tau],
                                                     self.batch.offsets, w)
            row = np.zeros(m.n_states)
            np.add.at(row, m.trans_src, e_t)
            np.add.at(row, m.final_states, e_f[m.final_states])
            g = MachineGradient(
                init=e_i[m.init_states] - m.init_p * e_i.sum(),
                final=e_f[m.final_states] - m.final_p * row[m.final_states],
                trans=e_t - m.trans_p * row[m.trans_src],
            )
            for kind in PARAM_KINDS:
                arr = getattr(g, kind)
                bad = np.flatnonzero(~np.isfinite(arr))
                if bad.size:
                    raise TrainingError(
                        f"non-finite gradient in machine {name!r}, {kind} parameter {int(bad[0])}")
            grads[name] = g
        grads["missing"] = _zero_gradient(cat.missing)
        grads["anomaly"] = _zero_gradient(cat.anomaly)
        return grads


def objective(batch: TrainingBatch, system: TypeSystem) -> float:
    """``sum_j log p(t_j | x_j)``; 0 for an empty batch."""
    value = _Evaluator(batch, system).objective(system)
    batch.objective_value = value
    return value


def objective_terms(batch: TrainingBatch, system: TypeSystem):
    """Per-column ``(L_c, L_f)`` arrays with ``log p(t|x) = L_c - L_f``."""
    l_c, l_f, *_ = _Evaluator(batch, system).terms(system)
    return l_c, l_f


def analytic_gradient(batch: TrainingBatch, system: TypeSystem) -> GradientSet:
    """Gradient of the objective with respect to every machine's logits."""
    return _Evaluator(batch, system).gradient(system)


def _set_param(system, tau, kind, j, value):
    m = system.catalog.machines[tau]
    arr = np.array(getattr(m, f"{kind}_z"))
    arr[j] = value
    new = m.with_free_params(**{f"{kind}_z": arr})
    machines = list(system.catalog.machines)
    machines[tau] = new
    return system.with_catalog(system.catalog.with_regular(machines))


def finite_difference_gradient(batch: TrainingBatch, system: TypeSystem, h: float = 1e-6,
                               max_params: int = 500) -> GradientSet:
    """Central differences of the objective in logit space (test oracle)."""
    if not h > 0:
        raise TrainingError("step h must be positive")
    cat = system.catalog
    total = sum(m.n_free_params for m in cat.machines)
    if total > max_params:
        raise OracleLimitError("oracle limit")
    ev = _Evaluator(batch, system)
    grads = GradientSet()
    for tau, (name, m) in enumerate(cat.regular):
        parts = {}
        for kind in PARAM_KINDS:
            z = getattr(m, f"{kind}_z")
            out = np.zeros(z.size)
            for j in range(z.size):
                up = ev.objective(_set_param(system, tau, kind, j, z[j] + h))
                down = ev.objective(_set_param(system, tau, kind, j, z[j] - h))
                out[j] = (up - down) / (2 * h)
            parts[kind] = out
        grads[name] = MachineGradient(**parts)
    grads["missing"] = _zero_gradient(cat.missing)
    grads["anomaly"] = _zero_gradient(cat.anomaly)
    return grads


def load_corpus(corpus_dir, labels_path, read_table=None):
    """Read a labelled corpus: CSV files in ``corpus_dir`` and a labels CSV.

    The labels file has a header ``file,column,type``; ``column`` is a header
    name or, failing that, a zero-based index.
    """
    import csv
    from pathlib import Path
    if read_table is None:
        from .cli import read_csv as read_table
    corpus_dir = Path(corpus_dir)
    tables = {}
    columns, labels = [], []
    with open(labels_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"file", "column", "type"} - set(reader.fieldnames or ())
        if missing:
            raise TrainingError(f"labels file lacks fields: {sorted(missing)}")
        for entry in reader:
            fname = entry["file"]
            if fname not in tables:
                tables[fname] = read_table(corpus_dir / fname)
            header, cols = tables[fname]
            key = entry["column"]
            if key in header:
                i = header.index(key)
            elif key.isdigit() and int(key) < len(cols):
                i = int(key)
            else:
                raise TrainingError(f"{fname}: no column {key!r}")
            columns.append(Column(cols[i], name=f"{fname}:{header[i]}"))
            labels.append(entry["type"])
    if not columns:
        raise TrainingError("labels file names no columns")
    return TrainingBatch(columns, labels)


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    max_iters: int = 200
    tolerance: float = 1e-6
    restart_every: int = 0        # 0: restart every n_params iterations
    params: str = "transitions"   # or "all"
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    initial_step: float = 1.0
    max_step: float = 1e3


@dataclass
class TrainResult:
    system: TypeSystem
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    message: str = ""


class _Packer:
    def __init__(self, catalog, kinds):
        self.kinds = kinds
        self.slices = []
        start = 0
        for m in catalog.machines:
            row = {}
            for kind in kinds:
                n = getattr(m, f"{kind}_z").size
                row[kind] = slice(start, start + n)
                start += n
            self.slices.append(row)
        self.size = start

    def pack(self, catalog):
        return np.concatenate([getattr(m, f"{k}_z") for m in catalog.machines
                               for k in self.kinds]) if self.size else np.zeros(0)

    def unpack(self, catalog, x):
        machines = []
        for m, row in zip(catalog.machines, self.slices):
            machines.append(m.with_free_params(**{f"{k}_z": x[s] for k, s in row.items()}))
        return catalog.with_regular(machines)

    def flat_grad(self, grads, names):
        return np.concatenate([getattr(grads[n], k) for n in names for k in self.kinds]) \
            if self.size else np.zeros(0)


def train(batch: TrainingBatch, system: TypeSystem, config: TrainConfig = None) -> TrainResult:
    """Polak-Ribiere (PR+) conjugate-gradient ascent with Armijo backtracking.

    Starts from ``system``'s current parameters.  Only steps that satisfy the
    sufficient-increase condition are accepted, so ``trace`` is
    nondecreasing.
    """
    config = config or TrainConfig()
    if config.params not in ("transitions", "all"):
        raise TrainingError(f"unknown parameter set {config.params!r}")
    kinds = ("trans",) if config.params == "transitions" else PARAM_KINDS
    ev = _Evaluator(batch, system)
    f = ev.objective(system)
    if not math.isfinite(f):
        raise TrainingError("objective is not finite at initialisation")
    result = TrainResult(system=system, trace=[f])
    if config.max_iters <= 0 or not batch.columns:
        result.message = "no iterations requested"
        return result

    packer = _Packer(system.catalog, kinds)
    names = system.names
    restart_every = config.restart_every or max(packer.size, 1)
    x = packer.pack(system.catalog)
    g = packer.flat_grad(ev.gradient(system), names)
    d = g.copy()
    step = config.initial_step
    current = system
    since_restart = 0

    for it in range(config.max_iters):
        slope = float(g @ d)
        if slope <= 0:
            d = g.copy()
            slope = float(g @ g)
            since_restart = 0
        if slope <= 0:
            result.converged = True
            result.message = "zero gradient"
            break
        t = step
        accepted = None
        for _ in range(config.max_backtracks):
            cand = current.with_catalog(packer.unpack(system.catalog, x + t * d))
            fc = ev.objective(cand)
            if math.isfinite(fc) and fc >= f + config.armijo * t * slope:
                accepted = cand
                break
            t *= config.backtrack
        if accepted is None:
            if since_restart == 0:
                result.converged = True
                result.message = "line search failed along the gradient"
                break
            d = g.copy()
            since_restart = 0
            continue
        for name, m in zip(names, accepted.catalog.machines):
            report = validate(m)
            if report:
                raise TrainingError(f"machine {name!r} invalid after step: {report[0]}")
        x = x + t * d
        current = accepted
        g_new = packer.flat_grad(ev.gradient(current), names)
        result.trace.append(fc)
        result.iterations = it + 1
        delta = fc - f
        f = fc
        beta = max(0.0, float(g_new @ (g_new - g)) / float(g @ g))
        since_restart += 1
        if since_restart >= restart_every:
            beta, since_restart = 0.0, 0
        d = g_new + beta * d
        g = g_new
        step = min(t * 2.0, config.max_step)
        if abs(delta) < config.tolerance * max(1.0, abs(f)):
            result.converged = True
            result.message = "objective change below tolerance"
            break
    else:
        result.message = "reached max_iters"
    result.system = current
    batch.objective_value = f
    logger.info("training stopped after %d iterations: %s (objective %.6g)",
                result.iterations, result.message, f)
    return result
