"""Probabilistic finite-state machines.

A machine has states ``0..M-1``, an alphabet of single Unicode characters and
optionally a catch-all symbol class standing for every character outside the
alphabet.  Initial, final and transition probabilities are each stored next
to an unconstrained "free parameter" (logit).  Probabilities are a softmax
view of the logits: the initial distribution is one softmax, and each state's
stop probability shares a softmax row with that state's outgoing transitions.

Only states that may start, stop, or that carry a transition get a logit;
absent entries are structurally zero.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import _kernels


class PfsmError(ValueError):
    pass


class InvalidParameterError(PfsmError):
    pass


class OracleLimitError(PfsmError):
    pass


class _CatchAll:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ANY"

    def __reduce__(self):
        return (_CatchAll, ())


#: Symbol used in transition specs for "any character not in the alphabet".
ANY = _CatchAll()

FORMAT_VERSION = "pfsm/1"


# ---------------------------------------------------------------------------
# string encoding
# ---------------------------------------------------------------------------

def encode_strings(values: Sequence[str]):
    """Flatten strings into (codepoints, offsets) arrays."""
    lengths = np.fromiter((len(v) for v in values), dtype=np.int64, count=len(values))
    offsets = np.zeros(len(values) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    joined = "".join(values)
    if joined:
        cps = np.frombuffer(joined.encode("utf-32-le", "surrogatepass"), dtype="<u4")
    else:
        cps = np.empty(0, dtype=np.uint32)
    return cps.astype(np.int64), offsets


class _KernelMachine:
    """Flat arrays consumed by ``_kernels``: edges grouped by symbol."""

    def __init__(self, machine: "Pfsm"):
        m = machine.n_states
        self.n_states = m
        self.n_symbols = machine.n_symbols
        self.init = np.zeros(m)
        self.init[machine.init_states] = machine.init_p
        self.final = np.zeros(m)
        self.final[machine.final_states] = machine.final_p
        perm = np.argsort(machine.trans_sym, kind="stable")
        self.perm = perm
        self.e_sym = np.ascontiguousarray(machine.trans_sym[perm])
        self.e_src = np.ascontiguousarray(machine.trans_src[perm])
        self.e_dst = np.ascontiguousarray(machine.trans_dst[perm])
        self.e_prob = np.ascontiguousarray(machine.trans_p[perm])
        counts = np.bincount(self.e_sym, minlength=self.n_symbols)
        self.sym_ptr = np.zeros(self.n_symbols + 1, dtype=np.int64)
        np.cumsum(counts, out=self.sym_ptr[1:])
        self._dense = None

    def dense(self):
        # per-symbol M x M matrices, built on first use
        if self._dense is None:
            d = np.zeros((max(self.n_symbols, 1), self.n_states, self.n_states))
            np.add.at(d, (self.e_sym, self.e_src, self.e_dst), self.e_prob)
            self._dense = d
        return self._dense


def _softmax(z):
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return z.copy()
    e = np.exp(z - z.max())
    return e / e.sum()


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# the machine
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pfsm:
    n_states: int
    alphabet: tuple
    catch_all: bool
    init_states: np.ndarray
    init_z: np.ndarray
    init_p: np.ndarray
    final_states: np.ndarray
    final_z: np.ndarray
    final_p: np.ndarray
    trans_src: np.ndarray
    trans_sym: np.ndarray
    trans_dst: np.ndarray
    trans_z: np.ndarray
    trans_p: np.ndarray
    name: str = field(default="")

    # -- construction -------------------------------------------------------

    @classmethod
    def from_probabilities(cls, n_states, initial, final, transitions,
                           alphabet=None, catch_all=False, name=""):
        """Build a machine from explicit probabilities.

        ``initial`` and ``final`` map state -> probability, ``transitions`` is
        an iterable of ``(src, symbol, dst, prob)`` where symbol is a single
        character or ``ANY``.  Logits are set to ``log(prob)`` and the
        probabilities are kept exactly as given, so an unnormalised input
        stays visible to ``validate``.  Zero-probability entries are dropped.
        """
        initial = {q: p for q, p in dict(initial).items() if p != 0}
        final = {q: p for q, p in dict(final).items() if p != 0}
        transitions = [t for t in transitions if t[3] != 0]
        return cls._build(n_states, initial, final, transitions, alphabet,
                          catch_all, name, logits=False)

    @classmethod
    def from_free_params(cls, n_states, initial, final, transitions,
                         alphabet=None, catch_all=False, name=""):
        """Same layout as ``from_probabilities`` but values are logits."""
        m = cls._build(n_states, initial, final, transitions, alphabet,
                       catch_all, name, logits=True)
        return reparameterize(m)

    @classmethod
    def _build(cls, n_states, initial, final, transitions, alphabet, catch_all,
               name, logits):
        transitions = list(transitions)
        syms = {t[1] for t in transitions}
        if ANY in syms:
            catch_all = True
            syms.discard(ANY)
        for s in syms:
            if not isinstance(s, str) or len(s) != 1:
                raise PfsmError(f"transition symbol must be one character, got {s!r}")
        alpha = set(syms if alphabet is None else alphabet)
        missing = syms - alpha
        if missing:
            raise PfsmError(f"transition symbols not in alphabet: {sorted(missing)!r}")
        alphabet = tuple(sorted(alpha))
        index = {c: i for i, c in enumerate(alphabet)}
        catch_index = len(alphabet)

        def split(values):
            values = np.array(values, dtype=float)
            if logits:
                return values, np.zeros_like(values)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(values), values

        init_items = sorted(dict(initial).items())
        final_items = sorted(dict(final).items())
        iz, ip = split([p for _, p in init_items])
        fz, fp = split([p for _, p in final_items])
        tz, tp = split([t[3] for t in transitions])
        return cls(
            n_states=int(n_states),
            alphabet=alphabet,
            catch_all=bool(catch_all),
            init_states=_frozen([q for q, _ in init_items], np.int64),
            init_z=_frozen(iz, float), init_p=_frozen(ip, float),
            final_states=_frozen([q for q, _ in final_items], np.int64),
            final_z=_frozen(fz, float), final_p=_frozen(fp, float),
            trans_src=_frozen([t[0] for t in transitions], np.int64),
            trans_sym=_frozen([catch_index if t[1] is ANY else index[t[1]]
                               for t in transitions], np.int64),
            trans_dst=_frozen([t[2] for t in transitions], np.int64),
            trans_z=_frozen(tz, float), trans_p=_frozen(tp, float),
            name=name,
        )

    def with_free_params(self, init_z=None, final_z=None, trans_z=None):
        """Copy with replaced logits; probabilities are rebuilt by softmax."""
        changes = {}
        for key, value in (("init_z", init_z), ("final_z", final_z), ("trans_z", trans_z)):
            if value is not None:
                if np.shape(value) != getattr(self, key).shape:
                    raise PfsmError(f"{key} has shape {np.shape(value)}")
                changes[key] = _frozen(value, float)
        return reparameterize(dataclasses.replace(self, **changes))

    def renamed(self, name):
        return dataclasses.replace(self, name=name)

    # -- views --------------------------------------------------------------

    @property
    def n_symbols(self):
        """Alphabet size, counting the catch-all class as one symbol."""
        return len(self.alphabet) + (1 if self.catch_all else 0)

    @property
    def n_free_params(self):
        return self.init_z.size + self.final_z.size + self.trans_z.size

    def symbol(self, index):
        return ANY if index == len(self.alphabet) else self.alphabet[index]

    @cached_property
    def _alphabet_cps(self):
        return np.array([ord(c) for c in self.alphabet], dtype=np.int64)

    @cached_property
    def kernel(self):
        return _KernelMachine(self)

    def symbol_codes(self, codepoints):
        """Map codepoints to this machine's symbol indices (-1 = impossible)."""
        cps = np.asarray(codepoints, dtype=np.int64)
        table = self._alphabet_cps
        if table.size == 0:
            pos = np.zeros(cps.shape, dtype=np.int64)
            hit = np.zeros(cps.shape, dtype=bool)
        else:
            pos = np.searchsorted(table, cps)
            clipped = np.minimum(pos, table.size - 1)
            hit = table[clipped] == cps
            pos = clipped
        miss = len(self.alphabet) if self.catch_all else -1
        return np.where(hit, pos, miss).astype(np.int64)

    def transitions(self):
        """Iterate ``(src, symbol, dst, prob)`` tuples."""
        for s, a, d, p in zip(self.trans_src, self.trans_sym, self.trans_dst, self.trans_p):
            yield int(s), self.symbol(int(a)), int(d), float(p)

    def initial_dict(self):
        return {int(q): float(p) for q, p in zip(self.init_states, self.init_p)}

    def final_dict(self):
        return {int(q): float(p) for q, p in zip(self.final_states, self.final_p)}

    def __repr__(self):
        return (f"Pfsm(name={self.name!r}, states={self.n_states}, "
                f"symbols={self.n_symbols}, transitions={self.trans_z.size})")

    # -- scoring ------------------------------------------------------------

    def log_probs(self, values: Sequence[str]) -> np.ndarray:
        cps, offsets = encode_strings(values)
        return self.log_probs_encoded(cps, offsets)

    def log_probs_encoded(self, codepoints, offsets) -> np.ndarray:
        """Like ``log_probs`` for strings already run through ``encode_strings``."""
        return _kernels.forward_logprob(self.kernel, self.symbol_codes(codepoints), offsets)

    def log_prob(self, value: str) -> float:
        return float(self.log_probs([value])[0])

    def prob(self, value: str) -> float:
        return math.exp(self.log_prob(value))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def validate(machine: Pfsm, tol: float = 1e-9) -> list:
    """Return a list of violated constraints (empty when the machine is valid)."""
    report = []
    m = machine.n_states
    if m < 1:
        return ["machine has no states"]
    for label, states in (("initial", machine.init_states), ("final", machine.final_states)):
        bad = [int(q) for q in states if not 0 <= q < m]
        if bad:
            report.append(f"{label} entries reference unknown states {bad}")
        if len(set(states.tolist())) != len(states):
            report.append(f"duplicate {label} states")
    for arr, label in ((machine.trans_src, "source"), (machine.trans_dst, "target")):
        bad = sorted({int(q) for q in arr if not 0 <= q < m})
        if bad:
            report.append(f"transition {label} references unknown states {bad}")
    bad_sym = sorted({int(s) for s in machine.trans_sym if not 0 <= s < machine.n_symbols})
    if bad_sym:
        report.append(f"transition symbols outside the alphabet: {bad_sym}")
    keys = list(zip(machine.trans_src.tolist(), machine.trans_sym.tolist(),
                    machine.trans_dst.tolist()))
    if len(set(keys)) != len(keys):
        report.append("duplicate transitions")
    if report:
        return report

    for label, arr in (("initial", machine.init_p), ("final", machine.final_p),
                       ("transition", machine.trans_p)):
        for i, p in enumerate(arr):
            if not (0.0 <= p <= 1.0) or not math.isfinite(p):
                report.append(f"{label} probability #{i} out of range: {p!r}")
    total = float(np.sum(machine.init_p))
    if abs(total - 1.0) > tol:
        report.append(f"initial probabilities sum {total:.12g}")
    rows = np.zeros(m)
    np.add.at(rows, machine.final_states, machine.final_p)
    np.add.at(rows, machine.trans_src, machine.trans_p)
    for q in range(m):
        if abs(rows[q] - 1.0) > tol:
            report.append(f"state {q}: final plus outgoing probabilities sum {rows[q]:.12g}")
    return report


def forward_log_prob(machine: Pfsm, value: str) -> float:
    """Exact log-probability of ``value`` summed over all state paths."""
    return machine.log_prob(value)


def reparameterize(machine: Pfsm) -> Pfsm:
    """Rebuild probabilities from the logits by softmax."""
    for arr in (machine.init_z, machine.final_z, machine.trans_z):
        if not np.all(np.isfinite(arr)):
            raise InvalidParameterError("invalid free parameter")
    init_p = _softmax(machine.init_z)
    m = machine.n_states
    # per-row softmax over {stop} + outgoing transitions, shifted by row max
    row_max = np.full(m, -np.inf)
    np.maximum.at(row_max, machine.final_states, machine.final_z)
    np.maximum.at(row_max, machine.trans_src, machine.trans_z)
    ef = np.exp(machine.final_z - row_max[machine.final_states])
    et = np.exp(machine.trans_z - row_max[machine.trans_src])
    denom = np.zeros(m)
    np.add.at(denom, machine.final_states, ef)
    np.add.at(denom, machine.trans_src, et)
    return dataclasses.replace(
        machine,
        init_p=_frozen(init_p, float),
        final_p=_frozen(ef / denom[machine.final_states], float),
        trans_p=_frozen(et / denom[machine.trans_src], float),
    )


@dataclass
class TransitionPosteriors:
    string_prob: float
    joint: np.ndarray          # (L, M, M): p(q_l=q, q_{l+1}=q', x)
    forward_msgs: np.ndarray   # (L+1, M): prefix probability ending in q at l
    backward_msgs: np.ndarray  # (L+1, M): suffix probability leaving q at l


def transition_posteriors(machine: Pfsm, value: str) -> TransitionPosteriors:
    """Forward-backward messages and pairwise joints for one string."""
    km = machine.kernel
    m = machine.n_states
    cps, _ = encode_strings([value])
    syms = machine.symbol_codes(cps)
    length = len(value)
    dense = km.dense()
    joint = np.zeros((length, m, m))
    fwd = np.zeros((length + 1, m))
    bwd = np.zeros((length + 1, m))
    if np.any(syms < 0):
        return TransitionPosteriors(0.0, joint, fwd, bwd)

    alphas = np.zeros((length + 1, m))
    scales = np.ones(length + 2)
    alphas[0] = km.init
    for l in range(1, length + 1):
        a = alphas[l - 1] @ dense[syms[l - 1]]
        scales[l] = a.sum()
        if scales[l] <= 0:
            return TransitionPosteriors(0.0, joint, fwd, bwd)
        alphas[l] = a / scales[l]
    scales[length + 1] = alphas[length] @ km.final
    if scales[length + 1] <= 0:
        return TransitionPosteriors(0.0, joint, fwd, bwd)
    log_scales = np.log(scales)
    log_p = float(log_scales.sum())

    betas = np.zeros((length + 1, m))
    betas[length] = km.final / scales[length + 1]
    for l in range(length, 0, -1):
        betas[l - 1] = dense[syms[l - 1]] @ betas[l] / scales[l]

    prefix = np.cumsum(log_scales[: length + 1])
    for l in range(length + 1):
        fwd[l] = alphas[l] * math.exp(prefix[l])
        bwd[l] = betas[l] * math.exp(log_p - prefix[l])
    for l in range(length):
        joint[l] = np.outer(fwd[l], bwd[l + 1]) * dense[syms[l]]
    return TransitionPosteriors(math.exp(log_p), joint, fwd, bwd)


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def _edges_by_state(machine):
    out = [[] for _ in range(machine.n_states)]
    for s, a, d, p in zip(machine.trans_src.tolist(), machine.trans_sym.tolist(),
                          machine.trans_dst.tolist(), machine.trans_p.tolist()):
        out[s].append((a, d, p))
    return out


def brute_force_prob(machine: Pfsm, value: str) -> float:
    """Sum of path products over every state sequence emitting ``value``.

    Enumerates paths explicitly (no dynamic programming); limited to strings
    of length <= 8 and machines with <= 8 states.
    """
    if len(value) > 8 or machine.n_states > 8:
        raise OracleLimitError("oracle limit")
    cps, _ = encode_strings([value])
    syms = machine.symbol_codes(cps).tolist()
    if any(s < 0 for s in syms):
        return 0.0
    final = machine.final_dict()
    edges = _edges_by_state(machine)
    paths = []  # product of every complete state sequence

    def walk(q, l, p):
        if l == len(syms):
            paths.append(p * final.get(q, 0.0))
            return
        for a, d, tp in edges[q]:
            if a == syms[l]:
                walk(d, l + 1, p * tp)

    for q, p in machine.initial_dict().items():
        walk(q, 0, p)
    return math.fsum(paths)


def path_distribution(machine: Pfsm, max_len: int) -> dict:
    """Map every string of length <= max_len to its summed path probability.

    Depth-first enumeration of all paths; the catch-all class is reported
    with the character from ``catch_all_char``.
    """
    init = machine.initial_dict()
    final = machine.final_dict()
    edges = _edges_by_state(machine)
    symbols = [catch_all_char(machine) if machine.symbol(i) is ANY else machine.symbol(i)
               for i in range(machine.n_symbols)]
    out = {}

    def walk(q, prefix, p):
        f = final.get(q, 0.0)
        if f:
            out[prefix] = out.get(prefix, 0.0) + p * f
        if len(prefix) == max_len:
            return
        for a, d, tp in edges[q]:
            walk(d, prefix + symbols[a], p * tp)

    for q, p in init.items():
        walk(q, "", p)
    return out


def catch_all_char(machine: Pfsm) -> str:
    """A representative character for the catch-all class of ``machine``."""
    taken = set(machine.alphabet)
    for cp in itertools.chain([0xFFFD], range(0xE000, 0xF900)):
        if chr(cp) not in taken:
            return chr(cp)
    raise PfsmError("no free representative for the catch-all class")


def enumerate_support(machine: Pfsm, max_len: int) -> list:
    """All strings of length <= max_len with positive probability."""
    if machine.n_symbols > 30 or max_len > 5:
        raise OracleLimitError("oracle limit")
    dist = path_distribution(machine, max_len)
    return sorted(((s, p) for s, p in dist.items() if p > 0), key=lambda t: (len(t[0]), t[0]))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def to_dict(machine: Pfsm) -> dict:
    def sym(i):
        s = machine.symbol(int(i))
        return None if s is ANY else s

    return {
        "format": FORMAT_VERSION,
        "name": machine.name,
        "n_states": machine.n_states,
        "alphabet": list(machine.alphabet),
        "catch_all": machine.catch_all,
        "initial": [[int(q), float(p), float(z)] for q, p, z in
                    zip(machine.init_states, machine.init_p, machine.init_z)],
        "final": [[int(q), float(p), float(z)] for q, p, z in
                  zip(machine.final_states, machine.final_p, machine.final_z)],
        "transitions": [[int(s), sym(a), int(d), float(p), float(z)] for s, a, d, p, z in
                        zip(machine.trans_src, machine.trans_sym, machine.trans_dst,
                            machine.trans_p, machine.trans_z)],
    }


def from_dict(data: dict) -> Pfsm:
    if data.get("format") != FORMAT_VERSION:
        raise PfsmError(f"unsupported machine format {data.get('format')!r}")
    alphabet = tuple(data["alphabet"])
    index = {c: i for i, c in enumerate(alphabet)}
    catch_index = len(alphabet)
    trans = data["transitions"]
    return Pfsm(
        n_states=int(data["n_states"]),
        alphabet=alphabet,
        catch_all=bool(data["catch_all"]),
        init_states=_frozen([r[0] for r in data["initial"]], np.int64),
        init_p=_frozen([r[1] for r in data["initial"]], float),
        init_z=_frozen([r[2] for r in data["initial"]], float),
        final_states=_frozen([r[0] for r in data["final"]], np.int64),
        final_p=_frozen([r[1] for r in data["final"]], float),
        final_z=_frozen([r[2] for r in data["final"]], float),
        trans_src=_frozen([r[0] for r in trans], np.int64),
        trans_sym=_frozen([catch_index if r[1] is None else index[r[1]] for r in trans], np.int64),
        trans_dst=_frozen([r[2] for r in trans], np.int64),
        trans_p=_frozen([r[3] for r in trans], float),
        trans_z=_frozen([r[4] for r in trans], float),
        name=data.get("name", ""),
    )


def dumps(machine: Pfsm) -> str:
    return json.dumps(to_dict(machine), ensure_ascii=False)


def loads(text: str) -> Pfsm:
    return from_dict(json.loads(text))
