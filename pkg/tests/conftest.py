import itertools
import string

import numpy as np
import pytest

from typemix.inference import Column, TypeSystem
from typemix.machines import MachineCatalog, build_catalog
from typemix.pfsm import ANY, Pfsm, catch_all_char


@pytest.fixture(scope="session")
def catalog():
    return build_catalog()


@pytest.fixture(scope="session")
def system(catalog):
    return TypeSystem(catalog)


@pytest.fixture(scope="session")
def xtype_system():
    return TypeSystem(build_catalog(xtype=True))


def hand_integer(p_stop=0.1):
    """The signed-integer machine written out by hand."""
    digits = string.digits
    trans = [(0, "+", 1, 0.5), (0, "-", 1, 0.5)]
    trans += [(1, d, 2, 0.1) for d in digits]
    trans += [(2, d, 2, (1 - p_stop) / 10) for d in digits]
    return Pfsm.from_probabilities(3, {0: 0.5, 1: 0.5}, {2: p_stop}, trans, name="integer")


def random_machine(rng, n_states=None, alphabet=None, max_out=8, catch_all=False,
                   name="", logit_scale=1.0):
    """Random sparse machine with every state normalised through softmax."""
    m = int(rng.integers(1, 7)) if n_states is None else n_states
    if alphabet is None:
        k = int(rng.integers(2, 21))
        alphabet = list(string.ascii_letters[:k])
    symbols = list(alphabet) + ([ANY] if catch_all else [])
    trans = []
    for q in range(m):
        n_out = int(rng.integers(0, max_out + 1))
        seen = set()
        for _ in range(n_out):
            key = (symbols[int(rng.integers(len(symbols)))], int(rng.integers(m)))
            if key not in seen:
                seen.add(key)
                trans.append((q, key[0], key[1], float(rng.normal() * logit_scale)))
    initial = {q: float(rng.normal()) for q in range(m) if rng.random() < 0.7} or {0: 0.0}
    # every state can stop, so each row is nonempty
    final = {q: float(rng.normal() * logit_scale) for q in range(m)}
    return Pfsm.from_free_params(m, initial, final, trans, alphabet=alphabet,
                                 catch_all=catch_all, name=name)


def all_strings(symbols, max_len):
    out = []
    for n in range(max_len + 1):
        out.extend("".join(t) for t in itertools.product(symbols, repeat=n))
    return out


def machine_symbols(machine):
    return [catch_all_char(machine) if machine.symbol(i) is ANY else machine.symbol(i)
            for i in range(machine.n_symbols)]


def random_system(rng, n_types=3, max_states=4, alphabet="abc"):
    """Small random system; missing and anomaly machines cover ``alphabet``."""
    regular = tuple(
        (f"t{i}", random_machine(rng, int(rng.integers(1, max_states + 1)), alphabet,
                                 max_out=6, name=f"t{i}"))
        for i in range(n_types))
    missing = random_machine(rng, 2, alphabet, max_out=6, name="missing")
    anomaly = Pfsm.from_probabilities(
        1, {0: 1.0}, {0: 0.2}, [(0, c, 0, 0.8 / len(alphabet)) for c in alphabet],
        name="anomaly")
    return TypeSystem(MachineCatalog(regular, missing, anomaly))


def random_batch(rng, system, n_columns=3, n_rows=20, alphabet="abc", max_len=3):
    from typemix.training import TrainingBatch
    cols, labels = [], []
    for j in range(n_columns):
        vals = ["".join(rng.choice(list(alphabet), size=int(rng.integers(0, max_len + 1))))
                for _ in range(n_rows)]
        cols.append(Column(vals, name=f"c{j}"))
        labels.append(system.names[j % len(system)])
    return TrainingBatch(cols, labels)


# -- acceptance report --------------------------------------------------------

ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
