"""Built-in type machines and the catalog that groups them.

Default magnitudes are hand-set so that common ambiguities resolve the way a
data wrangler expects: ``"0"``/``"1"`` look most like Booleans, then integers,
then floats; empty cells and NA-style codes look missing; and the anomaly
machine always scores a value below any specific machine that supports it.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field, replace
from typing import Sequence

from . import pfsm as _pfsm
from .pfsm import ANY, Pfsm, PfsmError, validate
from .regex import compile_regex

DIGITS = string.digits
LETTERS = string.ascii_letters
STRING_PUNCTUATION = ".,-_%:;"

INTEGER_STOP = 0.1
INTEGER_SIGNED_START = 0.5

BOOLEAN_CODES = ("Yes", "No", "True", "False", "1", "0", "-1",
                 "yes", "Y", "y", "no", "true", "false")
# "1" under the boolean machine is 1.5x its probability under the integer one
BOOLEAN_NUMERIC_MASS = 1.5 * (1 - INTEGER_SIGNED_START) * 0.1 * INTEGER_STOP

MISSING_CODES = (
    "Null", "NA", "NULL", "null", "NA ", " NA", "N A", "N/A", "N/ A", "N /A",
    "#NA", "#N/A", "na", " na", "na ", "n a", "n/a", "N/O", "NAN", "NaN", "nan",
    "-NaN", "-nan",
    "-", "!", "?", "*", ".",
    "0", "-1", "-9", "-99", "-999", "-9999", "-99999",
    "", " ",
)

ANOMALY_STOP = 0.01
STRING_STOP = 0.01

MONTHS = ("January", "February", "March", "April", "May", "June", "July",
          "August", "September", "October", "November", "December")

_YEAR = "[12]\\d{3}"
DATE_FORMATS = (
    ("iso_compact", _YEAR + "\\d{4}"),
    ("iso_date", _YEAR + "-\\d{2}-\\d{2}"),
    ("iso_datetime", _YEAR + "-\\d{2}-\\d{2}T\\d{2}:\\d{2}:\\d{2}"),
    ("time_hm", "\\d{2}:\\d{2}"),
    ("time_hms", "\\d{2}:\\d{2}:\\d{2}"),
    ("year", _YEAR),
    ("year_range", _YEAR + "(-| | - | -|- )" + _YEAR),
    ("us_datetime", "\\d{2}-\\d{2}-" + _YEAR + " \\d{2}:\\d{2}:\\d{2} (AM|PM)"),
    ("month", "(" + "|".join(MONTHS) + ")"),
)

REGULAR_TYPES = ("integer", "float", "boolean", "string", "date")


class CatalogError(ValueError):
    pass


def build_integer(p_stop=INTEGER_STOP, p_signed=INTEGER_SIGNED_START) -> Pfsm:
    """Optional sign followed by one or more digits; leading zeros allowed."""
    loop = (1 - p_stop) / 10
    trans = [(0, "+", 1, 0.5), (0, "-", 1, 0.5)]
    trans += [(1, d, 2, 0.1) for d in DIGITS]
    trans += [(2, d, 2, loop) for d in DIGITS]
    m = Pfsm.from_probabilities(3, {0: p_signed, 1: 1 - p_signed}, {2: p_stop}, trans,
                                name="integer")
    return _pfsm.reparameterize(m)


def build_float() -> Pfsm:
    """Decimals, plain integers, e/E exponents and comma thousands groups.

    States: 0 sign, 1 first digit, 2-4 after 1-3 leading digits, 5 after four
    or more (no comma grouping), 6-8 inside a comma group, 14 after a full
    group, 9 after the point, 10 fraction digits, 11-13 exponent.
    """
    t = [(0, "+", 1, 0.5), (0, "-", 1, 0.5)]
    t += [(1, d, 2, 0.1) for d in DIGITS]
    finals = {}
    for q, nxt in ((2, 3), (3, 4), (4, 5)):
        finals[q] = 0.09
        t += [(q, d, nxt, 0.07) for d in DIGITS]
        t += [(q, ",", 6, 0.05), (q, ".", 9, 0.11), (q, "e", 11, 0.025), (q, "E", 11, 0.025)]
    finals[5] = 0.09
    t += [(5, d, 5, 0.07) for d in DIGITS]
    t += [(5, ".", 9, 0.16), (5, "e", 11, 0.025), (5, "E", 11, 0.025)]
    for q, nxt in ((6, 7), (7, 8), (8, 14)):
        t += [(q, d, nxt, 0.1) for d in DIGITS]
    finals[14] = 0.3
    t += [(14, ",", 6, 0.4), (14, ".", 9, 0.25), (14, "e", 11, 0.025), (14, "E", 11, 0.025)]
    t += [(9, d, 10, 0.1) for d in DIGITS]
    finals[10] = 0.1
    t += [(10, d, 10, 0.08) for d in DIGITS]
    t += [(10, "e", 11, 0.05), (10, "E", 11, 0.05)]
    t += [(11, "+", 12, 0.05), (11, "-", 12, 0.05)]
    t += [(11, d, 13, 0.09) for d in DIGITS]
    t += [(12, d, 13, 0.1) for d in DIGITS]
    finals[13] = 0.1
    t += [(13, d, 13, 0.09) for d in DIGITS]
    m = Pfsm.from_probabilities(15, {0: 0.5, 1: 0.5}, finals, t, name="float")
    return _pfsm.reparameterize(m)


def build_string(p_stop=STRING_STOP) -> Pfsm:
    """One start state, one accepting state looping over the string alphabet."""
    symbols = LETTERS + DIGITS + STRING_PUNCTUATION + " "
    n = len(symbols)
    trans = [(0, c, 1, 1 / n) for c in symbols]
    trans += [(1, c, 1, (1 - p_stop) / n) for c in symbols]
    m = Pfsm.from_probabilities(2, {0: 1.0}, {1: p_stop}, trans, name="string")
    return _pfsm.reparameterize(m)


def build_trie(codes: Sequence[str], weights=None, name="") -> Pfsm:
    """Probabilistic trie: the support is exactly ``codes``.

    Each code's probability is its weight (normalised); shared prefixes share
    states, so a state's stop probability is the mass of the code ending
    there relative to all codes passing through it.
    """
    codes = list(codes)
    if len(set(codes)) != len(codes):
        dup = sorted({c for c in codes if codes.count(c) > 1})
        raise CatalogError(f"duplicate codes: {dup!r}")
    if not codes:
        raise CatalogError("a trie needs at least one code")
    if weights is None:
        weights = [1.0] * len(codes)
    total = float(sum(weights))
    weights = [w / total for w in weights]

    nodes = {"": 0}
    mass = {"": 0.0}
    for code in codes:
        for i in range(1, len(code) + 1):
            nodes.setdefault(code[:i], len(nodes))
    for prefix in nodes:
        mass[prefix] = sum(w for c, w in zip(codes, weights) if c.startswith(prefix))
    ending = dict(zip(codes, weights))
    final, trans = {}, []
    for prefix, q in nodes.items():
        if prefix in ending:
            final[q] = ending[prefix] / mass[prefix]
    for prefix, q in nodes.items():
        if prefix:
            parent = prefix[:-1]
            trans.append((nodes[parent], prefix[-1], q, mass[prefix] / mass[parent]))
    m = Pfsm.from_probabilities(len(nodes), {0: 1.0}, final, trans, name=name)
    return _pfsm.reparameterize(m)


def boolean_weights(codes=BOOLEAN_CODES, numeric_mass=BOOLEAN_NUMERIC_MASS):
    numeric = {"1", "0", "-1"}
    rest = (1 - numeric_mass * len(numeric & set(codes))) / sum(c not in numeric for c in codes)
    return [numeric_mass if c in numeric else rest for c in codes]


def build_boolean(weights=None) -> Pfsm:
    if weights is None:
        weights = boolean_weights()
    return build_trie(BOOLEAN_CODES, weights, name="boolean")


def build_missing(extra_codes: Sequence[str] = (), weights=None) -> Pfsm:
    """Trie over the known missing-value encodings plus ``extra_codes``."""
    return build_trie(list(MISSING_CODES) + list(extra_codes), weights, name="missing")


def add_missing_code(catalog: "MachineCatalog", code: str) -> "MachineCatalog":
    codes = catalog.missing_codes + (code,)
    return replace(catalog, missing=build_missing(codes[len(MISSING_CODES):]),
                   missing_codes=codes)


def union(parts: Sequence[Pfsm], weights=None, name="") -> Pfsm:
    """Mixture of machines through the initial distribution."""
    if weights is None:
        weights = [1.0 / len(parts)] * len(parts)
    initial, final, trans = {}, {}, []
    alphabet = set()
    offset = 0
    for w, m in zip(weights, parts):
        if m.catch_all:
            raise PfsmError("union of catch-all machines is not supported")
        alphabet |= set(m.alphabet)
        for q, p in m.initial_dict().items():
            initial[q + offset] = w * p
        for q, p in m.final_dict().items():
            final[q + offset] = p
        trans += [(s + offset, a, d + offset, p) for s, a, d, p in m.transitions()]
        offset += m.n_states
    out = Pfsm.from_probabilities(offset, initial, final, trans, alphabet=alphabet, name=name)
    return _pfsm.reparameterize(out)


def build_date() -> Pfsm:
    """Union of ISO-8601 and common nonstandard date/time formats."""
    return union([compile_regex(p, name=n) for n, p in DATE_FORMATS], name="date")


def build_anomaly(p_stop=ANOMALY_STOP, name="anomaly") -> Pfsm:
    """Single-state machine over printable ASCII plus every other character."""
    symbols = [chr(c) for c in range(0x20, 0x7F)]
    p = (1 - p_stop) / (len(symbols) + 1)
    trans = [(0, c, 0, p) for c in symbols] + [(0, ANY, 0, p)]
    m = Pfsm.from_probabilities(1, {0: 1.0}, {0: p_stop}, trans, name=name)
    return _pfsm.reparameterize(m)


def build_xtype() -> Pfsm:
    """Anomaly-like machine registered as a regular column type."""
    return build_anomaly(name="xtype")


BUILDERS = {
    "integer": build_integer,
    "float": build_float,
    "boolean": build_boolean,
    "string": build_string,
    "date": build_date,
}


@dataclass(frozen=True)
class MachineCatalog:
    regular: tuple            # ((name, Pfsm), ...)
    missing: Pfsm
    anomaly: Pfsm
    xtype_enabled: bool = False
    missing_codes: tuple = field(default=MISSING_CODES)

    def __post_init__(self):
        names = [n for n, _ in self.regular]
        if len(set(names)) != len(names):
            raise CatalogError(f"duplicate type names: {names}")
        if not names:
            raise CatalogError("catalog needs at least one regular type")
        for reserved in ("missing", "anomaly"):
            if reserved in names:
                raise CatalogError(f"{reserved!r} cannot be a regular type")

    @property
    def names(self):
        return tuple(n for n, _ in self.regular)

    @property
    def machines(self):
        return tuple(m for _, m in self.regular)

    def __len__(self):
        return len(self.regular)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise CatalogError(f"unknown type {name!r}") from None

    def machine(self, name):
        if name == "missing":
            return self.missing
        if name == "anomaly":
            return self.anomaly
        return self.regular[self.index(name)][1]

    def all_machines(self):
        """Regular machines in order, then missing, then anomaly."""
        return self.machines + (self.missing, self.anomaly)

    def with_regular(self, machines):
        return replace(self, regular=tuple(zip(self.names, machines)))

    def validate(self):
        out = {}
        for name, m in list(self.regular) + [("missing", self.missing), ("anomaly", self.anomaly)]:
            report = validate(m)
            if report:
                out[name] = report
        return out


def build_catalog(types=REGULAR_TYPES, xtype=False, extra_missing=(), regex_types=()):
    """Assemble the default catalog.

    ``regex_types`` is a sequence of ``(name, pattern)`` pairs compiled with
    uniform probabilities and appended after the built-in types.
    """
    regular = []
    for name in types:
        if name not in BUILDERS:
            raise CatalogError(f"unknown built-in type {name!r}")
        regular.append((name, BUILDERS[name]()))
    for name, pattern in regex_types:
        regular.append((name, compile_regex(pattern, name=name)))
    if xtype:
        regular.append(("xtype", build_xtype()))
    missing_codes = tuple(MISSING_CODES) + tuple(extra_missing)
    return MachineCatalog(
        regular=tuple(regular),
        missing=build_missing(extra_missing),
        anomaly=build_anomaly(),
        xtype_enabled=xtype,
        missing_codes=missing_codes,
    )


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

MANIFEST_FORMAT = "typemix-manifest/1"
CATALOG_FORMAT = "typemix-catalog/1"


def catalog_from_manifest(data: dict) -> MachineCatalog:
    if data.get("format", MANIFEST_FORMAT) != MANIFEST_FORMAT:
        raise CatalogError(f"unsupported manifest format {data.get('format')!r}")
    regex_types = [(r["name"], r["pattern"]) for r in data.get("regex_types", [])]
    return build_catalog(
        types=tuple(data.get("types", REGULAR_TYPES)),
        xtype=bool(data.get("xtype", False)),
        extra_missing=tuple(data.get("missing_codes", ())),
        regex_types=regex_types,
    )


def catalog_to_dict(catalog: MachineCatalog) -> dict:
    return {
        "format": CATALOG_FORMAT,
        "xtype": catalog.xtype_enabled,
        "missing_codes": list(catalog.missing_codes),
        "regular": [{"name": n, "machine": _pfsm.to_dict(m)} for n, m in catalog.regular],
        "missing": _pfsm.to_dict(catalog.missing),
        "anomaly": _pfsm.to_dict(catalog.anomaly),
    }


def catalog_from_dict(data: dict) -> MachineCatalog:
    fmt = data.get("format")
    if fmt == MANIFEST_FORMAT:
        return catalog_from_manifest(data)
    if fmt != CATALOG_FORMAT:
        raise CatalogError(f"unsupported catalog format {fmt!r}")
    return MachineCatalog(
        regular=tuple((r["name"], _pfsm.from_dict(r["machine"])) for r in data["regular"]),
        missing=_pfsm.from_dict(data["missing"]),
        anomaly=_pfsm.from_dict(data["anomaly"]),
        xtype_enabled=bool(data.get("xtype", False)),
        missing_codes=tuple(data.get("missing_codes", MISSING_CODES)),
    )


def dumps_catalog(catalog: MachineCatalog) -> str:
    return json.dumps(catalog_to_dict(catalog), ensure_ascii=False, indent=1) + "\n"


def save_catalog(catalog: MachineCatalog, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_catalog(catalog))


def load_catalog(path) -> MachineCatalog:
    """Load either a manifest or a serialized (possibly trained) catalog."""
    with open(path, encoding="utf-8") as fh:
        return catalog_from_dict(json.load(fh))
