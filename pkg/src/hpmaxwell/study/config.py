"""Flat ``key = value`` study configuration.

Example::

    # exp2 convergence sweep
    problem = exp2_smooth
    k = 10, 20
    p = 1, 2
    n0 = 2
    levels = 3
    levels[p=1] = 4
    n0[k=20] = 3
    ref_n[k=10] = 4
    ref_n[k=20] = 6

List values are comma separated.  Complex wavenumbers are written ``re/im``
(``5/2`` is 5 + 2i); ``5+2i`` and ``5+2j`` are accepted too.  The keys
``n0``, ``levels`` and ``ref_n`` take optional ``[k=..., p=...]``
qualifiers; the most specific matching entry wins.  Level ``j`` of a (k, p)
series uses the ``n0 * 2**j`` Kuhn mesh.  Without ``ref_n`` the reference
solution is computed on each level mesh itself; with it, once per k on the
``ref_n`` mesh, which must be nested with every level mesh.
"""

from dataclasses import dataclass, field
from fractions import Fraction
import re

from ..coefficients import BUILTIN_PROBLEMS
from ..fem.basis import MAX_ORDER, NEDELEC_FAMILIES

DEFAULT_DOF_CAP = 400_000
QUALIFIED = ("n0", "levels", "ref_n")
KEYS = (
    "problem",
    "k",
    "p",
    "n0",
    "levels",
    "p_ref",
    "ref_n",
    "family",
    "output",
    "threads",
    "quad_bump",
    "dof_cap",
    "inner_box",
    "diagnostics",
    "timings",
)
_LINE_RE = re.compile(r"^([^=\[]+(?:\[[^\]]*\])?)\s*=(.*)$")
_KEY_RE = re.compile(r"^([a-z_0-9]+)(?:\[([^\]]*)\])?$")
_BOOLS = {"on": True, "true": True, "yes": True, "1": True, "off": False, "false": False, "no": False, "0": False}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


def parse_complex(text):
    t = text.strip().replace(" ", "")
    if "/" in t:
        re_, im = t.split("/", 1)
        return complex(float(re_), float(im))
    return complex(t.replace("i", "j"))


def format_k(k):
    """``10`` for real k, ``5+2i`` otherwise (as used in file names)."""
    k = complex(k)
    re_ = f"{k.real:g}"
    if k.imag == 0:
        return re_
    return f"{re_}{k.imag:+g}i"


@dataclass(frozen=True)
class StudyConfig:
    problem: str
    k: tuple
    p: tuple
    n0: int = 2
    levels: int = 3
    p_ref: int = 4
    ref_n: int = None
    family: str = "nedelec2"
    output: str = "out"
    threads: int = 1
    quad_bump: int = 0
    dof_cap: int = DEFAULT_DOF_CAP
    inner_box: tuple = (0.25, 0.75)
    diagnostics: bool = True
    timings: bool = False
    overrides: tuple = field(default=())

    def _lookup(self, key, k, p):
        best, rank = getattr(self, key), -1
        for name, quals, value in self.overrides:
            if name != key:
                continue
            if "k" in quals and (k is None or abs(quals["k"] - complex(k)) > 1e-12):
                continue
            if "p" in quals and (p is None or quals["p"] != p):
                continue
            if len(quals) > rank:
                best, rank = value, len(quals)
        return best

    def meshes(self, k, p):
        n0 = self._lookup("n0", k, p)
        return tuple(n0 * 2**j for j in range(self._lookup("levels", k, p)))

    def reference_mesh(self, k):
        return self._lookup("ref_n", k, None)

    def validate(self):
        if self.problem not in BUILTIN_PROBLEMS:
            raise ConfigError("problem", f"unknown problem {self.problem!r}; choose from {', '.join(BUILTIN_PROBLEMS)}")
        if not self.k:
            raise ConfigError("k", "at least one wavenumber is required")
        for k in self.k:
            if not abs(k) >= 1.0:
                raise ConfigError("k", f"|k| must be >= 1, got {format_k(k)}")
        if self.family not in NEDELEC_FAMILIES:
            raise ConfigError("family", f"unknown family {self.family!r}; choose from {', '.join(NEDELEC_FAMILIES)}")
        if not self.p:
            raise ConfigError("p", "at least one order is required")
        lo = 1 if self.family == "nedelec2" else 0
        for p in self.p:
            if not lo <= p <= MAX_ORDER:
                raise ConfigError("p", f"order {p} outside {lo}..{MAX_ORDER} for {self.family}")
        if not self.p_ref > max(self.p):
            raise ConfigError("p_ref", f"must exceed max(p) = {max(self.p)}, got {self.p_ref}")
        if self.p_ref > MAX_ORDER:
            raise ConfigError("p_ref", f"must be <= {MAX_ORDER}, got {self.p_ref}")
        if self.threads < 1:
            raise ConfigError("threads", f"must be >= 1, got {self.threads}")
        if self.quad_bump < 0:
            raise ConfigError("quad_bump", f"must be >= 0, got {self.quad_bump}")
        if self.dof_cap < 1:
            raise ConfigError("dof_cap", f"must be >= 1, got {self.dof_cap}")
        lo_b, hi_b = self.inner_box
        if not 0.0 <= lo_b < hi_b <= 1.0:
            raise ConfigError("inner_box", f"need 0 <= lo < hi <= 1, got {lo_b}, {hi_b}")
        for k in self.k:
            ref = self.reference_mesh(k)
            if ref is not None and ref < 1:
                raise ConfigError("ref_n", f"must be >= 1, got {ref}")
            for p in self.p:
                n0 = self._lookup("n0", k, p)
                lv = self._lookup("levels", k, p)
                if n0 < 1:
                    raise ConfigError("n0", f"must be >= 1, got {n0}")
                if lv < 1:
                    raise ConfigError("levels", f"must be >= 1, got {lv}")
                for n in self.meshes(k, p) + ((ref,) if ref else ()):
                    if ref is not None and n % ref and ref % n:
                        raise ConfigError("ref_n", f"reference mesh n={ref} is not nested with level mesh n={n}")
                    if self.problem == "exp1_interface":
                        for c in self.inner_box:
                            if abs(c * n - round(c * n)) > 1e-9:
                                raise ConfigError(
                                    "inner_box", f"coordinate {c:g} is not a multiple of 1/{n} (mesh n={n})"
                                )
        return self


def _parse_int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def _parse_value(key, text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if key == "k":
        try:
            return tuple(parse_complex(t) for t in items)
        except ValueError:
            raise ConfigError(key, f"cannot parse wavenumber list {text!r}") from None
    if key == "p":
        return tuple(_parse_int(key, t) for t in items)
    if key in ("n0", "levels", "p_ref", "ref_n", "threads", "quad_bump", "dof_cap"):
        if len(items) != 1:
            raise ConfigError(key, f"expected one integer, got {text!r}")
        return _parse_int(key, items[0])
    if key == "inner_box":
        try:
            vals = tuple(float(Fraction(t)) for t in items)
        except ValueError:
            raise ConfigError(key, f"expected two numbers, got {text!r}") from None
        if len(vals) != 2:
            raise ConfigError(key, f"expected two numbers lo, hi; got {text!r}")
        return vals
    if key in ("diagnostics", "timings"):
        v = text.strip().lower()
        if v not in _BOOLS:
            raise ConfigError(key, f"expected on/off, got {text!r}")
        return _BOOLS[v]
    return text.strip()


def _parse_qualifiers(key, text):
    quals = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, _, val = part.partition("=")
        name = name.strip()
        if name == "k":
            try:
                quals["k"] = parse_complex(val)
            except ValueError:
                raise ConfigError(key, f"bad k qualifier {val!r}") from None
        elif name == "p":
            quals["p"] = _parse_int(key, val.strip())
        else:
            raise ConfigError(key, f"unknown qualifier {name!r} (use k= or p=)")
    return quals


def parse_config(text):
    """Parse configuration text into a validated :class:`StudyConfig`."""
    values, overrides, seen = {}, [], set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        a = _LINE_RE.match(line)
        if not a:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = re.sub(r"\s+", "", a.group(1)), a.group(2)
        m = _KEY_RE.match(key)
        if not m or m.group(1) not in KEYS:
            raise ConfigError(key, f"unknown key (line {lineno})")
        name, qual = m.groups()
        if key in seen:
            raise ConfigError(key, f"given twice (line {lineno})")
        seen.add(key)
        parsed = _parse_value(name, value)
        if qual is not None:
            if name not in QUALIFIED:
                raise ConfigError(name, f"qualifiers are only allowed on {', '.join(QUALIFIED)}")
            overrides.append((name, _parse_qualifiers(name, qual), parsed))
        else:
            values[name] = parsed
    for req in ("problem", "k", "p"):
        if req not in values:
            raise ConfigError(req, "missing required key")
    return StudyConfig(overrides=tuple(overrides), **values).validate()


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
