"""Experiment descriptors: TOML loading, schema checks and precondition validation.

A descriptor file holds one or more experiments::

    [[experiment]]
    name = "ou-basic"
    kind = "ou"

    [experiment.params]
    A = [[-1.0, 0.0], [0.0, -1.0]]
    C = [[0.0, 1.0], [-1.0, 0.0]]

    [experiment.tolerances]
    closed_form = 1e-8

Unknown keys are rejected with the line they appear on.
"""

import copy
import re
from dataclasses import dataclass, field

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid descriptor; ``line`` is the 1-based source line when known."""

    def __init__(self, msg, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + msg)


@dataclass
class Experiment:
    name: str
    kind: str
    params: dict
    tolerances: dict
    description: str = ""
    derived: dict = field(default_factory=dict)

    def echo(self):
        """Plain-data view of the validated descriptor (stable key order)."""
        return {"name": self.name, "kind": self.kind, "description": self.description,
                "params": _plain(self.params), "tolerances": _plain(self.tolerances)}


@dataclass
class Descriptor:
    experiments: list
    source: str = ""
    derived: dict = field(default_factory=dict)

    def echo(self):
        return {"experiments": [e.echo() for e in self.experiments]}


_EXPERIMENT_KEYS = ("name", "kind", "description", "params", "tolerances")
_HEADER = re.compile(r"^\s*(\[\[?)\s*([^\]]+?)\s*\]\]?\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+|\"[^\"]*\")\s*=")


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(x[k]) for k in sorted(x)}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _locate(text, index, table, key):
    """Line of ``key`` inside experiment ``index`` (table ``None``, params or tolerances)."""
    exp = -1
    current = None
    top = True
    for n, line in enumerate(text.splitlines(), 1):
        m = _HEADER.match(line)
        if m:
            name = m.group(2).strip()
            top = False
            if m.group(1) == "[[" and name == "experiment":
                exp += 1
                current = None
            elif name.startswith("experiment."):
                current = name.split(".", 1)[1]
            else:
                current = ("other", name)
            continue
        k = _KEY.match(line)
        if not k:
            continue
        kname = k.group(1).strip('"')
        if index is None and top and kname == key:
            return n
        if index is None and current == ("other", key):
            return n
        if exp == index and current == table and kname == key:
            return n
    if index is None:
        for n, line in enumerate(text.splitlines(), 1):
            m = _HEADER.match(line)
            if m and m.group(2).strip().split(".")[0] == key:
                return n
    return None


def _parse_line(err):
    m = re.search(r"line (\d+)", str(err))
    return int(m.group(1)) if m else None


def loads(text, path=None):
    """Parse and validate descriptor text."""
    from grasq.cli.experiments import KINDS

    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}", _parse_line(exc), path) from None
    return _build(raw, text, path)


def from_echo(echo):
    """Rebuild a descriptor from the ``descriptor`` echo stored in a report."""
    exps = echo["experiments"] if "experiments" in echo else [echo]
    raw = {"experiment": [{k: e[k] for k in _EXPERIMENT_KEYS if k in e} for e in exps]}
    return _build(raw, "", None)


def _build(raw, text, path):
    from grasq.cli.experiments import KINDS

    for key in raw:
        if key != "experiment":
            raise ConfigError(f"unknown top-level key {key!r}", _locate(text, None, None, key), path)
    exps = raw.get("experiment")
    if exps is None:
        raise ConfigError("no [[experiment]] tables", None, path)
    if isinstance(exps, dict):
        exps = [exps]
    out = []
    names = set()
    for i, e in enumerate(exps):
        for key in e:
            if key not in _EXPERIMENT_KEYS:
                raise ConfigError(f"unknown experiment key {key!r}", _locate(text, i, None, key), path)
        kind = e.get("kind")
        if kind is None:
            raise ConfigError(f"experiment #{i + 1} has no kind", None, path)
        if kind not in KINDS:
            raise ConfigError(f"unknown kind {kind!r}; known: {', '.join(KINDS)}",
                              _locate(text, i, None, "kind"), path)
        name = e.get("name", f"{kind}-{i + 1}")
        if not isinstance(name, str) or not re.fullmatch(r"[A-Za-z0-9_.\-]+", name):
            raise ConfigError(f"experiment name {name!r} must be a plain identifier",
                              _locate(text, i, None, "name"), path)
        if name in names:
            raise ConfigError(f"duplicate experiment name {name!r}", _locate(text, i, None, "name"), path)
        names.add(name)
        spec = KINDS[kind]
        params = e.get("params", {})
        tols = e.get("tolerances", {})
        if not isinstance(params, dict) or not isinstance(tols, dict):
            raise ConfigError("params and tolerances must be tables", None, path)
        for key in params:
            if key not in spec.params:
                raise ConfigError(f"{name}: unknown parameter {key!r} for kind {kind!r}; "
                                  f"allowed: {', '.join(spec.params)}", _locate(text, i, "params", key), path)
        for key in tols:
            if key not in spec.tolerances:
                raise ConfigError(f"{name}: unknown tolerance {key!r} for kind {kind!r}; "
                                  f"allowed: {', '.join(spec.tolerances)}", _locate(text, i, "tolerances", key), path)
        full = {}
        for key, p in spec.params.items():
            if key in params and params[key] is not None:
                try:
                    full[key] = p.coerce(params[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{name}: parameter {key!r}: {exc}", _locate(text, i, "params", key), path) from None
            elif p.required:
                raise ConfigError(f"{name}: missing required parameter {key!r} for kind {kind!r}", None, path)
            else:
                full[key] = copy.deepcopy(p.default)
        tol = dict(spec.tolerances)
        for key, v in tols.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
                raise ConfigError(f"{name}: tolerance {key!r} must be a non-negative number",
                                  _locate(text, i, "tolerances", key), path)
            tol[key] = float(v)
        exp = Experiment(name, kind, full, tol, str(e.get("description", "")))
        try:
            derived = spec.validate(exp)
        except (ValueError, ArithmeticError) as exc:
            key = getattr(exc, "param", None)
            line = _locate(text, i, "params", key) if key else None
            raise ConfigError(f"{name}: {exc}", line, path) from None
        exp.derived = derived or {}
        out.append(exp)
    return Descriptor(out, text)


def load(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read descriptor: {exc.strerror}", None, str(path)) from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError("descriptor is not UTF-8 text", None, str(path)) from None
    return loads(text, str(path))
