"""Experiment configuration: JSON files, command-line overrides and validation."""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from typing import Any

KINDS = (
    "simulate", "growth-rate", "survival", "delta-c", "duality-check", "martingale-check",
    "domination", "campbell", "branching-check", "ball-profile", "rw-decay", "oracle-check", "accept",
)

# Per-kind parameters as (type, default).  Types: float, int, str, bool,
# floats (a list of numbers), words (a list of group elements) and
# optfloat (a number or null).
PARAMS: dict[str, dict[str, tuple[str, Any]]] = {
    "simulate": {"initial": ("words", ["e"]), "horizon": ("float", 2.0), "obs": ("floats", []), "dual": ("bool", False),
                 "size_cap": ("int", 1_000_000)},
    "growth-rate": {"deltas": ("floats", []), "grid": ("floats", [1.0, 2.0, 3.0, 4.0, 6.0, 8.0]),
                    "method": ("str", "regression"), "min_survivors": ("int", 0),
                    "size_cap": ("int", 1_000_000)},
    "survival": {"initial": ("words", ["e"]), "horizon": ("float", 10.0), "escape": ("int", 1000),
                 "size_cap": ("int", 1_000_000)},
    "delta-c": {"depth": ("int", 6), "horizon": ("float", 100.0), "escape": ("int", 1000)},
    "duality-check": {"A": ("words", ["e"]), "B": ("words", ["e"]), "times": ("floats", [0.5, 1.0, 2.0])},
    "martingale-check": {"functional": ("str", "cardinality"), "initial": ("words", ["e"]), "t": ("float", 1.0),
                         "grid_points": ("int", 201)},
    "domination": {"A": ("words", ["e"]), "B": ("words", ["e", "a"]), "times": ("floats", [5.0, 10.0, 20.0])},
    "campbell": {"window": ("words", ["e", "a"]), "t": ("optfloat", None), "gamma": ("optfloat", None),
                 "gammas": ("floats", []), "horizon": ("float", 100.0), "invariant_replicas": ("int", 0),
                 "escape": ("int", 1000)},
    "branching-check": {"t": ("float", 1.0), "sites": ("words", ["e", "a", "A"]), "pop_cap": ("int", 2_000_000)},
    "ball-profile": {"radius": ("int", 4), "threshold": ("float", 0.1)},
    "rw-decay": {"t": ("optfloat", None), "gamma": ("optfloat", None), "m_max": ("int", 20), "walks": ("int", 20)},
    "oracle-check": {"initial": ("words", ["e"]), "times": ("floats", [0.25, 0.5, 1.0])},
    "accept": {"tier": ("str", "fast"), "only": ("floats", [])},
}

TOP_LEVEL = ("kind", "group", "kernel", "delta", "seed", "threads", "replicas", "params")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"config field {field!r}{where}: {message}")


def split_words(text: str) -> list[str]:
    """Split ``"a, b, (1,2)"`` on commas that are not inside parentheses."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail or out:
        out.append(tail)
    return [w for w in out if w != ""]


def _coerce(name: str, kind: str, value):
    try:
        if kind == "float":
            return float(value)
        if kind == "optfloat":
            return None if value is None or value == "" else float(value)
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("not an integer")
            return int(value)
        if kind == "str":
            return str(value)
        if kind == "bool":
            if isinstance(value, str):
                if value.lower() in ("1", "true", "yes"):
                    return True
                if value.lower() in ("0", "false", "no"):
                    return False
                raise ValueError("not a boolean")
            return bool(value)
        if kind == "floats":
            items = split_words(value) if isinstance(value, str) else list(value)
            return [float(x) for x in items]
        if kind == "words":
            return split_words(value) if isinstance(value, str) else [str(x) for x in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"expected {kind}, got {value!r} ({exc})") from None
    raise AssertionError(kind)


@dataclass
class ExperimentConfig:
    kind: str
    group: str = "Z"
    kernel: str = "nn(1)"
    delta: float = 1.0
    seed: int = 0
    threads: int | None = None
    replicas: int = 10_000
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"unknown experiment {self.kind!r}; choose from {', '.join(KINDS)}")
        self.delta = _coerce("delta", "float", self.delta)
        self.seed = _coerce("seed", "int", self.seed)
        self.replicas = _coerce("replicas", "int", self.replicas)
        if self.threads is not None:
            self.threads = _coerce("threads", "int", self.threads)
            if self.threads < 1:
                raise ConfigError("threads", "must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if self.replicas < 1:
            raise ConfigError("replicas", "must be at least 1")
        if self.delta < 0:
            raise ConfigError("delta", "must be nonnegative")
        spec = PARAMS[self.kind]
        unknown = sorted(set(self.params) - set(spec))
        if unknown:
            raise ConfigError(f"params.{unknown[0]}", f"not a parameter of {self.kind}; known: {', '.join(spec)}")
        full = {}
        for key, (typ, default) in spec.items():
            full[key] = _coerce(f"params.{key}", typ, self.params[key]) if key in self.params else default
        self.params = full

    # parsed objects --------------------------------------------------------
    def parsed_group(self):
        from .groups import parse_group

        try:
            return parse_group(self.group)
        except ValueError as exc:
            raise ConfigError("group", str(exc)) from None

    def parsed_params(self):
        from .kernel import ProcessParams, parse_kernel

        g = self.parsed_group()
        try:
            k = parse_kernel(g, self.kernel)
        except ValueError as exc:
            raise ConfigError("kernel", str(exc)) from None
        return ProcessParams(k, self.delta)

    def elements(self, key: str):
        g = self.parsed_group()
        try:
            return [g.parse_element(w) for w in self.params[key]]
        except ValueError as exc:
            raise ConfigError(f"params.{key}", str(exc)) from None

    def validate(self) -> "ExperimentConfig":
        """Parse every group, kernel and element reference once."""
        if self.kind in ("accept",):
            return self
        if self.kind == "ball-profile":
            self.parsed_group()
        else:
            self.parsed_params()
        for key, (typ, _) in PARAMS[self.kind].items():
            if typ == "words":
                self.elements(key)
        return self

    def echo(self) -> dict:
        return asdict(self)


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config_file(path: str) -> tuple[dict, str]:
    """Read a JSON config, reporting syntax errors with their line."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", exc.msg, exc.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be an object", 1)
    for key in data:
        if key not in TOP_LEVEL:
            raise ConfigError(key, f"unknown key; known: {', '.join(TOP_LEVEL)}", _line_of(text, key))
    if "params" in data and not isinstance(data["params"], dict):
        raise ConfigError("params", "must be an object", _line_of(text, "params"))
    return data, text


def build_config(file_data: dict | None, overrides: dict, file_text: str = "") -> ExperimentConfig:
    """Merge file keys with explicit overrides (overrides win) and validate."""
    data = dict(file_data or {})
    params = dict(data.pop("params", {}) or {})
    for key, value in overrides.items():
        if value is None:
            continue
        if key in TOP_LEVEL:
            data[key] = value
        else:
            params[key] = value
    data["params"] = params
    if "kind" not in data:
        raise ConfigError("kind", "no experiment given")
    try:
        cfg = ExperimentConfig(**data)
        return cfg.validate()
    except ConfigError as exc:
        if exc.line is None and file_text:
            exc = ConfigError(exc.field, str(exc).split(": ", 1)[1], _line_of(file_text, exc.field.split(".")[-1]))
        raise exc
