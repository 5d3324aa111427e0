"""Suite configuration: YAML loading, validation with line diagnostics, hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .flow_geometry import (EuclideanExact, FlatTorus, FlowSpec, RoundSphere, WarpedS2,
                            default_warped_profile)

FLOW_KINDS = ("euclidean", "torus", "round_sphere", "warped_s2")


def default_text() -> str:
    return resources.files("rflab").joinpath("defaults.yaml").read_text()


def default_tree() -> dict:
    return yaml.safe_load(default_text())


def _line_of(text: str | None, path: tuple) -> str:
    """``" (line N)"`` for the node at ``path`` in ``text`` when it can be located."""
    if not text:
        return ""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return ""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    break
            if nxt is None:
                break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    return f" (line {node.start_mark.line + 1})" if node is not None else ""


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass(frozen=True)
class SuiteConfig:
    """Validated configuration tree (see ``defaults.yaml`` for every key)."""

    tree: dict

    @property
    def seed(self) -> int:
        return int(self.tree["seed"])

    @property
    def grid(self) -> int:
        return int(self.tree["grid"])

    @property
    def steps(self) -> int:
        return int(self.tree["steps"])

    @property
    def tol_scale(self) -> float:
        return float(self.tree["tol_scale"])

    @property
    def out(self) -> str:
        return str(self.tree["out"])

    @property
    def suites(self) -> list[str]:
        return list(self.tree["suites"])

    @property
    def workers(self) -> int:
        return int(self.tree["workers"])

    @property
    def paths(self) -> int:
        return int(self.tree["pathspace"]["paths"])

    @property
    def steps_per_slot(self) -> int:
        return int(self.tree["pathspace"]["steps_per_slot"])

    def tol(self, suite: str, value: float) -> float:
        """``value`` times the global and per-suite tolerance multipliers."""
        return value * self.tol_scale * float(self.tree["tolerances"].get(suite, 1.0))

    def flow_spec(self) -> FlowSpec:
        return flow_spec_from_tree(self.tree["flow"])

    def hashable(self) -> dict:
        """The tree without output-only keys."""
        t = copy.deepcopy(self.tree)
        t.pop("out", None)
        t.pop("workers", None)
        return t

    @property
    def hash(self) -> str:
        blob = json.dumps(self.hashable(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def flow_spec_from_tree(f: dict) -> FlowSpec:
    kind = f["kind"]
    if kind == "euclidean":
        k = EuclideanExact(int(f.get("n", 1)))
    elif kind == "torus":
        k = FlatTorus((float(f.get("period", 2 * math.pi)),))
    elif kind == "round_sphere":
        k = RoundSphere(int(f.get("n", 2)), float(f.get("radius", 1.0)))
    else:
        coef = f.get("cos_coefficients")
        if coef is None:
            k = default_warped_profile()
        else:
            c = np.asarray(coef, dtype=float)
            k = WarpedS2.from_function(lambda x: np.cos(np.multiply.outer(x, np.arange(c.size))) @ c)
    return FlowSpec(k, float(f.get("t_min", 0.0)), float(f.get("t_max", 0.3)))


def _require(cond: bool, msg: str, text: str | None, path: tuple):
    if not cond:
        raise ConfigError(f"{'.'.join(str(p) for p in path)}: {msg}{_line_of(text, path)}")


def _positive_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0


def validate(tree: dict, known_suites: list[str], text: str | None = None) -> SuiteConfig:
    """Check types and ranges; errors name the field and, for files, the line."""
    d = default_tree()
    for key in tree:
        _require(key in d, "unknown key", text, (key,))
    t = _merge(d, tree)
    s = t["seed"]
    _require(isinstance(s, int) and not isinstance(s, bool) and 0 <= s < 2 ** 64,
             "seed must be an integer in [0, 2^64)", text, ("seed",))
    for key, lo in (("grid", 32), ("steps", 2), ("workers", 1)):
        v = t[key]
        _require(isinstance(v, int) and not isinstance(v, bool) and v >= lo, f"must be an integer >= {lo}",
                 text, (key,))
    _require(t["steps"] % 2 == 0, "must be even", text, ("steps",))
    _require(_positive_number(t["tol_scale"]), "must be a positive number", text, ("tol_scale",))
    _require(isinstance(t["out"], str) and t["out"] != "", "must be a non-empty path", text, ("out",))
    suites = t["suites"]
    if isinstance(suites, str):
        suites = [x.strip() for x in suites.split(",") if x.strip()]
        t["suites"] = suites
    _require(isinstance(suites, list) and suites, "must be a non-empty list", text, ("suites",))
    for i, name in enumerate(suites):
        _require(name == "all" or name in known_suites, f"unknown suite {name!r}", text, ("suites", i))
    tols = t["tolerances"]
    _require(isinstance(tols, dict), "must be a mapping", text, ("tolerances",))
    for name, v in tols.items():
        _require(name in known_suites, f"unknown suite {name!r}", text, ("tolerances", name))
        _require(_positive_number(v), "tolerances must be positive", text, ("tolerances", name))
    ps = t["pathspace"]
    for key in ps:
        _require(key in d["pathspace"], "unknown key", text, ("pathspace", key))
    for key, lo in (("paths", 1000), ("steps_per_slot", 50)):
        v = ps[key]
        _require(isinstance(v, int) and not isinstance(v, bool) and v >= lo, f"must be an integer >= {lo}",
                 text, ("pathspace", key))
    f = t["flow"]
    _require(isinstance(f, dict), "must be a mapping", text, ("flow",))
    _require(f.get("kind") in FLOW_KINDS, f"kind must be one of {', '.join(FLOW_KINDS)}", text, ("flow", "kind"))
    for key in f:
        _require(key in ("kind", "n", "period", "radius", "t_min", "t_max", "cos_coefficients"), "unknown key",
                 text, ("flow", key))
    try:
        flow_spec_from_tree(f)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"flow: {exc}{_line_of(text, ('flow',))}") from None
    return SuiteConfig(t)


def load_config(path: str | Path | None, known_suites: list[str]) -> SuiteConfig:
    """Read a YAML file (or the defaults when ``path`` is ``None``)."""
    if path is None:
        return validate({}, known_suites)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"malformed YAML in {path}{where}: {getattr(exc, 'problem', exc)}") from None
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: the top level must be a mapping (line 1)")
    return validate(tree, known_suites, text)


def with_overrides(cfg: SuiteConfig, known_suites: list[str], **over) -> SuiteConfig:
    """Apply command-line overrides and revalidate."""
    tree = copy.deepcopy(cfg.tree)
    for k, v in over.items():
        if v is not None:
            tree[k] = v
    return validate(tree, known_suites)
