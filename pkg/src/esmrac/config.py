"""Experiment configuration files (YAML; plain JSON is accepted too).

A config has the sections ``plant``, ``reference_model``, ``reference``,
``controller`` and ``sim`` plus an optional ``output`` path. See
``data/second_order_demo.yaml`` for a complete example. Errors name the
offending field and, when known, its line.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .controller import ControllerDesign, ESLoop, PlantSpec, commensurate_base
from .lti import ReferenceModelSpec
from .sim import SimConfig, Sine, Step

DEMO_NAME = "@demo"
SECTIONS = ("plant", "reference_model", "reference", "controller", "sim")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.line = line
        where = f"{field}" + (f" (line {line})" if line else "")
        super().__init__(f"{where}: {message}")


def demo_config_path() -> Path:
    return Path(str(resources.files("esmrac") / "data" / "second_order_demo.yaml"))


def _line_index(text: str) -> dict:
    """Map dotted key paths to 1-based source lines."""
    index = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return index

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                path = f"{prefix}.{key.value}" if prefix else str(key.value)
                index[path] = key.start_mark.line + 1
                walk(value, path)

    if root is not None:
        walk(root, "")
    return index


@dataclass
class ExperimentConfig:
    data: dict
    plant: PlantSpec | None
    ref: ReferenceModelSpec | None
    design: ControllerDesign | None
    sim: SimConfig | None
    reference: object
    y0: np.ndarray | None
    ym0: np.ndarray | None
    output: str | None

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                section = {"ref": "reference_model", "design": "controller"}.get(name, name)
                raise ConfigError(section, "section is required for this command")


def read_mapping(path) -> tuple[dict, dict]:
    """Load a config file into a dict plus its line index."""
    path = demo_config_path() if str(path) == DEMO_NAME else Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(str(path), f"syntax error: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    return data, _line_index(text)


def load_config(path, overrides=()) -> ExperimentConfig:
    data, lines = read_mapping(path)
    for item in overrides:
        apply_override(data, item)
    return parse_config(data, lines)


def _resolve_key(data: dict, key: str) -> tuple[dict, str]:
    if "." in key:
        *parents, leaf = key.split(".")
        node = data
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, f"{p} is not a section")
        return node, leaf
    if key in data and not isinstance(data[key], dict):
        return data, key
    hits = [s for s in SECTIONS if isinstance(data.get(s), dict) and key in data[s]]
    if key in ("omega_base", "harmonics") and isinstance(data.get("controller"), dict):
        hits = ["controller"]
    if len(hits) != 1:
        raise ConfigError(key, "unknown or ambiguous override key; use section.key")
    return data[hits[0]], key


def apply_override(data: dict, item: str) -> None:
    """Apply ``key=value`` (value parsed as YAML) to a raw config mapping in place."""
    if "=" not in item:
        raise ConfigError(item, "override must look like key=value")
    key, text = item.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(key, f"cannot parse override value {text!r}") from exc
    ctrl = data.get("controller")
    if key.split(".")[-1] == "omega_base" and isinstance(ctrl, dict) and "omegas" in ctrl:
        # keep the harmonics fixed and rescale the base
        try:
            base, harmonics = commensurate_base(ctrl.pop("omegas"))
        except (TypeError, ValueError) as exc:
            raise ConfigError("controller.omegas", str(exc)) from exc
        ctrl["omega_base"] = base
        ctrl["harmonics"] = harmonics
    node, leaf = _resolve_key(data, key)
    node[leaf] = value


class _Fields:
    def __init__(self, section: str, data: dict, lines: dict):
        self.section = section
        self.data = data if data is not None else {}
        self.lines = lines
        if not isinstance(self.data, dict):
            raise ConfigError(section, "must be a mapping", lines.get(section))

    def error(self, key: str, message: str) -> ConfigError:
        path = f"{self.section}.{key}" if key else self.section
        return ConfigError(path, message, self.lines.get(path, self.lines.get(self.section)))

    def get(self, key, default=None, required=False):
        if key not in self.data or self.data[key] is None:
            if required:
                raise self.error(key, "missing required field")
            return default
        return self.data[key]

    def vector(self, key, length=None, default=None, required=False):
        value = self.get(key, default, required)
        if value is None:
            return None
        try:
            arr = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            raise self.error(key, f"expected a list of numbers, got {value!r}") from None
        if arr.ndim == 0 and length is not None:
            arr = np.full(length, float(arr))
        if arr.ndim != 1:
            raise self.error(key, "expected a list of numbers")
        if length is not None and arr.size != length:
            raise self.error(key, f"expected {length} values, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise self.error(key, "values must be finite")
        return arr

    def number(self, key, default=None, required=False):
        value = self.get(key, default, required)
        if value is None:
            return None
        try:
            return float(value)
        except (TypeError, ValueError):
            raise self.error(key, f"expected a number, got {value!r}") from None

    def build(self, key, factory, *args, **kwargs):
        try:
            return factory(*args, **kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise self.error(key, str(exc)) from None


def _parse_design(sec: _Fields, tune: bool = False):
    betas = sec.vector("betas", required=True)
    n = betas.size
    q = sec.vector("q", n, required=True)
    Q = sec.get("Q")
    if Q is not None:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape != (n, n):
            raise sec.error("Q", f"expected a {n}x{n} matrix")
    gamma = sec.get("gamma")
    if gamma is not None:
        gamma = np.asarray(gamma, dtype=float)
        if gamma.ndim == 0:
            gamma = np.full(n + 1, float(gamma))
        if gamma.ndim == 1 and gamma.size != n + 1 or gamma.ndim == 2 and gamma.shape != (n + 1, n + 1):
            raise sec.error("gamma", f"expected {n + 1} diagonal entries or a {n + 1}x{n + 1} matrix")

    has_raw = sec.get("omegas") is not None
    has_base = sec.get("omega_base") is not None or sec.get("harmonics") is not None
    if has_raw and has_base:
        raise sec.error("omegas", "give either omegas or omega_base + harmonics, not both")
    if has_raw:
        omegas = sec.vector("omegas", n + 1)
        sec.build("omegas", commensurate_base, omegas)
    else:
        base = sec.number("omega_base", required=True)
        harmonics = sec.vector("harmonics", n + 1, required=True)
        if base <= 0:
            raise sec.error("omega_base", "must be positive")
        if np.any(harmonics != np.round(harmonics)) or np.any(harmonics < 1):
            raise sec.error("harmonics", "must be positive integers")
        omegas = base * harmonics
    c = sec.vector("c", n + 1, required=True)
    a_hat0 = sec.vector("a_hat0", n + 1, default=np.zeros(n + 1))
    if tune:
        return dict(betas=betas, q=q, Q=np.eye(n) if Q is None else Q, omegas=omegas, amplitudes=c,
                    gammas=sec.vector("gamma", n + 1, required=True), a_hat0=a_hat0)

    d = sec.vector("d", n + 1, required=True)
    g = sec.vector("g", n + 1, required=True)
    phi = sec.vector("phi", n + 1, default=np.zeros(n + 1))
    loops = []
    for i in range(n + 1):
        loops.append(sec.build(f"loop {i}", ESLoop, c=c[i], omega=omegas[i], phi=phi[i], g=g[i], d=d[i]))
    return sec.build("", ControllerDesign, betas, q, loops, a_hat0=a_hat0, gamma=gamma, Q=Q)


def parse_config(data: dict, lines: dict | None = None) -> ExperimentConfig:
    """Validate a raw mapping and build the typed components. Sections are optional here;
    commands call :meth:`ExperimentConfig.require` for what they need."""
    lines = lines or {}
    data = copy.deepcopy(data)
    unknown = set(data) - set(SECTIONS) - {"output"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(key, "unknown top-level key", lines.get(key))

    plant = y0 = None
    if "plant" in data:
        sec = _Fields("plant", data["plant"], lines)
        a = sec.vector("a", required=True)
        plant = sec.build("a", PlantSpec, tuple(a))
        y0 = sec.vector("y0", plant.order, default=np.zeros(plant.order))

    ref = ym0 = None
    if "reference_model" in data:
        sec = _Fields("reference_model", data["reference_model"], lines)
        a_m = sec.vector("a_m", required=True)
        ref = sec.build("a_m", ReferenceModelSpec, tuple(a_m))
        ym0 = sec.vector("ym0", ref.order, default=np.zeros(ref.order))

    sec = _Fields("reference", data.get("reference"), lines)
    kind = str(sec.get("type", "step")).lower()
    if kind == "step":
        reference = Step(sec.number("amplitude", 1.0))
    elif kind in ("sine", "sinusoid"):
        reference = Sine(sec.number("amplitude", 1.0), sec.number("frequency", 1.0), sec.number("phase", 0.0))
    else:
        raise sec.error("type", f"unknown reference type {kind!r} (step or sine)")

    design = None
    if "controller" in data:
        design = _parse_design(_Fields("controller", data["controller"], lines))

    if plant is not None and design is not None and plant.order != design.order:
        raise ConfigError("controller.betas", f"order {design.order} does not match plant order {plant.order}",
                          lines.get("controller.betas"))
    if plant is not None and ref is not None and plant.order != ref.order:
        raise ConfigError("reference_model.a_m", f"order {ref.order} does not match plant order {plant.order}",
                          lines.get("reference_model.a_m"))

    simcfg = None
    if "sim" in data or design is not None:
        sec = _Fields("sim", data.get("sim"), lines)
        t_end = sec.number("t_end", 30.0)
        if t_end <= 0:
            raise sec.error("t_end", "must be positive")
        h = sec.get("h", "auto")
        if h == "auto":
            if design is None:
                raise sec.error("h", "h: auto needs a controller section")
            h = SimConfig.auto_step(design.omegas, t_end)
        else:
            h = sec.number("h")
        stride = sec.get("stride", 1)
        if not isinstance(stride, int) or isinstance(stride, bool):
            raise sec.error("stride", "must be a positive integer")
        simcfg = sec.build("", SimConfig, h=h, t_end=t_end, stride=stride,
                           integrator=str(sec.get("integrator", "rk4")))
        if design is not None and simcfg.h > SimConfig.max_step(design.omegas) * (1 + 1e-12):
            raise sec.error("h", f"exceeds dither resolution limit {SimConfig.max_step(design.omegas):.6g}")

    output = data.get("output")
    return ExperimentConfig(data, plant, ref, design, simcfg, reference, y0, ym0,
                            None if output is None else str(output))


def load_tune_request(path, overrides=()) -> tuple[dict, dict]:
    """Raw mapping and ``tune_gains`` keyword arguments from a partial config."""
    data, lines = read_mapping(path)
    for item in overrides:
        apply_override(data, item)
    if "controller" not in data:
        raise ConfigError("controller", "section is required for tuning")
    return data, _parse_design(_Fields("controller", data["controller"], lines), tune=True)


def design_to_mapping(design: ControllerDesign) -> dict:
    """Controller section for a design; floats are written at full precision."""
    gamma = design.gamma
    is_diag = np.count_nonzero(gamma - np.diag(np.diag(gamma))) == 0
    return {
        "betas": design.betas.tolist(),
        "q": design.q.tolist(),
        "Q": design.Q.tolist(),
        "gamma": np.diag(gamma).tolist() if is_diag else gamma.tolist(),
        "omegas": design.omegas.tolist(),
        "c": design.c.tolist(),
        "d": design.d.tolist(),
        "g": design.g.tolist(),
        "phi": design.phis.tolist(),
        "a_hat0": design.a_hat0.tolist(),
    }


def dump_config(data: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=False, default_flow_style=None)
