"""File formats: YAML model documents, observation CSVs, run configs, result documents.

Malformed input raises :class:`InputError` naming the file and the line or
field at fault.  Result documents are canonical JSON (sorted keys, fixed
indentation, no timestamps), so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import rng as rngmod
from .bridge.estimator import BridgeConfig
from .fixtures import get_fixture
from .inference.data import ObservedPath
from .inference.frem import FREMConfig
from .inference.phase1 import Phase1Config
from .model import PropensityFactor, ReactionChannel, SRNModel, validate_model


class InputError(ValueError):
    """Bad user input; ``where`` is ``file``, ``file:line`` or ``file:field``."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where
        self.detail = message


# models

def model_to_dict(model: SRNModel) -> dict:
    out: dict[str, Any] = {"name": model.name, "species": list(model.species_names), "channels": []}
    if model.theta_true is not None:
        out["theta_true"] = list(model.theta_true)
    for ch in model.channels:
        c: dict[str, Any] = {"stoich": list(ch.stoich), "propensity": []}
        if ch.label:
            c["label"] = ch.label
        if ch.scale != 1.0:
            c["scale"] = ch.scale
        if ch.shift is not None:
            c["shift"] = list(ch.shift)
        for f in ch.factors:
            fd: dict[str, Any] = {"species": model.species_names[f.species]}
            if f.order != 1:
                fd["order"] = f.order
            if f.guard_min is not None:
                fd["guard"] = f.guard_min
            c["propensity"].append(fd)
        out["channels"].append(c)
    return out


def _int(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise InputError(where, f"expected an integer, got {v!r}")
    return int(v)


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise InputError(where, f"expected a finite number, got {v!r}")
    return float(v)


def model_from_dict(doc: Any, source: str = "<model>") -> SRNModel:
    """Build a model from its document form.

    ``stoich`` is a list in species order or a ``{species: change}`` mapping;
    each propensity factor names a species with optional ``order`` (falling
    factorial degree) and ``guard`` (the factor is zero below it).
    """
    if not isinstance(doc, dict):
        raise InputError(source, "model document must be a mapping")
    species = doc.get("species")
    if not isinstance(species, list) or not species or not all(isinstance(s, str) for s in species):
        raise InputError(f"{source}:species", "expected a non-empty list of names")
    index = {s: i for i, s in enumerate(species)}
    raw = doc.get("channels")
    if not isinstance(raw, list) or not raw:
        raise InputError(f"{source}:channels", "expected a non-empty list")
    channels = []
    for j, c in enumerate(raw):
        at = f"{source}:channels[{j}]"
        if not isinstance(c, dict):
            raise InputError(at, "channel must be a mapping")
        st = c.get("stoich")
        if isinstance(st, dict):
            unknown = set(st) - set(index)
            if unknown:
                raise InputError(f"{at}.stoich", f"unknown species {sorted(unknown)}")
            vec = [0] * len(species)
            for name, v in st.items():
                vec[index[name]] = _int(v, f"{at}.stoich.{name}")
        elif isinstance(st, list):
            if len(st) != len(species):
                raise InputError(f"{at}.stoich", f"expected {len(species)} entries, got {len(st)}")
            vec = [_int(v, f"{at}.stoich[{i}]") for i, v in enumerate(st)]
        else:
            raise InputError(f"{at}.stoich", "expected a list or a species mapping")
        factors = []
        for k, f in enumerate(c.get("propensity") or []):
            fat = f"{at}.propensity[{k}]"
            if not isinstance(f, dict) or f.get("species") not in index:
                raise InputError(fat, f"expected a mapping with a species from {species}")
            order = _int(f.get("order", 1), f"{fat}.order")
            guard = f.get("guard")
            factors.append(PropensityFactor(index[f["species"]], order,
                                            None if guard is None else _int(guard, f"{fat}.guard")))
        shift = c.get("shift")
        if shift is not None:
            if not isinstance(shift, list):
                raise InputError(f"{at}.shift", "expected a list")
            shift = tuple(_int(v, f"{at}.shift[{i}]") for i, v in enumerate(shift))
        channels.append(ReactionChannel(tuple(vec), tuple(factors), str(c.get("label", "")),
                                        _num(c.get("scale", 1.0), f"{at}.scale"), shift))
    theta = doc.get("theta_true")
    if theta is not None:
        if not isinstance(theta, list) or len(theta) != len(channels):
            raise InputError(f"{source}:theta_true", f"expected {len(channels)} numbers")
        theta = tuple(_num(v, f"{source}:theta_true[{i}]") for i, v in enumerate(theta))
    model = SRNModel(tuple(species), tuple(channels), name=str(doc.get("name", "")), theta_true=theta)
    problems = validate_model(model)
    if problems:
        raise InputError(source, "; ".join(problems))
    return model


def dump_model(model: SRNModel) -> str:
    return yaml.safe_dump(model_to_dict(model), sort_keys=False)


def load_model(spec: str | Path) -> SRNModel:
    """A model file path, or ``fixture:<name>`` for a built-in example."""
    spec = str(spec)
    if spec.startswith("fixture:"):
        try:
            fx = get_fixture(spec.split(":", 1)[1])
        except KeyError as exc:
            raise InputError(spec, str(exc.args[0])) from None
        return fx.model
    return model_from_dict(_read_structured(spec), spec)


def _read_structured(path: str | Path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(str(path), exc.strerror or str(exc)) from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise InputError(where, f"cannot parse: {getattr(exc, 'problem', exc)}") from None


# observations

def read_observations(path: str | Path, species: Sequence[str] | None = None,
                      delta: float | None = None, time_scale: float | None = None) -> list[ObservedPath]:
    """Paths from a ``path_id,time,<species...>`` CSV, in order of first appearance.

    ``delta`` converts measured levels to counts of ``delta`` units (values
    must then be multiples of ``delta`` up to rounding); ``time_scale``
    divides all times.  Together they rescale wear-style data to unit steps
    on ``[0, 1]``.
    """
    path = str(path)
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise InputError(path, exc.strerror or str(exc)) from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}:1", "missing header")
        header = [h.strip() for h in header]
        if header[:2] != ["path_id", "time"] or len(header) < 3:
            raise InputError(f"{path}:1", "header must start with path_id,time then one column per species")
        cols = header[2:]
        if species is not None and list(cols) != list(species):
            raise InputError(f"{path}:1", f"species columns {cols} do not match the model {list(species)}")
        rows: dict[str, tuple[list, list]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}", f"expected {len(header)} fields, got {len(row)}")
            pid = row[0].strip()
            try:
                t = float(row[1])
            except ValueError:
                raise InputError(f"{path}:{lineno}", f"field 'time': not a number: {row[1]!r}") from None
            if not math.isfinite(t):
                raise InputError(f"{path}:{lineno}", "field 'time': not finite")
            if time_scale is not None:
                t /= time_scale
            counts = []
            for name, raw in zip(cols, row[2:]):
                counts.append(_parse_count(raw, delta, f"{path}:{lineno}", name))
            times, states = rows.setdefault(pid, ([], []))
            if times and t <= times[-1]:
                raise InputError(f"{path}:{lineno}", f"field 'time': path {pid!r} times must increase "
                                                     f"({t} after {times[-1]})")
            times.append(t)
            states.append(counts)
    return [ObservedPath(pid, np.array(t), np.array(s, dtype=np.int64).reshape(len(t), len(cols)))
            for pid, (t, s) in rows.items()]


def _parse_count(raw: str, delta, where, name) -> int:
    try:
        v = float(raw)
    except ValueError:
        raise InputError(where, f"field {name!r}: not a number: {raw!r}") from None
    if delta is not None:
        v /= delta
    if not math.isfinite(v) or abs(v - round(v)) > 1e-6 * max(1.0, abs(v)):
        raise InputError(where, f"field {name!r}: {raw!r} is not a whole count")
    if v < 0:
        raise InputError(where, f"field {name!r}: negative count {raw!r}")
    return int(round(v))


def format_observations(paths: Sequence[ObservedPath], species: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "time", *species])
    for p in paths:
        for t, x in zip(p.times, p.states):
            w.writerow([p.path_id, repr(float(t)), *(int(v) for v in x)])
    return buf.getvalue()


def write_observations(path: str | Path, paths: Sequence[ObservedPath], species: Sequence[str]) -> None:
    write_text(path, format_observations(paths, species))


# run configuration

@dataclass
class RunConfig:
    """Everything that determines a run, flat so each field maps to one CLI flag."""

    seeds: list[list[float]] = field(default_factory=list)
    n_chains: int = 4  # used when seeds is empty: seeds drawn uniformly from (0, seed_upper]
    seed_upper: list[float] = field(default_factory=list)
    M0: int = 100
    cv0: float = 0.1
    gamma: float = 0.05
    C_L: float = 2.0
    c_reg: float = 1.0
    max_rounds: int = 8
    t_star_frac: float = 0.5
    rhat_threshold: float = 1.4
    ma_order: int = 3
    ma_tol: float = 0.05
    max_iter: int = 300
    phase1_mode: str = "per-interval"
    skip_phase1: bool = False
    ode_dt: float | None = None
    master_seed: int = 0
    output_dir: str = "."

    def __post_init__(self):
        for name in ("cv0", "gamma", "C_L", "rhat_threshold", "ma_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.t_star_frac < 1:
            raise ValueError("t_star_frac must lie in (0, 1)")
        # a single seed is fine for phase I; chain runs check for two themselves
        if not self.seeds and self.n_chains < 1:
            raise ValueError("n_chains must be positive")
        # builds the nested configs, which validate the remaining fields
        self.frem_config()

    def frem_config(self) -> FREMConfig:
        bridge = BridgeConfig(M0=self.M0, cv0=self.cv0, gamma=self.gamma, C_L=self.C_L, c_reg=self.c_reg,
                              max_rounds=self.max_rounds, t_star_frac=self.t_star_frac)
        phase1 = Phase1Config(mode=self.phase1_mode, t_star_frac=self.t_star_frac, ode_dt=self.ode_dt)
        return FREMConfig(bridge=bridge, phase1=phase1, run_phase1=not self.skip_phase1,
                          rhat_threshold=self.rhat_threshold, ma_order=self.ma_order, ma_tol=self.ma_tol,
                          max_iter=self.max_iter)

    def chain_seeds(self, model: SRNModel) -> list[np.ndarray]:
        if self.seeds:
            out = [np.asarray(s, dtype=np.float64) for s in self.seeds]
            if any(s.shape != (model.J,) for s in out):
                raise ValueError(f"every seed needs {model.J} entries")
            return out
        if len(self.seed_upper) != model.J:
            raise ValueError(f"without seeds, seed_upper needs {model.J} entries")
        g = rngmod.stream(self.master_seed, rngmod.SEEDS)
        hi = np.asarray(self.seed_upper, dtype=np.float64)
        # (0, hi]: 1 - U is in (0, 1]
        return [hi * (1.0 - g.random(model.J)) for _ in range(self.n_chains)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<config>") -> "RunConfig":
        if not isinstance(doc, dict):
            raise InputError(source, "config must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise InputError(f"{source}:{unknown[0]}", f"unknown field; known fields are {sorted(known)}")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise InputError(source, str(exc)) from None


def load_run_config(path: str | Path) -> RunConfig:
    """YAML or JSON (JSON parses as YAML)."""
    doc = _read_structured(path) or {}
    return RunConfig.from_dict(doc, str(path))


# results

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def canonical_json(doc) -> str:
    """Sorted keys, two-space indent, non-finite floats as null, trailing newline."""
    return json.dumps(_clean(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def trace_table(result_doc: dict) -> str:
    """One row per (iteration, chain): the parameter, then max R-hat and max MA statistic.

    The diagnostics start once traces are long enough, so early rows leave
    them blank.
    """
    chains = result_doc["chains"]
    J = len(result_doc["cluster_average"])
    n_iter = max(len(c["trace"]) for c in chains)
    offset = n_iter - len(result_doc["rhat"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "chain", *[f"c{j + 1}" for j in range(J)], "rhat_max", "ma_max"])
    for p in range(n_iter):
        k = p - offset
        rh = ma = ""
        if k >= 0:
            r = [v for v in result_doc["rhat"][k] if v is not None]
            rh = repr(max(r)) if r else ""
            ma = repr(max(result_doc["ma"][k]))
        for c in chains:
            if p < len(c["trace"]):
                w.writerow([p, c["index"], *[repr(v) for v in c["trace"][p]], rh, ma])
    return buf.getvalue()


def write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise InputError(str(path), exc.strerror or str(exc)) from None
