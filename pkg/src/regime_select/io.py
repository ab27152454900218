"""File formats: model configs (YAML), trajectory CSV, study configs, metadata.

Numbers are serialized with 17 significant digits so that a write/read round
trip reproduces every double exactly.  Output files are written atomically
(temporary file plus rename) and each command output is accompanied by a
``<name>.meta.yaml`` sidecar with the resolved configuration and seeds.
"""

from __future__ import annotations

import csv
import io as _io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .estimation import EmConfig
from .model import ModelSpec, ParameterBounds, RegimeParams, Trajectory
from .selection import PenaltyConfig

__all__ = [
    "fmt",
    "atomic_write_text",
    "model_spec_from_dict",
    "model_spec_to_dict",
    "load_model_config",
    "save_model_config",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "em_config_from_dict",
    "penalty_config_from_dict",
    "StudyConfig",
    "load_study_config",
    "RunMetadata",
    "write_metadata",
]


def fmt(x: float) -> str:
    """Render a float with 17 significant digits (lossless round trip)."""
    return f"{float(x):.17g}"


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    handle = tempfile.NamedTemporaryFile(
        "w", dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False
    )
    try:
        with handle as fh:
            fh.write(text)
        os.replace(handle.name, path)
    except BaseException:
        try:
            os.unlink(handle.name)
        except OSError:
            pass
        raise


def _require_keys(mapping: dict, allowed: set[str], context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ValueError(f"unknown keys in {context}: {sorted(unknown)}")


def model_spec_from_dict(data: dict) -> tuple[ModelSpec, ParameterBounds]:
    """Build a model (and its bounds) from the documented config mapping.

    Schema: ``m`` (int), ``regimes`` (list of {b, alpha, sigma2}),
    ``transition`` (list of m rows of m probabilities), optional ``bounds``
    ({c, d, b_max, alpha_max}).
    """
    if not isinstance(data, dict):
        raise ValueError("model config must be a mapping")
    _require_keys(data, {"m", "regimes", "transition", "bounds"}, "model config")
    for key in ("m", "regimes", "transition"):
        if key not in data:
            raise ValueError(f"model config is missing '{key}'")
    m = int(data["m"])
    regimes_raw = data["regimes"]
    if not isinstance(regimes_raw, list) or len(regimes_raw) != m:
        raise ValueError(f"'regimes' must be a list of {m} mappings")
    regimes = []
    for i, entry in enumerate(regimes_raw):
        if not isinstance(entry, dict):
            raise ValueError(f"regime {i} must be a mapping")
        _require_keys(entry, {"b", "alpha", "sigma2"}, f"regime {i}")
        for key in ("b", "alpha", "sigma2"):
            if key not in entry:
                raise ValueError(f"regime {i} is missing '{key}'")
        regimes.append(
            RegimeParams(
                b=float(entry["b"]), alpha=float(entry["alpha"]), sigma2=float(entry["sigma2"])
            )
        )
    transition = np.asarray(data["transition"], dtype=np.float64)
    if transition.ndim == 1:
        if transition.size != m * m:
            raise ValueError("row-major 'transition' must have m*m entries")
        transition = transition.reshape(m, m)
    bounds_raw = data.get("bounds") or {}
    _require_keys(bounds_raw, {"c", "d", "b_max", "alpha_max"}, "bounds")
    defaults = ParameterBounds()
    bounds = ParameterBounds(
        c=float(bounds_raw.get("c", defaults.c)),
        d=float(bounds_raw.get("d", defaults.d)),
        b_max=float(bounds_raw.get("b_max", defaults.b_max)),
        alpha_max=float(bounds_raw.get("alpha_max", defaults.alpha_max)),
    )
    return ModelSpec(regimes, transition), bounds


def model_spec_to_dict(spec: ModelSpec, bounds: ParameterBounds | None = None) -> dict:
    data: dict[str, Any] = {
        "m": spec.m,
        "regimes": [
            {"b": r.b, "alpha": r.alpha, "sigma2": r.sigma2} for r in spec.regimes
        ],
        "transition": [[float(v) for v in row] for row in spec.transition],
    }
    if bounds is not None:
        data["bounds"] = {
            "c": bounds.c, "d": bounds.d, "b_max": bounds.b_max, "alpha_max": bounds.alpha_max
        }
    return data


def load_model_config(path: str | Path) -> tuple[ModelSpec, ParameterBounds]:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return model_spec_from_dict(data)


def save_model_config(spec: ModelSpec, path: str | Path, bounds: ParameterBounds | None = None) -> None:
    atomic_write_text(path, yaml.safe_dump(model_spec_to_dict(spec, bounds), sort_keys=False))


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    """CSV with header ``t,y,x``; row t=0 carries y0 with an empty state.

    States are written 1-based; the in-memory representation is 0-based.
    """
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    has_path = traj.x is not None
    writer.writerow(["t", "y", "x"] if has_path else ["t", "y"])
    writer.writerow([0, fmt(traj.y0)] + ([""] if has_path else []))
    for k in range(traj.n):
        row = [k + 1, fmt(traj.y[k])]
        if has_path:
            row.append(str(int(traj.x[k]) + 1))
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def read_trajectory_csv(path: str | Path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["t", "y"]:
            raise ValueError(f"{path}: expected a 't,y[,x]' header")
        has_path = len(header) == 3 and header[2] == "x"
        y0 = None
        ys: list[float] = []
        xs: list[int] = []
        for row in reader:
            if not row:
                continue
            t = int(row[0])
            value = float(row[1])
            if t == 0:
                y0 = value
                continue
            ys.append(value)
            if has_path:
                if len(row) < 3 or row[2] == "":
                    raise ValueError(f"{path}: row t={t} is missing its state label")
                xs.append(int(row[2]) - 1)
    if y0 is None:
        raise ValueError(f"{path}: no t=0 row carrying y0")
    if not ys:
        raise ValueError(f"{path}: no observations after t=0")
    return Trajectory(y0=y0, y=np.asarray(ys), x=np.asarray(xs, dtype=np.int64) if has_path else None)


def em_config_from_dict(data: dict | None, bounds: ParameterBounds | None = None) -> EmConfig:
    data = dict(data or {})
    _require_keys(
        data,
        {"tolerance", "max_iterations", "restarts", "variance_floor", "transition_floor"},
        "em config",
    )
    defaults = EmConfig()
    bounds = bounds or ParameterBounds()
    return EmConfig(
        tolerance=float(data.get("tolerance", defaults.tolerance)),
        max_iterations=int(data.get("max_iterations", defaults.max_iterations)),
        restarts=int(data.get("restarts", defaults.restarts)),
        variance_floor=float(data.get("variance_floor", bounds.c)),
        transition_floor=float(data.get("transition_floor", defaults.transition_floor)),
        bounds=bounds,
    )


def penalty_config_from_dict(data: dict | None) -> PenaltyConfig:
    data = dict(data or {})
    _require_keys(
        data,
        {"rho", "phi", "phi_constant", "tau2", "lambda_sigma_policy", "sigma2_upper"},
        "penalty config",
    )
    defaults = PenaltyConfig()
    return PenaltyConfig(
        rho=float(data.get("rho", defaults.rho)),
        phi_shape=str(data.get("phi", defaults.phi_shape)),
        phi_constant=float(data.get("phi_constant", defaults.phi_constant)),
        tau2=float(data.get("tau2", defaults.tau2)),
        lambda_sigma_policy=str(data.get("lambda_sigma_policy", defaults.lambda_sigma_policy)),
        sigma2_upper=float(data.get("sigma2_upper", defaults.sigma2_upper)),
    )


@dataclass(eq=False)
class StudyConfig:
    """Parsed Monte Carlo study configuration."""

    spec: ModelSpec
    bounds: ParameterBounds
    n_grid: list[int]
    replications: int
    m_max: int
    base_seed: int
    y0: float
    em: EmConfig
    pen: PenaltyConfig
    raw: dict = field(default_factory=dict)


def load_study_config(path: str | Path) -> StudyConfig:
    """Schema: model (inline mapping or path), n_grid, replications, m_max,
    base_seed, optional y0, em, penalty blocks."""
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError("study config must be a mapping")
    _require_keys(
        data,
        {"model", "n_grid", "replications", "m_max", "base_seed", "y0", "em", "penalty"},
        "study config",
    )
    for key in ("model", "n_grid", "replications"):
        if key not in data:
            raise ValueError(f"study config is missing '{key}'")
    model_entry = data["model"]
    if isinstance(model_entry, str):
        model_path = Path(model_entry)
        if not model_path.is_absolute():
            model_path = path.parent / model_path
        spec, bounds = load_model_config(model_path)
    else:
        spec, bounds = model_spec_from_dict(model_entry)
    return StudyConfig(
        spec=spec,
        bounds=bounds,
        n_grid=[int(v) for v in data["n_grid"]],
        replications=int(data["replications"]),
        m_max=int(data.get("m_max", 4)),
        base_seed=int(data.get("base_seed", 0)),
        y0=float(data.get("y0", 0.0)),
        em=em_config_from_dict(data.get("em"), bounds),
        pen=penalty_config_from_dict(data.get("penalty")),
        raw=data,
    )


@dataclass(eq=False)
class RunMetadata:
    """Provenance attached to every command output."""

    command: str
    config: dict
    seed: int | None
    generator: str
    version: str
    duration_seconds: float

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "generator": self.generator,
            "version": self.version,
            "duration_seconds": self.duration_seconds,
        }


def write_metadata(output_path: str | Path, meta: RunMetadata) -> None:
    sidecar = Path(str(output_path) + ".meta.yaml")
    atomic_write_text(sidecar, yaml.safe_dump(meta.to_dict(), sort_keys=False))
