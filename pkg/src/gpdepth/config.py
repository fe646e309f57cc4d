"""TOML run configuration.

Top-level keys mirror the CLI flags with underscores, e.g.::

    length_scale = 1.5
    sigma_dl = 0.05
    sigma_meas = 0.001
    nu = 2.5
    inducing_density = 1.0
    cg_tol = 1e-4

Command-line flags override file values.
"""

from __future__ import annotations

import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import InputError

HYPERPARAM_KEYS = ("length_scale", "sigma_dl", "sigma_meas", "output_scale", "nu", "structure")
SOLVER_KEYS = ("inducing_density", "interp", "cg_tol", "cg_max_iters", "precond", "solver")
OTHER_KEYS = ("seed", "scale_divisor")
KNOWN_KEYS = HYPERPARAM_KEYS + SOLVER_KEYS + OTHER_KEYS


def load_config(path) -> dict:
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    with open(path, "rb") as f:
        try:
            data = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"{path}: invalid TOML ({exc})") from None
    unknown = sorted(set(data) - set(KNOWN_KEYS))
    if unknown:
        raise InputError(f"{path}: unknown config keys {unknown}")
    return data


def merge(file_values: dict, flag_values: dict, defaults: dict) -> dict:
    """Resolve each key as flag > file > default; ``None`` flags count as unset."""
    out = dict(defaults)
    out.update({k: v for k, v in file_values.items() if k in defaults})
    out.update({k: v for k, v in flag_values.items() if k in defaults and v is not None})
    return out
