"""Experiment configuration: TOML in, validated nested dict out.

Every key has a default except ``kind`` and ``seed``, which may come from the
file or from the command line. Unknown sections or keys are errors, so typos
never pass silently.
"""

from __future__ import annotations

import copy
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("simulate-vrjp", "sample-hn", "sample-h22", "verify-susy", "verify-dynkin", "verify-mw", "scan-h")


class ConfigError(ValueError):
    pass


_NUM = (int, float)

# section -> key -> (accepted types, default)
SCHEMA: dict = {
    "graph": {
        "type": (str, "path"),          # path | torus | edges
        "n_vertices": (int, 2),
        "beta": (_NUM, 1.0),
        "h": (_NUM, 1.0),
        "h_list": (list, []),           # per-vertex h, overrides h when non-empty
        "d": (int, 2),
        "L": (int, 8),
        "edges": (list, []),            # [[i, j, beta], ...]
    },
    "model": {
        "name": (str, "H22"),           # H22 | Hn
        "n": (int, 2),
    },
    "mcmc": {
        "n_burn": (int, 10_000),
        "n_keep": (int, 1_000),
        "thin": (int, 10),
        "n_batches": (int, 100),
        "adapt_every": (int, 50),
        "target_acceptance": (_NUM, 0.4),
        "sigma0": (_NUM, 0.5),
        "guard": (_NUM, 300.0),
    },
    "vrjp": {
        "n_traj": (int, 100_000),
        "strategy": (str, "interval"),
        "start": (int, 0),
        "horizon": (_NUM, 10.0),
        "n_inner": (int, 8),
    },
    "dynkin": {
        "checks": (list, ["two-point", "general-g", "hn"]),
        "a": (int, 0),
        "b": (int, 1),
        "b0": (int, -1),                # -1: sum over b
        "c": (list, []),                # empty: no decay
        "hn_n": (int, 2),
        "use_oracle": (bool, True),
        "use_chain": (bool, True),
        "shared_seed": (bool, False),
    },
    "mw": {
        "tori": (list, [[1, 16], [2, 8]]),
        "h_values": (list, [1.0, 0.3]),
        "models": (list, ["H22", "Hn"]),
        "n": (int, 2),
        "method": (str, "rb"),
        "threshold": (_NUM, 4.0),
    },
    "scan": {
        "d": (int, 2),
        "L_values": (list, [8, 16, 32, 64]),
        "h_values": (list, [1.0, 0.3, 0.1, 0.03]),
        "beta": (_NUM, 1.0),
        "model": (str, "H22"),
        "backend": (str, "vrjp"),
        "max_change": (_NUM, 0.0),      # > 0: plateau contrast instead of growth
        "threshold": (_NUM, 4.0),
    },
    "susy": {
        "n_points": (int, 8),
        "tol": (_NUM, 1e-7),
        "hn_dims": (list, [2, 3]),
    },
}

# --quick divides these budgets
QUICK = {("mcmc", "n_burn"): 5, ("mcmc", "n_keep"): 5, ("vrjp", "n_traj"): 20}

_CHOICES = {
    ("graph", "type"): ("path", "torus", "edges"),
    ("model", "name"): ("H22", "Hn"),
    ("vrjp", "strategy"): ("interval", "killing", "killed-occupation"),
    ("mw", "method"): ("rb", "plain"),
    ("scan", "model"): ("H22", "Hn"),
    ("scan", "backend"): ("vrjp", "chain"),
}


def defaults() -> dict:
    return {sec: {k: copy.deepcopy(v[1]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def _check_type(where: str, value, types):
    if types is _NUM:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    elif types is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, types)
    if not ok:
        name = "number" if types is _NUM else types.__name__
        raise ConfigError(f"{where}: expected {name}, got {type(value).__name__}")


def validate(raw: dict) -> dict:
    """Merge ``raw`` over the defaults and check every field; returns a new dict."""
    raw = dict(raw)
    cfg = defaults()
    kind = raw.pop("kind", None)
    seed = raw.pop("seed", None)
    if kind is None:
        raise ConfigError("missing required field 'kind'")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    if seed is None:
        raise ConfigError("missing required field 'seed'")
    _check_type("seed", seed, int)
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    quick = raw.pop("quick", False)
    _check_type("quick", quick, bool)
    for sec, body in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table")
        for key, value in body.items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            _check_type(f"{sec}.{key}", value, SCHEMA[sec][key][0])
            if isinstance(value, float) or (SCHEMA[sec][key][0] is _NUM):
                value = float(value)
            cfg[sec][key] = value
    for (sec, key), choices in _CHOICES.items():
        if cfg[sec][key] not in choices:
            raise ConfigError(f"{sec}.{key} must be one of {choices}, got {cfg[sec][key]!r}")
    _semantic(cfg)
    cfg["kind"] = kind
    cfg["seed"] = seed
    cfg["quick"] = quick
    return cfg


def _semantic(cfg: dict) -> None:
    g = cfg["graph"]
    if g["beta"] < 0 or g["h"] < 0:
        raise ConfigError("graph.beta and graph.h must be non-negative")
    if g["n_vertices"] < 1:
        raise ConfigError("graph.n_vertices must be positive")
    for e in g["edges"]:
        if not (isinstance(e, list) and len(e) == 3):
            raise ConfigError("graph.edges entries must be [i, j, beta]")
    m = cfg["mcmc"]
    if m["n_keep"] < m["n_batches"] or m["n_batches"] < 2:
        raise ConfigError("need mcmc.n_keep >= mcmc.n_batches >= 2")
    if not 0 < m["guard"] <= 700:
        raise ConfigError("mcmc.guard must lie in (0, 700]")
    if cfg["vrjp"]["n_traj"] < 2 or cfg["vrjp"]["n_inner"] < 2:
        raise ConfigError("vrjp.n_traj and vrjp.n_inner must be at least 2")
    for chk in cfg["dynkin"]["checks"]:
        if chk not in ("two-point", "general-g", "hn"):
            raise ConfigError(f"unknown dynkin check {chk!r}")
    for t in cfg["mw"]["tori"]:
        if not (isinstance(t, list) and len(t) == 2):
            raise ConfigError("mw.tori entries must be [d, L]")
    for mdl in cfg["mw"]["models"]:
        if mdl not in ("H22", "Hn"):
            raise ConfigError(f"unknown model {mdl!r} in mw.models")
    hs = cfg["scan"]["h_values"]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ConfigError("scan.h_values must be strictly decreasing")


def load(path, *, kind: str | None = None, seed: int | None = None, quick: bool = False) -> dict:
    """Read a TOML file; ``kind``/``seed`` given here override the file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if kind is not None:
        if raw.get("kind", kind) != kind:
            raise ConfigError(f"config is for kind {raw['kind']!r}, not {kind!r}")
        raw["kind"] = kind
    if seed is not None:
        raw["seed"] = seed
    if quick:
        raw["quick"] = True
    return validate(raw)


def effective(cfg: dict) -> dict:
    """Budgets actually used: ``--quick`` divides the expensive ones."""
    cfg = copy.deepcopy(cfg)
    if cfg.get("quick"):
        for (sec, key), f in QUICK.items():
            cfg[sec][key] = max(cfg[sec][key] // f, 2)
        cfg["mcmc"]["n_keep"] = max(cfg["mcmc"]["n_keep"], cfg["mcmc"]["n_batches"])
    return cfg
