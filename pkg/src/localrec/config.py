"""Flat `key = value` configuration with dotted keys.

Lines starting with # are comments.  Every key must exist in DEFAULTS;
values are coerced to the default's type.  Zero means "auto" for the
clustering knobs that otherwise derive from the data.
"""

from __future__ import annotations

from .errors import ConfigError

DEFAULTS: dict = {
    "dataset.path": "",
    "dataset.format": "movielens",      # movielens | table
    "dataset.categories": "",            # optional item,category file
    "dataset.implicit": False,
    "dataset.expected_users": 0,         # 0 disables the manifest check
    "dataset.expected_items": 0,
    "dataset.expected_interactions": 0,

    "projection.enrich": True,
    "projection.uncategorized_ca_floor": 0.0,

    "walks.return_p": 1.0,
    "walks.in_out_q": 1.0,
    "walks.length": 80,
    "walks.per_node": 10,

    "embedding.dim": 100,
    "embedding.window": 10,
    "embedding.negatives": 5,
    "embedding.epochs": 5,
    "embedding.learning_rate": 0.025,

    "clustering.p": 0,                   # 0 = ceil(2% of n)
    "clustering.theta": 0.0,             # 0 = half the std of rho
    "clustering.k_neighbors": 0,         # 0 = max(p, 7)

    "recommend.base": "ubcf",            # ubcf | ibcf | nmf | popular
    "recommend.n": 10,
    "recommend.ubcf_neighbors": 25,
    "recommend.ibcf_neighbors": 30,
    "recommend.nmf_rank": 40,
    "recommend.nmf_iters": 200,

    "eval.folds": 5,
    "eval.n_values": "5,10,20",

    "model": "clustered",                # clustered | original
    "seed": 0,
    "threads": 1,
    "cache_dir": "",
}

_CHOICES = {
    "dataset.format": {"movielens", "table"},
    "recommend.base": {"ubcf", "ibcf", "nmf", "popular"},
    "model": {"clustered", "original"},
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError("bad value %r for key %r" % (raw, key))


def _validate(cfg: dict) -> dict:
    for key, allowed in _CHOICES.items():
        if cfg[key] not in allowed:
            raise ConfigError("%s must be one of %s, got %r"
                              % (key, sorted(allowed), cfg[key]))
    for key in ("walks.length", "walks.per_node", "embedding.dim",
                "embedding.window", "embedding.epochs", "recommend.n",
                "eval.folds", "recommend.nmf_rank"):
        if cfg[key] < 1:
            raise ConfigError("%s must be >= 1" % key)
    if cfg["walks.return_p"] <= 0 or cfg["walks.in_out_q"] <= 0:
        raise ConfigError("walk bias parameters must be positive")
    if cfg["eval.folds"] < 2:
        raise ConfigError("eval.folds must be >= 2")
    try:
        n_values(cfg)
    except ValueError:
        raise ConfigError("eval.n_values must be comma-separated integers")
    return cfg


def default_config() -> dict:
    return dict(DEFAULTS)


def parse_config(path) -> dict:
    cfg = default_config()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError("line %d: expected key = value" % lineno)
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in DEFAULTS:
                raise ConfigError("line %d: unknown key %r" % (lineno, key))
            cfg[key] = _coerce(key, raw)
    return _validate(cfg)


def apply_overrides(cfg: dict, overrides) -> dict:
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError("override %r is not key=value" % item)
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError("unknown key %r" % key)
        cfg[key] = _coerce(key, raw)
    return _validate(cfg)


def n_values(cfg: dict) -> list:
    vals = [int(x) for x in str(cfg["eval.n_values"]).split(",") if x.strip()]
    if not vals or any(v < 1 for v in vals):
        raise ValueError("cutoffs must be positive")
    return sorted(set(vals))
