"""Run configuration: one flat dataclass covering every stage, a flat
key=value file format with a schema version, and CLI overrides.
Unknown keys are rejected.
"""

from dataclasses import dataclass, fields, asdict


class ConfigError(ValueError):
    pass


SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    workers: int = 1

    # model
    base_dim: int = 64
    embed_dim: int = 64
    layer_dims: tuple = (64, 32, 16)
    leaky_slope: float = 0.2

    # knowledge-graph embedding pretraining
    kge_lr: float = 0.0001
    kge_epochs: int = 200
    kge_batch: int = 2048
    kge_holdout: float = 0.1

    # meta training
    local_lr: float = 0.01
    global_lr: float = 0.0001
    sched_lr: float = 0.001
    local_updates: int = 1
    task_batch: int = 8
    meta_steps: int = 200
    kg_batch: int = 2048
    candidate_pool: int = 0        # 0 = score every task each step
    query_size: int = 10
    use_kg_loss: bool = True       # knowledge-aware global update
    use_scheduler: bool = True
    sched_mode: str = "reweight"
    sched_entropy: float = 0.0
    sched_hidden: int = 10
    sched_window: int = 5

    # adaptation + evaluation
    adapt_steps: int = 1
    adapt_lr: float = 0.01
    adapt_mode: str = "finetune"
    adapt_kg_batch: int = 256
    top_k: int = 20
    user_cut: float = 0.2
    item_cut: float = 0.2
    ncs_holdout: float = 0.3


def _parse_value(name, text, kind):
    text = text.strip()
    try:
        if kind is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(int(x) for x in text.replace(",", " ").split())
        return text
    except ValueError:
        raise ConfigError(f"bad value for '{name}': {text!r}") from None


def _field_types():
    return {f.name: (type(f.default) if not isinstance(f.default, tuple) else tuple)
            for f in fields(RunConfig)}


def load_config(path=None, overrides=None):
    """Config from defaults, then file entries, then explicit overrides."""
    cfg = RunConfig()
    types = _field_types()
    if path is not None:
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key not in types:
                    raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
                setattr(cfg, key, _parse_value(key, val, types[key]))
    for key, val in (overrides or {}).items():
        if key not in types:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(val, str):
            val = _parse_value(key, val, types[key])
        setattr(cfg, key, val)
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {cfg.schema_version}")
    return cfg


def dump_config(cfg):
    """Resolved config as the flat text format (stable key order)."""
    lines = []
    for key, val in asdict(cfg).items():
        if isinstance(val, tuple):
            val = ",".join(str(x) for x in val)
        lines.append(f"{key}={val}")
    return "\n".join(lines) + "\n"
