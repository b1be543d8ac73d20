"""Run configuration loaded from a YAML file."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .fsutil import sha256_bytes
from .genderid import DEFAULT_THRESHOLD
from .providers import Provider
from .rewrite import BACKOFF_BASE, MAX_ATTEMPTS
from .stats import DEFAULT_ALPHA


class ConfigError(ValueError):
    pass


def data_path(name: str) -> Path:
    return Path(str(resources.files("biasaudit") / "data" / name))


DEMO_CONFIG = "demo.yaml"


@dataclass
class RunConfig:
    corpus: Path
    dictionary: Path
    composites: Path
    names: Path
    providers: list[Provider]
    out_dir: Path = Path("biasaudit-out")
    cache_dir: Path | None = None
    alpha: float = DEFAULT_ALPHA
    threshold: float = DEFAULT_THRESHOLD
    max_in_flight: int = 4
    equal_var: bool = False
    bonferroni: bool = False
    workers: int = 1
    max_attempts: int = MAX_ATTEMPTS
    backoff: float = BACKOFF_BASE
    models: list[str] | None = field(default=None)

    @property
    def cache(self) -> Path:
        return self.cache_dir if self.cache_dir is not None else self.out_dir / "cache"

    @property
    def active_providers(self) -> list[Provider]:
        if not self.models:
            return list(self.providers)
        by_name = {p.name: p for p in self.providers}
        unknown = [m for m in self.models if m not in by_name]
        if unknown:
            raise ConfigError(f"unknown model(s) in --models: {', '.join(unknown)}")
        return [by_name[m] for m in self.models]

    def validate(self) -> "RunConfig":
        for name in ("corpus", "dictionary", "composites", "names"):
            path = getattr(self, name)
            if not Path(path).is_file():
                raise ConfigError(f"{name} file not found: {path}")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0.5 < self.threshold <= 1:
            raise ConfigError("threshold must lie in (0.5, 1]")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be a positive integer")
        names = [p.name for p in self.providers]
        if len(set(names)) != len(names):
            raise ConfigError("provider names must be unique")
        if "Human" in names:
            raise ConfigError("'Human' is reserved for the original abstracts")
        self.active_providers
        return self

    def identity(self) -> dict[str, Any]:
        """Settings that affect outputs (paths, parallelism and retries excluded)."""
        return {
            "alpha": self.alpha,
            "threshold": self.threshold,
            "equal_var": self.equal_var,
            "bonferroni": self.bonferroni,
            "providers": [dataclasses.asdict(p) for p in self.active_providers],
        }

    def hash(self) -> str:
        return sha256_bytes(json.dumps(self.identity(), sort_keys=True).encode())


def load_config(path: str | Path | None = None, **overrides: Any) -> RunConfig:
    """Read a YAML config; ``None`` loads the bundled offline demo.

    Relative paths resolve against the config file's directory; ``overrides``
    with a value of ``None`` are ignored.
    """
    path = Path(path) if path is not None else data_path(DEMO_CONFIG)
    try:
        tree = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    base = path.resolve().parent

    def resolve(key: str, default: str | None = None) -> Path:
        value = tree.get(key, default)
        if value is None:
            raise ConfigError(f"{path}: missing required key {key!r}")
        p = Path(value)
        if not p.is_absolute() and (base / p).exists():
            return base / p
        if not p.is_absolute() and not p.exists() and data_path(str(p)).exists():
            return data_path(str(p))
        return p if p.is_absolute() else base / p

    try:
        providers = [Provider.from_config(item) for item in tree.get("providers") or []]
        retry = tree.get("retry") or {}
        cfg = RunConfig(
            corpus=resolve("corpus"),
            dictionary=resolve("dictionary", "open_dictionary.dic"),
            composites=resolve("composites", "composites.yaml"),
            names=resolve("names", "names.csv"),
            providers=providers,
            out_dir=Path(tree.get("out_dir", "biasaudit-out")),
            cache_dir=Path(tree["cache_dir"]) if tree.get("cache_dir") else None,
            alpha=float(tree.get("alpha", DEFAULT_ALPHA)),
            threshold=float(tree.get("threshold", DEFAULT_THRESHOLD)),
            max_in_flight=int(tree.get("max_in_flight", 4)),
            equal_var=bool(tree.get("equal_var", False)),
            bonferroni=bool(tree.get("bonferroni", False)),
            workers=int(tree.get("workers", 1)),
            max_attempts=int(retry.get("max_attempts", MAX_ATTEMPTS)),
            backoff=float(retry.get("backoff", BACKOFF_BASE)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg
