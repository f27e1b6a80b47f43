"""Experiment configuration: flat ``key = value`` text files.

Unknown keys are rejected so typos fail loudly.  ``dataset.N.edges`` /
``dataset.N.features`` point at files for domain N; ``synthetic.*`` keys
configure the in-repo SBM generator instead.  A config hashes to a stable
identifier recorded in every report.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .victim import CONTRASTIVE, LINK_PREDICTION


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticSpec:
    domains: int = 2
    nodes_per_domain: int = 300
    feature_dim: int = 16
    avg_degree: float = 10.0
    feature_shift: float = 1.0
    feature_noise: float = 1.0


@dataclass
class ExperimentConfig:
    objective: str = LINK_PREDICTION
    lam: float = 1.0
    alpha: float | None = None          # None: resolved by objective kind
    epochs_pretrain: int = 500
    epochs_augment: int = 5
    epochs_unlearn: int = 50
    epochs_shadow: int = 100
    epochs_attack: int = 300
    m_samples: int = 5
    m_queries: int | None = None        # cap on evaluated nodes per side
    hidden_dim: int = 256               # attack MLP latent width
    emb_dim: int = 64
    layers: int = 2
    lr_pretrain: float = 1e-3
    lr_augment: float = 1e-3
    lr_unlearn: float = 1e-3
    lr_shadow: float = 1e-3
    lr_attack: float = 1e-3
    unlearn_fraction: float = 0.2
    repetitions: int = 5
    seed: int = 7
    attack_domain: int = 0
    temperature: float = 0.5
    negatives_per_positive: int = 5
    synthetic: SyntheticSpec | None = field(default_factory=SyntheticSpec)
    dataset: dict[int, dict[str, str]] | None = None

    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return 1.0 if self.objective == LINK_PREDICTION else 1e-2

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.repetitions)]

    def validate(self) -> None:
        if self.objective not in (CONTRASTIVE, LINK_PREDICTION):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.alpha is not None and self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        for name in ("epochs_pretrain", "epochs_augment", "epochs_unlearn",
                     "epochs_shadow", "epochs_attack"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.m_samples < 1:
            raise ConfigError("m_samples must be >= 1")
        if self.m_queries is not None and self.m_queries < 1:
            raise ConfigError("m_queries must be >= 1 when set")
        if not 0.0 < self.unlearn_fraction < 1.0:
            raise ConfigError("unlearn_fraction must lie in (0, 1)")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if min(self.emb_dim, self.hidden_dim, self.layers) < 1:
            raise ConfigError("dims and layer count must be positive")
        for name in ("lr_pretrain", "lr_augment", "lr_unlearn", "lr_shadow", "lr_attack"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if (self.synthetic is None) == (self.dataset is None):
            raise ConfigError("exactly one of synthetic.* or dataset.* must be configured")
        if self.dataset is not None:
            for dom, spec in self.dataset.items():
                for key in ("edges", "features"):
                    if key not in spec:
                        raise ConfigError(f"dataset.{dom}.{key} is missing")
                    if not Path(spec[key]).exists():
                        raise ConfigError(f"dataset.{dom}.{key}: no such file {spec[key]!r}")


_INT_KEYS = {
    "epochs_pretrain", "epochs_augment", "epochs_unlearn", "epochs_shadow",
    "epochs_attack", "m_samples", "m_queries", "hidden_dim", "emb_dim",
    "layers", "repetitions", "seed", "attack_domain", "negatives_per_positive",
}
_FLOAT_KEYS = {
    "lambda", "alpha", "lr_pretrain", "lr_augment", "lr_unlearn", "lr_shadow",
    "lr_attack", "unlearn_fraction", "temperature",
}
_SYNTH_INT = {"domains", "nodes_per_domain", "feature_dim"}
_SYNTH_FLOAT = {"avg_degree", "feature_shift", "feature_noise"}


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    synth_kv: dict[str, str] = {}
    dataset_kv: dict[int, dict[str, str]] = {}
    saw_synth = False
    saw_dataset = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key == "objective":
                cfg.objective = value
            elif key == "lambda":
                cfg.lam = float(value)
            elif key in _INT_KEYS:
                setattr(cfg, key, int(value))
            elif key in _FLOAT_KEYS:
                setattr(cfg, key, float(value))
            elif key.startswith("synthetic."):
                saw_synth = True
                synth_kv[key.removeprefix("synthetic.")] = value
            elif key.startswith("dataset."):
                saw_dataset = True
                _, dom, attr = key.split(".", 2)
                dataset_kv.setdefault(int(dom), {})[attr] = value
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    if saw_dataset:
        cfg.synthetic = None
        if base_dir is not None:
            dataset_kv = {
                dom: {k: str((base_dir / v)) for k, v in spec.items()}
                for dom, spec in dataset_kv.items()
            }
        cfg.dataset = dataset_kv
    elif saw_synth:
        spec = SyntheticSpec()
        for k, v in synth_kv.items():
            if k in _SYNTH_INT:
                setattr(spec, k, int(v))
            elif k in _SYNTH_FLOAT:
                setattr(spec, k, float(v))
            else:
                raise ConfigError(f"unknown synthetic key {k!r}")
        cfg.synthetic = spec
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def canonical_text(cfg: ExperimentConfig) -> str:
    """Stable textual form used for hashing and reproducibility checks."""
    pairs: list[tuple[str, str]] = []
    for f in fields(cfg):
        if f.name in ("synthetic", "dataset"):
            continue
        pairs.append((f.name, repr(getattr(cfg, f.name))))
    if cfg.synthetic is not None:
        for f in fields(cfg.synthetic):
            pairs.append((f"synthetic.{f.name}", repr(getattr(cfg.synthetic, f.name))))
    if cfg.dataset is not None:
        for dom in sorted(cfg.dataset):
            for k in sorted(cfg.dataset[dom]):
                pairs.append((f"dataset.{dom}.{k}", cfg.dataset[dom][k]))
    return "\n".join(f"{k} = {v}" for k, v in sorted(pairs)) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()[:16]
