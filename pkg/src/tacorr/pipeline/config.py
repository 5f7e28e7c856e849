"""Training configuration, loss weights and named profiles."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every offending key."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class LossWeights:
    trans: float = 0.5
    align: float = 0.5
    tc: float = 1.0
    constr: float = 1.0

    def __post_init__(self):
        for name in ("trans", "align", "tc", "constr"):
            if getattr(self, name) < 0:
                raise ConfigError([f"loss weight {name} must be nonnegative"])


@dataclass
class TrainConfig:
    # dims
    n_points: int = 128
    feature_dim: int = 64
    n_layers: int = 2
    n_templates: int = 2
    k: int = 10
    encoder_k: int = 10
    # optimization
    lr: float = 5e-4
    weight_decay: float = 5e-4
    batch_size: int = 2
    steps: int = 1000
    seed: int = 0
    checkpoint_every: int = 0
    # loss weights (trans, align, tc, constr)
    lambda_trans: float = 0.5
    lambda_align: float = 0.5
    lambda_tc: float = 1.0
    lambda_constr: float = 1.0
    # module switches, one per ablation column
    use_templates: bool = True
    use_tc: bool = True
    use_selector: bool = True
    use_fusion: bool = True
    use_trans: bool = True
    align_templates: bool = True
    gumbel_temperature: float = 1.0
    hard_selection: bool = True
    construction: str = "reference"
    encoder_coords: bool = True
    template_init_std: float = 0.02

    def __post_init__(self):
        problems = []
        for name in ("n_points", "feature_dim", "n_layers", "n_templates", "k", "encoder_k",
                     "batch_size"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        for name in ("steps", "checkpoint_every"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be nonnegative")
        for name in ("lambda_trans", "lambda_align", "lambda_tc", "lambda_constr", "lr",
                     "weight_decay"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be nonnegative")
        if self.gumbel_temperature <= 0:
            problems.append("gumbel_temperature must be positive")
        if self.construction not in ("reference", "source"):
            problems.append("construction must be 'reference' or 'source'")
        if self.k >= self.n_points:
            problems.append(f"k={self.k} must be below n_points={self.n_points}")
        if problems:
            raise ConfigError(problems)

    @property
    def loss_weights(self):
        return LossWeights(self.lambda_trans, self.lambda_align, self.lambda_tc,
                           self.lambda_constr)

    def dims(self):
        return {"n_points": self.n_points, "feature_dim": self.feature_dim,
                "n_layers": self.n_layers, "n_templates": self.n_templates,
                "encoder_k": self.encoder_k}

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


PROFILES = {
    "desk": {},
    "paper": {"n_points": 1024, "feature_dim": 512, "n_layers": 4, "n_templates": 4,
              "batch_size": 4},
}

# ablation rows A-H: (templates, tc, selector, fusion, trans)
ABLATION_ROWS = {
    "A": (False, False, False, False, False),
    "B": (True, False, False, True, False),
    "C": (True, False, False, False, True),
    "D": (True, True, False, True, False),
    "E": (True, True, False, False, True),
    "F": (True, True, True, True, False),
    "G": (True, True, True, False, True),
    "H": (True, True, True, True, True),
}


def ablation_config(row, base=None):
    base = base or TrainConfig()
    tgm, tc, ts, cf, trans = ABLATION_ROWS[row]
    return base.replace(use_templates=tgm, use_tc=tc, use_selector=ts, use_fusion=cf,
                        use_trans=trans)


_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
PATH_KEYS = ("data", "checkpoint", "out")


@dataclass
class Config:
    """A resolved run configuration: a profile, overrides and paths."""

    profile: str = "desk"
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: dict = field(default_factory=dict)

    def to_dict(self):
        return {"profile": self.profile, **self.train.to_dict(), **self.paths}


def resolve_config(doc):
    """Build a :class:`Config` from a mapping; unknown keys are all reported."""
    doc = dict(doc)
    profile = doc.pop("profile", "desk")
    problems = []
    if profile not in PROFILES:
        problems.append(f"profile: unknown profile {profile!r} (expected one of {sorted(PROFILES)})")
        profile = "desk"
    paths = {k: doc.pop(k) for k in PATH_KEYS if k in doc}
    unknown = sorted(set(doc) - _FIELDS)
    problems += [f"{k}: unknown key" for k in unknown]
    values = {**PROFILES[profile], **{k: v for k, v in doc.items() if k in _FIELDS}}
    defaults = TrainConfig()
    for k, v in values.items():
        want = type(getattr(defaults, k))
        if want is float and isinstance(v, int) and not isinstance(v, bool):
            values[k] = float(v)
        elif not isinstance(v, want) or (want is int and isinstance(v, bool)):
            problems.append(f"{k}: expected {want.__name__}, got {type(v).__name__}")
    if problems:
        raise ConfigError(problems)
    try:
        train = TrainConfig(**values)
    except ConfigError as exc:
        raise ConfigError(exc.problems) from None
    return Config(profile, train, paths)


def load_config(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    return resolve_config(doc)
