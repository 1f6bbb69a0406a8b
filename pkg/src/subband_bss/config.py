"""Experiment configuration: TOML files plus command-line overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .bss import METHODS
from .sim import SimScenario
from .stft import StftConfig
from .subband import MODES

SPLITTINGS = ("none", "ss")

# grid label -> (method, splitting)
METHOD_LABELS = {
    "iva": ("aux_iva", "none"),
    "ilrma": ("ilrma", "none"),
    "oc_iva": ("oc_iva", "none"),
    "ss_iva": ("aux_iva", "ss"),
    "ss_ilrma": ("ilrma", "ss"),
}


class ConfigError(ValueError):
    pass


def method_label(method, splitting):
    for label, pair in METHOD_LABELS.items():
        if pair == (method, splitting):
            return label
    raise ConfigError(f"no label for method={method!r} splitting={splitting!r}")


@dataclass
class GridSpec:
    """Cells swept by ``experiment``: labels x (theta_w, theta_delta) x modes.

    Vanilla labels (``iva``, ``ilrma``) ignore params and modes and give one
    cell each.
    """

    methods: list = field(default_factory=lambda: ["iva", "ss_iva"])
    params: list = field(default_factory=lambda: [[2, 2], [2, 4], [4, 2], [4, 4]])
    modes: list = field(default_factory=lambda: ["tight", "loose"])

    def __post_init__(self):
        for m in self.methods:
            if m not in METHOD_LABELS:
                raise ConfigError(f"unknown grid method {m!r}; expected one of {sorted(METHOD_LABELS)}")
        self.params = [list(map(int, p)) for p in self.params]
        for p in self.params:
            if len(p) != 2 or min(p) < 1:
                raise ConfigError(f"grid params must be pairs of positive ints, got {p}")
        for m in self.modes:
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}")


@dataclass
class ExperimentConfig:
    method: str = "aux_iva"
    splitting: str = "none"
    theta_w: int = 4
    theta_delta: int = 2
    mode: str = "loose"
    inner_iters: int | None = None
    total_iter_budget: int = 100
    seeds: list = field(default_factory=lambda: [0])
    k_bases: int = 2
    ref_channel: int = 0
    output_dir: str = "out"
    inputs: list = field(default_factory=list)
    jobs: int = 1
    stft: StftConfig = field(default_factory=StftConfig)
    scenario: SimScenario = field(default_factory=SimScenario)
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.splitting not in SPLITTINGS:
            raise ConfigError(f"splitting must be one of {SPLITTINGS}, got {self.splitting!r}")
        if self.splitting == "ss" and self.method == "oc_iva":
            raise ConfigError("subband splitting cannot wrap oc_iva")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.theta_w < 1 or self.theta_delta < 1:
            raise ConfigError("theta_w and theta_delta must be >= 1")
        if self.inner_iters is not None and self.inner_iters < 1:
            raise ConfigError("inner_iters must be >= 1")
        if self.total_iter_budget < 1:
            raise ConfigError("total_iter_budget must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        self.seeds = [int(s) for s in self.seeds]
        self.inputs = [str(p) for p in self.inputs]

    def iterations_for(self, splitting, theta_delta):
        """Updates per BSS call: explicit ``inner_iters``, else the budget split over overlaps."""
        if self.inner_iters is not None:
            return self.inner_iters
        if splitting == "ss":
            return max(self.total_iter_budget // theta_delta, 1)
        return self.total_iter_budget

    @property
    def effective_inner_iters(self):
        return self.iterations_for(self.splitting, self.theta_delta)

    @property
    def label(self):
        return method_label(self.method, self.splitting)

    def to_dict(self):
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "scenario":
                v = {k: x for k, x in v.to_dict().items() if x is not None}
            elif dataclasses.is_dataclass(v):
                v = dataclasses.asdict(v)
            if v is not None:
                d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "stft" in d:
                d["stft"] = StftConfig(**d["stft"])
            if "scenario" in d:
                d["scenario"] = SimScenario.from_dict(d["scenario"])
            if "grid" in d:
                d["grid"] = GridSpec(**d["grid"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


def dumps(cfg):
    return tomli_w.dumps(cfg.to_dict())


def loads(text):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return ExperimentConfig.from_dict(data)


def load(path):
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig.from_dict(data)


def save(cfg, path):
    with open(path, "w") as fh:
        fh.write(dumps(cfg))


def with_overrides(cfg, overrides):
    """Return a copy of ``cfg`` with dotted-key overrides such as ``scenario.duration``."""
    d = cfg.to_dict()
    for key, value in overrides.items():
        if value is None:
            continue
        node = d
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return ExperimentConfig.from_dict(d)
