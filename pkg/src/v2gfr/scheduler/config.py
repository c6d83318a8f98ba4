"""System configuration: generator classes, storage, fleets and run knobs.

Loaded from TOML (JSON accepted as a fallback). Units follow the generation
table: GW, GWh, seconds; costs in £ (no-load £/h, marginal £/MWh, startup £).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from ..drcc import Ambiguity, DrccConfig, Mode
from ..freq import FrequencyParams
from ..synthetic import NetDemandParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FORMAT_VERSION = 1
DEFAULT_QUANTILES = (0.005, 0.1, 0.3, 0.5, 0.7, 0.9, 0.995)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorClass:
    name: str
    count: int
    p_max: float            # GW per unit
    p_min: float            # GW per unit (min stable)
    no_load_cost: float     # £/h per unit
    marginal_cost: float    # £/MWh
    startup_cost: float     # £ per start
    startup_time: float     # h
    min_up_time: float      # h
    inertia: float          # s
    max_slow_fr: float      # GW per unit
    must_run: bool = False

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ConfigError(f"{self.name}: need 0 <= p_min <= p_max")
        if min(self.no_load_cost, self.marginal_cost, self.startup_cost) < 0:
            raise ConfigError(f"{self.name}: costs must be >= 0")
        if self.count < 0 or self.startup_time < 0 or self.min_up_time < 0 or self.max_slow_fr < 0:
            raise ConfigError(f"{self.name}: counts, times and FR caps must be >= 0")


@dataclass(frozen=True)
class StorageUnit:
    name: str
    capacity: float         # GWh
    rate: float             # GW (dis)charge
    max_fast_fr: float      # GW
    max_slow_fr: float      # GW
    efficiency: float
    initial_soc: float = 0.5  # fraction of capacity

    def __post_init__(self):
        if min(self.capacity, self.rate, self.max_fast_fr, self.max_slow_fr) < 0:
            raise ConfigError(f"{self.name}: storage fields must be >= 0")
        if not 0 < self.efficiency <= 1:
            raise ConfigError(f"{self.name}: efficiency must lie in (0, 1]")
        if not 0 <= self.initial_soc <= 1:
            raise ConfigError(f"{self.name}: initial_soc must lie in [0, 1]")


@dataclass(frozen=True)
class FleetConfig:
    name: str
    kind: str                 # synthetic profile: domestic | work
    n_evs: int                # fleet size the data is scaled to
    charger_kw: float
    eta: float = 0.95
    e_in_kwh: float = 20.0
    e_out_kwh: float = 40.0
    e_cap_kwh: float = 60.0
    data_chargers: int = 1000  # chargers in the synthetic dataset
    seed: int = 0
    events: Optional[str] = None  # CSV of real events instead of the synthetic generator

    def __post_init__(self):
        if self.n_evs < 0 or self.charger_kw <= 0:
            raise ConfigError(f"{self.name}: n_evs >= 0 and charger_kw > 0 required")
        if not 0 <= self.e_in_kwh <= self.e_out_kwh <= self.e_cap_kwh:
            raise ConfigError(f"{self.name}: need 0 <= e_in <= e_out <= e_cap")

    @property
    def d_max(self) -> float:
        return self.charger_kw * 1e-6

    @property
    def e_in(self) -> float:
        return self.e_in_kwh * 1e-6

    @property
    def e_out(self) -> float:
        return self.e_out_kwh * 1e-6

    @property
    def e_cap(self) -> float:
        return self.e_cap_kwh * 1e-6


@dataclass(frozen=True)
class SystemConfig:
    generators: Tuple[GeneratorClass, ...]
    storage: Tuple[StorageUnit, ...]
    fleets: Tuple[FleetConfig, ...]
    frequency: FrequencyParams = FrequencyParams()
    drcc: DrccConfig = DrccConfig()
    relaxation: str = "participation"
    sigma_multiplier: float = 1.0
    quantiles: Tuple[float, ...] = DEFAULT_QUANTILES
    horizon: int = 24
    c_ls: float = 30_000.0           # £/MWh
    ev_energy_penalty: float = 30_000.0  # £/MWh of fleet state-of-charge slack
    net_demand: NetDemandParams = NetDemandParams()
    seed: int = 0
    history_days: int = 60
    start: str = "2030-01-06"
    mip_gap: float = 1e-3
    root_forecast: str = "realized"  # realized | median

    def __post_init__(self):
        q = self.quantiles
        if not q or any(not 0 < v < 1 for v in q) or any(b <= a for a, b in zip(q, q[1:])):
            raise ConfigError("quantiles must be strictly increasing in (0, 1)")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        if self.c_ls <= 0:
            raise ConfigError("c_ls must be > 0")
        if self.sigma_multiplier < 0:
            raise ConfigError("sigma_multiplier must be >= 0")
        if self.relaxation not in ("participation", "big_m"):
            raise ConfigError("relaxation must be 'participation' or 'big_m'")
        if self.root_forecast not in ("realized", "median"):
            raise ConfigError("root_forecast must be 'realized' or 'median'")
        if self.history_days < 1:
            raise ConfigError("history_days must be >= 1")
        names = [g.name for g in self.generators] + [s.name for s in self.storage] + [f.name for f in self.fleets]
        if len(set(names)) != len(names):
            raise ConfigError("generator, storage and fleet names must be unique")

    def replace(self, **kw) -> "SystemConfig":
        return dataclasses.replace(self, **kw)

    def with_drcc(self, **kw) -> "SystemConfig":
        return dataclasses.replace(self, drcc=dataclasses.replace(self.drcc, **kw))

    def to_dict(self) -> dict:
        d = {
            "format_version": FORMAT_VERSION,
            "system": {k: getattr(self, k) for k in (
                "relaxation", "sigma_multiplier", "horizon", "c_ls", "ev_energy_penalty",
                "seed", "history_days", "start", "mip_gap", "root_forecast")},
            "frequency": dataclasses.asdict(self.frequency),
            "drcc": {"ambiguity": self.drcc.ambiguity.value, "epsilon": self.drcc.epsilon,
                     "mode": self.drcc.mode.value},
            "net_demand": dataclasses.asdict(self.net_demand),
            "generators": [dataclasses.asdict(g) for g in self.generators],
            "storage": [dataclasses.asdict(s) for s in self.storage],
            "fleets": [{k: v for k, v in dataclasses.asdict(f).items() if v is not None}
                       for f in self.fleets],
        }
        d["system"]["quantiles"] = list(self.quantiles)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build(cls, raw: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(doc: dict) -> SystemConfig:
    ver = doc.get("format_version", FORMAT_VERSION)
    if ver != FORMAT_VERSION:
        raise ConfigError(f"unsupported config format_version {ver}")
    system = dict(doc.get("system", {}))
    if "quantiles" in system:
        system["quantiles"] = tuple(float(q) for q in system["quantiles"])
    try:
        drcc_raw = dict(doc.get("drcc", {}))
        drcc = DrccConfig(ambiguity=Ambiguity(drcc_raw.pop("ambiguity", "unimodal")),
                          epsilon=float(drcc_raw.pop("epsilon", 0.01)),
                          mode=Mode(drcc_raw.pop("mode", "joint")), **drcc_raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"drcc: {exc}") from None
    try:
        return SystemConfig(
            generators=tuple(_build(GeneratorClass, g, "generators") for g in doc.get("generators", [])),
            storage=tuple(_build(StorageUnit, s, "storage") for s in doc.get("storage", [])),
            fleets=tuple(_build(FleetConfig, f, "fleets") for f in doc.get("fleets", [])),
            frequency=_build(FrequencyParams, doc.get("frequency", {}), "frequency"),
            drcc=drcc,
            net_demand=_build(NetDemandParams, doc.get("net_demand", {}), "net_demand"),
            **system,
        )
    except TypeError as exc:
        raise ConfigError(f"system: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path) -> SystemConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        doc = json.loads(text)
    else:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError:
            doc = json.loads(text)
    cfg = config_from_dict(doc)
    # event files are resolved relative to the config file
    fleets = tuple(dataclasses.replace(f, events=str((path.parent / f.events).resolve()))
                   if f.events and not Path(f.events).is_absolute() else f for f in cfg.fleets)
    return cfg.replace(fleets=fleets)


def default_config_path() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "system.toml"


def default_config() -> SystemConfig:
    return load_config(default_config_path())
