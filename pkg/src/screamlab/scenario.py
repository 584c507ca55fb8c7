"""Scenario configuration: device, noise, interferers, sweep grid and collection plan.

A scenario file is a JSON object::

    {
      "seed": 0,
      "device": {"f_clk": 64e6, "f_rf": 2.4e9, "harmonic_amps": {"1": 1.0, ...}, ...},
      "noise": {"awgn_sigma": 0.25, "mode": "wired", "wireless_factor": 10.0},
      "interferers": [{"center": 2.442e9, "bandwidth": 20e6, "power": 100.0}],
      "sweep": {"f_start": 1.4e9, "f_stop": 3.4e9, "f_step": 10e6},
      "collection": {"time_diversity_n": null, "segmentation": "pattern", ...}
    }

Every section is optional; missing keys take the defaults below. Unknown keys
are rejected so that typos do not silently fall back to defaults.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .exceptions import ConfigError
from .localization import SweepGrid
from .simulator import DeviceModel, InterferenceSource, NoiseModel

DEFAULT_AWGN_SIGMA = 0.25
# calibrated so that 750-trace wireless attacks still break the strongest
# frequencies while the weaker unpolluted harmonic stays far from rank 1
DEFAULT_WIRELESS_FACTOR = 10.0


@dataclass(frozen=True)
class CollectionPlan:
    """How traces are gathered at one frequency.

    ``segmentation="pattern"`` runs the full pipeline on raw captures (Virtual
    Triggering pattern, pattern matching, grouping, averaging); ``"aligned"``
    replaces capture and segmentation with an ideal trigger, which is much
    cheaper and is meant for large attack sets.
    """

    time_diversity_n: int | None = None  # None: 10 wired, 50 wireless
    segmentation: str = "pattern"
    window: str = "first_round"  # or "full"
    n_ttest: int = 250
    n_segs: int = 50
    n_tests: int = 10
    n_profile: int = 2000
    n_attack: int = 1000
    chunk_cps: int = 500
    peak_threshold: float = 0.5
    estimate_cp_length: bool = True

    def __post_init__(self):
        if self.segmentation not in ("pattern", "aligned"):
            raise ConfigError(f"segmentation must be 'pattern' or 'aligned', got {self.segmentation!r}")
        if self.window not in ("first_round", "full"):
            raise ConfigError(f"window must be 'first_round' or 'full', got {self.window!r}")
        for name in ("n_ttest", "n_segs", "n_tests", "n_profile", "n_attack", "chunk_cps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.time_diversity_n is not None and self.time_diversity_n < 1:
            raise ConfigError("time_diversity_n must be >= 1")


@dataclass(frozen=True, eq=False)
class Scenario:
    device: DeviceModel = field(default_factory=DeviceModel)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(DEFAULT_AWGN_SIGMA, "wired",
                                                                 DEFAULT_WIRELESS_FACTOR))
    interferers: tuple = ()
    sweep: SweepGrid = field(default_factory=lambda: SweepGrid(1.4e9, 3.4e9, 10e6))
    collection: CollectionPlan = field(default_factory=CollectionPlan)
    seed: int = 0

    @property
    def time_diversity_n(self):
        n = self.collection.time_diversity_n
        if n is None:
            return 50 if self.noise.mode == "wireless" else 10
        return n

    def with_(self, **changes):
        """Copy with top-level fields replaced; ``collection``/``noise`` may be dicts of overrides."""
        for key, cls_obj in (("collection", self.collection), ("noise", self.noise),
                             ("device", self.device)):
            if isinstance(changes.get(key), dict):
                if key == "device":
                    changes[key] = DeviceModel.from_dict({**cls_obj.to_dict(), **changes[key]})
                else:
                    changes[key] = replace(cls_obj, **changes[key])
        if isinstance(changes.get("sweep"), dict):
            changes["sweep"] = SweepGrid(**changes["sweep"])
        return replace(self, **changes)

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "device": self.device.to_dict(),
            "noise": asdict(self.noise),
            "interferers": [asdict(s) for s in self.interferers],
            "sweep": self.sweep.to_dict(),
            "collection": asdict(self.collection),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        extra = set(d) - {"seed", "device", "noise", "interferers", "sweep", "collection"}
        if extra:
            raise ConfigError(f"unknown scenario keys {sorted(extra)}")
        try:
            base = cls()
            device = DeviceModel.from_dict(d["device"]) if "device" in d else base.device
            noise = replace(base.noise, **_only(NoiseModel, d.get("noise", {}), "noise"))
            interferers = tuple(InterferenceSource(**_only(InterferenceSource, s, "interferer"))
                                for s in d.get("interferers", []))
            sweep = SweepGrid(**_only(SweepGrid, d["sweep"], "sweep")) if "sweep" in d else base.sweep
            collection = CollectionPlan(**_only(CollectionPlan, d.get("collection", {}), "collection"))
            return cls(device, noise, interferers, sweep, collection, int(d.get("seed", 0)))
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def _only(cls, d, what):
    names = {f.name for f in fields(cls)}
    extra = set(d) - names
    if extra:
        raise ConfigError(f"unknown {what} keys {sorted(extra)}")
    return d


def load_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return Scenario.from_dict(d)


def wifi_interferers(power=100.0):
    """WiFi-like 20 MHz blocks on channels 1, 6 and 11 (2.412, 2.437, 2.462 GHz)."""
    return tuple(InterferenceSource(c, 20e6, power) for c in (2.412e9, 2.437e9, 2.462e9))


def polluted_interferers(dev=None, power=100.0):
    """Emitters sitting on harmonics 1 and 2 of ``dev`` (WiFi channel 11 plus a narrow block)."""
    dev = dev or DeviceModel()
    h1, h2 = dev.harmonic_frequency(1), dev.harmonic_frequency(2)
    return wifi_interferers(power) + (InterferenceSource(h1, 10e6, power),
                                      InterferenceSource(h2, 10e6, power))
