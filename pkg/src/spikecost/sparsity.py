"""Layerwise sparsity tallies and the JSON profile format.

Profile JSON (schema version 1)::

    {
      "schema_version": 1,
      "kind": "snn" | "ann",
      "network": "vgg5", "dataset": "cifar10", "timesteps": 8, "epoch": 1,
      "scope": "per image per timestep, averaged over the epoch",
      "layers": [
        {"name": "inp",  "sp_s": 0.4345, "sp_gf": null,   "sp_gu": null},
        {"name": "cov1", "sp_s": 0.8583, "sp_gf": 0.3933, "sp_gu": 0.7325},
        ...
      ]
    }

SNN layers carry ``sp_s`` (zero spikes / all spikes), ``sp_gf`` (potentials
outside the surrogate window / all potentials) and ``sp_gu`` (zero potential
gradients / all). ANN profiles carry ``sp_z`` (zero ReLU outputs) and
``sp_gz`` (zero activation gradients) instead. ``null`` marks a quantity the
layer does not have (no spikes out of the output layer, no gradients at the
input). The first entry is always the encoded input, named ``inp``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import IncompleteProfileError, StructuralError, ValidationError
from .snn.lif import LifParams

SCHEMA_VERSION = 1
SNN_FIELDS = ("sp_s", "sp_gf", "sp_gu")
ANN_FIELDS = ("sp_z", "sp_gz")
KIND_FIELD = {"S": "sp_s", "gf": "sp_gf", "gu": "sp_gu", "Z": "sp_z", "gZ": "sp_gz"}


@dataclass(frozen=True)
class LayerSparsity:
    name: str
    sp_s: Optional[float] = None
    sp_gf: Optional[float] = None
    sp_gu: Optional[float] = None
    sp_z: Optional[float] = None
    sp_gz: Optional[float] = None

    def __post_init__(self):
        for key in SNN_FIELDS + ANN_FIELDS:
            v = getattr(self, key)
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValidationError(f"{self.name}.{key} = {v} lies outside [0, 1]")


@dataclass(frozen=True)
class SparsityProfile:
    layers: tuple[LayerSparsity, ...]
    kind: str = "snn"
    network: str = ""
    dataset: str = ""
    timesteps: Optional[int] = None
    epoch: Optional[int] = None
    scope: str = "per image per timestep"

    def __post_init__(self):
        if self.kind not in ("snn", "ann"):
            raise ValidationError(f"unknown profile kind {self.kind!r}")
        names = [lyr.name for lyr in self.layers]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate layer names in profile")

    @property
    def names(self) -> list[str]:
        return [lyr.name for lyr in self.layers]

    def layer(self, name: str) -> LayerSparsity:
        for lyr in self.layers:
            if lyr.name == name:
                return lyr
        raise StructuralError(f"profile has no layer {name!r}")

    def value(self, name: str, key: str, default: float = 0.0) -> float:
        """Rate for one layer; missing (null) entries read as ``default``."""
        v = getattr(self.layer(name), key)
        return default if v is None else v

    def check_network(self, layer_names: list[str]) -> None:
        """The profile must list ``inp`` followed by exactly the network's weighted layers."""
        want = ["inp", *layer_names]
        if self.names != want:
            raise StructuralError(f"profile layers {self.names} do not match network {want}")

    def scaled(self, key: str, factor: float) -> "SparsityProfile":
        """Copy with one rate multiplied by ``factor`` and clamped to [0, 1]."""
        layers = []
        for lyr in self.layers:
            v = getattr(lyr, key)
            if v is not None:
                lyr = replace(lyr, **{key: min(1.0, max(0.0, v * factor))})
            layers.append(lyr)
        return replace(self, layers=tuple(layers))

    def with_uniform(self, **rates: float) -> "SparsityProfile":
        """Copy with the given rates set on every layer that already has them."""
        layers = []
        for lyr in self.layers:
            upd = {k: v for k, v in rates.items() if getattr(lyr, k) is not None}
            layers.append(replace(lyr, **upd))
        return replace(self, layers=tuple(layers))

    def to_dict(self) -> dict:
        keys = SNN_FIELDS if self.kind == "snn" else ANN_FIELDS
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "network": self.network,
            "dataset": self.dataset,
            "timesteps": self.timesteps,
            "epoch": self.epoch,
            "scope": self.scope,
            "layers": [{"name": lyr.name, **{k: getattr(lyr, k) for k in keys}} for lyr in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SparsityProfile":
        if not isinstance(data, dict):
            raise ValidationError("profile must be a JSON object")
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported profile schema_version {data.get('schema_version')!r}")
        kind = data.get("kind", "snn")
        keys = SNN_FIELDS if kind == "snn" else ANN_FIELDS
        layers = []
        for entry in data.get("layers") or []:
            if "name" not in entry:
                raise ValidationError("profile layer without a name")
            extra = set(entry) - {"name", *keys}
            if extra:
                raise ValidationError(f"layer {entry['name']}: unknown fields {sorted(extra)}")
            vals = {}
            for k in keys:
                v = entry.get(k)
                if v is not None and not isinstance(v, (int, float)):
                    raise ValidationError(f"layer {entry['name']}: {k} is not a number")
                vals[k] = None if v is None else float(v)
            layers.append(LayerSparsity(entry["name"], **vals))
        if not layers:
            raise ValidationError("profile has no layers")
        return cls(
            layers=tuple(layers),
            kind=kind,
            network=data.get("network", ""),
            dataset=data.get("dataset", ""),
            timesteps=data.get("timesteps"),
            epoch=data.get("epoch"),
            scope=data.get("scope", ""),
        )


def store_profile(profile: SparsityProfile, path) -> None:
    Path(path).write_text(json.dumps(profile.to_dict(), indent=2) + "\n")


def load_profile(path) -> SparsityProfile:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from None
    return SparsityProfile.from_dict(data)


def write_profile_csv(profile: SparsityProfile, path) -> None:
    keys = SNN_FIELDS if profile.kind == "snn" else ANN_FIELDS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", *keys])
        for lyr in profile.layers:
            w.writerow([lyr.name, *("" if getattr(lyr, k) is None else f"{getattr(lyr, k):.6f}" for k in keys)])


@dataclass
class SparsityProbe:
    """Zero/total tallies per (layer, kind), accumulated over images and timesteps.

    Kinds: ``S`` spikes, ``gf`` firing-gradient validity (pass potentials, or a
    boolean mask that is True where the surrogate gradient is non-zero), ``gu``
    potential gradients, and ``Z``/``gZ`` for ANN activations and gradients.
    """

    layers: list[str]
    lif: LifParams = field(default_factory=LifParams)
    zero_eps: float = 0.0
    tallies: dict[tuple[str, str], list[int]] = field(default_factory=dict)

    def record_step(self, layer: str, kind: str, tensor) -> None:
        if layer not in self.layers:
            raise StructuralError(f"unknown layer id {layer!r}")
        if kind not in KIND_FIELD:
            raise StructuralError(f"unknown tensor kind {kind!r}")
        x = np.asarray(tensor)
        if kind == "gf":
            if x.dtype == bool:
                zeros = int(x.size - np.count_nonzero(x))
            else:
                zeros = int(np.count_nonzero(np.abs(x - self.lif.u_th) >= self.lif.beta / 2))
        elif kind in ("gu", "gZ") and self.zero_eps > 0:
            zeros = int(np.count_nonzero(np.abs(x) <= self.zero_eps))
        else:
            zeros = int(x.size - np.count_nonzero(x))
        tally = self.tallies.setdefault((layer, kind), [0, 0])
        tally[0] += zeros
        tally[1] += int(x.size)

    def merge(self, other: "SparsityProbe") -> None:
        for key, (z, n) in other.tallies.items():
            tally = self.tallies.setdefault(key, [0, 0])
            tally[0] += z
            tally[1] += n

    def rate(self, layer: str, kind: str) -> float:
        z, n = self.tallies.get((layer, kind), (0, 0))
        if n == 0:
            raise IncompleteProfileError(f"no {kind} data recorded for layer {layer!r}")
        return z / n

    def reset(self) -> None:
        self.tallies.clear()

    def finalize(self, required: dict[str, tuple[str, ...]] | None = None, kind: str = "snn",
                 **meta) -> SparsityProfile:
        """Turn tallies into a profile.

        ``required`` maps each layer to the kinds it must have data for; by
        default every layer needs at least one recorded kind.
        """
        layers = []
        for name in self.layers:
            kinds = required.get(name, ()) if required is not None else ()
            have = {k for (lyr, k) in self.tallies if lyr == name}
            if required is None and not have:
                raise IncompleteProfileError(f"no data recorded for layer {name!r}")
            missing = [k for k in kinds if k not in have]
            if missing:
                raise IncompleteProfileError(f"layer {name!r} has no data for {missing}")
            vals = {KIND_FIELD[k]: self.rate(name, k) for k in have}
            layers.append(LayerSparsity(name, **vals))
        return SparsityProfile(tuple(layers), kind=kind, **meta)


def snn_requirements(layer_names: list[str]) -> dict[str, tuple[str, ...]]:
    """Kinds an SNN training probe must observe: input spikes, then S/gf/gu per hidden layer."""
    req: dict[str, tuple[str, ...]] = {"inp": ("S",)}
    for name in layer_names[:-1]:
        req[name] = ("S", "gf", "gu")
    req[layer_names[-1]] = ("gf", "gu")
    return req


def profile_rows(profile: SparsityProfile) -> list[dict]:
    return [asdict(lyr) for lyr in profile.layers]
