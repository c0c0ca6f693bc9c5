"""INI configuration files shared by the trainer, the counters and the CLI.

One file may carry any subset of these sections::

    [network]                 ; required by load_network
    name = vgg5
    input = 3x32x32
    layers = 64C3-MP2-128C3-128C3-MP2-1024FC-10FC

    [lif]                     ; alpha, u_th, beta
    [train]                   ; timesteps, lr, momentum, weight_decay, epochs,
                              ; batch_size, rng_seed, sparse_mode, dtype, init_gain
    [arch]                    ; bitwidth, timesteps, pe_count, pgu_count, spad_bytes,
                              ; glb_w_bytes, glb_u_bytes, glb_s_bytes,
                              ; input_spad_bytes, psum_spad_bytes
    [energy]                  ; every compute key (without overhead) and
                              ; e_dram, e_glb, e_spad, e_ctrl
    [energy_with_overhead]    ; every compute key, with overhead

Missing optional sections fall back to the dataclass defaults. Unknown keys
are rejected so that typos do not silently become defaults. An energy
table must list every key: its values are the whole point of the file.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from pathlib import Path

from .counts import ArchParams
from .dataflow import PeArrayConfig
from .energy import COMPUTE_KEYS, MEMORY_KEYS, EnergyTable
from .errors import ValidationError
from .network import NetworkSpec, parse_network
from .snn.lif import LifParams
from .snn.train import TrainConfig


def read_config(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return cp


def config_hash(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        if p is not None:
            h.update(Path(p).read_bytes())
    return h.hexdigest()


def _coerce(section: str, key: str, raw: str, typ):
    try:
        if typ is bool:
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ValidationError(f"[{section}] {key} = {raw!r} is not a valid {typ.__name__}") from None


def _section_to(cp: configparser.ConfigParser, section: str, cls, **overrides):
    if not cp.has_section(section):
        return cls(**overrides)
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    pytypes = {"int": int, "float": float, "bool": bool, "str": str}
    kwargs = {}
    for key, raw in cp.items(section):
        if key not in types:
            raise ValidationError(f"[{section}] unknown key {key!r}")
        kwargs[key] = _coerce(section, key, raw, pytypes.get(str(types[key]), str))
    kwargs.update(overrides)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"[{section}] {exc}") from None


def load_network(path) -> NetworkSpec:
    cp = read_config(path)
    if not cp.has_section("network"):
        raise ValidationError(f"{path}: no [network] section")
    sec = cp["network"]
    extra = set(sec) - {"name", "input", "layers"}
    if extra:
        raise ValidationError(f"[network] unknown keys {sorted(extra)}")
    for key in ("input", "layers"):
        if key not in sec:
            raise ValidationError(f"[network] missing {key!r}")
    return parse_network(sec.get("name", Path(path).stem), sec["input"], sec["layers"])


def load_lif(path) -> LifParams:
    return _section_to(read_config(path), "lif", LifParams)


def load_train(path, **overrides) -> TrainConfig:
    return _section_to(read_config(path), "train", TrainConfig, **overrides)


_ARCH_ONLY = {"input_spad_bytes", "psum_spad_bytes"}


def load_arch(path, **overrides) -> ArchParams:
    cp = read_config(path)
    if cp.has_section("arch"):
        for key in _ARCH_ONLY:
            cp.remove_option("arch", key)
    return _section_to(cp, "arch", ArchParams, **overrides)


def load_pe_array(path) -> PeArrayConfig:
    cp = read_config(path)
    if not cp.has_section("arch"):
        return PeArrayConfig()
    sec = cp["arch"]
    known = {f.name for f in dataclasses.fields(ArchParams)} | _ARCH_ONLY
    extra = set(sec) - known
    if extra:
        raise ValidationError(f"[arch] unknown keys {sorted(extra)}")
    mapping = {"pe_count": "pe_count", "pgu_count": "pgu_count", "spad_bytes": "filter_spad_bytes",
               "input_spad_bytes": "input_spad_bytes", "psum_spad_bytes": "psum_spad_bytes",
               "bitwidth": "bitwidth"}
    kwargs = {dst: _coerce("arch", src, sec[src], int) for src, dst in mapping.items() if src in sec}
    try:
        return PeArrayConfig(**kwargs)
    except ValueError as exc:
        raise ValidationError(f"[arch] {exc}") from None


def _energy_section(cp, section: str, keys: tuple[str, ...]) -> dict:
    if not cp.has_section(section):
        raise ValidationError(f"energy table has no [{section}] section")
    sec = cp[section]
    extra = set(sec) - set(keys) - {"name"}
    if extra:
        raise ValidationError(f"[{section}] unknown keys {sorted(extra)}")
    missing = [k for k in keys if k not in sec]
    if missing:
        raise ValidationError(f"[{section}] missing entries {missing}")
    return {k: _coerce(section, k, sec[k], float) for k in keys}


def load_energy_table(path) -> EnergyTable:
    cp = read_config(path)
    without = _energy_section(cp, "energy", COMPUTE_KEYS + MEMORY_KEYS)
    memory = {k: without.pop(k) for k in MEMORY_KEYS}
    with_oh = _energy_section(cp, "energy_with_overhead", COMPUTE_KEYS)
    return EnergyTable(without, with_oh, memory, cp["energy"].get("name", Path(path).stem))
