"""YAML run configuration.

Every knob has a default, so an empty file (or no file) is a valid config.
Unknown keys and wrongly typed values are rejected with the file path and
line number.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .circuit_sim import SimConfig
from .device_models import GnrGeometry, MosPair
from .power_gating import DeviceLibrary, HarnessSettings, PgKind, PgStructure


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = path or "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class DeviceSection:
    n_dimer: int = 12
    n_rib: int = 6
    w_sp_nm: float = 2.0
    l_ch_nm: float = 16.0
    l_res_nm: float = 16.0
    t_ox_top_nm: float = 0.95
    t_ox_sub_nm: float = 20.0
    f_dop: float = 0.001
    n0_per_ribbon: float = 1.0
    subbands: int = 4
    temperature_k: float = 300.0

    def geometry(self) -> GnrGeometry:
        return GnrGeometry(self.n_dimer, self.n_rib, self.w_sp_nm, self.l_ch_nm, self.l_res_nm,
                           self.t_ox_top_nm, self.t_ox_sub_nm, self.f_dop)


@dataclass(frozen=True)
class MosSection:
    n_width_nm: float = 33.6
    p_width_ratio: float = 2.0
    vth_n: float = 0.47965
    vth_p: float = -0.43121
    subthreshold_ideality: float = 2.0
    i_on_a: float = 10e-6
    v_on: float = 0.7


@dataclass(frozen=True)
class ModuleSection:
    vcc: float = 0.7
    switch_vdd: float = 0.35
    c_load_f: float = 0.1e-15
    vgnr_cap_per_nm: float = 1e-17


@dataclass(frozen=True)
class GatingSection:
    mospg_ratio: float = 0.10
    gnr_ratio: float = 0.01
    mospg_vth_offset: float = 0.15
    ns_switch_count: int = 4
    ns_stagger_s: float = 0.0
    qm_dimer_pair: tuple[int, int] = (15, 9)
    back_gate_fraction: float = 0.2
    wakeup_threshold: float = 0.05


@dataclass(frozen=True)
class HarnessSection:
    seed: int = 2024
    leakage_random_vectors: int = 8
    t_edge_s: float = 20e-12
    input_rise_s: float = 10e-12
    delay_t_max_s: float = 5e-9
    wake_dt_s: float = 100e-12
    wake_t_max_s: float = 5e-6


@dataclass(frozen=True)
class SweepSection:
    ratio: float = 0.10
    base_n_dimer: int = 12
    base_n_rib: int = 12
    base_w_sp_nm: float = 4.0
    dimer_values: tuple[int, ...] = (6, 9, 12, 15, 18)
    ribbon_values: tuple[int, ...] = (6, 12, 24, 48, 96, 140)
    spacing_values: tuple[float, ...] = (4.0, 6.0, 8.0, 10.0)
    module: str = "invchain"


@dataclass(frozen=True)
class RunSection:
    benchmarks: tuple[str, ...] = ("invchain", "c17", "c432")
    structures: tuple[str, ...] = ("MOSPG", "GMCPG_SS", "GMCPG_NS", "TM_GMCPG", "QM_GMCPG")
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    device: DeviceSection = field(default_factory=DeviceSection)
    mos: MosSection = field(default_factory=MosSection)
    module: ModuleSection = field(default_factory=ModuleSection)
    gating: GatingSection = field(default_factory=GatingSection)
    sim: SimConfig = field(default_factory=SimConfig)
    harness: HarnessSection = field(default_factory=HarnessSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    run: RunSection = field(default_factory=RunSection)

    # -- derived objects

    def mos_pair(self) -> MosPair:
        m = self.mos
        return MosPair.default(m.n_width_nm, m.p_width_ratio, m.subthreshold_ideality, m.i_on_a,
                               m.v_on, m.vth_n, m.vth_p, self.device.temperature_k)

    def library(self) -> DeviceLibrary:
        return DeviceLibrary(
            gnr_base=self.device.geometry(), n0_per_ribbon=self.device.n0_per_ribbon,
            subbands=self.device.subbands, temperature=self.device.temperature_k,
            mos=self.mos_pair(), mospg_vth_offset=self.gating.mospg_vth_offset,
            switch_vdd=self.module.switch_vdd, back_gate_fraction=self.gating.back_gate_fraction,
            vgnr_cap_per_nm=self.module.vgnr_cap_per_nm, ns_stagger=self.gating.ns_stagger_s)

    def harness_settings(self) -> HarnessSettings:
        h = self.harness
        return HarnessSettings(h.seed, h.leakage_random_vectors, h.t_edge_s, h.input_rise_s,
                               h.delay_t_max_s, h.wake_dt_s, h.wake_t_max_s,
                               self.gating.wakeup_threshold, self.module.c_load_f, self.module.vcc)

    def structure(self, kind: str | PgKind) -> PgStructure:
        kind = PgKind(kind)
        g = self.gating
        ratio = g.mospg_ratio if kind is PgKind.MOSPG else g.gnr_ratio
        return PgStructure(kind, ratio, g.ns_switch_count, g.qm_dimer_pair)

    def sweep_base(self) -> dict:
        s = self.sweep
        return {"n_dimer": s.base_n_dimer, "n_rib": s.base_n_rib, "w_sp": s.base_w_sp_nm}

    def with_seed(self, seed: int) -> RunConfig:
        return replace(self, harness=replace(self.harness, seed=int(seed)))

    # -- serialisation

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sim"]["integration"] = self.sim.integration.value
        return _plain(d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


_SECTIONS = {f.name: f for f in fields(RunConfig)}


def _section_type(name):
    return {
        "device": DeviceSection, "mos": MosSection, "module": ModuleSection,
        "gating": GatingSection, "sim": SimConfig, "harness": HarnessSection,
        "sweep": SweepSection, "run": RunSection,
    }[name]


def _key_lines(node, prefix=()):
    """Map key paths to 1-based line numbers from a composed YAML tree."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (str(k.value),)
            out[path] = k.start_mark.line + 1
            out.update(_key_lines(v, path))
    return out


def _coerce(value, default, key):
    """Coerce a YAML scalar or list to the type of ``default``."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"{key} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, str):
            # YAML 1.1 reads exponent forms without a dot (1e-5) as strings
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{key} must be a number")
        return float(value)
    if isinstance(default, str) or hasattr(default, "value"):
        if not isinstance(value, str):
            raise TypeError(f"{key} must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise TypeError(f"{key} must be a list")
        if default:
            return tuple(_coerce(v, default[0], key) for v in value)
        return tuple(value)
    return value


def config_from_dict(data: dict | None, path: str | None = None,
                     lines: dict | None = None) -> RunConfig:
    data = data or {}
    lines = lines or {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", path, 1)
    sections = {}
    for name, body in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section {name!r}", path, lines.get((name,)))
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section {name!r} must be a mapping", path, lines.get((name,)))
        cls = _section_type(name)
        defaults = cls()
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in body.items():
            line = lines.get((name, str(key)))
            if key not in known:
                raise ConfigError(f"unknown key {name}.{key}", path, line)
            try:
                kwargs[key] = _coerce(value, getattr(defaults, key), f"{name}.{key}")
            except TypeError as exc:
                raise ConfigError(str(exc), path, line) from None
        try:
            sections[name] = cls(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"section {name!r}: {exc}", path, lines.get((name,))) from None
    cfg = RunConfig(**sections)
    _check(cfg, path, lines)
    return cfg


def _check(cfg: RunConfig, path, lines):
    try:
        cfg.device.geometry()
        for s in cfg.run.structures:
            cfg.structure(s)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None
    if not (cfg.module.switch_vdd > 0 and cfg.module.vcc > 0):
        raise ConfigError("supply voltages must be positive", path, lines.get(("module",)))


def load_config(path: str | None) -> RunConfig:
    """Read a YAML config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path) from None
    return parse_config(text, path)


def parse_config(text: str, path: str | None = None) -> RunConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML error: {getattr(exc, 'problem', exc)}", path,
                          mark.line + 1 if mark else None) from None
    return config_from_dict(data, path, _key_lines(node) if node is not None else {})


def default_config_yaml() -> str:
    """The default configuration as YAML, suitable as a starting file."""
    return yaml.safe_dump(RunConfig().to_dict(), sort_keys=False)
