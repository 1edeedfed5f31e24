"""Run configuration: INI-style ``key = value`` sections with typed defaults.

Keys are addressed as ``section.key`` (e.g. ``kernel.sigma``) both in
``--set`` overrides and in the resolved-config comment written to every CSV.
Lists are comma separated; an empty value means "unset" for optional keys.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .fem import NU0


@dataclass
class MeshSection:
    node_file: str | None = None
    ele_file: str | None = None
    core_width: float = 0.06
    core_height: float = 0.08
    limb_width: float = 0.015
    window_width: float | None = None
    window_height: float | None = None
    gap: float = 0.0005
    coil_width: float = 0.005
    air_margin: float = 0.01
    h: float = 0.002
    sizes: list[float] = field(default_factory=list)


@dataclass
class KernelSection:
    sigma: float = 1.0
    d: list[float] = field(default_factory=lambda: [2.0, 10.0, 100.0])
    relative: bool = False


@dataclass
class HMatrixSection:
    n_min: int = 256
    eta: float = 1.0
    epsilon: float = 0.01
    k_max: int = 128
    dense_budget_mb: float = 2048.0


@dataclass
class KleSection:
    threshold: float = 0.95
    m_request: int = 50
    tol: float = 1e-8
    max_iter: int = 0


@dataclass
class MaterialsSection:
    nu_mean: float = 795.774
    nu_air: float = NU0
    nu_coil: float = NU0
    n_turns: int = 260
    current: float = 1.0


@dataclass
class UqSection:
    p: int = 2
    node_budget: int = 100_000
    max_modes: int = 4


@dataclass
class SampleSection:
    xi: list[float] | None = None


@dataclass
class RunSection:
    seed: int = 0
    threads: int = 1
    plot: bool = False


@dataclass
class RunConfig:
    mesh: MeshSection = field(default_factory=MeshSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    hmatrix: HMatrixSection = field(default_factory=HMatrixSection)
    kle: KleSection = field(default_factory=KleSection)
    materials: MaterialsSection = field(default_factory=MaterialsSection)
    uq: UqSection = field(default_factory=UqSection)
    sample: SampleSection = field(default_factory=SampleSection)
    run: RunSection = field(default_factory=RunSection)

    def sections(self):
        for f in dataclasses.fields(self):
            yield f.name, getattr(self, f.name)

    def set(self, dotted: str, raw: str):
        try:
            sec_name, key = dotted.split(".", 1)
        except ValueError:
            raise ConfigError(f"override {dotted!r} must look like section.key") from None
        sec = getattr(self, sec_name, None)
        if sec is None or not dataclasses.is_dataclass(sec):
            raise ConfigError(f"unknown config section {sec_name!r}")
        hints = typing.get_type_hints(type(sec))
        if key not in hints:
            raise ConfigError(f"unknown config key {dotted!r}")
        setattr(sec, key, _parse_value(hints[key], raw.strip(), dotted))

    def validate(self) -> "RunConfig":
        m, k, h, e, mat, u, r = self.mesh, self.kernel, self.hmatrix, self.kle, self.materials, self.uq, self.run
        checks = [
            ((m.node_file is None) == (m.ele_file is None), "mesh.node_file and mesh.ele_file go together"),
            (m.h > 0 and all(s > 0 for s in m.sizes), "element sizes must be positive"),
            (k.sigma >= 0, "kernel.sigma must be >= 0"),
            (len(k.d) > 0 and all(d > 0 for d in k.d), "kernel.d needs at least one positive correlation length"),
            (h.n_min >= 1, "hmatrix.n_min must be >= 1"),
            (h.eta > 0, "hmatrix.eta must be positive"),
            (0 < h.epsilon < 1, "hmatrix.epsilon must lie in (0, 1)"),
            (h.k_max >= 1, "hmatrix.k_max must be >= 1"),
            (h.dense_budget_mb > 0, "hmatrix.dense_budget_mb must be positive"),
            (0 < e.threshold <= 1, "kle.threshold must lie in (0, 1]"),
            (e.m_request >= 1, "kle.m_request must be >= 1"),
            (e.tol > 0, "kle.tol must be positive"),
            (e.max_iter >= 0, "kle.max_iter must be >= 0 (0 = automatic)"),
            (mat.nu_mean > 0 and mat.nu_air > 0 and mat.nu_coil > 0, "reluctivities must be positive"),
            (mat.n_turns >= 1, "materials.n_turns must be >= 1"),
            (mat.current != 0, "materials.current must be non-zero"),
            (u.p >= 0, "uq.p must be >= 0"),
            (u.node_budget >= 1, "uq.node_budget must be >= 1"),
            (u.max_modes >= 0, "uq.max_modes must be >= 0 (0 = no cap)"),
            (r.threads >= 1, "run.threads must be >= 1"),
            (r.seed >= 0, "run.seed must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name, sec in self.sections():
            cp[name] = {f.name: _format_value(getattr(sec, f.name)) for f in dataclasses.fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def one_line(self) -> str:
        parts = []
        for name, sec in self.sections():
            for f in dataclasses.fields(sec):
                parts.append(f"{name}.{f.name}={_format_value(getattr(sec, f.name))}")
        return "; ".join(parts)


def _is_list(tp):
    return typing.get_origin(tp) is list or list in typing.get_args(tp) or any(
        typing.get_origin(a) is list for a in typing.get_args(tp))


def _scalar_type(tp):
    args = [a for a in typing.get_args(tp) if a is not type(None)]
    if typing.get_origin(tp) is list:
        return typing.get_args(tp)[0]
    if args:
        inner = args[0]
        if typing.get_origin(inner) is list:
            return typing.get_args(inner)[0]
        return inner
    return tp


def _optional(tp):
    return type(None) in typing.get_args(tp)


def _convert(kind, text, key):
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def _parse_value(tp, text, key):
    if text == "":
        if _optional(tp):
            return None
        if _is_list(tp):
            return []
        raise ConfigError(f"{key}: a value is required")
    kind = _scalar_type(tp)
    if _is_list(tp):
        return [_convert(kind, t.strip(), key) for t in text.split(",") if t.strip()]
    return _convert(kind, text, key)


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ", ".join(_format_value(x) for x in v)
    return str(v)


def parse_config(text: str = "", overrides=()) -> RunConfig:
    cfg = RunConfig()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    for sec in cp.sections():
        for key, raw in cp[sec].items():
            cfg.set(f"{sec}.{key}", raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        k, v = item.split("=", 1)
        cfg.set(k.strip(), v)
    return cfg.validate()


def load_config(path=None, overrides=()) -> RunConfig:
    text = ""
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)
