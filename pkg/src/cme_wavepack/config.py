"""INI-style run configuration: strict parsing, canonical serialization and hashing.

Keys placed before the first section header belong to the ``[run]`` section,
so ``setup = sec611`` on the first line expands to a named bundle that later
sections may override.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass
from fractions import Fraction

from .potentials import (
    PeriodicFunction,
    constant,
    cos_series,
    cos_shifted,
    cosine,
    from_harmonics,
    parse_rational,
    sn_squared,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "serialize_config",
    "config_from_sections",
    "config_hash",
    "read_sections",
]


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


# allowed keys per potential kind (besides "kind")
_KIND_KEYS = {
    "constant": {"value"},
    "cos_shifted": {"amplitude"},
    "cosine": {"amplitude", "wavenumber", "scale", "exact_wavenumber"},
    "cos_series": {"terms", "wavenumber", "scale", "exact_wavenumber"},
    "harmonics": {"harmonics", "wavenumber", "scale", "exact_wavenumber"},
    "sn_squared": {"m", "n_max"},
}

_SECTION_KEYS = {
    "run": {"setup"},
    "carrier": {"k0", "band", "omega", "period", "cutoff"},
    "soliton": {"v", "delta"},
    "numerics": {
        "dx",
        "dt",
        "l",
        "epsilon",
        "t_end",
        "t_end_factor",
        "tail_widths",
        "rate_window",
        "drop_beta_gamma",
        "n_k",
        "n_bands",
        "snapshots",
    },
    "output": {"dir"},
}
_POTENTIALS = ("potential.V", "potential.W", "potential.sigma")
_ORDER = ("run", *_POTENTIALS, "carrier", "soliton", "numerics", "output")

_PI_RE = re.compile(r"^([+-]?\d*(?:\.\d*)?)\*?pi(?:/(\d+(?:\.\d*)?))?$")


def _parse_angle(text: str) -> float:
    """A float, or a multiple of pi such as ``pi/2``, ``3pi/4``, ``0.5*pi``."""
    t = text.replace(" ", "").lower()
    m = _PI_RE.match(t)
    if m:
        num = m.group(1)
        factor = float(num) if num not in ("", "+", "-") else (-1.0 if num == "-" else 1.0)
        den = float(m.group(2)) if m.group(2) else 1.0
        return factor * math.pi / den
    return float(t)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    items = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    if not items:
        raise ValueError("empty list")
    return tuple(float(s) for s in items)


@dataclass(frozen=True)
class RunConfig:
    sections: dict  # canonical {section: {key: value-string}}
    V: PeriodicFunction
    W: PeriodicFunction
    sigma: PeriodicFunction
    period: float
    k0: Fraction
    band: int | None
    omega: float | None
    cutoff: int
    v: float
    delta: float
    dx: float
    dt: float
    L: float | None
    epsilons: tuple[float, ...]
    t_end: float | None
    t_end_factor: float
    tail_widths: float
    rate_window: tuple[float, float]
    drop_beta_gamma: bool
    n_k: int
    n_bands: int
    snapshots: tuple[float, ...]
    out_dir: str
    setup: str | None

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.sections == other.sections

    def __hash__(self) -> int:
        return hash(serialize_config(self))

    def to_setup(self, name: str | None = None):
        from .setups import NamedSetup

        return NamedSetup(
            id=name or self.setup or "custom",
            V=self.V,
            W=self.W,
            sigma=self.sigma,
            period=self.period,
            k0=self.k0,
            band_hint=self.band,
            omega_hint=self.omega,
            v=self.v,
            delta=self.delta,
            dx=self.dx,
            dt=self.dt,
            t_end_factor=self.t_end_factor,
            epsilons=self.epsilons,
            rate_window=self.rate_window,
            cutoff=self.cutoff,
            tail_widths=self.tail_widths,
            drop_beta_gamma=self.drop_beta_gamma,
        )

    @property
    def hash(self) -> str:
        return config_hash(self)


def read_sections(text: str) -> dict:
    """Raw ``{section: {key: value}}`` from INI text, without validation."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=(";", "#"), strict=True, default_section="__none__"
    )
    parser.optionxform = str.lower  # keys case-insensitive, section names kept
    # keys before the first header belong to [run]
    body = text
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("["):
            break
        if stripped and not stripped.startswith(("#", ";")):
            body = "[run]\n" + text
            break
    parser.read_string(body)
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _merge(base: dict, over: dict) -> dict:
    out = {s: dict(kv) for s, kv in base.items()}
    for s, kv in over.items():
        if s.startswith("potential.") and "kind" in kv and out.get(s, {}).get("kind") != kv["kind"]:
            out[s] = {}  # a different kind replaces the whole potential
        out.setdefault(s, {}).update(kv)
    return out


_DEFAULTS = {
    "potential.sigma": {"kind": "constant", "value": "-1"},
    "potential.W": {"kind": "constant", "value": "0"},
    "carrier": {"cutoff": "64"},
    "soliton": {"v": "0.5", "delta": "pi/2"},
    "numerics": {
        "dx": "0.05",
        "dt": "0.02",
        "epsilon": "0.01,0.02,0.03,0.04,0.05",
        "t_end_factor": "2",
        "tail_widths": "20",
        "rate_window": "1.45,1.90",
        "drop_beta_gamma": "false",
        "n_k": "201",
        "n_bands": "6",
        "snapshots": "",
    },
    "output": {"dir": "out"},
}


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def get(self, sections, section, key, conv, required=False, default=None):
        raw = sections.get(section, {}).get(key)
        if raw is None or raw == "":
            if required:
                self.errors.append(f"[{section}] {key}: missing")
            return default
        try:
            return conv(raw)
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            self.errors.append(f"[{section}] {key}: {exc}")
            return default

    def check(self, ok: bool, message: str) -> None:
        if not ok:
            self.errors.append(message)


def _rational_or_float(sec: dict):
    text = sec.get("wavenumber", "1")
    exact = _parse_bool(sec.get("exact_wavenumber", "true"))
    return parse_rational(text) if exact else float(text)


def _build_potential(name: str, sec: dict, lattice_scale: float | None, col: _Collector):
    kind = sec.get("kind")
    if kind is None:
        col.errors.append(f"[{name}] kind: missing")
        return None
    if kind not in _KIND_KEYS:
        col.errors.append(f"[{name}] kind: unknown potential kind {kind!r}; choose from {sorted(_KIND_KEYS)}")
        return None
    for key in sec:
        if key != "kind" and key not in _KIND_KEYS[kind]:
            col.errors.append(f"[{name}] {key}: unknown key for kind {kind!r}")
    try:
        if kind == "constant":
            return constant(float(sec.get("value", "0")))
        if kind == "cos_shifted":
            return cos_shifted(float(sec.get("amplitude", "2")))
        if kind == "sn_squared":
            if name != "potential.V":
                raise ValueError("sn_squared is only available for V")
            return sn_squared(float(sec.get("m", "0.5")), int(sec.get("n_max", "32")))
        scale_text = sec.get("scale", "1").strip().lower()
        if scale_text == "lattice":
            if lattice_scale is None:
                raise ValueError("scale = lattice is not available for V")
            scale = lattice_scale
        else:
            scale = float(scale_text)
        wn = _rational_or_float(sec)
        if kind == "cosine":
            return cosine(float(sec.get("amplitude", "1")), wn, scale)
        if kind == "cos_series":
            terms = []
            for item in sec.get("terms", "").split(","):
                if not item.strip():
                    continue
                n, b = item.split(":")
                terms.append((int(n), float(parse_rational(b.strip()))))
            if not terms:
                raise ValueError("terms: empty")
            return cos_series(terms, wn, scale)
        triples = []
        for item in sec.get("harmonics", "").split(","):
            if not item.strip():
                continue
            parts = item.split(":")
            if len(parts) != 3:
                raise ValueError(f"harmonic {item!r} must be n:re:im")
            triples.append((int(parts[0]), float(parts[1]), float(parts[2])))
        return from_harmonics(triples, wn, scale)
    except (ValueError, ZeroDivisionError) as exc:
        col.errors.append(f"[{name}] {exc}")
        return None


def config_from_sections(sections: dict) -> RunConfig:
    """Validate and build a RunConfig; all problems are reported together."""
    col = _Collector()
    setup = sections.get("run", {}).get("setup")
    base = dict(_DEFAULTS)
    if setup:
        from .setups import SETUP_SECTIONS

        if setup not in SETUP_SECTIONS:
            col.errors.append(f"[run] setup: unknown setup {setup!r}; choose from {sorted(SETUP_SECTIONS)}")
        else:
            base = _merge(base, SETUP_SECTIONS[setup])
    merged = _merge(base, sections)
    for s, kv in merged.items():
        if s in _POTENTIALS:
            continue
        if s not in _SECTION_KEYS:
            col.errors.append(f"[{s}]: unknown section")
            continue
        for key in kv:
            if key not in _SECTION_KEYS[s]:
                col.errors.append(f"[{s}] {key}: unknown key")

    V = _build_potential("potential.V", merged.get("potential.V", {}), None, col)
    period = col.get(merged, "carrier", "period", _parse_angle)
    if period is None and V is not None:
        period = V.period
    if period is not None and not (period > 0 and math.isfinite(period)):
        col.errors.append("[carrier] period: must be positive and finite (constant V needs an explicit period)")
        period = None
    lattice = 2 * math.pi / period if period else None
    W = _build_potential("potential.W", merged.get("potential.W", {}), lattice, col)
    sigma = _build_potential("potential.sigma", merged.get("potential.sigma", {}), lattice, col)

    k0 = col.get(merged, "carrier", "k0", parse_rational, required=True)
    if k0 is not None:
        col.check(-Fraction(1, 2) < k0 <= Fraction(1, 2), "[carrier] k0: must lie in (-1/2, 1/2]")
    band = col.get(merged, "carrier", "band", int)
    omega = col.get(merged, "carrier", "omega", float)
    col.check(band is not None or omega is not None, "[carrier]: need band or omega")
    if band is not None:
        col.check(band >= 1, "[carrier] band: must be >= 1")
    cutoff = col.get(merged, "carrier", "cutoff", int, default=64)
    col.check(cutoff is not None and cutoff >= 8, "[carrier] cutoff: must be >= 8")

    v = col.get(merged, "soliton", "v", float, default=0.5)
    if v is not None:
        col.check(abs(v) < 1.0, f"[soliton] v: |v| < 1 required, got {v}")
    delta = col.get(merged, "soliton", "delta", _parse_angle, default=math.pi / 2)
    if delta is not None:
        col.check(0.0 <= delta <= math.pi + 1e-15, f"[soliton] delta: must lie in [0, pi], got {delta}")

    g = lambda key, conv, **kw: col.get(merged, "numerics", key, conv, **kw)  # noqa: E731
    dx = g("dx", float, default=0.05)
    dt = g("dt", float, default=0.02)
    L = g("l", float)
    epsilons = g("epsilon", _parse_float_list, default=(0.01,))
    t_end = g("t_end", float)
    t_end_factor = g("t_end_factor", float, default=2.0)
    tail_widths = g("tail_widths", float, default=20.0)
    window = g("rate_window", _parse_float_list, default=(1.45, 1.90))
    drop = g("drop_beta_gamma", _parse_bool, default=False)
    n_k = g("n_k", int, default=201)
    n_bands = g("n_bands", int, default=6)
    snapshots = g("snapshots", _parse_float_list, default=())
    for name, val in (("dx", dx), ("dt", dt), ("t_end_factor", t_end_factor), ("tail_widths", tail_widths)):
        if val is not None:
            col.check(val > 0, f"[numerics] {name}: must be positive")
    if L is not None:
        col.check(L > 0, "[numerics] l: must be positive")
    if t_end is not None:
        col.check(t_end >= 0, "[numerics] t_end: must be non-negative")
    if epsilons:
        col.check(all(0 < e <= 0.2 for e in epsilons), "[numerics] epsilon: values must lie in (0, 0.2]")
    if window is not None:
        col.check(len(window) == 2 and window[0] <= window[1], "[numerics] rate_window: need lo,hi with lo <= hi")
    if n_k is not None:
        col.check(n_k >= 3, "[numerics] n_k: must be >= 3")
    if n_bands is not None:
        col.check(n_bands >= 1, "[numerics] n_bands: must be >= 1")
    out_dir = merged.get("output", {}).get("dir", "out")

    if col.errors:
        raise ConfigError(col.errors)
    canonical = {s: {k: merged[s][k].strip() for k in sorted(merged[s])} for s in _ORDER if merged.get(s)}
    return RunConfig(
        sections=canonical,
        V=V,
        W=W,
        sigma=sigma,
        period=period,
        k0=k0,
        band=band,
        omega=omega,
        cutoff=cutoff,
        v=v,
        delta=delta,
        dx=dx,
        dt=dt,
        L=L,
        epsilons=tuple(sorted(epsilons)),
        t_end=t_end,
        t_end_factor=t_end_factor,
        tail_widths=tail_widths,
        rate_window=(window[0], window[1]),
        drop_beta_gamma=drop,
        n_k=n_k,
        n_bands=n_bands,
        snapshots=tuple(snapshots),
        out_dir=out_dir,
        setup=setup,
    )


def parse_config(text: str) -> RunConfig:
    try:
        sections = read_sections(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    return config_from_sections(sections)


def serialize_config(cfg: RunConfig, skip: tuple[str, ...] = ()) -> str:
    """Canonical text; ``parse_config(serialize_config(c)) == c``."""
    lines = []
    for s in _ORDER:
        kv = None if s in skip else cfg.sections.get(s)
        if not kv:
            continue
        if lines:
            lines.append("")
        lines.append(f"[{s}]")
        for k, val in kv.items():
            lines.append(f"{k} = {val}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """Identity of the computation; the output location does not enter."""
    return hashlib.sha256(serialize_config(cfg, skip=("output",)).encode()).hexdigest()[:16]
