"""Sweep requests, flat key-value config files, and figure presets.

Config files are plain text, one `key = value` per line, '#' comments.
SNR and the Rician K-factor are accepted in dB on all external interfaces
and converted to linear scale exactly once, here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import channel as ch
from .errors import ConfigurationError
from .mc import MCConfig

__all__ = [
    "SweepRequest",
    "BOUND_NAMES",
    "parse_n_grid",
    "format_n_grid",
    "parse_config_text",
    "serialize_config",
    "figure_preset",
    "db_to_linear",
]

BOUND_NAMES = [
    "ach-csit",
    "ach-nocsi",
    "ach-simo",
    "ach-csir-kb",
    "conv-simo",
    "conv-iso",
    "normal",
    "awgn",
    "outage",
    "eps-capacity",
]

SIMO_ONLY = {"ach-simo", "ach-csir-kb", "conv-simo"}


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class SweepRequest:
    spec: ch.ChannelSpec
    cov: object
    epsilon: float
    n_grid: tuple[int, ...]
    bounds: tuple[str, ...]
    mc: MCConfig
    tau: float | None = None  # None = default grid search
    rate_nats: float | None = None  # only for the 'outage' bound
    output: str | None = None

    def validate(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigurationError("epsilon must be in (0, 1)")
        if list(self.n_grid) != sorted(set(self.n_grid)):
            raise ConfigurationError("n_grid must be strictly increasing")
        for b in self.bounds:
            if b not in BOUND_NAMES:
                raise ConfigurationError(f"unknown bound: {b}")
            if b in SIMO_ONLY and self.spec.t != 1:
                raise ConfigurationError(f"bound {b} requires a single transmit antenna")
        if "outage" in self.bounds and self.rate_nats is None:
            raise ConfigurationError("the outage bound needs a rate (rate_bits)")


def parse_n_grid(text):
    """Grid spec: 'a:b:step' (arithmetic, inclusive), 'geom:a:b:points',
    a comma list, or a single integer."""
    text = text.strip()
    try:
        if text.startswith("geom:"):
            _, a, b, k = text.split(":")
            a, b, k = int(a), int(b), int(k)
            if a < 1 or b < a or k < 2:
                raise ValueError
            grid = sorted({int(round(a * (b / a) ** (i / (k - 1)))) for i in range(k)})
            return tuple(grid)
        if ":" in text:
            a, b, step = (int(x) for x in text.split(":"))
            if step < 1 or b < a:
                raise ValueError
            return tuple(range(a, b + 1, step))
        if "," in text:
            vals = sorted({int(x) for x in text.split(",")})
            return tuple(vals)
        return (int(text),)
    except ValueError as exc:
        raise ConfigurationError(f"bad n_grid spec: {text!r}") from exc


def format_n_grid(grid):
    return ",".join(str(n) for n in grid)


def _fading_from_keys(kind, k_db, m_shape):
    kind = (kind or "rayleigh").lower()
    if kind == "rayleigh":
        return ch.Rayleigh()
    if kind == "rician":
        if k_db is None:
            raise ConfigurationError("rician fading needs fading.k_db")
        return ch.Rician(k_factor=db_to_linear(float(k_db)))
    if kind == "nakagami":
        if m_shape is None:
            raise ConfigurationError("nakagami fading needs fading.m_shape")
        return ch.Nakagami(m_shape=float(m_shape))
    raise ConfigurationError(f"unknown fading kind: {kind}")


def _fading_keys(fading):
    if isinstance(fading, ch.Rayleigh):
        return {"fading.kind": "rayleigh"}
    if isinstance(fading, ch.Rician):
        return {"fading.kind": "rician", "fading.k_db": repr(linear_to_db(fading.k_factor))}
    if isinstance(fading, ch.Nakagami):
        return {"fading.kind": "nakagami", "fading.m_shape": repr(fading.m_shape)}
    raise ConfigurationError(f"unknown fading model: {fading!r}")


def _cov_from_key(name):
    name = (name or "iso").lower()
    if name in ("iso", "isotropic"):
        return ch.Isotropic()
    if name in ("waterfill", "csit"):
        return ch.WaterFill()
    raise ConfigurationError(f"unknown covariance policy: {name}")


def _cov_key(cov):
    if isinstance(cov, ch.Isotropic):
        return "iso"
    if isinstance(cov, ch.WaterFill):
        return "waterfill"
    raise ConfigurationError("only iso/waterfill covariances serialize to config files")


def parse_config_text(text):
    """Parse a flat key-value config into a SweepRequest."""
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        kv[key] = value
    return request_from_mapping(kv)


def request_from_mapping(kv):
    try:
        antennas = kv.get("antennas", "1x1").lower()
        t_str, r_str = antennas.split("x")
        spec = ch.ChannelSpec(
            t=int(t_str),
            r=int(r_str),
            snr=db_to_linear(float(kv["snr_db"])),
            fading=_fading_from_keys(
                kv.get("fading.kind"), kv.get("fading.k_db"), kv.get("fading.m_shape")
            ),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"bad channel configuration: {exc}") from exc
    tau_raw = kv.get("tau", "grid")
    tau = None if tau_raw in ("grid", "", None) else float(tau_raw)
    rate_nats = None
    if "rate_bits" in kv:
        rate_nats = float(kv["rate_bits"]) * math.log(2.0)
    req = SweepRequest(
        spec=spec,
        cov=_cov_from_key(kv.get("cov")),
        epsilon=float(kv.get("epsilon", "1e-3")),
        n_grid=parse_n_grid(kv.get("n_grid", "100")),
        bounds=tuple(b.strip() for b in kv.get("bounds", "").split(",") if b.strip()),
        mc=MCConfig(
            seed=int(kv.get("seed", "1")),
            samples=int(kv.get("samples", "100000")),
            confidence_delta=float(kv.get("confidence_delta", "0.01")),
            chunk_size=int(kv.get("chunk_size", "4096")),
        ),
        tau=tau,
        rate_nats=rate_nats,
        output=kv.get("output"),
    )
    req.validate()
    return req


def serialize_config(req):
    """Inverse of parse_config_text (round-trips exactly)."""
    kv = {
        "antennas": f"{req.spec.t}x{req.spec.r}",
        "snr_db": repr(linear_to_db(req.spec.snr)),
        **_fading_keys(req.spec.fading),
        "cov": _cov_key(req.cov),
        "epsilon": repr(req.epsilon),
        "tau": "grid" if req.tau is None else repr(req.tau),
        "n_grid": format_n_grid(req.n_grid),
        "bounds": ",".join(req.bounds),
        "seed": str(req.mc.seed),
        "samples": str(req.mc.samples),
        "confidence_delta": repr(req.mc.confidence_delta),
        "chunk_size": str(req.mc.chunk_size),
    }
    if req.rate_nats is not None:
        kv["rate_bits"] = repr(req.rate_nats / math.log(2.0))
    if req.output is not None:
        kv["output"] = req.output
    return "".join(f"{k} = {v}\n" for k, v in kv.items())


_FIG_GRID = "geom:10:1000:12"

_PRESETS = {
    "fig2": dict(
        antennas="1x2",
        snr_db="-1.55",
        fading_kind="rician",
        k_db="20",
        epsilon=1e-3,
        bounds=("ach-simo", "ach-csir-kb", "conv-simo", "normal", "awgn"),
        cov="waterfill",
    ),
    "fig3": dict(
        antennas="2x3",
        snr_db="2.12",
        fading_kind="rayleigh",
        k_db=None,
        epsilon=1e-3,
        bounds=("ach-nocsi", "conv-iso", "normal"),
        cov="iso",
    ),
    "fig5": dict(
        antennas="1x2",
        snr_db="2.74",
        fading_kind="rayleigh",
        k_db=None,
        epsilon=0.1,
        bounds=("ach-simo", "conv-simo", "normal"),
        cov="waterfill",
    ),
}


def figure_preset(name, seed=1):
    """Sweep request reproducing one of the published bound figures."""
    if name not in _PRESETS:
        raise ConfigurationError(f"unknown figure preset: {name}")
    p = _PRESETS[name]
    kv = {
        "antennas": p["antennas"],
        "snr_db": p["snr_db"],
        "fading.kind": p["fading_kind"],
        "epsilon": str(p["epsilon"]),
        "cov": p["cov"],
        "n_grid": _FIG_GRID,
        "bounds": ",".join(p["bounds"]),
        "seed": str(seed),
    }
    if p["k_db"] is not None:
        kv["fading.k_db"] = p["k_db"]
    return request_from_mapping(kv)
