"""Run configuration: a flat key = value file with full validation.

One key per line, `#` comments, CLI `--set key=value` overrides.  Every
value is validated on load and errors carry file/line provenance so a bad
config fails fast with a pointer to the offending line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .sources import SOURCE_KINDS


class ConfigError(ValueError):
    """Raised on unknown keys, malformed values, or inconsistent settings."""


@dataclass(frozen=True)
class SourceSpec:
    """One sweep entry: source kind plus its telescope circuit size."""

    kind: str
    n_modes: int | None = None  # None -> config-level n_modes

    def label(self) -> str:
        return self.kind if self.n_modes is None else f"{self.kind}@{self.n_modes}"


def _parse_source_spec(text: str) -> SourceSpec:
    text = text.strip()
    if "@" in text:
        kind, _, n = text.partition("@")
        try:
            n_modes = int(n)
        except ValueError:
            raise ConfigError(f"bad mode count in source spec {text!r}")
        if n_modes < 2:
            raise ConfigError(f"source spec {text!r} needs at least 2 modes")
    else:
        kind, n_modes = text, None
    if kind not in SOURCE_KINDS:
        raise ConfigError(
            f"unknown source kind {kind!r} (choose from {', '.join(SOURCE_KINDS)})"
        )
    return SourceSpec(kind, n_modes)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_float(lo=None, hi=None):
    def parse(text: str) -> float:
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"expected a number, got {text!r}")
        if lo is not None and value < lo:
            raise ConfigError(f"value {value} below minimum {lo}")
        if hi is not None and value > hi:
            raise ConfigError(f"value {value} above maximum {hi}")
        return value

    return parse


def _parse_int(lo=None, hi=None):
    base = _parse_float(lo, hi)

    def parse(text: str) -> int:
        value = base(text)
        if value != int(value):
            raise ConfigError(f"expected an integer, got {text!r}")
        return int(value)

    return parse


def _parse_float_list(lo=None):
    item = _parse_float(lo)

    def parse(text: str) -> tuple[float, ...]:
        parts = [p for p in (s.strip() for s in text.split(",")) if p]
        if not parts:
            raise ConfigError("expected a comma-separated list of numbers")
        return tuple(item(p) for p in parts)

    return parse


def _parse_sources(text: str) -> tuple[SourceSpec, ...]:
    parts = [p for p in (s.strip() for s in text.split(",")) if p]
    if not parts:
        raise ConfigError("expected a comma-separated list of sources")
    return tuple(_parse_source_spec(p) for p in parts)


def _parse_mu(text: str) -> float | str:
    if text.strip().lower() == "auto":
        return "auto"
    return _parse_float(lo=0.0)(text)


def _parse_m_max(text: str) -> int | str:
    if text.strip().lower() == "auto":
        return "auto"
    return _parse_int(lo=0)(text)


def _parse_strategy(text: str) -> str:
    value = text.strip().lower()
    if value not in ("max-p1", "max-fisher"):
        raise ConfigError(f"mu_strategy must be max-p1 or max-fisher, got {text!r}")
    return value


@dataclass(frozen=True)
class Config:
    """Resolved run configuration; see README for the key-by-key schema."""

    sources: tuple[SourceSpec, ...] = (
        SourceSpec("heralded"),
        SourceSpec("coherent"),
        SourceSpec("single-photon"),
    )
    source: SourceSpec | None = None  # mle-sim / detector-sweep; None -> sources[0]
    mu: float | str = "auto"
    mu_strategy: str = "max-p1"
    n_modes: int = 2
    source_pn: tuple[float, ...] | None = None
    baselines_km: tuple[float, ...] = (40, 60, 80, 100, 120, 140, 160, 180, 200)
    attenuation_db_per_km: float = 0.2
    wavelength_nm: float = 1000.0
    epsilon: float = 0.02
    phi: float = math.pi / 4.0
    xi: float = 1.0
    dark_count: float = 0.0
    xi_values: tuple[float, ...] = (1.0, 0.75, 0.5)
    m_max: int | str = "auto"
    tail_ceiling: float = 0.3
    windows: int = 100_000
    window_counts: tuple[float, ...] | None = None
    trials: int = 200
    seed: int = 20250809
    oracle_d_max: int = 3
    oracle_multi_n: int = 3
    oracle_multi_d_max: int = 2
    event_cap: int = 200_000

    def primary_source(self) -> SourceSpec:
        return self.source if self.source is not None else self.sources[0]

    def as_dict(self) -> dict[str, str]:
        """Flat string form, embedded in every output file."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                text = ""
            elif f.name in ("sources",):
                text = ",".join(s.label() for s in value)
            elif f.name == "source":
                text = value.label()
            elif isinstance(value, tuple):
                text = ",".join(repr(v) for v in value)
            else:
                text = str(value)
            out[f.name] = text
        return out


_PARSERS = {
    "sources": _parse_sources,
    "source": _parse_source_spec,
    "mu": _parse_mu,
    "mu_strategy": _parse_strategy,
    "n_modes": _parse_int(lo=2),
    "source_pn": _parse_float_list(lo=0.0),
    "baselines_km": _parse_float_list(lo=0.0),
    "attenuation_db_per_km": _parse_float(lo=0.0),
    "wavelength_nm": _parse_float(lo=1e-3),
    "epsilon": _parse_float(lo=0.0, hi=1.0),
    "phi": _parse_float(),
    "xi": _parse_float(lo=0.0, hi=1.0),
    "dark_count": _parse_float(lo=0.0, hi=1.0),
    "xi_values": _parse_float_list(lo=0.0),
    "m_max": _parse_m_max,
    "tail_ceiling": _parse_float(lo=0.0, hi=1.0),
    "windows": _parse_int(lo=1),
    "window_counts": _parse_float_list(lo=1.0),
    "trials": _parse_int(lo=1),
    "seed": _parse_int(lo=0),
    "oracle_d_max": _parse_int(lo=1),
    "oracle_multi_n": _parse_int(lo=2),
    "oracle_multi_d_max": _parse_int(lo=1),
    "event_cap": _parse_int(lo=1),
}


def _apply(settings: dict, key: str, raw: str, origin: str) -> None:
    if key not in _PARSERS:
        raise ConfigError(f"{origin}: unknown key {key!r}")
    try:
        settings[key] = _PARSERS[key](raw)
    except ConfigError as exc:
        raise ConfigError(f"{origin}: {key}: {exc}") from None


def load_config(
    path: str | Path | None = None, overrides: list[str] | None = None
) -> Config:
    """Load a key = value config file and apply `key=value` overrides.

    Either part may be omitted; defaults fill the rest.  All errors are
    ConfigError with file/line (or override) provenance.
    """
    settings: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            _apply(settings, key.strip(), raw.strip(), f"{path}:{lineno}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected 'key=value'")
        key, _, raw = item.partition("=")
        _apply(settings, key.strip(), raw.strip(), f"--set {key.strip()}")
    config = replace(Config(), **settings)
    _validate(config)
    return config


def _validate(config: Config) -> None:
    for spec in config.sources + ((config.source,) if config.source else ()):
        if spec.kind == "generic" and config.source_pn is None:
            raise ConfigError("generic sources need source_pn")
    if config.source_pn is not None:
        total = sum(config.source_pn)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"source_pn sums to {total}, expected 1")
    if not config.baselines_km:
        raise ConfigError("baselines_km must not be empty")
