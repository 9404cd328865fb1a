"""Experiment configuration: defaults, INI-style config files, overrides.

A config file holds one section per parameter group, keys named after the
dataclass fields (SI units).  Command-line flags override file values.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayGeometry, LinkGeometry
from .detectors import Scheme
from .glrt import GlrtConfig
from .mathcore import TurbulenceProfile, gg_params_from_rytov, rytov_variance
from .signal import ApdElectronics

SWEEP_AXES = ("tx_power_dB", "window_L", "na", "aoa_jitter_mrad")

DEFAULT_SCHEMES = (Scheme.IDEAL_ML.value, Scheme.EGC.value, Scheme.MRC.value,
                   Scheme.GLRT_REDUCED.value)


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending field."""


def default_link() -> LinkGeometry:
    # Divergence chosen so the beam radius is 30 m at the slant range.
    z = 400e3 / np.cos(np.deg2rad(30.0))
    return LinkGeometry(altitude_diff=400e3, zenith_angle_xi=np.deg2rad(30.0),
                        wavelength=1550e-9, rx_aperture_radius=0.03,
                        divergence_theta_div=30.0 / z)


@dataclass(frozen=True)
class ExperimentConfig:
    link: LinkGeometry = field(default_factory=default_link)
    array: ArrayGeometry = field(default_factory=ArrayGeometry)
    electronics: ApdElectronics = field(default_factory=ApdElectronics)
    glrt: GlrtConfig = field(default_factory=GlrtConfig)
    turbulence_enabled: bool = True
    wind_speed_V: float = 21.0
    cn2_ground: float = 1e-13
    schemes: tuple[str, ...] = DEFAULT_SCHEMES
    n_frames: int = 1000
    seed: int = 1
    workers: int = 1
    tx_power_ref: str = "dBm"        # reference level of the tx_power_dB axis
    sweep_axis: str | None = None
    sweep_values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n_frames < 1:
            raise ConfigError("[sim] n_frames: must be >= 1")
        if self.workers < 1:
            raise ConfigError("[sim] workers: must be >= 1")
        if self.tx_power_ref not in ("dBm", "dBW"):
            raise ConfigError("[sim] tx_power_ref: must be dBm or dBW")
        bad = [s for s in self.schemes if s not in {s.value for s in Scheme}]
        if bad:
            raise ConfigError(f"[sim] schemes: unknown scheme(s) {bad}")
        if not self.schemes:
            raise ConfigError("[sim] schemes: at least one scheme required")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError(
                    f"[sweep] axis: must be one of {', '.join(SWEEP_AXES)}")
            if not self.sweep_values:
                raise ConfigError("[sweep] values: empty")

    # -- derived physics ----------------------------------------------------

    def turbulence_profile(self) -> TurbulenceProfile:
        return TurbulenceProfile(
            wind_speed_V=self.wind_speed_V, cn2_ground=self.cn2_ground,
            altitude_ground_Hg=0.0, altitude_sat_Hs=self.link.altitude_diff,
            zenith_angle_xi=self.link.zenith_angle_xi)

    def gg_params(self):
        """Fading parameters, or None when turbulence is disabled."""
        if not self.turbulence_enabled:
            return None
        sigma_r2 = rytov_variance(self.turbulence_profile(), self.link.wavelength)
        return gg_params_from_rytov(sigma_r2)

    def tx_power_from_db(self, value_db: float) -> float:
        offset = 30.0 if self.tx_power_ref == "dBm" else 0.0
        return 10.0 ** ((value_db - offset) / 10.0)

    def tx_power_db(self) -> float:
        offset = 30.0 if self.tx_power_ref == "dBm" else 0.0
        return 10.0 * np.log10(self.electronics.tx_power_Pt) + offset

    def with_axis_value(self, axis: str, value: float) -> "ExperimentConfig":
        """Copy of this config with one sweep-axis parameter replaced."""
        if axis == "tx_power_dB":
            elec = dataclasses.replace(self.electronics,
                                       tx_power_Pt=self.tx_power_from_db(value))
            return dataclasses.replace(self, electronics=elec)
        if axis == "window_L":
            return dataclasses.replace(
                self, glrt=dataclasses.replace(self.glrt, window_L=int(value)))
        if axis == "na":
            return dataclasses.replace(
                self, array=dataclasses.replace(self.array, na=int(value)))
        if axis == "aoa_jitter_mrad":
            arr = dataclasses.replace(self.array,
                                      aoa_jitter_sigma_x=value * 1e-3,
                                      aoa_jitter_sigma_y=value * 1e-3)
            return dataclasses.replace(self, array=arr)
        raise ConfigError(f"[sweep] axis: unknown axis {axis!r}")


# ---------------------------------------------------------------------------
# config file handling
# ---------------------------------------------------------------------------

_SECTIONS = {
    "link": ("altitude_diff", "zenith_angle_xi", "wavelength",
             "rx_aperture_radius", "tx_beam_waist_w0", "divergence_theta_div",
             "scatter_coeff_zeta", "pointing_jitter_sigma_theta_e"),
    "array": ("na", "active_width_wa", "dead_space_wf", "focal_length_fc",
              "spot_sigma_I", "aoa_jitter_sigma_x", "aoa_jitter_sigma_y"),
    "electronics": ("gain_G", "quantum_eta", "excess_noise_F", "bandwidth_B",
                    "load_Rl", "temperature_Tr", "optical_filter_Bo",
                    "spectral_radiance_Nb", "background_override_Pb",
                    "wavelength", "tx_power_Pt"),
    "turbulence": ("enabled", "wind_speed_V", "cn2_ground"),
    "glrt": ("window_L", "mode", "exhaustive_cap", "ranking"),
    "sim": ("schemes", "n_frames", "seed", "workers", "tx_power_ref"),
    "sweep": ("axis", "values"),
}

_INT_KEYS = {"na", "window_L", "exhaustive_cap", "n_frames", "seed", "workers"}
_STR_KEYS = {"mode", "ranking", "tx_power_ref", "axis"}
_BOOL_KEYS = {"enabled"}


def _coerce(section: str, key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _BOOL_KEYS:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError("not a boolean")
        if key in _STR_KEYS:
            return raw
        if key == "schemes":
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        if key == "values":
            return tuple(float(p) for p in raw.split(",") if p.strip())
        if key == "background_override_Pb" and raw.lower() in ("auto", "none"):
            return None
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})")


def parse_config_text(text: str) -> dict[str, dict]:
    """Parse config-file text into {section: {key: value}} with coercion."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}")
    out: dict[str, dict] = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"[{section}]: unknown section")
        out[section] = {}
        for key, raw in cp.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"[{section}] {key}: unknown key")
            out[section][key] = _coerce(section, key, raw)
    return out


def _build_dataclass(cls, section: str, base, values: dict):
    try:
        return dataclasses.replace(base, **values) if values else base
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}")


def config_from_sections(sections: dict[str, dict]) -> ExperimentConfig:
    base = ExperimentConfig()
    link_vals = dict(sections.get("link", {}))
    if "tx_beam_waist_w0" in link_vals and "divergence_theta_div" not in link_vals:
        link_vals.setdefault("divergence_theta_div", None)
    if "divergence_theta_div" in link_vals and "tx_beam_waist_w0" not in link_vals:
        link_vals.setdefault("tx_beam_waist_w0", None)
    link = _build_dataclass(LinkGeometry, "link", base.link, link_vals)
    array = _build_dataclass(ArrayGeometry, "array", base.array,
                             sections.get("array", {}))
    elec_vals = dict(sections.get("electronics", {}))
    elec_vals.setdefault("wavelength", link.wavelength)
    elec = _build_dataclass(ApdElectronics, "electronics", base.electronics,
                            elec_vals)
    glrt_cfg = _build_dataclass(GlrtConfig, "glrt", base.glrt,
                                sections.get("glrt", {}))
    turb = sections.get("turbulence", {})
    sim = sections.get("sim", {})
    sweep = sections.get("sweep", {})
    try:
        return ExperimentConfig(
            link=link, array=array, electronics=elec, glrt=glrt_cfg,
            turbulence_enabled=turb.get("enabled", base.turbulence_enabled),
            wind_speed_V=turb.get("wind_speed_V", base.wind_speed_V),
            cn2_ground=turb.get("cn2_ground", base.cn2_ground),
            schemes=tuple(sim.get("schemes", base.schemes)),
            n_frames=sim.get("n_frames", base.n_frames),
            seed=sim.get("seed", base.seed),
            workers=sim.get("workers", base.workers),
            tx_power_ref=sim.get("tx_power_ref", base.tx_power_ref),
            sweep_axis=sweep.get("axis", None),
            sweep_values=tuple(sweep.get("values", ())),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_sections(parse_config_text(fh.read()))


def _fmt(x) -> str:
    return repr(float(x))


def config_to_text(cfg: ExperimentConfig) -> str:
    """Effective configuration as config-file text (round-trips through
    :func:`parse_config_text`)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    link = cfg.link
    cp["link"] = {
        "altitude_diff": _fmt(link.altitude_diff),
        "zenith_angle_xi": _fmt(link.zenith_angle_xi),
        "wavelength": _fmt(link.wavelength),
        "rx_aperture_radius": _fmt(link.rx_aperture_radius),
        "scatter_coeff_zeta": _fmt(link.scatter_coeff_zeta),
        "pointing_jitter_sigma_theta_e": _fmt(link.pointing_jitter_sigma_theta_e),
    }
    if link.tx_beam_waist_w0 is not None:
        cp["link"]["tx_beam_waist_w0"] = _fmt(link.tx_beam_waist_w0)
    else:
        cp["link"]["divergence_theta_div"] = _fmt(link.divergence_theta_div)
    arr = cfg.array
    cp["array"] = {k: (str(arr.na) if k == "na" else _fmt(getattr(arr, k)))
                   for k in _SECTIONS["array"]}
    elec = cfg.electronics
    cp["electronics"] = {
        k: ("auto" if getattr(elec, k) is None else _fmt(getattr(elec, k)))
        for k in _SECTIONS["electronics"]}
    cp["turbulence"] = {"enabled": str(cfg.turbulence_enabled).lower(),
                        "wind_speed_V": _fmt(cfg.wind_speed_V),
                        "cn2_ground": _fmt(cfg.cn2_ground)}
    g = cfg.glrt
    cp["glrt"] = {"window_L": str(g.window_L), "mode": g.mode,
                  "exhaustive_cap": str(g.exhaustive_cap), "ranking": g.ranking}
    cp["sim"] = {"schemes": ", ".join(cfg.schemes),
                 "n_frames": str(cfg.n_frames), "seed": str(cfg.seed),
                 "workers": str(cfg.workers), "tx_power_ref": cfg.tx_power_ref}
    if cfg.sweep_axis is not None:
        cp["sweep"] = {"axis": cfg.sweep_axis,
                       "values": ", ".join(_fmt(v) for v in cfg.sweep_values)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Nested plain-dict echo of the effective config (for results.json)."""
    sections = parse_config_text(config_to_text(cfg))
    return sections
