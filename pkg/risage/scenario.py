"""
Scenario model: node geometry, link budget, LOS probability, elevation-dependent
Rician K-factor and Doppler-driven temporal correlation.

Scenario documents are INI files with the sections [geometry], [radio],
[aging], [env], [ris], [bs] and [model]. Extra coefficient sets can be
declared in [pathloss:<name>] and [losprob:<name>] sections.
"""

import configparser
import hashlib
import io
import json
import logging
import math
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from risage import specfun
from risage.errors import ConfigError, InvalidArgumentError

logger = logging.getLogger(__name__)

# rounded; Doppler values in the shipped scenarios were tabulated with it
SPEED_OF_LIGHT = 3.0e8


class LinkClass(str, Enum):
    G2A = "g2a"
    A2G = "a2g"
    RIS_GROUND = "ris-ground"


# ---------------------------------------------------------------- models

class Point3(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    x: float
    y: float
    z: float

    @model_validator(mode="before")
    @classmethod
    def _from_triple(cls, value: Any):
        # "x, y, z" in INI documents, (x, y, z) in overrides
        if isinstance(value, str):
            value = [part.strip() for part in value.replace(";", ",").split(",") if part.strip()]
        if isinstance(value, (list, tuple)):
            if len(value) != 3:
                raise ValueError("a point needs exactly three coordinates")
            return {"x": value[0], "y": value[1], "z": value[2]}
        return value

    @model_validator(mode="after")
    def _finite(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError("coordinates must be finite")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def __str__(self) -> str:
        return f"{self.x!r}, {self.y!r}, {self.z!r}"


class GeometryConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    bs: Point3 = Point3(x=0.0, y=0.0, z=10.0)
    ris: Point3 = Point3(x=150.0, y=0.0, z=25.0)
    uav: Point3 = Point3(x=100.0, y=0.0, z=300.0)
    gue: Point3 = Point3(x=200.0, y=0.0, z=1.5)


class RadioConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    carrier_freq_hz: float = Field(default=2.0e9, gt=0)
    bandwidth_hz: float = Field(default=1.0e7, gt=0)
    noise_density_dbm_hz: float = -174.0
    noise_figure_db: float = Field(default=5.0, ge=0)
    tx_power_bs_dbm: float = 0.0
    tx_power_uav_dbm: float = 0.0
    # None means one sample per symbol, T_s = 1/B
    sampling_period_s: Optional[float] = Field(default=None, gt=0)

    @property
    def sampling_period(self) -> float:
        return self.sampling_period_s if self.sampling_period_s is not None else 1.0 / self.bandwidth_hz


class AgingConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    uav_speed_mps: float = Field(default=0.0, ge=0)
    sample_index: int = Field(default=10000, ge=0)
    estimate_index: int = Field(default=0, ge=0)
    correlation_su: Optional[float] = Field(default=None, ge=-1, le=1)
    correlation_ur: Optional[float] = Field(default=None, ge=-1, le=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.sample_index < self.estimate_index:
            raise ValueError("sample_index must not precede estimate_index")
        return self

    @property
    def lag(self) -> int:
        return self.sample_index - self.estimate_index


class PathlossCoefficients(BaseModel):
    """PL_dB = A + (B + B_h log10 h_UT) log10 d_3D + C log10(f_c / 1 GHz)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float
    b: float
    c: float = 0.0
    b_h: float = 0.0
    floor: Optional[str] = None
    source: str = ""


class LosProbabilityCoefficients(BaseModel):
    """P = 1 for d_2D <= d1, else d1/d + exp(-d/p1)(1 - d1/d); d1 and p1 may grow with log10 h"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    d1_a: float = 0.0
    d1_b: float
    d1_min: float = 0.0
    p1_a: float = 0.0
    p1_b: float
    source: str = ""


SHIPPED_PATHLOSS = {
    "umi-los": PathlossCoefficients(a=32.4, b=21.0, c=20.0, source="TR 38.901 UMi street canyon LOS"),
    "umi-nlos": PathlossCoefficients(
        a=22.4, b=35.3, c=21.3, floor="umi-los", source="TR 38.901 UMi street canyon NLOS"
    ),
    "umi-av-los": PathlossCoefficients(a=30.9, b=22.25, b_h=-0.5, c=20.0, source="TR 36.777 UMi-AV LOS"),
    "umi-av-nlos": PathlossCoefficients(
        a=32.4, b=43.2, b_h=-7.6, c=20.0, floor="umi-av-los", source="TR 36.777 UMi-AV NLOS"
    ),
    "free-space": PathlossCoefficients(a=32.45, b=20.0, c=20.0, source="Friis"),
}

SHIPPED_LOS_PROBABILITY = {
    "umi": LosProbabilityCoefficients(d1_b=18.0, p1_b=36.0, source="TR 38.901 UMi street canyon"),
    "umi-av": LosProbabilityCoefficients(
        d1_a=294.05, d1_b=-432.94, d1_min=18.0, p1_a=233.98, p1_b=-0.95, source="TR 36.777 UMi-AV"
    ),
}


class EnvCoefficients(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    k0_db: float = 0.0
    kpi_db: float = 10.0

    los_model_g2a: str = "umi-av"
    los_model_a2g: str = "umi-av"
    los_model_rd: str = "umi"
    # pinned LOS probabilities win over the models above
    p_los_g2a: Optional[float] = Field(default=None, ge=0, le=1)
    p_los_a2g: Optional[float] = Field(default=None, ge=0, le=1)
    p_los_rd: Optional[float] = Field(default=None, ge=0, le=1)

    pathloss_g2a_los: str = "umi-av-los"
    pathloss_g2a_nlos: str = "umi-av-nlos"
    pathloss_a2g_los: str = "umi-av-los"
    pathloss_a2g_nlos: str = "umi-av-nlos"
    pathloss_rd_los: str = "umi-los"
    pathloss_rd_nlos: str = "umi-nlos"

    pathloss_sets: Dict[str, PathlossCoefficients] = Field(default_factory=lambda: dict(SHIPPED_PATHLOSS))
    los_sets: Dict[str, LosProbabilityCoefficients] = Field(
        default_factory=lambda: dict(SHIPPED_LOS_PROBABILITY)
    )

    @model_validator(mode="after")
    def _monotone_k(self):
        if self.kpi_db < self.k0_db:
            raise ValueError("kpi_db must be >= k0_db")
        for name, coeffs in self.pathloss_sets.items():
            if coeffs.floor is not None and coeffs.floor not in self.pathloss_sets:
                raise ValueError(f"path-loss set '{name}' is floored by unknown set '{coeffs.floor}'")
        return self

    def los_model_for(self, link_class: LinkClass) -> Tuple[Optional[float], str]:
        key = _CLASS_KEY[link_class]
        return getattr(self, f"p_los_{key}"), getattr(self, f"los_model_{key}")

    def pathloss_model_for(self, link_class: LinkClass, los: bool) -> str:
        return getattr(self, f"pathloss_{_CLASS_KEY[link_class]}_{'los' if los else 'nlos'}")


_CLASS_KEY = {LinkClass.G2A: "g2a", LinkClass.A2G: "a2g", LinkClass.RIS_GROUND: "rd"}


class RisConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    elements: int = Field(default=16, ge=1)
    # the RIS is placed with a view of the GUE
    rd_los: bool = True


class BsConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    antennas: int = Field(default=4, ge=1)


class ModelConfig(BaseModel):
    """Analytical switches"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha_prefactor: str = Field(default="quarter_pi", pattern="^(quarter_pi|half_pi)$")
    a2g_nlos_alpha: str = Field(default="rayleigh", pattern="^(unit|rayleigh)$")
    moment_source: str = Field(default="delta", pattern="^(delta|jensen|monte_carlo)$")
    # coherent: large-N spread includes the rho^2 beta term of the co-phased sum
    a2g_spread: str = Field(default="coherent", pattern="^(coherent|innovation)$")
    # None sizes the A2G series from its Poisson mean
    series_max_terms: Optional[int] = Field(default=None, ge=1)
    series_tail_tol: float = Field(default=1e-10, gt=0)
    g2a_threshold_mode: str = Field(default="inverse", pattern="^(inverse|printed)$")
    a2g_threshold_mode: str = Field(default="gaussian", pattern="^(gaussian|marcum)$")
    outage_level: float = Field(default=1e-4, gt=0, lt=1)


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    geometry: GeometryConfig = GeometryConfig()
    radio: RadioConfig = RadioConfig()
    aging: AgingConfig = AgingConfig()
    env: EnvCoefficients = EnvCoefficients()
    ris: RisConfig = RisConfig()
    bs: BsConfig = BsConfig()
    model: ModelConfig = ModelConfig()


class LinkState(BaseModel):
    model_config = ConfigDict(frozen=True)

    link: str
    link_class: LinkClass
    distance_3d_m: float
    elevation_rad: float
    pathloss_los_linear: float = Field(gt=0, le=1)
    pathloss_nlos_linear: float = Field(gt=0, le=1)
    p_los: float = Field(ge=0, le=1)
    k_factor_linear: float = Field(ge=0)
    correlation: float = Field(ge=-1, le=1)
    mean_snr_los_linear: float = Field(gt=0)
    mean_snr_nlos_linear: float = Field(gt=0)

    @property
    def p_nlos(self) -> float:
        return 1.0 - self.p_los


class ResolvedScenario(BaseModel):
    """Scenario with every derived link quantity evaluated"""

    model_config = ConfigDict(frozen=True)

    config: ScenarioConfig
    noise_uav_dbm: float
    noise_gue_dbm: float
    su: LinkState
    ur: LinkState
    rd: LinkState
    g2a_mean_snr_los: float
    g2a_mean_snr_nlos: float
    a2g_mean_snr_los: float
    a2g_mean_snr_nlos: float

    @property
    def antennas(self) -> int:
        return self.config.bs.antennas

    @property
    def elements(self) -> int:
        return self.config.ris.elements

    @property
    def rd_pathloss(self) -> float:
        return self.rd.pathloss_los_linear if self.config.ris.rd_los else self.rd.pathloss_nlos_linear

    @property
    def k_factor_rd(self) -> float:
        return self.rd.k_factor_linear if self.config.ris.rd_los else 0.0


# ---------------------------------------------------------------- link budget

def noise_power(bandwidth_hz: float, noise_density_dbm_hz: float, noise_figure_db: float) -> float:
    """Receiver noise power N_0 + 10 log10 B + F in dBm"""
    if not bandwidth_hz > 0:
        raise InvalidArgumentError("bandwidth must be positive")
    return noise_density_dbm_hz + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def elevation_angle(a: Point3, b: Point3) -> float:
    """Elevation of b seen from a, in [-pi/2, pi/2]"""
    dx, dy, dz = b.x - a.x, b.y - a.y, b.z - a.z
    horizontal = math.hypot(dx, dy)
    if horizontal == 0.0 and dz == 0.0:
        raise InvalidArgumentError("elevation of coincident points is undefined")
    return math.atan2(dz, horizontal)


def rician_k(theta_rad: float, k0_db: float, kpi_db: float, los: bool = True) -> float:
    """
    Elevation-dependent Rician factor K_0 exp((2 theta / pi) ln(K_pi / K_0)), linear.

    los=False returns 0 (Rayleigh scatter only).
    """
    if not 0.0 <= theta_rad <= math.pi / 2:
        raise InvalidArgumentError(f"elevation {theta_rad} outside [0, pi/2]")
    if not los:
        return 0.0
    k0 = 10.0 ** (k0_db / 10.0)
    kpi = 10.0 ** (kpi_db / 10.0)
    return k0 * math.exp((2.0 * theta_rad / math.pi) * math.log(kpi / k0))


def temporal_correlation(v_mps: float, fc_hz: float, elapsed_samples: int, Ts_s: float) -> float:
    """Jakes correlation J_0(2 pi f_d n T_s) with Doppler f_d = v f_c / c"""
    if v_mps < 0:
        raise InvalidArgumentError("speed must be nonnegative")
    if elapsed_samples < 0:
        raise InvalidArgumentError("elapsed_samples must be nonnegative")
    doppler = v_mps * fc_hz / SPEED_OF_LIGHT
    return specfun.bessel_j0(2.0 * math.pi * doppler * elapsed_samples * Ts_s)


def _distances(a: Point3, b: Point3) -> Tuple[float, float]:
    d2 = math.hypot(b.x - a.x, b.y - a.y)
    return d2, math.hypot(d2, b.z - a.z)


def los_probability(link_class: LinkClass, a: Point3, b: Point3, env: EnvCoefficients) -> float:
    """LOS probability of the a-b link from the configured model (or pinned value)"""
    link_class = LinkClass(link_class)
    pinned, model = env.los_model_for(link_class)
    if pinned is not None:
        return float(pinned)
    if model not in env.los_sets:
        raise ConfigError(f"no LOS-probability coefficients named '{model}'", field=f"env.los_model_{_CLASS_KEY[link_class]}")
    coeffs = env.los_sets[model]

    d2, _ = _distances(a, b)
    height = max(a.z, b.z)
    log_h = math.log10(height) if height > 0 else 0.0
    d1 = max(coeffs.d1_a * log_h + coeffs.d1_b, coeffs.d1_min)
    p1 = coeffs.p1_a * log_h + coeffs.p1_b
    if d2 <= d1:
        return 1.0
    if p1 <= 0:
        raise ConfigError(f"LOS model '{model}' gives a nonpositive decay length at height {height} m")
    p = d1 / d2 + math.exp(-d2 / p1) * (1.0 - d1 / d2)
    return min(max(p, 0.0), 1.0)


def _pathloss_db(name: str, d3: float, height: float, fc_hz: float, env: EnvCoefficients, seen=()) -> float:
    if name not in env.pathloss_sets:
        raise ConfigError(f"no path-loss coefficients named '{name}'")
    if name in seen:
        raise ConfigError(f"path-loss floor chain loops through '{name}'")
    coeffs = env.pathloss_sets[name]
    slope = coeffs.b
    if coeffs.b_h != 0.0:
        if height <= 0:
            raise InvalidArgumentError("height-dependent path loss needs a positive terminal height")
        slope += coeffs.b_h * math.log10(height)
    pl = coeffs.a + slope * math.log10(d3) + coeffs.c * math.log10(fc_hz / 1e9)
    if coeffs.floor is not None:
        pl = max(pl, _pathloss_db(coeffs.floor, d3, height, fc_hz, env, seen + (name,)))
    return pl


def path_loss(
    link_class: LinkClass, los: bool, a: Point3, b: Point3, radio: RadioConfig, env: EnvCoefficients
) -> float:
    """Linear path-loss gain in (0, 1] of the a-b link for the given LOS state"""
    link_class = LinkClass(link_class)
    _, d3 = _distances(a, b)
    if d3 <= 0:
        raise InvalidArgumentError("path loss needs a positive distance")
    name = env.pathloss_model_for(link_class, los)
    pl_db = _pathloss_db(name, d3, max(a.z, b.z), radio.carrier_freq_hz, env)
    # gains above unity only occur for distances below a metre
    return min(10.0 ** (-pl_db / 10.0), 1.0)


def mean_snr(tx_power_dbm: float, pathloss_linear: float, noise_dbm: float) -> float:
    """Average received SNR 10^((P - sigma^2)/10) * l, linear"""
    if not 0.0 < pathloss_linear <= 1.0:
        raise InvalidArgumentError("path-loss gain must lie in (0, 1]")
    return 10.0 ** ((tx_power_dbm - noise_dbm) / 10.0) * pathloss_linear


# ---------------------------------------------------------------- resolution

def _link_state(
    name: str,
    link_class: LinkClass,
    low: Point3,
    high: Point3,
    cfg: ScenarioConfig,
    correlation: float,
    tx_power_dbm: float,
    noise_dbm: float,
) -> LinkState:
    theta = elevation_angle(low, high)
    # the K-factor law is only defined for elevations in [0, pi/2]
    theta_k = min(max(theta, 0.0), math.pi / 2)
    pl_los = path_loss(link_class, True, low, high, cfg.radio, cfg.env)
    pl_nlos = path_loss(link_class, False, low, high, cfg.radio, cfg.env)
    return LinkState(
        link=name,
        link_class=link_class,
        distance_3d_m=_distances(low, high)[1],
        elevation_rad=theta,
        pathloss_los_linear=pl_los,
        pathloss_nlos_linear=pl_nlos,
        p_los=los_probability(link_class, low, high, cfg.env),
        k_factor_linear=rician_k(theta_k, cfg.env.k0_db, cfg.env.kpi_db),
        correlation=correlation,
        mean_snr_los_linear=mean_snr(tx_power_dbm, pl_los, noise_dbm),
        mean_snr_nlos_linear=mean_snr(tx_power_dbm, pl_nlos, noise_dbm),
    )


def resolve_scenario(cfg: ScenarioConfig) -> ResolvedScenario:
    """Evaluate the LinkStates of the BS-UAV, UAV-RIS and RIS-GUE links"""
    geo, radio, aging = cfg.geometry, cfg.radio, cfg.aging
    noise = noise_power(radio.bandwidth_hz, radio.noise_density_dbm_hz, radio.noise_figure_db)

    aged = temporal_correlation(aging.uav_speed_mps, radio.carrier_freq_hz, aging.lag, radio.sampling_period)
    rho_su = aging.correlation_su if aging.correlation_su is not None else aged
    rho_ur = aging.correlation_ur if aging.correlation_ur is not None else aged

    # elevation is measured from the lower node toward the upper one
    su = _link_state("su", LinkClass.G2A, geo.bs, geo.uav, cfg, rho_su, radio.tx_power_bs_dbm, noise)
    ur = _link_state("ur", LinkClass.A2G, geo.ris, geo.uav, cfg, rho_ur, radio.tx_power_uav_dbm, noise)
    # RIS and GUE are static, so the R-D link does not age
    rd = _link_state("rd", LinkClass.RIS_GROUND, geo.gue, geo.ris, cfg, 1.0, radio.tx_power_uav_dbm, noise)

    rd_gain = rd.pathloss_los_linear if cfg.ris.rd_los else rd.pathloss_nlos_linear
    resolved = ResolvedScenario(
        config=cfg,
        noise_uav_dbm=noise,
        noise_gue_dbm=noise,
        su=su,
        ur=ur,
        rd=rd,
        g2a_mean_snr_los=su.mean_snr_los_linear,
        g2a_mean_snr_nlos=su.mean_snr_nlos_linear,
        a2g_mean_snr_los=mean_snr(radio.tx_power_uav_dbm, ur.pathloss_los_linear * rd_gain, noise),
        a2g_mean_snr_nlos=mean_snr(radio.tx_power_uav_dbm, ur.pathloss_nlos_linear * rd_gain, noise),
    )
    logger.debug(
        f"Resolved scenario: rho_su={rho_su:.6g} rho_ur={rho_ur:.6g} "
        f"kappa=({su.k_factor_linear:.4g}, {ur.k_factor_linear:.4g}, {resolved.k_factor_rd:.4g})"
    )
    return resolved


# ---------------------------------------------------------------- documents

_SECTIONS = ("geometry", "radio", "aging", "env", "ris", "bs", "model")
_PATHLOSS_PREFIX = "pathloss:"
_LOSPROB_PREFIX = "losprob:"


def _locate(text: str, section: str, key: Optional[str]) -> Optional[int]:
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return number
            continue
        if current == section and key is not None:
            name = line.split("=", 1)[0].split(":", 1)[0].strip()
            if name == key:
                return number
    return None


def _config_error_from_validation(e: ValidationError, text: str = "") -> ConfigError:
    first = e.errors()[0]
    loc = [str(part) for part in first["loc"]]
    field = ".".join(loc)
    line = None
    if text and loc:
        if loc[0] == "env" and len(loc) > 2 and loc[1] in ("pathloss_sets", "los_sets"):
            prefix = _PATHLOSS_PREFIX if loc[1] == "pathloss_sets" else _LOSPROB_PREFIX
            section = f"{prefix}{loc[2]}"
            line = _locate(text, section, loc[3] if len(loc) > 3 else None)
            field = f"{section}.{loc[3]}" if len(loc) > 3 else section
        else:
            line = _locate(text, loc[0], loc[1] if len(loc) > 1 else None)
    return ConfigError(f"invalid scenario value: {first['msg']}", field=field, line=line)


def _parse_document(config_text: str) -> Dict[str, Any]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(config_text)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("scenario document must start with a [section] header", line=e.lineno) from e
    except configparser.DuplicateOptionError as e:
        raise ConfigError("duplicate key", field=f"{e.section}.{e.option}", line=e.lineno) from e
    except configparser.DuplicateSectionError as e:
        raise ConfigError("duplicate section", field=e.section, line=e.lineno) from e
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ConfigError("malformed line in scenario document", line=line) from e
    except configparser.Error as e:
        raise ConfigError(f"unreadable scenario document: {e}") from e

    data: Dict[str, Any] = {}
    pathloss_sets: Dict[str, Any] = {}
    los_sets: Dict[str, Any] = {}
    for section in parser.sections():
        values = {key: value for key, value in parser.items(section) if value.strip() != ""}
        if section.startswith(_PATHLOSS_PREFIX):
            pathloss_sets[section[len(_PATHLOSS_PREFIX):].strip()] = values
        elif section.startswith(_LOSPROB_PREFIX):
            los_sets[section[len(_LOSPROB_PREFIX):].strip()] = values
        elif section in _SECTIONS:
            data[section] = values
        else:
            raise ConfigError(f"unknown section [{section}]", field=section, line=_locate(config_text, section, None))

    if pathloss_sets or los_sets:
        env = data.setdefault("env", {})
        env["pathloss_sets"] = {**SHIPPED_PATHLOSS, **pathloss_sets}
        env["los_sets"] = {**SHIPPED_LOS_PROBABILITY, **los_sets}
    return data


def load_scenario(config_text: str) -> ScenarioConfig:
    """
    Parse a scenario document. Missing keys take the default scenario values;
    the document is resolved once so geometry errors surface here.
    """
    data = _parse_document(config_text)
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise _config_error_from_validation(e, config_text) from e
    try:
        resolve_scenario(cfg)
    except InvalidArgumentError as e:
        raise ConfigError(f"scenario cannot be resolved: {e}") from e
    return cfg


def load_scenario_file(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    cfg = load_scenario(text)
    logger.info(f"✅ Loaded scenario {path} ({config_hash(cfg)[:16]})")
    return cfg


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict) and set(value) == {"x", "y", "z"}:
        return f"{value['x']!r}, {value['y']!r}, {value['z']!r}"
    return str(value)


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Serialize to an INI document that load_scenario reads back to an equal config"""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    dumped = cfg.model_dump()
    for section in _SECTIONS:
        parser.add_section(section)
        for key, value in dumped[section].items():
            if key in ("pathloss_sets", "los_sets") or value is None:
                continue
            parser.set(section, key, _format_value(value))

    # only sets that differ from the shipped ones are written out; the
    # loader merges them over the shipped sets again
    for prefix, sets, shipped in (
        (_PATHLOSS_PREFIX, cfg.env.pathloss_sets, SHIPPED_PATHLOSS),
        (_LOSPROB_PREFIX, cfg.env.los_sets, SHIPPED_LOS_PROBABILITY),
    ):
        for name, coeffs in sets.items():
            if shipped.get(name) == coeffs:
                continue
            section = f"{prefix}{name}"
            parser.add_section(section)
            for key, value in coeffs.model_dump().items():
                if value is not None and value != "":
                    parser.set(section, key, _format_value(value))

    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def config_hash(cfg: ScenarioConfig) -> str:
    """SHA-256 over the canonical JSON form of the config"""
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def with_overrides(cfg: ScenarioConfig, changes: Mapping[str, Any]) -> ScenarioConfig:
    """
    Copy of cfg with dotted keys replaced, e.g.
    {"aging.uav_speed_mps": 20.0, "ris.elements": 400}.
    """
    data = cfg.model_dump()
    for dotted, value in changes.items():
        parts = dotted.split(".")
        node = data
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError("unknown scenario key", field=dotted)
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError("unknown scenario key", field=dotted)
        node[parts[-1]] = value
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise _config_error_from_validation(e) from e
