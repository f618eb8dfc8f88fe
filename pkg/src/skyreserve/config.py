"""INI-style run configuration.

Values are written in aviation units (kt, nm, ft, kW) and converted to SI on
load. Unknown keys are rejected so typos fail loudly with a line number.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields

from .deconflict import DetectionParams
from .powerplant import DEFAULT_COMPONENTS, AircraftConfig, DragComponent
from .predictor import NetConfig, TrainConfig
from .simkit import ScenarioConfig
from .units import FT, KT, NM, RPM

DEFAULT_DENSITIES = tuple(range(10, 61, 5))


class ConfigError(ValueError):
    def __init__(self, path, line, section, key, message):
        self.path, self.line, self.section, self.key = path, line, section, key
        where = f"{path}:{line}" if line else str(path)
        field_name = f"[{section}]" + (f" {key}" if key else "")
        super().__init__(f"{where}: {field_name}: {message}")


@dataclass
class RunConfig:
    aircraft: AircraftConfig = field(default_factory=AircraftConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    densities: tuple = DEFAULT_DENSITIES
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


# (ini key, dataclass field, scale to SI, type)
_AIRCRAFT_KEYS = (
    ("n_rotors", "n_rotors", None, int),
    ("rotor_radius_m", "rotor_radius", 1.0, float),
    ("n_blades", "n_blades", None, int),
    ("blade_chord_m", "blade_chord", 1.0, float),
    ("cruise_rpm", "cruise_rpm", RPM, float),
    ("wing_area_m2", "wing_area", 1.0, float),
    ("aspect_ratio", "aspect_ratio", 1.0, float),
    ("oswald", "oswald", 1.0, float),
    ("mtom_kg", "mtom", 1.0, float),
    ("gravity", "gravity", 1.0, float),
    ("kappa", "kappa", 1.0, float),
    ("k_mu", "k_mu", 1.0, float),
    ("blade_cd0", "blade_cd0", 1.0, float),
    ("k_lift", "k_lift", 1.0, float),
    ("eta_drv", "eta_drv", 1.0, float),
    ("p_hotel_kw", "p_hotel", 1e3, float),
    ("max_shaft_power_kw", "max_shaft_power", 1e3, float),
    ("cruise_altitude_ft", "cruise_altitude", FT, float),
    ("speed_min_kt", "speed_min", KT, float),
    ("speed_max_kt", "speed_max", KT, float),
    ("parasite_calibration_factor", "parasite_calibration_factor", 1.0, float),
)
_DRAG_KEYS = (
    ("wetted_area_m2", "wetted_area", 1.0, float),
    ("form_factor", "form_factor", 1.0, float),
    ("characteristic_length_m", "characteristic_length", 1.0, float),
    ("bluff_body", "bluff_body", None, bool),
    ("bluff_cd", "bluff_cd", 1.0, float),
    ("frontal_area_m2", "frontal_area", 1.0, float),
    ("count", "count", None, int),
)
_SCENARIO_KEYS = (
    ("runs", "runs", None, int),
    ("seed", "seed", None, int),
    ("dt_s", "dt", 1.0, float),
    ("sector_radius_nm", "sector_radius", NM, float),
    ("alpha", "alpha", 1.0, float),
    ("nmac_ft", "nmac_threshold", FT, float),
    ("neighbor_radius_nm", "neighbor_radius", NM, float),
    ("max_resamples", "max_resamples", None, int),
    ("tangent_correction", "tangent_correction", None, bool),
)
_DETECTION_KEYS = (
    ("rpz_nm", "r_pz", NM, float),
    ("tlook_s", "t_look", 1.0, float),
)
_MODEL_KEYS = tuple((f.name, f.name, None, f.type) for f in fields(NetConfig) if f.name != "input_dim")
_TRAIN_KEYS = tuple((f.name, f.name, None, f.type) for f in fields(TrainConfig))


def _key_lines(text: str) -> dict:
    """Map (section, key) and (section, None) to 1-based line numbers."""
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault((section, None), no)
        elif section is not None:
            for sep in ("=", ":"):
                if sep in line:
                    out.setdefault((section, line.split(sep, 1)[0].strip().lower()), no)
                    break
    return out


class _Reader:
    def __init__(self, path, text):
        self.path = path
        self.lines = _key_lines(text)
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            self.cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            line = getattr(exc, "lineno", 0)
            raise ConfigError(path, line, getattr(exc, "section", "?"), None, str(exc).splitlines()[0]) from None

    def error(self, section, key, msg):
        line = self.lines.get((section, key)) or self.lines.get((section, None), 0)
        return ConfigError(self.path, line, section, key, msg)

    def value(self, section, key, typ):
        raw = self.cp.get(section, key)
        try:
            if typ in (bool, "bool"):
                return self.cp.getboolean(section, key)
            if typ in (int, "int"):
                return int(raw)
            if typ in ("int | None",):
                return None if raw.lower() in ("none", "") else int(raw)
            if typ in ("float | None",):
                return None if raw.lower() in ("none", "") else float(raw)
            val = float(raw)
        except ValueError:
            raise self.error(section, key, f"cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None
        if not math.isfinite(val):
            raise self.error(section, key, "value must be finite")
        return val

    def section(self, section, table, extra=()):
        """Collect dataclass kwargs for ``section`` from a key table."""
        if not self.cp.has_section(section):
            return {}
        known = {k for k, *_ in table} | set(extra)
        for key in self.cp.options(section):
            if key not in known:
                raise self.error(section, key, "unknown key")
        out = {}
        for key, attr, scale, typ in table:
            if self.cp.has_option(section, key):
                v = self.value(section, key, typ)
                out[attr] = v * scale if scale not in (None, 1.0) and v is not None else v
        return out

    def build(self, section, key, ctor, **kw):
        try:
            return ctor(**kw)
        except (ValueError, TypeError) as exc:
            raise self.error(section, key, str(exc)) from None


def parse_config(text: str, path="<config>") -> RunConfig:
    rd = _Reader(path, text)
    cp = rd.cp
    known = {"aircraft", "scenario", "detection", "model", "training"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith("drag."):
            raise rd.error(sec, None, "unknown section")

    ac_kw = rd.section("aircraft", _AIRCRAFT_KEYS)
    drag_secs = [s for s in cp.sections() if s.startswith("drag.")]
    if drag_secs:
        comps = []
        for sec in drag_secs:
            kw = rd.section(sec, _DRAG_KEYS)
            comps.append(rd.build(sec, None, DragComponent, name=sec[len("drag."):], **kw))
        ac_kw["drag_components"] = tuple(comps)
    aircraft = rd.build("aircraft", None, AircraftConfig, **ac_kw)

    det = rd.build("detection", None, DetectionParams, **rd.section("detection", _DETECTION_KEYS))

    extra = ("densities", "exit_bearing_min_deg", "exit_bearing_max_deg",
             "radial_scale_min", "radial_scale_max", "max_sim_time_s")
    sc_kw = rd.section("scenario", _SCENARIO_KEYS, extra)
    densities = DEFAULT_DENSITIES
    if cp.has_section("scenario"):
        s = cp["scenario"]
        if "densities" in s:
            try:
                densities = tuple(int(x) for x in s["densities"].replace(",", " ").split())
            except ValueError:
                raise rd.error("scenario", "densities", "expected a list of integers") from None
            if not densities or min(densities) < 2:
                raise rd.error("scenario", "densities", "densities must be integers >= 2")
        defaults = ScenarioConfig()
        blo, bhi = defaults.exit_bearing_range
        if "exit_bearing_min_deg" in s:
            blo = math.radians(rd.value("scenario", "exit_bearing_min_deg", float))
        if "exit_bearing_max_deg" in s:
            bhi = math.radians(rd.value("scenario", "exit_bearing_max_deg", float))
        sc_kw["exit_bearing_range"] = (blo, bhi)
        rlo, rhi = defaults.radial_scale
        if "radial_scale_min" in s:
            rlo = rd.value("scenario", "radial_scale_min", float)
        if "radial_scale_max" in s:
            rhi = rd.value("scenario", "radial_scale_max", float)
        sc_kw["radial_scale"] = (rlo, rhi)
        if "max_sim_time_s" in s:
            sc_kw["max_sim_time"] = rd.value("scenario", "max_sim_time_s", "float | None")
    scenario = rd.build("scenario", None, ScenarioConfig, n_aircraft=densities[0], detection=det, **sc_kw)

    net = rd.build("model", None, NetConfig, **rd.section("model", _MODEL_KEYS))
    train = rd.build("training", None, TrainConfig, **rd.section("training", _TRAIN_KEYS))
    return RunConfig(aircraft, scenario, densities, net, train)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(path, 0, "-", None, f"cannot read: {exc.strerror}") from None
    return parse_config(text, path)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    return repr(v)


def dump_config(cfg: RunConfig) -> str:
    """Render ``cfg`` back to INI text; ``parse_config`` inverts it exactly."""
    lines = ["[aircraft]"]
    for key, attr, scale, _ in _AIRCRAFT_KEYS:
        v = getattr(cfg.aircraft, attr)
        lines.append(f"{key} = {_fmt(v / scale if scale not in (None, 1.0) else v)}")
    for comp in cfg.aircraft.drag_components:
        lines += ["", f"[drag.{comp.name}]"]
        lines += [f"{key} = {_fmt(getattr(comp, attr))}" for key, attr, _, _ in _DRAG_KEYS]
    sc = cfg.scenario
    lines += ["", "[scenario]", "densities = " + ", ".join(str(n) for n in cfg.densities)]
    for key, attr, scale, _ in _SCENARIO_KEYS:
        v = getattr(sc, attr)
        lines.append(f"{key} = {_fmt(v / scale if scale not in (None, 1.0) else v)}")
    lines += [
        f"exit_bearing_min_deg = {_fmt(math.degrees(sc.exit_bearing_range[0]))}",
        f"exit_bearing_max_deg = {_fmt(math.degrees(sc.exit_bearing_range[1]))}",
        f"radial_scale_min = {_fmt(float(sc.radial_scale[0]))}",
        f"radial_scale_max = {_fmt(float(sc.radial_scale[1]))}",
        f"max_sim_time_s = {_fmt(sc.max_sim_time)}",
        "", "[detection]",
        f"rpz_nm = {_fmt(sc.detection.r_pz / NM)}",
        f"tlook_s = {_fmt(sc.detection.t_look)}",
        "", "[model]",
    ]
    lines += [f"{key} = {_fmt(getattr(cfg.net, attr))}" for key, attr, _, _ in _MODEL_KEYS]
    lines += ["", "[training]"]
    lines += [f"{key} = {_fmt(getattr(cfg.train, attr))}" for key, attr, _, _ in _TRAIN_KEYS]
    return "\n".join(lines) + "\n"


def default_config() -> RunConfig:
    """Shipped defaults: 30 runs per density at seed 42."""
    return RunConfig(scenario=ScenarioConfig(runs=30, seed=42))
