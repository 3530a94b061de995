"""Run configuration: an INI file with five fixed sections, every key
typed, defaulted, and validated.  Unknown sections or keys are rejected
with the line number of the offense, and a parsed configuration can be
echoed back as a canonical INI that parses to the same values."""

import configparser
import re

from .modes import FiberConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text"]


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


def _fl(lo=None, hi=None, lo_open=False):
    def parse(s):
        v = float(s)
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ValueError("must be %s %g" % (">" if lo_open else ">=", lo))
        if hi is not None and v > hi:
            raise ValueError("must be <= %g" % hi)
        return v
    return parse


def _int(lo=None):
    def parse(s):
        v = int(s)
        if lo is not None and v < lo:
            raise ValueError("must be >= %d" % lo)
        return v
    return parse


_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _bool(s):
    try:
        return _BOOL[s.strip().lower()]
    except KeyError:
        raise ValueError("expected a boolean (true/false)")


def _choice(*options):
    def parse(s):
        v = s.strip().lower()
        if v not in options:
            raise ValueError("expected one of %s" % ", ".join(options))
        return v
    return parse


def _optional(word, inner):
    def parse(s):
        v = s.strip().lower()
        if v == word:
            return None
        return inner(s)
    return parse


def _float_list(s):
    s = s.strip()
    if not s:
        return ()
    return tuple(float(tok) for tok in re.split(r"[,\s]+", s) if tok)


# every key the parser accepts, with its default (as canonical text) and parser
SCHEMA = {
    "fiber": {
        "r_core": ("12.7", _fl(0, lo_open=True)),
        "r_clad": ("127.0", _fl(0, lo_open=True)),
        "n_core": ("1.4512", _fl(1.0, lo_open=True)),
        "n_clad": ("1.45", _fl(1.0, lo_open=True)),
        "wavelength_nm": ("1064.0", _fl(0, lo_open=True)),
    },
    "discretization": {
        "p": ("3", _int(1)),
        "dp": ("1", _int(1)),
        "n_layers": ("8", _int(1)),
        "refinement": ("0", _int(0)),
        "alpha": ("none", _optional("none", _fl(0, lo_open=True))),
        "length_um": ("40.0", _fl(0, lo_open=True)),
        "k_env": ("auto", _optional("auto", _fl(0))),
    },
    "boundary": {
        "outlet": ("impedance",
                   _choice("impedance", "pec", "stretch", "carrier-drop")),
        "absorber_fraction": ("0.25", _fl(0, hi=0.95, lo_open=True)),
        "stretch_order": ("3", _int(2)),
        "floor_amplitude": ("0.001", _fl(0, hi=0.999999, lo_open=True)),
        "inlet": ("lp01", _choice("lp01", "dark")),
        "inlet_power_w": ("0.001", _fl(0, lo_open=True)),
    },
    "amplifier": {
        "enabled": ("false", _bool),
        "dopant_density_per_um3": ("6.0e7", _fl(0)),
        "doped_radius_um": ("auto", _optional("auto", _fl(0, lo_open=True))),
        "pump_power_w": ("0.05", _fl(0, lo_open=True)),
        "pump_wavelength_nm": ("976.0", _fl(0, lo_open=True)),
        "tol": ("0.001", _fl(0, lo_open=True)),
        "max_iter": ("25", _int(1)),
        "relax": ("0.5", _fl(0, hi=1.0, lo_open=True)),
        "thermal": ("false", _bool),
        "thermal_steady": ("true", _bool),
        "thermal_dt_s": ("0.0001", _fl(0, lo_open=True)),
        "conductivity_w_per_um_k": ("1.38e-6", _fl(0, lo_open=True)),
        "heat_capacity_j_per_um3_k": ("1.67e-12", _fl(0, lo_open=True)),
        "film_coeff_w_per_um2_k": ("1e-9", _fl(0)),
        "dn_dt_per_k": ("1.2e-5", _fl(0)),
        "pump_sweep_w": ("", _float_list),
    },
    "output": {
        "directory": ("fiberdpg-out", str.strip),
        "stations": ("5", _int(2)),
        "dump_fields": ("true", _bool),
        "grid_nx": ("24", _int(2)),
        "grid_ny": ("24", _int(2)),
        "tmi_samples": ("4", _int(2)),
        "tmi_dt_s": ("0.0001", _fl(0, lo_open=True)),
        "seed": ("0", _int(0)),
    },
}


def _line_of(text, pattern):
    rx = re.compile(pattern)
    for i, line in enumerate(text.splitlines(), start=1):
        if rx.match(line):
            return i
    return None


class RunConfig:
    """Parsed, validated run settings; one attribute dict per section."""

    def __init__(self, sections):
        self.fiber = sections["fiber"]
        self.discretization = sections["discretization"]
        self.boundary = sections["boundary"]
        self.amplifier = sections["amplifier"]
        self.output = sections["output"]

    def section(self, name):
        return getattr(self, name)

    def fiber_config(self):
        return FiberConfig(**self.fiber)

    def effective_text(self):
        """Canonical INI echo of every key, defaults filled in; parsing
        the echo reproduces this configuration exactly."""
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append("[%s]" % sec)
            vals = self.section(sec)
            for key, (default, _) in keys.items():
                lines.append("%s = %s" % (key, _canonical(vals[key], default)))
            lines.append("")
        return "\n".join(lines)


def _canonical(v, default):
    if v is None:
        return default        # the key's own sentinel word (none / auto)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config_text(text, source="<config>"):
    cp = configparser.ConfigParser(interpolation=None,
                                   inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", line=exc.lineno)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line=line)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key %r" % exc.option, line=exc.lineno)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section %r" % exc.section,
                          line=exc.lineno)
    except configparser.Error as exc:
        raise ConfigError(str(exc))

    sections = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError("unknown section [%s]" % sec,
                              line=_line_of(text, r"\s*\[%s\]" % re.escape(sec)))
    for sec, keys in SCHEMA.items():
        out = {}
        raw = dict(cp[sec]) if cp.has_section(sec) else {}
        for key in raw:
            if key not in keys:
                raise ConfigError(
                    "unknown key %r in [%s]" % (key, sec),
                    line=_line_of(text, r"\s*%s\s*[=:]" % re.escape(key)))
        for key, (default, parse) in keys.items():
            src = raw.get(key, default)
            try:
                out[key] = parse(src)
            except ValueError as exc:
                raise ConfigError(
                    "bad value for %s.%s = %r: %s" % (sec, key, src, exc),
                    line=_line_of(text, r"\s*%s\s*[=:]" % re.escape(key)))
        sections[sec] = out

    fib = sections["fiber"]
    if fib["r_clad"] <= fib["r_core"]:
        raise ConfigError("fiber.r_clad must exceed r_core")
    if fib["n_core"] <= fib["n_clad"]:
        raise ConfigError("fiber.n_core must exceed n_clad")
    if not sections["output"]["directory"]:
        raise ConfigError("output.directory must not be empty")
    return RunConfig(sections)


def parse_config(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc))
    return parse_config_text(text, source=str(path))
