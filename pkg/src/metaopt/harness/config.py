"""Scenario configuration: INI file with dotted ``section.key`` names.

Angles may be written with ``pi`` (``-pi/6``); lists are comma separated.
"""
import ast
import configparser
import dataclasses
import io
import math
import operator
from dataclasses import dataclass, field

from ..errors import ParseError, ValidationError

SUITES = ("hrsma", "sdma", "isac", "ris", "bdris")
PI = math.pi


@dataclass
class ScenarioConfig:
    suite: str
    seed: int = 0
    realizations: int = 1
    output: str = "results.csv"
    n_t: int = 16
    k: int = 8
    g: int = 2
    b: int = None
    m: int = 64
    sigma_e2: float = 0.5
    snr_db: list = field(default_factory=lambda: [20.0])
    thresholds: list = None
    group_azimuths: list = None
    angular_spread: float = PI / 36
    array: str = "uca"
    spacing: float = 0.5
    steering: str = "auto"
    quadrature_points: int = 128
    noise_power: float = 1.0
    power_split: list = field(default_factory=lambda: [0.70, 0.25, 0.05])
    targets: list = None
    lambdas: list = None
    t: int = 1500
    lr: float = 1e-3
    lr_phi: float = 1e-4
    hidden: int = 400
    t_warm: int = 1000
    precoder_init: str = "mrt"
    literal_diag_penalty: bool = False
    xi0_db: float = -30.0
    d0: float = 1.0
    d_br: float = 50.0
    d_ru: float = 2.5
    eps_br: float = 2.0
    eps_ru: float = 2.0
    noise_dbm: float = -80.0

    @property
    def is_ris(self):
        return self.suite in ("ris", "bdris")


# dotted key -> (field, kind, unit/description).  Kinds: int, float, str, bool,
# floats (comma list), angle, angles.
SCHEMA = {
    "scenario.suite": ("suite", "str", "hrsma | sdma | isac | ris | bdris"),
    "scenario.seed": ("seed", "int", "64-bit master seed"),
    "scenario.realizations": ("realizations", "int", "channel/CSIT realizations averaged"),
    "scenario.output": ("output", "str", "CSV output path"),
    "system.n_t": ("n_t", "int", "transmit antennas"),
    "system.k": ("k", "int", "users"),
    "system.g": ("g", "int", "user groups (hrsma/sdma/isac)"),
    "system.b": ("b", "int", "RIS elements (ris/bdris only)"),
    "system.m": ("m", "int", "SAA samples per CSIT realization"),
    "system.sigma_e2": ("sigma_e2", "float", "CSIT error variance in [0, 1]"),
    "system.snr_db": ("snr_db", "floats", "SNR grid in dB (ris/bdris: transmit power in dBm)"),
    "system.thresholds": ("thresholds", "floats", "per-user QoS targets in bit/s/Hz, one value broadcasts"),
    "system.group_azimuths": ("group_azimuths", "angles", "group directions in radians"),
    "system.angular_spread": ("angular_spread", "angle", "one-ring half-spread in radians"),
    "system.array": ("array", "str", "uca | ula"),
    "system.spacing": ("spacing", "float", "ULA element spacing in wavelengths"),
    "system.steering": ("steering", "str", "auto | linear | position"),
    "system.quadrature_points": ("quadrature_points", "int", "Gauss-Legendre nodes for the one-ring integral"),
    "system.noise_power": ("noise_power", "float", "noise power, linear (hrsma/sdma/isac)"),
    "system.power_split": ("power_split", "floats", "initial power fractions: global, group, private"),
    "isac.targets": ("targets", "angles", "radar target directions in radians"),
    "objective.lambdas": ("lambdas", "floats", "regularization grid (QoS / probing / unitarity weight)"),
    "optimizer.t": ("t", "int", "meta-learning iterations"),
    "optimizer.lr": ("lr", "float", "Adam learning rate of the precoder MLP"),
    "optimizer.lr_phi": ("lr_phi", "float", "Adam learning rate of the RIS MLP"),
    "optimizer.hidden": ("hidden", "int", "hidden layer width"),
    "optimizer.t_warm": ("t_warm", "int", "diagonal-RIS warm-start iterations (bdris)"),
    "ris.precoder_init": ("precoder_init", "str", "mrt | warm (bdris precoder start)"),
    "ris.literal_diag_penalty": ("literal_diag_penalty", "bool", "add ||phi - 1||^2 for diagonal RIS"),
    "ris.xi0_db": ("xi0_db", "float", "pathloss at reference distance, dB"),
    "ris.d0": ("d0", "float", "reference distance, m"),
    "ris.d_br": ("d_br", "float", "transmitter-RIS distance, m"),
    "ris.d_ru": ("d_ru", "float", "RIS-user distance, m"),
    "ris.eps_br": ("eps_br", "float", "transmitter-RIS pathloss exponent"),
    "ris.eps_ru": ("eps_ru", "float", "RIS-user pathloss exponent"),
    "ris.noise_dbm": ("noise_dbm", "float", "noise power, dBm"),
}
FIELD_KEYS = {f: key for key, (f, _, _) in SCHEMA.items()}

PRESETS = {
    "desk": {
        "hrsma": dict(n_t=16, k=8, g=2, m=64, t=2500),
        "sdma": dict(n_t=16, k=8, g=2, m=64, t=2500),
        "isac": dict(n_t=16, k=4, g=2, m=32, t=1500),
        "ris": dict(n_t=8, k=4, b=16, t=2500, t_warm=1000),
        "bdris": dict(n_t=8, k=4, b=16, t=2500, t_warm=1000),
    },
    "paper": {
        "hrsma": dict(n_t=100, k=90, g=9, m=1000, t=7500),
        "sdma": dict(n_t=100, k=90, g=9, m=1000, t=7500),
        "isac": dict(n_t=100, k=40, g=4, m=1000, t=7500),
        "ris": dict(n_t=100, k=40, b=200, t=25000, t_warm=1000),
        "bdris": dict(n_t=100, k=40, b=200, t=25000, t_warm=1000),
    },
}

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.USub: operator.neg, ast.UAdd: operator.pos}


def parse_number(text):
    """Evaluate a numeric literal with optional ``pi`` and + - * / arithmetic."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return PI
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(text)

    try:
        return ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def _convert(key, kind, raw):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in ("float", "angle"):
            return parse_number(raw)
        if kind in ("floats", "angles"):
            items = [s for s in raw.split(",") if s.strip()]
            return [parse_number(s) for s in items]
    except ValueError as exc:
        raise ValidationError(key, f"cannot parse {raw!r} as {kind}: {exc}") from None
    raise AssertionError(kind)


def default_lambdas(suite):
    if suite == "isac":
        return [10 ** (-5 + 0.5 * i) for i in range(9)]
    if suite in ("hrsma", "sdma"):
        return [10.0]
    return [1.0]


def apply_defaults(cfg):
    if cfg.lambdas is None:
        cfg.lambdas = default_lambdas(cfg.suite)
    if cfg.thresholds is None and cfg.suite in ("hrsma", "sdma"):
        cfg.thresholds = [0.25]
    if cfg.thresholds is None and cfg.suite == "isac":
        cfg.thresholds = [0.0]
    if cfg.targets is None and cfg.suite == "isac":
        cfg.targets = [-PI / 6, PI / 6]
    if cfg.is_ris and cfg.b is None:
        cfg.b = 16
    return cfg


def validate(cfg):
    def bad(name, reason):
        raise ValidationError(FIELD_KEYS.get(name, name), reason)

    if cfg.suite not in SUITES:
        bad("suite", f"unknown suite {cfg.suite!r}")
    for name in ("realizations", "n_t", "k", "t"):
        if getattr(cfg, name) < 1:
            bad(name, "must be at least 1")
    if cfg.is_ris:
        if cfg.b is None or cfg.b < 1:
            bad("b", "required for ris/bdris")
        if cfg.precoder_init not in ("mrt", "warm"):
            bad("precoder_init", "must be mrt or warm")
        if cfg.t_warm < 1:
            bad("t_warm", "must be at least 1")
    else:
        if cfg.b is not None:
            bad("b", f"only valid for ris/bdris, suite is {cfg.suite}")
        if not 1 <= cfg.g <= cfg.k:
            bad("g", "need 1 <= g <= k")
        if cfg.m < 1:
            bad("m", "must be at least 1")
        if not 0.0 <= cfg.sigma_e2 <= 1.0:
            bad("sigma_e2", "must lie in [0, 1]")
        if not cfg.angular_spread > 0:
            bad("angular_spread", "must be positive")
        if cfg.noise_power <= 0:
            bad("noise_power", "must be positive")
        if len(cfg.power_split) != 3 or abs(sum(cfg.power_split) - 1.0) > 1e-9 or min(cfg.power_split) < 0:
            bad("power_split", "need three non-negative fractions summing to 1")
        if cfg.group_azimuths is not None and len(cfg.group_azimuths) != cfg.g:
            bad("group_azimuths", f"need {cfg.g} values")
        if cfg.thresholds is not None and len(cfg.thresholds) not in (1, cfg.k):
            bad("thresholds", f"need 1 or {cfg.k} values")
        if cfg.thresholds is not None and min(cfg.thresholds) < 0:
            bad("thresholds", "must be non-negative")
        if cfg.quadrature_points < 64:
            bad("quadrature_points", "need at least 64 nodes")
    if cfg.suite == "isac" and not cfg.targets:
        bad("targets", "isac needs at least one target")
    if cfg.suite != "isac" and cfg.targets is not None:
        bad("targets", "only valid for isac")
    if cfg.array not in ("uca", "ula"):
        bad("array", "must be uca or ula")
    if cfg.steering not in ("auto", "linear", "position"):
        bad("steering", "must be auto, linear or position")
    if not cfg.snr_db:
        bad("snr_db", "grid is empty")
    if not cfg.lambdas:
        bad("lambdas", "grid is empty")
    if min(cfg.lambdas) < 0:
        bad("lambdas", "must be non-negative")
    if cfg.hidden < 1:
        bad("hidden", "must be at least 1")
    if cfg.lr < 0 or cfg.lr_phi < 0:
        bad("lr", "learning rates must be non-negative")
    return cfg


def config_from_mapping(mapping):
    """Build a validated config from ``{"section.key": "text"}``."""
    values = {}
    for key, raw in mapping.items():
        if key not in SCHEMA:
            raise ValidationError(key, "unknown key")
        name, kind, _ = SCHEMA[key]
        values[name] = _convert(key, kind, raw)
    if "suite" not in values:
        raise ValidationError("scenario.suite", "missing")
    cfg = ScenarioConfig(**values)
    return validate(apply_defaults(cfg))


def parse_config(text):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc)) from None
    mapping = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            mapping[f"{section}.{key}"] = raw
    return config_from_mapping(mapping)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return parse_config(text)


def _format(kind, value):
    if kind in ("floats", "angles"):
        return ", ".join(repr(float(v)) for v in value)
    if kind in ("float", "angle"):
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def dump_config(cfg):
    """Serialize to INI text; ``parse_config(dump_config(c)) == c``."""
    parser = configparser.ConfigParser(interpolation=None)
    for key, (name, kind, _) in SCHEMA.items():
        value = getattr(cfg, name)
        if value is None:
            continue
        section, opt = key.split(".")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, opt, _format(kind, value))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def with_preset(cfg, scale):
    """Override the size fields with the ``desk`` or ``paper`` preset."""
    if scale is None:
        return cfg
    if scale not in PRESETS:
        raise ValidationError("--scale", f"unknown preset {scale!r}")
    return validate(dataclasses.replace(cfg, **PRESETS[scale][cfg.suite]))
