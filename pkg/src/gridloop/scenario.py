"""Experiment description files.

Sectioned ``key = value`` text with ``#`` comments and no nesting::

    [run]
    horizon_s = 180
    seed = 42

    [link.wan]
    base_ms = 32

    [disturbances]
    load2_on = 60 connect load2          # <t_s> <action> <target> [sim|gateway]

Everything not given falls back to a default, so a parsed :class:`Scenario`
is self-contained; :func:`format_scenario` prints it back fully expanded.
"""
from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass, field
from pathlib import Path

from .mas import DisconnectedGraph, adjacency_from_edges, metropolis_weights
from .netem import DelayModel, LinkMode
from .profiles import US_PER_HOUR

COMPONENTS = ("gateway", "sim", "agents")
DEVICES = ("pv", "building")
TARGETS = ("pv", "building", "load2")


class ScenarioError(ValueError):
    pass


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


class ValidationError(ScenarioError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class MissingFile(ScenarioError):
    pass


class Mode(str, enum.Enum):
    VIRTUAL = "virtual"
    REALTIME = "realtime"


@dataclass(frozen=True)
class LinkSpec:
    base_ms: float = 32.0
    jitter_std_ms: float = 2.0
    spike_prob: float = 0.01
    spike_lo_ms: float = 70.0
    spike_hi_ms: float = 85.0
    mode: LinkMode = LinkMode.STREAM

    def model(self, seed: int = 0) -> DelayModel:
        return DelayModel(
            self.base_ms, self.jitter_std_ms, self.spike_prob, (self.spike_lo_ms, self.spike_hi_ms), seed, self.mode
        )


DEFAULT_LINKS = {
    "wan": LinkSpec(),
    "lan": LinkSpec(base_ms=0.5, jitter_std_ms=0.1, spike_prob=0.0, spike_lo_ms=0.0, spike_hi_ms=0.0),
}
DEFAULT_WIRING = {"gateway": "wan", "sim": "lan", "agents": "lan"}


@dataclass(frozen=True)
class ProfileSpec:
    device: str
    file: str | None = None  # None: built-in synthetic curve
    crop_start_us: int = 2 * US_PER_HOUR  # 11:00 on a 09:00 profile epoch
    crop_end_us: int = 200 * 60_000_000  # 12:20


@dataclass(frozen=True)
class MicrogridSpec:
    n_ess: int = 4
    f_nom_hz: float = 50.0
    m_droop: tuple[float, ...] = (0.1,) * 4
    p_set: tuple[float, ...] = (0.0,) * 4
    p_min: tuple[float, ...] = (-1.0,) * 4
    p_max: tuple[float, ...] = (1.0,) * 4
    tau_f_s: float = 0.5
    damping: float = 0.0
    s_base_w: float = 10_000.0
    load2_pu: float = 0.1
    dt_us: int = 10_000
    initial_f_hz: float = 50.0
    closed: tuple[str, ...] = ()  # breakers closed at t=0 before any disturbance


@dataclass(frozen=True)
class AgentSpec:
    edges: tuple[tuple[int, int], ...] = ((1, 2), (2, 3), (3, 4), (4, 1))  # 1-based
    k_s: float = 1.0
    eps_hz: float = 1e-6
    r: int = 3
    max_iter: int = 500


@dataclass(frozen=True)
class DisturbanceSpec:
    name: str
    t_us: int
    action: str
    target: str
    placement: str = "sim"


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    horizon_us: int = 180_000_000
    mode: Mode = Mode.VIRTUAL
    seed: int = 0
    emission_period_us: int = 1_000_000
    hub: str = "127.0.0.1:0"
    out_dir: str = "out"
    connect_timeout_s: float = 5.0
    links: tuple[tuple[str, LinkSpec], ...] = tuple(sorted(DEFAULT_LINKS.items()))
    wiring: tuple[tuple[str, str], ...] = tuple(DEFAULT_WIRING.items())
    profiles: tuple[ProfileSpec, ...] = (ProfileSpec("pv"), ProfileSpec("building"))
    microgrid: MicrogridSpec = field(default_factory=MicrogridSpec)
    agents: AgentSpec = field(default_factory=AgentSpec)
    disturbances: tuple[DisturbanceSpec, ...] = ()

    def link(self, name: str) -> LinkSpec:
        return dict(self.links)[name]

    def link_for(self, component: str) -> str:
        return dict(self.wiring)[component]


# -- parsing ----------------------------------------------------------------------

def _seconds_to_us(text: str, where: str) -> int:
    return round(_float(text, where) * 1e6)


def _float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(where, f"expected a number, got {text!r}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ValidationError(where, "must be finite")
    return value


def _int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValidationError(where, f"expected an integer, got {text!r}") from None


def _floats(text: str, n: int, where: str) -> tuple[float, ...]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    values = tuple(_float(t, where) for t in items)
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise ValidationError(where, f"expected 1 or {n} values, got {len(values)}")
    return values


def _take(section: dict[str, str], key: str):
    return section.pop(key, None)


def _reject_unknown(section: dict[str, str], where: str) -> None:
    if section:
        raise ValidationError(f"{where}.{next(iter(section))}", "unknown key")


def _read_ini(text: str) -> configparser.RawConfigParser:
    cp = configparser.RawConfigParser(
        delimiters=("=",),
        comment_prefixes=("#",),
        inline_comment_prefixes=("#",),
        strict=True,
        empty_lines_in_values=False,
        default_section="\x00default",
    )
    cp.optionxform = str  # keys are case-sensitive
    try:
        cp.read_string(text)
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ScenarioSyntaxError(exc.message if hasattr(exc, "message") else str(exc), exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioSyntaxError("key outside of any [section]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ScenarioSyntaxError("expected 'key = value'", lineno) from None
    return cp


def parse_scenario(text: str, base_dir: str | Path | None = None) -> Scenario:
    """Parse scenario text; relative profile paths resolve against ``base_dir``."""
    cp = _read_ini(text)
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    sections = {name: dict(cp.items(name)) for name in cp.sections()}
    for name, sec in sections.items():
        for key, value in sec.items():
            if "\n" in value:
                raise ScenarioSyntaxError(f"[{name}] {key}: continuation lines are not allowed")

    known = {"run", "wiring", "microgrid", "agents", "disturbances"}
    for name in sections:
        if name not in known and not name.startswith(("link.", "profile.")):
            raise ValidationError(name, "unknown section")

    kw: dict = {}
    run = sections.get("run", {})
    if (v := _take(run, "name")) is not None:
        kw["name"] = v
    if (v := _take(run, "horizon_s")) is not None:
        kw["horizon_us"] = _seconds_to_us(v, "run.horizon_s")
    if (v := _take(run, "mode")) is not None:
        try:
            kw["mode"] = Mode(v)
        except ValueError:
            raise ValidationError("run.mode", f"expected virtual|realtime, got {v!r}") from None
    if (v := _take(run, "seed")) is not None:
        kw["seed"] = _int(v, "run.seed")
    if (v := _take(run, "emission_period_s")) is not None:
        kw["emission_period_us"] = _seconds_to_us(v, "run.emission_period_s")
    if (v := _take(run, "hub")) is not None:
        kw["hub"] = v
    if (v := _take(run, "out")) is not None:
        kw["out_dir"] = v
    if (v := _take(run, "connect_timeout_s")) is not None:
        kw["connect_timeout_s"] = _float(v, "run.connect_timeout_s")
    _reject_unknown(run, "run")

    links = dict(DEFAULT_LINKS)
    for name, sec in sections.items():
        if not name.startswith("link."):
            continue
        lname = name[5:]
        d = dict(vars(links.get(lname, LinkSpec())))
        for key in ("base_ms", "jitter_std_ms", "spike_prob", "spike_lo_ms", "spike_hi_ms"):
            if (v := _take(sec, key)) is not None:
                d[key] = _float(v, f"{name}.{key}")
        if (v := _take(sec, "mode")) is not None:
            try:
                d["mode"] = LinkMode(v)
            except ValueError:
                raise ValidationError(f"{name}.mode", f"expected stream|datagram, got {v!r}") from None
        _reject_unknown(sec, name)
        spec = LinkSpec(**d)
        try:
            spec.model()
        except ValueError as exc:
            raise ValidationError(name, str(exc)) from None
        links[lname] = spec
    kw["links"] = tuple(sorted(links.items()))

    wiring = dict(DEFAULT_WIRING)
    for key, v in sections.get("wiring", {}).items():
        if key not in COMPONENTS:
            raise ValidationError(f"wiring.{key}", "unknown component")
        wiring[key] = v
    for comp, lname in wiring.items():
        if lname not in links:
            raise ValidationError(f"wiring.{comp}", f"undefined link {lname!r}")
    kw["wiring"] = tuple((c, wiring[c]) for c in COMPONENTS)

    profiles = []
    for dev in DEVICES:
        sec = sections.get(f"profile.{dev}", {})
        spec_kw: dict = {"device": dev}
        if (v := _take(sec, "file")) is not None:
            path = Path(v)
            if not path.is_absolute():
                path = base / path
            if not path.is_file():
                raise MissingFile(f"profile.{dev}.file: {path} does not exist")
            spec_kw["file"] = str(path.resolve())
        if (v := _take(sec, "crop_start_s")) is not None:
            spec_kw["crop_start_us"] = _seconds_to_us(v, f"profile.{dev}.crop_start_s")
        if (v := _take(sec, "crop_end_s")) is not None:
            spec_kw["crop_end_us"] = _seconds_to_us(v, f"profile.{dev}.crop_end_s")
        _reject_unknown(sec, f"profile.{dev}")
        p = ProfileSpec(**spec_kw)
        if p.crop_start_us >= p.crop_end_us:
            raise ValidationError(f"profile.{dev}", "crop window start must precede end")
        profiles.append(p)
    for name in sections:
        if name.startswith("profile.") and name[8:] not in DEVICES:
            raise ValidationError(name, f"unknown device (expected one of {', '.join(DEVICES)})")
    kw["profiles"] = tuple(profiles)

    mg = sections.get("microgrid", {})
    n = _int(_take(mg, "n_ess") or "4", "microgrid.n_ess")
    if n < 1:
        raise ValidationError("microgrid.n_ess", "need at least one ESS")
    mkw: dict = {"n_ess": n}
    for key, default in (("m_droop", "0.1"), ("p_set", "0.0"), ("p_min", "-1.0"), ("p_max", "1.0")):
        mkw[key] = _floats(_take(mg, key) or default, n, f"microgrid.{key}")
    scalar_keys = {"f_nom_hz": "f_nom_hz", "tau_f_s": "tau_f_s", "damping": "damping", "s_base_w": "s_base_w", "load2_pu": "load2_pu", "initial_f_hz": "initial_f_hz"}
    for key, attr in scalar_keys.items():
        if (v := _take(mg, key)) is not None:
            mkw[attr] = _float(v, f"microgrid.{key}")
    if "initial_f_hz" not in mkw:
        mkw["initial_f_hz"] = mkw.get("f_nom_hz", 50.0)
    if (v := _take(mg, "dt_ms")) is not None:
        mkw["dt_us"] = round(_float(v, "microgrid.dt_ms") * 1000)
    if (v := _take(mg, "closed")) is not None:
        closed = tuple(t.strip() for t in v.split(",") if t.strip())
        for t in closed:
            if t not in TARGETS:
                raise ValidationError("microgrid.closed", f"unknown breaker {t!r}")
        mkw["closed"] = closed
    _reject_unknown(mg, "microgrid")
    micro = MicrogridSpec(**mkw)
    for i in range(n):
        if micro.m_droop[i] <= 0:
            raise ValidationError("microgrid.m_droop", "must be positive")
        if not micro.p_min[i] <= 0 <= micro.p_max[i]:
            raise ValidationError("microgrid.p_min", "need p_min <= 0 <= p_max")
    if micro.tau_f_s <= 0:
        raise ValidationError("microgrid.tau_f_s", "must be positive")
    if micro.s_base_w <= 0:
        raise ValidationError("microgrid.s_base_w", "must be positive")
    if micro.damping < 0:
        raise ValidationError("microgrid.damping", "must be >= 0")
    if micro.dt_us <= 0:
        raise ValidationError("microgrid.dt_ms", "must be positive")
    kw["microgrid"] = micro

    ag = sections.get("agents", {})
    akw: dict = {}
    if (v := _take(ag, "edges")) is not None:
        edges = []
        for item in (t.strip() for t in v.split(",") if t.strip()):
            a, sep, b = item.partition("-")
            if not sep:
                raise ValidationError("agents.edges", f"expected i-j, got {item!r}")
            edges.append((_int(a, "agents.edges"), _int(b, "agents.edges")))
        akw["edges"] = tuple(edges)
    elif n != 4:
        akw["edges"] = tuple((i, i % n + 1) for i in range(1, n + 1)) if n > 2 else ((1, 2),) if n == 2 else ()
    for key, conv in (("k_s", _float), ("eps_hz", _float), ("r", _int), ("max_iter", _int)):
        if (v := _take(ag, key)) is not None:
            akw[key] = conv(v, f"agents.{key}")
    _reject_unknown(ag, "agents")
    agents = AgentSpec(**akw)
    for a, b in agents.edges:
        if not (1 <= a <= n and 1 <= b <= n) or a == b:
            raise ValidationError("agents.edges", f"bad edge {a}-{b} for {n} agents")
    if n > 1:
        try:
            metropolis_weights(adjacency_from_edges(n, [(a - 1, b - 1) for a, b in agents.edges]))
        except DisconnectedGraph:
            raise ValidationError("agents.edges", "agent graph is not connected") from None
    if agents.eps_hz <= 0 or agents.r < 1 or agents.max_iter < agents.r:
        raise ValidationError("agents", "need eps_hz > 0, r >= 1, max_iter >= r")
    kw["agents"] = agents

    horizon = kw.get("horizon_us", Scenario.horizon_us)
    dists = []
    for name, v in sections.get("disturbances", {}).items():
        parts = v.split()
        if len(parts) not in (3, 4):
            raise ValidationError(f"disturbances.{name}", "expected '<t_s> <connect|disconnect> <target> [sim|gateway]'")
        t = _seconds_to_us(parts[0], f"disturbances.{name}")
        action, target = parts[1], parts[2]
        placement = parts[3] if len(parts) == 4 else "sim"
        if action not in ("connect", "disconnect"):
            raise ValidationError(f"disturbances.{name}", f"unknown action {action!r}")
        if target not in TARGETS:
            raise ValidationError(f"disturbances.{name}", f"unknown target {target!r}")
        if placement not in ("sim", "gateway"):
            raise ValidationError(f"disturbances.{name}", f"unknown placement {placement!r}")
        if placement == "gateway" and target not in DEVICES:
            raise ValidationError(f"disturbances.{name}", f"{target} has no gateway breaker")
        if t < 0 or t > horizon:
            raise ValidationError(f"disturbances.{name}", f"t={t / 1e6} s outside [0, horizon]")
        dists.append(DisturbanceSpec(name, t, action, target, placement))
    kw["disturbances"] = tuple(sorted(dists, key=lambda d: (d.t_us, d.name)))

    s = Scenario(**kw)
    if s.horizon_us < 0:
        raise ValidationError("run.horizon_s", "must be >= 0")
    if s.emission_period_us <= 0:
        raise ValidationError("run.emission_period_s", "must be positive")
    if s.emission_period_us % micro.dt_us:
        raise ValidationError("microgrid.dt_ms", "must divide the emission period")
    return s


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"scenario file {path} does not exist")
    return parse_scenario(path.read_text(encoding="utf-8"), path.parent)


# -- printing ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_list(values: tuple[float, ...]) -> str:
    return ", ".join(_fmt(v) for v in values)


def format_scenario(s: Scenario) -> str:
    """Fully expanded text form; parsing it yields an equal Scenario."""
    lines = [
        "[run]",
        f"name = {s.name}",
        f"horizon_s = {_fmt(s.horizon_us / 1e6)}",
        f"mode = {s.mode.value}",
        f"seed = {s.seed}",
        f"emission_period_s = {_fmt(s.emission_period_us / 1e6)}",
        f"hub = {s.hub}",
        f"out = {s.out_dir}",
        f"connect_timeout_s = {_fmt(s.connect_timeout_s)}",
    ]
    for name, link in s.links:
        lines += [
            "",
            f"[link.{name}]",
            f"base_ms = {_fmt(link.base_ms)}",
            f"jitter_std_ms = {_fmt(link.jitter_std_ms)}",
            f"spike_prob = {_fmt(link.spike_prob)}",
            f"spike_lo_ms = {_fmt(link.spike_lo_ms)}",
            f"spike_hi_ms = {_fmt(link.spike_hi_ms)}",
            f"mode = {link.mode.value}",
        ]
    lines += ["", "[wiring]"] + [f"{c} = {l}" for c, l in s.wiring]
    for p in s.profiles:
        lines += ["", f"[profile.{p.device}]"]
        if p.file is not None:
            lines.append(f"file = {p.file}")
        lines += [f"crop_start_s = {_fmt(p.crop_start_us / 1e6)}", f"crop_end_s = {_fmt(p.crop_end_us / 1e6)}"]
    m = s.microgrid
    lines += [
        "",
        "[microgrid]",
        f"n_ess = {m.n_ess}",
        f"f_nom_hz = {_fmt(m.f_nom_hz)}",
        f"m_droop = {_fmt_list(m.m_droop)}",
        f"p_set = {_fmt_list(m.p_set)}",
        f"p_min = {_fmt_list(m.p_min)}",
        f"p_max = {_fmt_list(m.p_max)}",
        f"tau_f_s = {_fmt(m.tau_f_s)}",
        f"damping = {_fmt(m.damping)}",
        f"s_base_w = {_fmt(m.s_base_w)}",
        f"load2_pu = {_fmt(m.load2_pu)}",
        f"dt_ms = {_fmt(m.dt_us / 1000)}",
        f"initial_f_hz = {_fmt(m.initial_f_hz)}",
    ]
    if m.closed:
        lines.append(f"closed = {', '.join(m.closed)}")
    a = s.agents
    lines += [
        "",
        "[agents]",
        f"edges = {', '.join(f'{i}-{j}' for i, j in a.edges)}",
        f"k_s = {_fmt(a.k_s)}",
        f"eps_hz = {_fmt(a.eps_hz)}",
        f"r = {a.r}",
        f"max_iter = {a.max_iter}",
    ]
    lines += ["", "[disturbances]"]
    for d in s.disturbances:
        lines.append(f"{d.name} = {_fmt(d.t_us / 1e6)} {d.action} {d.target} {d.placement}")
    return "\n".join(lines) + "\n"
