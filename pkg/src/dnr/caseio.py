"""Reading and writing networks and load schedules.

MATPOWER ``.m`` files are read with a restricted grammar: ``mpc.<name> =``
scalar or matrix assignments. Anything else (the ``function`` line,
trailing conversion code) is skipped. MATPOWER's distribution cases state
in the block header comment that loads are in kW and impedances in ohms;
those annotations are honoured so the raw files load in per-unit.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .network import PQ, PV, SLACK, Branch, Bus, Network, SwitchConfiguration, branch_names, is_radial

NETWORK_SCHEMA = "dnr-network/1"
FIXTURES = ("case14", "case16", "case33", "case69", "case118")

# MATPOWER column indices (0-based)
BUS_I, BUS_TYPE, PD, QD, GS, BS, VM, BASE_KV = 0, 1, 2, 3, 4, 5, 7, 9
GEN_BUS, PG, QG, VG, GEN_STATUS = 0, 1, 2, 5, 7
F_BUS, T_BUS, BR_R, BR_X, BR_B, RATE_A, TAP, SHIFT, BR_STATUS = 0, 1, 2, 3, 4, 5, 8, 9, 10
_MIN_COLS = {"bus": 13, "gen": 8, "branch": 11}


class CaseParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class CaseFixture:
    name: str
    network: Network
    default_ties: SwitchConfiguration

    @property
    def meshed(self) -> bool:
        return not is_radial(self.network, self.default_ties)


@dataclass
class _Block:
    rows: list[list[float]]
    header: str
    line: int
    row_lines: list[int] = field(default_factory=list)


_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_NUMBER = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$|^[-+]?Inf$", re.IGNORECASE)


def _split_comment(line: str) -> tuple[str, str]:
    idx = line.find("%")
    return (line, "") if idx < 0 else (line[:idx], line[idx:])


def _parse_row(text: str, lineno: int) -> list[float]:
    values = []
    for tok in text.replace(",", " ").split():
        if not _NUMBER.match(tok):
            raise CaseParseError(f"malformed matrix entry {tok!r}", lineno)
        values.append(float(tok))
    return values


def _scan(text: str) -> tuple[dict[str, float], dict[str, _Block]]:
    scalars: dict[str, float] = {}
    blocks: dict[str, _Block] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        code, comment = _split_comment(lines[i])
        i += 1
        m = _ASSIGN.match(code)
        if not m:
            continue
        name, rhs = m.group(1), m.group(2).strip()
        if rhs.startswith("["):
            block = _Block([], comment, lineno)
            body = rhs[1:]
            closed = False
            while True:
                if "]" in body:
                    body, closed = body[: body.index("]")], True
                for part in body.split(";"):
                    if part.strip():
                        block.rows.append(_parse_row(part, lineno))
                        block.row_lines.append(lineno)
                if closed:
                    break
                if i >= len(lines):
                    raise CaseParseError(f"unterminated matrix mpc.{name}", block.line)
                lineno = i + 1
                body, _ = _split_comment(lines[i])
                i += 1
            blocks[name] = block
        elif rhs.startswith("{") or rhs.startswith("'"):
            if rhs.startswith("{") and "}" not in rhs:
                while i < len(lines) and "}" not in lines[i]:
                    i += 1
                i += 1
        else:
            value = rhs.rstrip(";").strip()
            if not _NUMBER.match(value):
                raise CaseParseError(f"unsupported expression for mpc.{name}", lineno)
            scalars[name] = float(value)
    return scalars, blocks


def _matpower_tables(text: str):
    scalars, blocks = _scan(text)
    if "baseMVA" not in scalars:
        raise CaseParseError("missing mpc.baseMVA")
    for name in ("bus", "gen", "branch"):
        if name not in blocks:
            raise CaseParseError(f"missing mpc.{name} block")
        for r, row in enumerate(blocks[name].rows):
            if len(row) < _MIN_COLS[name]:
                raise CaseParseError(
                    f"mpc.{name} row {r + 1} has {len(row)} columns, expected at least {_MIN_COLS[name]}",
                    blocks[name].row_lines[r],
                )
    return scalars["baseMVA"], blocks


def _parse(text: str, name: str) -> tuple[Network, SwitchConfiguration]:
    base_mva, blocks = _matpower_tables(text)
    bus = np.array(blocks["bus"].rows)[:, :13]
    gen = np.array([row[:8] for row in blocks["gen"].rows]).reshape(-1, 8)
    branch = np.array([row[:11] for row in blocks["branch"].rows])

    if "kw" in blocks["bus"].header.lower():
        bus[:, [PD, QD]] /= 1e3
    if "ohm" in blocks["branch"].header.lower():
        v_base = bus[0, BASE_KV] * 1e3
        branch[:, [BR_R, BR_X]] /= v_base**2 / (base_mva * 1e6)

    index = {}
    for i, number in enumerate(bus[:, BUS_I].astype(int)):
        if number in index:
            raise CaseParseError(f"duplicate bus number {number}", blocks["bus"].row_lines[i])
        index[number] = i

    p_gen = np.zeros(len(bus))
    q_gen = np.zeros(len(bus))
    v_gen: dict[int, float] = {}
    for r, row in enumerate(gen):
        number = int(row[GEN_BUS])
        if number not in index:
            raise CaseParseError(f"generator at unknown bus {number}", blocks["gen"].row_lines[r])
        if row[GEN_STATUS] <= 0:
            continue
        i = index[number]
        p_gen[i] += row[PG]
        q_gen[i] += row[QG]
        v_gen.setdefault(i, row[VG])

    buses = []
    for i, row in enumerate(bus):
        kind = PQ
        if row[BUS_TYPE] == 3:
            kind = SLACK
        elif row[BUS_TYPE] == 2 and i in v_gen:
            kind = PV
        buses.append(
            Bus(
                id=i,
                number=int(row[BUS_I]),
                kind=kind,
                p_load=float(row[PD]),
                q_load=float(row[QD]),
                p_gen=float(p_gen[i]),
                q_gen=float(q_gen[i]),
                v_set=float(v_gen.get(i, row[VM] if row[VM] > 0 else 1.0)),
                v_base=float(row[BASE_KV]) if row[BASE_KV] > 0 else 1.0,
                g_shunt=float(row[GS]),
                b_shunt=float(row[BS]),
            )
        )

    pairs = []
    for r, row in enumerate(branch):
        f, t = int(row[F_BUS]), int(row[T_BUS])
        for end in (f, t):
            if end not in index:
                raise CaseParseError(f"branch references unknown bus {end}", blocks["branch"].row_lines[r])
        pairs.append((f, t))
    names = branch_names(pairs)
    branches = []
    open_ = []
    for k, (row, nm) in enumerate(zip(branch, names)):
        rate = float(row[RATE_A]) / base_mva if row[RATE_A] > 0 else None
        branches.append(
            Branch(
                id=k,
                from_bus=index[int(row[F_BUS])],
                to_bus=index[int(row[T_BUS])],
                r=float(row[BR_R]),
                x=float(row[BR_X]),
                b=float(row[BR_B]),
                rate=rate,
                transformer=bool(row[TAP] != 0 or row[SHIFT] != 0),
                name=nm,
            )
        )
        if row[BR_STATUS] <= 0:
            open_.append(k)
    net = Network(tuple(buses), tuple(branches), s_base=float(base_mva), name=name)
    return net, SwitchConfiguration.of(open_)


def parse_matpower_case(text: str, name: str = "") -> Network:
    """Parse MATPOWER case text into a :class:`Network`.

    Out-of-service branches are kept (switched out by
    :func:`parse_matpower_fixture`'s default configuration); bus type 3 maps
    to slack, type 2 with an in-service generator to PV.
    """
    return _parse(text, name)[0]


def parse_matpower_fixture(text: str, name: str = "") -> CaseFixture:
    """Like :func:`parse_matpower_case`, with out-of-service branches as the default ties."""
    net, ties = _parse(text, name)
    return CaseFixture(name, net, ties)


# -- canonical JSON ---------------------------------------------------------

_BUS_FIELDS = ("id", "number", "kind", "p_load", "q_load", "p_gen", "q_gen", "v_set", "v_base", "g_shunt", "b_shunt")
_BRANCH_FIELDS = ("id", "name", "from_bus", "to_bus", "r", "x", "b", "rate", "switchable", "transformer")


def network_to_dict(net: Network) -> dict:
    return {
        "schema": NETWORK_SCHEMA,
        "name": net.name,
        "s_base": net.s_base,
        "buses": [{f: getattr(b, f) for f in _BUS_FIELDS} for b in net.buses],
        "branches": [{f: getattr(br, f) for f in _BRANCH_FIELDS} for br in net.branches],
    }


def network_from_dict(data: dict) -> Network:
    if data.get("schema") != NETWORK_SCHEMA:
        raise CaseParseError(f"unsupported schema {data.get('schema')!r}")
    buses = tuple(Bus(**{f: b[f] for f in _BUS_FIELDS}) for b in data["buses"])
    branches = tuple(Branch(**{f: br[f] for f in _BRANCH_FIELDS}) for br in data["branches"])
    return Network(buses, branches, s_base=data["s_base"], name=data.get("name", ""))


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def serialize_network(net: Network) -> str:
    """Canonical JSON: sorted keys, shortest round-tripping float repr."""
    return _dumps(network_to_dict(net))


def parse_network_json(text: str) -> Network:
    return network_from_dict(json.loads(text))


def serialize_fixture(fx: CaseFixture) -> str:
    data = network_to_dict(fx.network)
    data["default_ties"] = fx.network.names_of(fx.default_ties)
    return _dumps(data)


def parse_fixture_json(text: str) -> CaseFixture:
    data = json.loads(text)
    net = network_from_dict(data)
    return CaseFixture(net.name, net, net.config_from_names(data.get("default_ties", [])))


_cache: dict[str, CaseFixture] = {}


def load_fixture(name: str) -> CaseFixture:
    """One of the embedded cases: case14, case16, case33, case69, case118."""
    if name not in FIXTURES:
        raise KeyError(f"unknown case {name!r}; available: {', '.join(FIXTURES)}")
    if name not in _cache:
        text = resources.files("dnr.data").joinpath(f"{name}.json").read_text(encoding="utf-8")
        _cache[name] = parse_fixture_json(text)
    return _cache[name]


def load_case(spec: str) -> CaseFixture:
    """Fixture name, or path to a ``.m`` / ``.json`` file."""
    if spec in FIXTURES:
        return load_fixture(spec)
    with open(spec, encoding="utf-8") as fh:
        text = fh.read()
    stem = re.sub(r"\.(m|json)$", "", spec.replace("\\", "/").rsplit("/", 1)[-1])
    if spec.endswith(".json"):
        return parse_fixture_json(text)
    return parse_matpower_fixture(text, stem)


# -- schedules --------------------------------------------------------------


@dataclass
class Schedule:
    """Per-bus load and generation multipliers over time.

    ``buses`` holds bus numbers; ``load`` and ``gen`` are (T, len(buses)).
    """

    timestamps: list[str] = field(default_factory=list)
    buses: list[int] = field(default_factory=list)
    load: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    gen: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    resolution_min: int = 60

    def __post_init__(self) -> None:
        self.load = np.asarray(self.load, dtype=float).reshape(len(self.timestamps), len(self.buses))
        self.gen = np.asarray(self.gen, dtype=float).reshape(len(self.timestamps), len(self.buses))
        if (self.load < 0).any() or (self.gen < 0).any():
            raise ScheduleError("scaling factors must be non-negative")

    def __len__(self) -> int:
        return len(self.timestamps)

    def factors(self, net: Network, step: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-bus-id (load, gen) multipliers at ``step``; unlisted buses stay at 1."""
        load = np.ones(net.n_bus)
        gen = np.ones(net.n_bus)
        col = {number: j for j, number in enumerate(self.buses)}
        for bus in net.buses:
            j = col.get(bus.number)
            if j is not None:
                load[bus.id] = self.load[step, j]
                gen[bus.id] = self.gen[step, j]
        return load, gen

    def resample(self, step_minutes: int) -> Schedule:
        if step_minutes % self.resolution_min:
            raise ScheduleError(f"step of {step_minutes} min is not a multiple of the {self.resolution_min} min resolution")
        k = step_minutes // self.resolution_min
        return Schedule(self.timestamps[::k], list(self.buses), self.load[::k], self.gen[::k], step_minutes)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["timestamp", *(f"bus_{b}" for b in self.buses), *(f"gen_{b}" for b in self.buses)])
        for t, lrow, grow in zip(self.timestamps, self.load, self.gen):
            w.writerow([t, *(repr(float(v)) for v in lrow), *(repr(float(v)) for v in grow)])
        return out.getvalue()


def load_schedule(csv_text: str) -> Schedule:
    """Read ``timestamp,bus_<n>,...[,gen_<n>,...]`` CSV.

    ``bus_<n>`` columns scale the load at bus number n, optional ``gen_<n>``
    columns its generation (default 1).
    """
    rows = list(csv.reader(io.StringIO(csv_text)))
    rows = [r for r in rows if r]
    if not rows:
        return Schedule()
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "timestamp":
        raise ScheduleError("first column must be 'timestamp'")
    load_cols: dict[int, int] = {}
    gen_cols: dict[int, int] = {}
    for j, h in enumerate(header[1:], start=1):
        m = re.fullmatch(r"(bus|gen)_(\d+)", h)
        if not m:
            raise ScheduleError(f"unrecognised column {h!r}")
        (load_cols if m.group(1) == "bus" else gen_cols)[int(m.group(2))] = j
    buses = sorted(set(load_cols) | set(gen_cols))
    stamps, load, gen = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ScheduleError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ScheduleError(f"line {lineno}: {exc}") from None
        if any(v < 0 for v in values):
            raise ScheduleError(f"line {lineno}: negative scaling factor")
        stamps.append(row[0].strip())
        load.append([float(row[load_cols[b]]) if b in load_cols else 1.0 for b in buses])
        gen.append([float(row[gen_cols[b]]) if b in gen_cols else 1.0 for b in buses])
    resolution = 60
    if len(stamps) >= 2:
        try:
            delta = datetime.fromisoformat(stamps[1]) - datetime.fromisoformat(stamps[0])
            resolution = max(1, int(delta.total_seconds() // 60))
        except ValueError:
            pass
    return Schedule(stamps, buses, load, gen, resolution)


def _residential(h: np.ndarray) -> np.ndarray:
    return 0.45 + 0.25 * np.exp(-((h - 8.0) ** 2) / 4.0) + 0.55 * np.exp(-((h - 19.5) ** 2) / 6.0)


def _commercial(h: np.ndarray) -> np.ndarray:
    return 0.35 + 0.65 * np.exp(-((h - 13.0) ** 2) / 14.0)


def _industrial(h: np.ndarray) -> np.ndarray:
    return 0.7 + 0.25 * ((h > 6) & (h < 22))


def synthesize_schedule(
    days: int,
    resolution_min: int,
    seed: int,
    buses: Sequence[int] | None = None,
    gen_buses: Iterable[int] = (),
    start: str = "2024-01-01T00:00:00",
) -> Schedule:
    """Deterministic synthetic load/generation multipliers.

    Each bus gets a residential, commercial or industrial daily shape with
    multiplicative noise; buses in ``gen_buses`` get a clear-sky PV shape
    with daily cloud cover. ``buses`` defaults to numbers 1..33.
    """
    if days < 1:
        raise ScheduleError("days must be >= 1")
    if resolution_min < 1 or 1440 % resolution_min:
        raise ScheduleError("resolution must divide a day")
    rng = np.random.default_rng(seed)
    buses = list(range(1, 34)) if buses is None else [int(b) for b in buses]
    gen_set = {int(b) for b in gen_buses}
    steps = days * 1440 // resolution_min
    t0 = datetime.fromisoformat(start)
    stamps = [(t0 + timedelta(minutes=resolution_min * i)).isoformat() for i in range(steps)]
    hours = (np.arange(steps) * resolution_min / 60.0) % 24.0
    day = np.arange(steps) * resolution_min // 1440
    weekend = ((day + t0.weekday()) % 7) >= 5
    shapes = (_residential(hours), _commercial(hours) * np.where(weekend, 0.6, 1.0), _industrial(hours))
    kinds = rng.integers(0, 3, size=len(buses))
    peak = rng.uniform(0.8, 1.2, size=len(buses))
    noise = rng.normal(1.0, 0.05, size=(steps, len(buses)))
    load = np.column_stack([shapes[k] * p for k, p in zip(kinds, peak)]) * noise
    load = np.clip(load, 0.0, None)

    sun = np.clip(np.sin(np.pi * (hours - 6.0) / 12.0), 0.0, None)
    clouds = rng.uniform(0.5, 1.0, size=days)[day]
    gen = np.ones((steps, len(buses)))
    for j, b in enumerate(buses):
        if b in gen_set:
            gen[:, j] = sun * clouds
    return Schedule(stamps, buses, load, gen, resolution_min)
