"""Regenerate the embedded JSON fixtures from MATPOWER case files.

    python3 tools/build_fixtures.py [case-dir]

The case directory (default ``tests/data``) must contain case14.m,
case16ci.m, case33bw.m, case69.m and case118.m. The 118-bus case has no
open branches in its source data: its transformers are made
non-switchable and its default ties are the lines left out of the
minimum spanning tree weighted by 1/|P|, with P the branch flows of the
all-closed power flow. Impedance-weighted trees of that case do not
converge.
The 69-bus source is the radial capacitor-placement variant, so the five
normally-open tie lines of the reconfiguration variant are appended.
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from dnr.caseio import CaseFixture, parse_matpower_fixture, serialize_fixture
from dnr.graphs import WeightedGraph, minimum_spanning_tree
from dnr.network import Branch, Network, SwitchConfiguration, branch_names
from dnr.powerflow import newton_raphson

SOURCES = {
    "case14": "case14.m",
    "case16": "case16ci.m",
    "case33": "case33bw.m",
    "case69": "case69.m",
    "case118": "case118.m",
}


# (from bus, to bus, r ohm, x ohm)
CASE69_TIES = [(11, 43, 0.5, 0.5), (13, 21, 0.5, 0.5), (15, 46, 1.0, 0.5), (50, 59, 2.0, 1.0), (27, 65, 1.0, 0.5)]


def add_ties(fx: CaseFixture, ties) -> CaseFixture:
    net = fx.network
    z_base = net.buses[0].v_base**2 / net.s_base
    pairs = [(net.buses[b.from_bus].number, net.buses[b.to_bus].number) for b in net.branches]
    pairs += [(f, t) for f, t, _, _ in ties]
    names = branch_names(pairs)
    branches = list(net.branches)
    for f, t, r, x in ties:
        k = len(branches)
        fb, tb = net.bus_by_number(f).id, net.bus_by_number(t).id
        branches.append(Branch(k, fb, tb, r / z_base, x / z_base, name=names[k]))
    new = Network(net.buses, tuple(branches), net.s_base, net.name)
    return CaseFixture(fx.name, new, SwitchConfiguration.of(range(net.n_branch, len(branches))))


def build(name: str, path: Path) -> CaseFixture:
    fx = parse_matpower_fixture(path.read_text(encoding="utf-8"), name)
    if name == "case69":
        fx = add_ties(fx, CASE69_TIES)
    if name == "case118":
        net = fx.network
        branches = tuple(replace(br, switchable=not br.transformer) for br in net.branches)
        net = replace(net, branches=branches)
        res = newton_raphson(net.all_closed())
        weights = 1.0 / np.maximum(np.abs(res.branch_p), 1e-9)
        g = WeightedGraph.from_network(net, weights)
        fx = CaseFixture(name, net, minimum_spanning_tree(g).to_config(g))
    return fx


def main(argv: list[str]) -> None:
    src = Path(argv[1]) if len(argv) > 1 else Path("tests/data")
    out = Path(__file__).resolve().parents[1] / "src" / "dnr" / "data"
    for name, fname in SOURCES.items():
        fx = build(name, src / fname)
        (out / f"{name}.json").write_text(serialize_fixture(fx), encoding="utf-8")
        net = fx.network
        print(f"{name}: {net.n_bus} buses, {net.n_branch} branches, {len(fx.default_ties)} ties, slacks {net.n_con}")


if __name__ == "__main__":
    main(sys.argv)
