"""Walk through the meshed 14-bus case: solve it closed, then cut its seven loops.

    python3 demos/fourteen_bus_walkthrough.py
"""

from dnr.caseio import load_fixture
from dnr.heuristics import merlin_loop_cutting, montoya_mst
from dnr.network import apply_configuration
from dnr.powerflow import newton_raphson, voltage_extrema


def show(label, res):
    v_min, v_max = voltage_extrema(res)
    print(f"{label:<28} losses {res.losses_kw / 1e3:8.2f} MW   v in [{v_min:.3f}, {v_max:.3f}] pu")


def main():
    fx = load_fixture("case14")
    net = fx.network
    closed = net.all_closed()
    print(f"{net.n_bus} buses, {net.n_branch} branches, {closed.n_active - (net.n_bus - net.n_con)} independent loops")
    show("all switches closed", newton_raphson(closed))

    # Merlin opens the weakest branch, re-solves, and repeats until radial
    merlin = merlin_loop_cutting(net)
    print(f"\nMerlin opened {', '.join(merlin.open_names)} using {merlin.npf} power flows")
    show("Merlin configuration", merlin.result)
    for step in merlin.trace:
        if step["action"] == "open":
            print(f"  open {step['branch']:<8} -> {step['losses_kw'] / 1e3:7.2f} MW")

    # Montoya keeps the busiest branches from one meshed solve
    montoya = montoya_mst(net)
    print(f"\nMontoya opened {', '.join(montoya.open_names)} using {montoya.npf} power flow")
    show("Montoya configuration", montoya.result)

    # the published Merlin line set, for comparison with the one found here
    published = net.config_from_names(["2_5_1", "3_4_1", "4_5_1", "4_7_1", "4_9_1", "10_11_1", "12_13_1"])
    show("\npublished Merlin lines", newton_raphson(apply_configuration(net, published)))


if __name__ == "__main__":
    main()
