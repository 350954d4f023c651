#!/usr/bin/env python3
"""Export a pandapower test network into the gpccopf JSON case format.

Tap ratios and phase shifts are dropped. Line charging is lumped into the
bus shunts of both terminals (b/2 each). Bus ids are the 1-based MATPOWER ids.

    python3 convert_pandapower_case.py case9 --res 3:40 --res 5:40 -o ieee9.json

--res takes a 0-based pandapower bus index and an active forecast in MW.
"""
import argparse
import json

import pandapower as pp
import pandapower.networks as pn


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("network")
    ap.add_argument("--res", action="append", default=[])
    ap.add_argument("--res-gamma", type=float, default=0.3)
    ap.add_argument("-o", "--out", required=True)
    args = ap.parse_args()

    net = getattr(pn, args.network)()
    pp.runpp(net)
    ppc = net._ppc
    base = float(ppc["baseMVA"])
    bus_ids = [int(b) + 1 for b in ppc["bus"][:, 0]]
    # pandapower keeps its own bus order; map pandapower index -> ppc row
    lookup = net._pd2ppc_lookups["bus"]

    g_sh = {i: float(row[4]) / base for i, row in zip(bus_ids, ppc["bus"])}
    b_sh = {i: float(row[5]) / base for i, row in zip(bus_ids, ppc["bus"])}

    branches = []
    for row in ppc["branch"]:
        f, t = int(row[0].real) + 1, int(row[1].real) + 1
        r, x, b, rate = float(row[2].real), float(row[3].real), float(row[4].real), float(row[5].real)
        if not row[10].real:
            continue
        b_sh[f] += b / 2.0
        b_sh[t] += b / 2.0
        branches.append({"from": f, "to": t, "r": r, "x": x,
                         "s_max_mva": rate if rate > 0 else 9900.0})

    kinds = {1: "pq", 2: "pv", 3: "slack"}
    vlim = {}
    for idx, b in net.bus.iterrows():
        vlim[int(lookup[idx]) + 1] = (float(b.get("min_vm_pu", 0.9)), float(b.get("max_vm_pu", 1.1)))
    buses = []
    for i, row in zip(bus_ids, ppc["bus"]):
        buses.append({"id": i, "kind": kinds[int(row[1].real)],
                      "v_min": vlim[i][0], "v_max": vlim[i][1],
                      "g_shunt": g_sh[i], "b_shunt": b_sh[i]})

    gens = []
    slack_p = net.res_ext_grid.p_mw.to_dict()
    for et, table in (("ext_grid", net.ext_grid), ("gen", net.gen)):
        for idx, g in table.iterrows():
            cost = net.poly_cost[(net.poly_cost.et == et) & (net.poly_cost.element == idx)].iloc[0]
            p_ref = slack_p[idx] if et == "ext_grid" else float(g.p_mw)
            gens.append({"bus": int(lookup[g.bus]) + 1,
                         "p_min_mw": float(g.min_p_mw), "p_max_mw": float(g.max_p_mw),
                         "q_min_mvar": float(g.min_q_mvar), "q_max_mvar": float(g.max_q_mvar),
                         "v_set": float(g.vm_pu), "p_ref_mw": float(p_ref),
                         "c2": float(cost.cp2_eur_per_mw2), "c1": float(cost.cp1_eur_per_mw),
                         "c0": float(cost.cp0_eur)})

    loads = []
    for _, l in net.load.iterrows():
        if l.p_mw <= 0:
            continue
        loads.append({"bus": int(lookup[l.bus]) + 1, "p_ref_mw": float(l.p_mw),
                      "gamma": max(float(l.q_mvar) / float(l.p_mw), 0.0)})

    res = []
    for spec in args.res:
        b, p = spec.split(":")
        res.append({"bus": int(lookup[int(b)]) + 1, "p_ref_mw": float(p), "gamma": args.res_gamma})

    out = {"base_mva": base, "buses": buses, "branches": branches, "gens": gens,
           "loads": loads, "res": res}
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
