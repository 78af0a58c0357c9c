"""Regenerate the shipped case fixtures (src/rcuc/data/case6.json, case24.json).

Parameter values are authored for this repository; the 24-bus topology follows
the IEEE RTS-24 branch list (24 buses, 38 branches) with 32 units plus a
synchronous condenser.
"""

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "rcuc" / "data"


def gen(gid, bus, pmin, pmax, ramp, up, dn, c, nl, su, re, h, s, d=1.0):
    return {
        "id": gid, "bus": bus, "p_min_mw": pmin, "p_max_mw": pmax, "ramp_mw_per_h": ramp,
        "min_up_h": up, "min_down_h": dn, "cost_energy_per_mwh": c, "cost_noload_per_h": nl,
        "cost_startup": su, "cost_reserve_per_mwh": re, "inertia_h_s": h, "rated_mva": s, "damping_d": d,
    }


# hourly shapes, hour 0 = midnight
LOAD_SHAPE = np.array([0.70, 0.66, 0.64, 0.63, 0.64, 0.68, 0.76, 0.85, 0.92, 0.95, 0.97, 0.98,
                       0.97, 0.96, 0.95, 0.95, 0.97, 1.00, 0.99, 0.96, 0.92, 0.86, 0.79, 0.74])
WIND_SHAPE = np.array([0.35, 0.38, 0.40, 0.42, 0.40, 0.38, 0.40, 0.55, 0.75, 0.92, 1.00, 0.98,
                       0.90, 0.70, 0.50, 0.38, 0.30, 0.25, 0.22, 0.25, 0.30, 0.32, 0.34, 0.35])


def case6():
    buses = [{"id": i, "kind": "generator-bus", "nominal_voltage_pu": 1.0} for i in (1, 2, 3, 5, 6)]
    buses.insert(3, {"id": 4, "kind": "load-bus", "nominal_voltage_pu": 1.0})
    branches = [
        (1, 2, 40.0, 300.0), (1, 4, 24.0, 250.0), (2, 3, 30.0, 250.0), (2, 4, 36.0, 250.0),
        (3, 6, 20.0, 200.0), (4, 5, 28.0, 250.0), (5, 6, 24.0, 200.0),
    ]
    gens = [
        gen(1, 1, 60, 220, 110, 4, 3, 16.0, 400.0, 3000.0, 3.0, 6.0, 300.0, d=10.0),
        gen(2, 2, 50, 200, 120, 3, 2, 20.0, 300.0, 2000.0, 3.5, 6.0, 280.0, d=10.0),
        gen(3, 3, 30, 120, 100, 2, 2, 30.0, 150.0, 600.0, 4.0, 9.0, 160.0, d=10.0),
        gen(4, 5, 20, 100, 100, 1, 1, 27.0, 120.0, 400.0, 2.5, 10.0, 140.0, d=10.0),
        gen(5, 6, 10, 80, 80, 1, 1, 40.0, 80.0, 200.0, 5.0, 8.0, 110.0, d=10.0),
        gen(6, 3, 40, 150, 150, 2, 2, 24.0, 220.0, 1200.0, 4.0, 8.0, 200.0, d=10.0),
    ]
    peak = 600.0
    share = {1: 0.15, 2: 0.20, 3: 0.15, 4: 0.25, 5: 0.15, 6: 0.10}
    load = {str(b): [round(peak * s * f, 3) for f in LOAD_SHAPE] for b, s in share.items()}
    wind = {"4": [round(180.0 * f, 3) for f in WIND_SHAPE], "6": [round(120.0 * f, 3) for f in WIND_SHAPE]}
    return {
        "meta": {"name": "case6", "base_mva": 100.0, "f0_hz": 60.0},
        "buses": buses,
        "branches": [{"from_bus": a, "to_bus": b, "susceptance_pu": s, "flow_limit_mw": f} for a, b, s, f in branches],
        "generators": gens,
        "profiles": {"horizon_h": 24, "load_mw": load, "wind_mw": wind},
    }


RTS_BRANCHES = [
    (1, 2, 0.0139), (1, 3, 0.2112), (1, 5, 0.0845), (2, 4, 0.1267), (2, 6, 0.1920), (3, 9, 0.1190),
    (3, 24, 0.0839), (4, 9, 0.1037), (5, 10, 0.0883), (6, 10, 0.0605), (7, 8, 0.0614), (8, 9, 0.1651),
    (8, 10, 0.1651), (9, 11, 0.0839), (9, 12, 0.0839), (10, 11, 0.0839), (10, 12, 0.0839), (11, 13, 0.0476),
    (11, 14, 0.0418), (12, 13, 0.0476), (12, 23, 0.0966), (13, 23, 0.0865), (14, 16, 0.0389), (15, 16, 0.0173),
    (15, 21, 0.0490), (15, 21, 0.0490), (15, 24, 0.0519), (16, 17, 0.0259), (16, 19, 0.0231), (17, 18, 0.0144),
    (17, 22, 0.1053), (18, 21, 0.0259), (18, 21, 0.0259), (19, 20, 0.0396), (19, 20, 0.0396), (20, 23, 0.0216),
    (20, 23, 0.0216), (21, 22, 0.0678),
]
RTS_LOAD = {1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175, 10: 195, 13: 265, 14: 194,
            15: 317, 16: 100, 18: 333, 19: 181, 20: 128}


def case24():
    # (bus, count, pmin, pmax, ramp, up, dn, c, nl, su, re, H, S)
    fleet = [
        (1, 2, 5, 20, 20, 1, 1, 60.0, 50.0, 100.0, 6.0, 2.5, 25),
        (1, 2, 15, 76, 40, 8, 4, 18.0, 150.0, 1500.0, 3.0, 3.0, 90),
        (2, 2, 5, 20, 20, 1, 1, 60.0, 50.0, 100.0, 6.0, 2.5, 25),
        (2, 2, 15, 76, 40, 8, 4, 18.0, 150.0, 1500.0, 3.0, 3.0, 90),
        (7, 3, 25, 100, 70, 8, 8, 35.0, 200.0, 2500.0, 4.0, 5.0, 120),
        (13, 3, 69, 197, 180, 12, 10, 32.0, 350.0, 5000.0, 4.0, 4.5, 230),
        (15, 5, 2.4, 12, 60, 4, 2, 45.0, 40.0, 80.0, 5.0, 2.0, 15),
        (15, 1, 54, 155, 180, 8, 8, 15.0, 300.0, 4000.0, 3.0, 4.0, 180),
        (16, 1, 54, 155, 180, 8, 8, 15.0, 300.0, 4000.0, 3.0, 4.0, 180),
        (18, 1, 100, 400, 20, 24, 48, 6.0, 500.0, 20000.0, 2.0, 5.0, 460),
        (21, 1, 100, 400, 20, 24, 48, 6.0, 500.0, 20000.0, 2.0, 5.0, 460),
        (22, 6, 10, 50, 50, 1, 1, 8.0, 20.0, 50.0, 1.0, 3.0, 60),
        (23, 2, 54, 155, 180, 8, 8, 15.0, 300.0, 4000.0, 3.0, 4.0, 180),
        (23, 1, 140, 350, 240, 24, 48, 12.0, 450.0, 8000.0, 3.0, 4.0, 400),
    ]
    gens = []
    for bus, count, pmin, pmax, ramp, up, dn, c, nl, su, re, h, s in fleet:
        for _ in range(count):
            gens.append(gen(len(gens) + 1, bus, pmin, pmax, ramp, up, dn, c, nl, su, re, h, s))
    # synchronous condenser: inertia without active power
    gens.append(gen(len(gens) + 1, 14, 0, 0, 1, 1, 1, 0.0, 10.0, 0.0, 0.0, 2.0, 200))
    gen_buses = sorted({g["bus"] for g in gens})
    buses = [{"id": i, "kind": "generator-bus" if i in gen_buses else "load-bus", "nominal_voltage_pu": 1.0}
             for i in range(1, 25)]
    branches = [{"from_bus": a, "to_bus": b, "susceptance_pu": round(1.0 / x, 4), "flow_limit_mw": 500.0}
                for a, b, x in RTS_BRANCHES]
    total = sum(RTS_LOAD.values())
    lo, hi = 1195.0, 2116.0
    shape = (LOAD_SHAPE - LOAD_SHAPE.min()) / (LOAD_SHAPE.max() - LOAD_SHAPE.min())
    system = lo + (hi - lo) * shape
    load = {str(b): [round(float(v) * mw / total, 4) for v in system] for b, mw in RTS_LOAD.items()}
    # make the system total hit the end points exactly despite rounding
    wind = {"16": [round(200.0 * f, 3) for f in WIND_SHAPE], "21": [round(200.0 * f, 3) for f in WIND_SHAPE]}
    return {
        "meta": {"name": "case24", "base_mva": 100.0, "f0_hz": 60.0},
        "buses": buses,
        "branches": branches,
        "generators": gens,
        "profiles": {"horizon_h": 24, "load_mw": load, "wind_mw": wind},
    }


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in (("case6", case6()), ("case24", case24())):
        (OUT / f"{name}.json").write_text(json.dumps(doc, indent=1))
        print("wrote", OUT / f"{name}.json")
