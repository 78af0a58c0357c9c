"""Small UC cases shared by the test modules."""

from rcuc.grid import case_from_dict, case_to_dict, load_case


def one_bus_case(gens, load, wind=None):
    T = len(load)
    doc = {
        "meta": {"name": "tiny", "base_mva": 100.0, "f0_hz": 60.0},
        "buses": [{"id": 1, "kind": "generator-bus"}],
        "branches": [],
        "generators": [],
        "profiles": {"horizon_h": T, "load_mw": {"1": list(load)}, "wind_mw": {"1": list(wind)} if wind else {}},
    }
    for k, g in enumerate(gens, start=1):
        base = dict(id=k, bus=1, p_min_mw=0, p_max_mw=100, ramp_mw_per_h=1000, min_up_h=1, min_down_h=1,
                    cost_energy_per_mwh=10.0, cost_noload_per_h=0.0, cost_startup=0.0, cost_reserve_per_mwh=0.0,
                    inertia_h_s=5.0, rated_mva=100.0, damping_d=1.0)
        base.update(g)
        doc["generators"].append(base)
    return case_from_dict(doc)


def short_case6(first=8, n=6):
    """case6 trimmed to a window of hours so MILPs stay small."""
    d = case_to_dict(load_case("case6"))
    d["profiles"]["horizon_h"] = n
    for key in ("load_mw", "wind_mw"):
        d["profiles"][key] = {b: v[first:first + n] for b, v in d["profiles"][key].items()}
    return case_from_dict(d)
