import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcuc.grid import (
    CaseError,
    case_from_dict,
    case_to_dict,
    injection_shift_factors,
    is_connected,
    load_case,
    perturb_profiles,
    save_case,
    susceptance_laplacian,
)


@pytest.fixture(scope="module")
def case6():
    return load_case("case6")


def test_case6_shape(case6):
    assert case6.n_bus == 6
    assert case6.n_gen == 6
    assert len(case6.branches) == 7
    assert case6.horizon == 24


def test_case24_shape():
    c = load_case("case24")
    assert (c.n_bus, c.n_gen, len(c.branches)) == (24, 33, 38)
    total = c.profiles.total_load
    assert total.min() == pytest.approx(1195.0, abs=0.05)
    assert total.max() == pytest.approx(2116.0, abs=0.05)


def test_shipped_cases_connected():
    for name in ("case6", "case24"):
        assert is_connected(load_case(name))


def _doc(case):
    return json.loads(json.dumps(case_to_dict(case)))


def test_duplicate_bus_rejected(case6):
    d = _doc(case6)
    d["buses"][1]["id"] = d["buses"][2]["id"]
    with pytest.raises(CaseError, match="duplicate bus id"):
        case_from_dict(d)


def test_absent_bus_rejected(case6):
    d = _doc(case6)
    d["branches"][0]["to_bus"] = 99
    with pytest.raises(CaseError, match="99"):
        case_from_dict(d)


def test_disconnected_rejected(case6):
    d = _doc(case6)
    # isolate bus 6 by dropping every branch touching it
    d["branches"] = [b for b in d["branches"] if 6 not in (b["from_bus"], b["to_bus"])]
    with pytest.raises(CaseError, match="connected"):
        case_from_dict(d)


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(CaseError):
        load_case(p)


def test_round_trip_exact(case6, tmp_path):
    p = tmp_path / "c.json"
    save_case(perturb_profiles(case6, 0.2, 3), p)
    back = load_case(p)
    orig = perturb_profiles(case6, 0.2, 3)
    assert np.array_equal(back.profiles.load_mw, orig.profiles.load_mw)
    assert np.array_equal(back.profiles.wind_mw, orig.profiles.wind_mw)
    assert back.generators == orig.generators
    assert back.branches == orig.branches


def test_zero_deviation_identity(case6):
    out = perturb_profiles(case6, 0.0, 11)
    assert np.array_equal(out.profiles.load_mw, case6.profiles.load_mw)
    assert np.array_equal(out.profiles.wind_mw, case6.profiles.wind_mw)


def test_upper_end_draws(case6, monkeypatch):
    class Top:
        def uniform(self, lo, hi, size=None):
            return np.full(size, hi)

    monkeypatch.setattr(np.random, "default_rng", lambda seed: Top())
    out = perturb_profiles(case6, 0.2, 0)
    assert np.allclose(out.profiles.load_mw, 1.2 * case6.profiles.load_mw)
    assert np.allclose(out.profiles.wind_mw, 1.2 * case6.profiles.wind_mw)


def test_case24_range_survives_perturbation():
    c = load_case("case24")
    out = perturb_profiles(c, 0.2, 5)
    tot = out.profiles.total_load
    assert np.all(tot >= 0.8 * 1195.0 - 1e-6)
    assert np.all(tot <= 1.2 * 2116.0 + 1e-6)


@settings(max_examples=25, deadline=None)
@given(dev=st.floats(0.0, 0.99), seed=st.integers(0, 2**31 - 1))
def test_perturbation_deterministic_and_nonnegative(dev, seed):
    c = load_case("case6")
    a = perturb_profiles(c, dev, seed)
    b = perturb_profiles(c, dev, seed)
    assert np.array_equal(a.profiles.load_mw, b.profiles.load_mw)
    assert np.all(a.profiles.load_mw >= 0) and np.all(a.profiles.wind_mw >= 0)
    ratio = a.profiles.load_mw[c.profiles.load_mw > 0] / c.profiles.load_mw[c.profiles.load_mw > 0]
    assert np.all(ratio >= 1 - dev - 1e-12) and np.all(ratio <= 1 + dev + 1e-12)


def test_bad_deviation(case6):
    with pytest.raises(ValueError):
        perturb_profiles(case6, 1.5, 0)


def test_laplacian_rows_sum_zero(case6):
    L = susceptance_laplacian(case6)
    assert np.allclose(L, L.T)
    assert np.allclose(L.sum(axis=1), 0.0, atol=1e-9)


def test_isf_matches_angle_solution(case6):
    # flows from the shift factors equal flows from solving B theta = P directly
    isf = injection_shift_factors(case6)
    rng = np.random.default_rng(0)
    P = rng.normal(size=case6.n_bus)
    P -= P.mean()
    P[0] -= P.sum()
    B = susceptance_laplacian(case6) * case6.base_mva
    theta = np.zeros(case6.n_bus)
    theta[1:] = np.linalg.solve(B[1:, 1:], P[1:])
    for k, br in enumerate(case6.branches):
        i, j = case6.bus_index(br.from_bus), case6.bus_index(br.to_bus)
        flow = br.susceptance_pu * case6.base_mva * (theta[i] - theta[j])
        assert isf[k] @ P == pytest.approx(flow, abs=1e-9)
