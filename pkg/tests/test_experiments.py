import math

import numpy as np
import pytest

from ch2wave.errors import ConfigurationError, DomainError
from ch2wave.experiments import (ExperimentSpec, check_atlas_boundaries, expected_boundaries,
                                 run_breaking_probe, run_classification_atlas, run_dc_scan,
                                 run_experiment, run_sigma0_global, run_spectrum_table,
                                 run_stability_experiment, worker_count)
from ch2wave.params import A_LIMIT, Params, classify, shear_roots
from ch2wave.profile import first_integral

ATLAS = {"kind": "classification-atlas", "sigma": {"linspace": [-2, 4, 60]}, "A": [0.1],
         "c": {"linspace": [-5, 5, 40]}}


def scan_first_integral(p, direction):
    """Class of the wave leaving phi = 0 in ``direction`` from the sign structure of F alone.

    Walks outward until F stops being positive, bisects the sign change and
    decides between a simple zero (F -> 0) and a pole (|F| -> inf).
    """
    c, s = p.c, p.sigma
    with np.errstate(all="ignore"):
        if not first_integral(direction * 1e-9, p) > 0:
            return "NoWave", None
        phis = direction * np.geomspace(1e-9, 1e6, 30001)
        F = first_integral(phis, p)
    bad = np.flatnonzero(~(F > 0))
    if bad.size == 0:
        return "NoWave", None
    a, b = phis[bad[0] - 1], phis[bad[0]]
    for _ in range(200):
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        try:
            fm = first_integral(m, p)
        except Exception:
            b = m
            continue
        if fm > 0:
            a = m
        else:
            b = m
    crest = 0.5 * (a + b)
    fa = first_integral(a, p)
    kind = "Smooth" if fa < 1e-6 else "Cusped"
    if kind == "Cusped" and crest < 0:
        kind = "AntiCusped"
    return kind, crest


def oracle_class(p, branch):
    a1, a2 = p.roots
    if p.c > a1:
        direction = 1.0
    elif p.c < a2:
        direction = -1.0
    else:
        return "NoWave", None
    if p.sigma < 0 and branch == "singular":
        direction = -direction
    return scan_first_integral(p, direction)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"kind": "nope", "sigma": [1], "A": [1], "c": [1]})
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"kind": "dc-scan", "sigma": [], "A": [1], "c": [1]})
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"kind": "dc-scan", "sigma": [0], "A": [1], "c": [2], "x": 1})
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"sigma": [0], "A": [1], "c": [2]})
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"kind": "stability-run", "sigma": [0.5], "A": [0.1], "c": [1.5],
                                  "settings": {"N": 1000}})
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"kind": "stability-run", "sigma": [2], "A": [0.1], "c": [1.5]})
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"kind": "sigma0-global", "A": [-1]})
    spec = ExperimentSpec.from_dict({"kind": "dc-scan", "sigma": 0.5, "A": [0.1],
                                     "c": {"linspace": [1, 2, 3]}})
    assert spec.sigma == [0.5] and spec.c == [1.0, 1.5, 2.0]


def test_worker_count(monkeypatch):
    monkeypatch.setenv("CH2WAVE_THREADS", "3")
    assert worker_count(10) == 3 and worker_count(2) == 2
    monkeypatch.setenv("CH2WAVE_THREADS", "many")
    with pytest.raises(ConfigurationError):
        worker_count(4)


@pytest.fixture(scope="module")
def atlas():
    return run_classification_atlas(ExperimentSpec.from_dict(ATLAS))


def test_atlas_against_first_integral_scan(atlas):
    t = atlas.columns
    for i in range(len(t["c"])):
        p = Params(t["sigma"][i], t["A"][i], t["c"][i])
        kind, crest = oracle_class(p, t["branch"][i])
        assert t["class"][i] == kind, (p, t["branch"][i])
        if crest is not None:
            assert t["crest_value"][i] == pytest.approx(crest, rel=1e-9)


def test_atlas_agrees_with_classify(atlas):
    t = atlas.columns
    for i in range(len(t["c"])):
        wc = classify(Params(t["sigma"][i], t["A"][i], t["c"][i]), t["branch"][i])
        assert wc.kind.value == t["class"][i]


def test_atlas_boundaries(atlas):
    assert atlas.summary["boundaries_ok"]
    assert len(atlas.columns["c"]) == 60 * 40 + sum(1 for s in np.linspace(-2, 4, 60) if s < 0) * 40
    a1, a2 = shear_roots(0.1)
    for row in atlas.summary["boundary_checks"]:
        for b in row["expected"]:
            assert any(lo <= b <= hi and hi - lo <= row["cell_width"] + 1e-12
                       for lo, hi in row["cells"])


def test_atlas_rules(atlas):
    t = atlas.columns
    a1, _ = shear_roots(0.1)
    for i in range(len(t["c"])):
        s, c = t["sigma"][i], t["c"][i]
        if s >= 0 and 0 < c <= a1:
            assert t["class"][i] == "NoWave"
        if s > 1 and c > a1:
            assert t["crest_value"][i] == pytest.approx(min(c - a1, c / s), rel=1e-14)
    assert all(math.isnan(v) for v in t["decay_fit"])


def test_atlas_peaked_spot_check():
    res = run_classification_atlas(ExperimentSpec.from_dict(
        {"kind": "classification-atlas", "sigma": [2.0], "A": [A_LIMIT], "c": [1.5, 2.0, 3.0],
         "settings": {"fit_profiles": True, "N": 4096}}))
    assert res.columns["class"] == ["Smooth", "Peaked", "Cusped"]
    assert res.columns["crest_value"][1] == 1.0
    assert res.columns["decay_fit"][0] == pytest.approx(Params(2, A_LIMIT, 1.5).decay_rate, rel=0.02)
    assert res.columns["residual"][0] < 1e-6


def test_boundary_check_detects_errors():
    table = {"sigma": [0.5] * 4, "A": [0.1] * 4, "c": [0.5, 0.9, 1.0, 1.1], "branch": ["smooth"] * 4,
             "class": ["NoWave", "Smooth", "Smooth", "Smooth"]}
    assert not check_atlas_boundaries([0.5], [0.1], table["c"], table)[0]["ok"]
    table["class"] = ["NoWave", "NoWave", "Smooth", "Smooth"]
    assert check_atlas_boundaries([0.5], [0.1], table["c"], table)[0]["ok"]
    assert expected_boundaries(2.0, A_LIMIT) == pytest.approx([-2, -1, 1, 2])


def test_dc_scan_runner():
    res = run_dc_scan(ExperimentSpec.from_dict(
        {"kind": "dc-scan", "sigma": [0.0, 0.5], "A": [0.1], "c": [1.2, 2.0],
         "settings": {"N": 2048}}))
    assert res.summary["all_convex"] and res.summary["max_route_disagreement"] < 1e-4
    assert res.columns["sigma"] == [0.0, 0.0, 0.5, 0.5]


def test_spectrum_table_runner():
    res = run_spectrum_table(ExperimentSpec.from_dict(
        {"kind": "spectrum-table", "sigma": [0.5], "A": [0.1], "c": [1.5, 3.0],
         "settings": {"N": 2048}}))
    assert res.summary["all_one_negative"]
    assert res.summary["min_kernel_alignment"] >= 0.999
    with pytest.raises(DomainError):
        run_spectrum_table(ExperimentSpec.from_dict(
            {"kind": "spectrum-table", "sigma": [2.0], "A": [0.1], "c": [5.0]}))


def test_stability_runner():
    spec = ExperimentSpec.from_dict(
        {"kind": "stability-run", "sigma": [0.5], "A": [0.1], "c": [1.5],
         "settings": {"N": 512, "T": 3.0, "epsilons": [0.0, 0.005, 0.01]}})
    res = run_stability_experiment(spec)
    t = res.columns
    assert t["max_distance"][0] <= 1e-3 * t["max_distance"][2] / t["relative_max_distance"][2]
    assert res.summary["monotone_in_epsilon"]
    assert 1.5 <= t["max_distance"][2] / t["max_distance"][1] <= 3
    with pytest.raises(DomainError):
        run_stability_experiment(ExperimentSpec.from_dict(
            {"kind": "stability-run", "sigma": [0.5], "A": [0.1], "c": [0.5]}))


def test_sigma0_runner():
    res = run_sigma0_global(ExperimentSpec.from_dict(
        {"kind": "sigma0-global", "A": [0.1, 1.0], "settings": {"N": 256, "T": 4.0}}))
    assert res.summary["all_within_bounds"] and not res.summary["any_blowup"]
    assert set(res.extra_tables["series"]) == {"A", "t", "sup_ux", "inf_ux", "upper", "lower"}


def test_breaking_probe_runner():
    res = run_breaking_probe(ExperimentSpec.from_dict(
        {"kind": "breaking-probe", "sigma": [2.0], "A": [0.1],
         "settings": {"N": 512, "blowup_threshold": 8.0, "T_control": 3.0}}))
    t = res.columns
    assert t["control"] == [True, False]
    assert t["blowup_flag"] == [False, True]
    assert t["relative_change"][1] < 0.05
    assert not res.summary["control_flagged"]


@pytest.mark.parametrize("spec", [
    ATLAS,
    {"kind": "stability-run", "sigma": [0.5], "A": [0.1], "c": [1.5, 2.0],
     "settings": {"N": 256, "T": 1.0, "epsilons": [0.01], "random_center": True}, "seed": 3},
])
def test_determinism_across_thread_counts(tmp_path, monkeypatch, spec):
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("CH2WAVE_THREADS", threads)
        res = run_experiment(ExperimentSpec.from_dict(spec))
        outs.append(res.write(tmp_path / threads)[0].read_bytes())
    assert outs[0] == outs[1]
