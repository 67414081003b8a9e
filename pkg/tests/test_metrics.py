import numpy as np
import pytest
from hypothesis import given, strategies as st

from drillnav.errors import EmptyInput
from drillnav.metrics import ErrorReport, aggregate
from drillnav.se3 import PoseError

values = st.floats(0.0, 50.0, allow_nan=False)
errors = st.lists(st.builds(PoseError, values, values, values, values), min_size=1, max_size=30)


def positions(*mm):
    return [PoseError(v, 0.0, 0.0, 0.0) for v in mm]


def test_single_sample():
    row = aggregate(positions(1.0), "rigid")[("rigid", "position")]
    assert (row.mean, row.std, row.n, row.unit, row.single_sample) == (1.0, 0.0, 1, "mm", True)


def test_sample_std_uses_n_minus_one():
    rows = aggregate(positions(1.0, 2.0, 3.0), "rigid")
    assert rows[("rigid", "position")].mean == 2.0
    assert rows[("rigid", "position")].std == 1.0
    assert rows[("rigid", "yaw")].unit == "deg"
    assert not rows[("rigid", "yaw")].single_sample


def test_empty_input():
    with pytest.raises(EmptyInput):
        aggregate([], "rigid")


def test_matches_numpy():
    rng = np.random.default_rng(0)
    errs = [PoseError(*rng.uniform(0, 3, 4)) for _ in range(25)]
    rows = aggregate(errs, "flexible")
    pitch = [e.pitch for e in errs]
    assert rows[("flexible", "pitch")].mean == pytest.approx(np.mean(pitch), abs=1e-12)
    assert rows[("flexible", "pitch")].std == pytest.approx(np.std(pitch, ddof=1), abs=1e-12)


@given(errors, st.randoms(use_true_random=False))
def test_permutation_invariant(errs, rnd):
    shuffled = list(errs)
    rnd.shuffle(shuffled)
    a, b = aggregate(errs, "rigid"), aggregate(shuffled, "rigid")
    for key in a:
        assert b[key].mean == pytest.approx(a[key].mean, rel=1e-12, abs=1e-12)
        assert b[key].std == pytest.approx(a[key].std, rel=1e-9, abs=1e-9)


@given(errors)
def test_appending_the_mean(errs):
    before = aggregate(errs, "rigid")
    m = {k[1]: r.mean for k, r in before.items()}
    after = aggregate(errs + [PoseError(m["position"], m["roll"], m["pitch"], m["yaw"])], "rigid")
    for key in before:
        assert after[key].mean == pytest.approx(before[key].mean, rel=1e-12, abs=1e-12)
        assert after[key].std <= before[key].std + 1e-12


def test_markdown_layout():
    report = ErrorReport.from_errors({"rigid": positions(1.0, 1.28), "flexible": positions(1.5, 2.0)},
                                     {"noise_preset": "table1"})
    md = report.to_markdown().splitlines()
    assert md[0] == "| Error | Rigid Drill Tip | Flexible Drill Tip |"
    assert md[2] == "| Position | 1.14 ± 0.20 mm | 1.75 ± 0.35 mm |"
    assert [line.split(" |")[0] for line in md[2:]] == ["| Position", "| Roll", "| Pitch", "| Yaw"]
    doc = report.to_dict()
    assert doc["metadata"] == {"noise_preset": "table1"}
    assert doc["rows"]["rigid"]["position"]["n"] == 2


def test_markdown_single_tool():
    md = ErrorReport.from_errors({"flexible": positions(1.0)}).to_markdown()
    assert md.splitlines()[0] == "| Error | Flexible Drill Tip |"
