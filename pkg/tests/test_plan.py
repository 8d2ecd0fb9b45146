import math

import pytest
from hypothesis import given, strategies as st

from aliasfree.plan import PlanError, channel_counts, layer_attenuation, plan_layers, plan_table


@pytest.fixture(scope="module")
def plan256():
    return plan_layers(256)


def test_reference_values(plan256):
    assert len(plan256) == 14
    assert plan256[0].fc == 2.0
    assert plan256[6].fc == pytest.approx(16.0, abs=1e-12)
    assert plan256[0].ft == pytest.approx(2 ** 2.1, abs=1e-12)
    assert plan256[0].s_out == 16
    assert plan256[12].fc == plan256[13].fc == 128.0
    assert plan256[13].ft == pytest.approx(128 * 2 ** 0.3)


def test_critical_layers(plan256):
    assert [l.critical for l in plan256] == [False] * 12 + [True] * 2
    for l in plan256:
        if l.critical:
            assert l.fc == l.s_out / 2


@given(st.sampled_from([4, 16, 64, 256, 1024]), st.integers(3, 20), st.integers(1, 2))
def test_invariants(s_n, n, n_crit):
    plan = plan_layers(s_n, n, n_crit)
    span = n - n_crit
    for a, b in zip(plan.layers, plan.layers[1:]):
        assert b.fc >= a.fc and b.s_out >= a.s_out
        assert b.s_in == a.s_out
    for l in plan:
        assert l.s_out <= s_n and math.log2(l.s_out) == int(math.log2(l.s_out))
        assert l.fc <= l.s_out / 2 * (1 + 1e-12)
        assert l.fh >= 0
        assert l.fc + l.fh == max(l.ft, l.s_out / 2)
    fc, ft = plan.fc, plan.ft
    if span >= 2:
        r = fc[1] / fc[0]
        rt = ft[1] / ft[0]
        for i in range(1, span):
            assert abs(fc[i + 1] / fc[i] - r) <= 1e-12
            assert abs(ft[i + 1] / ft[i] - rt) <= 1e-12


def test_invalid_parameters():
    for bad in (3, 100, 2, 0):
        with pytest.raises(PlanError):
            plan_layers(bad)
    with pytest.raises(PlanError):
        plan_layers(256, 2, 2)
    with pytest.raises(PlanError):
        plan_layers(256, 14, 0)


def test_channel_counts(plan256):
    counts = channel_counts(plan256, 2**14, 512)
    assert counts[6] == 512
    assert counts[0] == 512 and counts[-1] == 64
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert channel_counts(plan256, 1e9, 7) == [7] * 14
    assert min(channel_counts(plan256, 1, 512)) == 1
    with pytest.raises(PlanError):
        channel_counts(plan256, 0, 4)


def test_with_channels(plan256):
    p = plan256.with_channels(range(14))
    assert p.channels == list(range(14))
    with pytest.raises(PlanError):
        plan256.with_channels([1, 2])


def test_attenuation_and_table(plan256):
    assert layer_attenuation(plan256, 0) > 0
    text = plan_table(plan256.with_channels(channel_counts(plan256, 2**14, 512))).splitlines()
    assert len(text) == 15
    assert text[0].split() == ["layer", "s", "fc", "ft", "fh", "attenuation", "channels"]
