import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from hierfl import incentive as inc
from hierfl.errors import ConfigurationError, InsufficientDataError, ScoreWarning, ShapeError, ValidationError

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------- correlation


def test_corr_perfect():
    assert inc.corr_score([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert inc.corr_score([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_corr_multicolumn_mean_of_absolutes():
    # Orthogonal, zero-mean, equal-norm y and z make per-column correlations exact by construction.
    y = np.array([1.0, 1.0, -1.0, -1.0])
    z = np.array([1.0, -1.0, 1.0, -1.0])
    x1 = 0.8 * y + 0.6 * z
    x2 = -0.4 * y + math.sqrt(0.84) * z
    assert oracles.pearson(list(x1), list(y)) == pytest.approx(0.8, abs=1e-12)
    assert oracles.pearson(list(x2), list(y)) == pytest.approx(-0.4, abs=1e-12)
    assert inc.corr_score(np.column_stack([x1, x2]), y) == pytest.approx(0.6, abs=1e-12)


def test_corr_degenerate_cases():
    assert inc.corr_score(np.column_stack([[1, 1, 1], [1, 2, 3]]), [1, 2, 3]) == pytest.approx(0.5)
    with pytest.warns(ScoreWarning):
        assert inc.corr_score([1, 2, 3], [5, 5, 5]) == 0.0
    with pytest.raises(InsufficientDataError):
        inc.corr_score([1], [1])


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(-100, 100))
def test_corr_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=20), rng.normal(size=20)
    assert inc.corr_score(a * x + b, y) == pytest.approx(inc.corr_score(x, y), abs=1e-12)


# ---------------------------------------------------------------- quantity and quality


def test_quant_score():
    assert inc.quant_score(530, 9934) == pytest.approx(0.05335, abs=5e-6)
    assert inc.quant_score(9934, 9934) == 1.0
    assert inc.quant_score(0, 9934) == 0.0
    with pytest.raises(ConfigurationError):
        inc.quant_score(0, 0)


def test_quality():
    assert inc.quality_hfl(0.5, 0.2) == pytest.approx(0.1)
    assert inc.quality_hfl(0.9, 0.0) == 0.0
    assert inc.quality_hfl(-0.5, 0.2) == pytest.approx(-0.1)
    assert inc.quality_vfl(0.7922) == 0.7922
    assert inc.quality_vfl(0.0) == 0.0
    assert inc.quality_vfl(-0.2) == -0.2
    with pytest.warns(ScoreWarning):
        shares = inc.normalize({"a": -0.1, "b": 0.3})
    assert shares == {"a": 0.0, "b": 1.0}


# ---------------------------------------------------------------- SMAPE and accuracy


def test_smape_examples():
    assert inc.smape([1, 2], [1, 2]) == 0.0
    assert inc.smape([30], [10]) == pytest.approx(1.0)
    assert inc.smape_new([30], [10]) == pytest.approx(0.5)
    assert inc.smape_new([3, 4], [3, 4]) == 0.0
    assert inc.smape_new([10], [0]) == 1.0
    assert inc.smape_new([0, 0], [0, 0]) == 0.0
    with pytest.raises(ShapeError):
        inc.smape_new([1, 2], [1])


@settings(max_examples=200)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=20))
def test_smape_properties(pairs):
    F = [p[0] for p in pairs]
    A = [p[1] for p in pairs]
    s, sn = inc.smape(F, A), inc.smape_new(F, A)
    assert 0.0 <= sn <= 1.0 and 0.0 <= s <= 2.0
    assert s == pytest.approx(2 * sn, abs=1e-12)
    assert sn == pytest.approx(inc.smape_new(A, F), abs=1e-12)
    assert sn == pytest.approx(oracles.smape_new_loop(F, A), abs=1e-12)
    assert s == pytest.approx(oracles.smape_loop(F, A), abs=1e-12)


def test_accuracy_increment():
    assert inc.accuracy(0.0) == 1.0
    assert inc.accuracy(1.0) == 0.0
    assert inc.accuracy(0.25) == 0.75
    assert inc.increment(0.9, 0.8) == pytest.approx(0.1)
    assert inc.increment(0.8, 0.8) == 0.0
    assert inc.increment(0.7, 0.8) == pytest.approx(-0.1)


# ---------------------------------------------------------------- contribution


def test_contribution_examples():
    increments = {1: 0.10, 2: 0.04, 3: 0.06}
    assert inc.contribution(increments, 1) == pytest.approx(0.05)
    assert all(inc.contribution({k: 0.3 for k in "abcd"}, j) == pytest.approx(0.3) for j in "abcd")
    assert inc.contribution({1: 0.1, 2: 0.3}, 1) == pytest.approx(0.3)
    with pytest.raises(ConfigurationError):
        inc.contribution({1: 0.1}, 1)


@settings(max_examples=100)
@given(st.dictionaries(st.integers(0, 50), st.floats(-1, 1), min_size=2, max_size=10))
def test_contribution_matches_direct(increments):
    for j in increments:
        assert inc.contribution(increments, j) == pytest.approx(
            oracles.contribution_direct(increments, j), abs=1e-12)


# ---------------------------------------------------------------- normalization and rewards


def test_normalize_two_company_shares():
    q = inc.normalize({"A": 0.0459, "B": 0.8443})
    assert q["A"] == pytest.approx(0.0516, abs=5e-3)
    assert q["B"] == pytest.approx(0.9484, abs=5e-3)
    c = inc.normalize({"A": 0.0251, "B": 0.1112})
    assert c["A"] == pytest.approx(0.1844, abs=5e-3)
    assert c["B"] == pytest.approx(0.8156, abs=5e-3)
    assert inc.normalize({"A": 0.3, "B": 0.3}) == {"A": 0.5, "B": 0.5}


def test_normalize_all_zero_falls_back_to_equal():
    with pytest.warns(ScoreWarning):
        assert inc.normalize({"a": 0.0, "b": -1.0, "c": 0.0}) == pytest.approx(
            {"a": 1 / 3, "b": 1 / 3, "c": 1 / 3})


@pytest.mark.filterwarnings("ignore::hierfl.errors.ScoreWarning")
@settings(max_examples=200)
@given(st.dictionaries(st.text(min_size=1, max_size=3), st.floats(0, 1e3), min_size=1, max_size=8))
def test_normalize_properties(values):
    shares = inc.normalize(values)
    assert math.fsum(shares.values()) == pytest.approx(1.0, abs=1e-9)
    if any(v > 0 for v in values.values()):
        for a in values:
            for b in values:
                if values[a] > values[b]:
                    assert shares[a] >= shares[b]


@settings(max_examples=100)
@given(st.lists(st.floats(0.001, 10), min_size=2, max_size=6), st.floats(0.01, 1e3))
def test_normalize_scale_invariant(vals, k):
    base = inc.normalize(dict(enumerate(vals)))
    scaled = inc.normalize({i: v * k for i, v in enumerate(vals)})
    for i in base:
        assert scaled[i] == pytest.approx(base[i], abs=1e-12)


def test_allocate_rewards():
    r = inc.allocate_rewards(100, 100, {"A": 0.0516, "B": 0.9484}, {"A": 0.5, "B": 0.5})
    assert r["A"][0] == pytest.approx(5.16) and r["B"][0] == pytest.approx(94.84)
    r = inc.allocate_rewards(100, 0, {"A": 0.5, "B": 0.5}, {"A": 0.5, "B": 0.5})
    assert all(v[1] == 0 for v in r.values())
    assert inc.allocate_rewards(7, 3, {"A": 1.0}, {"A": 1.0}) == {"A": (7.0, 3.0)}
    with pytest.raises(ConfigurationError):
        inc.allocate_rewards(-1, 0, {"A": 1.0}, {"A": 1.0})


@settings(max_examples=100)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=6), st.floats(0, 1e6), st.floats(0, 1e6))
def test_payout_conserved(vals, r_data, r_model):
    quality = {str(i): v for i, v in enumerate(vals)}
    contrib = {str(i): v for i, v in enumerate(reversed(vals))}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScoreWarning)
        cards = inc.score_from_values(quality, contrib, r_data, r_model)
    assert math.fsum(c.r_quality for c in cards) == pytest.approx(r_data, rel=1e-9, abs=1e-9)
    assert math.fsum(c.r_contribution for c in cards) == pytest.approx(r_model, rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------- full cohort


def test_injected_scores_two_companies():
    cards = inc.score_from_values({"A": 0.0459, "B": 0.8443}, {"A": 0.0251, "B": 0.1112}, 100, 100)
    by = {c.participant_id: c for c in cards}
    assert by["A"].quality_norm == pytest.approx(0.0516, abs=5e-3)
    assert by["B"].quality_norm == pytest.approx(0.9484, abs=5e-3)
    assert by["A"].contribution_norm == pytest.approx(0.1844, abs=5e-3)
    assert by["B"].contribution_norm == pytest.approx(0.8156, abs=5e-3)


def test_cohort_identical_members_share_equally():
    actual = np.array([10.0, 12.0, 9.0])
    members = [
        inc.CohortMember(pid, actual, actual * 1.1, actual * 1.05, corr=0.7, sample_count=50)
        for pid in ("a", "b", "c")
    ]
    cards = inc.evaluate_cohort(members, 90, 60, horizontal=True)
    for c in cards:
        assert c.quality_norm == pytest.approx(1 / 3)
        assert c.contribution_norm == pytest.approx(1 / 3)
        assert c.r_quality == pytest.approx(30) and c.r_contribution == pytest.approx(20)


@pytest.mark.parametrize("horizontal", [True, False])
def test_cohort_matches_scripted_oracle(horizontal):
    rng = np.random.default_rng(42)
    raw, members = [], []
    for pid, n, width in (("p1", 40, 2), ("p2", 25, 1), ("p3", 60, 3)):
        X = rng.normal(size=(n, width))
        Y = X @ rng.uniform(0.5, 2, width) + rng.normal(size=n) + 20
        A = rng.uniform(5, 30, 8)
        local = A + rng.normal(0, 4, 8)
        glob = A + rng.normal(0, 2, 8)
        raw.append({"id": pid, "X": X.tolist(), "Y": Y.tolist(), "A": A.tolist(),
                    "local": local.tolist(), "global_": glob.tolist(), "n": n})
        members.append(inc.CohortMember(pid, A, local, glob, inc.corr_score(X, Y), n))
    expected = oracles.scripted_cohort(raw, 120.0, 80.0, horizontal)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScoreWarning)
        cards = inc.evaluate_cohort(members, 120.0, 80.0, horizontal)
    assert [c.participant_id for c in cards] == ["p1", "p2", "p3"]
    for card in cards:
        exp = expected[card.participant_id]
        for key, value in exp.items():
            assert getattr(card, key) == pytest.approx(value, abs=1e-12), key
        assert card.acc_local == 1 - card.smape_new_local
        assert card.acc_global == 1 - card.smape_new_global


def test_cohort_needs_two():
    a = np.array([1.0, 2.0])
    with pytest.raises(ConfigurationError):
        inc.evaluate_cohort([inc.CohortMember("a", a, a, a, 0.5, 2)], 1, 1, True)


def test_scorecards_csv_field_order():
    cards = inc.score_from_values({"A": 1.0}, {"A": 1.0}, 10, 10)
    header, row = inc.scorecards_csv(cards).splitlines()
    assert header.split(",") == list(inc.SCORECARD_FIELDS)
    assert header.startswith("participant_id,corr_score,quant_score,quality,")
    assert row.startswith("A,,,1.0,")


def test_load_scores_csv(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("id,quality,contribution\nA,0.0459,0.0251\nB,0.8443,0.1112\n")
    q, c = inc.load_scores_csv(path)
    assert q == {"A": 0.0459, "B": 0.8443} and c == {"A": 0.0251, "B": 0.1112}
    path.write_text("id,quality,contribution\nA,0.1,0.2\nB,oops,0.1\n")
    with pytest.raises(ValidationError) as err:
        inc.load_scores_csv(path)
    assert err.value.row == 3
