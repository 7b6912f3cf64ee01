import itertools
from collections import Counter

import numpy as np
import pytest

from ptnsim.adversary import (
    AdversaryModel,
    EveView,
    Verdict,
    conditional_entropy,
    conditional_key_distribution,
    eve_view,
    oracle_verdict,
    security_verdict,
)
from ptnsim.errors import TooLargeForOracle, UnknownSatellite
from ptnsim.keycore import KeyMaterial, compute_parity, derive_final_key
from ptnsim.qkdsession import SessionStatus, SessionTranscript


def _transcript(sid, sat, ogs, key):
    return SessionTranscript(sid, sat, ogs, 100, 50, 25, 0.0, 0, key.length, SessionStatus.OK,
                             key.with_origin(sid), key.with_origin(sid))


def make_world(n, key_len, seed):
    """Random sub-keys for n satellites, their transcripts and parities."""
    rng = np.random.default_rng(seed)
    sats = [f"C{i + 1}" for i in range(n)]
    transcripts, parities, truth = [], [], {}
    for s in sats:
        ka, kb = KeyMaterial.random(key_len, rng), KeyMaterial.random(key_len, rng)
        ta, tb = _transcript(f"{s}:A", s, "A", ka), _transcript(f"{s}:B", s, "B", kb)
        transcripts += [ta, tb]
        parities.append(compute_parity(ka, kb, satellite_id=s, session_a_id=ta.session_id, session_b_id=tb.session_id))
        truth[s] = (ka, kb)
    return sats, transcripts, parities, truth


def brute_force_counts(view: EveView, n: int, key_len: int) -> Counter:
    """Enumerate every (k_A^i, k_B^i) for all i, keep those matching the view."""
    size = 1 << key_len
    parities = [p.parity.truncate(key_len).value for p in view.parities]
    known = {
        i: tuple(k.truncate(key_len).value for k in view.known_sub_keys[p.satellite_id])
        for i, p in enumerate(view.parities)
        if p.satellite_id in view.known_sub_keys
    }
    counts = Counter()
    for assignment in itertools.product(range(size), repeat=2 * n):
        pairs = [(assignment[2 * i], assignment[2 * i + 1]) for i in range(n)]
        if any(a ^ b != parities[i] for i, (a, b) in enumerate(pairs)):
            continue
        if any(pairs[i] != kv for i, kv in known.items()):
            continue
        final = 0
        for _, b in pairs:
            final ^= b
        counts[final] += 1
    return counts


def test_empty_compromise_sees_only_parities():
    sats, tr, par, _ = make_world(3, 4, 0)
    view = eve_view(AdversaryModel(), tr, par)
    assert view.known_sub_keys == {}
    assert len(view.parities) == 3


def test_single_compromise():
    sats, tr, par, truth = make_world(3, 4, 0)
    view = eve_view(AdversaryModel({"C1"}), tr, par)
    assert set(view.known_sub_keys) == {"C1"}
    assert view.known_sub_keys["C1"] == truth["C1"]
    assert len(view.parities) == 3


def test_full_compromise_determines_final_key():
    sats, tr, par, truth = make_world(3, 2, 1)
    view = eve_view(AdversaryModel(set(sats)), tr, par)
    dist = conditional_key_distribution(view, 3, 2)
    assert dist.is_point_mass()
    true_final = derive_final_key([truth[s][1] for s in sats])
    assert dist.support() == [true_final.value]
    assert dist.entropy() == 0.0


def test_unknown_satellite():
    sats, tr, par, _ = make_world(2, 2, 0)
    with pytest.raises(UnknownSatellite):
        eve_view(AdversaryModel({"C9"}), tr, par)


def test_n3_len2_two_compromised_uniform_matches_brute_force():
    sats, tr, par, _ = make_world(3, 2, 7)
    view = eve_view(AdversaryModel({"C1", "C2"}), tr, par)
    dist = conditional_key_distribution(view, 3, 2)
    expected = brute_force_counts(view, 3, 2)
    # Only k_B^3 is free: 4 consistent assignments, one per final value.
    assert sorted(expected.items()) == [(0, 1), (1, 1), (2, 1), (3, 1)]
    assert dist.counts.tolist() == [expected[v] for v in range(4)]
    assert dist.is_uniform()


def test_n2_len1_nothing_compromised_matches_brute_force():
    sats, tr, par, _ = make_world(2, 1, 3)
    view = eve_view(AdversaryModel(), tr, par)
    dist = conditional_key_distribution(view, 2, 1)
    expected = brute_force_counts(view, 2, 1)
    # 16 assignments, 4 match both parities, split 2/2 over the final bit.
    assert sum(expected.values()) == 4
    assert dist.counts.tolist() == [expected[0], expected[1]] == [2, 2]


@pytest.mark.parametrize("n,key_len", [(1, 3), (2, 2), (3, 2), (4, 1)])
def test_every_subset_matches_brute_force(n, key_len):
    sats, tr, par, _ = make_world(n, key_len, 11 * n + key_len)
    for r in range(n + 1):
        for subset in itertools.combinations(sats, r):
            view = eve_view(AdversaryModel(set(subset)), tr, par)
            dist = conditional_key_distribution(view, n, key_len)
            expected = brute_force_counts(view, n, key_len)
            assert dist.counts.tolist() == [expected[v] for v in range(1 << key_len)]
            if r < n:
                assert dist.is_uniform()
            else:
                assert dist.is_point_mass()


def test_monotone_entropy():
    sats, tr, par, _ = make_world(4, 3, 5)
    for r in range(4):
        for subset in itertools.combinations(sats, r):
            h = conditional_entropy(eve_view(AdversaryModel(set(subset)), tr, par), 4, 3)
            for extra in set(sats) - set(subset):
                h2 = conditional_entropy(eve_view(AdversaryModel(set(subset) | {extra}), tr, par), 4, 3)
                assert h2 <= h + 1e-12


def test_oracle_bound():
    sats, tr, par, _ = make_world(5, 2, 0)
    view = eve_view(AdversaryModel(), tr, par)
    with pytest.raises(TooLargeForOracle):
        conditional_key_distribution(view, 5, 2)
    sats, tr, par, _ = make_world(2, 9, 0)
    with pytest.raises(TooLargeForOracle):
        conditional_key_distribution(eve_view(AdversaryModel(), tr, par), 2, 9)


def test_largest_bound_case_runs():
    sats, tr, par, _ = make_world(3, 8, 4)
    dist = conditional_key_distribution(eve_view(AdversaryModel({"C2"}), tr, par), 3, 8)
    assert dist.total == 1 << 16
    assert dist.is_uniform()


@pytest.mark.parametrize(
    "compromised,expected",
    [(set(), Verdict.SECURE), ({"C1", "C2"}, Verdict.SECURE), ({"C1", "C2", "C3"}, Verdict.BROKEN)],
)
def test_security_verdict(compromised, expected):
    assert security_verdict(AdversaryModel(compromised), ["C1", "C2", "C3"]) is expected


def test_verdict_agrees_with_oracle():
    sats, tr, par, _ = make_world(3, 2, 9)
    for r in range(4):
        for subset in itertools.combinations(sats, r):
            model = AdversaryModel(set(subset))
            dist = conditional_key_distribution(eve_view(model, tr, par), 3, 2)
            assert oracle_verdict(dist) is security_verdict(model, sats)


def test_distribution_flags_are_plain_bools():
    # numpy bools break json.dumps in the CLI report
    sats, tr, par, _ = make_world(2, 2, 0)
    dist = conditional_key_distribution(eve_view(AdversaryModel(), tr, par), 2, 2)
    assert type(dist.is_uniform()) is bool and type(dist.is_point_mass()) is bool
