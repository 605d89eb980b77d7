"""Protocol runner: parameters, commitments, transmission, the test,
set choice, decoding, transcripts, and the two execution modes."""

import json

import numpy as np
import pytest

from qotsim import attacks, gf2, protocol, quantum
from qotsim.errors import (
    DimensionError,
    DomainError,
    ProtocolViolation,
    ResourceError,
)


def make_params(**kw):
    base = dict(n=24, m=1, r=1, delta=0.25, N=4, mode=protocol.Mode.CLASSICAL_FAST, seed=1)
    base.update(kw)
    return protocol.ProtocolParams(**base)


# ---------------------------------------------------------------------------
# parameters and channel

def test_params_defaults():
    p = protocol.ProtocolParams(n=50, m=1, r=1, delta=0.05)
    assert p.N == 12  # floor(0.24 * 50)
    assert p.epsilon == 0.4  # 8 * delta
    assert p.mode is protocol.Mode.CLASSICAL_FAST


def test_params_validation():
    with pytest.raises(DomainError):
        protocol.ProtocolParams(n=0, m=1, r=0, delta=0.1, N=1)
    with pytest.raises(DomainError):
        protocol.ProtocolParams(n=8, m=0, r=0, delta=0.1, N=2)
    with pytest.raises(DomainError):
        protocol.ProtocolParams(n=8, m=1, r=-1, delta=0.1, N=2)
    with pytest.raises(DomainError):
        protocol.ProtocolParams(n=8, m=1, r=0, delta=-0.1, N=2)
    with pytest.raises(DomainError):
        protocol.ProtocolParams(n=8, m=2, r=1, delta=0.1, N=2)  # r+m > N
    with pytest.raises(DomainError):
        protocol.ProtocolParams(n=8, m=1, r=0, delta=0.1, N=2, noise_p=0.5)
    with pytest.raises(DomainError):
        protocol.ProtocolParams(n=3, m=1, r=0, delta=0.1)  # default N = 0


def test_params_mode_coercion_and_channel():
    p = protocol.ProtocolParams(n=8, m=1, r=0, delta=0.1, N=2, mode="EXACT_QUANTUM")
    assert p.mode is protocol.Mode.EXACT_QUANTUM
    assert p.channel().kind is protocol.ChannelKind.NOISELESS
    noisy = make_params(noise_p=0.1).channel()
    assert noisy.kind is protocol.ChannelKind.BITFLIP and noisy.p == 0.1


def test_channel_model_validation():
    with pytest.raises(DomainError):
        protocol.ChannelModel.bitflip(-0.1)
    with pytest.raises(DomainError):
        protocol.ChannelModel.bitflip(1.1)


# ---------------------------------------------------------------------------
# commitments

def test_oracle_binding_and_tracking():
    oracle = protocol.CommitmentOracle()
    cid = oracle.commit("1011")
    assert oracle.opened_positions(cid) == []
    assert np.array_equal(oracle.open(cid, [0, 2]), [1, 1])
    assert np.array_equal(oracle.open(cid, [3]), [1])
    assert oracle.opened_positions(cid) == [0, 2, 3]
    with pytest.raises(ProtocolViolation):
        oracle.open(cid + 1, [0])
    with pytest.raises(ProtocolViolation):
        oracle.opened_positions(99)


def test_basis_angle():
    assert protocol.basis_angle(quantum.PLUS) == 0.0
    assert protocol.basis_angle(quantum.CROSS) == pytest.approx(np.pi / 4)


# ---------------------------------------------------------------------------
# transmission and measurement

def test_transmit_noiseless_keeps_the_encoding():
    dispatch, _ = protocol.transmit(
        "1010", "0101", protocol.ChannelModel.noiseless(),
        protocol.Mode.CLASSICAL_FAST, np.random.default_rng(0),
    )
    assert not dispatch.flips.any()
    assert np.array_equal(dispatch.encoded, gf2.bits("1010"))


def test_transmit_statevector_cap():
    w = np.zeros(21, dtype=np.uint8)
    with pytest.raises(ResourceError):
        protocol.transmit(
            w, w, protocol.ChannelModel.noiseless(),
            protocol.Mode.EXACT_QUANTUM, np.random.default_rng(0),
        )


def test_transmit_bitflip_flips_the_encoded_bit():
    rng = np.random.default_rng(5)
    dispatch, reception = protocol.transmit(
        "00000000", "00000000", protocol.ChannelModel.bitflip(0.49),
        protocol.Mode.CLASSICAL_FAST, rng,
    )
    assert dispatch.flips.any()
    i = int(np.nonzero(dispatch.flips)[0][0])
    out = reception.measure_basis(i, quantum.PLUS, np.random.default_rng(1))
    assert out == 1  # matched-basis measurement sees the flipped bit


class CountingRng:
    def __init__(self):
        self.calls = 0

    def random(self, *a):
        self.calls += 1
        return 0.42


@pytest.mark.parametrize("mode", [protocol.Mode.CLASSICAL_FAST, protocol.Mode.EXACT_QUANTUM])
def test_reception_consumes_one_uniform_per_measurement(mode):
    _, reception = protocol.transmit(
        "10", "01", protocol.ChannelModel.noiseless(), mode, np.random.default_rng(0),
    )
    rng = CountingRng()
    reception.measure_basis(0, quantum.PLUS, rng)
    reception.measure_basis(1, quantum.CROSS, rng)
    assert rng.calls == 2


@pytest.mark.parametrize("mode", [protocol.Mode.CLASSICAL_FAST, protocol.Mode.EXACT_QUANTUM])
def test_reception_matched_basis_is_faithful_and_repeatable(mode):
    w, theta = gf2.bits("1001"), gf2.bits("0110")
    _, reception = protocol.transmit(
        w, theta, protocol.ChannelModel.noiseless(), mode, np.random.default_rng(0),
    )
    rng = np.random.default_rng(9)
    outs = [reception.measure_basis(i, int(theta[i]), rng) for i in range(4)]
    assert np.array_equal(outs, w)
    again = [reception.measure_basis(i, int(theta[i]), rng) for i in range(4)]
    assert np.array_equal(again, w)
    with pytest.raises(DomainError):
        reception.measure_basis(4, 0, rng)


# ---------------------------------------------------------------------------
# the test and the set choice

def build_opened(w, theta, theta_hat, w_hat):
    oracle = protocol.CommitmentOracle()
    tid = oracle.commit(theta_hat)
    wid = oracle.commit(w_hat)
    return oracle, tid, wid


def test_alice_test_counts_matched_positions_only():
    w = gf2.bits("00000000")
    theta = gf2.bits("00000000")
    theta_hat = gf2.bits("00001111")  # last four mismatched
    w_hat = gf2.bits("11000011")
    oracle, tid, wid = build_opened(w, theta, theta_hat, w_hat)
    passed, errors = protocol.alice_test(
        w, theta, wid, tid, range(8), 0.25, oracle
    )
    assert errors == 2  # the two matched disagreements, mismatches are free
    assert passed  # 2 <= 0.25 * 8


def test_alice_test_boundary_is_inclusive():
    w = gf2.bits("0000")
    theta = gf2.bits("0000")
    w_hat = gf2.bits("1000")
    oracle, tid, wid = build_opened(w, theta, theta, w_hat)
    passed, errors = protocol.alice_test(w, theta, wid, tid, range(4), 0.25, oracle)
    assert errors == 1 and passed  # exactly delta * n
    w_hat2 = gf2.bits("1100")
    oracle2, tid2, wid2 = build_opened(w, theta, theta, w_hat2)
    passed2, errors2 = protocol.alice_test(w, theta, wid2, tid2, range(4), 0.25, oracle2)
    assert errors2 == 2 and not passed2


def test_alice_test_only_opens_r():
    w = gf2.bits("0000")
    oracle, tid, wid = build_opened(w, w, w, w)
    protocol.alice_test(w, w, wid, tid, [1, 3], 0.5, oracle)
    assert oracle.opened_positions(wid) == [1, 3]
    assert oracle.opened_positions(tid) == [1, 3]


@pytest.mark.parametrize("trial", range(10))
def test_partition_properties(trial):
    rng = np.random.default_rng(1400 + trial)
    n, N = 24, 3
    theta = gf2.random_bits(rng, n)
    theta_hat = gf2.random_bits(rng, n)
    R = np.nonzero(rng.random(n) < 0.5)[0]
    part = protocol.partition_and_choose_sets(theta, theta_hat, R, N, rng)
    assert np.array_equal(np.sort(np.concatenate([part.T0, part.T1])), np.arange(n))
    assert np.array_equal(part.T0, np.nonzero(theta == theta_hat)[0])
    if part.shortage:
        assert part.E0 is None and part.announced is None
        return
    for side, pool in ((part.E0, part.T0), (part.E1, part.T1)):
        assert side.size == N
        assert np.all(np.isin(side, pool))
        assert not np.any(np.isin(side, R))
    ids = {id(s) for s in part.announced}
    assert ids == {id(part.E0), id(part.E1)}


def test_partition_shortage_when_one_side_is_empty():
    theta = gf2.bits("0000")
    part = protocol.partition_and_choose_sets(
        theta, theta, [], 2, np.random.default_rng(0)
    )
    assert part.shortage and part.T1.size == 0


# ---------------------------------------------------------------------------
# correction and decoding

def test_announce_correction_hand_example():
    g = gf2.bitmatrix(["110"])
    h = gf2.bitmatrix(["011"])
    w = gf2.bits("10110")
    s, a = protocol.alice_announce_correction([1], w, [0, 2, 4], g, h)
    u = w[[0, 2, 4]]  # 110
    assert np.array_equal(s, gf2.matvec(g, u))
    assert np.array_equal(a, gf2.bits([1]) ^ gf2.matvec(h, u))
    with pytest.raises(DimensionError):
        protocol.alice_announce_correction([1], w, [0, 2], g, h)
    with pytest.raises(DimensionError):
        protocol.alice_announce_correction([1, 0], w, [0, 2, 4], g, h)


def test_bob_decode_exact_copy():
    g = gf2.bitmatrix(["110", "011"])
    h = gf2.bitmatrix(["101"])
    u = gf2.bits("101")  # w restricted to positions 0, 2, 4
    s, a = protocol.alice_announce_correction([1], "10001", [0, 2, 4], g, h)
    b_hat, corrected = protocol.bob_decode(u, s, g, a, h)
    assert np.array_equal(corrected, u)
    assert np.array_equal(b_hat, [1])


def test_bob_decode_corrects_one_error():
    g = gf2.bitmatrix(["1110", "0111"])  # kernel words have weight >= 2
    h = gf2.bitmatrix(["1000"])
    u = gf2.bits("1010")
    s = gf2.matvec(g, u)
    a = gf2.bits([0]) ^ gf2.matvec(h, u)
    damaged = u.copy()
    damaged[2] ^= 1
    b_hat, corrected = protocol.bob_decode(damaged, s, g, a, h)
    assert np.array_equal(corrected, u)
    assert np.array_equal(b_hat, [0])


def test_bob_decode_breaks_ties_lexicographically():
    g = gf2.bitmatrix(["11"])
    s = gf2.bits([0])  # solutions 00 and 11, both at distance 1 from 10
    b_hat, corrected = protocol.bob_decode("10", s, g, [0], gf2.bitmatrix(["01"]))
    assert np.array_equal(corrected, [0, 0])
    assert np.array_equal(b_hat, [0])


def test_bob_decode_unsolvable_and_cap():
    b_hat, corrected = protocol.bob_decode("00", [1], gf2.bitmatrix(["00"]), [0], gf2.bitmatrix(["01"]))
    assert b_hat is None and corrected is None
    wide = np.zeros((0, 21), dtype=np.uint8)
    with pytest.raises(ResourceError):
        protocol.bob_decode(np.zeros(21, dtype=np.uint8), [], wide, [0], np.ones((1, 21), dtype=np.uint8))


@pytest.mark.parametrize("trial", range(15))
def test_bob_decode_is_maximum_likelihood(trial):
    rng = np.random.default_rng(1500 + trial)
    width = int(rng.integers(2, 7))
    g = gf2.random_bitmatrix(rng, int(rng.integers(1, 4)), width)
    u = gf2.random_bits(rng, width)
    s = gf2.matvec(g, u)
    h = gf2.random_bitmatrix(rng, 1, width)
    target = gf2.random_bits(rng, width)
    _, corrected = protocol.bob_decode(target, s, g, [0], h)
    assert np.array_equal(gf2.matvec(g, corrected), s)
    particular, kern = gf2.solve_affine(g, s)
    best = min(
        gf2.hamming_distance(particular ^ combo, target)
        for combo in _span(kern, width)
    )
    assert gf2.hamming_distance(corrected, target) == best


def _span(kern, width):
    out = [np.zeros(width, dtype=np.uint8)]
    for row in kern:
        out = out + [v ^ row for v in out]
    return out


# ---------------------------------------------------------------------------
# full runs

def test_honest_noiseless_roundtrip():
    tr = protocol.run_string_qot(make_params(), [1], force_c=0)
    assert tr.passed and tr.abort_reason is None
    assert tr.c == 0
    assert np.array_equal(tr.b_hat, tr.b)
    assert tr.test_errors == 0
    s_expected = gf2.matvec(tr.f[:1], tr.w[tr.E_c])
    assert np.array_equal(tr.s, s_expected)


def test_force_c_selects_the_set():
    for c in (0, 1):
        tr = protocol.run_string_qot(make_params(seed=3), [0], force_c=c)
        if tr.abort_reason is not None:
            continue
        assert tr.c == c
        expected = tr.E0 if c == 0 else tr.E1
        assert np.array_equal(tr.E_c, expected)
    with pytest.raises(DomainError):
        protocol.run_string_qot(make_params(), [0], force_c=2)


def test_no_transfer_branch_has_no_decode():
    tr = protocol.run_string_qot(make_params(seed=5), [1], force_c=1)
    if tr.abort_reason is None:
        assert tr.c == 1
        assert tr.b_hat is None


def test_announce_rest_covers_the_complement():
    tr = protocol.run_string_qot(make_params(seed=7), [1], force_c=0, announce_rest=True)
    assert tr.abort_reason is None
    rest = tr.announced_rest
    assert np.array_equal(rest["positions"], gf2.complement_positions(tr.E_c, 24))
    assert np.array_equal(rest["bits"], tr.w[rest["positions"]])


def test_abort_on_test_failure():
    params = make_params(delta=0.0, noise_p=0.4, seed=11)
    tr = protocol.run_string_qot(params, [1])
    assert tr.abort_reason == protocol.TEST_FAILED
    assert not tr.passed
    assert tr.E0 is None and tr.c is None and tr.b_hat is None


def test_abort_on_set_shortage():
    # N equal to half of n cannot leave enough untested candidates per side
    for seed in range(30):
        tr = protocol.run_string_qot(
            protocol.ProtocolParams(n=8, m=1, r=1, delta=0.5, N=4, seed=seed), [1]
        )
        if tr.abort_reason == protocol.SET_SHORTAGE:
            assert tr.passed  # shortage is distinct from failing the test
            assert tr.T0 is not None and tr.E0 is None
            return
    raise AssertionError("no shortage found across seeds")


def test_qkd_announces_one_set_only():
    tr = protocol.run_qkd(make_params(seed=13))
    assert tr.protocol == "qkd"
    assert tr.c == 0 and tr.E1 is None
    assert len(tr.announced_sets) == 1
    assert tr.b.size == 1
    if tr.abort_reason is None:
        assert np.array_equal(tr.b_hat, tr.b)


def test_qkd_and_qot_share_the_machinery_under_one_seed():
    params = make_params(seed=12)
    kd = protocol.run_qkd(params)
    assert kd.abort_reason is None
    ot = protocol.run_string_qot(params, kd.b, force_c=0)
    for field in ("w", "theta", "theta_hat", "w_hat", "R", "E0", "s", "a", "b_hat"):
        assert np.array_equal(getattr(kd, field), getattr(ot, field)), field


def test_runs_are_deterministic_given_the_seed():
    params = make_params(seed=19, noise_p=0.05)
    a = protocol.run_string_qot(params, [1], bob=attacks.fixed_basis(0.2))
    b = protocol.run_string_qot(params, [1], bob=attacks.fixed_basis(0.2))
    assert a.to_json() == b.to_json()


@pytest.mark.parametrize("noise_p", [0.0, 0.1])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_modes_agree_run_for_run_on_honest_runs(noise_p, seed):
    """Matched-basis measurements are deterministic and mismatched ones
    consume one uniform either way, so the two implementations replay the
    same transcript from the same seed."""
    common = dict(n=10, m=1, r=1, delta=0.3, N=2, noise_p=noise_p, seed=seed)
    fast = protocol.run_string_qot(
        protocol.ProtocolParams(mode=protocol.Mode.CLASSICAL_FAST, **common), [1]
    )
    exact = protocol.run_string_qot(
        protocol.ProtocolParams(mode=protocol.Mode.EXACT_QUANTUM, **common), [1]
    )
    da = json.loads(fast.to_json())
    db = json.loads(exact.to_json())
    assert da["params"].pop("mode") != db["params"].pop("mode")
    assert da == db


def test_pinned_code_replaces_the_drawn_matrix():
    params = make_params(seed=23)
    code = gf2.LinearCode(f=gf2.bitmatrix(["1010", "0101"]), r=1, m=1)
    tr = protocol.run_string_qot(params, [1], code=code)
    assert np.array_equal(tr.f, code.f)
    free = protocol.run_string_qot(params, [1])
    assert np.array_equal(free.w, tr.w)  # the stream draws stay aligned
    bad = gf2.LinearCode(f=gf2.bitmatrix(["101"]), r=0, m=1)
    with pytest.raises(DimensionError):
        protocol.run_string_qot(params, [1], code=bad)


def test_transcript_roundtrip_preserves_everything():
    params = protocol.ProtocolParams(
        n=8, m=1, r=1, delta=0.25, N=2, noise_p=0.1,
        mode=protocol.Mode.EXACT_QUANTUM, seed=29,
    )
    tr = None
    for seed in range(40):
        cand = protocol.run_string_qot(
            protocol.ProtocolParams(
                n=8, m=1, r=1, delta=0.25, N=2, noise_p=0.1,
                mode=protocol.Mode.EXACT_QUANTUM, seed=seed,
            ),
            [1], bob=attacks.store_subset(positions=[1, 4]), force_c=0,
            announce_rest=True,
        )
        if cand.abort_reason is None:
            tr = cand
            break
    assert tr is not None
    back = protocol.Transcript.from_json(tr.to_json())
    assert back.to_json() == tr.to_json()
    assert back.deferred == tr.deferred  # keys back to ints
    assert all(isinstance(k, int) for k in back.bob_values)
    assert np.array_equal(back.f, tr.f)
    assert back.params == tr.params
