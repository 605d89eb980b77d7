"""Receiver and channel strategies, small-distance diagnostics, and the
information account against the transfer-security criterion.

The security quantity is I(B; V | Pass=1, C=1) * Pr(Pass=1): what the
receiver's whole view tells him about the string on the branch where the
protocol promises him nothing, discounted by the chance of surviving the
test. The exact engine enumerates that quantity in closed form instead of
sampling it, by two reductions:

* b enters the view only through a = b xor t with t = h w[E_c], so the
  conditional entropy of B given a view depends on the view only through
  the posterior it induces on t (and the announced a). Every view
  collapses to a small "class" determining that posterior.
* positions are exchangeable given their per-position roles, so the
  probability of (test outcome, set shortage, E_1 landing on a given
  position set) factors into multinomial weights over role counts, with
  the candidate E_1 sets enumerated outright (C(n, N) of them).

Exactness requires the final announcement of w outside E_c to be on (the
generous-view convention), which only helps the receiver; the engine
therefore upper-bounds the plain protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from itertools import combinations, product
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import gf2, protocol, quantum
from .errors import DimensionError, DomainError, ModeError, ResourceError
from .streams import stream

INFO_MAX_N = 10
INFO_MAX_SIDE = 3  # N
INFO_MAX_M = 2
DEFECT_MAX_N = 12


class StrategyKind(Enum):
    HONEST = "HONEST"
    STORE_SUBSET = "STORE_SUBSET"
    FIXED_BASIS = "FIXED_BASIS"
    RANDOM_OK = "RANDOM_OK"


@dataclass(frozen=True)
class AttackStrategy:
    """Receiver behavior during the photon phase.

    HONEST measures everything in the committed bases. STORE_SUBSET keeps
    the photons in F unmeasured until the bases are announced and commits
    a uniformly random outcome bit for each of them. FIXED_BASIS measures
    every photon at one fixed angle. RANDOM_OK tosses a single coin and
    stores every photon when it lands 1, otherwise plays honestly.
    """

    kind: StrategyKind
    positions: Optional[tuple] = None  # STORE_SUBSET explicit F
    count: Optional[int] = None        # STORE_SUBSET random-k variant
    angle: Optional[float] = None      # FIXED_BASIS

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "positions": None if self.positions is None else list(self.positions),
            "count": self.count,
            "angle": self.angle,
        }


def honest() -> AttackStrategy:
    return AttackStrategy(kind=StrategyKind.HONEST)


def store_subset(positions=None, count: Optional[int] = None) -> AttackStrategy:
    if (positions is None) == (count is None):
        raise DomainError("give exactly one of positions or count")
    if positions is not None:
        positions = tuple(int(i) for i in np.unique(np.asarray(positions, dtype=np.int64)))
    elif count < 0:
        raise DomainError("count may not be negative")
    return AttackStrategy(kind=StrategyKind.STORE_SUBSET, positions=positions, count=count)


def fixed_basis(angle: float) -> AttackStrategy:
    return AttackStrategy(kind=StrategyKind.FIXED_BASIS, angle=float(angle))


def random_ok() -> AttackStrategy:
    return AttackStrategy(kind=StrategyKind.RANDOM_OK)


@dataclass
class BobRecord:
    """Commitments plus the deferred-state handle for one run.

    pending lists the positions whose photons are still unmeasured; they
    are resolved by finish_deferred once the encoding bases are announced.
    runtime carries strategy data that only exists at run time (the chosen
    store set, the coin), merged into the transcript's strategy record.
    """

    theta_hat: np.ndarray
    w_hat: np.ndarray
    theta_hat_commit: int
    w_hat_commit: int
    outcomes: Dict[int, int]
    pending: tuple
    runtime: dict


def _store_set(strategy: AttackStrategy, n: int, rng) -> np.ndarray:
    if strategy.positions is not None:
        f = gf2.position_set(strategy.positions, n)
    else:
        if strategy.count > n:
            raise DomainError("cannot store more photons than were sent")
        f = np.sort(rng.choice(n, size=strategy.count, replace=False))
    return f


def apply_strategy(
    strategy: AttackStrategy,
    reception: protocol.Reception,
    theta_hat_policy,
    oracle: protocol.CommitmentOracle,
    rng: np.random.Generator,
) -> BobRecord:
    """Run the photon phase of the given strategy and register both
    commitments. Draw order is fixed: bases, then strategy choices, then
    measurements in position order, then filler outcome bits.

    Quantum storage exists only in EXACT_QUANTUM mode; a strategy that
    actually requests storage under CLASSICAL_FAST raises a mode error.
    """
    n = reception.n
    if theta_hat_policy is None:
        theta_hat = gf2.random_bits(rng, n)
    else:
        theta_hat = quantum.basis_string(theta_hat_policy(n, rng), length=n)

    outcomes: Dict[int, int] = {}
    pending: tuple = ()
    runtime: dict = {}
    w_hat = np.zeros(n, dtype=np.uint8)

    if strategy.kind is StrategyKind.HONEST:
        for i in range(n):
            outcomes[i] = reception.measure_basis(i, int(theta_hat[i]), rng)
            w_hat[i] = outcomes[i]
    elif strategy.kind is StrategyKind.STORE_SUBSET:
        f = _store_set(strategy, n, rng)
        if f.size and reception.mode is not protocol.Mode.EXACT_QUANTUM:
            raise ModeError("photon storage requires EXACT_QUANTUM")
        stored = np.zeros(n, dtype=bool)
        stored[f] = True
        for i in range(n):
            if not stored[i]:
                outcomes[i] = reception.measure_basis(i, int(theta_hat[i]), rng)
                w_hat[i] = outcomes[i]
        pads = gf2.random_bits(rng, int(f.size))
        w_hat[f] = pads
        pending = tuple(int(i) for i in f)
        runtime["stored"] = list(pending)
    elif strategy.kind is StrategyKind.FIXED_BASIS:
        for i in range(n):
            outcomes[i] = reception.measure(i, strategy.angle, rng)
            w_hat[i] = outcomes[i]
    elif strategy.kind is StrategyKind.RANDOM_OK:
        coin = int(rng.integers(0, 2))
        runtime["coin_ok"] = coin
        if coin == 1:
            if reception.mode is not protocol.Mode.EXACT_QUANTUM:
                raise ModeError("photon storage requires EXACT_QUANTUM")
            w_hat = gf2.random_bits(rng, n)
            pending = tuple(range(n))
            runtime["stored"] = list(pending)
        else:
            for i in range(n):
                outcomes[i] = reception.measure_basis(i, int(theta_hat[i]), rng)
                w_hat[i] = outcomes[i]
    else:
        raise DomainError(f"unknown strategy kind {strategy.kind}")

    tid = oracle.commit(theta_hat)
    wid = oracle.commit(w_hat)
    return BobRecord(
        theta_hat=theta_hat, w_hat=w_hat, theta_hat_commit=tid, w_hat_commit=wid,
        outcomes=outcomes, pending=pending, runtime=runtime,
    )


def finish_deferred(
    record: BobRecord, reception: protocol.Reception, theta: np.ndarray, rng
) -> Dict[int, int]:
    """Measure the stored photons in the now-announced encoding bases."""
    theta = quantum.basis_string(theta, length=reception.n)
    out: Dict[int, int] = {}
    for i in record.pending:
        out[i] = reception.measure_basis(i, int(theta[i]), rng)
    return out


def eve_intercept(
    eve: AttackStrategy, reception: protocol.Reception, rng: np.random.Generator
) -> dict:
    """Intercept-resend on the channel: measure each photon, pass the
    collapsed state on. HONEST intercepts in fresh random bases per
    photon; FIXED_BASIS at its angle. Storage strategies have no channel
    counterpart."""
    n = reception.n
    if eve.kind is StrategyKind.HONEST:
        bases = gf2.random_bits(rng, n)
        outs = [reception.measure_basis(i, int(bases[i]), rng) for i in range(n)]
        return {
            "kind": "HONEST",
            "bases": quantum.basis_text(bases),
            "outcomes": "".join(str(o) for o in outs),
        }
    if eve.kind is StrategyKind.FIXED_BASIS:
        outs = [reception.measure(i, eve.angle, rng) for i in range(n)]
        return {
            "kind": "FIXED_BASIS",
            "angle": eve.angle,
            "outcomes": "".join(str(o) for o in outs),
        }
    raise DomainError("channel strategies are HONEST or FIXED_BASIS")


# ---------------------------------------------------------------------------
# storage-attack test statistics

@dataclass(frozen=True)
class StoreTestStats:
    expected: float
    empirical_mean: float
    std_error: float
    trials: int
    stored: int


def store_attack_test_statistics(
    params: protocol.ProtocolParams, fraction_f: float, trials: int, rng
) -> StoreTestStats:
    """Expected and empirical counts of test errors caused by storage.

    A stored photon trips the test only when it lands in R (coin 1/2), its
    bases match (1/2), and the committed filler bit disagrees with the
    encoded bit (1/2): one error per eight stored photons on average. The
    Monte Carlo draws those coins directly (the exact marginal of the full
    run), plus channel flips on the honestly measured positions.
    """
    if not 0.0 <= fraction_f <= 1.0:
        raise DomainError("fraction must lie in [0, 1]")
    if trials < 1:
        raise DomainError("trials must be positive")
    n, p = params.n, params.noise_p
    stored = round(fraction_f * n)
    rest = n - stored
    in_r = rng.random((trials, n)) < 0.5
    matched = rng.random((trials, n)) < 0.5
    pad_bad = rng.random((trials, stored)) < 0.5
    flipped = rng.random((trials, rest)) < p
    errs = np.sum(in_r[:, :stored] & matched[:, :stored] & pad_bad, axis=1)
    errs = errs + np.sum(in_r[:, stored:] & matched[:, stored:] & flipped, axis=1)
    expected = stored / 8.0 + p * rest / 4.0
    mean = float(np.mean(errs))
    se = float(np.std(errs, ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return StoreTestStats(
        expected=expected, empirical_mean=mean, std_error=se, trials=trials, stored=stored
    )


# ---------------------------------------------------------------------------
# small-distance diagnostics

def view_photon_state(transcript: protocol.Transcript, strategy: AttackStrategy) -> np.ndarray:
    """The photon-part vector of the realized view, over + amplitudes.

    Honest and fixed-basis views are the post-measurement product states;
    storage views keep the stored photons as Alice encoded them (the state
    as it stands when the commitment is tested).
    """
    if transcript.strategy["kind"] != strategy.kind.value:
        raise DomainError("strategy does not match the transcript")
    n = transcript.params.n
    if n > DEFECT_MAX_N:
        raise ResourceError(f"view reconstruction caps at n={DEFECT_MAX_N}")
    theta_hat, w_hat = transcript.theta_hat, transcript.w_hat
    encoded = transcript.w ^ transcript.flips

    def stored_set() -> set:
        return set(transcript.strategy.get("stored") or ())

    factors: List[np.ndarray] = []
    if strategy.kind is StrategyKind.HONEST:
        factors = [quantum._photon(int(w_hat[i]), int(theta_hat[i])) for i in range(n)]
    elif strategy.kind is StrategyKind.FIXED_BASIS:
        rot = quantum.angle_basis(strategy.angle)
        factors = [rot[:, int(w_hat[i])] for i in range(n)]
    elif strategy.kind is StrategyKind.STORE_SUBSET:
        kept = stored_set()
        factors = [
            quantum._photon(int(encoded[i]), int(transcript.theta[i])) if i in kept
            else quantum._photon(int(w_hat[i]), int(theta_hat[i]))
            for i in range(n)
        ]
    elif strategy.kind is StrategyKind.RANDOM_OK:
        if transcript.strategy.get("coin_ok") == 1:
            factors = [
                quantum._photon(int(encoded[i]), int(transcript.theta[i])) for i in range(n)
            ]
        else:
            factors = [quantum._photon(int(w_hat[i]), int(theta_hat[i])) for i in range(n)]
    else:
        raise DomainError(f"unknown strategy kind {strategy.kind}")

    state = np.array([1.0], dtype=complex)
    for f in factors:
        state = np.kron(state, f)
    return state


def view_small_distance_defect(
    transcript: protocol.Transcript, strategy: AttackStrategy, e, t: int
) -> float:
    """Weight of the (unit) view vector outside the distance-t ball on E
    around the committed outcomes: ||P0 phi||^2."""
    if transcript.params.mode is not protocol.Mode.EXACT_QUANTUM:
        raise ModeError("view reconstruction is defined for EXACT_QUANTUM runs")
    phi = view_photon_state(transcript, strategy)
    p0 = quantum.ball_projector(
        e, transcript.w_hat, t, transcript.theta_hat, quantum.HIGH
    )
    return quantum.small_distance_defect(phi, p0)


def j_indicator(e, tau_count: int, alpha, w_hat) -> int:
    """1 iff alpha sits farther than tau_count from the committed word on E."""
    alpha, w_hat = gf2.bits(alpha), gf2.bits(w_hat)
    e = gf2.position_set(e, alpha.size)
    return int(gf2.hamming_distance_on(e, alpha, w_hat) > tau_count)


@dataclass(frozen=True)
class JStatistics:
    joint_probability: float
    completed: int
    trials: int


def j_statistics(params: protocol.ProtocolParams, trials: int, rng=None) -> JStatistics:
    """Empirical Pr(J[E_c, eps n] = 0 and J[T0 cap R, delta n] = 1) under
    the random-preparation sampling picture: a uniform word alpha stands
    for the state's expansion label, a uniform w_hat for the commitment,
    with the set geometry drawn as in a run. Reported as a diagnostic;
    nothing is asserted about it."""
    if rng is None:
        rng = stream(params.seed, "j-stats")
    n, N = params.n, params.N
    t_ec = math.floor(params.epsilon * n)
    t_test = math.floor(params.delta * n)
    hits = 0
    completed = 0
    for _ in range(trials):
        alpha = gf2.random_bits(rng, n)
        w_hat = gf2.random_bits(rng, n)
        theta = gf2.random_bits(rng, n)
        theta_hat = gf2.random_bits(rng, n)
        R = np.nonzero(rng.random(n) < 0.5)[0]
        part = protocol.partition_and_choose_sets(theta, theta_hat, R, N, rng)
        if part.shortage:
            continue
        completed += 1
        test_set = np.intersect1d(part.T0, R)
        ec = part.E0 if int(rng.integers(0, 2)) == 0 else part.E1
        if j_indicator(ec, t_ec, alpha, w_hat) == 0 and (
            test_set.size and j_indicator(test_set, t_test, alpha, w_hat) == 1
        ):
            hits += 1
    prob = hits / completed if completed else math.nan
    return JStatistics(joint_probability=prob, completed=completed, trials=trials)


# ---------------------------------------------------------------------------
# information accounting

class InfoMethod(Enum):
    EXACT_ENUMERATION = "EXACT_ENUMERATION"
    MONTE_CARLO = "MONTE_CARLO"


@dataclass(frozen=True)
class DefectStats:
    max: float
    mean: float


@dataclass(frozen=True)
class InfoReport:
    """I(B; V | Pass=1, C=1) and its companions.

    product = mutual_information * pr_pass, the security figure of merit.
    pr_pass counts runs that pass the test with both sets available.
    small_distance_defect_stats summarizes ||P0 phi_v||^2 / ||phi_v||^2
    over views against radius floor(epsilon n) on E_c; None when the
    strategy/mode combination gives no view vector to measure.
    """

    pr_pass: float
    mutual_information: float
    product: float
    method: InfoMethod
    samples_or_statespace: int
    small_distance_defect_stats: Optional[DefectStats]

    def to_json(self) -> dict:
        d = {
            "pr_pass": self.pr_pass,
            "mutual_information": self.mutual_information,
            "product": self.product,
            "method": self.method.value,
            "samples_or_statespace": self.samples_or_statespace,
        }
        if self.small_distance_defect_stats is None:
            d["small_distance_defect_stats"] = None
        else:
            d["small_distance_defect_stats"] = {
                "max": self.small_distance_defect_stats.max,
                "mean": self.small_distance_defect_stats.mean,
            }
        return d


def _entropy_bits(dist: np.ndarray) -> float:
    dist = np.asarray(dist, dtype=float)
    nz = dist[dist > 0]
    return float(-np.sum(nz * np.log2(nz)))


def _normalize_prior(prior, m: int) -> np.ndarray:
    if prior is None:
        return np.full(1 << m, 2.0 ** -m)
    prior = np.asarray(prior, dtype=float).ravel()
    if prior.size != 1 << m:
        raise DimensionError(f"prior needs 2^{m} entries")
    if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
        raise DomainError("prior must be a probability vector")
    return prior / prior.sum()


def _binom_pmf(size: int, p: float) -> np.ndarray:
    out = np.array([math.comb(size, j) * p**j * (1 - p) ** (size - j) for j in range(size + 1)])
    return out


def _pass_prob(x: int, y: int, p_f: float, p_rest: float, thr: int) -> float:
    """P(Bin(x, p_f) + Bin(y, p_rest) <= thr)."""
    if thr < 0:
        return 0.0
    a = _binom_pmf(x, p_f)
    b = _binom_pmf(y, p_rest)
    total = 0.0
    for j in range(min(x, thr) + 1):
        total += a[j] * float(np.sum(b[: max(0, thr - j + 1)]))
    return total


def _role_triples(size: int) -> List[Tuple[int, int, int, float]]:
    """(tested, candidate-side, other-side, weight) over `size` iid
    positions whose four roles are equally likely."""
    out = []
    base = 0.25**size
    for x in range(size + 1):
        for v in range(size - x + 1):
            for z in range(size - x - v + 1):
                w = size - x - v - z
                coef = math.factorial(size) // (
                    math.factorial(x) * math.factorial(v) * math.factorial(z) * math.factorial(w)
                )
                out.append((x, v, z, coef * base))
    return out


class _Geometry:
    """Joint weights of (test outcome, shortage, E_1 landing on a given
    candidate set), factored over position roles.

    Every position independently lands in one of four roles with equal
    probability: tested (R and matched), candidate (mismatched, untested),
    spare (matched, untested, hosting E_0), other. Conditioned on the role
    counts, E_1 is uniform among N-subsets of the candidate positions, so
    P(E_1 = e, pass, no shortage) depends on e only through how many
    stored positions it absorbs.
    """

    def __init__(self, n: int, N: int, nf: int, thr: int, p_store: float, p_rest: float):
        self.n, self.N, self.nf = n, N, nf
        self.thr, self.p_store, self.p_rest = thr, p_store, p_rest
        self._cache: Dict[int, float] = {}

    def weight(self, j: int) -> float:
        """P(E_1 = e, pass, both sets exist) for any e absorbing j stored
        positions."""
        if j in self._cache:
            return self._cache[j]
        n, N, nf = self.n, self.N, self.nf
        alpha = nf - j           # stored positions outside e
        beta = (n - nf) - (N - j)  # unstored positions outside e
        total = 0.0
        if alpha >= 0 and beta >= 0:
            trip_f = _role_triples(alpha)
            trip_b = _role_triples(beta)
            pass_cache: Dict[Tuple[int, int], float] = {}
            for x1, v1, z1, w1 in trip_f:
                for x2, v2, z2, w2 in trip_b:
                    if z1 + z2 < N:
                        continue  # no room for E_0
                    key = (x1, x2)
                    pw = pass_cache.get(key)
                    if pw is None:
                        pw = _pass_prob(x1, x2, self.p_store, self.p_rest, self.thr)
                        pass_cache[key] = pw
                    total += w1 * w2 * pw / math.comb(N + v1 + v2, N)
            total *= 0.25**N  # each position of e must land in the candidate role
        self._cache[j] = total
        return total


def _syndrome_tables(code: gf2.LinearCode) -> Tuple[np.ndarray, np.ndarray]:
    """Packed g- and h-images of every word in 2^N."""
    size = 1 << code.N
    syn = np.zeros(size, dtype=np.int64)
    hmap = np.zeros(size, dtype=np.int64)
    for u in range(size):
        vec = gf2.unpack_int(u, code.N)
        syn[u] = gf2.pack_int(gf2.matvec(code.g, vec))
        hmap[u] = gf2.pack_int(gf2.matvec(code.h, vec))
    return syn, hmap


def _class_entropy(
    code: gf2.LinearCode,
    prior: np.ndarray,
    likelihood: np.ndarray,
    obs_prob: np.ndarray,
    syn: np.ndarray,
    hmap: np.ndarray,
) -> float:
    """E[H(B | view)] within one view class.

    likelihood[o, u] is the probability of observation o at the E_c
    photons when the encoded substring is u; obs_prob[o, u_true] the
    chance of seeing o. Averages over the uniform true substring, the
    observations, and the announced mask a = b xor h u_true.
    """
    size = 1 << code.N
    m2 = prior.size
    total = 0.0
    for u_true in range(size):
        s = syn[u_true]
        t_true = hmap[u_true]
        coset = np.nonzero(syn == s)[0]
        for o in range(likelihood.shape[0]):
            po = obs_prob[o, u_true]
            if po == 0.0:
                continue
            weights = likelihood[o, coset]
            z = weights.sum()
            if z <= 0.0:
                continue
            pi = np.zeros(m2)
            np.add.at(pi, hmap[coset], weights / z)
            h_here = 0.0
            for b in range(m2):
                if prior[b] == 0.0:
                    continue
                a = t_true ^ b
                post = prior * pi[np.arange(m2) ^ a]
                zz = post.sum()
                if zz > 0:
                    h_here += prior[b] * _entropy_bits(post / zz)
            total += po * h_here
    return float(total / size)


def _measurement_table(angle: float, basis: int, p: float) -> np.ndarray:
    """q[obs, bit]: probability of outcome obs when bit was encoded in the
    given basis, sent through flip noise p, and measured at angle."""
    rot = quantum.angle_basis(angle)
    q = np.zeros((2, 2))
    for bit in range(2):
        held = quantum._photon(bit, basis)
        flipped = quantum._photon(1 - bit, basis)
        for obs in range(2):
            probe = rot[:, obs]
            q[obs, bit] = (1 - p) * abs(np.vdot(probe, held)) ** 2 + p * abs(
                np.vdot(probe, flipped)
            ) ** 2
    return q


def _disagree_prob(angle: float, basis_hat: int) -> float:
    """Chance that a photon left in the post-measurement state at `angle`
    reads opposite to the recorded outcome in the basis_hat frame."""
    rot = quantum.angle_basis(angle)
    return float(abs(np.vdot(quantum._photon(1, basis_hat), rot[:, 0])) ** 2)


def _tail_over_threshold(probs: List[float], t: int) -> float:
    """P(sum of independent Bernoullis > t), exact over 2^len patterns."""
    total = 0.0
    for pattern in product((0, 1), repeat=len(probs)):
        if sum(pattern) > t:
            w = 1.0
            for bit, q in zip(pattern, probs):
                w *= q if bit else (1.0 - q)
            total += w
    return total


def _exact_engine(
    params: protocol.ProtocolParams,
    strategy: AttackStrategy,
    code: gf2.LinearCode,
    prior: np.ndarray,
    require_disjoint_store: bool,
    budget: Optional[int],
) -> InfoReport:
    n, N, m = params.n, params.N, params.m
    p = params.noise_p
    thr = int(math.floor(params.delta * n))
    t_defect = int(math.floor(params.epsilon * n))
    syn, hmap = _syndrome_tables(code)
    size = 1 << N
    h_prior = _entropy_bits(prior)

    candidates = list(combinations(range(n), N))
    statespace = len(candidates) + (1 << m) * size * size
    if budget is not None and statespace > budget:
        err = ResourceError(
            f"exact enumeration needs about {statespace} states, budget is {budget}"
        )
        err.estimated_statespace = statespace
        raise err

    uniform_like = np.ones((1, size))
    uniform_obs = np.ones((1, size))

    def accumulate_classes(classes) -> Tuple[float, float, float, float]:
        """classes: iterable of (weight, likelihood, obs_prob, defect).

        Returns (total weight, weighted mean entropy, weighted defect mean,
        max defect)."""
        w_tot, h_acc, d_acc, d_max = 0.0, 0.0, 0.0, 0.0
        cache: Dict[bytes, float] = {}
        for weight, like, obs, defect in classes:
            if weight <= 0.0:
                continue
            key = like.tobytes() + obs.tobytes()
            h = cache.get(key)
            if h is None:
                h = _class_entropy(code, prior, like, obs, syn, hmap)
                cache[key] = h
            w_tot += weight
            h_acc += weight * h
            d_acc += weight * defect
            d_max = max(d_max, defect)
        return w_tot, h_acc, d_acc, d_max

    def store_classes(stored_mask: np.ndarray, p_rest: float):
        """View classes for a storing receiver: one per candidate set,
        keyed by the slots it pins."""
        nf = int(stored_mask.sum())
        geo = _Geometry(n, N, nf, thr, 0.5, p_rest)
        for e in candidates:
            pinned = [j for j, pos in enumerate(e) if stored_mask[pos]]
            if require_disjoint_store and pinned:
                continue
            weight = geo.weight(len(pinned))
            if weight == 0.0:
                continue
            like = np.zeros((1 << len(pinned), size))
            obs = np.zeros((1 << len(pinned), size))
            for o in range(1 << len(pinned)):
                obits = gf2.unpack_int(o, len(pinned))
                for u in range(size):
                    ubits = gf2.unpack_int(u, N)
                    lw = 1.0
                    for t_j, slot in enumerate(pinned):
                        lw *= (1 - p) if obits[t_j] == ubits[slot] else p
                    like[o, u] = lw
                    obs[o, u] = lw
            defect = _tail_over_threshold([0.5] * len(pinned), t_defect)
            yield weight, like, obs, defect

    if strategy.kind is StrategyKind.HONEST:
        geo = _Geometry(n, N, 0, thr, 0.5, p)
        weight = sum(geo.weight(0) for _ in candidates)
        w_tot, h_acc, d_acc, d_max = accumulate_classes(
            [(weight, uniform_like, uniform_obs, 0.0)]
        )
    elif strategy.kind is StrategyKind.STORE_SUBSET:
        if strategy.positions is None:
            raise DomainError("exact enumeration needs an explicit store set")
        mask = np.zeros(n, dtype=bool)
        mask[gf2.position_set(strategy.positions, n)] = True
        w_tot, h_acc, d_acc, d_max = accumulate_classes(store_classes(mask, p))
    elif strategy.kind is StrategyKind.FIXED_BASIS:
        q_plus = _measurement_table(strategy.angle, quantum.PLUS, p)
        q_cross = _measurement_table(strategy.angle, quantum.CROSS, p)
        err = 0.5 * (q_plus[1, 0] + q_cross[1, 0])
        geo = _Geometry(n, N, 0, thr, err, err)
        base = sum(geo.weight(0) for _ in candidates)

        def fixed_classes():
            for types in product((quantum.PLUS, quantum.CROSS), repeat=N):
                like = np.zeros((size, size))
                for o in range(size):
                    obits = gf2.unpack_int(o, N)
                    for u in range(size):
                        ubits = gf2.unpack_int(u, N)
                        lw = 1.0
                        for slot in range(N):
                            q = q_plus if types[slot] == quantum.PLUS else q_cross
                            lw *= q[obits[slot], ubits[slot]]
                        like[o, u] = lw
                dis = [
                    _disagree_prob(strategy.angle, quantum.CROSS if ty == quantum.PLUS else quantum.PLUS)
                    for ty in types
                ]
                defect = _tail_over_threshold(dis, t_defect)
                yield base * 0.5**N, like, like, defect

        w_tot, h_acc, d_acc, d_max = accumulate_classes(fixed_classes())
    elif strategy.kind is StrategyKind.RANDOM_OK:
        geo_h = _Geometry(n, N, 0, thr, 0.5, p)
        weight_h = sum(geo_h.weight(0) for _ in candidates)
        honest_part = [(0.5 * weight_h, uniform_like, uniform_obs, 0.0)]
        all_mask = np.ones(n, dtype=bool)
        store_part = [
            (0.5 * w, like, obs, d) for (w, like, obs, d) in store_classes(all_mask, p)
        ]
        w_tot, h_acc, d_acc, d_max = accumulate_classes(honest_part + store_part)
    else:
        raise DomainError(f"unknown strategy kind {strategy.kind}")

    if w_tot <= 0.0:
        raise DomainError("conditioning event has probability zero")
    info = float(max(0.0, h_prior - h_acc / w_tot))
    defect_stats = DefectStats(max=float(d_max), mean=float(d_acc / w_tot))

    # Pr(pass) itself never depends on the disjointness conditioning.
    if strategy.kind is StrategyKind.STORE_SUBSET and require_disjoint_store:
        mask = np.zeros(n, dtype=bool)
        mask[gf2.position_set(strategy.positions, n)] = True
        nf = int(mask.sum())
        geo = _Geometry(n, N, nf, thr, 0.5, p)
        pr_pass = sum(
            geo.weight(sum(1 for pos in e if mask[pos])) for e in candidates
        )
    else:
        pr_pass = w_tot

    return InfoReport(
        pr_pass=float(pr_pass),
        mutual_information=info,
        product=info * float(pr_pass),
        method=InfoMethod.EXACT_ENUMERATION,
        samples_or_statespace=statespace,
        small_distance_defect_stats=defect_stats,
    )


def _view_summary(tr: protocol.Transcript, strategy: AttackStrategy) -> tuple:
    """Hashable digest of everything in the view that can correlate with
    the masked string, for the plug-in estimator."""
    ec = [int(i) for i in tr.E_c]
    base = (tuple(ec), tuple(int(b) for b in tr.s), tuple(int(b) for b in tr.a))
    if strategy.kind is StrategyKind.HONEST:
        return base
    if strategy.kind is StrategyKind.STORE_SUBSET:
        known = tuple((i, tr.deferred[i]) for i in ec if i in tr.deferred)
        return base + (known,)
    if strategy.kind is StrategyKind.FIXED_BASIS:
        return base + (
            tuple(int(tr.w_hat[i]) for i in ec),
            tuple(int(tr.theta[i]) for i in ec),
        )
    if strategy.kind is StrategyKind.RANDOM_OK:
        coin = tr.strategy.get("coin_ok")
        known = tuple((i, tr.deferred[i]) for i in ec if i in tr.deferred)
        return base + (coin, known)
    raise DomainError(f"unknown strategy kind {strategy.kind}")


def _plugin_mi(pairs: List[Tuple[tuple, tuple]]) -> float:
    """Plug-in mutual information over the empirical joint; biased up by
    O(alphabet/samples)."""
    if not pairs:
        return math.nan
    total = len(pairs)
    joint: Dict[tuple, int] = {}
    left: Dict[tuple, int] = {}
    right: Dict[tuple, int] = {}
    for v, b in pairs:
        joint[(v, b)] = joint.get((v, b), 0) + 1
        left[v] = left.get(v, 0) + 1
        right[b] = right.get(b, 0) + 1
    mi = 0.0
    for (v, b), c in joint.items():
        pj = c / total
        mi += pj * math.log2(pj * total * total / (left[v] * right[b]))
    return max(0.0, mi)


def _monte_carlo_engine(
    params: protocol.ProtocolParams,
    strategy: AttackStrategy,
    code: gf2.LinearCode,
    prior: np.ndarray,
    budget: int,
    rng: np.random.Generator,
) -> InfoReport:
    m = params.m
    passes = 0
    pairs: List[Tuple[tuple, tuple]] = []
    defects: List[float] = []
    t_defect = int(math.floor(params.epsilon * params.n))
    want_defect = (
        params.mode is protocol.Mode.EXACT_QUANTUM and params.n <= DEFECT_MAX_N
    )
    for trial in range(budget):
        b_idx = int(rng.choice(1 << m, p=prior))
        b = gf2.unpack_int(b_idx, m)
        run_params = replace(params, seed=int(rng.integers(0, 2**62)))
        tr = protocol.run_string_qot(
            run_params, b, bob=strategy, force_c=1, announce_rest=True, code=code
        )
        if tr.abort_reason is not None:
            continue
        passes += 1
        pairs.append((_view_summary(tr, strategy), tuple(int(x) for x in tr.b)))
        if want_defect:
            defects.append(view_small_distance_defect(tr, strategy, tr.E_c, t_defect))
    pr_pass = passes / budget if budget else math.nan
    mi = _plugin_mi(pairs)
    stats = None
    if defects:
        stats = DefectStats(max=float(np.max(defects)), mean=float(np.mean(defects)))
    return InfoReport(
        pr_pass=pr_pass,
        mutual_information=mi,
        product=mi * pr_pass,
        method=InfoMethod.MONTE_CARLO,
        samples_or_statespace=len(pairs),
        small_distance_defect_stats=stats,
    )


def information_account(
    params: protocol.ProtocolParams,
    strategy: AttackStrategy,
    method: InfoMethod = InfoMethod.EXACT_ENUMERATION,
    budget: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    code: Optional[gf2.LinearCode] = None,
    prior=None,
    require_disjoint_store: bool = False,
) -> InfoReport:
    """Information the receiver's view carries about the string on the
    no-transfer branch, conditioned on passing the test.

    Both methods condition on one code (given, or drawn full-rank from
    rng). The exact method enumerates the full joint distribution; the
    Monte Carlo method runs the protocol with that code pinned, c forced
    to 1 and the rest of w announced, applying the plug-in estimator to
    the sufficient view digest. Priors on the string are configurable;
    the default is uniform.

    require_disjoint_store further conditions a storing receiver on the
    event that E_c avoided the stored set entirely.
    """
    prior = _normalize_prior(prior, params.m)
    if rng is None:
        rng = stream(params.seed, "info")
    if code is None:
        # a rank-deficient f genuinely leaks (some masks collapse), so the
        # default draw insists on full rank
        while True:
            code = gf2.LinearCode(
                f=gf2.random_bitmatrix(rng, params.r + params.m, params.N),
                r=params.r, m=params.m,
            )
            if gf2.rank(code.f) == params.r + params.m:
                break
    if code.N != params.N or code.r != params.r or code.m != params.m:
        raise DimensionError("code dimensions disagree with the parameters")

    if method is InfoMethod.MONTE_CARLO:
        return _monte_carlo_engine(params, strategy, code, prior, budget or 10_000, rng)

    if params.n > INFO_MAX_N or params.N > INFO_MAX_SIDE or params.m > INFO_MAX_M:
        raise ResourceError(
            f"exact enumeration caps at n={INFO_MAX_N}, N={INFO_MAX_SIDE}, m={INFO_MAX_M}"
        )
    if require_disjoint_store and strategy.kind is not StrategyKind.STORE_SUBSET:
        raise DomainError("disjointness conditioning applies to storing receivers")
    return _exact_engine(params, strategy, code, prior, require_disjoint_store, budget)


# ---------------------------------------------------------------------------
# coin-branch decomposition

@dataclass(frozen=True)
class BranchReport:
    pass_mixed: float
    pass_honest: float
    pass_store_all: float
    residual: float
    trials: int


def random_ok_decomposition(
    params: protocol.ProtocolParams, trials: int, rng=None
) -> BranchReport:
    """Empirical check that the single-coin strategy passes with the
    average of its two branch rates. Needs EXACT_QUANTUM (the store-all
    branch keeps every photon)."""
    if rng is None:
        rng = stream(params.seed, "branches")
    rates = []
    for strat in (random_ok(), honest(), store_subset(positions=range(params.n))):
        passed = 0
        for _ in range(trials):
            run_params = replace(params, seed=int(rng.integers(0, 2**62)))
            b = gf2.random_bits(rng, params.m)
            tr = protocol.run_string_qot(run_params, b, bob=strat)
            if tr.passed:
                passed += 1
        rates.append(passed / trials)
    mixed, honest_rate, store_rate = rates
    return BranchReport(
        pass_mixed=mixed,
        pass_honest=honest_rate,
        pass_store_all=store_rate,
        residual=mixed - 0.5 * (honest_rate + store_rate),
        trials=trials,
    )
