"""Exact quantum mechanics for strings of two-level photons.

Conventions: statevector amplitudes are indexed by computational bitstrings
in the + basis, big-endian over photon positions (photon 0 is the most
significant bit). Encoded states: |0>+ = (1,0), |1>+ = (0,1),
|0>x = (|0>+ + |1>+)/sqrt2, |1>x = (|0>+ - |1>+)/sqrt2, which are the
polarizations 0, 90, 45, -45 degrees. All chosen amplitudes are real, which
makes the sign behavior of the shift unitaries exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gf2
from .errors import DimensionError, DomainError, ResourceError

PLUS, CROSS = 0, 1
LOW, HIGH = "low", "high"

STATEVECTOR_MAX_N = 20
DENSITY_MAX_N = 10

PHYS_TOL = 1e-10  # physical invariants (norms, traces, probabilities)
ALG_TOL = 1e-12  # algebraic identities

_SQ2 = 1.0 / math.sqrt(2.0)
_H = np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]])


def basis_string(spec, length=None) -> np.ndarray:
    """Normalize a basis string; accepts '+x' text or a 0/1 sequence."""
    if isinstance(spec, str):
        table = {"+": PLUS, "x": CROSS, "X": CROSS, "0": PLUS, "1": CROSS}
        try:
            spec = [table[ch] for ch in spec]
        except KeyError as exc:
            raise DomainError(f"unknown basis character {exc}") from exc
    return gf2.bits(spec, length=length)


def basis_text(theta: np.ndarray) -> str:
    return "".join("x" if b else "+" for b in theta)


def conjugate_bases(theta: np.ndarray) -> np.ndarray:
    """The componentwise opposite basis string."""
    return basis_string(theta) ^ 1


def _photon(bit: int, basis: int) -> np.ndarray:
    if basis == PLUS:
        return np.array([1.0, 0.0] if bit == 0 else [0.0, 1.0], dtype=complex)
    return np.array([_SQ2, _SQ2] if bit == 0 else [_SQ2, -_SQ2], dtype=complex)


def angle_basis(angle: float) -> np.ndarray:
    """Rotation whose columns are the basis states at the given angle from +."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]], dtype=complex)


def bb84_state(w: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Product state encoding bit string w in bases theta."""
    w = gf2.bits(w)
    theta = basis_string(theta)
    if w.size != theta.size:
        raise DimensionError("bit string and basis string lengths differ")
    n = w.size
    if n > STATEVECTOR_MAX_N:
        raise ResourceError(f"statevectors cap at n={STATEVECTOR_MAX_N}")
    state = np.array([1.0], dtype=complex)
    for i in range(n):
        state = np.kron(state, _photon(int(w[i]), int(theta[i])))
    return state


def check_state(state: np.ndarray, n: int = None) -> np.ndarray:
    state = np.asarray(state, dtype=complex).ravel()
    size = state.size
    if size == 0 or size & (size - 1):
        raise DimensionError("statevector length must be a power of 2")
    if n is not None and size != 1 << n:
        raise DimensionError(f"expected 2^{n} amplitudes")
    norm = float(np.vdot(state, state).real)
    if abs(norm - 1.0) > PHYS_TOL:
        raise DomainError(f"statevector norm^2 = {norm}, not 1")
    return state


def apply_single(state: np.ndarray, i: int, u2: np.ndarray) -> np.ndarray:
    """Apply a 2x2 operator to photon i of a 2^n statevector."""
    n = state.size.bit_length() - 1
    psi = state.reshape([2] * n)
    psi = np.tensordot(np.asarray(u2, dtype=complex), psi, axes=(1, i))
    return np.moveaxis(psi, 0, i).reshape(-1)


def to_frame(state: np.ndarray, theta_hat: np.ndarray) -> np.ndarray:
    """Coefficients of the state over the theta_hat product basis."""
    theta_hat = basis_string(theta_hat)
    out = np.asarray(state, dtype=complex)
    for i in np.nonzero(theta_hat == CROSS)[0]:
        out = apply_single(out, int(i), _H)
    return out


# to_frame is its own inverse photon-by-photon (H is self-adjoint), so it
# also maps frame coefficients back to + amplitudes.
from_frame = to_frame


def measure_photon(state: np.ndarray, i: int, rotation: np.ndarray, rng) -> tuple:
    """Projectively measure photon i in the basis given by rotation columns.

    Returns (outcome bit, collapsed full state). One uniform draw per call.
    """
    rot = np.asarray(rotation, dtype=complex)
    work = apply_single(state, i, rot.conj().T)
    n = work.size.bit_length() - 1
    psi = work.reshape([2] * n)
    slices = [slice(None)] * n
    slices[i] = 1
    total = float(np.vdot(work, work).real)
    p1 = float(np.sum(np.abs(psi[tuple(slices)]) ** 2)) / total
    outcome = 1 if rng.random() < p1 else 0
    slices[i] = 1 - outcome
    psi[tuple(slices)] = 0.0
    work = psi.reshape(-1)
    work = work / math.sqrt(float(np.vdot(work, work).real))
    return outcome, apply_single(work, i, rot)


def measure_subset(state: np.ndarray, positions, bases, rng) -> tuple:
    """Measure the listed photons sequentially in the given +/x bases.

    bases aligns with positions. Returns (outcome bits in positions order,
    collapsed full state).
    """
    state = np.asarray(state, dtype=complex)
    positions = list(np.asarray(positions, dtype=np.int64).ravel())
    bases = basis_string(bases, length=len(positions))
    outcomes = np.zeros(len(positions), dtype=np.uint8)
    for j, i in enumerate(positions):
        rot = _H if bases[j] == CROSS else np.eye(2)
        outcomes[j], state = measure_photon(state, int(i), rot, rng)
    return outcomes, state


def measure_in_bases(state: np.ndarray, theta_hat: np.ndarray, rng) -> tuple:
    """Measure every photon i in basis theta_hat_i (Born rule).

    The collapsed state is exactly bb84_state(outcome, theta_hat).
    """
    theta_hat = basis_string(theta_hat)
    n = theta_hat.size
    state = check_state(state, n)
    return measure_subset(state, np.arange(n), theta_hat, rng)


def density_from_ensemble(states, probs) -> np.ndarray:
    """rho = sum_a p_a |psi_a><psi_a|."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < -PHYS_TOL) or abs(probs.sum() - 1.0) > PHYS_TOL:
        raise DomainError("ensemble probabilities must be nonnegative and sum to 1")
    dims = {np.asarray(s).size for s in states}
    if len(dims) != 1:
        raise DimensionError("ensemble states differ in dimension")
    dim = dims.pop()
    if dim > 1 << DENSITY_MAX_N:
        raise ResourceError(f"density matrices cap at N={DENSITY_MAX_N}")
    rho = np.zeros((dim, dim), dtype=complex)
    for p, s in zip(probs, states):
        v = np.asarray(s, dtype=complex).ravel()
        rho += p * np.outer(v, v.conj())
    return rho


def check_density(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > PHYS_TOL:
        raise DomainError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > PHYS_TOL:
        raise DomainError("density matrix trace is not 1")
    if np.linalg.eigvalsh(rho).min() < -PHYS_TOL:
        raise DomainError("density matrix has a negative eigenvalue")
    return rho


def density_in_frame(rho: np.ndarray, theta_hat: np.ndarray) -> np.ndarray:
    """Matrix of rho over the theta_hat product basis."""
    theta_hat = basis_string(theta_hat)
    n = theta_hat.size
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (1 << n, 1 << n):
        raise DimensionError("density dimension does not match basis string")
    out = rho.reshape([2] * (2 * n))
    for i in np.nonzero(theta_hat == CROSS)[0]:
        out = np.tensordot(_H, out, axes=(1, int(i)))
        out = np.moveaxis(out, 0, int(i))
        out = np.tensordot(_H, out, axes=(1, n + int(i)))
        out = np.moveaxis(out, 0, n + int(i))
    return out.reshape(1 << n, 1 << n)


def matrix_element(rho: np.ndarray, alpha, alpha_p, theta_hat) -> complex:
    """<psi_{alpha,theta_hat}| rho |psi_{alpha',theta_hat}>."""
    va = bb84_state(alpha, theta_hat)
    vb = bb84_state(alpha_p, theta_hat)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (va.size, va.size):
        raise DimensionError("density dimension does not match index strings")
    return complex(va.conj() @ rho @ vb)


@dataclass(frozen=True, eq=False)
class Projector:
    """Projector onto a span of theta_hat product-basis states.

    Diagonal in that basis, so it is just the index mask; algebra on masks
    is exact.
    """

    n: int
    theta_hat: np.ndarray
    mask: np.ndarray  # boolean over 2^n basis strings

    def apply(self, state: np.ndarray) -> np.ndarray:
        coords = to_frame(np.asarray(state, dtype=complex), self.theta_hat)
        coords = np.where(self.mask, coords, 0.0)
        return from_frame(coords, self.theta_hat)

    def complement(self) -> "Projector":
        return Projector(n=self.n, theta_hat=self.theta_hat, mask=~self.mask)


def ball_projector(e, center, t: int, theta_hat, side: str) -> Projector:
    """Projector onto span{|psi_{alpha,theta_hat}> : d_e(alpha, center) <= t}
    (side LOW), or onto the complementary span (side HIGH)."""
    if t < 0:
        raise DomainError("ball radius must be nonnegative")
    center = gf2.bits(center)
    theta_hat = basis_string(theta_hat, length=center.size)
    n = center.size
    e = gf2.position_set(e, n)
    emask = 0
    for i in e:
        emask |= 1 << (n - 1 - int(i))
    idx = np.arange(1 << n, dtype=np.int64)
    dist = np.bitwise_count((idx ^ gf2.pack_int(center)) & emask)
    if side == LOW:
        mask = dist <= t
    elif side == HIGH:
        mask = dist > t
    else:
        raise DomainError(f"side must be {LOW!r} or {HIGH!r}")
    return Projector(n=n, theta_hat=theta_hat, mask=mask)


def outcome_probability(rho: np.ndarray, pi) -> float:
    """Tr(Pi rho) for a Projector or an explicit operator matrix."""
    rho = np.asarray(rho, dtype=complex)
    if isinstance(pi, Projector):
        framed = density_in_frame(rho, pi.theta_hat)
        return float(np.sum(framed.diagonal().real[pi.mask]))
    pi = np.asarray(pi, dtype=complex)
    if pi.shape != rho.shape:
        raise DimensionError("operator and density dimensions differ")
    return float(np.trace(pi @ rho).real)


def small_distance_defect(phi: np.ndarray, p0: Projector) -> float:
    """||P0 phi||^2; 0 within tolerance certifies the small-distance property."""
    phi = np.asarray(phi, dtype=complex).ravel()
    if phi.size != 1 << p0.n:
        raise DimensionError("state dimension does not match projector")
    coords = to_frame(phi, p0.theta_hat)
    return float(np.sum(np.abs(coords[p0.mask]) ** 2))


@dataclass(frozen=True)
class ShiftOp:
    """U_beta for bases theta: shifts encodings by beta in basis theta and
    acts as the sign mask (-1)^(beta . alpha) on the opposite basis.

    Per photon this is I (beta_i = 0), X (theta_i = +) or Z (theta_i = x);
    all real and self-inverse, so the operator is its own adjoint.
    """

    gates: tuple  # per-photon "I" | "X" | "Z"

    def apply(self, state: np.ndarray) -> np.ndarray:
        n = len(self.gates)
        out = np.array(state, dtype=complex).reshape([2] * n)
        for i, gate in enumerate(self.gates):
            if gate == "X":
                out = np.flip(out, axis=i)
            elif gate == "Z":
                sl = [slice(None)] * n
                sl[i] = 1
                out[tuple(sl)] *= -1.0
        return out.reshape(-1)

    def conjugate(self, rho: np.ndarray) -> np.ndarray:
        """U rho U (the adjoint equals the operator itself)."""
        n = len(self.gates)
        dim = 1 << n
        out = np.array(rho, dtype=complex).reshape([2] * (2 * n))
        for i, gate in enumerate(self.gates):
            if gate == "X":
                out = np.flip(np.flip(out, axis=i), axis=n + i)
            elif gate == "Z":
                for axis in (i, n + i):
                    sl = [slice(None)] * (2 * n)
                    sl[axis] = 1
                    out[tuple(sl)] *= -1.0
        return out.reshape(dim, dim)

    def matrix(self) -> np.ndarray:
        n = len(self.gates)
        if n > DENSITY_MAX_N:
            raise ResourceError("dense operator matrices cap at N=10")
        table = {
            "I": np.eye(2, dtype=complex),
            "X": np.array([[0, 1], [1, 0]], dtype=complex),
            "Z": np.array([[1, 0], [0, -1]], dtype=complex),
        }
        out = np.array([[1.0]], dtype=complex)
        for gate in self.gates:
            out = np.kron(out, table[gate])
        return out


def u_beta(beta: np.ndarray, theta: np.ndarray) -> ShiftOp:
    """The unitary with U|psi_{b,theta}> = |psi_{beta xor b,theta}>."""
    beta = gf2.bits(beta)
    theta = basis_string(theta)
    if beta.size != theta.size:
        raise DimensionError("beta and theta lengths differ")
    gates = tuple(
        "I" if not beta[i] else ("X" if theta[i] == PLUS else "Z")
        for i in range(beta.size)
    )
    return ShiftOp(gates=gates)
