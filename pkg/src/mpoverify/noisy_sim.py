"""Coherent and incoherent noise on gate-level circuits.

Density matrices are vectorized row-major (``vec(rho)[a*d + b] = rho[a, b]``),
so ``vec(A rho B) = (A kron B^T) vec(rho)`` and a unitary acts through the
superoperator ``U kron conj(U)``. The Choi matrix is the reshuffle
``J[(a, c), (b, d)] = S[(a, b), (c, d)]`` with trace ``d`` for a
trace-preserving map.
"""

from __future__ import annotations

import itertools
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from .circuit_ir import Circuit, Gate, apply_matrix, circuit_to_dense, gate_matrix
from .mpo_engine import operator_fidelity
from .tensor_core import ComplexArray, polar_unitary

MAX_CHANNEL_QUBITS = 6
COHERENT_MODES = ("systematic", "resampled")
RESAMPLED_DRAWS = 500
SINGULAR_COND = 1e12

_PAULI = (
    np.eye(2, dtype=np.complex128),
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.diag([1, -1]).astype(np.complex128),
)


@dataclass(frozen=True)
class NoiseModel:
    """Noise applied by :func:`apply_noisy_coherent` and :func:`circuit_channel`.

    Coherent noise adds ``delta ~ N(coherent_mean, coherent_std)`` to every
    rotation angle. In ``systematic`` mode one draw (from ``seed``) is used
    for every execution; in ``resampled`` mode each execution draws anew and
    channels average over ``RESAMPLED_DRAWS`` draws.

    Incoherent noise follows each gate on its targets: a depolarizing
    channel of strength ``depolarizing`` after multi-qubit gates and
    ``depolarizing_1q`` after single-qubit gates, then amplitude and phase
    damping per target qubit.
    """

    coherent_mean: float = 0.0
    coherent_std: float = 0.0
    coherent_mode: str = "systematic"
    depolarizing: float = 0.0
    depolarizing_1q: float = 0.0
    amplitude_damping: float = 0.0
    phase_damping: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.coherent_mode not in COHERENT_MODES:
            raise ValueError(f"coherent_mode must be one of {COHERENT_MODES}")
        if self.coherent_std < 0:
            raise ValueError("coherent_std must be >= 0")
        for name in ("depolarizing", "depolarizing_1q", "amplitude_damping", "phase_damping"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def has_coherent(self) -> bool:
        return self.coherent_mean != 0.0 or self.coherent_std != 0.0

    @property
    def has_incoherent(self) -> bool:
        return any(
            (self.depolarizing, self.depolarizing_1q, self.amplitude_damping, self.phase_damping)
        )

    def coherent_only(self) -> NoiseModel:
        return replace(self, depolarizing=0.0, depolarizing_1q=0.0, amplitude_damping=0.0, phase_damping=0.0)

    def incoherent_only(self) -> NoiseModel:
        return replace(self, coherent_mean=0.0, coherent_std=0.0)


NOISELESS = NoiseModel()


# -- channels --------------------------------------------------------------


class Channel:
    """Linear map on n-qubit density matrices held as a row-stacked superoperator."""

    def __init__(self, superop):
        s = np.asarray(superop, dtype=np.complex128)
        dd = s.shape[0]
        d = int(round(np.sqrt(dd)))
        if s.shape != (dd, dd) or d * d != dd or d & (d - 1):
            raise ValueError(f"superoperator must be (4^n, 4^n), got {s.shape}")
        self.superop = s
        self.dim = d
        self.n_qubits = d.bit_length() - 1

    @classmethod
    def from_unitary(cls, u) -> Channel:
        u = np.asarray(u, dtype=np.complex128)
        return cls(np.kron(u, u.conj()))

    @classmethod
    def from_kraus(cls, ops: Sequence) -> Channel:
        return cls(sum(np.kron(k, np.conj(k)) for k in ops))

    def apply(self, rho) -> ComplexArray:
        rho = np.asarray(rho, dtype=np.complex128)
        return (self.superop @ rho.reshape(-1)).reshape(self.dim, self.dim)

    def compose(self, first: Channel) -> Channel:
        """``self`` applied after ``first``."""
        return Channel(self.superop @ first.superop)

    def choi(self) -> ComplexArray:
        d = self.dim
        return self.superop.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)

    def normalized_choi(self) -> ComplexArray:
        return self.choi() / self.dim

    def kraus(self, tol: float = 1e-12) -> list[ComplexArray]:
        """Kraus operators from the Choi eigendecomposition, largest weight first."""
        vals, vecs = np.linalg.eigh(_hermitian(self.choi()))
        order = np.argsort(vals)[::-1]
        ops = []
        for j in order:
            if vals[j] > tol * max(vals[order[0]], 1e-300):
                ops.append(np.sqrt(vals[j]) * vecs[:, j].reshape(self.dim, self.dim))
        return ops

    def dominant_kraus(self) -> ComplexArray:
        vals, vecs = np.linalg.eigh(_hermitian(self.choi()))
        j = int(np.argmax(vals))
        return np.sqrt(max(vals[j], 0.0)) * vecs[:, j].reshape(self.dim, self.dim)

    def trace_preservation_error(self) -> float:
        d = self.dim
        # sum_a S[(a, a), (c, e)] = delta_ce
        s = self.superop.reshape(d, d, d, d)
        partial = np.einsum("aace->ce", s)
        return float(np.max(np.abs(partial - np.eye(d))))

    def min_choi_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(_hermitian(self.choi())).min())

    def is_trace_preserving(self, tol: float = 1e-10) -> bool:
        return self.trace_preservation_error() <= tol

    def is_completely_positive(self, tol: float = 1e-10) -> bool:
        return self.min_choi_eigenvalue() >= -tol


def _hermitian(m: ComplexArray) -> ComplexArray:
    return 0.5 * (m + m.conj().T)


def depolarizing_kraus(p: float, width: int) -> list[ComplexArray]:
    """Pauli-twirl Kraus set for ``rho -> (1-p) rho + p I/d (x) Tr(rho)``."""
    d2 = 4**width
    ops = []
    for idx, labels in enumerate(itertools.product(range(4), repeat=width)):
        p_op = np.ones((1, 1), dtype=np.complex128)
        for lab in labels:
            p_op = np.kron(p_op, _PAULI[lab])
        weight = 1 - p + p / d2 if idx == 0 else p / d2
        ops.append(np.sqrt(weight) * p_op)
    return ops


def amplitude_damping_kraus(gamma: float) -> list[ComplexArray]:
    k0 = np.diag([1.0, np.sqrt(1 - gamma)]).astype(np.complex128)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=np.complex128)
    return [k0, k1]


def phase_damping_kraus(lam: float) -> list[ComplexArray]:
    k0 = np.diag([1.0, np.sqrt(1 - lam)]).astype(np.complex128)
    k1 = np.diag([0.0, np.sqrt(lam)]).astype(np.complex128)
    return [k0, k1]


def _noise_after(g: Gate, nm: NoiseModel) -> list[tuple[list[ComplexArray], tuple[int, ...]]]:
    """Kraus sets (with their qubits) that follow gate ``g``."""
    out = []
    p = nm.depolarizing if g.width >= 2 else nm.depolarizing_1q
    if p > 0:
        out.append((depolarizing_kraus(p, g.width), g.targets))
    for q in g.targets:
        if nm.amplitude_damping > 0:
            out.append((amplitude_damping_kraus(nm.amplitude_damping), (q,)))
        if nm.phase_damping > 0:
            out.append((phase_damping_kraus(nm.phase_damping), (q,)))
    return out


# -- coherent noise --------------------------------------------------------


def _require_bound(c: Circuit) -> None:
    if c.params:
        raise ValueError("bind free parameters before simulating noise")


def _shifted(c: Circuit, deltas: np.ndarray) -> Circuit:
    idx = c.rotation_gates()
    gates = list(c.gates)
    for j, i in enumerate(idx):
        g = gates[i]
        gates[i] = replace(g, param=g.angle() + float(deltas[j]))
    return Circuit(c.n_qubits, gates)


def coherent_offsets(c: Circuit, nm: NoiseModel, draw_seed) -> np.ndarray:
    """One draw of per-rotation angle offsets."""
    count = len(c.rotation_gates())
    if nm.coherent_std == 0.0:
        return np.full(count, float(nm.coherent_mean))
    rng = np.random.default_rng(draw_seed)
    return rng.normal(nm.coherent_mean, nm.coherent_std, size=count)


def apply_noisy_coherent(c: Circuit, nm: NoiseModel, draw_seed=None) -> Circuit:
    """Copy of a bound circuit with every rotation angle over-rotated by one noise draw.

    ``draw_seed`` defaults to the model seed.
    """
    _require_bound(c)
    seed = nm.seed if draw_seed is None else draw_seed
    return _shifted(c, coherent_offsets(c, nm, seed))


def coherent_realizations(c: Circuit, nm: NoiseModel) -> list[Circuit]:
    """Circuits that an execution may run: one in systematic mode, many when resampled."""
    _require_bound(c)
    if not nm.has_coherent:
        return [c]
    if nm.coherent_mode == "systematic" or nm.coherent_std == 0.0:
        return [apply_noisy_coherent(c, nm, nm.seed)]
    return [
        apply_noisy_coherent(c, nm, np.random.SeedSequence([nm.seed, k]))
        for k in range(RESAMPLED_DRAWS)
    ]


# -- superoperators --------------------------------------------------------


def _apply_kraus_set(rho: np.ndarray, ops, targets, n: int) -> np.ndarray:
    """``sum_k K rho K^dag`` on a ``(2,)*2n + rest`` density tensor."""
    cols = tuple(n + q for q in targets)
    acc = None
    for k in ops:
        term = apply_matrix(apply_matrix(rho, k, targets), np.conj(k), cols)
        acc = term if acc is None else acc + term
    return acc


def _circuit_superop(c: Circuit, nm: NoiseModel) -> ComplexArray:
    n = c.n_qubits
    d = 2**n
    rho = np.eye(d * d, dtype=np.complex128).reshape((2,) * (2 * n) + (d * d,))
    for g in c.gates:
        u = gate_matrix(g)
        rho = apply_matrix(rho, u, g.targets)
        rho = apply_matrix(rho, u.conj(), tuple(n + q for q in g.targets))
        for ops, qs in _noise_after(g, nm):
            rho = _apply_kraus_set(rho, ops, qs, n)
    return rho.reshape(d * d, d * d)


def circuit_channel(c: Circuit, nm: NoiseModel = NOISELESS) -> Channel:
    """Superoperator of a bound circuit under ``nm`` (coherent draws averaged)."""
    _require_bound(c)
    if c.n_qubits > MAX_CHANNEL_QUBITS:
        raise ValueError(f"superoperators limited to {MAX_CHANNEL_QUBITS} qubits")
    runs = coherent_realizations(c, nm)
    incoherent = nm.incoherent_only()
    total = sum(_circuit_superop(r, incoherent) for r in runs)
    return Channel(total / len(runs))


def noisy_unitary(c: Circuit, nm: NoiseModel, draw_seed=None) -> ComplexArray:
    """Dense unitary of one coherent-noise realization (incoherent parts ignored)."""
    return circuit_to_dense(apply_noisy_coherent(c, nm, draw_seed))


# -- fidelities --------------------------------------------------------------


def fidelity_eq1(noisy, ideal) -> float:
    """``|Tr(noisy^dag ideal)| / 2^n``; equal to one only for a phase-equivalent unitary."""
    return operator_fidelity(noisy, ideal)


def process_fidelity(channel: Channel, ideal) -> float:
    """Entanglement fidelity ``<Phi_U| J/d |Phi_U>`` of ``channel`` with the unitary ``ideal``."""
    u = np.asarray(ideal, dtype=np.complex128)
    phi = u.reshape(-1) / np.sqrt(channel.dim)
    return float(np.real(phi.conj() @ channel.normalized_choi() @ phi))


def sampled_process_fidelity(
    c: Circuit, nm: NoiseModel, ideal, n_states: int = 2000, trajectories: int = 1, seed: int = 0
) -> float:
    """Process fidelity estimated from state fidelities of noisy trajectories.

    Each Haar-random input is run as a pure-state trajectory: after every
    gate one Kraus operator of each noise site is sampled with the Born
    weight. The average state fidelity ``F_avg`` converts to the process
    fidelity as ``((d + 1) F_avg - 1) / d``. Coherent draws are taken per
    trajectory in resampled mode.
    """
    _require_bound(c)
    n = c.n_qubits
    d = 2**n
    rng = np.random.default_rng(seed)
    ideal = np.asarray(ideal, dtype=np.complex128)
    runs = coherent_realizations(c, nm)
    incoherent = nm.incoherent_only()
    psis = rng.normal(size=(d, n_states)) + 1j * rng.normal(size=(d, n_states))
    psis /= np.linalg.norm(psis, axis=0, keepdims=True)
    targets = ideal @ psis
    total = 0.0
    for _ in range(trajectories):
        which = rng.integers(len(runs), size=n_states)
        final = np.zeros((d, n_states), dtype=np.complex128)
        for r, circ in enumerate(runs):
            sel = np.flatnonzero(which == r)
            if sel.size == 0:
                continue
            state = psis[:, sel].reshape((2,) * n + (sel.size,))
            for g in circ.gates:
                state = apply_matrix(state, gate_matrix(g), g.targets)
                for ops, qs in _noise_after(g, incoherent):
                    branches = np.stack([apply_matrix(state, k, qs).reshape(d, -1) for k in ops])
                    weights = np.sum(np.abs(branches) ** 2, axis=1)  # (k, m)
                    cum = np.cumsum(weights / weights.sum(axis=0), axis=0)
                    pick = np.minimum((rng.random(sel.size) > cum).sum(axis=0), len(ops) - 1)
                    m_idx = np.arange(sel.size)
                    chosen = branches[pick, :, m_idx].T / np.sqrt(weights[pick, m_idx])
                    state = chosen.reshape((2,) * n + (sel.size,))
            final[:, sel] = state.reshape(d, -1)
        total += float(np.sum(np.abs(np.sum(targets.conj() * final, axis=0)) ** 2))
    f_avg = total / (n_states * trajectories)
    return (d * f_avg + f_avg - 1) / d


# -- optimal unitary correction --------------------------------------------


@dataclass(frozen=True, eq=False)
class CorrectionReport:
    error_channel: Channel
    correction_unitary: ComplexArray
    f_before: float
    f_after: float

    @property
    def gain(self) -> float:
        return self.f_after - self.f_before


class SingularChannelError(ValueError):
    def __init__(self, condition_number: float):
        super().__init__(
            f"noisy superoperator is numerically singular (condition number {condition_number:.3e})"
        )
        self.condition_number = condition_number


def optimal_unitary_correction(noisy: Channel, ideal) -> CorrectionReport:
    """Best unitary post-correction of ``noisy`` towards the unitary ``ideal``.

    The error map ``E = S_ideal S_noisy^-1`` (generally not a physical
    channel) is summarized by its dominant Kraus operator; the closest
    unitary to that operator is the correction ``U_E``. Fidelities compare
    the dominant Kraus operator of ``noisy`` with ``ideal`` before and after
    left-multiplying by ``U_E``.
    """
    ideal = np.asarray(ideal, dtype=np.complex128)
    s_ideal = np.kron(ideal, ideal.conj())
    cond = float(np.linalg.cond(noisy.superop))
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularChannelError(cond)
    err = Channel(s_ideal @ np.linalg.inv(noisy.superop))
    u_e = polar_unitary(err.dominant_kraus())
    k_noisy = noisy.dominant_kraus()
    f_before = fidelity_eq1(k_noisy, ideal)
    f_after = fidelity_eq1(u_e @ k_noisy, ideal)
    return CorrectionReport(err, u_e, f_before, f_after)

