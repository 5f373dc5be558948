"""Verifier circuits built from a matrix product operator.

Wiring. For an n-qubit operator the verifier register holds

* qubits ``0 .. n-1``: the candidate output state psi',
* qubits ``n .. 2n-1``: a reference copy of the input, prepared in conj(psi),
* qubits ``2n .. 2n+B-1``: a bond register, ``B = ceil(log2 chi_max)``.

Gate k acts on ``(k, n+k, bond register)``, so consecutive gates share
only the bond register and the circuit is a staircase of n gates. Each
gate is the adjoint of a unitary completion of the k-th left-canonical
MPO tensor. After gate k < n-1 the pair wires are post-selected on |0>
and the bond register on values below the kept bond ``chi_k``. The last
gate maps the normalized final tensor onto ``|0>``, which is the expected
output ``|v>``.

With ``s`` the Frobenius norm of the MPO, the post-selected amplitude of
``|v>`` equals ``conj(<psi'|U|psi>) / s``. The reported output fidelity
rescales it by ``s`` so that it reads ``|<psi'|U|psi>|^2``: 1 for a
matched pair under an exact unitary MPO, about ``2^-n`` for a random
candidate.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit_ir import Gate, apply_matrix
from .mpo_engine import MPO, mpo_to_dense, operator_fidelity
from .tensor_core import ComplexArray, complete_unitary, is_unitary

MAX_VERIFIER_QUBITS = 24
IMPOSSIBLE_THRESHOLD = 1e-14


@dataclass(frozen=True, eq=False)
class VerifierCircuit:
    n: int
    bond_qubits: int
    gates: tuple[Gate, ...]
    kept_bonds: tuple[int, ...]
    postselect_legs: tuple[tuple[int, tuple[int, ...]], ...]
    expected_output: ComplexArray
    residual_norm: float
    source_fidelity: float | None = None

    @property
    def n_total_qubits(self) -> int:
        return 2 * self.n + self.bond_qubits

    @property
    def gate_width(self) -> int:
        return 2 + self.bond_qubits

    @property
    def ideal_postselect_amplitude(self) -> float:
        return 1.0 / self.residual_norm

    def gate_tensor(self, k: int) -> ComplexArray:
        """Gate k reshaped to ``(out_o, out_i, out_bond, in_o, in_i, in_bond)``."""
        d = 2**self.bond_qubits
        return self.gates[k].matrix.reshape(2, 2, d, 2, 2, d)


@dataclass(frozen=True)
class VerificationResult:
    postselect_probability: float
    output_fidelity: float
    possible: bool = True
    message: str = ""


def _left_canonical(m: MPO) -> tuple[list[ComplexArray], float]:
    """Left-canonical sites via SVD sweeps; returns the sites and the residual norm."""
    sites = [s.copy() for s in m.sites]
    for k in range(len(sites) - 1):
        l, o, i, r = sites[k].shape
        u, s, vh = np.linalg.svd(sites[k].reshape(l * o * i, r), full_matrices=False)
        keep = max(1, int(np.count_nonzero(s > s[0] * 1e-14))) if s[0] > 0 else 1
        sites[k] = u[:, :keep].reshape(l, o, i, keep)
        carry = s[:keep, None] * vh[:keep]
        sites[k + 1] = np.tensordot(carry, sites[k + 1], axes=(1, 0))
    last = sites[-1]
    norm = float(np.linalg.norm(last))
    if norm == 0.0:
        raise ValueError("MPO is identically zero")
    sites[-1] = last / norm
    return sites, norm


def build_verifier(m: MPO, ideal: ComplexArray | None = None) -> VerifierCircuit:
    """Staircase verifier for the operator held by ``m``.

    ``ideal`` (optional dense unitary) is only used to record the operator
    fidelity of ``m`` as ``source_fidelity``.
    """
    n = m.n_sites
    sites, norm = _left_canonical(m)
    chis = [s.shape[3] for s in sites[:-1]]
    chi_max = max(chis, default=1)
    b = math.ceil(math.log2(chi_max)) if chi_max > 1 else 0
    d = 2**b
    bond_wires = tuple(range(2 * n, 2 * n + b))
    gates, legs = [], []
    for k, a in enumerate(sites):
        l, _, _, r = a.shape
        cols = np.zeros((2, 2, d, r), dtype=np.complex128)
        cols[:, :, :l, :] = np.transpose(a, (1, 2, 0, 3))
        q = complete_unitary(cols.reshape(4 * d, r))
        mat = q.conj().T
        if not is_unitary(mat, 1e-10):  # pragma: no cover - guarded by construction
            raise RuntimeError(f"verifier gate {k} is not unitary")
        gates.append(Gate("U", (k, n + k) + bond_wires, matrix=mat))
        if k < n - 1:
            legs.append((k, (k, n + k)))
    expected = np.zeros(4 * d, dtype=np.complex128)
    expected[0] = 1.0
    source = None
    if ideal is not None:
        source = operator_fidelity(mpo_to_dense(m), ideal)
    return VerifierCircuit(
        n=n,
        bond_qubits=b,
        gates=tuple(gates),
        kept_bonds=tuple(chis),
        postselect_legs=tuple(legs),
        expected_output=expected,
        residual_norm=norm,
        source_fidelity=source,
    )


# -- evaluation -----------------------------------------------------------


def factor_product_state(psi, n: int, tol: float = 1e-8) -> ComplexArray:
    """Split a product state into an ``(n, 2)`` array of single-qubit factors."""
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape == (n, 2):
        return psi
    if psi.shape != (2**n,):
        raise ValueError(f"expected a state of length {2**n} or shape ({n}, 2), got {psi.shape}")
    factors = np.zeros((n, 2), dtype=np.complex128)
    rest = psi.reshape(1, -1)
    for k in range(n):
        mat = rest.reshape(2, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        if len(s) > 1 and s[1] > tol * max(s[0], 1e-300):
            raise ValueError(f"reference input is entangled across qubit {k}")
        factors[k] = u[:, 0] * s[0]
        rest = vh[0]
    factors[-1] *= rest.reshape(-1)[0] if rest.size == 1 else 1.0
    return factors


def _as_candidate_batch(psi_prime, n: int) -> ComplexArray:
    arr = np.asarray(psi_prime, dtype=np.complex128)
    if arr.ndim == 3 and arr.shape[1:] == (n, 2):
        out = arr[:, 0, :]
        for k in range(1, n):
            out = np.einsum("ma,mb->mab", out, arr[:, k, :]).reshape(arr.shape[0], -1)
        return out
    if arr.ndim != 2 or arr.shape[1] != 2**n:
        raise ValueError(f"candidate batch must have shape (m, {2**n}), got {arr.shape}")
    return arr


def verify_batch(vc: VerifierCircuit, psis, psi_primes) -> tuple[np.ndarray, np.ndarray]:
    """Post-selection probabilities and output fidelities for a batch of pairs.

    ``psis`` has shape ``(m, n, 2)`` (product references) and
    ``psi_primes`` shape ``(m, 2^n)`` or ``(m, n, 2)``.
    """
    n = vc.n
    refs = np.asarray(psis, dtype=np.complex128)
    if refs.ndim != 3 or refs.shape[1:] != (n, 2):
        raise ValueError(f"reference batch must have shape (m, {n}, 2), got {refs.shape}")
    cands = _as_candidate_batch(psi_primes, n)
    if cands.shape[0] != refs.shape[0]:
        raise ValueError("reference and candidate batches differ in length")
    m = refs.shape[0]
    conj_refs = refs.conj()
    state = cands.reshape(m, 2, -1, 1)
    prev_chi = 1
    for k in range(n):
        g = vc.gate_tensor(k)
        if k < n - 1:
            chi = vc.kept_bonds[k]
            sel = g[0, 0, :chi, :, :, :prev_chi]  # (j, a, b, l)
            nxt = np.einsum("jabl,mb,marl->mrj", sel, conj_refs[:, k, :], state, optimize=True)
            state = nxt.reshape(m, 2, -1, chi)
            prev_chi = chi
        else:
            full = g[:, :, :, :, :, :prev_chi].reshape(-1, 2, 2, prev_chi)
            out = np.einsum("dabl,mb,mal->md", full, conj_refs[:, k, :], state[:, :, 0, :])
    probs = np.sum(np.abs(out) ** 2, axis=1)
    overlap = np.abs(out @ vc.expected_output.conj()) ** 2
    fids = np.clip(overlap * vc.residual_norm**2, 0.0, 1.0)
    return probs, fids


def verify_pair(vc: VerifierCircuit, psi, psi_prime) -> VerificationResult:
    """Run the verifier on one (reference, candidate) pair.

    ``psi`` must be a product state (length ``2^n`` vector or ``(n, 2)``
    factors); ``psi_prime`` may be any state.
    """
    if vc.n_total_qubits > MAX_VERIFIER_QUBITS:
        raise ValueError(
            f"verifier needs {vc.n_total_qubits} qubits; dense limit is {MAX_VERIFIER_QUBITS}"
        )
    ref = factor_product_state(psi, vc.n)
    cand = np.asarray(psi_prime, dtype=np.complex128)
    if cand.shape == (vc.n, 2):
        cand = _as_candidate_batch(cand[None], vc.n)[0]
    probs, fids = verify_batch(vc, ref[None], cand[None])
    p = float(probs[0])
    if p < IMPOSSIBLE_THRESHOLD:
        return VerificationResult(p, 0.0, False, "verification impossible: post-selection probability below 1e-14")
    return VerificationResult(p, float(fids[0]))


def simulate_full_register(vc: VerifierCircuit, psi, psi_prime) -> ComplexArray:
    """Literal gate-by-gate simulation on all ``2n + B`` qubits.

    Returns the unnormalized final-gate output after projecting every
    post-selection leg; an independent check of :func:`verify_batch`.
    """
    n, b = vc.n, vc.bond_qubits
    total = vc.n_total_qubits
    if total > MAX_VERIFIER_QUBITS:
        raise ValueError(f"register of {total} qubits exceeds {MAX_VERIFIER_QUBITS}")
    d = 2**b
    conj_ref = product_to_vector(factor_product_state(psi, n).conj())
    bond0 = np.zeros(d, dtype=np.complex128)
    bond0[0] = 1.0
    state = np.kron(np.kron(np.asarray(psi_prime, dtype=np.complex128), conj_ref), bond0)
    state = state.reshape((2,) * total)
    for k, g in enumerate(vc.gates):
        state = apply_matrix(state, g.matrix, g.targets)
        if k < n - 1:
            view = state.reshape((2,) * (2 * n) + (d,))
            keep = np.zeros_like(view)
            idx = [slice(None)] * (2 * n) + [slice(0, vc.kept_bonds[k])]
            idx[k] = 0
            idx[n + k] = 0
            keep[tuple(idx)] = view[tuple(idx)]
            state = keep.reshape((2,) * total)
    view = state.reshape((2,) * (2 * n) + (d,))
    idx: list = [0] * (2 * n) + [slice(None)]
    idx[n - 1] = slice(None)
    idx[2 * n - 1] = slice(None)
    return view[tuple(idx)].reshape(-1)


def verifier_depth_profile(vc: VerifierCircuit) -> dict:
    widths = [g.width for g in vc.gates]
    # consecutive gates share the bond register, so none can run in parallel
    return {"gate_count": len(vc.gates), "gate_widths": widths, "staircase_depth": len(vc.gates)}


# -- serialization --------------------------------------------------------


def _stem(stem) -> tuple[Path, Path]:
    stem = str(stem)
    for suffix in (".verifier.json", ".verifier.bin"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    return Path(stem + ".verifier.json"), Path(stem + ".verifier.bin")


def save_verifier(vc: VerifierCircuit, stem) -> tuple[Path, Path]:
    header_path, blob_path = _stem(stem)
    header = {
        "n": vc.n,
        "bond_qubits": vc.bond_qubits,
        "kept_bonds": list(vc.kept_bonds),
        "gate_targets": [list(g.targets) for g in vc.gates],
        "gate_shapes": [list(g.matrix.shape) for g in vc.gates],
        "dtype": "complex128 little-endian, interleaved (re, im)",
        "postselect_legs": [[k, list(q)] for k, q in vc.postselect_legs],
        "expected_output": [[float(z.real), float(z.imag)] for z in vc.expected_output],
        "residual_norm": vc.residual_norm,
        "source_fidelity": vc.source_fidelity,
    }
    header_path.write_text(json.dumps(header, indent=2))
    with open(blob_path, "wb") as fh:
        for g in vc.gates:
            fh.write(np.ascontiguousarray(g.matrix, dtype="<c16").tobytes())
    return header_path, blob_path


def load_verifier(stem) -> VerifierCircuit:
    header_path, blob_path = _stem(stem)
    h = json.loads(header_path.read_text())
    raw = np.fromfile(blob_path, dtype="<c16")
    gates, pos = [], 0
    for targets, shape in zip(h["gate_targets"], h["gate_shapes"]):
        size = shape[0] * shape[1]
        mat = raw[pos : pos + size].reshape(shape).astype(np.complex128)
        pos += size
        gates.append(Gate("U", tuple(targets), matrix=mat))
    if pos != raw.size:
        raise ValueError(f"{blob_path} has {raw.size - pos} trailing amplitudes")
    return VerifierCircuit(
        n=h["n"],
        bond_qubits=h["bond_qubits"],
        gates=tuple(gates),
        kept_bonds=tuple(h["kept_bonds"]),
        postselect_legs=tuple((k, tuple(q)) for k, q in h["postselect_legs"]),
        expected_output=np.array([complex(re, im) for re, im in h["expected_output"]]),
        residual_norm=float(h["residual_norm"]),
        source_fidelity=h["source_fidelity"],
    )


def random_product_state(n: int, rng: np.random.Generator) -> ComplexArray:
    """Haar-random single-qubit factors, shape ``(n, 2)``."""
    z = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def product_to_vector(factors: Sequence) -> ComplexArray:
    out = np.ones(1, dtype=np.complex128)
    for f in factors:
        out = np.kron(out, f)
    return out
