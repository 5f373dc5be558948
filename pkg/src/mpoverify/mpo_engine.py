"""Circuit to matrix-product-operator conversion with bond truncation.

Every site tensor has axes ``(left, out, in, right)`` with physical
extent 2 and boundary bonds of extent 1. The operator represented is
``U[o_0..o_{n-1}, i_0..i_{n-1}]`` with qubit 0 most significant, the same
convention as :func:`mpoverify.circuit_ir.circuit_to_dense`.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit_ir import MAX_DENSE_QUBITS, Circuit, Gate, gate_matrix
from .tensor_core import DEFAULT_REL_CUTOFF, ComplexArray, as_tensor, svd_split

ROUTING_MODES = ("gate_mpo", "swap")


@dataclass(frozen=True, eq=False)
class MPO:
    sites: tuple[ComplexArray, ...]
    discarded_weight: float = 0.0
    chi_max: int | None = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        sites = tuple(as_tensor(s) for s in self.sites)
        if not sites:
            raise ValueError("an MPO needs at least one site")
        for k, s in enumerate(sites):
            if s.ndim != 4 or s.shape[1:3] != (2, 2):
                raise ValueError(f"site {k} must have shape (l, 2, 2, r), got {s.shape}")
        if sites[0].shape[0] != 1 or sites[-1].shape[3] != 1:
            raise ValueError("boundary bonds must have extent 1")
        for k in range(len(sites) - 1):
            if sites[k].shape[3] != sites[k + 1].shape[0]:
                raise ValueError(
                    f"bond mismatch between sites {k} and {k + 1}: "
                    f"{sites[k].shape[3]} vs {sites[k + 1].shape[0]}"
                )
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def bond_dims(self) -> list[int]:
        """Internal bond extents, ``n - 1`` entries."""
        return [s.shape[3] for s in self.sites[:-1]]


def identity_mpo(n: int) -> MPO:
    eye = np.eye(2, dtype=np.complex128).reshape(1, 2, 2, 1)
    return MPO(tuple(eye.copy() for _ in range(n)))


# -- internal mutable builder ---------------------------------------------


class _Chain:
    """Mutable site list kept in mixed-canonical form around ``center``."""

    def __init__(self, n: int, chi_max: int | None, rel_cutoff: float):
        self.sites = list(identity_mpo(n).sites)
        self.center = 0
        self.chi_max = chi_max
        self.rel_cutoff = rel_cutoff
        self.discarded = 0.0

    def _left_orthonormalize(self, k: int) -> None:
        s = self.sites[k]
        l, o, i, r = s.shape
        q, rr = np.linalg.qr(s.reshape(l * o * i, r))
        # positive diagonal in R makes the factorization unique
        diag = np.diagonal(rr)
        phase = np.where(np.abs(diag) > 0, diag / np.where(diag == 0, 1, np.abs(diag)), 1)
        q = q * phase
        rr = rr * phase.conj()[:, None]
        self.sites[k] = q.reshape(l, o, i, q.shape[1])
        self.sites[k + 1] = np.tensordot(rr, self.sites[k + 1], axes=(1, 0))

    def _right_orthonormalize(self, k: int) -> None:
        s = self.sites[k]
        l, o, i, r = s.shape
        q, rr = np.linalg.qr(s.reshape(l, o * i * r).T)
        self.sites[k] = q.T.reshape(q.shape[1], o, i, r)
        self.sites[k - 1] = np.tensordot(self.sites[k - 1], rr.T, axes=(3, 0))

    def move_center(self, target: int) -> None:
        while self.center < target:
            self._left_orthonormalize(self.center)
            self.center += 1
        while self.center > target:
            self._right_orthonormalize(self.center)
            self.center -= 1

    def apply(self, gate_sites: list[ComplexArray], start: int) -> None:
        """Apply a gate MPO covering sites ``start .. start+len-1`` after the current operator."""
        stop = start + len(gate_sites) - 1
        self.move_center(start)
        for offset, g in enumerate(gate_sites):
            k = start + offset
            s = self.sites[k]
            # new[l, gl, o, i, r, gr] = sum_m g[gl, o, m, gr] s[l, m, i, r]
            new = np.einsum("aomb,lmir->laoirb", g, s)
            l, a, o, i, r, b = new.shape
            self.sites[k] = new.reshape(l * a, o, i, r * b)
        # sweep right with exact QR, then back with truncation
        for k in range(start, stop):
            self._left_orthonormalize(k)
        self.center = stop
        for k in range(stop, start, -1):
            self._truncate_bond(k - 1)
        self.center = start

    def _truncate_bond(self, k: int) -> None:
        # the center is at k+1; merge (k, k+1), split, and leave the center at k
        a, b = self.sites[k], self.sites[k + 1]
        pair = np.tensordot(a, b, axes=(3, 0))  # l o i | o' i' r
        res = svd_split(pair, [0, 1, 2], max_kept=self.chi_max, rel_cutoff=self.rel_cutoff)
        self.discarded += res.discarded_weight
        self.sites[k] = res.left * res.singular_values
        self.sites[k + 1] = res.right

    def finish(self) -> list[ComplexArray]:
        self.move_center(0)
        self.move_center(len(self.sites) - 1)
        return self.sites


def gate_to_mpo(mat: ComplexArray, targets: Sequence[int]) -> tuple[int, list[ComplexArray]]:
    """Exact MPO of a gate over the contiguous span of its targets.

    Returns the first site of the span and one ``(l, o, i, r)`` tensor per
    span site; sites in the span that the gate does not touch carry an
    identity.
    """
    w = len(targets)
    order = np.argsort(targets)
    pos = [int(targets[j]) for j in order]
    t = np.asarray(mat, dtype=np.complex128).reshape((2,) * (2 * w))
    t = np.transpose(t, list(order) + [w + j for j in order])
    # interleave to (o_0, i_0, o_1, i_1, ...)
    t = np.transpose(t, [x for j in range(w) for x in (j, w + j)])
    cores: list[ComplexArray] = []
    rest = t.reshape((1,) + t.shape)
    for j in range(w - 1):
        res = svd_split(rest, [0, 1, 2], rel_cutoff=1e-14)
        cores.append(res.left)
        rest = np.tensordot(np.diag(res.singular_values), res.right, axes=(1, 0))
    cores.append(rest.reshape(rest.shape + (1,)))
    out: list[ComplexArray] = []
    for j in range(w):
        out.append(cores[j])
        if j < w - 1:
            chi = cores[j].shape[3]
            for _ in range(pos[j + 1] - pos[j] - 1):
                filler = np.einsum("ab,oi->aoib", np.eye(chi), np.eye(2)).astype(np.complex128)
                out.append(filler)
    return pos[0], out


def controlled_gate_mpo(u: ComplexArray, targets: Sequence[int]) -> tuple[int, list[ComplexArray]]:
    """Bond-2 MPO of a multi-controlled single-qubit gate, built without its dense matrix.

    ``targets`` lists the controls followed by the target. The operator is
    ``I + P1 x ... x P1 x (u - I)``: one bond channel carries the identity,
    the other the projector product.
    """
    eye = np.eye(2, dtype=np.complex128)
    p1 = np.diag([0.0, 1.0]).astype(np.complex128)
    role = {int(q): p1 for q in targets[:-1]}
    role[int(targets[-1])] = np.asarray(u, dtype=np.complex128) - eye
    lo, hi = min(role), max(role)
    sites = []
    for p in range(lo, hi + 1):
        b = role.get(p, eye)
        if p == lo:
            w = np.zeros((1, 2, 2, 2), dtype=np.complex128)
            w[0, :, :, 0], w[0, :, :, 1] = eye, b
        elif p == hi:
            w = np.zeros((2, 2, 2, 1), dtype=np.complex128)
            w[0, :, :, 0], w[1, :, :, 0] = eye, b
        else:
            w = np.zeros((2, 2, 2, 2), dtype=np.complex128)
            w[0, :, :, 0], w[1, :, :, 1] = eye, b
        sites.append(w)
    return lo, sites


_SWAP = np.eye(4, dtype=np.complex128)[[0, 2, 1, 3]]
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def _swap_routed(gate: Gate, mat: ComplexArray) -> list[tuple[ComplexArray, tuple[int, ...]]]:
    """Rewrite a gate as adjacent SWAPs, a contiguous gate, and the SWAPs undone."""
    pos = sorted(gate.targets)
    anchor = pos[0]
    moves: list[tuple[int, int]] = []
    where = {q: q for q in pos}  # logical target -> current site
    for j, q in enumerate(pos[1:], start=1):
        goal = anchor + j
        cur = where[q]
        while cur > goal:
            moves.append((cur - 1, cur))
            cur -= 1
        where[q] = goal
    seq = [(_SWAP, m) for m in moves]
    seq.append((mat, tuple(where[q] for q in gate.targets)))
    seq.extend((_SWAP, m) for m in reversed(moves))
    return seq


def zip_up(
    c: Circuit,
    chi_max: int | None = None,
    rel_cutoff: float = DEFAULT_REL_CUTOFF,
    routing: str = "swap",
    metadata: Mapping | None = None,
) -> MPO:
    """Absorb the gates of ``c`` one by one into an MPO with bonds capped at ``chi_max``.

    ``routing='gate_mpo'`` applies each gate as an exact MPO spanning its
    targets; ``routing='swap'`` first moves targets together with adjacent
    SWAPs. Both truncate after every gate and finish with a left-to-right
    orthonormalization sweep, leaving the norm on the last site.
    """
    if routing not in ROUTING_MODES:
        raise ValueError(f"routing must be one of {ROUTING_MODES}")
    if chi_max is not None and chi_max < 1:
        raise ValueError("chi_max must be positive")
    if c.params:
        raise ValueError(f"bind free parameters first: {list(c.params)[:5]}")
    chain = _Chain(c.n_qubits, chi_max, rel_cutoff)
    for g in c.gates:
        # multi-controlled gates never go through their dense matrix
        structured = g.kind in ("MCX", "MCU")
        if structured:
            mat = _X if g.kind == "MCX" else np.asarray(g.matrix, dtype=np.complex128)
        else:
            mat = gate_matrix(g)
        pieces = [(mat, g.targets)] if routing == "gate_mpo" else _swap_routed(g, mat)
        for m, targets in pieces:
            if structured and m is mat:
                start, gsites = controlled_gate_mpo(m, targets)
            else:
                start, gsites = gate_to_mpo(m, targets)
            chain.apply(gsites, start)
    sites = chain.finish()
    return MPO(tuple(sites), chain.discarded, chi_max, metadata or {})


def zip_up_qft(n: int, chi_max: int | None = None, rel_cutoff: float = DEFAULT_REL_CUTOFF) -> MPO:
    """QFT MPO built without the reversal network; reversal kept as metadata."""
    from .circuit_ir import build_qft

    return zip_up(
        build_qft(n, include_bit_reversal=False),
        chi_max,
        rel_cutoff,
        metadata={"kind": "qft", "output_permutation": list(range(n - 1, -1, -1))},
    )


def mpo_to_dense(m: MPO) -> ComplexArray:
    n = m.n_sites
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense contraction limited to {MAX_DENSE_QUBITS} sites, got {n}")
    acc = m.sites[0]  # (1, o.., i.., r) built up as (o-block, i-block, r)
    acc = acc.reshape(2, 2, acc.shape[3])
    for s in m.sites[1:]:
        # acc[O, I, r] x s[r, o, i, r'] -> [O o, I i, r']
        nxt = np.tensordot(acc, s, axes=(2, 0))
        d_o, d_i = nxt.shape[0], nxt.shape[1]
        nxt = np.transpose(nxt, (0, 2, 1, 3, 4))
        acc = nxt.reshape(d_o * 2, d_i * 2, s.shape[3])
    return acc[:, :, 0]


def operator_fidelity(a, b) -> float:
    """Normalized trace overlap ``|Tr(a^H b)| / 2^n`` (``b`` is the ideal unitary)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(abs(np.vdot(a, b)) / a.shape[0])


def bond_profile(m: MPO) -> tuple[list[int], int]:
    dims = m.bond_dims
    return dims, max(dims, default=1)


def frobenius_norm(m: MPO) -> float:
    """Frobenius norm computed on the chain (no dense contraction)."""
    env = np.ones((1, 1), dtype=np.complex128)
    for s in m.sites:
        env = np.einsum("ab,aoic,boid->cd", env, s, s.conj())
    return float(np.sqrt(abs(env[0, 0])))


# -- serialization --------------------------------------------------------


def _write_blob(path: Path, sites: Sequence[ComplexArray]) -> None:
    with open(path, "wb") as fh:
        for s in sites:
            fh.write(np.ascontiguousarray(s, dtype="<c16").tobytes())


def _read_blob(path: Path, shapes: Sequence[Sequence[int]]) -> list[ComplexArray]:
    raw = np.fromfile(path, dtype="<c16")
    need = sum(int(np.prod(s)) for s in shapes)
    if raw.size != need:
        raise ValueError(f"{path} holds {raw.size} amplitudes, header expects {need}")
    out, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(raw[pos : pos + size].reshape(shape).astype(np.complex128))
        pos += size
    return out


def _stem_paths(stem) -> tuple[Path, Path]:
    stem = str(stem)
    for suffix in (".mpo.json", ".mpo.bin"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    return Path(stem + ".mpo.json"), Path(stem + ".mpo.bin")


def save_mpo(m: MPO, stem) -> tuple[Path, Path]:
    header_path, blob_path = _stem_paths(stem)
    header = {
        "n_sites": m.n_sites,
        "bond_dims": m.bond_dims,
        "site_shapes": [list(s.shape) for s in m.sites],
        "dtype": "complex128 little-endian, interleaved (re, im)",
        "discarded_weight": m.discarded_weight,
        "chi_max": m.chi_max,
        "metadata": dict(m.metadata),
    }
    header_path.write_text(json.dumps(header, indent=2))
    _write_blob(blob_path, m.sites)
    return header_path, blob_path


def load_mpo(stem) -> MPO:
    header_path, blob_path = _stem_paths(stem)
    header = json.loads(header_path.read_text())
    sites = _read_blob(blob_path, header["site_shapes"])
    return MPO(
        tuple(sites),
        float(header.get("discarded_weight", 0.0)),
        header.get("chi_max"),
        header.get("metadata", {}),
    )
