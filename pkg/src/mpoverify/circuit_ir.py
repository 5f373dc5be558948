"""Gate-level circuits with symbolic rotation parameters.

A gate parameter is one of

* ``float`` -- a bound angle in radians,
* ``Fraction`` -- an exact multiple of pi (used for QFT phases),
* ``str`` -- the name of a free parameter registered on the circuit.

Qubit 0 is the most significant bit of a basis index. A gate's matrix is
written in the order of its ``targets`` tuple (first target most
significant). For controlled kinds the controls come first and the target
last.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import scipy.linalg

from .tensor_core import ComplexArray, is_unitary

MAX_DENSE_QUBITS = 12

ROTATION_KINDS = frozenset({"RZ", "RY", "RX", "CP"})
ONE_QUBIT_KINDS = frozenset({"H", "X", "RZ", "RY", "RX"})
TWO_QUBIT_KINDS = frozenset({"CP", "CNOT", "CZ", "SWAP"})
ALL_KINDS = ONE_QUBIT_KINDS | TWO_QUBIT_KINDS | {"MCX", "MCU", "U"}

_FIXED_WIDTH = {**{k: 1 for k in ONE_QUBIT_KINDS}, **{k: 2 for k in TWO_QUBIT_KINDS}}

Param = float | Fraction | str | None

_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def rz(theta: float) -> ComplexArray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def ry(theta: float) -> ComplexArray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rx(theta: float) -> ComplexArray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def cphase(theta: float) -> ComplexArray:
    return np.diag([1, 1, 1, np.exp(1j * theta)]).astype(np.complex128)


def controlled(u: ComplexArray, n_controls: int) -> ComplexArray:
    u = np.asarray(u, dtype=np.complex128)
    d = 2 ** (n_controls + 1)
    m = np.eye(d, dtype=np.complex128)
    m[d - 2 :, d - 2 :] = u
    return m


@dataclass(frozen=True, eq=False)
class Gate:
    kind: str
    targets: tuple[int, ...]
    param: Param = None
    matrix: ComplexArray | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"{self.kind} targets must be distinct, got {self.targets}")
        width = _FIXED_WIDTH.get(self.kind)
        if width is not None and len(self.targets) != width:
            raise ValueError(f"{self.kind} acts on {width} qubit(s), got {self.targets}")
        if self.kind in ROTATION_KINDS and self.param is None:
            raise ValueError(f"{self.kind} needs an angle")
        if self.kind in ("MCX", "MCU") and len(self.targets) < 2:
            raise ValueError(f"{self.kind} needs at least one control")
        if self.kind in ("MCU", "U"):
            if self.matrix is None:
                raise ValueError(f"{self.kind} needs an explicit matrix")
            m = np.asarray(self.matrix, dtype=np.complex128)
            dim = 2 if self.kind == "MCU" else 2 ** len(self.targets)
            if m.shape != (dim, dim):
                raise ValueError(f"{self.kind} matrix must be {dim}x{dim}, got {m.shape}")
            if not is_unitary(m, 1e-10):
                raise ValueError(f"{self.kind} matrix is not unitary")
            object.__setattr__(self, "matrix", m)

    @property
    def width(self) -> int:
        return len(self.targets)

    @property
    def is_free(self) -> bool:
        return isinstance(self.param, str)

    def angle(self, values: Mapping[str, float] | None = None) -> float:
        return resolve_angle(self.param, values)

    def __repr__(self) -> str:
        p = "" if self.param is None else f", {self.param!r}"
        return f"Gate({self.kind}, {self.targets}{p})"


def resolve_angle(param: Param, values: Mapping[str, float] | None = None) -> float:
    if isinstance(param, Fraction):
        return float(param) * math.pi
    if isinstance(param, str):
        if values is None or param not in values:
            raise ValueError(f"unbound parameter {param!r}")
        return float(values[param])
    if param is None:
        raise ValueError("gate has no angle")
    return float(param)


def gate_matrix(gate: Gate, values: Mapping[str, float] | None = None) -> ComplexArray:
    """Unitary of ``gate`` in the order of its targets."""
    k = gate.kind
    if k == "H":
        return _H.copy()
    if k == "X":
        return _X.copy()
    if k == "RZ":
        return rz(gate.angle(values))
    if k == "RY":
        return ry(gate.angle(values))
    if k == "RX":
        return rx(gate.angle(values))
    if k == "CP":
        return cphase(gate.angle(values))
    if k == "CNOT":
        return controlled(_X, 1)
    if k == "CZ":
        return np.diag([1, 1, 1, -1]).astype(np.complex128)
    if k == "SWAP":
        return np.eye(4, dtype=np.complex128)[[0, 2, 1, 3]]
    if k == "MCX":
        return controlled(_X, gate.width - 1)
    if k == "MCU":
        return controlled(gate.matrix, gate.width - 1)
    return np.asarray(gate.matrix, dtype=np.complex128).copy()


@dataclass(frozen=True, eq=False)
class Circuit:
    """Ordered gate list over ``n_qubits``.

    ``params`` maps every free parameter name to its nominal angle (or
    ``None`` when there is no natural default).
    """

    n_qubits: int
    gates: tuple[Gate, ...] = ()
    params: Mapping[str, float | None] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "params", dict(self.params))
        for g in self.gates:
            if max(g.targets) >= self.n_qubits or min(g.targets) < 0:
                raise ValueError(f"{g!r} is outside a {self.n_qubits}-qubit circuit")
            if g.is_free and g.param not in self.params:
                raise ValueError(f"free parameter {g.param!r} is not registered")

    @property
    def free_params(self) -> tuple[str, ...]:
        return tuple(self.params)

    @property
    def nominal_values(self) -> dict[str, float]:
        missing = [k for k, v in self.params.items() if v is None]
        if missing:
            raise ValueError(f"parameters without nominal value: {missing}")
        return {k: float(v) for k, v in self.params.items()}

    def append(self, other: Circuit) -> Circuit:
        if other.n_qubits != self.n_qubits:
            raise ValueError("circuit widths differ")
        clash = set(self.params) & set(other.params)
        if clash:
            raise ValueError(f"parameter names clash: {sorted(clash)}")
        return Circuit(self.n_qubits, self.gates + other.gates, {**self.params, **other.params})

    def rotation_gates(self) -> list[int]:
        """Indices of gates carrying an angle."""
        return [i for i, g in enumerate(self.gates) if g.kind in ROTATION_KINDS]

    def __len__(self) -> int:
        return len(self.gates)


# -- builders -------------------------------------------------------------


def build_qft(n: int, include_bit_reversal: bool = False) -> Circuit:
    """Textbook QFT: a Hadamard per qubit followed by CP(pi/2^k) ladders."""
    if n < 1:
        raise ValueError("QFT needs n >= 1")
    gates: list[Gate] = []
    for j in range(n):
        gates.append(Gate("H", (j,)))
        for k in range(j + 1, n):
            gates.append(Gate("CP", (k, j), Fraction(1, 2 ** (k - j))))
    if include_bit_reversal:
        for j in range(n // 2):
            gates.append(Gate("SWAP", (j, n - 1 - j)))
    return Circuit(n, gates)


def build_mcx(n_controls: int) -> Circuit:
    if n_controls < 1:
        raise ValueError("MCX needs at least one control")
    return Circuit(n_controls + 1, [Gate("MCX", tuple(range(n_controls + 1)))])


def build_mcu(n_controls: int, u) -> Circuit:
    if n_controls < 1:
        raise ValueError("MCU needs at least one control")
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (2, 2) or not is_unitary(u, 1e-10):
        raise ValueError("MCU target operation must be a 2x2 unitary")
    return Circuit(n_controls + 1, [Gate("MCU", tuple(range(n_controls + 1)), matrix=u)])


# -- dense oracle ----------------------------------------------------------


def apply_matrix(state: np.ndarray, mat: ComplexArray, targets: Sequence[int]) -> np.ndarray:
    """Apply ``mat`` to the qubit axes ``targets`` of a ``(2,)*n + rest`` tensor."""
    k = len(targets)
    op = np.asarray(mat).reshape((2,) * (2 * k))
    out = np.tensordot(op, state, axes=(list(range(k, 2 * k)), list(targets)))
    return np.moveaxis(out, list(range(k)), list(targets))


def circuit_to_dense(c: Circuit, values: Mapping[str, float] | None = None) -> ComplexArray:
    """Brute-force ``2^n x 2^n`` unitary of ``c`` (gates applied in order)."""
    n = c.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense simulation limited to {MAX_DENSE_QUBITS} qubits, got {n}")
    dim = 2**n
    state = np.eye(dim, dtype=np.complex128).reshape((2,) * n + (dim,))
    for g in c.gates:
        state = apply_matrix(state, gate_matrix(g, values), g.targets)
    return state.reshape(dim, dim)


def equal_up_to_phase(a, b, tol: float = 1e-8) -> bool:
    return phase_aligned_deviation(a, b) < tol


def phase_aligned_deviation(a, b) -> float:
    """Max entry deviation of ``e^{-i phi} a - b`` for the phase maximising |Tr(a^H b)|."""
    a = np.asarray(a)
    b = np.asarray(b)
    overlap = np.vdot(a, b)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(a * phase - b)))


# -- parameters --------------------------------------------------------------


def bind_parameters(c: Circuit, values: Mapping[str, float]) -> Circuit:
    """Substitute every free parameter by its value; names must match exactly."""
    missing = sorted(set(c.params) - set(values))
    extra = sorted(set(values) - set(c.params))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing {missing}")
        if extra:
            parts.append(f"superfluous {extra}")
        raise ValueError("parameter binding mismatch: " + "; ".join(parts))
    gates = [
        replace(g, param=float(values[g.param])) if g.is_free else g for g in c.gates
    ]
    return Circuit(c.n_qubits, gates, {})


def shift_angles(c: Circuit, offsets: Sequence[float]) -> Circuit:
    """Add ``offsets[j]`` to the j-th rotation angle (bound circuits only)."""
    idx = c.rotation_gates()
    if len(offsets) != len(idx):
        raise ValueError(f"expected {len(idx)} offsets, got {len(offsets)}")
    gates = list(c.gates)
    for j, i in enumerate(idx):
        g = gates[i]
        if g.is_free:
            raise ValueError("bind parameters before shifting angles")
        gates[i] = replace(g, param=g.angle() + float(offsets[j]))
    return Circuit(c.n_qubits, gates, c.params)


# -- rotation-level decomposition ------------------------------------------


def zyz_angles(u: ComplexArray) -> tuple[float, float, float, float]:
    """Return ``(alpha, beta, gamma, delta)`` with u = e^{i alpha} RZ(beta) RY(gamma) RZ(delta)."""
    u = np.asarray(u, dtype=np.complex128)
    det = np.linalg.det(u)
    alpha = float(np.angle(det) / 2)
    v = u * np.exp(-1j * alpha)
    # v = [[e^{-i(b+d)/2} c, -e^{-i(b-d)/2} s], [e^{i(b-d)/2} s, e^{i(b+d)/2} c]]
    gamma = 2 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    if abs(v[0, 0]) > 1e-12 and abs(v[1, 0]) > 1e-12:
        plus = 2 * float(np.angle(v[1, 1]))
        minus = 2 * float(np.angle(v[1, 0]))
    elif abs(v[1, 0]) <= 1e-12:
        plus, minus = 2 * float(np.angle(v[1, 1])), 0.0
    else:
        plus, minus = 0.0, 2 * float(np.angle(v[1, 0]))
    beta = (plus + minus) / 2
    delta = (plus - minus) / 2
    # the e^{i alpha} convention leaves a sign ambiguity; fix it against the input
    test = np.exp(1j * alpha) * rz(beta) @ ry(gamma) @ rz(delta)
    if not np.allclose(test, u, atol=1e-9):
        alpha += math.pi
    return alpha, beta, gamma, delta


_H_ZYZ = zyz_angles(_H)


class _Emitter:
    """Accumulates RZ/RY/CNOT gates and registers every angle as a parameter."""

    def __init__(self, prefix: str = "t"):
        self.gates: list[Gate] = []
        self.params: dict[str, float] = {}
        self.prefix = prefix

    def rot(self, kind: str, q: int, angle: float | str) -> None:
        if isinstance(angle, str):
            self.gates.append(Gate(kind, (q,), angle))
            return
        name = f"{self.prefix}{len(self.params)}"
        self.params[name] = float(angle)
        self.gates.append(Gate(kind, (q,), name))

    def cnot(self, c: int, t: int) -> None:
        self.gates.append(Gate("CNOT", (c, t)))

    def euler(self, u: ComplexArray, q: int) -> None:
        _, beta, gamma, delta = _H_ZYZ if u is _H else zyz_angles(u)
        self.rot("RZ", q, delta)
        self.rot("RY", q, gamma)
        self.rot("RZ", q, beta)

    def controlled_u(self, c: int, t: int, u: ComplexArray) -> None:
        # C-U = P(alpha)_c . A X B X C with ABC = I
        alpha, beta, gamma, delta = zyz_angles(u)
        self.rot("RZ", t, (delta - beta) / 2)
        self.cnot(c, t)
        self.rot("RZ", t, -(delta + beta) / 2)
        self.rot("RY", t, -gamma / 2)
        self.cnot(c, t)
        self.rot("RY", t, gamma / 2)
        self.rot("RZ", t, beta)
        self.rot("RZ", c, alpha)

    def toffoli(self, a: int, b: int, t: int) -> None:
        quarter = math.pi / 4
        self.euler(_H, t)
        self.cnot(b, t)
        self.rot("RZ", t, -quarter)
        self.cnot(a, t)
        self.rot("RZ", t, quarter)
        self.cnot(b, t)
        self.rot("RZ", t, -quarter)
        self.cnot(a, t)
        self.rot("RZ", b, quarter)
        self.rot("RZ", t, quarter)
        self.euler(_H, t)
        self.cnot(a, b)
        self.rot("RZ", a, quarter)
        self.rot("RZ", b, -quarter)
        self.cnot(a, b)

    def mcx(self, controls: Sequence[int], t: int, free: Sequence[int]) -> None:
        controls = list(controls)
        m = len(controls)
        if m == 0:
            self.euler(_X, t)
        elif m == 1:
            self.cnot(controls[0], t)
        elif m == 2:
            self.toffoli(controls[0], controls[1], t)
        elif len(free) >= m - 2:
            self._mcx_dirty_chain(controls, t, list(free[: m - 2]))
        elif free:
            # split the controls and borrow one idle qubit
            a = free[0]
            m1 = (m + 1) // 2
            g1, g2 = controls[:m1], controls[m1:]
            for _ in range(2):
                self.mcx(g1, a, list(g2) + [t] + list(free[1:]))
                self.mcx(list(g2) + [a], t, list(g1) + list(free[1:]))
        else:
            self.mcu(controls, t, _X, free)

    def _mcx_dirty_chain(self, x: list[int], t: int, anc: list[int]) -> None:
        # m controls, m-2 borrowed ancillas, 4(m-2) Toffolis
        m = len(x)

        def ladder_down():
            for j in range(m - 2, 1, -1):
                self.toffoli(x[j], anc[j - 2], anc[j - 1])

        def ladder_up():
            for j in range(2, m - 1):
                self.toffoli(x[j], anc[j - 2], anc[j - 1])

        for _ in range(2):
            self.toffoli(x[m - 1], anc[m - 3], t)
            ladder_down()
            self.toffoli(x[0], x[1], anc[0])
            ladder_up()

    def mcu(self, controls: Sequence[int], t: int, u: ComplexArray, free: Sequence[int]) -> None:
        controls = list(controls)
        m = len(controls)
        if m == 0:
            self.euler(u, t)
            return
        if m == 1:
            self.controlled_u(controls[0], t, u)
            return
        v = _unitary_sqrt(u)
        last, rest = controls[-1], controls[:-1]
        self.controlled_u(last, t, v)
        self.mcx(rest, last, [t] + list(free))
        self.controlled_u(last, t, v.conj().T)
        self.mcx(rest, last, [t] + list(free))
        self.mcu(rest, t, v, [last] + list(free))

    def two_qubit(self, u: ComplexArray, a: int, b: int) -> None:
        """Cosine-sine split of a 4x4 unitary; ``a`` is the more significant qubit."""
        left, cs, right = scipy.linalg.cossin(u, p=2, q=2)
        self._multiplexed_1q(right[:2, :2], right[2:, 2:], a, b)
        theta = np.arctan2(np.diag(cs[2:, :2]).real, np.diag(cs[:2, :2]).real)
        phi0, phi1 = 2 * theta[0], 2 * theta[1]
        self.rot("RY", a, (phi0 + phi1) / 2)
        self.cnot(b, a)
        self.rot("RY", a, (phi0 - phi1) / 2)
        self.cnot(b, a)
        self._multiplexed_1q(left[:2, :2], left[2:, 2:], a, b)

    def _multiplexed_1q(self, l0: ComplexArray, l1: ComplexArray, a: int, b: int) -> None:
        # diag(l0, l1) = (I x V)(D + D^dag)(I x W) with l0 = V D W, l1 = V D^dag W
        t, v = scipy.linalg.schur(l0 @ l1.conj().T, output="complex")
        d = np.sqrt(np.diag(t).astype(np.complex128))
        w = np.diag(d) @ v.conj().T @ l1
        self.euler(w, b)
        p0, p1 = np.angle(d)
        # exp(i s Z_a) exp(i r Z_a Z_b) with s=(p0+p1)/2, r=(p0-p1)/2
        self.rot("RZ", a, -(p0 + p1))
        self.cnot(a, b)
        self.rot("RZ", b, -(p0 - p1))
        self.cnot(a, b)
        self.euler(v, b)


def _unitary_sqrt(u: ComplexArray) -> ComplexArray:
    t, z = scipy.linalg.schur(np.asarray(u, dtype=np.complex128), output="complex")
    return z @ np.diag(np.sqrt(np.diag(t))) @ z.conj().T


def decompose_to_rotations(c: Circuit, prefix: str = "t") -> Circuit:
    """Rewrite ``c`` over {RZ, RY, CNOT}, registering every angle as a parameter.

    The nominal values of the new parameters reproduce ``c`` up to a global
    phase. Single-qubit Clifford gates become full Z-Y-Z Euler triples;
    gates that already are RZ/RY rotations are kept as one rotation.
    """
    em = _Emitter(prefix)
    n = c.n_qubits
    for g in c.gates:
        k, q = g.kind, g.targets
        free = [j for j in range(n) if j not in q]
        if k in ("RZ", "RY"):
            angle = g.param if g.is_free else g.angle()
            em.rot(k, q[0], angle)
        elif k in ("H", "X", "RX"):
            em.euler(gate_matrix(g, c.params if g.is_free else None), q[0])
        elif k == "CNOT":
            em.cnot(*q)
        elif k == "CZ":
            em.euler(_H, q[1])
            em.cnot(*q)
            em.euler(_H, q[1])
        elif k == "CP":
            theta = g.angle(c.params if g.is_free else None)
            em.rot("RZ", q[0], theta / 2)
            em.rot("RZ", q[1], theta / 2)
            em.cnot(q[0], q[1])
            em.rot("RZ", q[1], -theta / 2)
            em.cnot(q[0], q[1])
        elif k == "SWAP":
            em.cnot(q[0], q[1])
            em.cnot(q[1], q[0])
            em.cnot(q[0], q[1])
        elif k == "MCX":
            em.mcx(q[:-1], q[-1], free)
        elif k == "MCU":
            em.mcu(q[:-1], q[-1], g.matrix, free)
        elif k == "U":
            if g.width == 1:
                em.euler(g.matrix, q[0])
            elif g.width == 2:
                em.two_qubit(g.matrix, q[0], q[1])
            else:
                raise ValueError(
                    f"opaque {g.width}-qubit gate cannot be decomposed (limit is 2 qubits)"
                )
        else:  # pragma: no cover - guarded by Gate validation
            raise ValueError(f"unsupported gate kind {k}")
    params = dict(em.params)
    for g in em.gates:
        if g.is_free and g.param not in params:
            params[g.param] = c.params[g.param]
    return Circuit(n, em.gates, params)


# -- JSON ------------------------------------------------------------------


def _param_to_json(p: Param):
    if p is None:
        return None
    if isinstance(p, Fraction):
        if p.numerator == 1:
            return {"pi_over": p.denominator}
        return {"pi_frac": [p.numerator, p.denominator]}
    if isinstance(p, str):
        return {"name": p}
    return float(p)


def _param_from_json(obj) -> Param:
    if obj is None:
        return None
    if isinstance(obj, dict):
        if "pi_over" in obj:
            return Fraction(1, int(obj["pi_over"]))
        if "pi_frac" in obj:
            num, den = obj["pi_frac"]
            return Fraction(int(num), int(den))
        if "name" in obj:
            return str(obj["name"])
        raise ValueError(f"unrecognised parameter object {obj}")
    return float(obj)


def circuit_to_json(c: Circuit) -> dict:
    gates = []
    for g in c.gates:
        entry = {"kind": g.kind, "targets": list(g.targets), "param": _param_to_json(g.param)}
        if g.matrix is not None:
            entry["matrix"] = [[[float(z.real), float(z.imag)] for z in row] for row in g.matrix]
        gates.append(entry)
    doc = {"n_qubits": c.n_qubits, "gates": gates}
    if c.params:
        doc["params"] = {k: (None if v is None else float(v)) for k, v in c.params.items()}
    return doc


def circuit_from_json(doc: Mapping) -> Circuit:
    gates = []
    for entry in doc["gates"]:
        matrix = None
        if "matrix" in entry:
            matrix = np.array([[complex(re, im) for re, im in row] for row in entry["matrix"]])
        gates.append(
            Gate(entry["kind"], tuple(entry["targets"]), _param_from_json(entry.get("param")), matrix)
        )
    return Circuit(int(doc["n_qubits"]), gates, dict(doc.get("params", {})))


def dumps(c: Circuit) -> str:
    return json.dumps(circuit_to_json(c), indent=2)


def loads(text: str) -> Circuit:
    return circuit_from_json(json.loads(text))


def count_kinds(gates: Iterable[Gate]) -> dict[str, int]:
    out: dict[str, int] = {}
    for g in gates:
        out[g.kind] = out.get(g.kind, 0) + 1
    return out
