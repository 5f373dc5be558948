"""Depth estimates on a 2D nearest-neighbour qubit array.

Depths are serial counts: every gate occupies its own layer, weighted by
``d2`` per entangling gate and ``d1`` per single-qubit gate. Logical
qubits sit on a rectangular grid in snake order, so consecutive indices
are always grid neighbours.

* QFT is laid out as the nearest-neighbour swap network, which gives a
  quadratic depth.
* MCX is decomposed to {RZ, RY, CNOT}. A CNOT between qubits at grid
  distance ``d`` pays ``2 (d - 1)`` SWAPs to bring the pair together and
  back.
* A verifier gate on ``k`` qubits costs the quantum-Shannon-decomposition
  CNOT bound for ``k`` qubits, plus one shift of the bond register past a
  (psi', psi) pair per gate.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache

from .circuit_ir import Circuit, Gate, build_mcx, decompose_to_rotations

CIRCUIT_KINDS = ("qft", "mcx")
UNITARY_COSTS = ("qsd", "zero")


@dataclass(frozen=True)
class DepthModel:
    d1: float = 0.0
    d2: float = 1.0
    unitary_cost: str = "qsd"
    swap_cost: int = 3
    grid_cols: int | None = None  # None: near-square grid sized to the register
    verifier_routing: bool = True

    def __post_init__(self):
        if self.d1 < 0 or self.d2 <= 0:
            raise ValueError("need d1 >= 0 and d2 > 0")
        if self.swap_cost < 1:
            raise ValueError("swap_cost must be >= 1")
        if self.unitary_cost not in UNITARY_COSTS:
            raise ValueError(f"unitary_cost must be one of {UNITARY_COSTS}")
        if self.grid_cols is not None and self.grid_cols < 1:
            raise ValueError("grid_cols must be positive")


def degenerate_model() -> DepthModel:
    """Verifier gates and routing are free; only circuit depth counts."""
    return DepthModel(unitary_cost="zero", verifier_routing=False)


def qsd_cnot_count(k: int) -> int:
    """CNOT count of a generic k-qubit unitary, ``ceil(23/48 4^k - 3/2 2^k + 4/3)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return 0
    exact = Fraction(23, 48) * 4**k - Fraction(3, 2) * 2**k + Fraction(4, 3)
    return math.ceil(exact)


def _unitary_depth(k: int, model: DepthModel) -> float:
    if model.unitary_cost == "zero":
        return 0.0
    count = qsd_cnot_count(k)
    return count * model.d2 + (count + 1) * model.d1


# -- grid geometry --------------------------------------------------------------


def grid_columns(n_sites: int, model: DepthModel) -> int:
    if model.grid_cols is not None:
        return model.grid_cols
    return max(1, math.ceil(math.sqrt(n_sites)))


def snake_coords(index: int, cols: int) -> tuple[int, int]:
    row, col = divmod(index, cols)
    if row % 2:
        col = cols - 1 - col
    return row, col


def grid_distance(a: int, b: int, cols: int) -> int:
    ra, ca = snake_coords(a, cols)
    rb, cb = snake_coords(b, cols)
    return abs(ra - rb) + abs(ca - cb)


# -- QFT ------------------------------------------------------------------------


def build_qft_line(n: int) -> tuple[Circuit, list[int]]:
    """QFT using only nearest-neighbour CP and SWAP gates.

    Returns the circuit and ``order``, where ``order[p]`` is the logical
    QFT qubit found at line position ``p`` at the end. The final SWAP of the
    network only reorders outputs and is omitted.
    """
    at = list(range(n))  # at[p] = logical qubit at position p
    gates: list[Gate] = []
    for j in range(n):
        p = at.index(j)
        gates.append(Gate("H", (p,)))
        for k in range(j + 1, n):
            q = at.index(k)
            if abs(q - p) != 1:  # pragma: no cover - the network keeps them adjacent
                raise RuntimeError("swap network lost adjacency")
            gates.append(Gate("CP", (p, q), Fraction(1, 2 ** (k - j))))
            last = j == n - 2 and k == n - 1
            if not last:
                gates.append(Gate("SWAP", (p, q)))
                at[p], at[q] = at[q], at[p]
                p = q
    return Circuit(n, gates), at


def _gate_depth(g: Gate, model: DepthModel) -> float:
    if g.kind in ("H", "X", "RZ", "RY", "RX"):
        return model.d1
    if g.kind == "CP":
        return 2 * model.d2 + 3 * model.d1
    if g.kind == "SWAP":
        return model.swap_cost * model.d2
    if g.kind in ("CNOT", "CZ"):
        return model.d2 + (2 * model.d1 if g.kind == "CZ" else 0.0)
    raise ValueError(f"no depth rule for {g.kind}")


def serial_depth(c: Circuit, model: DepthModel) -> float:
    """Serial depth of a circuit over nearest-neighbour gates and CP/SWAP, with snake routing."""
    cols = grid_columns(c.n_qubits, model)
    total = 0.0
    for g in c.gates:
        total += _gate_depth(g, model)
        if g.width == 2:
            dist = grid_distance(g.targets[0], g.targets[1], cols)
            total += 2 * max(dist - 1, 0) * model.swap_cost * model.d2
    return total


def qft_depth_closed_form(n: int, model: DepthModel) -> float:
    pairs = n * (n - 1) // 2
    swaps = max(pairs - 1, 0)
    return pairs * (2 * model.d2 + 3 * model.d1) + swaps * model.swap_cost * model.d2 + n * model.d1


@lru_cache(maxsize=None)
def _mcx_rotation_circuit(n: int) -> Circuit:
    return decompose_to_rotations(build_mcx(n - 1))


def depth_circuit_2d(kind: str, n: int, model: DepthModel = DepthModel()) -> float:
    kind = kind.lower()
    if kind == "qft":
        if n < 1:
            raise ValueError("QFT needs n >= 1")
        return qft_depth_closed_form(n, model)
    if kind == "mcx":
        if n < 2:
            raise ValueError("MCX needs at least 2 qubits")
        return serial_depth(_mcx_rotation_circuit(n), model)
    raise ValueError(f"kind must be one of {CIRCUIT_KINDS}")


# -- verifier -------------------------------------------------------------------


def bond_qubits(chi: int) -> int:
    if chi < 1:
        raise ValueError("chi must be >= 1")
    return math.ceil(math.log2(chi)) if chi > 1 else 0


def verifier_gate_width(chi: int) -> int:
    return 2 + bond_qubits(chi)


def depth_verifier_2d(kind: str, n: int, chi: int, model: DepthModel = DepthModel()) -> float:
    """Depth of the n-gate verifier staircase for bond dimension ``chi``."""
    if kind.lower() not in CIRCUIT_KINDS:
        raise ValueError(f"kind must be one of {CIRCUIT_KINDS}")
    if n < 1:
        raise ValueError("n must be >= 1")
    b = bond_qubits(chi)
    per_gate = _unitary_depth(2 + b, model)
    shift = 2 * b * model.swap_cost * model.d2 if model.verifier_routing else 0.0
    # one register shift is charged per gate (the last one is an overcount),
    # which keeps the depth strictly proportional to n
    return n * (per_gate + shift)


# -- crossover ------------------------------------------------------------------


@dataclass
class CrossoverReport:
    circuit_kind: str
    chi: int
    n_star: int | None
    curves: list[tuple[int, float, float]] = field(default_factory=list)
    model: dict = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.n_star is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["curves"] = [list(t) for t in self.curves]
        return d

    def curves_csv(self) -> str:
        lines = ["n,circuit_depth,verifier_depth"]
        lines += [f"{n},{c:.9g},{v:.9g}" for n, c, v in self.curves]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def find_crossover(
    kind: str, chi: int, model: DepthModel = DepthModel(), n_max: int = 256, n_min: int | None = None
) -> CrossoverReport:
    """Smallest n with verifier depth strictly below circuit depth (None when absent)."""
    kind = kind.lower()
    start = n_min if n_min is not None else (2 if kind == "mcx" else 1)
    curves, n_star = [], None
    for n in range(start, n_max + 1):
        c = depth_circuit_2d(kind, n, model)
        v = depth_verifier_2d(kind, n, chi, model)
        curves.append((n, c, v))
        if n_star is None and v < c:
            n_star = n
    return CrossoverReport(kind, chi, n_star, curves, asdict(model))
