"""Verifier-driven calibration of coherent errors.

Two schemes share the same objective, the mean verifier output fidelity
over a batch of random product trial states:

* method 1 appends a parameterized mitigation layer to the noisy circuit
  and tunes the layer;
* method 2 tunes the circuit's own rotation angles while the same
  coherent over-rotation stays on top of them.

The verifier itself is simulated noiselessly, and the mitigation layer is
noise-free; only the circuit under calibration carries the noise model.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.optimize

from .circuit_ir import (
    Circuit,
    Gate,
    bind_parameters,
    circuit_to_dense,
    decompose_to_rotations,
    ry,
    rz,
)
from .noisy_sim import NoiseModel, coherent_offsets, fidelity_eq1
from .verifier_synth import VerifierCircuit, product_to_vector, random_product_state, verify_batch


def sample_trial_state(n: int, rng: np.random.Generator) -> np.ndarray:
    """Product of ``n`` Haar-random qubit states, returned as ``(n, 2)`` factors."""
    return random_product_state(n, rng)


def sample_batch(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    return np.stack([sample_trial_state(n, rng) for _ in range(size)])


# -- mitigation layer --------------------------------------------------------


@dataclass(frozen=True)
class MitigationLayer:
    """``layers`` rounds of per-qubit RZ-RY-RZ rotations, optionally followed by a CZ ring."""

    n: int
    layers: int = 1
    entangle: bool = False

    def __post_init__(self):
        if self.n < 1 or self.layers < 0:
            raise ValueError("need n >= 1 and layers >= 0")

    @property
    def n_params(self) -> int:
        return 3 * self.n * self.layers

    def param_names(self) -> list[str]:
        return [
            f"e{l}_{q}_{a}" for l in range(self.layers) for q in range(self.n) for a in range(3)
        ]

    def _ring(self) -> list[tuple[int, int]]:
        if self.n < 2:
            return []
        pairs = [(q, q + 1) for q in range(self.n - 1)]
        if self.n > 2:
            pairs.append((self.n - 1, 0))
        return pairs

    def as_circuit(self) -> Circuit:
        gates = []
        names = iter(self.param_names())
        for _ in range(self.layers):
            for q in range(self.n):
                a, b, c = next(names), next(names), next(names)
                gates += [Gate("RZ", (q,), a), Gate("RY", (q,), b), Gate("RZ", (q,), c)]
            if self.entangle:
                gates += [Gate("CZ", pair) for pair in self._ring()]
        return Circuit(self.n, gates, {k: 0.0 for k in self.param_names()})

    def unitary(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(self.layers, self.n, 3) if self.layers else theta
        d = 2**self.n
        out = np.eye(d, dtype=np.complex128)
        ring_diag = self._ring_diagonal() if self.entangle else None
        for l in range(self.layers):
            layer = np.ones((1, 1), dtype=np.complex128)
            for q in range(self.n):
                a, b, c = theta[l, q]
                layer = np.kron(layer, rz(c) @ ry(b) @ rz(a))
            out = layer @ out
            if ring_diag is not None:
                out = ring_diag[:, None] * out
        return out

    def _ring_diagonal(self) -> np.ndarray:
        idx = np.arange(2**self.n)
        bits = (idx[:, None] >> (self.n - 1 - np.arange(self.n))) & 1
        sign = np.ones(2**self.n)
        for a, b in self._ring():
            sign *= np.where(bits[:, a] & bits[:, b], -1.0, 1.0)
        return sign.astype(np.complex128)


# -- configuration and reports ----------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    max_evals: int = 2000
    initial_step: float = 0.1
    restarts: int = 3
    batch_size: int = 16
    resample_batch: bool = False
    coherent_draws: int = 16
    xatol: float = 1e-2  # simplex size (rad) at which a run stops
    fatol: float = 1e-5  # objective resolution; finer polishing only fits the trial batch
    seed: int = 0

    def __post_init__(self):
        if self.max_evals < 1 or self.batch_size < 1 or self.restarts < 0:
            raise ValueError("max_evals and batch_size must be positive, restarts >= 0")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")


@dataclass
class CalibrationReport:
    method: int
    f_initial: float
    f_final: float
    objective_initial: float
    objective_final: float
    parameters: dict[str, float]
    objective_trace: list[tuple[int, float, float]]
    evaluations: int
    converged: bool
    seeds: dict[str, int]
    optimizer: dict = field(default_factory=dict)
    angle_shifts: dict[str, float] | None = None
    iterates: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def gain(self) -> float:
        return self.f_final - self.f_initial

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("iterates")
        d["objective_trace"] = [list(t) for t in self.objective_trace]
        d["gain"] = self.gain
        return d

    def trace_csv(self) -> str:
        lines = ["iteration,objective,best_so_far"]
        for it, obj, best in self.objective_trace:
            lines.append(f"{it},{obj:.9g},{best:.9g}")
        return "\n".join(lines) + "\n"


# -- objective ----------------------------------------------------------------


def batch_fidelities(w: np.ndarray, vc: VerifierCircuit, batch: np.ndarray) -> np.ndarray:
    """Verifier fidelities when each trial state is sent through the unitary ``w``."""
    vecs = np.stack([product_to_vector(b) for b in batch])
    _, fids = verify_batch(vc, batch, vecs @ w.T)
    return fids


def objective(candidate: Circuit, vc: VerifierCircuit, batch, nm: NoiseModel) -> float:
    """Mean verifier fidelity of ``candidate`` executed under the coherent part of ``nm``.

    Incoherent noise is not supported here: the objective is evaluated on
    pure states.
    """
    if nm.has_incoherent:
        raise ValueError("the verifier objective only handles coherent noise")
    bound = bind_parameters(candidate, candidate.nominal_values) if candidate.params else candidate
    batch = np.asarray(batch)
    draws = _draw_offsets(bound, nm, OptimizerConfig().coherent_draws)
    idx = bound.rotation_gates()
    total = 0.0
    for delta in draws:
        w = _unitary_with_offsets(bound, idx, delta)
        total += float(np.mean(batch_fidelities(w, vc, batch)))
    return total / len(draws)


def _draw_offsets(c: Circuit, nm: NoiseModel, count: int) -> list[np.ndarray]:
    if not nm.has_coherent:
        return [np.zeros(len(c.rotation_gates()))]
    if nm.coherent_mode == "systematic" or nm.coherent_std == 0.0:
        return [coherent_offsets(c, nm, nm.seed)]
    return [coherent_offsets(c, nm, np.random.SeedSequence([nm.seed, k])) for k in range(count)]


def _unitary_with_offsets(c: Circuit, idx: list[int], delta) -> np.ndarray:
    gates = list(c.gates)
    for j, i in enumerate(idx):
        g = gates[i]
        gates[i] = Gate(g.kind, g.targets, g.angle() + float(delta[j]), g.matrix)
    return circuit_to_dense(Circuit(c.n_qubits, gates))


# -- optimizer driver ---------------------------------------------------------


@dataclass
class _Search:
    fun: Callable[[np.ndarray], float]  # value to maximize
    budget: int
    trace: list[tuple[int, float, float]] = field(default_factory=list)
    best_x: np.ndarray | None = None
    best_f: float = -math.inf
    history: list[np.ndarray] = field(default_factory=list)

    def __call__(self, x: np.ndarray) -> float:
        if len(self.trace) >= self.budget:
            raise _BudgetExhausted
        f = self.fun(x)
        if f > self.best_f:
            self.best_f, self.best_x = f, np.array(x, dtype=float)
        self.trace.append((len(self.trace), f, self.best_f))
        self.history.append(np.array(x, dtype=float))
        return -f


class _BudgetExhausted(Exception):
    pass


def _maximize(fun, x0: np.ndarray, opt: OptimizerConfig) -> tuple[_Search, bool]:
    """Nelder-Mead with restarts from the best point seen.

    Converged means a restart failed to improve the best value by more than
    ``fatol`` before the evaluation budget ran out.
    """
    search = _Search(fun, opt.max_evals)
    x0 = np.asarray(x0, dtype=float)
    if x0.size == 0:
        search(x0)
        return search, True
    start = x0
    step = opt.initial_step
    for _ in range(opt.restarts + 1):
        simplex = np.vstack([start] + [start + step * e for e in np.eye(start.size)])
        before = search.best_f
        try:
            scipy.optimize.minimize(
                search,
                start,
                method="Nelder-Mead",
                options={
                    "initial_simplex": simplex,
                    "adaptive": True,
                    "xatol": opt.xatol,
                    "fatol": opt.fatol,
                    "maxfev": opt.max_evals - len(search.trace),
                },
            )
        except _BudgetExhausted:
            return search, False
        if len(search.trace) >= opt.max_evals:
            return search, False
        if search.best_f - before <= opt.fatol:
            return search, True
        start = search.best_x
        step = step / 2
    return search, False


def _trial_batch(n: int, opt: OptimizerConfig, seed_seq: np.random.SeedSequence) -> np.ndarray:
    return sample_batch(n, opt.batch_size, np.random.default_rng(seed_seq))


def _seed_bundle(opt: OptimizerConfig, nm: NoiseModel) -> tuple[dict[str, int], np.random.SeedSequence]:
    master = np.random.SeedSequence(opt.seed)
    batch_seq = master.spawn(1)[0]
    seeds = {
        "master": int(opt.seed),
        "batch": int(batch_seq.generate_state(1)[0]),
        "noise": int(nm.seed),
    }
    return seeds, batch_seq


def _batch_source(n: int, opt: OptimizerConfig, batch_seq: np.random.SeedSequence):
    """Callable giving the trial batch for evaluation ``k``."""
    fixed = _trial_batch(n, opt, batch_seq)
    if not opt.resample_batch:
        return lambda k: fixed
    entropy = batch_seq.entropy

    def per_eval(k: int) -> np.ndarray:
        return _trial_batch(n, opt, np.random.SeedSequence([entropy, k]))

    return per_eval


def _prepare(c: Circuit) -> tuple[Circuit, np.ndarray]:
    """Bound copy of ``c`` and its ideal unitary."""
    bound = bind_parameters(c, c.nominal_values) if c.params else c
    return bound, circuit_to_dense(bound)


def calibrate_method1(
    c: Circuit,
    nm: NoiseModel,
    vc: VerifierCircuit,
    layer: MitigationLayer,
    opt: OptimizerConfig = OptimizerConfig(),
    record_iterates: bool = False,
) -> CalibrationReport:
    """Tune a mitigation layer placed after the noisy circuit."""
    if layer.n != c.n_qubits:
        raise ValueError("mitigation layer width differs from the circuit")
    if nm.has_incoherent:
        raise ValueError("calibration handles coherent noise only")
    bound, ideal = _prepare(c)
    idx = bound.rotation_gates()
    noisy = [
        _unitary_with_offsets(bound, idx, d) for d in _draw_offsets(bound, nm, opt.coherent_draws)
    ]
    seeds, batch_seq = _seed_bundle(opt, nm)
    batches = _batch_source(c.n_qubits, opt, batch_seq)
    counter = [0]

    def value(theta):
        e = layer.unitary(theta)
        batch = batches(counter[0])
        counter[0] += 1
        return float(np.mean([np.mean(batch_fidelities(e @ u, vc, batch)) for u in noisy]))

    x0 = np.zeros(layer.n_params)
    search, converged = _maximize(value, x0, opt)
    theta = search.best_x
    e = layer.unitary(theta)
    f_initial = float(np.mean([fidelity_eq1(u, ideal) for u in noisy]))
    f_final = float(np.mean([fidelity_eq1(e @ u, ideal) for u in noisy]))
    return CalibrationReport(
        method=1,
        f_initial=f_initial,
        f_final=f_final,
        objective_initial=search.trace[0][1],
        objective_final=search.best_f,
        parameters=dict(zip(layer.param_names(), map(float, theta))),
        objective_trace=search.trace,
        evaluations=len(search.trace),
        converged=converged,
        seeds=seeds,
        optimizer=asdict(opt),
        iterates=search.history if record_iterates else None,
    )


def rotation_form(c: Circuit) -> Circuit:
    """``c`` with every rotation angle exposed as a free parameter."""
    if c.params and all(g.kind in ("RZ", "RY", "CNOT") for g in c.gates):
        return c
    return decompose_to_rotations(c)


def calibrate_method2(
    c: Circuit,
    nm: NoiseModel,
    vc: VerifierCircuit,
    opt: OptimizerConfig = OptimizerConfig(),
    record_iterates: bool = False,
) -> CalibrationReport:
    """Tune the circuit's own rotation angles under a persistent coherent offset."""
    if nm.has_incoherent:
        raise ValueError("calibration handles coherent noise only")
    param_c = rotation_form(c)
    names = list(param_c.free_params)
    nominal = np.array([param_c.params[k] for k in names], dtype=float)
    _, ideal = _prepare(param_c)
    template = bind_parameters(param_c, dict(zip(names, nominal)))
    idx = template.rotation_gates()
    # map each rotation slot to its parameter position (decomposition may reuse names)
    slot_param = [names.index(param_c.gates[i].param) for i in idx]
    draws = _draw_offsets(template, nm, opt.coherent_draws)
    seeds, batch_seq = _seed_bundle(opt, nm)
    batches = _batch_source(c.n_qubits, opt, batch_seq)
    counter = [0]

    def unitaries(phi):
        base = np.asarray(phi)[slot_param] - nominal[slot_param]
        return [_unitary_with_offsets(template, idx, base + d) for d in draws]

    def value(phi):
        batch = batches(counter[0])
        counter[0] += 1
        return float(np.mean([np.mean(batch_fidelities(u, vc, batch)) for u in unitaries(phi)]))

    search, converged = _maximize(value, nominal.copy(), opt)
    phi = search.best_x
    f_initial = float(np.mean([fidelity_eq1(u, ideal) for u in unitaries(nominal)]))
    f_final = float(np.mean([fidelity_eq1(u, ideal) for u in unitaries(phi)]))
    return CalibrationReport(
        method=2,
        f_initial=f_initial,
        f_final=f_final,
        objective_initial=search.trace[0][1],
        objective_final=search.best_f,
        parameters=dict(zip(names, map(float, phi))),
        objective_trace=search.trace,
        evaluations=len(search.trace),
        converged=converged,
        seeds=seeds,
        optimizer=asdict(opt),
        angle_shifts=dict(zip(names, map(float, phi - nominal))),
        iterates=search.history if record_iterates else None,
    )


def method2_parameter_count(c: Circuit) -> int:
    return len(rotation_form(c).free_params)


def evaluate_true_fidelities(
    c: Circuit, nm: NoiseModel, layer: MitigationLayer, thetas, ideal: np.ndarray | None = None
) -> list[float]:
    """Eq.-1 fidelity of method-1 iterates (used to check objective alignment)."""
    bound, ideal_u = _prepare(c)
    ideal = ideal_u if ideal is None else ideal
    u = _unitary_with_offsets(bound, bound.rotation_gates(), _draw_offsets(bound, nm, 1)[0])
    return [fidelity_eq1(layer.unitary(t) @ u, ideal) for t in thetas]
