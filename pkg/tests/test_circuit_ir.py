import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpoverify.circuit_ir import (
    Circuit,
    Gate,
    bind_parameters,
    build_mcu,
    build_mcx,
    build_qft,
    circuit_to_dense,
    count_kinds,
    decompose_to_rotations,
    dumps,
    equal_up_to_phase,
    loads,
    phase_aligned_deviation,
    rz,
    shift_angles,
    zyz_angles,
)

from conftest import random_unitary


def dft(n: int, bit_reversed_columns: bool = False) -> np.ndarray:
    d = 2**n
    j, k = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    m = np.exp(2j * np.pi * j * k / d) / np.sqrt(d)
    if bit_reversed_columns:
        rev = [int(format(x, f"0{n}b")[::-1], 2) for x in range(d)]
        m = m[rev, :]
    return m


def permutation_matrix(n_controls: int) -> np.ndarray:
    d = 2 ** (n_controls + 1)
    p = np.eye(d)
    p[[d - 2, d - 1]] = p[[d - 1, d - 2]]
    return p


def decomposed_dense(c: Circuit) -> np.ndarray:
    dec = decompose_to_rotations(c)
    assert set(count_kinds(dec.gates)) <= {"RZ", "RY", "CNOT"}
    return circuit_to_dense(dec, dec.nominal_values)


class TestBuilders:
    def test_qft_one_qubit_is_h(self):
        assert np.allclose(circuit_to_dense(build_qft(1)), np.array([[1, 1], [1, -1]]) / math.sqrt(2))

    def test_qft_two_qubits_without_reversal(self):
        assert np.allclose(circuit_to_dense(build_qft(2)), dft(2, bit_reversed_columns=True))

    @pytest.mark.parametrize("n", [3, 4])
    def test_qft_with_reversal_is_dft(self, n):
        assert np.max(np.abs(circuit_to_dense(build_qft(n, True)) - dft(n))) < 1e-12

    def test_qft_uses_exact_dyadic_angles(self):
        params = [g.param for g in build_qft(4).gates if g.kind == "CP"]
        assert all(isinstance(p, Fraction) for p in params)
        assert Fraction(1, 8) in params

    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_mcx_permutation(self, k):
        m = circuit_to_dense(build_mcx(k))
        assert np.array_equal(m.real, permutation_matrix(k))
        off = m - np.diag(np.diag(m))
        assert np.count_nonzero(off) == 2

    def test_mcu_x_equals_mcx(self):
        x = np.array([[0, 1], [1, 0]])
        assert np.allclose(circuit_to_dense(build_mcu(3, x)), circuit_to_dense(build_mcx(3)))

    def test_mcu_identity(self):
        assert np.allclose(circuit_to_dense(build_mcu(2, np.eye(2))), np.eye(8))

    def test_mcu_block_diagonal(self):
        m = circuit_to_dense(build_mcu(2, rz(0.7)))
        expected = np.eye(8, dtype=complex)
        expected[6:, 6:] = rz(0.7)
        assert np.allclose(m, expected)

    def test_mcu_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            build_mcu(1, np.diag([1.0, 2.0]))


class TestDense:
    def test_empty(self):
        assert np.allclose(circuit_to_dense(Circuit(3, [])), np.eye(8))

    def test_hadamard_involution(self):
        c = Circuit(1, [Gate("H", (0,)), Gate("H", (0,))])
        assert np.allclose(circuit_to_dense(c), np.eye(2))

    def test_big_endian_cnot(self):
        c = Circuit(2, [Gate("CNOT", (0, 1))])
        assert np.allclose(circuit_to_dense(c), np.eye(4)[[0, 1, 3, 2]])
        c = Circuit(2, [Gate("CNOT", (1, 0))])
        assert np.allclose(circuit_to_dense(c), np.eye(4)[[0, 3, 2, 1]])

    def test_width_guard(self):
        with pytest.raises(ValueError, match="12"):
            circuit_to_dense(Circuit(13, []))

    def test_gate_validation(self):
        with pytest.raises(ValueError):
            Gate("CNOT", (0, 0))
        with pytest.raises(ValueError):
            Gate("RZ", (0,))
        with pytest.raises(ValueError):
            Circuit(2, [Gate("H", (2,))])
        with pytest.raises(ValueError, match="not registered"):
            Circuit(1, [Gate("RZ", (0,), "a")])


class TestDecompose:
    def test_cnot_unchanged(self):
        dec = decompose_to_rotations(Circuit(2, [Gate("CNOT", (0, 1))]))
        assert [g.kind for g in dec.gates] == ["CNOT"] and not dec.params

    def test_hadamard_euler_triple(self):
        dec = decompose_to_rotations(Circuit(1, [Gate("H", (0,))]))
        assert [g.kind for g in dec.gates] == ["RZ", "RY", "RZ"]
        assert equal_up_to_phase(circuit_to_dense(dec, dec.nominal_values), circuit_to_dense(Circuit(1, [Gate("H", (0,))])))

    def test_toffoli_textbook_form(self):
        dec = decompose_to_rotations(build_mcx(2))
        assert count_kinds(dec.gates)["CNOT"] == 6
        assert len(dec.params) == 13
        assert equal_up_to_phase(circuit_to_dense(dec, dec.nominal_values), permutation_matrix(2))

    @pytest.mark.parametrize("k", [3, 4, 5])
    def test_mcx_without_ancilla(self, k):
        assert phase_aligned_deviation(decomposed_dense(build_mcx(k)), permutation_matrix(k)) < 1e-9

    @pytest.mark.parametrize("n,k", [(5, 3), (6, 4), (7, 5), (6, 3)])
    def test_mcx_with_idle_qubits(self, n, k):
        c = Circuit(n, [Gate("MCX", tuple(range(k + 1)))])
        assert phase_aligned_deviation(decomposed_dense(c), circuit_to_dense(c)) < 1e-9

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_mcu(self, k):
        c = build_mcu(k, random_unitary(2, 10 + k))
        assert phase_aligned_deviation(decomposed_dense(c), circuit_to_dense(c)) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_opaque_two_qubit_gate(self, seed):
        c = Circuit(3, [Gate("U", (2, 0), matrix=random_unitary(4, seed))])
        dec = decompose_to_rotations(c)
        assert count_kinds(dec.gates)["CNOT"] == 6
        assert phase_aligned_deviation(circuit_to_dense(dec, dec.nominal_values), circuit_to_dense(c)) < 1e-9

    def test_opaque_wide_gate_rejected(self):
        c = Circuit(3, [Gate("U", (0, 1, 2), matrix=random_unitary(8, 1))])
        with pytest.raises(ValueError, match="opaque 3-qubit"):
            decompose_to_rotations(c)

    def test_mixed_circuit_and_free_parameters_kept(self):
        c = Circuit(
            3,
            [Gate("CZ", (0, 2)), Gate("SWAP", (1, 2)), Gate("RX", (0,), 0.3), Gate("RZ", (1,), "a"), Gate("CP", (2, 0), Fraction(1, 4))],
            {"a": 0.4},
        )
        dec = decompose_to_rotations(c)
        assert "a" in dec.params
        assert phase_aligned_deviation(circuit_to_dense(dec, dec.nominal_values), circuit_to_dense(c, {"a": 0.4})) < 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_property_zyz_roundtrip(self, seed):
        u = random_unitary(2, seed)
        a, b, g, d = zyz_angles(u)
        rebuilt = np.exp(1j * a) * rz(b) @ np.array(
            [[math.cos(g / 2), -math.sin(g / 2)], [math.sin(g / 2), math.cos(g / 2)]]
        ) @ rz(d)
        assert np.allclose(rebuilt, u, atol=1e-9)


class TestParameters:
    def test_bind_no_params(self):
        c = build_qft(2)
        assert np.allclose(circuit_to_dense(bind_parameters(c, {})), circuit_to_dense(c))

    def test_bind_zero_rotation(self):
        c = Circuit(1, [Gate("RZ", (0,), "theta")], {"theta": None})
        assert equal_up_to_phase(circuit_to_dense(bind_parameters(c, {"theta": 0.0})), np.eye(2))

    def test_bind_decomposed_toffoli(self):
        dec = decompose_to_rotations(build_mcx(2))
        bound = bind_parameters(dec, dec.nominal_values)
        assert equal_up_to_phase(circuit_to_dense(bound), permutation_matrix(2))

    def test_bind_mismatch(self):
        c = Circuit(1, [Gate("RZ", (0,), "a")], {"a": 0.1})
        with pytest.raises(ValueError, match="missing"):
            bind_parameters(c, {})
        with pytest.raises(ValueError, match="superfluous"):
            bind_parameters(c, {"a": 0.1, "b": 0.2})

    def test_shift_angles(self):
        c = Circuit(1, [Gate("RZ", (0,), 0.2), Gate("H", (0,)), Gate("RY", (0,), 0.1)])
        s = shift_angles(c, [0.5, -0.1])
        assert [g.param for g in s.gates if g.param is not None] == [pytest.approx(0.7), pytest.approx(0.0)]


class TestJson:
    def test_roundtrip_qft_keeps_fractions(self):
        c = build_qft(4, True)
        back = loads(dumps(c))
        assert [g.param for g in back.gates] == [g.param for g in c.gates]
        assert np.allclose(circuit_to_dense(back), circuit_to_dense(c))

    def test_roundtrip_free_and_matrix(self):
        c = Circuit(
            2,
            [Gate("RZ", (0,), "a"), Gate("CP", (0, 1), Fraction(3, 4)), Gate("U", (1, 0), matrix=random_unitary(4, 2))],
            {"a": 0.25},
        )
        back = loads(dumps(c))
        assert back.params == {"a": 0.25}
        assert back.gates[1].param == Fraction(3, 4)
        assert np.allclose(circuit_to_dense(back, {"a": 0.25}), circuit_to_dense(c, {"a": 0.25}))

    def test_format(self):
        import json

        doc = json.loads(dumps(build_qft(2)))
        assert doc["n_qubits"] == 2
        assert doc["gates"][1] == {"kind": "CP", "targets": [1, 0], "param": {"pi_over": 2}}
