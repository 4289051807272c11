import logging

import numpy as np
import pytest

import qdeloc
from qdeloc._config import ToleranceConfig
from qdeloc.analysis import (
    classify,
    coarsen_projectors,
    detect_controlled,
    operator_schmidt_decomposition,
    operator_schmidt_rank,
    projective_lift,
    reconstruct,
    support_projector,
    validate_form,
)
from qdeloc.exceptions import MalformedFormError, QDelocError, ValidationError
from qdeloc.gates import KET_MINUS, KET_PLUS, PAULI_X, PAULI_Z, build_gate, controlled_random
from qdeloc.linalg import BipartiteUnitary, default_rng, kron, random_unitary, reshuffle, svd
from qdeloc.locc import random_measurement, synthesize_relocalization_protocol, verify_one_piece_relocalization

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

client = qdeloc.QDeloc(seed=0)
async_client = qdeloc.AsyncQDeloc(seed=0)


def _same_up_to_phase(a, b, tol=1e-8):
    return abs(abs(np.trace(a.conj().T @ b)) - a.shape[0]) < tol


OSR_CASES = [
    {"name": "identity", "gate": "identity", "params": {}, "osr": 1},
    {"name": "product", "gate": "product", "params": {"d_a": 2, "d_b": 3, "seed": 2}, "osr": 1},
    {"name": "cnot", "gate": "cnot", "params": {}, "osr": 2},
    {"name": "swap", "gate": "swap", "params": {}, "osr": 4},
    {"name": "swap_phase", "gate": "swap_phase", "params": {}, "osr": 4},
    {"name": "heisenberg_0.3", "gate": "heisenberg", "params": {"alpha": 0.3}, "osr": 4},
    {"name": "heisenberg_0", "gate": "heisenberg", "params": {"alpha": 0.0}, "osr": 1},
]


class TestSchmidtDecomposition:
    """Test the operator Schmidt decomposition"""

    @pytest.mark.parametrize("test_case", OSR_CASES, ids=[tc["name"] for tc in OSR_CASES])
    def test_rank(self, test_case):
        try:
            u = build_gate(test_case["gate"], test_case["params"])
            assert client.analysis.schmidt_rank(u) == test_case["osr"]
        except QDelocError as e:
            pytest.fail(f"Unexpected QDelocError in {test_case['name']}: {e}")

    @pytest.mark.parametrize("test_case", OSR_CASES, ids=[tc["name"] for tc in OSR_CASES])
    def test_terms_are_orthonormal_and_rebuild(self, test_case):
        u = build_gate(test_case["gate"], test_case["params"])
        decomp = client.analysis.schmidt_decomposition(u)
        lambdas = decomp["lambdas"]

        assert np.all(np.diff(lambdas) <= 1e-12)
        # sum lambda_k^2 = ||U||_HS^2 = d_a d_b
        assert np.sum(lambdas**2) == pytest.approx(u.dim, rel=1e-10)
        gram_a = np.array([[np.trace(x.conj().T @ y) for y in decomp["a_ops"]] for x in decomp["a_ops"]])
        gram_b = np.array([[np.trace(x.conj().T @ y) for y in decomp["b_ops"]] for x in decomp["b_ops"]])
        assert np.allclose(gram_a, np.eye(len(lambdas)), atol=1e-10)
        assert np.allclose(gram_b, np.eye(len(lambdas)), atol=1e-10)

        rebuilt = sum(lam * kron(a, b) for lam, a, b in zip(lambdas, decomp["a_ops"], decomp["b_ops"]))
        assert np.allclose(rebuilt, u.matrix, atol=1e-10)
        assert decomp["residual"] < 1e-10

    def test_cnot_coefficients(self):
        lambdas = operator_schmidt_decomposition(build_gate("cnot"))["lambdas"]
        assert np.allclose(lambdas, [np.sqrt(2), np.sqrt(2)], atol=1e-12)

        # the discarded tail is numerically zero, not merely below tol_rank
        _, s, _ = svd(reshuffle(build_gate("cnot")))
        assert s[2] / s[0] < 1e-10

    def test_local_unitary_invariance(self):
        u = build_gate("heisenberg", {"alpha": 0.2})
        a, b, c, d = (random_unitary(2, s) for s in range(4))
        before = operator_schmidt_decomposition(u)["lambdas"]
        after = operator_schmidt_decomposition(u.sandwich(a, b, c, d))["lambdas"]
        assert np.allclose(before, after, atol=1e-10)


ROUND_TRIP_DIMS = [
    (d_a, d_b, n_blocks)
    for d_a in (2, 3, 4)
    for d_b in (2, 3, 4)
    for n_blocks in range(2, d_a + 1)
]


class TestDetectControlled:
    """Test detection of local-unitary equivalence to a controlled-unitary"""

    def test_cnot_from_a_is_canonical(self):
        form = client.analysis.detect_controlled(build_gate("cnot"), "A")
        assert form is not None
        assert form["control_side"] == "A"
        assert len(form["blocks"]) == 2
        assert np.allclose(form["blocks"][0]["projector"], np.diag([1, 0]), atol=1e-10)
        assert np.allclose(form["blocks"][1]["projector"], np.diag([0, 1]), atol=1e-10)
        assert _same_up_to_phase(form["blocks"][0]["unitary"], np.eye(2))
        assert _same_up_to_phase(form["blocks"][1]["unitary"], PAULI_X)
        assert form["residual"] < 1e-10

    def test_cnot_from_b_uses_the_hadamard_basis(self):
        """CNOT = I (x) |+><+| + Z (x) |-><-|"""
        form = client.analysis.detect_controlled(build_gate("cnot"), "B")
        assert form is not None
        assert form["control_side"] == "B"
        projectors = [b["projector"] for b in form["blocks"]]
        plus = np.outer(KET_PLUS, KET_PLUS.conj())
        minus = np.outer(KET_MINUS, KET_MINUS.conj())
        assert any(np.allclose(p, plus, atol=1e-8) for p in projectors)
        assert any(np.allclose(p, minus, atol=1e-8) for p in projectors)
        targets = [b["unitary"] for b in form["blocks"]]
        assert any(_same_up_to_phase(v, PAULI_Z) for v in targets)

    @pytest.mark.parametrize(
        "name,params",
        [
            ("swap_phase", {}),
            ("heisenberg", {"alpha": 0.1}),
            ("heisenberg", {"alpha": 0.3}),
            ("heisenberg", {"alpha": np.pi / 5}),
            ("swap", {}),
        ],
        ids=["swap_phase", "heisenberg_0.1", "heisenberg_0.3", "heisenberg_pi_5", "swap"],
    )
    def test_not_controlled(self, name, params):
        u = build_gate(name, params)
        assert detect_controlled(u, "A") is None
        assert detect_controlled(u, "B") is None
        assert operator_schmidt_rank(u) == 4

    def test_product_gate_is_single_block(self):
        u = build_gate("product", {"d_a": 3, "d_b": 2, "seed": 5})
        for side in ("A", "B"):
            form = detect_controlled(u, side)
            assert form is not None
            assert len(form["blocks"]) == 1
            assert form["residual"] < 1e-10

    def test_invalid_side(self):
        with pytest.raises(ValidationError):
            detect_controlled(build_gate("cnot"), "C")

    @pytest.mark.parametrize(
        "dims",
        ROUND_TRIP_DIMS,
        ids=[f"{d_a}x{d_b}_{n}" for d_a, d_b, n in ROUND_TRIP_DIMS],
    )
    def test_controlled_random_round_trip(self, dims):
        """Every generated controlled gate is recognized on its control side"""
        d_a, d_b, n_blocks = dims
        tol = ToleranceConfig()
        for seed in range(40):
            gate, truth = controlled_random(d_a, d_b, n_blocks, seed=seed)
            form = detect_controlled(gate, "A", tol, seed)
            assert form is not None, f"missed controlled gate seed={seed}"
            assert len(form["blocks"]) == len(truth["blocks"])
            assert form["residual"] <= tol.tol_reconstruct * np.sqrt(gate.dim)
            _, residual = reconstruct(form, reference=gate)
            assert residual <= 1e-8

    def test_controlled_random_protocols_verify(self):
        """A subsample closes the loop through synthesis and verification"""
        rng = default_rng(17)
        for seed in range(20):
            d_a = int(rng.integers(2, 4))
            d_b = int(rng.integers(2, 4))
            n_blocks = int(rng.integers(2, d_a + 1))
            gate, _ = controlled_random(d_a, d_b, n_blocks, seed=seed)
            form = detect_controlled(gate, "A")
            assert form is not None
            report = verify_one_piece_relocalization(
                gate, synthesize_relocalization_protocol(form), side="B", n_samples=10, seed=seed
            )
            assert report["verdict"], f"seed={seed} min fidelity {report['min_fidelity']}"
            assert report["min_fidelity"] >= 1 - 1e-9

    def test_controlled_from_b_is_found_through_swap(self):
        gate, _ = controlled_random(3, 2, 2, seed=8)
        mirrored = gate.swapped()
        form = detect_controlled(mirrored, "B")
        assert form is not None
        assert form["control_side"] == "B"
        assert form["residual"] < 1e-8

    @pytest.mark.parametrize("dims", [(2, 2), (3, 3)], ids=["2x2", "3x3"])
    def test_haar_gates_are_not_controlled(self, dims):
        """Generic gates have non-commuting Schmidt families on both sides"""
        d_a, d_b = dims
        for seed in range(100):
            u = BipartiteUnitary(random_unitary(d_a * d_b, 1000 + seed), d_a, d_b)
            c = classify(u, seed=seed)
            assert not c["relocalizable"], f"false positive seed={seed}"
            assert c["osr"] == min(d_a, d_b) ** 2


class TestClassify:
    """Test the combined classification report"""

    CLASSIFY_CASES = [
        {"name": "cnot", "gate": "cnot", "params": {}, "osr": 2, "relocalizable": True, "local": False},
        {"name": "swap_phase", "gate": "swap_phase", "params": {}, "osr": 4, "relocalizable": False, "local": False},
        {"name": "heisenberg", "gate": "heisenberg", "params": {"alpha": 0.3}, "osr": 4, "relocalizable": False, "local": False},
        {"name": "identity", "gate": "identity", "params": {}, "osr": 1, "relocalizable": True, "local": True},
    ]

    @pytest.mark.parametrize("test_case", CLASSIFY_CASES, ids=[tc["name"] for tc in CLASSIFY_CASES])
    def test_classify(self, test_case):
        try:
            c = client.analysis.classify(build_gate(test_case["gate"], test_case["params"]))
            assert c["osr"] == test_case["osr"]
            assert c["relocalizable"] == test_case["relocalizable"]
            assert c["local"] == test_case["local"]
            assert (c["controlled_from_a"] is None) == (c["residual_a"] is None)
            assert (c["controlled_from_b"] is None) == (c["residual_b"] is None)
            assert c["seed"] == 0
            assert c["tolerances"]["tol_rank"] == 1e-7
        except QDelocError as e:
            pytest.fail(f"Unexpected QDelocError in {test_case['name']}: {e}")

    @pytest.mark.parametrize(
        "gate,params",
        [("cnot", {}), ("swap_phase", {}), ("swap", {}), ("identity", {}), ("heisenberg", {"alpha": 0.3})],
        ids=["cnot", "swap_phase", "swap", "identity", "heisenberg"],
    )
    def test_local_unitary_sandwich_preserves_classification(self, gate, params):
        u = build_gate(gate, params)
        rng = default_rng(5)
        for _ in range(50):
            a, b, c, d = (random_unitary(2, rng) for _ in range(4))
            before, after = classify(u), classify(u.sandwich(a, b, c, d))
            assert after["osr"] == before["osr"]
            assert after["relocalizable"] == before["relocalizable"]
            assert np.allclose(after["schmidt_coefficients"], before["schmidt_coefficients"], atol=1e-9)

    def test_deterministic(self):
        u = build_gate("controlled_random", {"d_a": 3, "d_b": 3, "n_blocks": 2, "seed": 4})
        first, second = classify(u, seed=3), classify(u, seed=3)
        assert first["schmidt_coefficients"] == second["schmidt_coefficients"]
        assert np.array_equal(
            first["controlled_from_a"]["u_local"], second["controlled_from_a"]["u_local"]
        )

    def test_tolerance_config_is_validated(self):
        with pytest.raises(ValueError):
            ToleranceConfig(tol_rank=2.0)
        assert ToleranceConfig().replace(tol_rank=1e-6).tol_rank == 1e-6


class TestClassifyAsync:
    """Test the asynchronous classification"""

    @pytest.mark.asyncio
    async def test_classify_async_matches_sync(self):
        u = build_gate("cnot")
        try:
            result = await async_client.analysis.classify(u)
            expected = client.analysis.classify(u)
            assert result["osr"] == expected["osr"]
            assert result["relocalizable"] == expected["relocalizable"]
            assert result["residual_a"] == pytest.approx(expected["residual_a"], abs=1e-14)
            assert result["residual_b"] == pytest.approx(expected["residual_b"], abs=1e-14)
        except QDelocError as e:
            pytest.fail(f"Unexpected QDelocError in test_classify_async_matches_sync: {e}")


class TestForms:
    """Test form validation, reconstruction and projector coarsening"""

    def _cnot_form(self):
        return {
            "control_side": "A",
            "u_local": np.eye(2, dtype=complex),
            "blocks": [
                {"projector": np.diag([1, 0]).astype(complex), "unitary": np.eye(2, dtype=complex)},
                {"projector": np.diag([0, 1]).astype(complex), "unitary": PAULI_X},
            ],
        }

    def test_validate_form_dimensions(self):
        assert validate_form(self._cnot_form()) == (2, 2)

    def test_non_orthogonal_projectors(self):
        form = self._cnot_form()
        form["blocks"][1]["projector"] = np.outer(KET_PLUS, KET_PLUS.conj())
        with pytest.raises(MalformedFormError):
            validate_form(form)

    def test_incomplete_projectors(self):
        form = self._cnot_form()
        del form["blocks"][1]
        with pytest.raises(MalformedFormError):
            reconstruct(form)

    def test_non_unitary_target(self):
        form = self._cnot_form()
        form["blocks"][0]["unitary"] = 2 * np.eye(2, dtype=complex)
        with pytest.raises(MalformedFormError):
            validate_form(form)

    def test_side_b_reconstruction(self):
        form = self._cnot_form()
        form["control_side"] = "B"
        gate, _ = reconstruct(form)
        assert np.allclose(gate.matrix, build_gate("cnot").swapped().matrix, atol=1e-14)

    def test_coarsen_merges_overlapping(self):
        zero = np.diag([1, 0, 0]).astype(complex)
        plus = np.zeros((3, 3), dtype=complex)
        plus[:2, :2] = 0.5
        two = np.diag([0, 0, 1]).astype(complex)
        merged = coarsen_projectors([zero, plus, two])
        assert len(merged) == 2
        assert np.allclose(merged[0], np.diag([1, 1, 0]), atol=1e-10)
        assert np.allclose(merged[1], two)

    def test_coarsen_keeps_orthogonal(self):
        ps = [np.diag(row).astype(complex) for row in np.eye(3)]
        merged = client.analysis.coarsen_projectors(ps)
        assert len(merged) == 3

    def test_coarsen_rejects_non_projector(self):
        with pytest.raises(ValidationError):
            coarsen_projectors([0.5 * np.eye(2)])

    def test_support_projector(self):
        m = np.diag([2.0, 0.0, 0.5]).astype(complex)
        assert np.allclose(support_projector(m), np.diag([1, 0, 1]), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_projective_lift_is_complete(self, seed):
        meas = random_measurement("A", 3, 2, seed=seed)
        lifted = projective_lift(meas.operators)
        total = sum(lifted)
        assert np.allclose(total, np.eye(3), atol=1e-8)
        for i in range(len(lifted)):
            for j in range(i + 1, len(lifted)):
                assert np.max(np.abs(lifted[i] @ lifted[j])) < 1e-8


def test_osr_function_matches_resource():
    u = build_gate("cnot")
    assert operator_schmidt_rank(u) == client.analysis.schmidt_rank(u) == 2
