"""LOCC protocols on two-qudit pure states.

A protocol is a finite tree. Inner nodes hold one party's generalized
measurement and one child per outcome label 0..n-1; leaves hold optional
local unitary corrections. The accumulated operators of a leaf are the
ordered products of the operators met on the way down, corrections
included, so every leaf contributes the Kraus operator M (x) K of the
protocol's channel.
"""

import asyncio
import logging
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from typing_extensions import TypedDict

from ._config import ToleranceConfig, ToolkitConfig
from ._types import BaseReport, Side, ToleranceInfo, other_side
from .analysis import ControlledUnitaryForm, validate_form
from .exceptions import MalformedProtocolError, ValidationError
from .gates import HADAMARD, KET_PLUS, PAULI_Z, build_gate
from .linalg import (
    BipartiteUnitary,
    SeedLike,
    default_rng,
    hs_norm,
    kron,
    partial_trace,
    random_state,
    random_unitary,
    unitarity_deviation,
)

logger = logging.getLogger(__name__)

MAX_DEPTH = 16
COMPLETENESS_TOL = 1e-9
PRUNE_PROBABILITY = 1e-12
PRUNED_MASS_LIMIT = 1e-10

Outcomes = Tuple[int, ...]


class Measurement:
    """Generalized measurement {M^(r)} of one party, outcome r = list index."""

    party: Side
    operators: List[np.ndarray]

    def __init__(self, party: Side, operators: Sequence[np.ndarray]):
        if party not in ("A", "B"):
            raise ValidationError(f"party must be 'A' or 'B', got {party!r}")
        ops = [np.array(op, dtype=complex) for op in operators]
        if not ops:
            raise ValidationError("a measurement needs at least one operator")
        d = ops[0].shape[0]
        for r, op in enumerate(ops):
            if op.shape != (d, d):
                raise ValidationError(
                    f"operator {r} has shape {op.shape}, expected ({d}, {d})"
                )
        self.party = party
        self.operators = ops

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def __len__(self) -> int:
        return len(self.operators)

    def __repr__(self) -> str:
        return f"Measurement(party={self.party!r}, outcomes={len(self)}, dim={self.dim})"


class ProtocolNode:
    measurement: Optional[Measurement]
    children: Dict[int, "ProtocolNode"]
    a_correction: Optional[np.ndarray]
    b_correction: Optional[np.ndarray]

    def __init__(
        self,
        measurement: Optional[Measurement] = None,
        children: Optional[Dict[int, "ProtocolNode"]] = None,
        a_correction: Optional[np.ndarray] = None,
        b_correction: Optional[np.ndarray] = None,
    ):
        self.measurement = measurement
        self.children = dict(children or {})
        self.a_correction = None if a_correction is None else np.array(a_correction, dtype=complex)
        self.b_correction = None if b_correction is None else np.array(b_correction, dtype=complex)

    @classmethod
    def leaf(
        cls, a_correction: Optional[np.ndarray] = None, b_correction: Optional[np.ndarray] = None
    ) -> "ProtocolNode":
        return cls(a_correction=a_correction, b_correction=b_correction)

    @property
    def is_leaf(self) -> bool:
        return self.measurement is None


class MeasurementCheck(TypedDict):
    ok: bool
    deviation: float
    """
    max |sum_r M^(r)dag M^(r) - I|
    """


class Branch(TypedDict):
    outcomes: Outcomes
    probability: float
    post_state: np.ndarray
    accumulated_a: np.ndarray
    accumulated_b: np.ndarray


class BranchFidelity(TypedDict):
    outcomes: List[int]
    min_fidelity: float
    max_probability: float


class BranchUnitarity(TypedDict):
    outcomes: List[int]
    deviation: float
    passed: bool


class RelocalizationReport(BaseReport):
    side: Side
    """
    The side whose piece of quantum information must be restored.
    """
    branch_fidelities: List[BranchFidelity]
    min_fidelity: float
    channel_residual: float
    """
    Largest ||Lambda(U rho U^dag) - tau (x) |psi><psi| ||_HS over the inputs.
    """
    verdict: bool
    samples: int
    inputs_checked: int
    tol: float


def validate_measurement(m: Measurement, tol: float = COMPLETENESS_TOL) -> MeasurementCheck:
    total = sum(op.conj().T @ op for op in m.operators)
    deviation = float(np.max(np.abs(total - np.eye(m.dim))))
    return MeasurementCheck(ok=deviation <= tol, deviation=deviation)


class LoccProtocol:
    """A validated protocol tree.

    `protects` optionally records which side's piece the protocol is meant
    to restore; it is metadata and does not change execution.
    """

    root: ProtocolNode
    d_a: Optional[int]
    d_b: Optional[int]
    protects: Optional[Side]
    depth: int

    def __init__(self, root: Optional[ProtocolNode] = None, protects: Optional[Side] = None):
        self.root = root or ProtocolNode.leaf()
        self.protects = protects
        dims: Dict[Side, Optional[int]] = {"A": None, "B": None}
        self.depth = self._check(self.root, dims, depth=0)
        self.d_a = dims["A"]
        self.d_b = dims["B"]

    @classmethod
    def empty(cls) -> "LoccProtocol":
        return cls(ProtocolNode.leaf())

    @staticmethod
    def _record_dim(dims: Dict[Side, Optional[int]], party: Side, d: int) -> None:
        if dims[party] is None:
            dims[party] = d
        elif dims[party] != d:
            raise MalformedProtocolError(
                f"party {party} operators have inconsistent dimensions {dims[party]} and {d}"
            )

    def _check(self, node: ProtocolNode, dims: Dict[Side, Optional[int]], depth: int) -> int:
        if node.is_leaf:
            if node.children:
                raise MalformedProtocolError("a leaf without a measurement cannot have children")
            for party, corr in (("A", node.a_correction), ("B", node.b_correction)):
                if corr is None:
                    continue
                if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
                    raise MalformedProtocolError(f"{party} correction must be a square matrix")
                if unitarity_deviation(corr) > COMPLETENESS_TOL:
                    raise MalformedProtocolError(f"{party} correction is not unitary")
                self._record_dim(dims, party, corr.shape[0])
            return depth

        if depth >= MAX_DEPTH:
            raise MalformedProtocolError(f"protocol deeper than {MAX_DEPTH} measurement turns")
        if node.a_correction is not None or node.b_correction is not None:
            raise MalformedProtocolError("corrections belong on leaves, not on measurement nodes")

        m = node.measurement
        check = validate_measurement(m)
        if not check["ok"]:
            raise MalformedProtocolError(
                f"measurement of party {m.party} violates completeness (deviation {check['deviation']:.3e})",
                err={"deviation": check["deviation"]},
            )
        self._record_dim(dims, m.party, m.dim)

        if node.children and sorted(node.children) != list(range(len(m))):
            raise MalformedProtocolError(
                f"children must be labelled 0..{len(m) - 1}, got {sorted(node.children)}"
            )
        deepest = depth + 1
        for r in sorted(node.children):
            deepest = max(deepest, self._check(node.children[r], dims, depth + 1))
        return deepest

    def check_dims(self, d_a: int, d_b: int) -> None:
        for party, mine, given in (("A", self.d_a, d_a), ("B", self.d_b, d_b)):
            if mine is not None and mine != given:
                raise MalformedProtocolError(
                    f"protocol acts on a {mine}-dimensional {party} system, input has {given}"
                )

    def __repr__(self) -> str:
        return f"LoccProtocol(depth={self.depth}, d_a={self.d_a}, d_b={self.d_b})"


def _walk(
    node: ProtocolNode, prefix: Outcomes, m: np.ndarray, k: np.ndarray
) -> Iterator[Tuple[Outcomes, np.ndarray, np.ndarray]]:
    if node.is_leaf:
        if node.a_correction is not None:
            m = node.a_correction @ m
        if node.b_correction is not None:
            k = node.b_correction @ k
        yield prefix, m, k
        return

    meas = node.measurement
    for r, op in enumerate(meas.operators):
        m_r, k_r = (op @ m, k) if meas.party == "A" else (m, op @ k)
        child = node.children.get(r)
        if child is None:
            yield prefix + (r,), m_r, k_r
        else:
            yield from _walk(child, prefix + (r,), m_r, k_r)


def accumulated_operators(
    p: LoccProtocol, d_a: int, d_b: int
) -> List[Tuple[Outcomes, np.ndarray, np.ndarray]]:
    """(R_N, M^(R_N), K^(R_N)) for every leaf, in depth-first outcome order."""
    p.check_dims(d_a, d_b)
    return list(_walk(p.root, (), np.eye(d_a, dtype=complex), np.eye(d_b, dtype=complex)))


def completeness_residuals(p: LoccProtocol, d_a: int, d_b: int) -> List[float]:
    """Worst deviation of the accumulated completeness relations at each depth.

    On a party's own turn, sum_r M^(R_k)dag M^(R_k) = M^(R_k-1)dag M^(R_k-1)
    for that party; on every turn the same holds for M (x) K jointly.
    """
    p.check_dims(d_a, d_b)
    worst: Dict[int, float] = {}

    def visit(node: ProtocolNode, m: np.ndarray, k: np.ndarray, depth: int) -> None:
        if node.is_leaf:
            return
        meas = node.measurement
        parent_joint = kron(m, k).conj().T @ kron(m, k)
        own_parent = m if meas.party == "A" else k
        joint_sum = np.zeros_like(parent_joint)
        own_sum = np.zeros_like(own_parent)
        for r, op in enumerate(meas.operators):
            m_r, k_r = (op @ m, k) if meas.party == "A" else (m, op @ k)
            own = m_r if meas.party == "A" else k_r
            own_sum = own_sum + own.conj().T @ own
            joint = kron(m_r, k_r)
            joint_sum = joint_sum + joint.conj().T @ joint
            child = node.children.get(r)
            if child is not None:
                visit(child, m_r, k_r, depth + 1)
        deviation = max(
            float(np.max(np.abs(own_sum - own_parent.conj().T @ own_parent))),
            float(np.max(np.abs(joint_sum - parent_joint))),
        )
        worst[depth + 1] = max(worst.get(depth + 1, 0.0), deviation)

    visit(p.root, np.eye(d_a, dtype=complex), np.eye(d_b, dtype=complex), 0)
    return [worst[d] for d in sorted(worst)]


def _check_state(state: np.ndarray, dim: int) -> np.ndarray:
    state = np.asarray(state, dtype=complex).ravel()
    if state.shape != (dim,):
        raise ValidationError(f"expected a state of dimension {dim}, got {state.shape[0]}")
    norm = float(np.linalg.norm(state))
    if abs(norm - 1.0) > 1e-9:
        raise ValidationError(f"input state is not normalized (norm {norm:.12f})")
    return state


def _execute(
    leaves: List[Tuple[Outcomes, np.ndarray, np.ndarray]], state: np.ndarray
) -> List[Branch]:
    branches: List[Branch] = []
    pruned = 0.0
    for outcomes, m, k in leaves:
        v = kron(m, k) @ state
        probability = float(np.real(np.vdot(v, v)))
        if probability <= PRUNE_PROBABILITY:
            pruned += probability
            continue
        branches.append(
            Branch(
                outcomes=outcomes,
                probability=probability,
                post_state=v / np.sqrt(probability),
                accumulated_a=m,
                accumulated_b=k,
            )
        )
    if pruned > PRUNED_MASS_LIMIT:
        logger.warning("pruned branch mass %.3e exceeds %.0e", pruned, PRUNED_MASS_LIMIT)
    return branches


def execute_protocol(p: LoccProtocol, state: np.ndarray, d_a: int, d_b: int) -> List[Branch]:
    """Run the protocol on a normalized pure state of H_A (x) H_B."""
    state = _check_state(state, d_a * d_b)
    return _execute(accumulated_operators(p, d_a, d_b), state)


def apply_channel(p: LoccProtocol, rho: np.ndarray, d_a: int, d_b: int) -> np.ndarray:
    """sum_R (M^(R) (x) K^(R)) rho (M^(R) (x) K^(R))^dag."""
    rho = np.asarray(rho, dtype=complex)
    dim = d_a * d_b
    if rho.shape != (dim, dim):
        raise ValidationError(f"expected a {dim}x{dim} density matrix, got {rho.shape}")
    if float(np.max(np.abs(rho - rho.conj().T))) > 1e-9:
        raise ValidationError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > 1e-9 or np.linalg.eigvalsh(rho).min() < -1e-9:
        raise ValidationError("density matrix must be positive semidefinite with unit trace")

    out = np.zeros_like(rho)
    for _, m, k in accumulated_operators(p, d_a, d_b):
        kraus = kron(m, k)
        out += kraus @ rho @ kraus.conj().T
    return out


def synthesize_relocalization_protocol(form: ControlledUnitaryForm) -> LoccProtocol:
    """The control party measures {P_i}; on outcome i the target party applies v_i^dag."""
    validate_form(form)
    control = form["control_side"]
    target = other_side(control)

    projectors = [b["projector"] for b in form["blocks"]]
    children = {}
    for i, block in enumerate(form["blocks"]):
        undo = block["unitary"].conj().T
        children[i] = (
            ProtocolNode.leaf(b_correction=undo) if target == "B" else ProtocolNode.leaf(a_correction=undo)
        )
    return LoccProtocol(ProtocolNode(Measurement(control, projectors), children), protects=target)


def _spanning_states(d: int) -> List[np.ndarray]:
    """|j>, (|j>+|k>)/sqrt2 and (|j>+i|k>)/sqrt2: their projectors span all d x d matrices."""
    basis = np.eye(d, dtype=complex)
    states = [basis[j] for j in range(d)]
    for j in range(d):
        for k in range(j + 1, d):
            states.append((basis[j] + basis[k]) / np.sqrt(2))
            states.append((basis[j] + 1j * basis[k]) / np.sqrt(2))
    return states


def _verify_inputs(
    u: BipartiteUnitary,
    p: LoccProtocol,
    side: Side,
    inputs: List[Tuple[np.ndarray, np.ndarray]],
    tol: float,
    samples: int,
    seed: int,
    tolerances: ToleranceInfo,
) -> RelocalizationReport:
    d_a, d_b = u.d_a, u.d_b
    leaves = accumulated_operators(p, d_a, d_b)
    traced: Side = other_side(side)

    per_branch: Dict[Outcomes, BranchFidelity] = {}
    min_fidelity = 1.0
    channel_residual = 0.0
    for psi_a, psi_b in inputs:
        protected = psi_b if side == "B" else psi_a
        state = u.matrix @ kron(psi_a, psi_b)
        out = np.zeros((u.dim, u.dim), dtype=complex)
        for branch in _execute(leaves, state):
            phi = branch["post_state"]
            rho = np.outer(phi, phi.conj())
            out += branch["probability"] * rho
            reduced = partial_trace(rho, d_a, d_b, traced)
            fidelity = float(np.real(np.vdot(protected, reduced @ protected)))

            entry = per_branch.setdefault(
                branch["outcomes"],
                BranchFidelity(
                    outcomes=list(branch["outcomes"]), min_fidelity=1.0, max_probability=0.0
                ),
            )
            entry["min_fidelity"] = min(entry["min_fidelity"], fidelity)
            entry["max_probability"] = max(entry["max_probability"], branch["probability"])
            min_fidelity = min(min_fidelity, fidelity)

        tau = partial_trace(out, d_a, d_b, side)
        target = np.outer(protected, protected.conj())
        expected = kron(tau, target) if side == "B" else kron(target, tau)
        channel_residual = max(channel_residual, hs_norm(out - expected))

    order = {outcomes: i for i, (outcomes, _, _) in enumerate(leaves)}
    return RelocalizationReport(
        seed=seed,
        tolerances=tolerances,
        side=side,
        branch_fidelities=[per_branch[o] for o in sorted(per_branch, key=order.__getitem__)],
        min_fidelity=min_fidelity,
        channel_residual=channel_residual,
        verdict=min_fidelity >= 1 - tol,
        samples=samples,
        inputs_checked=len(inputs),
        tol=tol,
    )


def verify_one_piece_relocalization(
    u: BipartiteUnitary,
    p: LoccProtocol,
    side: Side = "B",
    n_samples: int = 100,
    seed: int = 0,
    tol: float = 1e-9,
    tolerances: Union[ToleranceConfig, None] = None,
) -> RelocalizationReport:
    """Check that the protocol restores `side`'s piece after U on every tested input.

    Inputs are `n_samples` seeded Haar product states plus every product of
    basis states and basis superpositions; the latter span the input operator
    space, so by linearity of the channel they cover all inputs up to `tol`.
    """
    if side not in ("A", "B"):
        raise ValidationError(f"side must be 'A' or 'B', got {side!r}")
    rng = default_rng(seed)
    inputs = [(random_state(u.d_a, rng), random_state(u.d_b, rng)) for _ in range(n_samples)]
    inputs += [(a, b) for a in _spanning_states(u.d_a) for b in _spanning_states(u.d_b)]
    return _verify_inputs(
        u, p, side, inputs, tol, n_samples, seed, (tolerances or ToleranceConfig()).to_dict()
    )


def check_bob_accumulated_unitary(
    p: LoccProtocol, d_a: int, d_b: int, tol: float = 1e-9, party: Side = "B"
) -> List[BranchUnitarity]:
    """Per leaf, whether K K^dag is proportional to the identity.

    Necessary for restoring `party`'s piece: a protocol that relocalizes it
    leaves the party's qudit maximally entangled with a reference system, which
    forces every accumulated operator of that party to be proportional to a unitary.
    """
    d = d_b if party == "B" else d_a
    verdicts = []
    for outcomes, m, k in accumulated_operators(p, d_a, d_b):
        op = k if party == "B" else m
        kk = op @ op.conj().T
        deviation = hs_norm(kk - np.trace(kk) / d * np.eye(d))
        verdicts.append(
            BranchUnitarity(outcomes=list(outcomes), deviation=deviation, passed=deviation <= tol)
        )
    return verdicts


def reduce_to_one_way(p: LoccProtocol, d_a: int, d_b: int, tol: float = 1e-9) -> LoccProtocol:
    """Equivalent one-turn protocol: Alice measures {|c_R| M^(R)}, Bob applies K^(R)/|c_R|.

    Valid when every Bob accumulated operator is c_R times a unitary; Alice
    runs her whole branch of the tree at once and sends the full outcome path.
    The induced channel is unchanged.

    Raises:
        MalformedProtocolError: If some K^(R) is not proportional to a unitary
    """
    operators, children = [], {}
    for outcomes, m, k in accumulated_operators(p, d_a, d_b):
        kk = k @ k.conj().T
        weight = float(np.real(np.trace(kk))) / d_b
        if hs_norm(kk - weight * np.eye(d_b)) > tol:
            raise MalformedProtocolError(
                f"Bob's accumulated operator on branch {list(outcomes)} is not proportional to a unitary"
            )
        if weight <= PRUNE_PROBABILITY**2:
            continue
        c = np.sqrt(weight)
        children[len(operators)] = ProtocolNode.leaf(b_correction=k / c)
        operators.append(c * m)

    if not operators:
        raise MalformedProtocolError("protocol has no branch with nonzero weight")
    return LoccProtocol(ProtocolNode(Measurement("A", operators), children), protects="B")


def fixed_input_relocalization_demo(
    n_samples: int = 100, seed: int = 0, tol: float = 1e-10
) -> RelocalizationReport:
    """Restore Bob's piece after the SWAP-phase gate when Alice's input is fixed to |+>.

    Alice measures {|+><+|, |-><-|}; Bob applies H = |0><+| + |1><-| on the
    first outcome and sigma_z H on the second. The gate itself is not
    controlled, so this works only because Alice's input carries no unknown
    piece.
    """
    u = build_gate("swap_phase")
    plus = np.outer(KET_PLUS, KET_PLUS.conj())
    measurement = Measurement("A", [plus, np.eye(2) - plus])
    protocol = LoccProtocol(
        ProtocolNode(
            measurement,
            {0: ProtocolNode.leaf(b_correction=HADAMARD), 1: ProtocolNode.leaf(b_correction=PAULI_Z @ HADAMARD)},
        ),
        protects="B",
    )

    rng = default_rng(seed)
    inputs = [(KET_PLUS, b) for b in _spanning_states(2)]
    inputs += [(KET_PLUS, random_state(2, rng)) for _ in range(n_samples)]
    return _verify_inputs(u, protocol, "B", inputs, tol, n_samples, seed, ToleranceConfig().to_dict())


def random_measurement(party: Side, d: int, n_outcomes: int, seed: SeedLike = None) -> Measurement:
    """Kraus set cut from a Haar isometry C^d -> C^(n d)."""
    isometry = random_unitary(n_outcomes * d, seed)[:, :d]
    return Measurement(party, [isometry[r * d : (r + 1) * d] for r in range(n_outcomes)])


def random_protocol(
    d_a: int, d_b: int, depth: int, seed: SeedLike = None, max_outcomes: int = 2
) -> LoccProtocol:
    rng = default_rng(seed)

    def grow(level: int) -> ProtocolNode:
        if level == 0:
            a = random_unitary(d_a, rng) if rng.random() < 0.5 else None
            b = random_unitary(d_b, rng) if rng.random() < 0.5 else None
            return ProtocolNode.leaf(a_correction=a, b_correction=b)
        party: Side = "A" if rng.random() < 0.5 else "B"
        n = int(rng.integers(1, max_outcomes + 1))
        meas = random_measurement(party, d_a if party == "A" else d_b, n, rng)
        return ProtocolNode(meas, {r: grow(level - 1) for r in range(n)})

    return LoccProtocol(grow(depth))


class Locc(ToolkitConfig):
    def validate_measurement(self, m: Measurement) -> MeasurementCheck:
        return validate_measurement(m)

    def execute(self, p: LoccProtocol, state: np.ndarray, d_a: int, d_b: int) -> List[Branch]:
        return execute_protocol(p, state, d_a, d_b)

    def apply_channel(self, p: LoccProtocol, rho: np.ndarray, d_a: int, d_b: int) -> np.ndarray:
        return apply_channel(p, rho, d_a, d_b)

    def synthesize(self, form: ControlledUnitaryForm) -> LoccProtocol:
        return synthesize_relocalization_protocol(form)

    def verify(
        self,
        u: BipartiteUnitary,
        p: LoccProtocol,
        side: Side = "B",
        n_samples: int = 100,
        tol: float = 1e-9,
    ) -> RelocalizationReport:
        return verify_one_piece_relocalization(u, p, side, n_samples, self.seed, tol, self.tolerances)

    def check_bob_accumulated_unitary(
        self, p: LoccProtocol, d_a: int, d_b: int, tol: float = 1e-9
    ) -> List[BranchUnitarity]:
        return check_bob_accumulated_unitary(p, d_a, d_b, tol)

    def reduce_to_one_way(self, p: LoccProtocol, d_a: int, d_b: int) -> LoccProtocol:
        return reduce_to_one_way(p, d_a, d_b)

    def fixed_input_demo(self, n_samples: int = 100) -> RelocalizationReport:
        return fixed_input_relocalization_demo(n_samples, self.seed)


class AsyncLocc(ToolkitConfig):
    async def verify(
        self,
        u: BipartiteUnitary,
        p: LoccProtocol,
        side: Side = "B",
        n_samples: int = 100,
        tol: float = 1e-9,
    ) -> RelocalizationReport:
        return await asyncio.to_thread(
            verify_one_piece_relocalization, u, p, side, n_samples, self.seed, tol, self.tolerances
        )
