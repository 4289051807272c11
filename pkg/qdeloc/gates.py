"""Gate gallery.

Gates are generated from their defining formulas on every call, never
stored, so the formulas below are the single source of truth.
"""

from typing import Callable, Dict, Tuple, Union

import numpy as np
from typing_extensions import NotRequired, TypedDict

from .analysis import ControlledBlock, ControlledUnitaryForm, reconstruct
from .exceptions import ValidationError
from .linalg import BipartiteUnitary, default_rng, expm_hermitian, kron, random_unitary

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

KET_0 = np.array([1, 0], dtype=complex)
KET_1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)


class GateParams(TypedDict):
    alpha: NotRequired[float]
    """
    Coupling of the Heisenberg gate exp(i alpha sum_j sigma^j (x) sigma^j).
    """
    d_a: NotRequired[int]
    d_b: NotRequired[int]
    n_blocks: NotRequired[int]
    """
    Number of controlled blocks (1 <= n_blocks <= d_a).
    """
    seed: NotRequired[int]


def _ketbra(ket: np.ndarray, bra: np.ndarray) -> np.ndarray:
    return np.outer(ket, bra.conj())


def identity(params: GateParams) -> BipartiteUnitary:
    d_a, d_b = params.get("d_a", 2), params.get("d_b", 2)
    return BipartiteUnitary(np.eye(d_a * d_b), d_a, d_b)


def swap(params: GateParams) -> BipartiteUnitary:
    d = params.get("d_a", 2)
    if params.get("d_b", d) != d:
        raise ValidationError(
            f"swap needs equal local dimensions, got d_a={d}, d_b={params['d_b']}"
        )
    m = sum(kron(_ketbra(np.eye(d)[i], np.eye(d)[j]), _ketbra(np.eye(d)[j], np.eye(d)[i]))
            for i in range(d) for j in range(d))
    return BipartiteUnitary(m, d, d)


def cnot(params: GateParams) -> BipartiteUnitary:
    # |0><0| (x) I + |1><1| (x) sigma_x
    m = kron(_ketbra(KET_0, KET_0), PAULI_I) + kron(_ketbra(KET_1, KET_1), PAULI_X)
    return BipartiteUnitary(m, 2, 2)


def swap_phase(params: GateParams) -> BipartiteUnitary:
    # |0><0| (x) |0><0| + |0><1| (x) |1><0| + |1><0| (x) |0><1| - |1><1| (x) |1><1|
    m = (
        kron(_ketbra(KET_0, KET_0), _ketbra(KET_0, KET_0))
        + kron(_ketbra(KET_0, KET_1), _ketbra(KET_1, KET_0))
        + kron(_ketbra(KET_1, KET_0), _ketbra(KET_0, KET_1))
        - kron(_ketbra(KET_1, KET_1), _ketbra(KET_1, KET_1))
    )
    return BipartiteUnitary(m, 2, 2)


def heisenberg(params: GateParams) -> BipartiteUnitary:
    if "alpha" not in params:
        raise ValidationError("heisenberg needs the 'alpha' parameter")
    generator = kron(PAULI_X, PAULI_X) + kron(PAULI_Y, PAULI_Y) + kron(PAULI_Z, PAULI_Z)
    return BipartiteUnitary(expm_hermitian(generator, float(params["alpha"])), 2, 2)


def product(params: GateParams) -> BipartiteUnitary:
    d_a, d_b = params.get("d_a", 2), params.get("d_b", 2)
    rng = default_rng(params.get("seed", 0))
    u_a, u_b = random_unitary(d_a, rng), random_unitary(d_b, rng)
    return identity(params).sandwich(u_a, u_b, np.eye(d_a), np.eye(d_b))


def controlled_random(
    d_a: int, d_b: int, n_blocks: int, seed: Union[int, None] = 0
) -> Tuple[BipartiteUnitary, ControlledUnitaryForm]:
    """Random (sum_i P_i (x) v_i)(u_A (x) I) and the form that generated it.

    The control basis, the block partition, the block unitaries and u_A are
    all drawn from `seed`.
    """
    if d_a < 1 or d_b < 1:
        raise ValidationError(f"local dimensions must be positive, got ({d_a}, {d_b})")
    if not 1 <= n_blocks <= d_a:
        raise ValidationError(
            f"invalid block structure: need 1 <= n_blocks <= d_a, got n_blocks={n_blocks}, d_a={d_a}"
        )

    rng = default_rng(seed)
    basis = random_unitary(d_a, rng)
    order = rng.permutation(d_a)
    cuts = np.sort(rng.choice(np.arange(1, d_a), size=n_blocks - 1, replace=False))

    blocks = []
    for members in np.split(order, cuts):
        e = basis[:, members]
        blocks.append(ControlledBlock(projector=e @ e.conj().T, unitary=random_unitary(d_b, rng)))

    form = ControlledUnitaryForm(control_side="A", u_local=random_unitary(d_a, rng), blocks=blocks)
    gate, _ = reconstruct(form)
    return gate, form


def _controlled_random(params: GateParams) -> BipartiteUnitary:
    for key in ("d_a", "d_b", "n_blocks"):
        if key not in params:
            raise ValidationError(f"controlled_random needs the '{key}' parameter")
    gate, _ = controlled_random(
        params["d_a"], params["d_b"], params["n_blocks"], params.get("seed", 0)
    )
    return gate


GALLERY: Dict[str, Callable[[GateParams], BipartiteUnitary]] = {
    "identity": identity,
    "swap": swap,
    "cnot": cnot,
    "swap_phase": swap_phase,
    "heisenberg": heisenberg,
    "product": product,
    "controlled_random": _controlled_random,
}


def build_gate(name: str, params: Union[GateParams, None] = None) -> BipartiteUnitary:
    """Build a gallery gate by name.

    Raises:
        ValidationError: If the name is unknown or a parameter is missing or invalid
    """
    builder = GALLERY.get(name)
    if builder is None:
        raise ValidationError(
            f"unknown gate {name!r}", err={"known": sorted(GALLERY)}
        )
    return builder(params or {})
