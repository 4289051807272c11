import asyncio
import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from typing_extensions import NotRequired, TypedDict

from ._config import ToleranceConfig, ToolkitConfig
from ._types import BaseReport, Side
from .exceptions import (
    ApplicationError,
    MalformedFormError,
    NonCommutingFamilyError,
    ValidationError,
)
from .linalg import (
    BipartiteUnitary,
    SeedLike,
    default_rng,
    hermiticity_deviation,
    hs_norm,
    joint_diagonalize,
    kron,
    reshuffle,
    svd,
    unitarity_deviation,
)

logger = logging.getLogger(__name__)

FORM_TOL = 1e-9


class SchmidtDecomposition(TypedDict):
    lambdas: np.ndarray
    """
    Operator Schmidt coefficients, descending, truncated at tol_rank relative to the largest.
    """
    a_ops: List[np.ndarray]
    """
    Hilbert-Schmidt orthonormal operators on H_A.
    """
    b_ops: List[np.ndarray]
    """
    Hilbert-Schmidt orthonormal operators on H_B.
    """
    residual: float
    """
    ||U - sum_k lambda_k A_k (x) B_k||_HS of the kept terms.
    """


class ControlledBlock(TypedDict):
    projector: np.ndarray
    unitary: np.ndarray


class ControlledUnitaryForm(TypedDict):
    control_side: Side
    """
    Side holding the projectors and u_local; the other side carries the block unitaries.
    """
    u_local: np.ndarray
    blocks: List[ControlledBlock]
    residual: NotRequired[float]
    """
    Reconstruction residual against the gate it was detected on.
    """


class Classification(BaseReport):
    osr: int
    schmidt_coefficients: List[float]
    local: bool
    """
    True for product gates (operator Schmidt rank 1).
    """
    controlled_from_a: Optional[ControlledUnitaryForm]
    controlled_from_b: Optional[ControlledUnitaryForm]
    residual_a: Optional[float]
    residual_b: Optional[float]
    relocalizable: bool


def operator_schmidt_decomposition(
    u: BipartiteUnitary, tol_rank: float = 1e-7
) -> SchmidtDecomposition:
    """U = sum_k lambda_k A_k (x) B_k from the SVD of the realigned matrix."""
    r = reshuffle(u)
    x, s, y = svd(r)
    keep = int(np.sum(s > tol_rank * s[0]))

    a_ops = [x[:, k].reshape(u.d_a, u.d_a) for k in range(keep)]
    b_ops = [y[:, k].conj().reshape(u.d_b, u.d_b) for k in range(keep)]
    lambdas = s[:keep].copy()

    rebuilt = sum(lam * kron(a, b) for lam, a, b in zip(lambdas, a_ops, b_ops))
    residual = hs_norm(u.matrix - rebuilt)
    # the dropped tail is bounded by tol_rank * lambda_1 per term
    bound = 1e-9 + tol_rank * s[0] * np.sqrt(len(s))
    if residual > bound:
        raise ApplicationError(
            "operator Schmidt reconstruction does not match the input",
            err={"residual": residual},
        )

    return SchmidtDecomposition(lambdas=lambdas, a_ops=a_ops, b_ops=b_ops, residual=residual)


def operator_schmidt_rank(u: BipartiteUnitary, tol_rank: float = 1e-7) -> int:
    return len(operator_schmidt_decomposition(u, tol_rank)["lambdas"])


def _is_projector(p: np.ndarray, tol: float) -> bool:
    return (
        p.ndim == 2
        and p.shape[0] == p.shape[1]
        and float(np.max(np.abs(p @ p - p))) <= tol
        and hermiticity_deviation(p) <= tol
    )


def validate_form(form: ControlledUnitaryForm, tol: float = FORM_TOL) -> Tuple[int, int]:
    """Check the structural invariants of a form; returns (d_control, d_target).

    Raises:
        MalformedFormError: If a block or the local unitary breaks an invariant
    """
    if form.get("control_side") not in ("A", "B"):
        raise MalformedFormError("control_side must be 'A' or 'B'")
    blocks = form.get("blocks") or []
    if not blocks:
        raise MalformedFormError("a controlled form needs at least one block")

    u_local = np.asarray(form["u_local"], dtype=complex)
    d_c = u_local.shape[0]
    if u_local.shape != (d_c, d_c) or unitarity_deviation(u_local) > tol:
        raise MalformedFormError("u_local must be a unitary on the control side")

    d_t = np.asarray(blocks[0]["unitary"]).shape[0]
    total = np.zeros((d_c, d_c), dtype=complex)
    projectors = []
    for i, block in enumerate(blocks):
        p = np.asarray(block["projector"], dtype=complex)
        v = np.asarray(block["unitary"], dtype=complex)
        if p.shape != (d_c, d_c) or not _is_projector(p, tol):
            raise MalformedFormError(f"block {i}: projector is not a {d_c}x{d_c} projector")
        if v.shape != (d_t, d_t) or unitarity_deviation(v) > tol:
            raise MalformedFormError(f"block {i}: target operator is not a {d_t}x{d_t} unitary")
        projectors.append(p)
        total += p

    for i in range(len(projectors)):
        for j in range(i + 1, len(projectors)):
            overlap = float(np.max(np.abs(projectors[i] @ projectors[j])))
            if overlap > tol:
                raise MalformedFormError(
                    f"projectors {i} and {j} are not orthogonal", err={"overlap": overlap}
                )
    completeness = float(np.max(np.abs(total - np.eye(d_c))))
    if completeness > tol:
        raise MalformedFormError(
            "projectors do not sum to the identity", err={"deviation": completeness}
        )
    return d_c, d_t


def reconstruct(
    form: ControlledUnitaryForm, reference: Optional[BipartiteUnitary] = None
) -> Tuple[BipartiteUnitary, Optional[float]]:
    """(sum_i P_i (x) v_i)(u_local (x) I), or its side-B mirror.

    Returns the gate and, when `reference` is given, ||U - reference||_HS.
    """
    d_c, d_t = validate_form(form)
    u_local = np.asarray(form["u_local"], dtype=complex)
    eye_t = np.eye(d_t)

    if form["control_side"] == "A":
        controlled = sum(kron(b["projector"], b["unitary"]) for b in form["blocks"])
        matrix = controlled @ kron(u_local, eye_t)
        gate = BipartiteUnitary(matrix, d_c, d_t, tol_unitary=FORM_TOL)
    else:
        controlled = sum(kron(b["unitary"], b["projector"]) for b in form["blocks"])
        matrix = controlled @ kron(eye_t, u_local)
        gate = BipartiteUnitary(matrix, d_t, d_c, tol_unitary=FORM_TOL)

    residual = None
    if reference is not None:
        if (reference.d_a, reference.d_b) != (gate.d_a, gate.d_b):
            raise ValidationError("reference gate has different local dimensions")
        residual = hs_norm(gate.matrix - reference.matrix)
    return gate, residual


def _product_family(a_ops: List[np.ndarray]) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    hermitian, anti = [], []
    for k in range(len(a_ops)):
        for l in range(k, len(a_ops)):
            prod = a_ops[k] @ a_ops[l].conj().T
            hermitian.append(prod + prod.conj().T)
            if l > k:
                anti.append(1j * (prod - prod.conj().T))
    return hermitian, anti


def _max_commutator(family: List[np.ndarray], bound: float) -> float:
    """Largest max-norm commutator, stopping at the first one above `bound`."""
    worst = 0.0
    for i in range(len(family)):
        for j in range(i + 1, len(family)):
            c = family[i] @ family[j] - family[j] @ family[i]
            worst = max(worst, float(np.max(np.abs(c))))
            if worst > bound:
                return worst
    return worst


def _gauge_phase(v: np.ndarray) -> complex:
    """Phase of the first entry of largest magnitude (row-major)."""
    flat = v.ravel()
    mags = np.abs(flat)
    k = int(np.argmax(mags >= (1 - 1e-6) * mags.max()))
    return flat[k] / mags[k]


def _local_form(u: BipartiteUnitary, decomp: SchmidtDecomposition) -> ControlledUnitaryForm:
    lam = decomp["lambdas"][0]
    u_a = np.sqrt(u.d_a) * decomp["a_ops"][0]
    u_b = lam / np.sqrt(u.d_a) * decomp["b_ops"][0]
    phase = _gauge_phase(u_b)
    return ControlledUnitaryForm(
        control_side="A",
        u_local=scipy.linalg.polar(u_a * phase)[0],
        blocks=[
            ControlledBlock(
                projector=np.eye(u.d_a, dtype=complex),
                unitary=scipy.linalg.polar(u_b * np.conj(phase))[0],
            )
        ],
    )


def _form_from_basis(
    u: BipartiteUnitary, basis: np.ndarray, tol: ToleranceConfig
) -> Optional[ControlledUnitaryForm]:
    d_a, d_b = u.d_a, u.d_b
    u4 = u.matrix.reshape(d_a, d_b, d_a, d_b)

    fs: List[np.ndarray] = []
    ws: List[np.ndarray] = []
    for m in range(d_a):
        # (<e_m| (x) I) U rearranged so that a product row slice is rank one
        row = np.einsum("a,abcd->bcd", basis[:, m].conj(), u4)
        g = row.transpose(1, 0, 2).reshape(d_a, d_b * d_b)
        x, s, y = svd(g)
        if s.size > 1 and s[1] > tol.tol_rank * s[0]:
            logger.debug("row slice %d has rank > 1 (sigma_2/sigma_1 = %.3e)", m, s[1] / s[0])
            return None
        fs.append(x[:, 0].conj())
        ws.append(s[0] * y[:, 0].conj().reshape(d_b, d_b))

    f = np.stack(fs, axis=1)
    gram = float(np.max(np.abs(f.conj().T @ f - np.eye(d_a))))
    if gram > tol.tol_reconstruct:
        logger.debug("control factors are not orthonormal (deviation %.3e)", gram)
        return None

    groups: List[List[int]] = []
    for m in range(d_a):
        for group in groups:
            overlap = np.trace(ws[group[0]].conj().T @ ws[m])
            if abs(overlap) >= d_b * (1 - tol.tol_reconstruct):
                phase = overlap / abs(overlap)
                fs[m] = fs[m] * np.conj(phase)
                group.append(m)
                break
        else:
            groups.append([m])

    blocks: List[ControlledBlock] = []
    for group in groups:
        phase = _gauge_phase(ws[group[0]])
        for m in group:
            fs[m] = fs[m] * np.conj(phase)
        e = basis[:, group]
        blocks.append(
            ControlledBlock(
                projector=e @ e.conj().T,
                unitary=scipy.linalg.polar(ws[group[0]] * np.conj(phase))[0],
            )
        )

    f = np.stack(fs, axis=1)
    u_local = scipy.linalg.polar(basis @ f.conj().T)[0]
    blocks.sort(key=_block_order)
    return ControlledUnitaryForm(control_side="A", u_local=u_local, blocks=blocks)


def _block_order(block: ControlledBlock) -> Tuple[int, float]:
    weights = np.real(np.diag(block["projector"]))
    first = int(np.argmax(weights > 1e-6))
    return first, -abs(np.trace(block["unitary"]))


def _detect_from_a(
    u: BipartiteUnitary, tol: ToleranceConfig, seed: SeedLike
) -> Optional[ControlledUnitaryForm]:
    decomp = operator_schmidt_decomposition(u, tol.tol_rank)
    if len(decomp["lambdas"]) == 1:
        return _local_form(u, decomp)

    hermitian, anti = _product_family(decomp["a_ops"])
    extended = hermitian + anti
    scale = max(1.0, max(float(np.linalg.norm(h, 2)) for h in extended))
    bound = tol.tol_commute * scale**2
    commutator = _max_commutator(extended, bound)
    if commutator > bound:
        logger.debug("product family does not commute (%.3e): not controlled", commutator)
        return None

    rng = default_rng(seed)
    for attempt, family in enumerate((hermitian, extended)):
        try:
            basis = joint_diagonalize(family, tol.tol_commute, rng)
        except NonCommutingFamilyError as e:
            logger.debug("joint diagonalization attempt %d failed: %s", attempt, e.message)
            continue
        form = _form_from_basis(u, basis, tol)
        if form is not None:
            return form
        logger.debug("no controlled form from attempt %d, retrying with extended family", attempt)

    logger.info(
        "commuting Schmidt family on %dx%d gate but no controlled form recovered; reporting absent",
        u.d_a,
        u.d_b,
    )
    return None


def detect_controlled(
    u: BipartiteUnitary,
    side: Side = "A",
    tol: Union[ToleranceConfig, None] = None,
    seed: SeedLike = 0,
) -> Optional[ControlledUnitaryForm]:
    """Find U = (sum_i P_i (x) v_i)(u_local (x) I) with the projectors on `side`.

    Returns None when no such form exists. A returned form always passed the
    reconstruction check, so the detector can miss a form but never invent one.
    """
    tol = tol or ToleranceConfig()
    if side not in ("A", "B"):
        raise ValidationError(f"side must be 'A' or 'B', got {side!r}")

    target = u if side == "A" else u.swapped()
    form = _detect_from_a(target, tol, seed)
    if form is None:
        return None

    form["control_side"] = side
    try:
        _, residual = reconstruct(form, reference=u)
    except (MalformedFormError, ValidationError) as e:
        logger.info("candidate form rejected: %s", e.message)
        return None

    if residual > tol.tol_reconstruct * np.sqrt(u.dim):
        logger.info("candidate form rejected: residual %.3e", residual)
        return None
    form["residual"] = residual
    return form


def classify(
    u: BipartiteUnitary,
    tol: Union[ToleranceConfig, None] = None,
    seed: int = 0,
) -> Classification:
    tol = tol or ToleranceConfig()
    decomp = operator_schmidt_decomposition(u, tol.tol_rank)
    form_a = detect_controlled(u, "A", tol, seed)
    form_b = detect_controlled(u, "B", tol, seed)
    return _classification(decomp, form_a, form_b, tol, seed)


def _classification(
    decomp: SchmidtDecomposition,
    form_a: Optional[ControlledUnitaryForm],
    form_b: Optional[ControlledUnitaryForm],
    tol: ToleranceConfig,
    seed: int,
) -> Classification:
    osr = len(decomp["lambdas"])
    return Classification(
        seed=seed,
        tolerances=tol.to_dict(),
        osr=osr,
        schmidt_coefficients=[float(x) for x in decomp["lambdas"]],
        local=osr == 1,
        controlled_from_a=form_a,
        controlled_from_b=form_b,
        residual_a=None if form_a is None else form_a["residual"],
        residual_b=None if form_b is None else form_b["residual"],
        relocalizable=form_a is not None or form_b is not None,
    )


def support_projector(m: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Projector onto the support of |M| = sqrt(M^dag M)."""
    m = np.asarray(m, dtype=complex)
    values, vectors = np.linalg.eigh(m.conj().T @ m)
    top = values.max() if values.size else 0.0
    keep = vectors[:, values > tol * max(top, 1.0)]
    return keep @ keep.conj().T


def coarsen_projectors(projectors: Sequence[np.ndarray], tol: float = 1e-9) -> List[np.ndarray]:
    """Merge non-orthogonal projectors into sum-space projectors until all are orthogonal.

    Every merge removes one element, so the loop stops after at most n - 1 merges.

    Raises:
        ValidationError: If an input is not a projector within `tol`
    """
    current = [np.asarray(p, dtype=complex) for p in projectors]
    for i, p in enumerate(current):
        if not _is_projector(p, tol):
            raise ValidationError(f"input {i} is not a projector (P^2 = P = P^dag)")

    merged = True
    while merged:
        merged = False
        for i in range(len(current)):
            for j in range(i + 1, len(current)):
                if float(np.max(np.abs(current[i] @ current[j]))) <= tol:
                    continue
                span = scipy.linalg.orth(np.hstack([current[i], current[j]]), rcond=max(tol, 1e-12))
                current[i] = span @ span.conj().T
                del current[j]
                merged = True
                break
            if merged:
                break
    return current


def projective_lift(operators: Sequence[np.ndarray], tol: float = 1e-9) -> List[np.ndarray]:
    """Coarsened support projectors of a generalized measurement {M_r}."""
    return coarsen_projectors([support_projector(m, tol) for m in operators], tol)


class Analysis(ToolkitConfig):
    def schmidt_decomposition(self, u: BipartiteUnitary) -> SchmidtDecomposition:
        return operator_schmidt_decomposition(u, self.tolerances.tol_rank)

    def schmidt_rank(self, u: BipartiteUnitary) -> int:
        return operator_schmidt_rank(u, self.tolerances.tol_rank)

    def detect_controlled(
        self, u: BipartiteUnitary, side: Side = "A"
    ) -> Optional[ControlledUnitaryForm]:
        return detect_controlled(u, side, self.tolerances, self.seed)

    def classify(self, u: BipartiteUnitary) -> Classification:
        return classify(u, self.tolerances, self.seed)

    def coarsen_projectors(self, projectors: Sequence[np.ndarray]) -> List[np.ndarray]:
        return coarsen_projectors(projectors, FORM_TOL)

    def reconstruct(
        self, form: ControlledUnitaryForm, reference: Optional[BipartiteUnitary] = None
    ) -> Tuple[BipartiteUnitary, Optional[float]]:
        return reconstruct(form, reference)


class AsyncAnalysis(ToolkitConfig):
    async def classify(self, u: BipartiteUnitary) -> Classification:
        decomp, form_a, form_b = await asyncio.gather(
            asyncio.to_thread(operator_schmidt_decomposition, u, self.tolerances.tol_rank),
            asyncio.to_thread(detect_controlled, u, "A", self.tolerances, self.seed),
            asyncio.to_thread(detect_controlled, u, "B", self.tolerances, self.seed),
        )
        return _classification(decomp, form_a, form_b, self.tolerances, self.seed)
