import asyncio
import logging
from typing import List, Tuple, Union

import numpy as np
from scipy.optimize import OptimizeResult, minimize
from typing_extensions import TypedDict

from ._config import ToolkitConfig
from .exceptions import ValidationError
from .linalg import BipartiteUnitary, default_rng, kron, partial_trace

logger = logging.getLogger(__name__)

SPECTRUM_FLOOR = 1e-15


class OptimizationConfig:
    restarts: int
    max_iters: int
    step: float
    adaptive: bool
    tol: float
    seed: int

    def __init__(
        self,
        restarts: int = 32,
        max_iters: int = 2000,
        step: float = 0.5,
        adaptive: bool = True,
        tol: float = 1e-10,
        seed: int = 0,
    ):
        if restarts < 1:
            raise ValueError(f"restarts must be at least 1, got {restarts}")
        if max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {max_iters}")
        if tol <= 0 or step <= 0:
            raise ValueError("tol and step must be positive")

        self.restarts = restarts
        self.max_iters = max_iters
        self.step = step
        self.adaptive = adaptive
        self.tol = tol
        self.seed = seed


class EntanglingPowerResult(TypedDict):
    value: float
    """
    Best output entanglement found, in ebits. A lower bound on the true maximum.
    """
    argmax_a: np.ndarray
    argmax_b: np.ndarray
    restart_values: List[float]
    converged: bool
    seed: int


def _entropy_from_spectrum(values: np.ndarray) -> float:
    values = values[values > SPECTRUM_FLOOR]
    return float(max(0.0, -np.sum(values * np.log2(values))))


def entanglement_entropy(state: np.ndarray, d_a: int, d_b: int) -> float:
    """Von Neumann entropy (base 2) of Tr_B |psi><psi|."""
    state = np.asarray(state, dtype=complex).ravel()
    if state.shape != (d_a * d_b,):
        raise ValidationError(f"expected a state of dimension {d_a * d_b}, got {state.shape[0]}")
    norm = float(np.linalg.norm(state))
    if abs(norm - 1.0) > 1e-9:
        raise ValidationError(f"state is not normalized (norm {norm:.12f})")

    reduced = partial_trace(np.outer(state, state.conj()), d_a, d_b, "B")
    entropy = _entropy_from_spectrum(np.linalg.eigvalsh(reduced))
    return min(entropy, float(np.log2(min(d_a, d_b))))


def _split_params(x: np.ndarray, d_a: int, d_b: int) -> Tuple[np.ndarray, np.ndarray]:
    a = x[:d_a] + 1j * x[d_a : 2 * d_a]
    b = x[2 * d_a : 2 * d_a + d_b] + 1j * x[2 * d_a + d_b :]
    return a / np.linalg.norm(a), b / np.linalg.norm(b)


def _output_entropy(x: np.ndarray, u: BipartiteUnitary) -> float:
    a, b = _split_params(x, u.d_a, u.d_b)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        return 0.0
    c = (u.matrix @ kron(a, b)).reshape(u.d_a, u.d_b)
    return _entropy_from_spectrum(np.linalg.eigvalsh(c @ c.conj().T))


def _run_restart(u: BipartiteUnitary, cfg: OptimizationConfig, index: int) -> OptimizeResult:
    rng = default_rng([cfg.seed, index])
    n = 2 * (u.d_a + u.d_b)
    x0 = rng.standard_normal(n)
    simplex = np.vstack([x0, x0 + cfg.step * np.eye(n)])
    return minimize(
        lambda x: -_output_entropy(x, u),
        x0,
        method="Nelder-Mead",
        options={
            "maxiter": cfg.max_iters,
            "maxfev": 4 * cfg.max_iters,
            "xatol": np.sqrt(cfg.tol),
            "fatol": cfg.tol,
            "adaptive": cfg.adaptive,
            "initial_simplex": simplex,
        },
    )


def _reduce(
    u: BipartiteUnitary, cfg: OptimizationConfig, results: List[OptimizeResult]
) -> EntanglingPowerResult:
    values = [float(-r.fun) for r in results]
    best = int(np.argmax(values))
    a, b = _split_params(results[best].x, u.d_a, u.d_b)
    value = entanglement_entropy(u.matrix @ kron(a, b), u.d_a, u.d_b)
    converged = bool(results[best].success)
    if not converged:
        logger.info("best restart %d stopped without converging: %s", best, results[best].message)
    return EntanglingPowerResult(
        value=value,
        argmax_a=a,
        argmax_b=b,
        restart_values=values,
        converged=converged,
        seed=cfg.seed,
    )


def entangling_power(
    u: BipartiteUnitary, cfg: Union[OptimizationConfig, None] = None
) -> EntanglingPowerResult:
    """Largest output entanglement over product pure inputs.

    Multistart Nelder-Mead over unnormalized real parametrizations of both
    local states; restart i is seeded from (cfg.seed, i), so adding restarts
    never lowers the result. Ties go to the lowest restart index.
    """
    cfg = cfg or OptimizationConfig()
    results = [_run_restart(u, cfg, i) for i in range(cfg.restarts)]
    return _reduce(u, cfg, results)


def sampled_entangling_power(
    u: BipartiteUnitary, n_samples: int = 1_000_000, seed: int = 0, batch: int = 100_000
) -> float:
    """Brute-force maximum of the output entanglement over random product inputs."""
    rng = default_rng(seed)
    d_a, d_b = u.d_a, u.d_b
    best = 0.0
    remaining = n_samples
    while remaining > 0:
        n = min(batch, remaining)
        remaining -= n
        a = rng.standard_normal((n, d_a)) + 1j * rng.standard_normal((n, d_a))
        b = rng.standard_normal((n, d_b)) + 1j * rng.standard_normal((n, d_b))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)

        inputs = np.einsum("ni,nj->nij", a, b).reshape(n, d_a * d_b)
        c = (inputs @ u.matrix.T).reshape(n, d_a, d_b)
        spectra = np.linalg.eigvalsh(c @ c.conj().transpose(0, 2, 1))
        spectra = np.where(spectra > SPECTRUM_FLOOR, spectra, 1.0)
        best = max(best, float(np.max(-np.sum(spectra * np.log2(spectra), axis=1))))
    return best


class EntanglingPower(ToolkitConfig):
    def compute(
        self, u: BipartiteUnitary, cfg: Union[OptimizationConfig, None] = None
    ) -> EntanglingPowerResult:
        return entangling_power(u, cfg or OptimizationConfig(seed=self.seed))

    def entropy(self, state: np.ndarray, d_a: int, d_b: int) -> float:
        return entanglement_entropy(state, d_a, d_b)


class AsyncEntanglingPower(ToolkitConfig):
    async def compute(
        self, u: BipartiteUnitary, cfg: Union[OptimizationConfig, None] = None
    ) -> EntanglingPowerResult:
        cfg = cfg or OptimizationConfig(seed=self.seed)
        results = await asyncio.gather(
            *[asyncio.to_thread(_run_restart, u, cfg, i) for i in range(cfg.restarts)]
        )
        return _reduce(u, cfg, list(results))
