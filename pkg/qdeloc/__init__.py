from typing import Callable, Union

from ._config import ToleranceConfig
from .analysis import Analysis, AsyncAnalysis
from .entangling import AsyncEntanglingPower, EntanglingPower, OptimizationConfig
from .exceptions import QDelocError
from .gates import build_gate
from .linalg import BipartiteUnitary
from .locc import AsyncLocc, Locc, LoccProtocol, Measurement, ProtocolNode


class QDeloc:
    tolerances: ToleranceConfig
    seed: int
    analysis: Analysis
    locc: Locc
    entangling_power: Callable
    entanglement_entropy: Callable
    gate: Callable

    def __init__(
        self,
        tolerances: Union[ToleranceConfig, None] = None,
        seed: Union[int, None] = None,
    ) -> None:
        if seed is not None and seed < 0:
            raise ValueError("The seed option must be a non-negative integer")

        self.tolerances = tolerances or ToleranceConfig()
        self.seed = 0 if seed is None else seed

        self.analysis = Analysis(tolerances=self.tolerances, seed=self.seed)

        self.locc = Locc(tolerances=self.tolerances, seed=self.seed)

        power = EntanglingPower(tolerances=self.tolerances, seed=self.seed)
        self.entangling_power = power.compute
        self.entanglement_entropy = power.entropy

        self.gate = build_gate


class AsyncQDeloc:
    tolerances: ToleranceConfig
    seed: int
    analysis: AsyncAnalysis
    locc: AsyncLocc
    entangling_power: Callable
    gate: Callable

    def __init__(
        self,
        tolerances: Union[ToleranceConfig, None] = None,
        seed: Union[int, None] = None,
    ) -> None:
        if seed is not None and seed < 0:
            raise ValueError("The seed option must be a non-negative integer")

        self.tolerances = tolerances or ToleranceConfig()
        self.seed = 0 if seed is None else seed

        self.analysis = AsyncAnalysis(tolerances=self.tolerances, seed=self.seed)

        self.locc = AsyncLocc(tolerances=self.tolerances, seed=self.seed)

        self.entangling_power = AsyncEntanglingPower(
            tolerances=self.tolerances, seed=self.seed
        ).compute

        self.gate = build_gate


__all__ = [
    "QDeloc",
    "AsyncQDeloc",
    "QDelocError",
    "ToleranceConfig",
    "OptimizationConfig",
    "BipartiteUnitary",
    "LoccProtocol",
    "Measurement",
    "ProtocolNode",
]
