from typing import Union

from ._types import ToleranceInfo


class ToleranceConfig:
    """Numerical thresholds shared by every stage of the analysis.

    Defaults leave two orders of magnitude between consecutive stages so that
    noise from an earlier stage cannot flip a later verdict.
    """

    tol_unitary: float
    tol_rank: float
    tol_commute: float
    tol_reconstruct: float

    def __init__(
        self,
        tol_unitary: float = 1e-10,
        tol_rank: float = 1e-7,
        tol_commute: float = 1e-8,
        tol_reconstruct: float = 1e-8,
    ):
        for name, value in (
            ("tol_unitary", tol_unitary),
            ("tol_rank", tol_rank),
            ("tol_commute", tol_commute),
            ("tol_reconstruct", tol_reconstruct),
        ):
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value!r}")

        self.tol_unitary = tol_unitary
        self.tol_rank = tol_rank
        self.tol_commute = tol_commute
        self.tol_reconstruct = tol_reconstruct

    def replace(self, **changes: float) -> "ToleranceConfig":
        values = dict(self.to_dict())
        values.update(changes)
        return ToleranceConfig(**values)

    def to_dict(self) -> ToleranceInfo:
        return ToleranceInfo(
            tol_unitary=self.tol_unitary,
            tol_rank=self.tol_rank,
            tol_commute=self.tol_commute,
            tol_reconstruct=self.tol_reconstruct,
        )

    def __repr__(self) -> str:
        return (
            f"ToleranceConfig(tol_unitary={self.tol_unitary}, tol_rank={self.tol_rank}, "
            f"tol_commute={self.tol_commute}, tol_reconstruct={self.tol_reconstruct})"
        )


class ToolkitConfig:
    tolerances: ToleranceConfig
    seed: int

    def __init__(
        self,
        tolerances: Union[ToleranceConfig, None] = None,
        seed: Union[int, None] = None,
    ):
        self.tolerances = tolerances or ToleranceConfig()
        self.seed = 0 if seed is None else seed
