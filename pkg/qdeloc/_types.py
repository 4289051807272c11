from typing_extensions import Literal, TypedDict

Side = Literal["A", "B"]


class ToleranceInfo(TypedDict):
    tol_unitary: float
    tol_rank: float
    tol_commute: float
    tol_reconstruct: float


class BaseReport(TypedDict):
    seed: int
    tolerances: ToleranceInfo


def other_side(side: Side) -> Side:
    return "B" if side == "A" else "A"
