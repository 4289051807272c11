from typing import Any, Dict, List, Optional

import numpy as np
from typing_extensions import TypedDict

from .exceptions import ValidationError


class EncodedMatrix(TypedDict):
    re: List[List[float]]
    im: List[List[float]]


class EncodedVector(TypedDict):
    re: List[float]
    im: List[float]


def drop_none(params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Remove keys whose value is None.

    Args:
        params (Optional[Dict[str, Any]]): A dictionary of optional fields

    Returns:
        Dict[str, Any]: The dictionary without the unset fields
    """
    if params is None:
        return {}
    return {k: v for k, v in params.items() if v is not None}


def encode_matrix(m: np.ndarray) -> EncodedMatrix:
    m = np.asarray(m, dtype=complex)
    return EncodedMatrix(re=m.real.tolist(), im=m.imag.tolist())


def encode_vector(v: np.ndarray) -> EncodedVector:
    v = np.asarray(v, dtype=complex).ravel()
    return EncodedVector(re=v.real.tolist(), im=v.imag.tolist())


def decode_matrix(obj: Any, name: str = "matrix") -> np.ndarray:
    """
    Build a complex matrix from its {re, im} encoding.

    Args:
        obj (Any): A mapping with row-major `re` and `im` arrays of equal shape
        name (str): Field name used in error messages

    Returns:
        np.ndarray: The complex matrix

    Raises:
        ValidationError: If the encoding is missing, ragged or not finite
    """
    if not isinstance(obj, dict) or "re" not in obj or "im" not in obj:
        raise ValidationError(f"{name}: expected an object with 're' and 'im' arrays")
    try:
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name}: entries must be real numbers in rectangular arrays") from e

    if re.ndim != 2 or re.shape != im.shape:
        raise ValidationError(
            f"{name}: 're' and 'im' must be matrices of the same shape",
            err={"re_shape": list(re.shape), "im_shape": list(im.shape)},
        )
    # component-wise so signed zeros survive a load/dump cycle
    m = np.empty(re.shape, dtype=complex)
    m.real = re
    m.imag = im
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name}: all entries must be finite")
    return m
