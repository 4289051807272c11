"""File formats and report rendering.

UnitaryFile (JSON object)::

    {"d_a": 2, "d_b": 2, "re": [[...], ...], "im": [[...], ...]}

`re` and `im` are row-major (d_a*d_b) x (d_a*d_b) real matrices; the
composite index of |a, b> is a * d_b + b.

ProtocolFile (JSON object)::

    {"protects": "B", "root": <node>}

with the recursive node schema::

    {"party": "A" | "B",
     "operators": [{"re": ..., "im": ...}, ...],
     "children": {"0": <node>, "1": <node>, ...},
     "corrections": {"a": {"re": ..., "im": ...}, "b": {...}}}

A node without `party` is a leaf; only leaves may carry `corrections`.
Omitted children mean the corresponding outcomes end the protocol.

Structured output is JSON with sorted keys and two-space indent. Floats use
Python's shortest round-trip representation, so parsing a report and
emitting it again reproduces it byte for byte.
"""

import json
from typing import Any, Callable, Dict, List, Optional

from typing_extensions import NotRequired, TypedDict

from .analysis import Classification, ControlledUnitaryForm
from .entangling import EntanglingPowerResult
from .exceptions import MalformedProtocolError, QDelocError, ValidationError
from .helpers import EncodedMatrix, decode_matrix, drop_none, encode_matrix, encode_vector
from .linalg import BipartiteUnitary
from .locc import LoccProtocol, Measurement, ProtocolNode, RelocalizationReport


class UnitaryFile(TypedDict):
    d_a: int
    d_b: int
    re: List[List[float]]
    im: List[List[float]]


class CorrectionsFile(TypedDict):
    a: NotRequired[EncodedMatrix]
    b: NotRequired[EncodedMatrix]


class NodeFile(TypedDict):
    party: NotRequired[str]
    operators: NotRequired[List[EncodedMatrix]]
    children: NotRequired[Dict[str, "NodeFile"]]
    corrections: NotRequired[CorrectionsFile]


class ProtocolFile(TypedDict):
    protects: NotRequired[str]
    root: NodeFile


def render_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf8") as f:
            return json.load(f)
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path} is not valid JSON: {e.msg} (line {e.lineno})") from e


def write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf8") as f:
            f.write(text)
    except OSError as e:
        raise ValidationError(f"cannot write {path}: {e.strerror}") from e


def unitary_to_dict(u: BipartiteUnitary) -> UnitaryFile:
    enc = encode_matrix(u.matrix)
    return UnitaryFile(d_a=u.d_a, d_b=u.d_b, re=enc["re"], im=enc["im"])


def parse_unitary(obj: Any, tol_unitary: float = 1e-10) -> BipartiteUnitary:
    if not isinstance(obj, dict):
        raise ValidationError("a unitary file must hold a JSON object")
    d_a, d_b = obj.get("d_a"), obj.get("d_b")
    if not isinstance(d_a, int) or not isinstance(d_b, int):
        raise ValidationError("'d_a' and 'd_b' must be integers")
    return BipartiteUnitary(decode_matrix(obj, "unitary"), d_a, d_b, tol_unitary=tol_unitary)


def load_unitary(path: str, tol_unitary: float = 1e-10) -> BipartiteUnitary:
    return parse_unitary(_read_json(path), tol_unitary)


def dump_unitary(u: BipartiteUnitary, path: Optional[str] = None) -> str:
    text = render_json(unitary_to_dict(u))
    if path is not None:
        write_text(path, text)
    return text


def _node_to_dict(node: ProtocolNode) -> NodeFile:
    if node.is_leaf:
        corrections = drop_none(
            {
                "a": None if node.a_correction is None else encode_matrix(node.a_correction),
                "b": None if node.b_correction is None else encode_matrix(node.b_correction),
            }
        )
        return NodeFile(corrections=corrections) if corrections else NodeFile()

    out = NodeFile(
        party=node.measurement.party,
        operators=[encode_matrix(op) for op in node.measurement.operators],
    )
    if node.children:
        out["children"] = {str(r): _node_to_dict(c) for r, c in sorted(node.children.items())}
    return out


def protocol_to_dict(p: LoccProtocol) -> ProtocolFile:
    out = ProtocolFile(root=_node_to_dict(p.root))
    if p.protects is not None:
        out["protects"] = p.protects
    return out


def _parse_node(obj: Any, where: str) -> ProtocolNode:
    if not isinstance(obj, dict):
        raise MalformedProtocolError(f"{where}: a node must be a JSON object")

    corrections = obj.get("corrections") or {}
    if not isinstance(corrections, dict):
        raise MalformedProtocolError(f"{where}: 'corrections' must be an object")
    a = corrections.get("a")
    b = corrections.get("b")
    a = None if a is None else decode_matrix(a, f"{where}.corrections.a")
    b = None if b is None else decode_matrix(b, f"{where}.corrections.b")

    if "party" not in obj:
        if obj.get("children"):
            raise MalformedProtocolError(f"{where}: children need a measuring party")
        return ProtocolNode.leaf(a_correction=a, b_correction=b)

    if a is not None or b is not None:
        raise MalformedProtocolError(f"{where}: corrections belong on leaves")

    operators = obj.get("operators")
    if not isinstance(operators, list) or not operators:
        raise MalformedProtocolError(f"{where}: 'operators' must be a non-empty list")
    measurement = Measurement(
        obj["party"],
        [decode_matrix(op, f"{where}.operators[{r}]") for r, op in enumerate(operators)],
    )

    children_obj = obj.get("children") or {}
    if not isinstance(children_obj, dict):
        raise MalformedProtocolError(f"{where}: 'children' must map outcome labels to nodes")
    children = {}
    for key, child in children_obj.items():
        try:
            label = int(key)
        except ValueError as e:
            raise MalformedProtocolError(f"{where}: outcome label {key!r} is not an integer") from e
        children[label] = _parse_node(child, f"{where}.children[{key}]")
    return ProtocolNode(measurement, children)


def parse_protocol(obj: Any) -> LoccProtocol:
    if not isinstance(obj, dict) or "root" not in obj:
        raise MalformedProtocolError("a protocol file must be an object with a 'root' node")
    protects = obj.get("protects")
    if protects not in (None, "A", "B"):
        raise MalformedProtocolError("'protects' must be 'A' or 'B'")
    try:
        return LoccProtocol(_parse_node(obj["root"], "root"), protects=protects)
    except MalformedProtocolError:
        raise
    except QDelocError as e:
        raise MalformedProtocolError(e.message, err=e.error) from e


def load_protocol(path: str) -> LoccProtocol:
    return parse_protocol(_read_json(path))


def dump_protocol(p: LoccProtocol, path: Optional[str] = None) -> str:
    text = render_json(protocol_to_dict(p))
    if path is not None:
        write_text(path, text)
    return text


def form_to_dict(form: Optional[ControlledUnitaryForm]) -> Optional[Dict[str, Any]]:
    if form is None:
        return None
    return drop_none(
        {
            "control_side": form["control_side"],
            "u_local": encode_matrix(form["u_local"]),
            "blocks": [
                {"projector": encode_matrix(b["projector"]), "unitary": encode_matrix(b["unitary"])}
                for b in form["blocks"]
            ],
            "residual": form.get("residual"),
        }
    )


def classification_to_dict(c: Classification) -> Dict[str, Any]:
    return {
        "seed": c["seed"],
        "tolerances": dict(c["tolerances"]),
        "osr": c["osr"],
        "schmidt_coefficients": [float(x) for x in c["schmidt_coefficients"]],
        "local": c["local"],
        "controlled_from_a": form_to_dict(c["controlled_from_a"]),
        "controlled_from_b": form_to_dict(c["controlled_from_b"]),
        "residual_a": c["residual_a"],
        "residual_b": c["residual_b"],
        "relocalizable": c["relocalizable"],
    }


def relocalization_to_dict(r: RelocalizationReport) -> Dict[str, Any]:
    out: Dict[str, Any] = dict(r)
    out["tolerances"] = dict(r["tolerances"])
    out["branch_fidelities"] = [dict(b) for b in r["branch_fidelities"]]
    return out


def entangling_to_dict(r: EntanglingPowerResult) -> Dict[str, Any]:
    return {
        "value": r["value"],
        "argmax_a": encode_vector(r["argmax_a"]),
        "argmax_b": encode_vector(r["argmax_b"]),
        "restart_values": list(r["restart_values"]),
        "converged": r["converged"],
        "seed": r["seed"],
    }


def _flag(value: bool) -> str:
    return "true" if value else "false"


def _verdict_line(side: str, form: Optional[Dict[str, Any]]) -> str:
    if form is None:
        return f"controlled from {side}: no"
    return (
        f"controlled from {side}: yes ({len(form['blocks'])} blocks, "
        f"residual {form['residual']:.3e})"
    )


def render_classification_text(c: Dict[str, Any]) -> str:
    lines = [
        f"relocalizable: {_flag(c['relocalizable'])}, OSR {c['osr']}",
        "schmidt coefficients: " + ", ".join(f"{x:.12g}" for x in c["schmidt_coefficients"]),
        _verdict_line("A", c["controlled_from_a"]),
        _verdict_line("B", c["controlled_from_b"]),
    ]
    if c["local"]:
        lines.append("local: true (product of local unitaries)")
    return "\n".join(lines) + "\n"


def render_relocalization_text(r: Dict[str, Any]) -> str:
    lines = [
        f"verdict: {_flag(r['verdict'])} (side {r['side']})",
        f"min fidelity: {r['min_fidelity']:.15f}",
        f"channel residual: {r['channel_residual']:.3e}",
        f"inputs checked: {r['inputs_checked']} ({r['samples']} random, seed {r['seed']})",
    ]
    for b in r["branch_fidelities"]:
        lines.append(
            f"  branch {b['outcomes']}: min fidelity {b['min_fidelity']:.15f}, "
            f"max probability {b['max_probability']:.6f}"
        )
    return "\n".join(lines) + "\n"


def render_entangling_text(r: Dict[str, Any]) -> str:
    return (
        f"entangling power: {r['value']:.10f} ebits\n"
        f"restarts: {len(r['restart_values'])}, converged: {_flag(r['converged'])}, seed {r['seed']}\n"
    )


def render(kind: str, report: Dict[str, Any], fmt: str = "text") -> str:
    """Render an already structured report as text or JSON."""
    if fmt == "json":
        return render_json(report)
    renderers = {
        "classification": render_classification_text,
        "relocalization": render_relocalization_text,
        "entangling_power": render_entangling_text,
    }
    renderer: Optional[Callable[[Dict[str, Any]], str]] = renderers.get(kind)
    if renderer is None:
        raise ValidationError(f"unknown report kind {kind!r}")
    return renderer(report)
