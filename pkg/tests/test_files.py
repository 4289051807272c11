import json
import logging

import numpy as np
import pytest

from qdeloc.analysis import classify, detect_controlled
from qdeloc.entangling import OptimizationConfig, entangling_power
from qdeloc.exceptions import MalformedProtocolError, QDelocError, ValidationError
from qdeloc.files import (
    classification_to_dict,
    dump_protocol,
    dump_unitary,
    entangling_to_dict,
    load_protocol,
    load_unitary,
    parse_protocol,
    parse_unitary,
    protocol_to_dict,
    relocalization_to_dict,
    render,
    render_json,
)
from qdeloc.gates import build_gate
from qdeloc.helpers import decode_matrix
from qdeloc.locc import (
    LoccProtocol,
    accumulated_operators,
    random_protocol,
    synthesize_relocalization_protocol,
    verify_one_piece_relocalization,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

UNITARY_CASES = [
    {"name": "cnot", "gate": "cnot", "params": {}},
    {"name": "heisenberg", "gate": "heisenberg", "params": {"alpha": 0.3}},
    {"name": "controlled_random", "gate": "controlled_random", "params": {"d_a": 3, "d_b": 2, "n_blocks": 2, "seed": 6}},
]


class TestUnitaryFile:
    """Test the unitary file schema"""

    @pytest.mark.parametrize("test_case", UNITARY_CASES, ids=[tc["name"] for tc in UNITARY_CASES])
    def test_write_then_read(self, test_case, tmp_path):
        try:
            gate = build_gate(test_case["gate"], test_case["params"])
            path = tmp_path / "u.json"
            text = dump_unitary(gate, str(path))
            assert path.read_text(encoding="utf8") == text

            loaded = load_unitary(str(path))
            assert (loaded.d_a, loaded.d_b) == (gate.d_a, gate.d_b)
            assert np.array_equal(loaded.matrix, gate.matrix)
            assert dump_unitary(loaded) == text
        except QDelocError as e:
            pytest.fail(f"Unexpected QDelocError in {test_case['name']}: {e}")

    def test_schema_keys(self):
        obj = json.loads(dump_unitary(build_gate("cnot")))
        assert sorted(obj) == ["d_a", "d_b", "im", "re"]
        assert obj["re"][2][3] == 1.0

    def test_non_unitary_file(self):
        obj = {"d_a": 2, "d_b": 2, "re": (2 * np.eye(4)).tolist(), "im": np.zeros((4, 4)).tolist()}
        with pytest.raises(ValidationError) as info:
            parse_unitary(obj)
        assert info.value.error["deviation"] == pytest.approx(3.0)

    @pytest.mark.parametrize(
        "obj",
        [
            [],
            {"d_a": 2, "re": [[1]], "im": [[0]]},
            {"d_a": 2, "d_b": 2, "re": [[1, 0], [0, 1]]},
            {"d_a": 2, "d_b": 2, "re": [[1, 0], [0]], "im": [[0, 0], [0, 0]]},
            {"d_a": 1, "d_b": 2, "re": [["a", 0], [0, 1]], "im": [[0, 0], [0, 0]]},
        ],
        ids=["not_object", "missing_dim", "missing_im", "ragged", "not_numbers"],
    )
    def test_malformed_unitary(self, obj):
        with pytest.raises(ValidationError):
            parse_unitary(obj)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_unitary(str(tmp_path / "absent.json"))

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(ValidationError) as info:
            dump_unitary(build_gate("cnot"), str(tmp_path / "missing" / "u.json"))
        assert "cannot write" in info.value.message

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf8")
        with pytest.raises(ValidationError):
            load_unitary(str(path))


class TestProtocolFile:
    """Test the recursive protocol schema"""

    def test_synthesized_round_trip(self, tmp_path):
        p = synthesize_relocalization_protocol(detect_controlled(build_gate("cnot"), "A"))
        path = tmp_path / "p.json"
        text = dump_protocol(p, str(path))

        loaded = load_protocol(str(path))
        assert loaded.protects == "B"
        assert dump_protocol(loaded) == text
        report = verify_one_piece_relocalization(build_gate("cnot"), loaded, "B", 10)
        assert report["verdict"]

    @pytest.mark.parametrize("seed", range(5))
    def test_random_round_trip(self, seed):
        p = random_protocol(2, 3, 2, seed=seed)
        loaded = parse_protocol(json.loads(dump_protocol(p)))
        before = accumulated_operators(p, 2, 3)
        after = accumulated_operators(loaded, 2, 3)
        assert [o for o, _, _ in before] == [o for o, _, _ in after]
        for (_, m0, k0), (_, m1, k1) in zip(before, after):
            assert np.array_equal(m0, m1)
            assert np.array_equal(k0, k1)

    def test_signed_zeros_survive_reload(self):
        """-0.0 entries are re-emitted unchanged"""
        op = {"re": [[1.0, -0.0], [0.0, 0.0]], "im": [[-0.0, 0.0], [-0.0, -0.0]]}
        rest = {"re": [[0.0, 0.0], [-0.0, 1.0]], "im": [[0.0, -0.0], [0.0, -0.0]]}
        obj = {"protects": "B", "root": {"party": "A", "operators": [op, rest], "children": {"0": {}, "1": {}}}}
        text = render_json(obj)
        assert dump_protocol(parse_protocol(json.loads(text))) == text

        m = decode_matrix(op)
        assert np.signbit(m.imag[0, 0]) and np.signbit(m.real[0, 1])

    def test_empty_protocol(self):
        obj = protocol_to_dict(LoccProtocol.empty())
        assert obj == {"root": {}}
        assert parse_protocol(obj).depth == 0

    def _node(self, operators, **extra):
        node = {
            "party": "A",
            "operators": [{"re": op.tolist(), "im": np.zeros_like(op).tolist()} for op in operators],
        }
        node.update(extra)
        return node

    MALFORMED_CASES = [
        {"name": "no_root", "obj": {}},
        {"name": "bad_protects", "obj": {"protects": "C", "root": {}}},
        {"name": "incomplete", "obj": "incomplete"},
        {"name": "bad_label", "obj": "bad_label"},
        {"name": "corrections_inside", "obj": "corrections_inside"},
        {"name": "bad_matrix", "obj": {"root": {"party": "A", "operators": [{"re": [[1]]}]}}},
        {"name": "children_without_party", "obj": {"root": {"children": {"0": {}}}}},
    ]

    @pytest.mark.parametrize("test_case", MALFORMED_CASES, ids=[tc["name"] for tc in MALFORMED_CASES])
    def test_malformed_protocol(self, test_case):
        zero, one = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        obj = test_case["obj"]
        if obj == "incomplete":
            obj = {"root": self._node([zero])}
        elif obj == "bad_label":
            obj = {"root": self._node([zero, one], children={"x": {}})}
        elif obj == "corrections_inside":
            obj = {"root": self._node([zero, one], corrections={"b": {"re": np.eye(2).tolist(), "im": np.zeros((2, 2)).tolist()}})}
        with pytest.raises(MalformedProtocolError):
            parse_protocol(obj)


class TestReports:
    """Test structured report rendering"""

    def _reports(self):
        u = build_gate("cnot")
        p = synthesize_relocalization_protocol(detect_controlled(u, "A"))
        return {
            "classification": classification_to_dict(classify(u)),
            "relocalization": relocalization_to_dict(verify_one_piece_relocalization(u, p, "B", 10)),
            "entangling_power": entangling_to_dict(entangling_power(u, OptimizationConfig(restarts=2, max_iters=300))),
        }

    @pytest.mark.parametrize("kind", ["classification", "relocalization", "entangling_power"])
    def test_json_round_trip_is_byte_identical(self, kind):
        text = render(kind, self._reports()[kind], "json")
        assert render_json(json.loads(text)) == text
        assert text.endswith("\n")

    def test_classification_text(self):
        text = render("classification", self._reports()["classification"])
        lines = text.splitlines()
        assert lines[0] == "relocalizable: true, OSR 2"
        assert lines[2].startswith("controlled from A: yes (2 blocks")
        assert lines[3].startswith("controlled from B: yes (2 blocks")

    def test_heisenberg_text(self):
        report = classification_to_dict(classify(build_gate("heisenberg", {"alpha": 0.3})))
        text = render("classification", report)
        assert text.splitlines()[0] == "relocalizable: false, OSR 4"
        assert "controlled from A: no" in text

    def test_relocalization_text(self):
        text = render("relocalization", self._reports()["relocalization"])
        assert text.startswith("verdict: true (side B)")

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            render("nope", {}, "text")
