import copy
import json

import numpy as np
import pytest

from algebroid_lab.expr import to_string
from algebroid_lab.modelfile import (SchemaError, bundled_names, load_bundled, load_model,
                                     model_from_dict)

BASE = {
    "name": "mini",
    "dimM": 2,
    "rank": 2,
    "coords": ["x", "y"],
    "frame": ["a", "b"],
    "anchor": [["1", "0"], ["0", "1"]],
    "metric": [["1", "0"], ["1 + x^2"]],
    "box": [[-1, 1], [-1, 1]],
}


def doc(**changes):
    d = copy.deepcopy(BASE)
    for k, v in changes.items():
        if v is None:
            d.pop(k)
        else:
            d[k] = v
    return d


def test_minimal_model():
    L = model_from_dict(doc())
    assert L.name == "mini" and L.model.rank == 2 and L.sections == {} and L.sigma is None
    assert np.allclose(L.metric.g_fn([0.5, 0.0]), [[1, 0], [0, 1.25]])


def test_bracket_completion_and_names():
    L = model_from_dict(doc(bracket=[{"a": "a", "b": 1, "c": "b", "expr": "x"}]))
    B = L.model.bracket
    assert to_string(B[0, 1, 1]) == "x" and to_string(B[1, 0, 1]) == "-x"


@pytest.mark.parametrize("bracket", [
    [{"a": 0, "b": 0, "c": 1, "expr": "1"}],
    [{"a": 0, "b": 1, "c": 1, "expr": "1"}, {"a": 1, "b": 0, "c": 1, "expr": "-1"}],
    [{"a": 0, "b": 2, "c": 1, "expr": "1"}],
    [{"a": "zz", "b": 1, "c": 1, "expr": "1"}],
    [{"a": 0, "b": 1, "expr": "1"}],
    [{"a": 0, "b": 1, "c": 0, "expr": "q"}],
])
def test_bad_brackets(bracket):
    with pytest.raises(SchemaError):
        model_from_dict(doc(bracket=bracket))


@pytest.mark.parametrize("changes", [
    {"name": None},
    {"extra": 1},
    {"coords": ["x"]},
    {"coords": ["x", "x"]},
    {"frame": ["x", "b"]},
    {"anchor": [["1", "0"]]},
    {"anchor": [["1", "0"], ["0", "z"]]},
    {"anchor": [["1", "0"], ["0", "sin("]]},
    {"metric": [["1", "0"]]},
    {"box": [[1, -1], [-1, 1]]},
    {"rank": 0},
    {"sections": {"s": ["1"]}},
    {"oneform": ["x"]},
    {"sigma": {"k": 3}},
    {"sigma": {"k": 2, "boundary": {"start": [0, 0], "end": [1, 1]}}},
])
def test_schema_errors(changes):
    with pytest.raises(SchemaError):
        model_from_dict(doc(**changes))


def test_full_metric_accepted():
    L = model_from_dict(doc(metric=[["2", "x"], ["x", "3"]]))
    assert np.allclose(L.metric.g_fn([0.5, 0]), [[2, 0.5], [0.5, 3]])


def test_sections_oneform_sigma():
    L = model_from_dict(doc(sections={"rot": ["-y", "x"]}, oneform=["0", "x"],
                            sigma={"k": 1, "sizes": [11], "box": [[0, 1]],
                                   "boundary": {"start": [0, 0], "end": [1, 0]}}))
    assert L.sections["rot"].name == "rot"
    assert L.sigma.source.sizes == (11,)
    assert L.sigma.boundary["end"] == [1, 0]


def test_load_from_file_and_errors(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc()))
    assert load_model(p).name == "mini"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError, match="invalid JSON"):
        load_model(bad)
    with pytest.raises(SchemaError):
        load_model(tmp_path / "missing.json")


def test_bundled_corpus_and_alias():
    names = bundled_names()
    for n in ("flat_tm1", "flat_tm2", "sphere_chart", "so3_killing", "linebundle_X", "foliation_product"):
        assert n in names
        assert load_bundled(n).name == n
    assert load_model("so3").name == "so3_killing"


def test_schema_document_matches_loader():
    from pathlib import Path

    from algebroid_lab.modelfile import OPTIONAL, REQUIRED
    schema = json.loads((Path(__file__).parents[1] / "docs" / "model.schema.json").read_text())
    assert schema["required"] == list(REQUIRED)
    assert set(schema["properties"]) == set(REQUIRED) | set(OPTIONAL)
    for n in bundled_names():
        raw = load_bundled(n).raw
        assert set(schema["required"]) <= set(raw) <= set(schema["properties"])
