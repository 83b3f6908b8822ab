import json

import jsonschema
import pytest

from lindtree.coeffalg import QNum
from lindtree.model import (ModelError, derive_force_table, embed_real_system, model_from_dict,
                            model_to_dict, validate_force_symmetries)

from conftest import CORPUS, MODELS, ROOT, model


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_matches_schema_and_round_trips(name):
    schema = json.loads((ROOT / "schemas" / "model.schema.json").read_text())
    obj = json.loads((MODELS / f"{name}.json").read_text())
    jsonschema.validate(obj, schema)
    m = model(name)
    again = model_from_dict(model_to_dict(m))
    assert model_to_dict(again) == model_to_dict(m)


@pytest.mark.parametrize("name", ["ham1", "ham2"])
def test_hamiltonian_force_tables_are_symmetric(name):
    ft = derive_force_table(model(name))
    r = validate_force_symmetries(ft)
    assert r["violations"] == [] and r["checked"] > 0


def test_hamiltonian_forces_by_hand():
    # H = z^2 w + z w^2 gives f+ = dH/dw = z^2 + 2 z w, f- = dH/dz = 2 z w + w^2
    ft = derive_force_table(model("ham1"))
    assert ft.get(1, 1, (2,), (0,)) == 1
    assert ft.get(1, 1, (1,), (1,)) == 2
    assert ft.get(-1, 1, (0,), (2,)) == 1
    assert ft.get(-1, 1, (1,), (1,)) == 2


def test_embedding_of_real_system():
    # x^2 with x = z + w splits as (z^2 + 2 z w + w^2) / (2 omega)
    ft = embed_real_system(model("sysA"))
    assert ft.coupling == "embedded"
    assert ft.get(1, 1, (1,), (1,)) == QNum(1)
    assert ft.get(-1, 1, (2,), (0,)) == QNum(1) / 2


def test_broken_symmetry_is_reported():
    ft = derive_force_table(model("ham1"))
    ft.table[1][(1, (2,), (0,))] = QNum(3)
    names = {v["relation"] for v in validate_force_symmetries(ft)["violations"]}
    assert "conjugation" in names


@pytest.mark.parametrize("obj", [
    [],
    {"kind": "real"},
    {"kind": "real", "d": 1, "omega": ["1", "2"]},
    {"kind": "real", "d": 1, "omega": ["1"], "terms": [{"j": 1, "p": 2, "s": [2], "coeff": "1"}]},
    {"kind": "real", "d": 1, "omega": ["1"], "terms": [{"j": 1, "p": 1, "s": [2], "coeff": "i"}]},
    {"kind": "hamiltonian", "d": 1, "omega": ["1"],
     "terms": [{"p": 0, "s_plus": [2], "s_minus": [1], "coeff": "1"}]},
    {"kind": "other", "d": 1, "omega": ["1"]},
])
def test_invalid_models_raise(obj):
    with pytest.raises(ModelError):
        model_from_dict(obj)
