import json

import numpy as np
import pytest

import martquant as mq
from martquant import io


def test_measure_roundtrip(tmp_path):
    for m in (mq.mu6(), mq.DiscreteMeasure([[0, 1], [2, 3]], [0.3, 0.7]), mq.power(0.5, 0.3, 0.9)):
        d = json.loads(json.dumps(io.measure_to_dict(m)))
        back = io.measure_from_dict(d)
        if isinstance(m, mq.DiscreteMeasure):
            assert np.array_equal(back.points, m.points) and np.allclose(back.weights, m.weights)
        else:
            assert back == m
    path = tmp_path / "m.json"
    io.dump(io.measure_to_dict(mq.mu6()), path)
    assert np.allclose(io.load_measure(str(path)).weights, mq.mu6().weights)


def test_load_measure_builtins_and_errors(tmp_path):
    assert io.load_measure("uniform01") == mq.uniform01()
    assert io.load_measure("builtin:tri2x") == mq.tri2x()
    with pytest.raises(ValueError):
        io.load_measure("builtin:cauchy")
    with pytest.raises(ValueError):
        io.load_measure(str(tmp_path / "missing.json"))
    with pytest.raises(ValueError):
        io.measure_from_dict({"weights": [1.0]})


def test_coupling_and_quantizer_roundtrip():
    pi = mq.Coupling([0.5], [0.0, 1.0], [0, 0], [0, 1], [0.5, 0.5])
    back = io.coupling_from_dict(json.loads(json.dumps(io.coupling_to_dict(pi))))
    assert np.array_equal(back.dense(), pi.dense())
    q = mq.Quantizer([0.1, 0.7])
    assert np.array_equal(io.quantizer_from_dict(io.quantizer_to_dict(q)).points, q.points)


def test_cost_loading(tmp_path):
    c = io.load_cost("pos_power", 2.0)
    assert c == mq.CostSpec("pos_power", 2.0)
    path = tmp_path / "c.json"
    io.dump({"kind": "matrix", "values": [[0.0, 1.0]]}, path)
    m = io.load_cost(str(path))
    assert m.kind == "matrix"
    assert io.cost_to_dict(m)["values"] == [[0.0, 1.0]]
    with pytest.raises(ValueError):
        io.load_cost("matrix")


def test_dump_returns_text():
    assert json.loads(io.dump({"a": 1})) == {"a": 1}
