import numpy as np
import pytest

from hankel_arma.arma import ArmaModel, StateSpaceModel, random_stable, simulate, to_state_space
from hankel_arma.hankel import build_hankel
from hankel_arma.io import (dumps, model_from_dict, read_json, read_matrix, read_model, read_trajectory,
                            write_hankel, write_json, write_matrix, write_model, write_trajectory)


def test_trajectory_round_trip_is_exact(tmp_path):
    tr = simulate(ArmaModel([0.5], [0.3]), 200, seed=1)
    write_trajectory(tr, tmp_path / "t.csv")
    back = read_trajectory(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.x, tr.x)
    np.testing.assert_array_equal(back.e, tr.e)


def test_trajectory_bad_index_rejected(tmp_path):
    (tmp_path / "t.csv").write_text("index,x,e\n0,1.0,1.0\n2,1.0,1.0\n")
    with pytest.raises(ValueError, match="index"):
        read_trajectory(tmp_path / "t.csv")


def test_models_round_trip(tmp_path):
    m = ArmaModel([0.5, -0.2], [0.1], sigma_eps2=3.0)
    write_model(m, tmp_path / "m.json")
    back = read_model(tmp_path / "m.json")
    assert back.a == m.a and back.b == m.b and back.sigma_eps2 == 3.0
    ss = to_state_space(random_stable(2, 2, seed=1))
    write_model(ss, tmp_path / "s.json")
    back = read_model(tmp_path / "s.json")
    assert isinstance(back, StateSpaceModel)
    np.testing.assert_array_equal(back.A, ss.A)
    with pytest.raises(ValueError):
        model_from_dict({"x": 1})


def test_matrix_round_trip(tmp_path):
    M = np.random.default_rng(0).normal(size=(4, 7))
    write_matrix(M, tmp_path / "m.csv")
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.csv"), M)


def test_hankel_directory(tmp_path):
    hs = build_hankel(simulate(ArmaModel([0.5], []), 30, seed=2), 4)
    man = write_hankel(hs, tmp_path / "h")
    assert man["n_cols"] == hs.n_cols
    np.testing.assert_array_equal(read_matrix(tmp_path / "h" / "X_future.csv"), hs.X_future)
    assert read_json(tmp_path / "h" / "manifest.json") == man


def test_json_is_canonical(tmp_path):
    obj = {"b": np.float64(1.5), "a": np.arange(3)}
    assert dumps(obj) == '{\n  "a": [\n    0,\n    1,\n    2\n  ],\n  "b": 1.5\n}\n'
    write_json(obj, tmp_path / "o.json")
    assert read_json(tmp_path / "o.json") == {"a": [0, 1, 2], "b": 1.5}
    with pytest.raises(TypeError):
        dumps({"x": object()})
