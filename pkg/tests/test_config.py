import json
import math

import numpy as np
import pytest

from smoothfix.artifacts import atomic_write, csv_text, json_text
from smoothfix.config import ConfigError, LawSampler, build_model, build_stable, parse_config
from smoothfix.verify import empirical_cf, tensor_grid


def test_builders():
    cfg = parse_config('command = "verify"\nseed = 1\n[model]\nkind = "kac"\nbeta = 2.0\n'
                       '[stable]\nalpha = 1.0\nregime = "symmetric"\n'
                       '[stable.sigma]\natoms = [[3.0]]\nweights = [1.0]\nsymmetric = true\n'
                       'normalize = true\n')
    model = build_model(cfg)
    assert model.kind == "kac" and model.params["beta"] == 2.0
    st = build_stable(cfg, model.d)
    np.testing.assert_allclose(st.sigma.atoms[:, 0], [1.0, -1.0])
    bad = dict(cfg, model={"kind": "finite-mixture", "components": [{"prob": 0.2, "T": [1.0]}]})
    with pytest.raises(ConfigError, match="model"):
        build_model(bad)


def test_nested_key_lines():
    text = 'command = "audit"\n[model]\nkind = "finite-mixture"\n\n[[model.components]]\n' \
           'prob = 0.5\nT = [0.5]\nweight = 1\n'
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == 8


@pytest.mark.parametrize("law", [
    LawSampler("point", 0.7), LawSampler("normal", 0.5, 2.0), LawSampler("uniform", -1.0, 0.5),
    LawSampler("stable", 0.0, 1.5, alpha=1.3),
])
def test_named_laws_sample_their_cf(law, rng):
    grid = tensor_grid(1, 11, -2, 2)
    est = empirical_cf(law(rng, 40_000), grid)
    err = np.abs(est.mean - law.cf(grid.points))
    assert np.all(err <= 4 * np.abs(est.stderr) + 0.01)


def test_json_and_csv_texts(tmp_path):
    text = json_text({"b": np.float64(math.inf), "a": np.arange(2), "c": np.bool_(True)})
    assert json.loads(text) == {"a": [0, 1], "b": "inf", "c": True}
    assert text.index('"a"') < text.index('"b"')
    assert csv_text(["x", "flag"], [[0.1, True]]) == "x,flag\n0.10000000000000001,1\n"
    path = atomic_write(str(tmp_path / "sub" / "f.txt"), "hello")
    assert open(path).read() == "hello"
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]
