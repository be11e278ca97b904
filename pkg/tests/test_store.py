import numpy as np
import pytest

from rater_infer import sampler, store
from rater_infer.errors import BadParameter, IoError

from _helpers import small_config, two_way_data


@pytest.fixture(scope="module")
def draws():
    return sampler.run_chain(two_way_data(I=12, J=5), small_config(R=3, seed=3))


class TestTraces:
    def test_round_trip_is_exact(self, tmp_path, draws):
        store.write_chain_traces(draws, tmp_path, 1)
        back = store.read_chain_traces(tmp_path, 1)
        for fam in ("theta", "tau", "inv_sigma2", "counts1", "counts2"):
            np.testing.assert_array_equal(getattr(back, fam), getattr(draws, fam))
        for k, v in draws.scalars.items():
            np.testing.assert_array_equal(back.scalars[k], v)
        for k, v in draws.atoms.items():
            np.testing.assert_array_equal(back.atoms[k], v)

    def test_extras_round_trip(self, tmp_path, draws):
        d = draws.copy()
        d.extras["delta"] = np.arange(2.0 * d.n_draws).reshape(d.n_draws, 2)
        store.write_chain_traces(d, tmp_path, 2)
        np.testing.assert_array_equal(store.read_chain_traces(tmp_path, 2).extras["delta"], d.extras["delta"])

    def test_missing(self, tmp_path):
        with pytest.raises(IoError):
            store.read_chain_traces(tmp_path, 1)


class TestPool:
    def test_stacks(self, draws):
        p = store.pool_draws([draws, draws])
        assert p.n_draws == 2 * draws.n_draws
        np.testing.assert_array_equal(p.scalars["icc_A"][draws.n_draws:], draws.scalars["icc_A"])

    def test_single_is_identity(self, draws):
        assert store.pool_draws([draws]) is draws

    def test_empty(self):
        with pytest.raises(BadParameter):
            store.pool_draws([])


class TestJson:
    def test_sorted_and_numpy_safe(self, tmp_path):
        obj = {"b": np.float64(1.5), "a": np.arange(3), "c": (np.int64(2),)}
        store.write_json(tmp_path / "x.json", obj)
        assert store.read_json(tmp_path / "x.json") == {"a": [0, 1, 2], "b": 1.5, "c": [2]}
        assert store.dumps(obj).index('"a"') < store.dumps(obj).index('"b"')

    def test_invalid(self, tmp_path):
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(IoError):
            store.read_json(tmp_path / "bad.json")

    def test_float_precision(self, tmp_path):
        x = np.array([0.1 + 0.2, np.pi, 1e-300])
        store.write_matrix_csv(tmp_path / "m.csv", ["x"], [x])
        np.testing.assert_array_equal(store.read_matrix_csv(tmp_path / "m.csv")["x"], x)
