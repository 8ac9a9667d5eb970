import numpy as np
import pytest

from causalkit.data_io import ColumnRole, DataError, Dataset, load_csv, validate, write_csv

from tables import DARWIN_CSV


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoad:
    def test_small_file(self, tmp_path):
        p = _write(tmp_path, "Z,Y\n1,2.5\n0,1\n1,3\n0,0\n")
        ds = load_csv(p, {"treatment": "Z", "outcome": "Y"})
        assert ds.rows == 4
        np.testing.assert_array_equal(ds.get(ColumnRole.TREATMENT), [1, 0, 1, 0])

    def test_darwin(self):
        ds = load_csv(DARWIN_CSV)
        assert ds.rows == 15
        d = ds.column("diff")
        np.testing.assert_allclose(d, ds.column("cross") - ds.column("self"), atol=1e-12)

    def test_missing_declared_column(self, tmp_path):
        p = _write(tmp_path, "Z,Y\n1,2\n")
        with pytest.raises(DataError, match="age"):
            load_csv(p, {"covariate": ["age"]})

    def test_unparseable_cell_reports_location(self, tmp_path):
        p = _write(tmp_path, "Z,Y\n1,2\n0,abc\n")
        with pytest.raises(DataError, match="row 3, column 'Y'"):
            load_csv(p)

    def test_duplicate_header(self, tmp_path):
        with pytest.raises(DataError, match="duplicate"):
            load_csv(_write(tmp_path, "Z,Z\n1,2\n"))

    def test_missing_cells_flagged_not_imputed(self, tmp_path):
        ds = load_csv(_write(tmp_path, "Z,Y\n1,NA\n0,\n1,3\n"), {"treatment": "Z", "outcome": "Y"})
        assert ds.missing["Y"].tolist() == [True, True, False]
        with pytest.raises(DataError, match="imputation"):
            ds.require_complete()
        filled = ds.impute_mean("Y")
        assert filled.column("Y").tolist() == [3.0, 3.0, 3.0]

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        cols = {"z": rng.integers(0, 2, 20).astype(float), "y": rng.normal(size=20)}
        miss = {"z": np.zeros(20, bool), "y": rng.uniform(size=20) < 0.2}
        cols["y"][miss["y"]] = np.nan
        ds = Dataset(cols, {"z": ColumnRole.TREATMENT}, miss)
        path = tmp_path / "rt.csv"
        write_csv(ds, path)
        back = load_csv(path, {"treatment": "z"})
        assert back == ds


class TestValidate:
    def test_non_binary_treatment(self, tmp_path):
        ds = load_csv(_write(tmp_path, "Z,Y\n1,1\n2,0\n"), {"treatment": "Z"})
        f = validate(ds)
        assert [x.code for x in f] == ["non-binary treatment"]
        assert f[0].rows == (1,)

    def test_singleton_pair(self, tmp_path):
        ds = load_csv(_write(tmp_path, "p,Z\n1,1\n1,0\n2,1\n"), {"pair_id": "p", "treatment": "Z"})
        assert [x.code for x in validate(ds)] == ["singleton pair group"]

    def test_valid_and_pure(self, tmp_path):
        ds = load_csv(_write(tmp_path, "p,Z\n1,1\n1,0\n"), {"pair_id": "p", "treatment": "Z"})
        assert validate(ds) == []
        bad = load_csv(_write(tmp_path, "Z\n3\nNA\n", "b.csv"), {"treatment": "Z"})
        assert validate(bad) == validate(bad)
