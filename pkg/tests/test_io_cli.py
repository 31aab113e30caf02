import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from roma.cli import main, monotone_curve
from roma.errors import ConfigError, DataError
from roma.io import (
    EFFECTS_SCHEMA,
    FIT_SCHEMA,
    REPORT_SCHEMA,
    load_config,
    load_records,
    parse_config,
    read_csv,
    read_dataset,
    read_jsonl,
    write_csv,
    write_jsonl,
)

K = 12


def write_data(path, rng, n=30, ragged_row=None):
    x = rng.normal(size=n)
    m = np.sort(x[:, None] + rng.normal(size=(n, K)), axis=1)
    y = np.sort(2 * x[:, None] + 0.5 * m.mean(axis=1, keepdims=True) + rng.normal(size=(n, K)), axis=1)
    header = ["x"] + [f"m{j}" for j in range(K)] + [f"y{j}" for j in range(K)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(n):
            row = [repr(float(x[i]))] + [repr(float(v)) for v in m[i]] + [repr(float(v)) for v in y[i]]
            if i + 1 == ragged_row:
                row[3] = ""
            w.writerow(row)


def config(**extra):
    raw = {
        "schema": "roma.config/1",
        "data": "data.csv",
        "columns": {
            "exposure": {"type": "euclidean", "columns": ["x"]},
            "mediator": {"type": "distribution_samples", "columns": [f"m{j}" for j in range(K)]},
            "outcome": {"type": "distribution_samples", "columns": [f"y{j}" for j in range(K)]},
        },
        "contrast": [1.0, 0.0],
    }
    raw.update(extra)
    return raw


@pytest.fixture
def workdir(tmp_path, rng):
    write_data(tmp_path / "data.csv", rng)
    (tmp_path / "cfg.json").write_text(json.dumps(config()))
    return tmp_path


class TestConfig:
    def test_defaults(self, workdir):
        cfg = load_config(workdir / "cfg.json")
        assert cfg.q == 0.05 and cfg.strategy == "split" and cfg.inference_shrink == 0.1
        assert cfg.kernels["mediator"].metric.value == "wasserstein"
        assert cfg.data == str(workdir / "data.csv")

    @pytest.mark.parametrize("bad", [
        {"schema": "roma.config/2"},
        {"q": 1.5},
        {"contrast": [1.0]},
        {"strategy": "greedy"},
        {"eps": 0.1},
        {"surprise": True},
        {"l": 0},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            parse_config(config(**bad))

    def test_bad_column_type(self):
        raw = config()
        raw["columns"]["mediator"]["type"] = "graph"
        with pytest.raises(ConfigError):
            parse_config(raw)


class TestDataset:
    def test_read(self, workdir):
        d = read_dataset(workdir / "data.csv", load_config(workdir / "cfg.json"))
        assert len(d.exposure) == len(d.mediator) == len(d.outcome) == 30

    def test_ragged_row(self, tmp_path, rng):
        write_data(tmp_path / "data.csv", rng, ragged_row=7)
        cfg = parse_config(config(), tmp_path)
        with pytest.raises(DataError, match="ragged mediator distribution: 11 of 12 values present") as ei:
            read_dataset(tmp_path / "data.csv", cfg)
        assert "row 7" in str(ei.value) and "m2" in str(ei.value)

    def test_non_numeric(self, workdir):
        text = (workdir / "data.csv").read_text().splitlines()
        cells = text[3].split(",")
        cells[0] = "abc"
        text[3] = ",".join(cells)
        (workdir / "data.csv").write_text("\n".join(text) + "\n")
        with pytest.raises(DataError, match="not a number"):
            read_dataset(workdir / "data.csv", load_config(workdir / "cfg.json"))

    def test_missing_column(self, workdir):
        raw = config()
        raw["columns"]["exposure"]["columns"] = ["nope"]
        with pytest.raises(DataError):
            read_dataset(workdir / "data.csv", parse_config(raw, workdir))

    def test_quantiles_must_be_monotone(self, tmp_path):
        with open(tmp_path / "q.csv", "w") as fh:
            fh.write("x,q0,q1,y\n0,0,1,1\n1,2,1,2\n2,0,3,0\n")
        raw = config(columns={
            "exposure": {"type": "euclidean", "columns": ["x"]},
            "mediator": {"type": "distribution_quantiles", "columns": ["q0", "q1"]},
            "outcome": {"type": "euclidean", "columns": ["y"]},
        })
        with pytest.raises(DataError, match="nondecreasing"):
            read_dataset(tmp_path / "q.csv", parse_config(raw))

    def test_composition_and_spd(self, tmp_path, rng):
        n = 12
        comp = rng.dirichlet(np.ones(3), size=n)
        mats = [np.eye(2) + 0.3 * np.outer(v, v) for v in rng.normal(size=(n, 2))]
        with open(tmp_path / "o.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["c0", "c1", "c2", "s00", "s01", "s10", "s11", "y"])
            for i in range(n):
                w.writerow([repr(float(v)) for v in comp[i]] + [repr(float(v)) for v in mats[i].ravel()] + [i])
        raw = config(columns={
            "exposure": {"type": "composition", "columns": ["c0", "c1", "c2"]},
            "mediator": {"type": "spd", "columns": ["s00", "s01", "s10", "s11"]},
            "outcome": {"type": "euclidean", "columns": ["y"]},
        })
        d = read_dataset(tmp_path / "o.csv", parse_config(raw))
        assert len(d.exposure) == n and len(d.mediator) == n


class TestRecords:
    def test_jsonl_round_trip(self, tmp_path):
        recs = [{"schema": FIT_SCHEMA, "v": np.array([0.1, 1 / 3]), "k": np.float64(2.5)}]
        write_jsonl(tmp_path / "a.jsonl", recs)
        back = load_records(tmp_path / "a.jsonl", FIT_SCHEMA)
        assert back[0]["v"] == [0.1, 1 / 3] and back[0]["k"] == 2.5

    def test_schema_mismatch(self, tmp_path):
        write_jsonl(tmp_path / "a.jsonl", [{"schema": FIT_SCHEMA}])
        with pytest.raises(DataError):
            load_records(tmp_path / "a.jsonl", EFFECTS_SCHEMA)

    def test_csv_round_trip(self, tmp_path):
        write_csv(tmp_path / "a.csv", ["a", "b"], [[1 / 3, None], ["x", 2.0]])
        rows = read_csv(tmp_path / "a.csv")
        assert rows[0]["a"] == 1 / 3 and rows[0]["b"] is None and rows[1]["a"] == "x"

    def test_monotone_curve(self):
        out = monotone_curve([0.0, 2.0, 1.0, 3.0])
        assert np.allclose(out, [0.0, 1.5, 1.5, 3.0])
        already = np.array([0.0, 0.5, 2.0])
        assert np.array_equal(monotone_curve(already), already)


class TestCommands:
    def test_fit(self, workdir):
        out = workdir / "fit"
        assert main(["fit", "--config", str(workdir / "cfg.json"), "--out", str(out)]) == 0
        recs = load_records(f"{out}.jsonl", FIT_SCHEMA)
        assert recs[0]["record"] == "selection" and recs[0]["eps"] > 0
        assert read_csv(f"{out}.csv")

    def test_effects(self, workdir):
        out = workdir / "eff"
        assert main(["effects", "--config", str(workdir / "cfg.json"), "--out", str(out)]) == 0
        recs = load_records(f"{out}.jsonl", EFFECTS_SCHEMA)
        effects = {r["effect"]: r for r in recs if r["record"] == "effect"}
        assert set(effects) == {"NDE", "NIE", "TE"}
        assert np.allclose(np.add(effects["NDE"]["coords"], effects["NIE"]["coords"]), effects["TE"]["coords"])
        assert 0 <= effects["NIE"]["p_value"] <= 1
        for r in recs:
            if r["record"] == "counterfactual":
                assert np.all(np.diff(r["curve"]) >= -1e-12)
        rows = read_csv(f"{out}.csv")
        assert {r["effect"] for r in rows} == {"NDE", "NIE", "TE"}
        assert all(r["lower"] <= r["upper"] for r in rows if r["effect"] != "TE")

    def test_byte_identical_reruns(self, workdir):
        args = ["effects", "--config", str(workdir / "cfg.json"), "--out"]
        main(args + [str(workdir / "a")])
        main(args + [str(workdir / "b")])
        for ext in (".jsonl", ".csv"):
            assert (workdir / f"a{ext}").read_bytes() == (workdir / f"b{ext}").read_bytes()

    def test_exit_config(self, workdir):
        (workdir / "bad.json").write_text(json.dumps({"schema": "other"}))
        assert main(["fit", "--config", str(workdir / "bad.json"), "--out", str(workdir / "o")]) == 2

    def test_exit_data(self, tmp_path, rng):
        write_data(tmp_path / "data.csv", rng, ragged_row=3)
        (tmp_path / "cfg.json").write_text(json.dumps(config()))
        assert main(["fit", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "o")]) == 3

    def test_exit_numerical(self, workdir):
        (workdir / "cfg.json").write_text(json.dumps(config(eps=1e-300, eps_tilde=1e-300)))
        assert main(["fit", "--config", str(workdir / "cfg.json"), "--out", str(workdir / "o")]) == 4

    def test_simulate(self, tmp_path):
        out = tmp_path / "sim"
        rc = main(["simulate", "--scenario", "II.1", "--n", "20", "--m", "20", "--reps", "2",
                   "--oracle-size", "2000", "--out", str(out)])
        assert rc == 0
        recs = load_records(f"{out}.jsonl", REPORT_SCHEMA)
        assert recs[0]["record"] == "report" and sum(r["record"] == "replicate" for r in recs) == 2
        assert len(read_csv(f"{out}.csv")) == 3

    def test_console_script(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "roma.cli", "--version"], capture_output=True, text=True)
        assert r.returncode == 0 and r.stdout.startswith("roma ")
