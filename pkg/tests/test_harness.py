import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from ldpfreq.harness import (
    CSV_COLUMNS,
    DatasetSpec,
    ExperimentConfig,
    MechanismSpec,
    config_from_dict,
    config_from_file,
    ingest_transactions,
    load_matrix_file,
    run_experiment,
    sample_dataset,
    uniform_distribution,
    zipf_distribution,
)
from ldpfreq.model import EstimationMode, PrivacyBudget
from ldpfreq.theory import l2_of_k, l2_star


def test_zipf_distribution_values():
    np.testing.assert_allclose(zipf_distribution(3), np.array([36, 9, 4]) / 49.0, atol=1e-15)
    np.testing.assert_allclose(zipf_distribution(1), [1.0], atol=1e-15)
    z = zipf_distribution(100, exponent=1.5)
    assert z.sum() == pytest.approx(1.0, abs=1e-12)
    assert (np.diff(z) < 0).all()


def test_uniform_distribution():
    np.testing.assert_allclose(uniform_distribution(4), 0.25, atol=1e-15)


def test_sample_dataset_frequency_is_deterministic_composition():
    rng = np.random.default_rng(0)
    values, truth = sample_dataset([1.0, 0.0], 5, rng, EstimationMode.FREQUENCY)
    np.testing.assert_array_equal(values, [0, 0, 0, 0, 0])
    np.testing.assert_allclose(truth, [1.0, 0.0])

    values, truth = sample_dataset([0.5, 0.5], 3, rng, EstimationMode.FREQUENCY)
    np.testing.assert_array_equal(np.bincount(values, minlength=2), [2, 1])
    np.testing.assert_allclose(truth, [2 / 3, 1 / 3])


def test_sample_dataset_distribution_draws_iid():
    rng = np.random.default_rng(1)
    dist = np.array([0.7, 0.2, 0.1])
    values, truth = sample_dataset(dist, 100000, rng, EstimationMode.DISTRIBUTION)
    np.testing.assert_allclose(truth, dist)
    freq = np.bincount(values, minlength=3) / values.size
    assert np.abs(freq - dist).max() < 0.006


def test_ingest_transactions(tmp_path):
    path = tmp_path / "tx.txt"
    path.write_text("5 7\n5\n")
    values, d = ingest_transactions(path)
    np.testing.assert_array_equal(values, [0, 1, 0])
    assert d == 2

    values, d = ingest_transactions(path, max_objects=2)
    np.testing.assert_array_equal(values, [0, 1])
    assert d == 2

    blank = tmp_path / "blank.txt"
    blank.write_text("3 3\n\n  \n9\n")
    values, d = ingest_transactions(blank)
    np.testing.assert_array_equal(values, [0, 0, 1])
    assert d == 2


def test_ingest_transactions_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2\nfoo\n")
    with pytest.raises(ValueError, match="line 2"):
        ingest_transactions(bad)
    neg = tmp_path / "neg.txt"
    neg.write_text("1 -4\n")
    with pytest.raises(ValueError, match="line 1"):
        ingest_transactions(neg)
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(ValueError, match="no objects"):
        ingest_transactions(empty)


def test_load_matrix_file_comma_and_space(tmp_path):
    p = np.array([[0.75, 0.25], [0.25, 0.75]])
    comma = tmp_path / "m.csv"
    comma.write_text("0.75,0.25\n0.25,0.75\n")
    np.testing.assert_allclose(load_matrix_file(comma), p)
    space = tmp_path / "m.txt"
    space.write_text("0.75 0.25\n0.25 0.75\n")
    np.testing.assert_allclose(load_matrix_file(space), p)
    bad = tmp_path / "bad.csv"
    bad.write_text("0.7,0.25\n0.25,0.75\n")
    with pytest.raises(ValueError):
        load_matrix_file(bad)


def test_config_from_dict_full_roundtrip(tmp_path):
    payload = {
        "mechanisms": ["ss", {"name": "ocms"}],
        "d": 10,
        "epsilons": [0.5, 1.0],
        "n": 1000,
        "runs": 5,
        "seed": 3,
        "mode": "distribution",
        "dataset": {"name": "zipf", "exponent": 1.5},
        "output": "out.csv",
        "figures": False,
    }
    cfg = config_from_dict(payload)
    assert [m.name for m in cfg.mechanisms] == ["ss", "ocms"]
    assert cfg.mode is EstimationMode.DISTRIBUTION
    assert cfg.dataset.exponent == 1.5
    assert cfg.figures is False

    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(payload))
    assert config_from_file(path) == cfg


def test_config_rejects_unknown_keys_and_names():
    base = {"mechanisms": ["ss"], "d": 4, "epsilons": [1.0], "n": 10, "runs": 1, "seed": 0}
    with pytest.raises(ValueError, match="unknown config keys"):
        config_from_dict({**base, "bogus": 1})
    with pytest.raises(ValueError):
        config_from_dict({**base, "mechanisms": ["rappor"]})
    with pytest.raises(ValueError):
        config_from_dict({**base, "mode": "exact"})
    with pytest.raises(ValueError):
        config_from_dict({**base, "epsilons": []})


def test_mechanism_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        MechanismSpec(name="matrix-file")  # needs a path
    with pytest.raises(ValueError):
        MechanismSpec(name="unknown")
    with pytest.raises(ValueError):
        DatasetSpec(kind="file")  # needs a path


def _tiny_config(tmp_path, **overrides) -> ExperimentConfig:
    defaults = dict(
        mechanisms=(MechanismSpec(name="ss"), MechanismSpec(name="ocms")),
        d=6,
        epsilons=(0.5, 1.0),
        n=400,
        runs=3,
        seed=11,
        output=str(tmp_path / "res.csv"),
        figures=False,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


def test_run_experiment_writes_sorted_rows_and_files(tmp_path):
    report = run_experiment(_tiny_config(tmp_path))
    assert len(report.rows) == 4
    keys = [(r.mechanism, r.epsilon) for r in report.rows]
    assert keys == sorted(keys)
    assert not report.figure_paths

    with open(report.csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 5
    payload = json.loads(Path(report.json_path).read_text())
    assert payload["config"]["d"] == 6
    assert len(payload["rows"]) == 4
    for row in payload["rows"]:
        assert row["status"] == "ok"
        assert row["l2_emp"] > 0.0


def test_run_experiment_reruns_byte_identical(tmp_path):
    cfg = _tiny_config(tmp_path)
    first = Path(run_experiment(cfg).csv_path).read_bytes()
    second = Path(run_experiment(cfg).csv_path).read_bytes()
    assert first == second


def test_run_experiment_renders_figures(tmp_path):
    cfg = _tiny_config(tmp_path, figures=True, runs=2, n=100)
    report = run_experiment(cfg)
    assert len(report.figure_paths) == 2
    for path in report.figure_paths:
        data = Path(path).read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 2000


def test_run_experiment_theory_columns(tmp_path):
    report = run_experiment(_tiny_config(tmp_path, epsilons=(4.0,), d=3, runs=1))
    ss_row = next(r for r in report.rows if r.mechanism == "ss")
    budget = PrivacyBudget(4.0)
    # e^4 + 1 > 2*3 forces the small-d branch: deployed k = 1
    assert ss_row.l2_theory_int == pytest.approx(l2_of_k(3, budget, 400, 1), rel=1e-12)
    assert ss_row.l2_theory_real == pytest.approx(
        l2_star(3, budget, 400, integer_k=False), rel=1e-12
    )
    assert ss_row.l2_theory_int >= ss_row.l2_theory_real


def test_run_experiment_failed_rows_keep_theory(tmp_path):
    matrix = tmp_path / "rr.csv"
    matrix.write_text("0.75,0.25\n0.25,0.75\n")
    cfg = ExperimentConfig(
        mechanisms=(MechanismSpec(name="matrix-file", matrix_path=str(matrix)),),
        d=2,
        epsilons=(0.9,),  # matrix ratio 3 > e^0.9
        n=50,
        runs=2,
        seed=1,
        output=str(tmp_path / "res.csv"),
        figures=False,
    )
    (row,) = run_experiment(cfg).rows
    assert row.status.startswith("failed: matrix ratio")
    assert row.l1_emp is None and row.l2_emp is None
    assert row.l2_theory_int > 0.0


def test_run_experiment_wss_cap(tmp_path):
    cfg = _tiny_config(
        tmp_path, mechanisms=(MechanismSpec(name="wss"),), d=40, epsilons=(1.0,)
    )
    (row,) = run_experiment(cfg).rows
    assert "construction cap" in row.status
    assert row.l2_emp is None and row.l2_theory_real > 0.0


def test_run_experiment_file_dataset_overrides_geometry(tmp_path):
    data = tmp_path / "tx.txt"
    data.write_text(" ".join(str(v % 5) for v in range(200)))
    cfg = ExperimentConfig(
        mechanisms=(MechanismSpec(name="ss"),),
        d=0,  # ignored for file datasets
        epsilons=(1.0,),
        n=10,  # likewise
        runs=2,
        seed=2,
        dataset=DatasetSpec(kind="file", path=str(data)),
        output=str(tmp_path / "res.csv"),
        figures=False,
    )
    (row,) = run_experiment(cfg).rows
    assert row.d == 5 and row.n == 200
    assert row.status == "ok"


def test_run_experiment_scheme_file_must_match(tmp_path):
    from ldpfreq.mechanisms import wss_construct
    from ldpfreq.model import PrivacyBudget, save_scheme

    mech = wss_construct(5, PrivacyBudget(1.0), rng=np.random.default_rng(0))
    scheme_path = tmp_path / "wss.json"
    save_scheme(mech.scheme, mech.params.k, scheme_path)

    cfg = _tiny_config(
        tmp_path,
        mechanisms=(MechanismSpec(name="wss", scheme_path=str(scheme_path)),),
        d=5,
        epsilons=(1.0, 2.0),
        n=200,
    )
    rows = run_experiment(cfg).rows
    by_eps = {r.epsilon: r for r in rows}
    assert by_eps[1.0].status == "ok"  # loaded from file
    assert by_eps[2.0].status == "ok"  # constructed fresh (budget mismatch)
