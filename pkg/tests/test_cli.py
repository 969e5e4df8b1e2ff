import csv
import json
import logging

import pytest

from telab.cli import (EXIT_INPUT, EXIT_OK, EXIT_SANDWICH, CompareRow, ConfigError, dumps17,
                       load_config, main, sandwich_violations)

BASE = {"potential": {"kind": "aviles_giga"}, "segment": {"a_minus": [0, -1], "a_plus": [0, 1]}}


def write(tmp_path, tasks, name="cfg.json", **extra):
    p = tmp_path / name
    p.write_text(json.dumps({**BASE, "tasks": tasks, **extra}))
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def strip_timestamp(text):
    d = json.loads(text)
    d.pop("timestamp")
    return d


def test_pipeline_values(tmp_path):
    cfg = write(tmp_path, [{"type": "segment"}, {"type": "pde-check"},
                           {"type": "mass", "variants": [{"variant": "segment"}]}])
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = {r["method"]: r for r in read_csv(out / "compare.csv")}
    assert rows["segment-1D"]["kind"] == "exact-1D"
    assert rows["pde-lower"]["kind"] == "lower"
    for m in ("segment-1D", "pde-lower", "2xT0"):
        assert float(rows[m]["value"]) == pytest.approx(4 / 3, abs=1e-6)
    res = json.loads((out / "results.json").read_text())
    assert res["sandwich"]["ok"] and res["config"]["tasks"][0] == {"type": "segment"}


def test_empty_task_list_is_an_input_error(tmp_path, caplog):
    cfg = write(tmp_path, [])
    with caplog.at_level(logging.ERROR):
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "$.tasks" in caplog.text


def test_schema_error_reports_field_path(tmp_path):
    cfg = write(tmp_path, [{"type": "lp", "grid": {"nx": "many"}}])
    with pytest.raises(ConfigError, match=r"\$\.tasks\[0\]\.grid\.nx"):
        load_config(cfg)
    assert main(["validate", str(cfg)]) == EXIT_INPUT


def test_grid_snap_is_checked_up_front(tmp_path):
    cfg = write(tmp_path, [{"type": "lp", "grid": {"nx": 6, "ny": 6}}])
    with pytest.raises(ConfigError, match="not a grid node"):
        load_config(cfg)


def test_validate_accepts_good_config(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, [{"type": "segment"}]))]) == EXIT_OK
    assert "config OK" in capsys.readouterr().out


def test_bogus_lower_bound_triggers_sandwich_exit(tmp_path):
    cfg = write(tmp_path, [{"type": "segment"},
                           {"type": "compare", "rows": [{"method": "bogus", "kind": "lower", "value": 5.0}]}])
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == EXIT_SANDWICH
    res = json.loads((out / "results.json").read_text())
    assert not res["sandwich"]["ok"]


def test_sandwich_rules():
    rows = [CompareRow("a", "lower", 1.0, 0.0), CompareRow("b", "upper", 1.0 - 1e-9, 0.0),
            CompareRow("c", "estimate", 0.1, 0.0), CompareRow("d", "exact-1D", 2.0, 0.0)]
    assert sandwich_violations(rows, 1e-6) == []
    rows.append(CompareRow("e", "exact-1D", 0.5, 0.0))
    assert [v[:2] for v in sandwich_violations(rows, 1e-6)] == [("a", "e")]
    with pytest.raises(ValueError):
        CompareRow("x", "sideways", 0.0, 0.0)


def test_seventeen_digit_floats():
    text = dumps17({"x": 0.1, "v": [1 / 3, 2.0], "inf": float("inf")})
    d = json.loads(text)
    assert "0.10000000000000001" in text and "0.33333333333333331" in text
    assert d["x"] == 0.1 and d["inf"] == "inf"


def test_plot_files(tmp_path, caplog):
    tasks = [{"type": "lp", "grid": {"nx": 8, "ny": 8}, "p_list": [4]},
             {"type": "curve", "n_vertices": 4, "opts": {"n_starts": 1}}]
    out = tmp_path / "out"
    assert main(["run", str(write(tmp_path, tasks)), "--out", str(out)]) == EXIT_OK
    conc = read_csv(out / "concentration.csv")
    curve = read_csv(out / "curve.csv")
    assert len(conc) == 64 and list(conc[0]) == ["x", "y", "weight"]
    assert len(curve) == 4 and list(curve[0]) == ["t", "x", "y"]
    assert float(curve[0]["t"]) == 0 and float(curve[-1]["t"]) == 1
    out2 = tmp_path / "out2"
    with caplog.at_level(logging.WARNING):
        assert main(["run", str(write(tmp_path, [{"type": "segment"}], "b.json")), "--out", str(out2)]) == EXIT_OK
    assert not (out2 / "concentration.csv").exists() and not (out2 / "curve.csv").exists()
    assert "plot files not written" in caplog.text


def test_task_error_is_an_input_error(tmp_path):
    cfg = write(tmp_path, [{"type": "mass", "variants": [{"variant": "nope"}]}])
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_reruns_and_thread_counts_are_reproducible(tmp_path):
    tasks = [{"type": "segment"}, {"type": "lp", "grid": {"nx": 16, "ny": 16}, "p_list": [4, 8]},
             {"type": "curve", "n_vertices": 4, "opts": {"n_starts": 2}},
             {"type": "functionals", "matrices": [[[0, 1], [0, 0]]], "oracle_samples": 2000}]
    cfg = write(tmp_path, tasks, seed=3)
    texts = []
    for name, workers in (("a", 1), ("b", 1), ("c", 4)):
        assert main(["run", str(cfg), "--out", str(tmp_path / name), "--workers", str(workers)]) == EXIT_OK
        texts.append((tmp_path / name / "results.json").read_text())
    a, b, c = (strip_timestamp(t) for t in texts)
    assert a == b
    assert a == c
