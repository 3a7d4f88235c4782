"""Benchmark harness and CLI: config validation, prepare, the grid runner,
table formats, determinism, and exit codes.
"""

import csv
import io
import json
import os
import re
import time

import numpy as np
import pytest

from tagforge.bench import (
    ConfigError,
    feature_path,
    load_config,
    prepare,
    run_bench,
    to_csv,
    to_latex,
    to_markdown,
)
from tagforge.cli import main
from tagforge.data import generate_synthetic
from tagforge.features import save_embedding_file
from tagforge.gradcheck import run_gradcheck


def _write_config(tmp_path, **overrides):
    ds = generate_synthetic(40, 2, p_in=0.9, p_out=0.05, dim=6, sep=4.0, seed=1)
    native = tmp_path / "native.emb"
    save_embedding_file(str(native), ds.features)
    blob = {
        "dataset": {"kind": "synthetic", "n": 40, "classes": 2, "p_in": 0.9,
                    "p_out": 0.05, "dim": 6, "sep": 4.0, "seed": 1},
        "encoders": [
            {"name": "tfidf8", "kind": "tfidf", "vocab_size": 8},
            {"name": "native", "kind": "file", "path": "native.emb"},
        ],
        "archs": ["gcn", "mlp"],
        "split": {"protocol": "high"},
        "train": {"epochs": 15, "patience": 15, "seeds": [0, 1]},
        "model": {"layers": 2, "hidden": 8, "heads": 2, "dropout": 0.2},
        "output": {"dir": "out", "format": "markdown"},
    }
    blob.update(overrides)
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(blob))
    return str(path)


# ---------------------------------------------------------------------------
# config


def test_config_roundtrip(tmp_path):
    cfg = load_config(_write_config(tmp_path))
    assert [e.name for e in cfg.encoders] == ["tfidf8", "native"]
    assert cfg.archs == ["gcn", "mlp"]
    assert cfg.seeds == (0, 1)
    assert cfg.out_dir == str(tmp_path / "out")


def test_config_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/bench.json")


def test_config_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(str(path))


@pytest.mark.parametrize(
    "overrides,message",
    [
        ({"archs": []}, "at least one"),
        ({"archs": ["gcn", "gcn"]}, "duplicate"),
        ({"archs": ["gat"]}, "unknown arch"),
        ({"encoders": []}, "at least one"),
        ({"split": {"protocol": "mid"}}, "protocol"),
        ({"dataset": {"kind": "synthetic"}}, "synthetic dataset needs"),
        ({"train": {"epochs": 0}}, "train block"),
        ({"output": {"format": "xml"}}, "format"),
        ({"workers": 0}, "workers"),
    ],
)
def test_config_rejects_bad_blocks(tmp_path, overrides, message):
    with pytest.raises(ConfigError, match=message):
        load_config(_write_config(tmp_path, **overrides))


def test_config_duplicate_encoder_names(tmp_path):
    enc = [{"name": "e", "kind": "tfidf", "vocab_size": 4},
           {"name": "e", "kind": "tfidf", "vocab_size": 8}]
    with pytest.raises(ConfigError, match="duplicate encoder"):
        load_config(_write_config(tmp_path, encoders=enc))


def test_config_missing_referenced_file(tmp_path):
    enc = [{"name": "f", "kind": "file", "path": "missing.emb"}]
    with pytest.raises(ConfigError, match="missing"):
        load_config(_write_config(tmp_path, encoders=enc))


# ---------------------------------------------------------------------------
# prepare


def test_prepare_tfidf_writes_emb1_with_node_rows(tmp_path):
    config = _write_config(
        tmp_path,
        dataset={"kind": "synthetic", "n": 5, "classes": 2, "p_in": 1.0, "p_out": 0.0,
                 "dim": 3, "sep": 1.0, "seed": 0},
        encoders=[{"name": "tfidf4", "kind": "tfidf", "vocab_size": 4}],
    )
    cfg = load_config(config)
    written = prepare(cfg)
    assert written == [feature_path(cfg, cfg.encoders[0])]
    from tagforge.features import load_embedding_file

    matrix = load_embedding_file(written[0])
    assert matrix.shape[0] == 5


def test_prepare_is_idempotent_unless_forced(tmp_path):
    cfg = load_config(_write_config(tmp_path))
    first = prepare(cfg)
    assert len(first) == 2
    stamps = {p: os.path.getmtime(p) for p in first}
    assert prepare(cfg) == []
    assert {p: os.path.getmtime(p) for p in first} == stamps
    time.sleep(0.01)
    assert sorted(prepare(cfg, force=True)) == sorted(first)


def test_prepare_requires_texts_for_tfidf(tmp_path):
    # planetoid dataset written without texts
    from conftest import write_planetoid

    write_planetoid(
        tmp_path / "ds", "toy",
        edges=[(0, 1), (1, 2), (2, 3)], labels=[0, 1, 0, 1],
    )
    config = _write_config(
        tmp_path,
        dataset={"kind": "planetoid", "dir": "ds", "name": "toy"},
        encoders=[{"name": "t", "kind": "tfidf", "vocab_size": 4}],
    )
    with pytest.raises(ConfigError, match="texts"):
        prepare(load_config(config))


# ---------------------------------------------------------------------------
# the grid


def _prepared_config(tmp_path, **overrides):
    cfg = load_config(_write_config(tmp_path, **overrides))
    prepare(cfg)
    return cfg


def test_bench_grid_completeness(tmp_path):
    cfg = _prepared_config(tmp_path, archs=["gcn", "mlp", "graph_transformer"])
    result = run_bench(cfg)
    assert result.ok
    assert set(result.cells) == {
        (e, a) for e in ["tfidf8", "native"] for a in ["gcn", "mlp", "graph_transformer"]
    }
    assert len(result.cells) == 6  # 2 encoders x 3 archs
    for cell in result.cells.values():
        assert 0.0 <= cell.mean <= 1.0
        assert cell.std >= 0.0
        assert len(cell.epochs) == 2


def test_bench_csv_is_deterministic(tmp_path):
    cfg = _prepared_config(tmp_path)
    first = to_csv(run_bench(cfg))
    second = to_csv(run_bench(cfg))
    assert first == second


def test_bench_workers_do_not_change_results(tmp_path):
    cfg = _prepared_config(tmp_path)
    serial = to_csv(run_bench(cfg))
    cfg.workers = 3
    assert to_csv(run_bench(cfg)) == serial


def test_split_seed_pins_one_split_while_default_redraws(tmp_path):
    from tagforge.bench import load_bench_dataset, make_split

    cfg = load_config(_write_config(tmp_path))
    ds = load_bench_dataset(cfg)
    a, b = make_split(cfg, ds, 0), make_split(cfg, ds, 1)
    assert not np.array_equal(a.train, b.train)  # per-run redraw by default
    cfg.split["seed"] = 42
    pinned_a, pinned_b = make_split(cfg, ds, 0), make_split(cfg, ds, 1)
    assert np.array_equal(pinned_a.train, pinned_b.train)
    cfg.split = {"protocol": "low", "per_class": 2, "n_val": 6, "n_test": 6}
    low = make_split(cfg, ds, 3)
    assert (low.train.size, low.val.size, low.test.size) == (4, 6, 6)


def test_bench_failed_cell_is_recorded_not_fatal(tmp_path):
    cfg = _prepared_config(tmp_path)
    # sabotage one feature file: wrong row count
    bad = feature_path(cfg, cfg.encoders[1])
    save_embedding_file(bad, np.zeros((3, 2), dtype=np.float32))
    result = run_bench(cfg)
    assert not result.ok
    assert result.cells[("tfidf8", "gcn")].ok
    failed = result.cells[("native", "gcn")]
    assert not failed.ok and "rows" in failed.error
    table = to_markdown(result)
    assert "failed" in table


def test_bench_unprepared_features_fail_cleanly(tmp_path):
    cfg = load_config(_write_config(tmp_path))
    result = run_bench(cfg)
    assert not result.ok
    assert all("prepare" in c.error for c in result.cells.values())


def test_markdown_cell_format_and_bold_row_best(tmp_path):
    cfg = _prepared_config(tmp_path)
    result = run_bench(cfg)
    table = to_markdown(result)
    assert re.search(r"\d+\.\d{2} ± \d+\.\d{2}", table)
    for encoder in result.encoders:
        row = next(line for line in table.splitlines() if line.startswith(f"| {encoder} "))
        assert row.count("**") == 2  # exactly one bold cell per row
        best = max(
            (result.cells[(encoder, a)] for a in result.archs), key=lambda c: c.mean
        )
        assert f"**{best.mean * 100:.2f} ± {best.std * 100:.2f}**" in row


def test_latex_table_shape(tmp_path):
    cfg = _prepared_config(tmp_path)
    table = to_latex(run_bench(cfg))
    assert table.startswith("\\begin{tabular}")
    assert "\\textbf{" in table
    assert "$\\pm$" in table
    assert table.rstrip().endswith("\\end{tabular}")


def test_csv_reparses_to_table_values(tmp_path):
    cfg = _prepared_config(tmp_path)
    result = run_bench(cfg)
    rows = list(csv.DictReader(io.StringIO(to_csv(result))))
    assert len(rows) == 4
    for row in rows:
        cell = result.cells[(row["encoder"], row["arch"])]
        assert float(row["mean_pct"]) == cell.mean * 100  # full-precision round trip
        formatted = f"{float(row['mean_pct']):.2f} ± {float(row['std_pct']):.2f}"
        assert formatted in to_markdown(result)
        assert row["status"] == "ok"
        assert row["seeds"] == "0;1"


# ---------------------------------------------------------------------------
# CLI


def test_cli_prepare_then_bench_exit_codes(tmp_path, capsys):
    config = _write_config(tmp_path)
    assert main(["prepare", "--config", config]) == 0
    out = capsys.readouterr().out
    assert "wrote" in out
    assert main(["bench", "--config", config]) == 0
    out = capsys.readouterr().out
    assert re.search(r"\d+\.\d{2} ± \d+\.\d{2}", out)
    assert os.path.exists(tmp_path / "out" / "bench.csv")
    assert os.path.exists(tmp_path / "out" / "bench.md")


def test_cli_bench_byte_identical_csv(tmp_path, capsys):
    config = _write_config(tmp_path)
    assert main(["prepare", "--config", config]) == 0
    assert main(["bench", "--config", config]) == 0
    first = (tmp_path / "out" / "bench.csv").read_bytes()
    assert main(["bench", "--config", config]) == 0
    second = (tmp_path / "out" / "bench.csv").read_bytes()
    capsys.readouterr()
    assert first == second


def test_cli_missing_config_is_config_error(tmp_path, capsys):
    assert main(["bench", "--config", str(tmp_path / "none.json")]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_train_prints_metrics_and_is_repeatable(tmp_path, capsys):
    config = _write_config(tmp_path)
    main(["prepare", "--config", config])
    capsys.readouterr()
    started = time.time()
    log_path = tmp_path / "run.tsv"
    code = main([
        "train", "--config", config, "--encoder", "native", "--arch", "gcn",
        "--seed", "7", "--out", str(log_path),
    ])
    elapsed = time.time() - started
    assert code == 0
    assert elapsed < 60.0
    first = capsys.readouterr().out
    assert "test_acc=" in first and "epochs_ran=" in first
    lines = log_path.read_text().strip().splitlines()
    assert all(len(line.split("\t")) == 3 for line in lines)
    main([
        "train", "--config", config, "--encoder", "native", "--arch", "gcn", "--seed", "7",
    ])
    second = capsys.readouterr().out
    assert [l for l in first.splitlines() if l.startswith(("best_val", "test_acc", "epochs"))] \
        == [l for l in second.splitlines() if l.startswith(("best_val", "test_acc", "epochs"))]


def test_cli_train_bad_feature_file_fails(tmp_path, capsys):
    config = _write_config(tmp_path)
    main(["prepare", "--config", config])
    cfg = load_config(config)
    path = feature_path(cfg, cfg.encoders[1])
    with open(path, "wb") as fh:
        fh.write(b"garbage not emb1")
    capsys.readouterr()
    code = main(["train", "--config", config, "--encoder", "native", "--arch", "mlp"])
    assert code == 1
    assert "magic" in capsys.readouterr().err


def test_cli_train_unknown_encoder_is_config_error(tmp_path, capsys):
    config = _write_config(tmp_path)
    assert main(["train", "--config", config, "--encoder", "nope", "--arch", "gcn"]) == 2
    capsys.readouterr()


def test_cli_bench_with_failed_cell_exits_nonzero(tmp_path, capsys):
    config = _write_config(tmp_path)
    main(["prepare", "--config", config])
    cfg = load_config(config)
    save_embedding_file(feature_path(cfg, cfg.encoders[0]), np.zeros((1, 2), dtype=np.float32))
    code = main(["bench", "--config", config])
    out = capsys.readouterr().out
    assert code == 1
    assert "failed" in out  # table still emitted with the failure marked


def test_cli_prepare_dead_endpoint_names_it(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        encoders=[{
            "name": "svc", "kind": "remote", "endpoint": "http://127.0.0.1:9",
            "model": "m", "cache_dir": "cache", "retry_base_delay": 0.0,
        }],
    )
    code = main(["prepare", "--config", config])
    err = capsys.readouterr().err
    assert code == 1
    assert "127.0.0.1:9" in err


def test_cli_gradcheck_pass_lists_each_op_once(capsys):
    assert main(["gradcheck", "--seeds", "2"]) == 0
    out = capsys.readouterr().out
    ops = [line.split()[0] for line in out.splitlines() if "max_rel_err" in line]
    assert len(ops) == len(set(ops))
    assert {"matmul", "gcn_layer", "graph_transformer_layer"} <= set(ops)


def test_gradcheck_flags_sabotaged_backward():
    def broken_backward_check(seed):
        return 0.5  # pretend some op disagrees with finite differences

    results = run_gradcheck(seeds=range(2), checks={"broken_op": broken_backward_check})
    assert len(results) == 1
    assert not results[0].ok


def test_cli_bench_format_and_out_overrides(tmp_path, capsys):
    config = _write_config(tmp_path)
    main(["prepare", "--config", config])
    out_dir = tmp_path / "alt"
    code = main(["bench", "--config", config, "--format", "tex", "--out", str(out_dir)])
    capsys.readouterr()
    assert code == 1  # --out moved the dir, so prepared features are elsewhere
    # with --force the features are re-prepared into the new out dir
    code = main(["bench", "--config", config, "--format", "tex", "--out", str(out_dir),
                 "--force"])
    capsys.readouterr()
    assert code == 0
    assert os.path.exists(out_dir / "bench.tex")
    assert os.path.exists(out_dir / "bench.csv")


def test_cli_seeds_override(tmp_path, capsys):
    config = _write_config(tmp_path)
    main(["prepare", "--config", config])
    assert main(["bench", "--config", config, "--seeds", "3"]) == 0
    capsys.readouterr()
    rows = list(csv.DictReader(io.StringIO((tmp_path / "out" / "bench.csv").read_text())))
    assert all(row["seeds"] == "0;1;2" for row in rows)


def test_cli_full_matrix_on_planetoid_dataset(tmp_path, capsys):
    # an on-disk dataset with raw texts, end to end through prepare + bench
    from conftest import write_planetoid
    from tagforge.data import generate_synthetic

    ds = generate_synthetic(36, 2, p_in=0.8, p_out=0.05, dim=5, sep=3.0, seed=6)
    rows = np.repeat(np.arange(36), np.diff(ds.graph.row_offsets))
    undirected = [(int(i), int(j)) for i, j in zip(rows, ds.graph.col_indices) if i < j]
    write_planetoid(
        tmp_path / "ds", "toy",
        edges=undirected, labels=ds.labels.tolist(),
        features=ds.features, texts=ds.texts,
    )
    config = _write_config(
        tmp_path,
        dataset={"kind": "planetoid", "dir": "ds", "name": "toy"},
        encoders=[
            {"name": "tfidf6", "kind": "tfidf", "vocab_size": 6},
            {"name": "bow", "kind": "file", "path": "ds/toy.features"},
        ],
        train={"epochs": 12, "patience": 12, "seeds": [0, 1]},
    )
    assert main(["prepare", "--config", config]) == 0
    assert main(["bench", "--config", config]) == 0
    out = capsys.readouterr().out
    assert "tfidf6" in out and "bow" in out
    rows = list(csv.DictReader(io.StringIO((tmp_path / "out" / "bench.csv").read_text())))
    assert {r["dataset"] for r in rows} == {"toy"}
    assert all(r["status"] == "ok" for r in rows)
