"""Benchmark harness: encoder x architecture accuracy matrices.

A benchmark is described by one JSON config file:

```
{
  "dataset":  {"kind": "planetoid", "dir": "data/cora", "name": "cora"}
            | {"kind": "synthetic", "n": 200, "classes": 3, "p_in": 0.2,
               "p_out": 0.01, "dim": 16, "sep": 3.0, "seed": 7},
  "encoders": [{"name": "tfidf500", "kind": "tfidf", "vocab_size": 500},
               {"name": "native", "kind": "file", "path": "feats.emb"},
               {"name": "svc", "kind": "remote", "endpoint": "http://...",
                "model": "m", "batch_size": 16, "cache_dir": "cache"}],
  "archs":    ["gcn", "mlp", "graph_transformer"],
  "split":    {"protocol": "high"} | {"protocol": "low", "per_class": 20,
               "n_val": 500, "n_test": 1000},
  "train":    {"epochs": 300, "patience": 10, "lr": 0.01,
               "weight_decay": 5e-4, "seeds": [0, 1, 2, 3, 4]},
  "model":    {"layers": 4, "hidden": 64, "heads": 4, "dropout": 0.5},
  "output":   {"dir": "bench_out", "format": "markdown"},
  "workers":  1
}
```

``split.seed`` is optional: when present the same split is reused for every
run; when absent each run re-draws its split from the run seed. Prepared
features live under ``<output.dir>/features/<encoder>.emb``; ``prepare``
materializes them (TF-IDF and remote encoders embed the dataset texts, file
encoders are copied) and skips existing files unless forced.

Cell runs are scheduled onto a bounded worker pool; every run owns its
model and RNG, and output ordering is fixed by config order, so identical
configs produce byte-identical CSV output. A failed cell is recorded and
the table is still emitted.
"""

import csv
import io
import json
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SplitMask, generate_synthetic, load_planetoid, split_high, split_low
from .features import EncoderSpec, load_embedding_file, remote_embed, save_embedding_file, tfidf
from .models import ARCHITECTURES, ModelSpec, init_parameters
from .train import RunResult, TrainSpec, aggregate, train

TABLE_FORMATS = ("markdown", "latex", "csv")
_FORMAT_ALIASES = {"md": "markdown", "tex": "latex", "markdown": "markdown",
                   "latex": "latex", "csv": "csv"}
_FORMAT_SUFFIX = {"markdown": "md", "latex": "tex", "csv": "csv"}


class ConfigError(ValueError):
    """The benchmark config is invalid or references missing files."""


@dataclass
class BenchConfig:
    dataset: dict
    encoders: list[EncoderSpec]
    archs: list[str]
    split: dict
    trainspec: TrainSpec
    model: dict
    out_dir: str = "bench_out"
    table_format: str = "markdown"
    workers: int = 1

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.trainspec.seeds


def normalize_format(fmt: str) -> str:
    if fmt not in _FORMAT_ALIASES:
        raise ConfigError(f"unknown table format {fmt!r}, expected md|tex|csv")
    return _FORMAT_ALIASES[fmt]


def load_config(path: str) -> BenchConfig:
    """Parse and validate a benchmark config file."""
    try:
        with open(path) as fh:
            blob = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    base_dir = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base_dir, p)

    try:
        dataset = dict(blob["dataset"])
        encoder_blobs = list(blob["encoders"])
        archs = list(blob["archs"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: missing required key: {exc}") from exc
    if not encoder_blobs or not archs:
        raise ConfigError(f"{path}: need at least one encoder and one arch")
    for arch in archs:
        if arch not in ARCHITECTURES:
            raise ConfigError(f"{path}: unknown arch {arch!r}")
    if len(set(archs)) != len(archs):
        raise ConfigError(f"{path}: duplicate archs")

    kind = dataset.get("kind")
    if kind == "planetoid":
        if "dir" not in dataset or "name" not in dataset:
            raise ConfigError(f"{path}: planetoid dataset needs 'dir' and 'name'")
        dataset["dir"] = resolve(dataset["dir"])
        stem = os.path.join(dataset["dir"], dataset["name"])
        for suffix in (".labels", ".edges"):
            if not os.path.exists(stem + suffix):
                raise ConfigError(f"{path}: dataset file missing: {stem + suffix}")
    elif kind == "synthetic":
        for key in ("n", "classes", "p_in", "p_out"):
            if key not in dataset:
                raise ConfigError(f"{path}: synthetic dataset needs {key!r}")
    else:
        raise ConfigError(f"{path}: dataset kind must be planetoid or synthetic")

    encoders = []
    for enc in encoder_blobs:
        enc = dict(enc)
        if "path" in enc and enc["path"]:
            enc["path"] = resolve(enc["path"])
        if "cache_dir" in enc and enc["cache_dir"]:
            enc["cache_dir"] = resolve(enc["cache_dir"])
        try:
            spec = EncoderSpec(**enc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: bad encoder entry {enc.get('name')!r}: {exc}") from exc
        if spec.kind == "file" and not os.path.exists(spec.path):
            raise ConfigError(f"{path}: encoder {spec.name!r} file missing: {spec.path}")
        encoders.append(spec)
    names = [e.name for e in encoders]
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}: duplicate encoder names")

    split = dict(blob.get("split", {"protocol": "high"}))
    if split.get("protocol") not in ("low", "high"):
        raise ConfigError(f"{path}: split.protocol must be 'low' or 'high'")

    train_blob = dict(blob.get("train", {}))
    if "seeds" in train_blob:
        train_blob["seeds"] = tuple(int(s) for s in train_blob["seeds"])
    try:
        trainspec = TrainSpec(**train_blob)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad train block: {exc}") from exc

    model = dict(blob.get("model", {}))
    output = dict(blob.get("output", {}))
    out_dir = resolve(output.get("dir", "bench_out"))
    table_format = normalize_format(output.get("format", "markdown"))
    workers = int(blob.get("workers", 1))
    if workers < 1:
        raise ConfigError(f"{path}: workers must be >= 1")
    return BenchConfig(dataset, encoders, archs, split, trainspec, model, out_dir,
                       table_format, workers)


def load_bench_dataset(cfg: BenchConfig) -> Dataset:
    ds = cfg.dataset
    if ds["kind"] == "planetoid":
        return load_planetoid(ds["dir"], ds["name"])
    return generate_synthetic(
        n=int(ds["n"]),
        num_classes=int(ds["classes"]),
        p_in=float(ds["p_in"]),
        p_out=float(ds["p_out"]),
        dim=int(ds.get("dim", 16)),
        sep=float(ds.get("sep", 1.0)),
        seed=int(ds.get("seed", 0)),
    )


def feature_path(cfg: BenchConfig, encoder: EncoderSpec) -> str:
    return os.path.join(cfg.out_dir, "features", f"{encoder.name}.emb")


def prepare(cfg: BenchConfig, force: bool = False) -> list[str]:
    """Materialize one EMB1 file per encoder; returns the written paths.

    Existing files are kept unless ``force``.
    """
    dataset = None
    written = []
    for encoder in cfg.encoders:
        target = feature_path(cfg, encoder)
        if os.path.exists(target) and not force:
            continue
        if encoder.kind == "file":
            os.makedirs(os.path.dirname(target), exist_ok=True)
            shutil.copyfile(encoder.path, target)
        else:
            if dataset is None:
                dataset = load_bench_dataset(cfg)
            if dataset.texts is None:
                raise ConfigError(
                    f"encoder {encoder.name!r} needs raw texts, but dataset "
                    f"{dataset.name!r} has none"
                )
            if encoder.kind == "tfidf":
                matrix, _ = tfidf(dataset.texts, encoder.vocab_size)
            else:
                matrix = remote_embed(encoder, dataset.texts)
            save_embedding_file(target, matrix)
        written.append(target)
    return written


def make_split(cfg: BenchConfig, dataset: Dataset, run_seed: int) -> SplitMask:
    split = cfg.split
    seed = int(split["seed"]) if split.get("seed") is not None else run_seed
    if split["protocol"] == "low":
        return split_low(
            dataset.labels,
            num_classes=dataset.num_classes,
            per_class=int(split.get("per_class", 20)),
            n_val=int(split.get("n_val", 500)),
            n_test=int(split.get("n_test", 1000)),
            seed=seed,
        )
    return split_high(dataset.num_nodes, seed=seed)


@dataclass
class CellResult:
    encoder: str
    arch: str
    mean: float | None = None
    std: float | None = None
    epochs: list[int] = field(default_factory=list)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class BenchResult:
    dataset_name: str
    encoders: list[str]
    archs: list[str]
    seeds: tuple[int, ...]
    cells: dict[tuple[str, str], CellResult]

    @property
    def ok(self) -> bool:
        return all(cell.ok for cell in self.cells.values())


def run_cell(
    cfg: BenchConfig, dataset: Dataset, features: np.ndarray, encoder: str, arch: str
) -> CellResult:
    spec = ModelSpec(
        arch=arch,
        in_dim=features.shape[1],
        num_classes=dataset.num_classes,
        layers=int(cfg.model.get("layers", 4)),
        hidden=int(cfg.model.get("hidden", 64)),
        heads=int(cfg.model.get("heads", 4)),
        dropout=float(cfg.model.get("dropout", 0.5)),
    )
    cell_dataset = Dataset(
        dataset.graph, features, dataset.labels, dataset.num_classes, name=dataset.name
    )
    results: list[RunResult] = []
    for seed in cfg.seeds:
        split = make_split(cfg, dataset, seed)
        model = init_parameters(spec, seed)
        results.append(train(model, cell_dataset, split, cfg.trainspec, seed))
    if len(results) >= 2:
        mean, std = aggregate(results)
    else:
        mean, std = results[0].test_acc_at_best_val, 0.0
    return CellResult(encoder, arch, mean, std, [r.epochs_ran for r in results])


def run_bench(cfg: BenchConfig, log=None) -> BenchResult:
    """Run the full encoder x arch grid; failures become failed cells."""
    say = log or (lambda msg: None)
    dataset = load_bench_dataset(cfg)
    pairs = [(e.name, a) for e in cfg.encoders for a in cfg.archs]
    cells: dict[tuple[str, str], CellResult] = {}

    feature_cache: dict[str, np.ndarray | Exception] = {}
    for encoder in cfg.encoders:
        path = feature_path(cfg, encoder)
        try:
            if not os.path.exists(path):
                raise FileNotFoundError(
                    f"features not prepared for encoder {encoder.name!r} "
                    f"(expected {path}; run the prepare command)"
                )
            features = load_embedding_file(path).astype(np.float64)
            if features.shape[0] != dataset.num_nodes:
                raise ValueError(
                    f"feature file {path} has {features.shape[0]} rows, dataset "
                    f"{dataset.name!r} has {dataset.num_nodes} nodes"
                )
            feature_cache[encoder.name] = features
        except Exception as exc:  # noqa: BLE001 - cell-level isolation
            feature_cache[encoder.name] = exc

    def run_one(pair):
        encoder, arch = pair
        features = feature_cache[encoder]
        if isinstance(features, Exception):
            return CellResult(encoder, arch, error=str(features))
        try:
            return run_cell(cfg, dataset, features, encoder, arch)
        except Exception as exc:  # noqa: BLE001 - cell-level isolation
            return CellResult(encoder, arch, error=str(exc))

    if cfg.workers == 1:
        results = [run_one(pair) for pair in pairs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_one, pairs))
    for pair, cell in zip(pairs, results):
        cells[pair] = cell
        status = f"{cell.mean * 100:.2f} ± {cell.std * 100:.2f}" if cell.ok else "FAILED"
        say(f"[{pair[0]} × {pair[1]}] {status}")
    return BenchResult(dataset.name, [e.name for e in cfg.encoders], cfg.archs,
                       cfg.seeds, cells)


def _cell_text(cell: CellResult, best: bool, bold: tuple[str, str]) -> str:
    if not cell.ok:
        return "failed"
    body = f"{cell.mean * 100:.2f} ± {cell.std * 100:.2f}"
    return f"{bold[0]}{body}{bold[1]}" if best else body


def _row_best(result: BenchResult, encoder: str) -> str | None:
    best_arch, best_mean = None, -1.0
    for arch in result.archs:
        cell = result.cells[(encoder, arch)]
        if cell.ok and cell.mean > best_mean:
            best_arch, best_mean = arch, cell.mean
    return best_arch


def to_markdown(result: BenchResult) -> str:
    lines = [
        f"| Encoder | {' | '.join(result.archs)} |",
        f"|---{'|---' * len(result.archs)}|",
    ]
    for encoder in result.encoders:
        best = _row_best(result, encoder)
        cells = [
            _cell_text(result.cells[(encoder, arch)], arch == best, ("**", "**"))
            for arch in result.archs
        ]
        lines.append(f"| {encoder} | {' | '.join(cells)} |")
    return "\n".join(lines) + "\n"


def to_latex(result: BenchResult) -> str:
    lines = [
        "\\begin{tabular}{l|" + "r" * len(result.archs) + "}",
        "\\hline",
        "Encoder & " + " & ".join(result.archs) + " \\\\",
        "\\hline",
    ]
    for encoder in result.encoders:
        best = _row_best(result, encoder)
        cells = []
        for arch in result.archs:
            cell = result.cells[(encoder, arch)]
            if not cell.ok:
                cells.append("failed")
                continue
            mean = f"{cell.mean * 100:.2f}"
            if arch == best:
                mean = f"\\textbf{{{mean}}}"
            cells.append(f"{mean} $\\pm$ {cell.std * 100:.2f}")
        lines.append(f"{encoder} & " + " & ".join(cells) + " \\\\")
    lines += ["\\hline", "\\end{tabular}"]
    return "\n".join(lines) + "\n"


def to_csv(result: BenchResult) -> str:
    """Machine-readable grid; mean/std are percents at full precision."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["dataset", "encoder", "arch", "mean_pct", "std_pct", "seeds",
                     "epochs", "status"])
    for encoder in result.encoders:
        for arch in result.archs:
            cell = result.cells[(encoder, arch)]
            writer.writerow([
                result.dataset_name,
                encoder,
                arch,
                repr(cell.mean * 100) if cell.ok else "",
                repr(cell.std * 100) if cell.ok else "",
                ";".join(str(s) for s in result.seeds),
                ";".join(str(e) for e in cell.epochs),
                "ok" if cell.ok else f"failed: {cell.error}",
            ])
    return buffer.getvalue()


def render(result: BenchResult, table_format: str) -> str:
    return {"markdown": to_markdown, "latex": to_latex, "csv": to_csv}[table_format](result)


def write_outputs(result: BenchResult, cfg: BenchConfig) -> list[str]:
    """Write the formatted table and the CSV; returns written paths."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    paths = []
    csv_path = os.path.join(cfg.out_dir, "bench.csv")
    with open(csv_path, "w", newline="") as fh:
        fh.write(to_csv(result))
    paths.append(csv_path)
    if cfg.table_format != "csv":
        table_path = os.path.join(cfg.out_dir, f"bench.{_FORMAT_SUFFIX[cfg.table_format]}")
        with open(table_path, "w") as fh:
            fh.write(render(result, cfg.table_format))
        paths.append(table_path)
    return paths
