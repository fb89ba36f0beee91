"""Experiment runner: ``fclg run`` and ``fclg sweep``.

Settings resolve as command-line flag > config file > dataset preset >
built-in default. Results are line-delimited JSON, one record per
(run, round), then a summary record.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .evaluation import export_embeddings
from .federated import PRESETS, TARGET_EMD, FLConfig, embed, run
from .graphs import load_tu_dataset
from .partition import PartitionError, calibrate_dominant_fraction, partition_iid, partition_noniid

log = logging.getLogger("fclg")

_PARTITION = 61

# flag name -> (FLConfig / spec field, type)
OPTIONS = {
    "dataset": ("dataset", str),
    "data-dir": ("data_dir", str),
    "variant": ("variant", str),
    "clients": ("clients", int),
    "rounds": ("rounds", int),
    "local-epochs": ("local_epochs", int),
    "gamma": ("gamma", float),
    "partition": ("partition", str),
    "dominant-fraction": ("dominant_fraction", float),
    "target-emd": ("target_emd", float),
    "tau": ("tau", float),
    "tau-prime": ("tau_prime", float),
    "alpha": ("alpha", float),
    "lr": ("lr", float),
    "weight-decay": ("weight_decay", float),
    "batch-size": ("batch_size", int),
    "layers": ("num_layers", int),
    "hidden": ("hidden", int),
    "mu": ("mu", float),
    "kd-temperature": ("kd_temperature", float),
    "server-fraction": ("server_fraction", float),
    "server-epochs": ("server_epochs", int),
    "optimizer": ("optimizer", str),
    "restarts": ("restarts", int),
    "runs": ("runs", int),
    "seed": ("seed", int),
    "workers": ("workers", int),
    "out": ("out", str),
    "export-embeddings": ("export_embeddings", str),
}
SPEC_ONLY = {"dataset", "data_dir", "partition", "dominant_fraction", "target_emd", "runs", "workers", "out",
             "export_embeddings"}


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    dataset: str
    data_dir: str
    config: FLConfig
    partition: str = "noniid"
    dominant_fraction: float | None = None
    target_emd: float | None = None
    runs: int = 1
    out: str = "results.jsonl"
    force: bool = False
    workers: int = 1
    timing: bool = False
    export_embeddings: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        base = Path(self.data_dir)
        if not base.is_dir():
            raise SpecError(f"data directory {base} does not exist")
        for suffix in ("A", "graph_indicator", "graph_labels"):
            name = f"{self.dataset}_{suffix}.txt"
            if not ((base / self.dataset / name).exists() or (base / name).exists()):
                raise SpecError(f"missing {name} under {base}")
        if self.partition not in ("iid", "noniid"):
            raise SpecError("partition must be 'iid' or 'noniid'")
        if self.partition == "noniid" and self.dominant_fraction is None and self.target_emd is None:
            raise SpecError("noniid partition needs --dominant-fraction or --target-emd")
        if self.dominant_fraction is not None and not 0 < self.dominant_fraction <= 1:
            raise SpecError("dominant fraction must lie in (0, 1]")
        if self.target_emd is not None and not 0 <= self.target_emd <= 2:
            raise SpecError("target EMD must lie in [0, 2]")
        if self.runs < 1:
            raise SpecError("runs must be >= 1")
        self.config.validate()

    def config_hash(self) -> str:
        payload = {
            "dataset": self.dataset, "partition": self.partition, "dominant_fraction": self.dominant_fraction,
            "target_emd": self.target_emd, "runs": self.runs, "config": asdict(self.config),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _partition_for(spec: ExperimentSpec, graphs, cfg: FLConfig):
    server_fraction = cfg.server_fraction
    if cfg.variant == "vanilla_ensemble" and server_fraction is None:
        server_fraction = 1.0 / (cfg.clients + 1)
    rng = np.random.default_rng([cfg.seed, _PARTITION])
    if cfg.variant == "intra_central":
        return None
    if spec.partition == "iid":
        return partition_iid(graphs, cfg.clients, rng, server_fraction=server_fraction)
    if spec.dominant_fraction is not None:
        return partition_noniid(graphs, cfg.clients, spec.dominant_fraction, rng, server_fraction=server_fraction)
    f, part = calibrate_dominant_fraction(graphs, cfg.clients, spec.target_emd, tolerance=0.02,
                                          seed=int(rng.integers(2**31)), server_fraction=server_fraction)
    if abs(part.emd - spec.target_emd) > 0.02:
        # EMD moves in steps of roughly 2 / shard size, small shards cannot hit every target
        log.warning("closest EMD %.4f (fraction %.3f) misses target %.4f by more than 0.02",
                    part.emd, f, spec.target_emd)
    return part


def _write(fh, record: dict):
    fh.write(json.dumps(record, sort_keys=True) + "\n")
    fh.flush()


def run_experiment(spec: ExperimentSpec, graphs=None) -> Path:
    """Execute ``spec.runs`` seeded repetitions and write JSONL results."""
    spec.validate()
    out = Path(spec.out)
    if out.exists() and not spec.force:
        raise FileExistsError(f"{out} exists; pass --force to overwrite")
    if graphs is None:
        graphs = load_tu_dataset(spec.data_dir, spec.dataset)
    out.parent.mkdir(parents=True, exist_ok=True)
    chash = spec.config_hash()
    finals = []
    with open(out, "w") as fh:
        for r in range(spec.runs):
            cfg = spec.config.replace(seed=spec.config.seed + r)
            try:
                part = _partition_for(spec, graphs, cfg)
                result = run(cfg, part, graphs, workers=spec.workers)
            except Exception as exc:
                _write(fh, {"type": "error", "run": r, "seed": cfg.seed, "error": repr(exc), "config_hash": chash})
                raise
            for m in result.metrics:
                rec = {"type": "round", "run": r, "seed": cfg.seed, "config_hash": chash,
                       "emd": None if part is None else part.emd, **m.to_dict()}
                if not spec.timing:
                    rec.pop("wall_time")
                _write(fh, rec)
            if result.metrics:
                finals.append((result.metrics[-1].accuracy, result.metrics[-1].macro_f1))
            if spec.export_embeddings:
                path = Path(spec.export_embeddings)
                if spec.runs > 1:
                    path = path.with_name(f"{path.stem}_run{r}{path.suffix}")
                export_embeddings(embed(result.params, graphs), graphs.labels, path)
            log.info("run %d/%d done", r + 1, spec.runs)
        _write(fh, _summary(finals, spec, chash))
    return out


def _summary(finals, spec, chash):
    rec = {"type": "summary", "runs": spec.runs, "dataset": spec.dataset, "variant": spec.config.variant,
           "config_hash": chash, "config": asdict(spec.config), "partition": spec.partition,
           "dominant_fraction": spec.dominant_fraction, "target_emd": spec.target_emd}
    if finals:
        acc = np.array([a for a, _ in finals])
        f1 = np.array([b for _, b in finals])
        rec.update(accuracy_mean=float(acc.mean()), accuracy_half_range=float((acc.max() - acc.min()) / 2),
                   macro_f1_mean=float(f1.mean()), macro_f1_half_range=float((f1.max() - f1.min()) / 2))
    else:
        rec.update(accuracy_mean=None, accuracy_half_range=None, macro_f1_mean=None, macro_f1_half_range=None)
    return rec


SWEEP_AXES = {"target_emd", "K", "E"}


def sweep(spec: ExperimentSpec, axis: str, values, out_dir) -> list[Path]:
    """One experiment per axis value with a shared base seed, plus a summary table."""
    if axis not in SWEEP_AXES:
        raise SpecError(f"sweep axis must be one of {sorted(SWEEP_AXES)}")
    out_dir = Path(out_dir)
    table = out_dir / "sweep_summary.csv"
    if table.exists() and not spec.force:
        raise FileExistsError(f"{table} exists; pass --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)
    graphs = load_tu_dataset(spec.data_dir, spec.dataset)
    paths, rows = [], []
    for value in values:
        if axis == "K":
            sub = replace(spec, config=spec.config.replace(clients=int(value)))
        elif axis == "E":
            sub = replace(spec, config=spec.config.replace(local_epochs=int(value)))
        else:
            sub = replace(spec, partition="noniid", target_emd=float(value), dominant_fraction=None)
        sub = replace(sub, out=str(out_dir / f"{axis}_{value}.jsonl"))
        path = run_experiment(sub, graphs)
        paths.append(path)
        summary = json.loads(path.read_text().splitlines()[-1])
        rows.append({"axis": axis, "value": value, **{k: summary[k] for k in (
            "accuracy_mean", "accuracy_half_range", "macro_f1_mean", "macro_f1_half_range", "config_hash")}})
    with open(table, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["axis", "value"])
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        acc = row["accuracy_mean"]
        print(f"{axis}={row['value']}: accuracy {'n/a' if acc is None else f'{100 * acc:.2f}'}")
    return paths


# ---------------------------------------------------------------------------
# argument handling


def read_config_file(path) -> dict:
    """Key-value file with an optional ``[experiment]`` header; keys use flag names."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    parser.read_string(text)
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            flag = key.replace("_", "-")
            if flag not in OPTIONS:
                raise SpecError(f"{path}: unknown key {key!r}")
            dest, typ = OPTIONS[flag]
            out[dest] = typ(raw)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fclg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        for flag, (dest, typ) in OPTIONS.items():
            p.add_argument(f"--{flag}", dest=dest, type=typ, default=None)
        p.add_argument("--config", default=None, help="key = value settings file")
        p.add_argument("--force", action="store_true", help="overwrite existing output")
        p.add_argument("--timing", action="store_true", help="record wall time per round")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("run", help="run one configured experiment"))
    sw = sub.add_parser("sweep", help="run one experiment per axis value")
    common(sw)
    sw.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sw.add_argument("--values", required=True, help="comma-separated axis values")
    return parser


def spec_from_args(args) -> ExperimentSpec:
    settings = {}
    dataset = args.dataset
    file_settings = read_config_file(args.config) if args.config else {}
    dataset = dataset or file_settings.get("dataset")
    if not dataset:
        raise SpecError("--dataset is required")
    if dataset.upper() in PRESETS:
        settings.update(PRESETS[dataset.upper()])
        settings["target_emd"] = TARGET_EMD[dataset.upper()]
    settings.update(file_settings)
    settings.update({dest: getattr(args, dest) for dest, _ in OPTIONS.values() if getattr(args, dest) is not None})
    settings["dataset"] = dataset
    if settings.get("dominant_fraction") is not None and "target_emd" not in file_settings \
            and args.target_emd is None:
        settings.pop("target_emd", None)

    cfg_kwargs = {k: v for k, v in settings.items() if k not in SPEC_ONLY}
    try:
        config = FLConfig(**cfg_kwargs)
    except (TypeError, ValueError) as exc:
        raise SpecError(str(exc)) from None
    return ExperimentSpec(
        dataset=dataset,
        data_dir=settings.get("data_dir", "data"),
        config=config,
        partition=settings.get("partition", "noniid"),
        dominant_fraction=settings.get("dominant_fraction"),
        target_emd=settings.get("target_emd"),
        runs=settings.get("runs", 1),
        out=settings.get("out", "results.jsonl" if args.command == "run" else "sweep_out"),
        force=args.force,
        workers=settings.get("workers", 1),
        timing=args.timing,
        export_embeddings=settings.get("export_embeddings"),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        spec = spec_from_args(args)
        if args.command == "run":
            path = run_experiment(spec)
            print(path.read_text().splitlines()[-1])
        else:
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            sweep(spec, args.axis, values, spec.out)
    except (SpecError, PartitionError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
