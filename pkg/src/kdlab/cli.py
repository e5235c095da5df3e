"""Command-line front end: dataset generation, training, sweeps, analysis.

Every command takes an explicit --seed, derives all randomness from it, and
writes a manifest of its resolved configuration before doing any heavy
work. Re-running a command with the same seed and configuration reproduces
every CSV and checkpoint byte-for-byte (manifests carry a timestamp and are
exempt). Option precedence is defaults < --config JSON < command-line
flags.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import data as datamod
from . import experiments as exp
from . import mlp
from .losses import LossKind, TargetDistribution, ce_distance, mse_distance
from .tensor import derive_seed, make_rng

_FAST_N = 20_000
_DEFAULT_N = 100_000


class _Command:
    """A subcommand whose option defaults are tracked outside argparse.

    argparse sees default=None everywhere so that, after parsing, a None
    means "not given on the command line"; the real defaults live here and
    lose to --config values, which lose to explicit flags.
    """

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.defaults: dict = {}

    def opt(self, *names, default=None, help="", **kw):
        dest = kw.pop("dest", None) or names[-1].lstrip("-").replace("-", "_")
        self.defaults[dest] = default
        if kw.get("action") == "store_true":
            self.parser.add_argument(*names, dest=dest, default=None, action="store_true", help=help)
            return
        if default not in (None, ""):
            help = f"{help} (default: {default})"
        self.parser.add_argument(*names, dest=dest, default=None, help=help, **kw)

    def resolve(self, args: argparse.Namespace) -> dict:
        resolved = dict(self.defaults)
        if getattr(args, "config", None):
            with open(args.config) as f:
                file_cfg = json.load(f)
            unknown = set(file_cfg) - set(resolved)
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            resolved.update(file_cfg)
        for dest in self.defaults:
            value = getattr(args, dest, None)
            if value is not None:
                resolved[dest] = value
        return resolved


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()


def _write_manifest(path: Path, command: str, seed: int, config: dict, inputs: dict, outputs: dict) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "created_utc": _utc_now(),  # only non-reproducible field
        "seed": seed,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in str(text).split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected 3 comma-separated ratios, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def _dataset_paths(data_dir: Path) -> tuple[Path, Path]:
    csv_path = data_dir / "dataset.csv"
    meta_path = data_dir / "dataset.meta.json"
    if not csv_path.exists() or not meta_path.exists():
        raise FileNotFoundError(f"no dataset.csv / dataset.meta.json under {data_dir}")
    return csv_path, meta_path


def _train_cfg(res: dict, seed: int) -> exp.TrainConfig:
    return exp.TrainConfig(
        loss_kind=LossKind(res.get("loss", "ce")),
        learning_rate=res["lr"],
        batch_size=res["batch_size"],
        epochs=res["epochs"],
        seed=seed,
        temperature=res["temperature"],
        hidden_dim=res["hidden_dim"],
        num_hidden=res["num_hidden"],
    )


def cmd_gen_data(args, cmd: _Command) -> int:
    res = cmd.resolve(args)
    out_dir = Path(res["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    n = _FAST_N if res["fast"] else res["n"]
    ratios = _parse_ratios(res["ratios"])
    seed = res["seed"]
    csv_path = out_dir / "dataset.csv"
    meta_path = out_dir / "dataset.meta.json"
    _write_manifest(
        out_dir / "manifest-gen-data.json",
        "gen-data",
        seed,
        {**res, "n": n},
        {},
        {"dataset_csv": str(csv_path), "dataset_meta": str(meta_path)},
    )
    spec = datamod.make_spec(
        make_rng(seed, "spec"),
        num_classes=res["classes"],
        dim=res["dim"],
        delta_mu=res["delta_mu"],
        sigma=res["sigma"],
    )
    dataset = datamod.sample_dataset(make_rng(seed, "samples"), spec, n)
    dataset = datamod.split_dataset(make_rng(seed, "split"), dataset, ratios)
    datamod.save_dataset(dataset, spec, csv_path, meta_path, seed)
    print(f"wrote {csv_path} ({n} samples, C={spec.num_classes}, d={spec.dim})")
    print(f"bayes accuracy: overall {datamod.bayes_accuracy(dataset):.4f}, "
          f"test {datamod.bayes_accuracy(dataset, 'test'):.4f}")
    return 0


def cmd_train_teacher(args, cmd: _Command) -> int:
    res = cmd.resolve(args)
    csv_path, meta_path = _dataset_paths(Path(res["data"]))
    out_dir = Path(res["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = res["seed"]
    cfg = _train_cfg(res, seed)
    kind = cfg.loss_kind.value
    model_path = out_dir / f"teacher-{kind}.mlp"
    history_path = out_dir / f"teacher-{kind}-history.csv"
    summary_path = out_dir / f"teacher-{kind}-summary.json"
    _write_manifest(
        out_dir / f"manifest-train-teacher-{kind}.json",
        "train-teacher",
        seed,
        res,
        {"dataset_csv": str(csv_path), "dataset_digest": _sha256(csv_path)},
        {"checkpoint": str(model_path), "history": str(history_path), "summary": str(summary_path)},
    )
    dataset, _, meta = datamod.load_dataset(csv_path, meta_path)
    targets = TargetDistribution.from_labels(dataset.y[dataset.indices("train")], dataset.num_classes)
    model, history = exp.train_model(cfg, dataset, targets, make_rng(seed, "teacher"))
    mlp.save_model(model, model_path)
    with open(history_path, "w", newline="\n") as f:
        f.write("epoch,train_loss,val_loss,val_accuracy\n")
        for i in range(len(history)):
            f.write(
                f"{i},{history.train_loss[i]!r},{history.val_loss[i]!r},{history.val_accuracy[i]!r}\n"
            )
    test_acc = exp.evaluate_accuracy(model, dataset, "test")
    mse_d, ce_d = exp.evaluate_distance_to_bcpd(model, dataset, "test")
    summary = {
        "loss": kind,
        "test_accuracy": test_acc,
        "mse_to_bcpd": mse_d,
        "ce_to_bcpd": ce_d,
        "bayes_test_accuracy": meta["bayes_accuracy_by_split"]["test"],
    }
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"teacher ({kind}): test acc {test_acc:.4f}, "
          f"mse_to_bcpd {mse_d:.5f}, ce_to_bcpd {ce_d:.5f}")
    print(f"wrote {model_path}")
    return 0


def cmd_distill(args, cmd: _Command) -> int:
    res = cmd.resolve(args)
    csv_path, meta_path = _dataset_paths(Path(res["data"]))
    seed = res["seed"]
    cfg = _train_cfg(res, seed)
    records_path = Path(res["records"])
    mode = res["targets"]
    if mode == "teacher" and not res["teacher"]:
        raise ValueError("--teacher PATH is required with --targets teacher")
    inputs = {"dataset_csv": str(csv_path), "dataset_digest": _sha256(csv_path)}
    if res["teacher"]:
        inputs["teacher"] = str(res["teacher"])
    records_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path = records_path.parent / f"manifest-distill-{mode}-s{seed}.json"
    _write_manifest(manifest_path, "distill", seed, res, inputs, {"records": str(records_path)})

    teacher = mlp.load_model(res["teacher"]) if mode == "teacher" else None
    dataset, _, _ = datamod.load_dataset(csv_path, meta_path)
    train_idx = dataset.indices("train")
    c = dataset.num_classes
    if mode == "one-hot":
        targets = TargetDistribution.from_labels(dataset.y[train_idx], c)
        provenance = "one_hot"
    elif mode == "exact-bcpd":
        targets = TargetDistribution.from_probs(dataset.bcpd[train_idx])
        provenance = "exact_bcpd"
    else:
        targets = TargetDistribution.from_probs(mlp.predict_proba(teacher, dataset.x[train_idx]))
        provenance = "teacher"

    student, _ = exp.train_model(cfg, dataset, targets, make_rng(seed, "distill", mode))
    if mode == "teacher":
        mse_d, ce_d = exp.evaluate_distance_to_bcpd(teacher, dataset, "test")
        teacher_acc = exp.evaluate_accuracy(teacher, dataset, "test")
    else:
        ref = dataset.bcpd[train_idx]
        mse_d = float(np.mean(mse_distance(ref, targets.probs)))
        ce_d = float(np.mean(ce_distance(ref, targets.probs)))
        teacher_acc = None
    record = exp.ExperimentRecord(
        run_id=f"distill-{provenance}-s{seed}",
        provenance=provenance,
        noise_scale=None,
        teacher_loss=None,
        replicate=None,
        mse_to_bcpd=mse_d,
        ce_to_bcpd=ce_d,
        teacher_test_acc=teacher_acc,
        student_test_acc=exp.evaluate_accuracy(student, dataset, "test"),
        seed=derive_seed(seed, "distill", mode),
    )
    exp.append_records([record], records_path)
    if res["save_model"]:
        mlp.save_model(student, res["save_model"])
    print(f"student ({provenance}): test acc {record.student_test_acc:.4f}")
    print(f"appended record to {records_path}")
    return 0


def cmd_sweep(args, cmd: _Command) -> int:
    res = cmd.resolve(args)
    protocol = args.protocol
    seed = res["seed"]
    cfg = _train_cfg(res, seed)
    out_path = Path(res["out"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    inputs = {}
    dataset = None
    if protocol != "binary":
        csv_path, meta_path = _dataset_paths(Path(res["data"]))
        inputs = {"dataset_csv": str(csv_path), "dataset_digest": _sha256(csv_path)}
    _write_manifest(
        out_path.parent / f"manifest-sweep-{protocol}.json",
        f"sweep-{protocol}",
        seed,
        {**res, "protocol": protocol},
        inputs,
        {"records": str(out_path)},
    )
    if protocol != "binary":
        dataset, _, _ = datamod.load_dataset(csv_path, meta_path)

    jobs = res["jobs"]
    conventions = (f"temperature: {cfg.temperature:g}",)
    if protocol == "set1":
        lo, hi, n = (float(v) for v in str(res["noise_grid"]).split(","))
        grid = exp.default_noise_grid(int(n), lo, hi)
        records = exp.run_set1(cfg, dataset, grid, jobs=jobs)
        exp.write_records(records, out_path, conventions)
        _print_set1_summary(records)
    elif protocol in ("set2", "binary"):
        teacher_epochs = res["teacher_epochs"] or None
        if protocol == "set2":
            records = exp.run_set2(
                cfg, dataset, res["repeats"], teacher_epochs=teacher_epochs, jobs=jobs
            )
        else:
            records = exp.run_binary(
                cfg, repeats=res["repeats"], n_samples=res["n"],
                teacher_epochs=teacher_epochs, jobs=jobs,
            )
        exp.write_records(records, out_path, conventions)
        _print_set2_summary(records)
    else:  # semi
        fractions = [float(v) for v in str(res["fractions"]).split(",")]
        teacher_epochs = res["teacher_epochs"] or None
        records = []
        for frac in fractions:
            for kind in (LossKind.CE, LossKind.MSE):
                for rep in range(res["seeds"]):
                    records.append(
                        exp.run_semi_supervised(
                            cfg.replace(seed=derive_seed(seed, "semi-rep", rep)),
                            dataset,
                            frac,
                            kind,
                            teacher_epochs=teacher_epochs,
                        )
                    )
        exp.write_records(records, out_path, conventions)
        _print_semi_summary(records, fractions)
    print(f"wrote {len(records)} records to {out_path}")
    return 0


def _print_set1_summary(records) -> None:
    acc = [r.student_test_acc for r in records]
    print(f"student accuracy: min {min(acc):.4f}, max {max(acc):.4f}")
    _, rho_mse = exp.correlation(records, "mse_to_bcpd", "student_test_acc")
    _, rho_ce = exp.correlation(records, "ce_to_bcpd", "student_test_acc")
    print(f"spearman(accuracy, mse_to_bcpd) = {rho_mse:+.4f}")
    print(f"spearman(accuracy, ce_to_bcpd)  = {rho_ce:+.4f}")


def _print_set2_summary(records) -> None:
    for kind in (LossKind.CE, LossKind.MSE):
        group = [r for r in records if r.teacher_loss is kind]
        t_acc = np.mean([r.teacher_test_acc for r in group])
        s_acc = np.mean([r.student_test_acc for r in group])
        msed = np.mean([r.mse_to_bcpd for r in group])
        print(f"{kind.value} teachers: teacher acc {t_acc:.4f}, student acc {s_acc:.4f}, "
              f"mse_to_bcpd {msed:.5f}")
    mse_students = np.array([r.student_test_acc for r in records if r.teacher_loss is LossKind.MSE])
    ce_students = np.array([r.student_test_acc for r in records if r.teacher_loss is LossKind.CE])
    if len(mse_students) >= 2 and len(ce_students) >= 2:
        t_stat, p = exp.welch_one_sided(mse_students, ce_students)
        print(f"welch one-sided (mse-teacher students > ce-teacher students): "
              f"t = {t_stat:.3f}, p = {p:.4f}")


def _print_semi_summary(records, fractions) -> None:
    for frac in fractions:
        line = [f"fraction {frac:g}:"]
        for kind in (LossKind.CE, LossKind.MSE):
            accs = [
                r.student_test_acc
                for r in records
                if r.teacher_loss is kind and f"-f{frac:g}-" in r.run_id
            ]
            line.append(f"{kind.value} student acc {np.mean(accs):.4f}")
        print("  ".join(line))


def cmd_analyze(args, cmd: _Command) -> int:
    res = cmd.resolve(args)
    records_path = Path(res["records"])
    records = exp.read_records(records_path)
    if len(records) < 3:
        raise ValueError(f"need at least 3 records in {records_path}, got {len(records)}")
    out_dir = Path(res["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = {
        "acc_vs_mse.dat": "mse_to_bcpd",
        "acc_vs_ce.dat": "ce_to_bcpd",
    }
    for fname, field in pairs.items():
        rows = sorted((getattr(r, field), r.student_test_acc) for r in records)
        with open(out_dir / fname, "w", newline="\n") as f:
            f.write(f"# {field} student_test_acc\n")
            for d, a in rows:
                f.write(f"{d!r} {a!r}\n")
    p_mse, rho_mse = exp.correlation(records, "mse_to_bcpd", "student_test_acc")
    p_ce, rho_ce = exp.correlation(records, "ce_to_bcpd", "student_test_acc")
    print(f"accuracy vs mse_to_bcpd: pearson {p_mse:+.4f}, spearman {rho_mse:+.4f}")
    print(f"accuracy vs ce_to_bcpd:  pearson {p_ce:+.4f}, spearman {rho_ce:+.4f}")
    if abs(rho_mse) > abs(rho_ce):
        print("verdict: squared-error distance to the exact posterior orders student "
              f"accuracy more strongly than cross-entropy distance "
              f"(|{rho_mse:.3f}| > |{rho_ce:.3f}|)")
    else:
        print("verdict: cross-entropy distance orders student accuracy at least as "
              f"strongly as squared-error distance (|{rho_ce:.3f}| >= |{rho_mse:.3f}|)")
    print(f"wrote {', '.join(str(out_dir / f) for f in pairs)}")
    return 0


def _add_train_opts(cmd: _Command) -> None:
    cmd.opt("--lr", type=float, default=5e-4, help="SGD learning rate")
    cmd.opt("--batch-size", type=int, default=32, help="mini-batch size")
    cmd.opt("--epochs", type=int, default=100, help="training epochs")
    cmd.opt("--temperature", type=float, default=1.0, help="softening temperature")
    cmd.opt("--hidden-dim", type=int, default=128, help="hidden layer width")
    cmd.opt("--num-hidden", type=int, default=2, help="hidden layer count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdlab",
        description="Knowledge-distillation lab on synthetic Gaussian data with an exact posterior.",
    )
    parser.add_argument("--version", action="version", version=f"kdlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    c = _Command(p)
    c.opt("--out", default="data", help="output directory")
    c.opt("--n", type=int, default=_DEFAULT_N, help="number of samples")
    c.opt("--classes", type=int, default=3, help="number of classes")
    c.opt("--dim", type=int, default=30, help="feature dimension")
    c.opt("--sigma", type=float, default=4.0, help="class-conditional noise scale")
    c.opt("--delta-mu", type=float, default=1.0, help="mean symbol magnitude")
    c.opt("--ratios", default="0.9,0.05,0.05", help="train,val,test split ratios")
    c.opt("--seed", type=int, default=0, help="root seed")
    c.opt("--fast", action="store_true", default=False, help=f"use n={_FAST_N}")
    p.add_argument("--config", help="JSON file of option overrides")
    p.set_defaults(func=cmd_gen_data, cmd_ref=c)

    p = sub.add_parser("train-teacher", help="train a teacher on one-hot labels")
    c = _Command(p)
    c.opt("--data", default="data", help="dataset directory")
    c.opt("--out", default="runs", help="output directory")
    c.opt("--loss", choices=["ce", "mse"], default="ce", help="training loss")
    c.opt("--seed", type=int, default=0, help="root seed")
    _add_train_opts(c)
    p.add_argument("--config", help="JSON file of option overrides")
    p.set_defaults(func=cmd_train_teacher, cmd_ref=c)

    p = sub.add_parser("distill", help="train a student from chosen targets")
    c = _Command(p)
    c.opt("--data", default="data", help="dataset directory")
    c.opt("--targets", choices=["teacher", "exact-bcpd", "one-hot"], default="teacher",
          help="supervision source")
    c.opt("--teacher", default="", help="teacher checkpoint (with --targets teacher)")
    c.opt("--records", default="records.csv", help="results CSV to append to")
    c.opt("--save-model", default="", help="optional student checkpoint path")
    c.opt("--loss", choices=["ce", "mse"], default="ce", help="student training loss")
    c.opt("--seed", type=int, default=0, help="root seed")
    _add_train_opts(c)
    p.add_argument("--config", help="JSON file of option overrides")
    p.set_defaults(func=cmd_distill, cmd_ref=c)

    p = sub.add_parser("sweep", help="run an experiment protocol")
    p.add_argument("protocol", choices=["set1", "set2", "semi", "binary"], help="which sweep")
    c = _Command(p)
    c.opt("--data", default="data", help="dataset directory (unused for binary)")
    c.opt("--out", default="records.csv", help="results CSV path")
    c.opt("--seed", type=int, default=0, help="root seed")
    c.opt("--jobs", type=int, default=1, help="parallel worker processes")
    c.opt("--repeats", type=int, default=10, help="teachers per loss kind (set2/binary)")
    c.opt("--teacher-epochs", type=int, default=0,
          help="teacher epochs when different from --epochs; 0 means same (set2/semi/binary)")
    c.opt("--noise-grid", default="0.3,3.0,100", help="lo,hi,count log-spaced noise scales (set1)")
    c.opt("--fractions", default="0.01,0.02,0.04,0.08", help="labeled fractions (semi)")
    c.opt("--seeds", type=int, default=3, help="replicates per cell (semi)")
    c.opt("--n", type=int, default=_FAST_N, help="dataset size (binary)")
    _add_train_opts(c)
    p.add_argument("--config", help="JSON file of option overrides")
    p.set_defaults(func=cmd_sweep, cmd_ref=c)

    p = sub.add_parser("analyze", help="correlations and plot data from records")
    c = _Command(p)
    c.opt("--records", default="records.csv", help="results CSV")
    c.opt("--out-dir", default="analysis", help="directory for .dat files")
    p.add_argument("--config", help="JSON file of option overrides")
    p.set_defaults(func=cmd_analyze, cmd_ref=c)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, args.cmd_ref)
    except (ValueError, FileNotFoundError, OSError) as err:
        print(f"kdlab {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
