"""Command-line front end: ``spikecost <subcommand> [flags]``.

Subcommands
    train       train an SNN on MNIST, write per-epoch profiles, metrics, weights
    profile     measure a sparsity profile from weights, or convert one to CSV
    estimate    per-image training energy (stage CSV, layer breakdown, counts)
    compare     energy ratios of one configuration over a baseline (ANN or SNN)
    sweep-t     total energy over a list of timestep counts
    sweep-du    SNN compute energy as dU sparsity is scaled, against a fixed ANN
    crosscheck  dataflow-simulator traffic against the analytic counts

Every run writes ``manifest.json`` (config hash, seed, versions, outputs)
and ``timestamp.json`` into ``--out``; all other outputs are deterministic.

Exit codes: 0 success, 1 usage, 2 I/O error, 3 validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

from .errors import CapacityError, SpikecostError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 0, 1, 2, 3
log = logging.getLogger("spikecost")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    """``"0.5,1,1.5"`` or ``"start:stop:step"`` (inclusive stop)."""
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(round((stop - start) / step))
            return [round(start + i * step, 12) for i in range(n + 1)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--net", help="network config (.ini) or bundled name, e.g. vgg5_cifar10")
    common.add_argument("--hw", help="hardware config with an [arch] section (default: bundled hw_default)")
    common.add_argument("--energy-table", help="energy table config (default: bundled calibration)")
    common.add_argument("--profile", help="sparsity profile JSON or bundled name")
    common.add_argument("--data", help="MNIST directory holding the four IDX files (.gz or raw)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--timesteps", type=int, help="override T from the configs")
    common.add_argument("--overhead-mode", action="store_true",
                        help="charge sparsity-handling overhead on every dense operation slot")
    common.add_argument("--spill-model", action="store_true",
                        help="add DRAM traffic for T-deep state that overflows the GLBs")
    common.add_argument("--sparse-spad", action="store_true", help="elide gated scratchpad reads")
    common.add_argument("--threads", type=int, help="cap BLAS worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="spikecost", description="SNN training cost toolkit")
    sub = ap.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="train an SNN on MNIST")
    p.add_argument("--epochs", type=int)
    p.add_argument("--limit", type=int, help="use only the first N training images")
    p.add_argument("--test-limit", type=int)

    p = sub.add_parser("profile", parents=[common], help="measure or convert a sparsity profile")
    p.add_argument("--weights", help="checkpoint written by train (default: fresh initialisation)")
    p.add_argument("--limit", type=int, default=1000)

    p = sub.add_parser("estimate", parents=[common], help="energy report for one image")
    p.add_argument("--dense", action="store_true", help="ignore sparsity (all rates 0)")

    p = sub.add_parser("compare", parents=[common], help="energy ratios against a baseline")
    p.add_argument("--baseline-profile", help="ANN or SNN profile for the baseline (default: --profile)")
    p.add_argument("--baseline-net", help="baseline network config (default: --net)")
    p.add_argument("--dense", action="store_true", help="compare with every sparsity set to 0")
    p.add_argument("--no-mask-traffic", action="store_true", help="ANN baseline without ReLU-mask traffic")

    p = sub.add_parser("sweep-t", parents=[common], help="total energy versus T")
    p.add_argument("--t-list", type=_ints, default=[1, 2, 4, 8, 16, 32, 64])

    p = sub.add_parser("sweep-du", parents=[common], help="compute energy versus dU sparsity scale")
    p.add_argument("--baseline-profile", help="ANN profile fixing the comparison level")
    p.add_argument("--scales", type=_floats, default=_floats("0.5:1.5:0.05"))

    p = sub.add_parser("crosscheck", parents=[common], help="simulated traffic against the formulas")
    p.add_argument("--trace", action="store_true", help="log every tile of the schedule")
    return ap


# ---------------------------------------------------------------- helpers

def _require(args, *names):
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            raise UsageError(f"{args.command} needs --{name}")


def _existing(path, suffix: str) -> Path:
    from .fixtures import resolve
    p = resolve(path, suffix)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return p


class Run:
    """Resolved inputs and output bookkeeping for one invocation."""

    def __init__(self, args):
        from .fixtures import DEFAULT_ENERGY, DEFAULT_HW
        self.args = args
        self.inputs: dict[str, Path] = {}
        self.outputs: list[str] = []
        self.out = Path(args.out)
        self.hw_path = _existing(args.hw, ".ini") if args.hw else DEFAULT_HW
        self.energy_path = _existing(args.energy_table, ".ini") if args.energy_table else DEFAULT_ENERGY
        self.inputs["hw"] = self.hw_path
        self.inputs["energy_table"] = self.energy_path

    def path(self, key: str, arg, suffix: str) -> Path:
        p = _existing(arg, suffix)
        self.inputs[key] = p
        return p

    def arch(self):
        from .config import load_arch
        over = {"timesteps": self.args.timesteps} if self.args.timesteps else {}
        return load_arch(self.hw_path, **over)

    def table(self):
        from .config import load_energy_table
        return load_energy_table(self.energy_path)

    def network(self, arg=None, key="net"):
        from .config import load_network
        return load_network(self.path(key, arg or self.args.net, ".ini"))

    def profile(self, arg, key="profile"):
        from .sparsity import load_profile
        return load_profile(self.path(key, arg, ".json"))

    def file(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return self.out / name

    def write_manifest(self, started: float) -> None:
        import numpy
        from .config import config_hash
        h = config_hash(*self.inputs.values())
        try:
            from importlib.metadata import version
            pkg_version = version("artifact")
        except Exception:
            pkg_version = "unknown"
        manifest = {
            "command": self.args.command,
            "argv": self.args.argv,
            "config_hash": h,
            "inputs": {k: hashlib.sha256(p.read_bytes()).hexdigest() for k, p in sorted(self.inputs.items())},
            "seed": self.args.seed,
            "flags": {"overhead_mode": self.args.overhead_mode, "spill_model": self.args.spill_model,
                      "sparse_spad": self.args.sparse_spad, "timesteps": self.args.timesteps},
            "versions": {"spikecost": pkg_version, "numpy": numpy.__version__,
                         "python": platform.python_version()},
            "outputs": sorted(set(self.outputs)),
        }
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        stamp = {"started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
                 "seconds": round(time.time() - started, 3)}
        (self.out / "timestamp.json").write_text(json.dumps(stamp) + "\n")


# ---------------------------------------------------------------- subcommands

def cmd_train(run: Run) -> None:
    import numpy as np
    from .checkpoint import save_weights
    from .config import load_lif, load_train
    from .datasets import load_mnist
    from .snn.train import Trainer, evaluate
    from .sparsity import SparsityProbe, snn_requirements, store_profile, write_profile_csv

    a = run.args
    _require(a, "net", "data")
    net_path = run.path("net", a.net, ".ini")
    over = {"rng_seed": a.seed}
    if a.timesteps:
        over["timesteps"] = a.timesteps
    if a.epochs is not None:
        over["epochs"] = a.epochs
    cfg = load_train(net_path, **over)
    p = load_lif(net_path)
    net = run.network()
    train = load_mnist(a.data, "train", limit=a.limit)
    test = load_mnist(a.data, "test", limit=a.test_limit)
    if train[0].shape[1:] != net.input_shape:
        raise SpikecostError(f"dataset images {train[0].shape[1:]} do not fit network input {net.input_shape}")
    trainer = Trainer(net, cfg, p)
    rows, timing = [], []
    for _ in range(cfg.epochs):
        probe = SparsityProbe(["inp", *net.layer_names], p)
        m = trainer.train_epoch(train, probe)
        acc = evaluate(net, trainer.weights, test, cfg, p)
        prof = probe.finalize(snn_requirements(net.layer_names), network=net.name, dataset="mnist",
                              timesteps=cfg.timesteps, epoch=m.epoch,
                              scope="per image per timestep, averaged over the epoch")
        store_profile(prof, run.file(f"profile_epoch{m.epoch}.json"))
        rows.append((m.epoch, m.loss, m.accuracy, acc, m.images))
        timing.append(m.seconds)
        print(f"epoch {m.epoch}: loss {m.loss:.4f} train acc {m.accuracy:.4f} test acc {acc:.4f} ({m.seconds:.1f}s)")
    if rows:
        store_profile(prof, run.file("profile.json"))
        write_profile_csv(prof, run.file("profile.csv"))
    with open(run.file("metrics.csv"), "w") as fh:
        fh.write("epoch,loss,train_accuracy,test_accuracy,images\n")
        for e, loss, tr_acc, te_acc, n in rows:
            fh.write(f"{e},{loss:.6f},{tr_acc:.6f},{te_acc:.6f},{n}\n")
    (run.out / "timing.json").write_text(json.dumps({"epoch_seconds": timing}) + "\n")
    save_weights(run.file("weights.snnw"), [np.asarray(w) for w in trainer.weights], net.layer_names)


def cmd_profile(run: Run) -> None:
    from .sparsity import SparsityProbe, snn_requirements, store_profile, write_profile_csv
    a = run.args
    if a.data is None:
        _require(a, "profile")
        prof = run.profile(a.profile)
        if a.net:
            prof.check_network(run.network().layer_names)
        write_profile_csv(prof, run.file("profile.csv"))
        return
    from .checkpoint import load_weights
    from .config import load_lif, load_train
    from .datasets import load_mnist
    from .snn.bptt import init_weights
    from .snn.train import measure_profile
    import numpy as np
    _require(a, "net")
    net_path = run.path("net", a.net, ".ini")
    over = {"rng_seed": a.seed, **({"timesteps": a.timesteps} if a.timesteps else {})}
    cfg = load_train(net_path, **over)
    p = load_lif(net_path)
    net = run.network()
    if a.weights:
        weights, _ = load_weights(run.path("weights", a.weights, ".snnw"))
        weights = [w.astype(np.dtype(cfg.dtype)) for w in weights]
    else:
        weights = init_weights(net, cfg.rng_seed, gain=cfg.init_gain, dtype=np.dtype(cfg.dtype))
    data = load_mnist(a.data, "test", limit=a.limit)
    probe = SparsityProbe(["inp", *net.layer_names], p)
    measure_profile(net, weights, data, cfg, p, probe)
    prof = probe.finalize(snn_requirements(net.layer_names), network=net.name, dataset="mnist",
                          timesteps=cfg.timesteps, scope="per image per timestep, one pass over the data")
    store_profile(prof, run.file("profile.json"))
    write_profile_csv(prof, run.file("profile.csv"))


def _snn_report(run: Run, net, profile, arch, table):
    from .energy import dense_profile, total_energy
    a = run.args
    if profile is not None and getattr(a, "dense", False):
        profile = dense_profile(profile)
    return total_energy(net, arch, profile, table, a.overhead_mode, sparse_spad=a.sparse_spad,
                        spill=a.spill_model)


def cmd_estimate(run: Run) -> None:
    from .counts import count_ops, write_counts_csv
    from .energy import write_breakdown_csv, write_report_csv, write_summary
    a = run.args
    _require(a, "net")
    net, arch, table = run.network(), run.arch(), run.table()
    profile = run.profile(a.profile) if a.profile else None
    if profile is not None and profile.kind != "snn":
        raise SpikecostError("estimate needs an SNN profile")
    rep = _snn_report(run, net, profile, arch, table)
    write_report_csv(rep, run.file("energy.csv"))
    write_breakdown_csv(rep, run.file("breakdown.csv"))
    prof = None if profile is None or a.dense else profile
    write_counts_csv(count_ops(net.dims(), arch, prof, a.sparse_spad, a.spill_model), run.file("counts.csv"))
    write_summary({**rep.summary(), "network": net.name, "timesteps": arch.timesteps}, run.file("summary.json"))
    print(f"total {rep.total:.6g} (compute {rep.compute:.6g}, memory {rep.memory:.6g})")


def _report_for(run: Run, net, profile, arch, table, mask_traffic=True):
    from .ann import ann_energy
    from .energy import dense_profile
    if profile is not None and profile.kind == "ann":
        if run.args.dense:
            profile = dense_profile(profile)
        return ann_energy(net.dims(), arch, profile, table, run.args.overhead_mode, mask_traffic)
    return _snn_report(run, net, profile, arch, table)


def cmd_compare(run: Run) -> None:
    import csv
    from .ann import compare_reports
    from .energy import write_summary
    a = run.args
    _require(a, "net", "profile")
    arch, table = run.arch(), run.table()
    net = run.network()
    prof = run.profile(a.profile)
    base_net = run.network(a.baseline_net, "baseline_net") if a.baseline_net else net
    base_prof = run.profile(a.baseline_profile, "baseline_profile") if a.baseline_profile else prof
    rep = _report_for(run, net, prof, arch, table)
    base = _report_for(run, base_net, base_prof, arch, table, not a.no_mask_traffic)
    ratios = compare_reports(rep, base)
    with open(run.file("ratios.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ratio", "value", "note"])
        for name, v, note in ratios.rows():
            w.writerow([name, "" if note else f"{v:.6f}", note])
    write_summary({"ratios": ratios.ratios, "errors": ratios.errors, "unit_mismatch": ratios.unit_mismatch,
                   "kind": rep.kind, "baseline_kind": base.kind}, run.file("summary.json"))
    for key in ("total", "compute", "memory"):
        if key in ratios.ratios:
            print(f"{key:8s} {ratios.ratios[key]:.4f}")


def cmd_sweep_t(run: Run) -> None:
    from .energy import sweep_timesteps, write_curve_csv
    a = run.args
    _require(a, "net")
    net, arch, table = run.network(), run.arch(), run.table()
    profile = run.profile(a.profile) if a.profile else None
    pts = sweep_timesteps(net, arch, profile, table, a.t_list, a.overhead_mode, spill=a.spill_model,
                          sparse_spad=a.sparse_spad)
    write_curve_csv(pts, run.file("sweep_t.csv"), "timesteps")


def cmd_sweep_du(run: Run) -> None:
    from .ann import ann_energy
    from .energy import sweep_grad_u_scale, write_curve_csv, write_summary
    a = run.args
    _require(a, "net", "profile", "baseline-profile")
    net, arch, table = run.network(), run.arch(), run.table()
    prof = run.profile(a.profile)
    ann_prof = run.profile(a.baseline_profile, "baseline_profile")
    if ann_prof.kind != "ann":
        raise SpikecostError("sweep-du needs an ANN baseline profile")
    ann = ann_energy(net.dims(), arch, ann_prof, table, a.overhead_mode).compute
    sw = sweep_grad_u_scale(net, arch, prof, table, a.scales, ann, a.overhead_mode)
    write_curve_csv(sw.points, run.file("sweep_du_snn.csv"), "scale")
    write_curve_csv([(s, ann) for s, _ in sw.points], run.file("sweep_du_ann.csv"), "scale")
    write_summary({"break_even_scale": sw.break_even, "ann_compute": ann}, run.file("summary.json"))
    print("break-even scale:", "none in range" if sw.break_even is None else f"{sw.break_even:.4f}")


def cmd_crosscheck(run: Run) -> None:
    from .config import load_pe_array
    from .counts import count_ops
    from .dataflow import crosscheck, simulate_network, write_crosscheck_csv, write_trace_csv
    a = run.args
    _require(a, "net")
    net, arch = run.network(), run.arch()
    pe = load_pe_array(run.hw_path)
    strides = {layer.name: (layer.stride, layer.pad) for layer in net.weighted if hasattr(layer, "stride")}
    trace = simulate_network(net.dims(), pe, arch.timesteps, strides=strides,
                             log=log.info if a.trace else None)
    rows = crosscheck(trace, count_ops(net.dims(), arch))
    write_trace_csv(trace, run.file("trace.csv"))
    write_crosscheck_csv(rows, run.file("crosscheck.csv"))
    bad = [r for r in rows if r.flag == "expected-exact" and r.delta != 0]
    for r in bad:
        print(f"mismatch {r.layer}/{r.stage}/{r.buffer}: simulated {r.simulated:.0f} vs {r.analytic:.0f}")
    print(f"{len(rows)} fields compared, {len(bad)} expected-exact mismatches")


COMMANDS = {"train": cmd_train, "profile": cmd_profile, "estimate": cmd_estimate, "compare": cmd_compare,
            "sweep-t": cmd_sweep_t, "sweep-du": cmd_sweep_du, "crosscheck": cmd_crosscheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        args = parser.parse_args(argv)
        args.argv = argv
        if args.command is None:
            raise UsageError("a subcommand is required")
        if args.timesteps is not None and args.timesteps < 1:
            raise UsageError("--timesteps must be >= 1")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose or getattr(args, "trace", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        run = Run(args)
        COMMANDS[args.command](run)
        run.write_manifest(started)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CapacityError, SpikecostError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, IsADirectoryError, PermissionError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
