"""
Command-line entry point.

    sinelowrank spectrum     singular spectra of phi(omega U V^T)
    sinelowrank heatmap      |entries| of full-rank, U V^T and sin(omega U V^T) as PGM
    sinelowrank verify       randomized check of the rank / norm bounds
    sinelowrank find-omega0  smallest grid frequency that lifts the rank
    sinelowrank train        fit a coordinate network, optionally plain vs sine
    sinelowrank replay       re-run a command from its run.json

Every command writes ``run.json`` into its output directory.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EmptyGrid, NonFiniteLoss, SineLowRankError
from .linalg import FUNCTION_KINDS, elementwise_map, spectrum_report
from .lowrank import InitScheme, init_layer
from .seeding import DEFAULT_SEED, child_seed
from .tasks import to_uint8_minmax, to_uint8_unit, write_pgm, write_voxels
from .theory import (
    compare_csv,
    default_omega_grid,
    find_omega0,
    random_trial_matrix,
    theorem_factors,
    verify_bounds,
)


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _names(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _fmt(x):
    """Compact, filename-safe rendering of a frequency."""
    return f"{x:g}".replace("+", "")


class Outputs:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.paths = []

    def text(self, name, content):
        path = self.root / name
        path.write_text(content)
        self.paths.append(str(path))
        return path

    def json(self, name, obj):
        return self.text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def pgm(self, name, img):
        path = self.root / name
        write_pgm(path, img)
        self.paths.append(str(path))
        return path

    def add(self, path):
        self.paths.append(str(path))


def _argv_from_namespace(parser_for_cmd, ns):
    argv = []
    for action in parser_for_cmd._actions:
        if not action.option_strings or action.dest in ("help", "out"):
            continue
        value = getattr(ns, action.dest, None)
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif value is not None:
            argv += [flag, str(value)]
    return argv


def write_manifest(out: Outputs, command, ns, sub, seed, started, extra=None):
    manifest = {
        "command": command,
        "flags": {k: v for k, v in vars(ns).items() if k not in ("func",)},
        "argv": [command] + _argv_from_namespace(sub, ns),
        "seed": seed,
        "version": __version__,
        "outputs": sorted(set(out.paths)),
        "wall_clock_seconds": time.perf_counter() - started,
    }
    if extra:
        manifest.update(extra)
    path = out.root / "run.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return manifest


# --------------------------------------------------------------------------
# spectrum
# --------------------------------------------------------------------------


def cmd_spectrum(ns, out: Outputs):
    fns = _names(ns.fns)
    for fn in fns:
        if fn not in FUNCTION_KINDS:
            raise SineLowRankError(f"unknown function {fn!r}")
    omegas = _floats(ns.omega_list)
    layer = init_layer(ns.m, ns.n, ns.k, InitScheme("kaiming_uniform", "rows", ns.seed),
                       mode="plain")
    prod = layer.u @ layer.v.T
    rng = np.random.default_rng(child_seed(ns.seed, "full_rank"))
    bound = math.sqrt(6.0 / ns.n)
    full = rng.uniform(-bound, bound, (ns.m, ns.n))

    summary = {"m": ns.m, "n": ns.n, "k": ns.k, "seed": ns.seed, "spectra": {}}

    def emit(label, omega, rep):
        name = f"spectrum_{label}.csv" if omega is None else f"spectrum_{label}_w{_fmt(omega)}.csv"
        out.text(name, rep.normalized_csv())
        summary["spectra"].setdefault(label, {})["-" if omega is None else _fmt(omega)] = {
            "omega": omega, "stable_rank": rep.stable_rank,
            "numerical_rank": rep.numerical_rank, "sigma_max": rep.operator_norm,
            "file": name}
        return rep

    emit("full_rank", None, spectrum_report(full))
    base = emit("identity", None, spectrum_report(prod))
    table = {"identity": {1.0: base}}
    for fn in fns:
        if fn == "identity":
            continue
        table[fn] = {}
        for w in omegas:
            table[fn][w] = emit(fn, w, spectrum_report(elementwise_map(prod, fn, w)))
    out.text("spectrum_compare.csv", compare_csv(table, 1.0))

    if "sine" in table and omegas:
        tuned = max(omegas, key=lambda w: table["sine"][w].stable_rank or 0.0)
        at_tuned = {fn: (table[fn][tuned] if fn != "identity" else base).stable_rank
                    for fn in table}
        others = [v for fn, v in at_tuned.items() if fn != "sine"]
        summary["tuned_omega"] = tuned
        summary["stable_rank_at_tuned"] = at_tuned
        summary["sine_dominates_at_tuned"] = bool(all(at_tuned["sine"] > (v or 0.0) for v in others))
    out.json("spectrum_summary.json", summary)
    return 0, {}


# --------------------------------------------------------------------------
# heatmap
# --------------------------------------------------------------------------


def cmd_heatmap(ns, out: Outputs):
    omegas = _floats(ns.omega)
    u, v = theorem_factors(ns.m, ns.n, ns.k, float(max(ns.m, ns.n)), ns.seed)
    prod = u @ v.T
    rng = np.random.default_rng(child_seed(ns.seed, "full_rank"))
    bound = math.sqrt(6.0 / ns.n)
    full = rng.uniform(-bound, bound, (ns.m, ns.n))
    ranks = {}

    def emit(label, mat):
        out.pgm(f"heatmap_{label}.pgm", to_uint8_minmax(np.abs(mat)))
        rep = spectrum_report(mat)
        ranks[label] = {"numerical_rank": rep.numerical_rank, "stable_rank": rep.stable_rank}

    emit("full_rank", full)
    emit("lowrank", prod)
    for w in omegas:
        emit(f"sine_w{_fmt(w)}", np.sin(w * prod))
    out.json("heatmap_ranks.json", {"m": ns.m, "n": ns.n, "k": ns.k, "seed": ns.seed,
                                    "omegas": omegas, "ranks": ranks})
    return 0, {"ranks": ranks}


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------


def cmd_verify(ns, out: Outputs):
    if ns.trials < 1:
        raise SineLowRankError("--trials must be at least 1")
    matrices = None
    if ns.inject_zero:
        rng = np.random.default_rng(child_seed(ns.seed, "inject"))

        def gen():
            yield np.zeros((8, 8))
            while True:
                yield random_trial_matrix(rng)[1]

        matrices = gen()
    result = verify_bounds(ns.trials, seed=ns.seed, matrices=matrices)
    out.json("verify.json", result)
    rows = ["bound,checked,passed,failed,skipped,worst_relative_margin"]
    for name, t in result["bounds"].items():
        rows.append(f"{name},{t['checked']},{t['passed']},{t['failed']},{t['skipped']},"
                    f"{t['worst_margin']!r}")
    out.text("verify.csv", "\n".join(rows) + "\n")
    for name, t in result["bounds"].items():
        print(f"{name:18s} checked={t['checked']:6d} passed={t['passed']:6d} "
              f"failed={t['failed']:4d} skipped={t['skipped']:5d} worst={t['worst_margin']}")
    return (0 if result["all_passed"] else 1), {"all_passed": result["all_passed"]}


# --------------------------------------------------------------------------
# find-omega0
# --------------------------------------------------------------------------


def _grid(text):
    """``lo:hi:num`` (geometric) or a comma-separated list."""
    if ":" in text:
        lo, hi, num = text.split(":")
        return default_omega_grid(float(lo), float(hi), int(num))
    return np.array(_floats(text))


def cmd_find_omega0(ns, out: Outputs):
    grid = _grid(ns.grid)
    if grid.size == 0:
        raise EmptyGrid("omega grid is empty")
    big_n = ns.n_bound if ns.n_bound is not None else float(max(ns.m, ns.n))
    u, v = theorem_factors(ns.m, ns.n, ns.k, big_n, ns.seed, ns.dist)
    res = find_omega0(u, v, grid)
    out.json("omega0.json", {"m": ns.m, "n": ns.n, "k": ns.k, "N": big_n, "dist": ns.dist,
                             **res.to_dict()})
    print(f"base_rank={res.base_rank} omega0={res.omega0}")
    return 0, {"omega0": res.omega0, "base_rank": res.base_rank}


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------


def cmd_train(ns, out: Outputs):
    from dataclasses import replace

    from .experiments import IMAGE, OCCUPANCY, default_omega, make_dataset, run_variant, paired_compare
    from .nn import forward_model

    protocol = OCCUPANCY if ns.task == "occupancy" else IMAGE
    widths = tuple(int(w) for w in _names(ns.layers))
    protocol = replace(protocol, widths=widths,
                       gaussian_width=ns.gaussian_width or protocol.gaussian_width,
                       activation=ns.activation or protocol.activation)
    cfg = protocol.config
    cfg = replace(cfg, epochs=ns.epochs, learning_rate=ns.lr,
                  batch_size=ns.batch_size or cfg.batch_size,
                  optimizer=ns.optimizer or cfg.optimizer,
                  schedule=ns.schedule or cfg.schedule)
    if ns.samples_per_epoch is not None:
        cfg = replace(cfg, samples_per_epoch=ns.samples_per_epoch or None)
    dataset = make_dataset(ns.task, ns.grid, ns.shape, ns.pattern, ns.pgm)
    k = ns.k
    omega = ns.omega if ns.omega is not None else default_omega(k)
    seeds = [ns.seed + i for i in range(ns.seeds)]

    def save(variant, seed, model, hist):
        tag = f"{variant}_seed{seed}"
        out.text(f"loss_{tag}.csv", hist.loss_csv())
        out.json(f"metrics_{tag}.json", hist.summary())
        pred = forward_model(model, dataset.inputs)
        if dataset.task_kind == "image_fit":
            out.pgm(f"pred_{tag}.pgm", to_uint8_unit(pred.reshape(dataset.grid_shape)))
        else:
            raw = out.root / f"pred_{tag}.f64"
            side = write_voxels(raw, pred, dataset.grid_shape, threshold=0.5)
            out.add(raw)
            out.add(side)

    try:
        if ns.compare:
            summary = paired_compare(dataset, protocol, k, seeds, omega=omega, config=cfg,
                                     with_dense=ns.with_dense, on_run=save)
            summary["task"] = ns.task
            out.json("summary.json", summary)
            m = summary["metric"]
            print(f"{m}: plain={summary['variants']['plain']['mean']:.4f} "
                  f"sine={summary['variants']['sine']['mean']:.4f} "
                  f"delta={summary['delta_mean']:+.4f}")
            return 0, {"delta_mean": summary["delta_mean"]}
        results = {}
        for seed in seeds:
            model, hist = run_variant(dataset, protocol, ns.mode,
                                      None if ns.mode == "dense" else k,
                                      omega if ns.mode == "sine" else None, seed, cfg)
            save(ns.mode, seed, model, hist)
            results[str(seed)] = hist.summary()
        out.json("summary.json", {"task": ns.task, "mode": ns.mode, "k": k,
                                  "omega": omega if ns.mode == "sine" else None,
                                  "runs": results})
        return 0, {}
    except NonFiniteLoss as exc:
        if exc.history is not None:
            out.text("loss_partial.csv", exc.history.loss_csv())
        print(f"error: {exc}", file=sys.stderr)
        return 3, {"error": str(exc)}


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="sinelowrank", description=__doc__.split("\n")[1])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", help="singular spectra of phi(omega U V^T)")
    s.add_argument("--m", type=int, default=256)
    s.add_argument("--n", type=int, default=256)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--omega-list", default="1,10,100,1000,10000")
    s.add_argument("--fns", default="sine,relu,sigmoid,tanh,identity")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--out", default="out/spectrum")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("heatmap", help="weight-magnitude heatmaps as PGM")
    s.add_argument("--m", type=int, default=128)
    s.add_argument("--n", type=int, default=128)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--omega", default="100,2000", help="one or more comma-separated frequencies")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--out", default="out/heatmap")
    s.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("verify", help="randomized bound verification")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--inject-zero", action="store_true",
                   help="make the first trial a zero matrix (reported as skipped)")
    s.add_argument("--out", default="out/verify")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("find-omega0", help="rank-lift witness search")
    s.add_argument("--m", type=int, default=128)
    s.add_argument("--n", type=int, default=128)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--grid", default="1:1e6:40", help="lo:hi:num (geometric) or a comma list")
    s.add_argument("--n-bound", type=float, default=None, help="N of U(-1/N, 1/N); default max(m, n)")
    s.add_argument("--dist", default="uniform",
                   choices=["uniform", "normal_var_n", "normal_var_inv_n2"])
    s.add_argument("--out", default="out/omega0")
    s.set_defaults(func=cmd_find_omega0)

    s = sub.add_parser("train", help="fit a coordinate network")
    s.add_argument("--task", choices=["occupancy", "image"], default="occupancy")
    s.add_argument("--shape", choices=["sphere", "torus"], default="sphere")
    s.add_argument("--pattern", choices=["gradient", "checker", "radial"], default="checker")
    s.add_argument("--pgm", default=None, help="grayscale PGM to fit instead of a pattern")
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--layers", default="256,256,256",
                   help="hidden widths; consecutive widths form the low-rank layers")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--omega", type=float, default=None, help="default: per-rank table")
    s.add_argument("--mode", choices=["dense", "plain", "sine"], default="sine")
    s.add_argument("--epochs", type=int, default=200)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=None)
    s.add_argument("--samples-per-epoch", type=int, default=None,
                   help="points visited per epoch (0 = full pass)")
    s.add_argument("--optimizer", choices=["adam", "sgd"], default=None)
    s.add_argument("--schedule", choices=["constant", "linear"], default=None)
    s.add_argument("--activation", choices=["gaussian", "relu", "sine_act", "none"], default=None)
    s.add_argument("--gaussian-width", type=float, default=None)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    s.add_argument("--compare", action="store_true", help="run plain and sine from the same seed")
    s.add_argument("--with-dense", action="store_true", help="add a dense baseline to --compare")
    s.add_argument("--out", default="out/train")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("replay", help="re-run a command from its run.json")
    s.add_argument("manifest")
    s.add_argument("--out", default=None, help="output directory (default: the manifest's)")
    s.set_defaults(func=None)
    return p, sub


def _subparser(sub, name):
    return sub.choices[name]


def run(argv=None) -> int:
    parser, sub = build_parser()
    ns = parser.parse_args(argv)
    if ns.command == "replay":
        manifest = json.loads(Path(ns.manifest).read_text())
        out_dir = ns.out or manifest["flags"].get("out")
        return run(list(manifest["argv"]) + ["--out", str(out_dir)])
    started = time.perf_counter()
    out = Outputs(ns.out)
    try:
        code, extra = ns.func(ns, out)
    except (SineLowRankError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code, extra = 2, {"error": str(exc)}
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    write_manifest(out, ns.command, ns, _subparser(sub, ns.command),
                   getattr(ns, "seed", None), started, {"exit_code": code, **extra})
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
