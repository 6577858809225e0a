"""Command line: ``run``, ``comm-report`` and ``compare``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import rngs
from .beaver import PreprocessingExhausted
from .config import ConfigError, ExperimentConfig, load
from .discriminator import from_config
from .flsim.training import build_environment, run_training
from .protocol import build_session

log = logging.getLogger("itsecagg")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORTS = 0, 1, 2, 3


class MissingInput(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory (default: config 'out')")
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="itsecagg", description=__doc__, parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="train one configuration")
    p.add_argument("config")
    p = sub.add_parser("comm-report", parents=[common], help="bytes per party against n")
    p.add_argument("config")
    p.add_argument("--sweep-n", required=True, help="comma-separated client counts, e.g. 8,16,32,64")
    p = sub.add_parser("compare", parents=[common], help="accuracy table over a directory of configs")
    p.add_argument("config_dir")
    p.add_argument("--repeats", type=int, default=1, help="seeds per cell")
    return ap


def _load(path: str, args) -> ExperimentConfig:
    if not Path(path).is_file():
        raise MissingInput(path)
    return load(path, seed=args.seed, out=args.out)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def cmd_run(cfg: ExperimentConfig) -> int:
    res = run_training(cfg)
    out = res.write(cfg.out)
    summ = res.summary()
    print(f"{summ['run_id']}: accuracy {summ['final_accuracy']}, aborted rounds {summ['aborted_rounds']}, wrote {out}")
    if summ["aborted_rounds"] == len(res.rows):
        print("every round aborted", file=sys.stderr)
        return EXIT_ABORTS
    return EXIT_OK


# ---------------------------------------------------------------------------
# communication report
# ---------------------------------------------------------------------------


def comm_point(cfg: ExperimentConfig, n: int, d: int) -> dict:
    """Bytes of one secure round with ``n`` clients and dimension ``d``."""
    h = from_config(cfg.h_coeffs, cfg.coeff_scale)
    session = build_session(n, cfg.t, d, cfg.q, cfg.eps, h, 1, cfg.seed)
    rng = rngs.stream(cfg.seed, "comm", n)
    u0 = rng.normal(size=d)
    updates = {i: u0 + 0.5 * rng.normal(size=d) for i in range(1, n + 1)}
    res = session.run_round(0, np.zeros(d), updates, u0)
    tr = res.transcript
    return {
        "n": n,
        "d": d,
        "width": session.width,
        "client_bytes": float(np.mean([tr.bytes_of(i) for i in range(1, n + 1)])),
        "federator_bytes": tr.bytes_of(0),
        "messages": len(tr.messages),
        "aborted": res.aborted or "",
    }


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def comm_report(cfg: ExperimentConfig, ns: list[int], d: int | None = None) -> dict:
    if d is None:
        d = build_environment(cfg).model.dim
    rows = [comm_point(cfg, n, d) for n in ns]
    return {
        "rows": rows,
        "client_slope": loglog_slope(ns, [r["client_bytes"] for r in rows]),
        "federator_slope": loglog_slope(ns, [r["federator_bytes"] for r in rows]),
    }


def cmd_comm(cfg: ExperimentConfig, sweep: str) -> int:
    try:
        ns = [int(x) for x in sweep.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("--sweep-n: expected comma-separated integers")
    if len(ns) < 2 or any(n < cfg.t + 1 for n in ns):
        raise ConfigError(f"--sweep-n: need at least two values, each >= t+1 = {cfg.t + 1}")
    rep = comm_report(cfg, ns)
    out = Path(cfg.out) / f"{cfg.name}-comm"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comm.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rep["rows"][0]))
        wr.writeheader()
        wr.writerows(rep["rows"])
    with open(out / "comm.json", "w") as fh:
        json.dump(rep, fh, indent=1)
    print(f"{'n':>5} {'client bytes':>14} {'federator bytes':>16}")
    for r in rep["rows"]:
        print(f"{r['n']:>5} {r['client_bytes']:>14.0f} {r['federator_bytes']:>16}")
    print(f"log-log slope: client {rep['client_slope']:.3f}, federator {rep['federator_slope']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def compare(configs: list[ExperimentConfig], repeats: int = 1) -> dict:
    """Final accuracy (and ASR for scaling attacks) per attack x aggregator,
    mean and std over ``repeats`` seeds starting at each config's seed."""
    cells: dict[tuple[str, str], list[tuple[float, float | None]]] = {}
    for cfg in configs:
        for r in range(repeats):
            res = run_training(replace(cfg, seed=cfg.seed + r))
            s = res.summary()
            cells.setdefault((cfg.attack.kind, cfg.aggregator), []).append((s["final_accuracy"], s["final_asr"]))
    attacks = sorted({a for a, _ in cells})
    aggs = sorted({g for _, g in cells})
    table = {}
    for (a, g), vals in cells.items():
        acc = np.array([v[0] for v in vals], dtype=float)
        entry = {"acc_mean": float(acc.mean()), "acc_std": float(acc.std()), "runs": len(vals)}
        asr = [v[1] for v in vals if v[1] is not None]
        if asr:
            entry.update(asr_mean=float(np.mean(asr)), asr_std=float(np.std(asr)))
        table.setdefault(a, {})[g] = entry
    return {"attacks": attacks, "aggregators": aggs, "table": table}


def format_table(rep: dict) -> str:
    aggs = rep["aggregators"]
    lines = ["attack".ljust(12) + "".join(g.rjust(26) for g in aggs)]
    for a in rep["attacks"]:
        cells = []
        for g in aggs:
            e = rep["table"][a].get(g)
            if e is None:
                cells.append("-".rjust(26))
                continue
            txt = f"{e['acc_mean']:.3f}±{e['acc_std']:.3f}"
            if "asr_mean" in e:
                txt += f"/{e['asr_mean']:.3f}"
            cells.append(txt.rjust(26))
        lines.append(a.ljust(12) + "".join(cells))
    return "\n".join(lines)


def cmd_compare(directory: str, args) -> int:
    d = Path(directory)
    if not d.is_dir():
        raise MissingInput(directory)
    paths = sorted(list(d.glob("*.yaml")) + list(d.glob("*.yml")))
    if not paths:
        raise ConfigError(f"{directory}: no .yaml configs")
    configs = [load(p, seed=args.seed, out=args.out) for p in paths]
    rep = compare(configs, args.repeats)
    out = Path(configs[0].out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.json", "w") as fh:
        json.dump(rep, fh, indent=1, sort_keys=True)
    print(format_table(rep))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    ap = _parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            return cmd_run(_load(args.config, args))
        if args.command == "comm-report":
            return cmd_comm(_load(args.config, args), args.sweep_n)
        return cmd_compare(args.config_dir, args)
    except MissingInput as exc:
        ap.print_usage(sys.stderr)
        print(f"itsecagg: no such file or directory: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"itsecagg: invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"itsecagg: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except PreprocessingExhausted as exc:
        print(f"itsecagg: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
