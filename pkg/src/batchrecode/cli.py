"""Command-line front end.

Every subcommand reads one JSON config (``--config``), validates it fully,
computes, and writes CSV or JSON to ``--out`` (atomically) or stdout.
Failures print ``<ErrorName>: message`` on stderr; bad input exits with
status 2, other failures with 1.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import loss, optimizer, sim
from .errors import ConfigError, RecodingError
from .expected_rank import build_table, check_distribution, default_horizon, propagate_rank_dist
from .rank import field_size

COMMANDS = ("ert", "solve", "tune", "dual", "certify", "propagate", "simulate", "sweep")
DEFAULT_FORMAT = {"ert": "csv", "propagate": "csv", "simulate": "csv", "sweep": "csv"}
SWEEP_BATCHES = 10_000


# ---- output -----------------------------------------------------------------

def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj, indent: int = 0) -> str:
    """JSON with every float at 17 significant digits and inf as "inf"."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if any(isinstance(v, dict) for v in obj):
            vals = [inner + dumps(v, indent + 1) for v in obj]
            return "[\n" + ",\n".join(vals) + "\n" + pad + "]"
        return "[" + ", ".join(dumps(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if obj is None:
        return "null"
    return json.dumps(obj)


def write_atomic(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_num(v).strip('"') if isinstance(v, (float, np.floating)) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"


# ---- config -----------------------------------------------------------------

@dataclass
class RunConfig:
    raw: dict
    channel: object
    q: object
    M: int
    t_avg: float
    h: np.ndarray
    solver: str
    t_max: int
    seed: int

    def table(self, channel=None):
        return build_table(channel or self.channel, self.q, self.M, self.t_max)


def _require(raw, key):
    if key not in raw:
        raise ConfigError(f"config is missing {key!r}")
    return raw[key]


def parse_config(raw: dict, seed: Optional[int] = None, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    channel = loss.from_config(_require(raw, "channel"))
    q = field_size(raw.get("q", "inf"))
    M = raw.get("M")
    if not isinstance(M, int) or isinstance(M, bool) or M < 1:
        raise ConfigError("M must be a positive integer")
    t_avg = float(raw.get("t_avg", 0.0))
    if not t_avg >= 0 or math.isinf(t_avg):
        raise ConfigError("t_avg must be a finite non-negative number")
    h_raw = raw.get("h", "source")
    if h_raw == "source":
        h = np.zeros(M + 1)
        h[M] = 1.0
    else:
        h = check_distribution(h_raw, M)
    solver = raw.get("solver", "greedy")
    if solver not in ("greedy", "dual", "tune"):
        raise ConfigError(f"unknown solver {solver!r}")
    t_max = raw.get("t_max")
    if t_max is None:
        t_max = default_horizon(M, h, t_avg)
    if not isinstance(t_max, int) or t_max < 1:
        raise ConfigError("t_max must be a positive integer")
    s = seed if seed is not None else raw.get("seed", 0)
    if not isinstance(s, int) or s < 0:
        raise ConfigError("seed must be a non-negative integer")
    if "policy_file" in raw and "policy" not in raw:
        raw = dict(raw)
        path = Path(raw["policy_file"])
        path = path if path.is_absolute() else base_dir / path
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read policy file: {exc}") from None
        raw["policy"] = doc["t"] if isinstance(doc, dict) else doc
    return RunConfig(raw, channel, q, M, t_avg, h, solver, t_max, s)


def _policy(cfg: RunConfig) -> np.ndarray:
    p = _require(cfg.raw, "policy")
    try:
        t = np.asarray(p, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("policy must be a list of numbers") from None
    if t.shape != (cfg.M + 1,) or np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ConfigError(f"policy must have {cfg.M + 1} non-negative entries")
    return t


def _solve(cfg: RunConfig, table, solver=None):
    solver = solver or cfg.solver
    if solver == "dual":
        return optimizer.solve_dual(table, cfg.h, cfg.t_avg)
    if solver == "tune":
        return optimizer.retune(table, cfg.h, cfg.t_avg, _policy(cfg))
    return optimizer.solve_greedy(table, cfg.h, cfg.t_avg)


# ---- commands ---------------------------------------------------------------

def cmd_ert(cfg, fmt):
    table = cfg.table()
    if fmt == "json":
        return dumps({"M": cfg.M, "t_max": cfg.t_max, "E": table.E.tolist()}) + "\n"
    return table.to_csv()


def _outcome_text(out, fmt):
    d = out.to_dict()
    if fmt == "csv":
        header = ["objective", "lambda_lo", "lambda_hi", "feasible", "ads", "preferred", "iterations"]
        header += [f"t{r}" for r in range(len(d["t"]))]
        f = d["flags"]
        row = [d["objective"], d["lambda_lo"], d["lambda_hi"], str(f["feasible"]).lower(),
               str(f["ads"]).lower(), str(f["preferred"]).lower(), d["iterations"], *d["t"]]
        return _csv(header, [row])
    return dumps(d) + "\n"


def cmd_solve(cfg, fmt):
    return _outcome_text(_solve(cfg, cfg.table()), fmt)


def cmd_dual(cfg, fmt):
    return _outcome_text(_solve(cfg, cfg.table(), "dual"), fmt)


def cmd_tune(cfg, fmt):
    return _outcome_text(_solve(cfg, cfg.table(), "tune"), fmt)


def cmd_certify(cfg, fmt):
    t = _policy(cfg)
    t_avg = cfg.raw.get("t_avg")
    cert = optimizer.certify(cfg.table(), cfg.h, t, None if t_avg is None else float(t_avg))
    if fmt == "csv":
        return _csv(["feasible", "ads", "preferred", "diagnosis"],
                    [[str(cert.feasible).lower(), str(cert.ads).lower(),
                      str(cert.preferred).lower(), '"' + "; ".join(cert.diagnosis) + '"']])
    return dumps(cert.to_dict()) + "\n"


def cmd_propagate(cfg, fmt):
    t = _policy(cfg) if "policy" in cfg.raw else _solve(cfg, cfg.table()).policy
    dist = propagate_rank_dist(cfg.channel, cfg.q, cfg.M, cfg.h, t)
    if fmt == "json":
        return dumps({"t": t, "dist": dist, "mean_rank": float(dist @ np.arange(cfg.M + 1))}) + "\n"
    return _csv(["rank", "prob"], [[r, float(p)] for r, p in enumerate(dist)])


def _experiment(cfg: RunConfig, num_batches=None, hops_raw=None):
    exp = cfg.raw.get("experiment", {})
    hops_raw = hops_raw or exp.get("hops") or [{"mode": "adaptive"}]
    n = int(num_batches or exp.get("num_batches", cfg.raw.get("num_batches", 10_000)))
    if n < 1:
        raise ConfigError("num_batches must be at least 1")
    hops = []
    for k, hop in enumerate(hops_raw):
        ch = loss.from_config(hop["channel"]) if "channel" in hop else cfg.channel
        mode = hop.get("mode", "adaptive")
        if mode == "baseline":
            hops.append(sim.HopSpec(ch, sim.Baseline(float(hop.get("t", cfg.t_avg)))))
        elif mode == "adaptive":
            if "policy" in hop:
                pol = hop["policy"]
            else:
                pol = _solve(cfg, cfg.table(ch)).policy
            hops.append(sim.HopSpec(ch, sim.Adaptive(tuple(pol))))
        else:
            raise ConfigError(f"hop {k}: mode must be 'baseline' or 'adaptive'")
    source = exp.get("source", "h")
    if source == "h":
        batches = sim.BatchStack.from_distribution(cfg.h, n, cfg.M, cfg.q)
    elif source == "full":
        batches = sim.BatchStack.source(n, cfg.M, cfg.q)
    else:
        raise ConfigError("experiment source must be 'h' or 'full'")
    return sim.run_experiment(hops, cfg.M, cfg.q, n, cfg.seed, source=batches)


def cmd_simulate(cfg, fmt, out_path=None):
    result = _experiment(cfg)
    if fmt == "json":
        return dumps({"hops": [{"dist": s.dist, "mean_rank": s.mean_rank, "std_err": s.std_err,
                                "packets_per_batch": s.packets_per_batch} for s in result.hops]}) + "\n"
    if out_path is not None:
        p = Path(out_path)
        write_atomic(str(p.with_name(p.stem + "_summary" + p.suffix)), result.summary_csv())
        return result.dist_csv()
    return result.dist_csv() + "\n" + result.summary_csv()


def cmd_sweep(cfg, fmt):
    sw = _require(cfg.raw, "sweep")
    param, values = _require(sw, "param"), _require(sw, "values")
    n = int(sw.get("num_batches", SWEEP_BATCHES))
    rows = []
    for v in values:
        raw = copy.deepcopy(cfg.raw)
        if param in raw["channel"] and param != "type":
            raw["channel"][param] = v
        else:
            raw[param] = v
        sub = parse_config(raw, cfg.seed)
        table = sub.table()
        out = _solve(sub, table)
        baseline = sum(sub.h[r] * table.eval(r, min(sub.t_avg, table.t_max)) for r in range(sub.M + 1))
        hop = [{"mode": "adaptive", "policy": list(out.policy)}]
        mean = _experiment(sub, n, hop).hops[-1].mean_rank
        rows.append([param, v, out.objective, float(baseline), mean])
    if fmt == "json":
        keys = ["param", "value", "objective", "baseline_objective", "mean_rank"]
        return dumps([dict(zip(keys, r)) for r in rows]) + "\n"
    return _csv(["param", "value", "objective", "baseline_objective", "mean_rank"],
                [[r[0], float(r[1]) if not isinstance(r[1], str) else r[1], *r[2:]] for r in rows])


HANDLERS = {"ert": cmd_ert, "solve": cmd_solve, "tune": cmd_tune, "dual": cmd_dual,
            "certify": cmd_certify, "propagate": cmd_propagate, "simulate": cmd_simulate,
            "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="batchrecode",
                                     description="Adaptive recoding for batched network coding")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--format", choices=("csv", "json"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fmt = args.format or DEFAULT_FORMAT.get(args.command, "json")
    try:
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        cfg = parse_config(raw, args.seed, path.parent)
        if args.command == "simulate":
            text = cmd_simulate(cfg, fmt, args.out)
        else:
            text = HANDLERS[args.command](cfg, fmt)
        write_atomic(args.out, text)
    except (RecodingError, ValueError, KeyError, TypeError) as exc:
        name = type(exc).__name__
        if isinstance(exc, (KeyError, TypeError)):
            name = "ConfigError"
        print(f"{name}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, (ValueError, KeyError, TypeError)) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
