"""Command-line interface.

``stmatch <command> --config PATH [--tol F] [--seed N] [--out DIR] [--format csv|json]``

Exit codes: 0 success, 1 input error, 2 solver did not converge, 3 the joint
policy lost to a benchmark in ``compare``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .allocation import AllocationError, solve_capacity_allocation
from .analytic import HotellingParams, hotelling_homogeneous, hotelling_uniform
from .domain import Scenario, ScenarioError, read_config, scenario_from_dict
from .linear import AssumptionError, solve_linear
from .oracle import OracleFailure, OracleSizeError, discretize, solve_lp
from .partition import PlanInconsistencyError, extract_plan
from .policies import POLICY_NAMES, compare_policies
from .pricing import (
    DegenerateTieError,
    SlotBoundError,
    scenario_prices,
    scenario_slots,
    verify_envy_free,
)
from .scenarios import GeneratorSpec, generate, hotelling_uniform_scenario
from .solver import SolveOptions, solve_stbd

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_DOMINANCE = 0, 1, 2, 3


class InputError(Exception):
    """Bad command-line input or config; mapped to exit code 1."""


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _dumps(obj: Any) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n").encode("utf-8")


def _csv_bytes(header: Sequence[str], rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue().encode("utf-8")


class Writer:
    """Atomic file writer that records a checksum for every artifact."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, data: bytes) -> None:
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.out)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, self.out / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.files[name] = hashlib.sha256(data).hexdigest()

    def manifest(self, args: argparse.Namespace, config_sha: str | None) -> None:
        doc = {
            "command": args.command,
            "config": None if args.config is None else str(args.config),
            "config_sha256": config_sha,
            "seed": args.seed,
            "tol": args.tol,
            "format": args.format,
            "out": str(args.out),
            "version": __version__,
            "files": dict(sorted(self.files.items())),
        }
        data = _dumps(doc)
        fd, tmp = tempfile.mkstemp(prefix=".manifest.json.", dir=self.out)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, self.out / "manifest.json")


# ---------------------------------------------------------------------------
# Scenario loading
# ---------------------------------------------------------------------------


def _load(args: argparse.Namespace) -> tuple[Scenario, str]:
    """Scenario and the checksum identifying its inputs."""
    if getattr(args, "generate", False):
        if args.config is not None:
            cfg = read_config(args.config)
            gen = dict(cfg.get("generator", {}))
        else:
            gen = {}
        gen.setdefault("seed", args.seed)
        spec = GeneratorSpec.from_dict(gen)
        sha = hashlib.sha256(_dumps({"generator": spec.to_dict()})).hexdigest()
        return generate(spec), sha
    if args.config is None:
        raise InputError("--config is required (or --generate)")
    path = Path(args.config)
    cfg = read_config(path)
    try:
        sc = scenario_from_dict(cfg, path.parent)
    except (KeyError, TypeError, IndexError) as exc:
        raise InputError(f"malformed config {path}: {exc!r}") from exc
    return sc, hashlib.sha256(path.read_bytes()).hexdigest()


def _options(args: argparse.Namespace) -> SolveOptions:
    opts = SolveOptions(tol=args.tol)
    if getattr(args, "max_iter", None) is not None:
        opts.max_iter = args.max_iter
        opts.stage_max_iter = min(opts.stage_max_iter, args.max_iter)
    return opts


def _weights(args: argparse.Namespace, sc: Scenario, sha: str) -> np.ndarray:
    """Weights from a saved plan (checked against the config checksum) or a fresh solve."""
    if args.weights is not None:
        doc = json.loads(Path(args.weights).read_text(encoding="utf-8"))
        if doc.get("config_sha256") != sha:
            raise InputError("checksum mismatch: the saved weights were computed for a different config")
        eta = np.asarray(doc["eta"], dtype=float)
        if eta.shape != (sc.n_stations, sc.n_types):
            raise InputError("saved weights have the wrong shape for this scenario")
        return eta
    eta, _ = solve_stbd(sc, _options(args))
    return eta


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_solve(args: argparse.Namespace) -> int:
    sc, sha = _load(args)
    opts = _options(args)
    if args.linear:
        eta, plan = solve_linear(sc, opts)
        report = plan.meta["report"]
    else:
        eta, report = solve_stbd(sc, opts)
        plan = extract_plan(sc, eta, report.final_eps, opts.tol, check=False)
    w = Writer(Path(args.out))
    cells = sc.grid.centers
    rows = [(k, cells[k, 0], cells[k, 1], j, int(plan.spatial.labels[j, k]))
            for j in range(sc.n_types) for k in range(sc.grid.n_cells)]
    if args.format == "csv":
        w.write("labels.csv", _csv_bytes(["cell", "x", "y", "type", "label"], rows))
    else:
        w.write("labels.json", _dumps({"labels": plan.spatial.labels.tolist()}))
    w.write("plan.json", _dumps({"config_sha256": sha, "eta": eta.tolist(), "plan": plan.to_dict()}))
    w.write("report.json", _dumps(report.to_dict()))
    w.manifest(args, sha)
    if not report.converged:
        print(f"warning: solver did not converge ({report.message or 'residual above tolerance'})",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _verify(args, sc, eta, prices) -> dict | None:
    if not args.verify:
        return None
    rep = verify_envy_free(sc, eta, prices, args.verify, args.seed)
    return {k: getattr(rep, k) for k in rep.__dataclass_fields__}


def cmd_prices(args: argparse.Namespace) -> int:
    sc, sha = _load(args)
    eta = _weights(args, sc, sha)
    prices = scenario_prices(sc, eta)
    w = Writer(Path(args.out))
    rows = []
    for i, sp in enumerate(prices.stations):
        t, p = sp.breakpoints()
        rows.extend((i, float(a), float(b)) for a, b in zip(t, p))
    if args.format == "csv":
        w.write("prices.csv", _csv_bytes(["station", "t", "price"], rows))
    else:
        w.write("prices.json", _dumps({"config_sha256": sha,
                                       "breakpoints": [[r[0], r[1], r[2]] for r in rows]}))
    ver = _verify(args, sc, eta, prices)
    if ver is not None:
        w.write("envy.json", _dumps(ver))
    w.manifest(args, sha)
    return EXIT_OK


def cmd_slots(args: argparse.Namespace) -> int:
    sc, sha = _load(args)
    eta = _weights(args, sc, sha)
    slots = scenario_slots(sc, eta, args.crossing_order)
    w = Writer(Path(args.out))
    if args.format == "csv":
        rows = [(i, s.start, s.end, s.price, s.target, s.capacity)
                for i, st in enumerate(slots.stations) for s in st]
        w.write("slots.csv", _csv_bytes(["station", "start", "end", "price", "type", "capacity"], rows))
    else:
        doc = slots.to_dict()
        doc["config_sha256"] = sha
        w.write("slots.json", _dumps(doc))
    ver = _verify(args, sc, eta, slots)
    if ver is not None:
        w.write("envy.json", _dumps(ver))
    w.manifest(args, sha)
    return EXIT_OK


def _float_list(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse number list {text!r}") from exc


def cmd_allocate(args: argparse.Namespace) -> int:
    if not args.budget > 0:
        raise InputError("--budget must be positive")
    sc, sha = _load(args)
    res = solve_capacity_allocation(sc, args.budget, _float_list(args.xi), _options(args))
    w = Writer(Path(args.out))
    if args.format == "csv":
        rows = [(i, float(a), float(res.xi[i]), int(i in res.binding)) for i, a in enumerate(res.scales)]
        w.write("allocation.csv", _csv_bytes(["station", "scale", "xi", "binding"], rows))
    else:
        w.write("allocation.json", _dumps(res.to_dict()))
    w.manifest(args, sha)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_compare(args: argparse.Namespace) -> int:
    sc, sha = _load(args)
    pols = None if args.policies is None else [p.strip() for p in args.policies.split(",") if p.strip()]
    if pols is not None:
        bad = [p for p in pols if p not in POLICY_NAMES]
        if bad:
            raise InputError(f"unknown policies {bad}; choose from {', '.join(POLICY_NAMES)}")
    table = compare_policies(sc, pols, _options(args))
    w = Writer(Path(args.out))
    if args.format == "csv":
        rows = [(r.policy, r.spatial, r.temporal, r.total, r.uncovered_total,
                 ";".join(repr(u) for u in r.uncovered_by_type)) for r in table.rows]
        w.write("comparison.csv", _csv_bytes(
            ["policy", "spatial", "temporal", "total", "uncovered_total", "uncovered_by_type"], rows))
    else:
        w.write("comparison.json", _dumps(table.to_dict()))
    w.manifest(args, sha)
    if not table.dominance_ok:
        for v in table.violations:
            print(f"dominance failure: {v}", file=sys.stderr)
        return EXIT_DOMINANCE
    return EXIT_OK


def cmd_hotelling(args: argparse.Namespace) -> int:
    vals = _float_list(args.params)
    if vals is None or len(vals) != 4:
        raise InputError("--params needs four numbers c1,c2,w,r")
    try:
        p = HotellingParams(*vals)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    w = Writer(Path(args.out))
    sha = hashlib.sha256(_dumps({"params": vals, "types": args.types})).hexdigest()
    hom = hotelling_homogeneous(p)
    uni = hotelling_uniform(p)
    alpha = np.linspace(0.0, 1.0, args.points)
    f1, f2 = np.asarray(uni.f1(alpha)), np.asarray(uni.f2(alpha))
    rows = [(float(a), float(x), float(y)) for a, x, y in zip(alpha, f1, f2)]
    summary = {
        "homogeneous": {"regime": hom.regime, "x1": hom.x1, "x2": hom.x2, "welfare": hom.welfare,
                        "threshold": hom.threshold},
        "uniform": {"regime": uni.regime, "r_c": uni.r_c, "hat_alpha": uni.hat_alpha, "kappa": uni.kappa},
    }
    if args.format == "csv":
        w.write("boundary.csv", _csv_bytes(["alpha", "f1", "f2"], rows))
    else:
        w.write("boundary.json", _dumps({"alpha": alpha.tolist(), "f1": f1.tolist(), "f2": f2.tolist()}))
    w.write("summary.json", _dumps(summary))
    code = EXIT_OK
    if args.types:
        sc = hotelling_uniform_scenario(*vals, n_types=args.types, resolution=args.resolution)
        eta, rep = solve_stbd(sc, _options(args))
        plan = extract_plan(sc, eta, rep.final_eps, args.tol, check=False)
        dx = sc.grid.dx
        alphas = sc.meta["alphas"]
        num = [(a, float(np.sum(plan.spatial.labels[j] == 1) * dx), float(np.sum(plan.spatial.labels[j] == 2) * dx))
               for j, a in enumerate(alphas)]
        w.write("numeric.csv", _csv_bytes(["alpha", "f1", "f2"], num))
        if not rep.converged:
            code = EXIT_NONCONVERGED
    w.manifest(args, sha)
    return code


def cmd_oracle(args: argparse.Namespace) -> int:
    sc, sha = _load(args)
    inst = discretize(sc, args.bins, args.block, args.max_vars)
    lp = solve_lp(inst)
    eta, rep = solve_stbd(sc, _options(args))
    gap = abs(lp.value - rep.final_objective) / max(1.0, abs(lp.value))
    doc = {
        "n_vars": inst.n_vars,
        "lp_value": lp.value,
        "solver_welfare": rep.final_objective,
        "gap": gap,
        "certificate_gap": lp.certificate.gap,
        "certificate_slackness": lp.certificate.max_slackness,
        "dual_value": lp.certificate.dual_value,
    }
    w = Writer(Path(args.out))
    if args.format == "csv":
        w.write("oracle.csv", _csv_bytes(list(doc), [list(doc.values())]))
    else:
        w.write("oracle.json", _dumps(doc))
    w.manifest(args, sha)
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="scenario config (JSON or TOML)")
    common.add_argument("--tol", type=float, default=1e-5, help="relative gradient tolerance")
    common.add_argument("--seed", type=int, default=0, help="seed for generators and samplers")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--max-iter", type=int, default=None, help="total solver iteration budget")
    common.add_argument("--generate", action="store_true",
                        help="build the scenario from the config's generator section (or defaults)")

    p = argparse.ArgumentParser(prog="stmatch", description="Capacitated spatiotemporal matching.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve a scenario and write the plan")
    s.add_argument("--linear", action="store_true", help="use the constant-capacity linear-cost fast path")
    s.set_defaults(func=cmd_solve)

    for name, fn, what in (("prices", cmd_prices, "continuous envy-free prices"),
                           ("slots", cmd_slots, "finite slot menu")):
        s = sub.add_parser(name, parents=[common], help=f"compute the {what}")
        s.add_argument("--weights", type=Path, default=None, help="plan.json written by 'solve'")
        s.add_argument("--verify", type=int, default=0, metavar="N",
                       help="sample N agents and report envy and individual rationality")
        if name == "slots":
            s.add_argument("--crossing-order", type=int, choices=(1, 2), default=2)
        s.set_defaults(func=fn)

    s = sub.add_parser("allocate", parents=[common], help="budgeted capacity allocation")
    s.add_argument("--budget", type=float, required=True)
    s.add_argument("--xi", type=str, default=None, help="comma-separated unit costs per station")
    s.set_defaults(func=cmd_allocate)

    s = sub.add_parser("compare", parents=[common], help="compare benchmark policies")
    s.add_argument("--policies", type=str, default=None,
                   help=f"comma-separated subset of {','.join(POLICY_NAMES)}")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("hotelling", parents=[common], help="two-station closed forms")
    s.add_argument("--params", type=str, required=True, help="c1,c2,w,r")
    s.add_argument("--points", type=int, default=101, help="number of sensitivity levels in the curve")
    s.add_argument("--types", type=int, default=0, help="also solve numerically with this many types")
    s.add_argument("--resolution", type=int, default=400)
    s.set_defaults(func=cmd_hotelling)

    s = sub.add_parser("oracle", parents=[common], help="brute-force LP parity check")
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--block", type=int, default=1)
    s.add_argument("--max-vars", type=int, default=10_000)
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ScenarioError, AllocationError, AssumptionError, OracleSizeError,
            DegenerateTieError, SlotBoundError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OracleFailure, PlanInconsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
