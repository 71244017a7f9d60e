"""Command-line surface, configuration parsing and deterministic emission.

Reports are written as canonical JSON (sorted keys, reals as ``%.16e``) or
CSV.  Wall-clock timings go to stderr only, so that identical runs write
byte-identical files.  All randomness comes from ``--seed`` through
``numpy.random.default_rng`` (PCG64).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import (
    ConfigError,
    EmitError,
    GraphError,
    GraphLogError,
    MalformedFile,
    MissingRequired,
    NoConvergenceInRange,
    NonpositivePotential,
    PotentialBelowMinusOne,
    SolverError,
    UnknownFlag,
)
from .graph_core import (
    Graph,
    GraphSpec,
    Lattice,
    VertexFunction,
    ball,
    graph_from_json,
    make_generator,
    vertex_key,
)
from .spaces import POSITIVE, SIGN_CHANGING, PotentialSpec, check_hypotheses

SCHEMA_VERSION = "graphlog-report/1"
MODES = ("solve-local", "exhaust", "multi", "verify", "check-h")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_HYPOTHESIS = 0, 2, 3, 4
_GRAPH_SPEC_PREFIXES = ("path:", "cycle:", "lattice:", "Z:")


@dataclass
class RunConfig:
    mode: str
    graph_source: str | None = None
    potential_source: str | None = None
    graph: Graph | Lattice | None = field(default=None, repr=False)
    potential: PotentialSpec | None = field(default=None, repr=False)
    solver: Any = None  # SolverConfig
    epsilon: float = 0.5
    k: int | None = None
    k_from: int | None = None
    k_to: int | None = None
    window_radius: int | None = None
    alpha: float | None = None
    center: Any = None
    tol_conv: float = 1e-8
    max_solutions: int | None = None
    out: str | None = None
    format: str = "json"
    seed: int = 0

    def echo(self) -> dict:
        """Config fields that determine the numbers (the output path is left out)."""
        return {
            "mode": self.mode,
            "graph": self.graph_source,
            "potential": self.potential_source,
            "solver": asdict(self.solver) if self.solver is not None else None,
            "epsilon": self.epsilon,
            "k": self.k,
            "k_from": self.k_from,
            "k_to": self.k_to,
            "window_radius": self.window_radius,
            "alpha": self.alpha,
            "center": None if self.center is None else vertex_key(self.center),
            "tol_conv": self.tol_conv,
            "max_solutions": self.max_solutions,
            "format": self.format,
            "seed": self.seed,
        }


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "unrecognized arguments" in message:
            raise UnknownFlag(message)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    ap = _Parser(prog="graphlog", description="Logarithmic Schrodinger equations on graphs.")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--graph", help="graph JSON file or path:N, cycle:N, lattice:D:R, Z:D")
    ap.add_argument("--potential", help="potential JSON file or inline name:key=val,...")
    ap.add_argument("--k", type=int, help="ball radius (solve-local, multi, check-h)")
    ap.add_argument("--k-range", help="A:B ball radii for exhaust")
    ap.add_argument("--window", type=int, help="observation window radius for exhaust")
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--alpha", type=float, help="threshold for the sign-changing hypotheses")
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--max-iter", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="output file (default: stdout)")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--center", help="center vertex id (default: graph origin)")
    ap.add_argument("--method", choices=("newton", "nehari", "mountain-pass", "deflated"))
    ap.add_argument("--tol-conv", type=float, default=1e-8)
    ap.add_argument("--max-solutions", type=int)
    return ap


# -- file resolution ---------------------------------------------------------------

def fixture_dir() -> Path:
    env = os.environ.get("GRAPHLOG_FIXTURES")
    if env:
        return Path(env)
    return Path(str(resources.files("graphlog") / "fixtures"))


def _read_text(name: str, files: Mapping[str, str] | None) -> tuple[str, str] | None:
    if files and name in files:
        return files[name], name
    p = Path(name)
    if p.is_file():
        return p.read_text(), str(p)
    q = fixture_dir() / name
    if q.is_file():
        return q.read_text(), str(q)
    return None


def _load_json(text: str, source: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def resolve_graph(source: str, files=None) -> Graph | Lattice:
    if source.startswith(_GRAPH_SPEC_PREFIXES) or source == "Z":
        try:
            return make_generator(GraphSpec.parse(source))
        except GraphError as exc:
            raise ConfigError(str(exc)) from None
    found = _read_text(source, files)
    if found is None:
        raise ConfigError(f"graph file not found: {source}")
    text, where = found
    return graph_from_json(_load_json(text, where), where)


def resolve_potential(source: str, files=None) -> PotentialSpec:
    found = _read_text(source, files)
    if found is not None:
        text, where = found
        return PotentialSpec.from_json(_load_json(text, where), where)
    if source.endswith(".json"):
        raise ConfigError(f"potential file not found: {source}")
    try:
        return PotentialSpec.parse(source)
    except ValueError as exc:
        raise ConfigError(f"cannot parse potential {source!r}: {exc}") from None


def resolve_vertex(gen: Graph | Lattice, text: str | None):
    """Vertex named by ``text`` (its key), or the origin when ``text`` is None."""
    if text is None:
        return gen.origin
    if isinstance(gen, Lattice):
        try:
            c = tuple(int(t) for t in text.split(","))
        except ValueError:
            raise ConfigError(f"bad lattice vertex {text!r}") from None
        if len(c) != gen.dim:
            raise ConfigError(f"vertex {text!r} does not have {gen.dim} coordinates")
        return c[0] if gen.dim == 1 else c
    for x in gen.vertices:
        if vertex_key(x) == text:
            return x
    raise ConfigError(f"unknown center vertex {text!r}")


def parse_config(args: list[str], files: Mapping[str, str] | None = None) -> RunConfig:
    """Parse command-line ``args``; ``files`` optionally maps names to file contents."""
    from .solvers import SolverConfig

    ns = _build_parser().parse_args(list(args))
    mode = ns.mode
    needs = {
        "solve-local": ("graph", "potential", "k"),
        "exhaust": ("graph", "potential", "k_range", "window"),
        "multi": ("graph", "potential"),
        "verify": (),
        "check-h": ("graph", "potential", "k"),
    }[mode]
    for name in needs:
        if getattr(ns, name) is None:
            raise MissingRequired(name.replace("_", "-"))
    if not 0.0 < ns.eps < 1.0:
        raise ConfigError(f"--eps {ns.eps} must lie in (0, 1)")
    k_from = k_to = None
    if ns.k_range is not None:
        a, sep, b = ns.k_range.partition(":")
        try:
            k_from, k_to = int(a), int(b)
        except ValueError:
            raise ConfigError(f"--k-range must be A:B, got {ns.k_range!r}") from None
        if not sep or k_to < k_from:
            raise ConfigError(f"--k-range must be A:B with A <= B, got {ns.k_range!r}")
    default_method = {"exhaust": "mountain-pass", "multi": "deflated"}.get(mode, "newton")
    try:
        solver = SolverConfig(method=ns.method or default_method, tol_residual=ns.tol,
                              max_iter=ns.max_iter, seed=ns.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(
        mode=mode, graph_source=ns.graph, potential_source=ns.potential, solver=solver,
        epsilon=ns.eps, k=ns.k, k_from=k_from, k_to=k_to, window_radius=ns.window,
        alpha=ns.alpha, tol_conv=ns.tol_conv, max_solutions=ns.max_solutions,
        out=ns.out, format=ns.format, seed=ns.seed,
    )
    if ns.graph is not None:
        cfg.graph = resolve_graph(ns.graph, files)
        cfg.center = resolve_vertex(cfg.graph, ns.center)
    if ns.potential is not None:
        cfg.potential = resolve_potential(ns.potential, files)
    return cfg


# -- emission ----------------------------------------------------------------------

def _canon(obj, path="$") -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise EmitError(f"non-finite number at {path}")
        return "%.16e" % x
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Mapping):
        items = sorted((str(k), v) for k, v in obj.items())
        inner = ",".join(f"{json.dumps(k)}:{_canon(v, f'{path}.{k}')}" for k, v in items)
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(_canon(v, f"{path}[{i}]") for i, v in enumerate(obj)) + "]"
    raise EmitError(f"cannot serialize {type(obj).__name__} at {path}")


def to_canonical_json(report: Mapping) -> str:
    """Canonical text of ``report``; raises :class:`EmitError` on NaN or infinity."""
    return _canon(report) + "\n"


def report_csv(report: Mapping) -> str:
    """Plot-ready CSV view of a report (trace, solutions or vertex values)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if report.get("trace"):
        w.writerow(["k", "norm_H", "energy", "sup_window", "converged"])
        for r in report["trace"]["rows"]:
            w.writerow([r["k"], f"{r['norm_H']:.16e}", f"{r['energy']:.16e}",
                        f"{r['sup_window']:.16e}", int(r["converged"])])
        return buf.getvalue()
    if "solutions" in report:
        w.writerow(["index", "energy", "residual_norm", "norm_sq"])
        for i, s in enumerate(report["solutions"]):
            w.writerow([i, f"{s['energy']:.16e}", f"{s['residual_norm']:.16e}",
                        f"{s['certificate']['norm_sq']:.16e}"])
        return buf.getvalue()
    if "solution" in report:
        w.writerow(["vertex", "u"])
        for key, v in sorted(report["solution"]["u"].items()):
            w.writerow([key, f"{v:.16e}"])
        return buf.getvalue()
    if "checks" in report:
        w.writerow(["check", "passed"])
        for c in report["checks"]:
            w.writerow([c["name"], int(c["passed"])])
        return buf.getvalue()
    if "hypotheses" in report:
        w.writerow(["hypothesis", "verdict"])
        for k, v in sorted(report["hypotheses"]["verdicts"].items()):
            w.writerow([k, v])
        return buf.getvalue()
    raise EmitError("report has no tabular view")


def emit(report: Mapping, cfg: RunConfig, stream=None) -> str:
    """Serialize ``report`` per ``cfg.format`` to ``cfg.out`` (or ``stream``/stdout).

    Every format is validated through the canonical JSON encoder first, so a
    NaN anywhere refuses the whole emission.  Returns the text written.
    """
    text = to_canonical_json(report)
    if cfg.format == "csv":
        text = report_csv(report)
    if cfg.out:
        try:
            with open(cfg.out, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise EmitError(f"cannot write {cfg.out}: {exc}") from None
    else:
        (stream or sys.stdout).write(text)
    return text


def solution_from_json(doc: Mapping, gen: Graph | Lattice | None = None) -> VertexFunction:
    """Inverse of ``Solution.to_json()['u']`` (or of a whole solution record)."""
    values = doc.get("u", doc)
    if gen is None:
        return VertexFunction({str(k): float(v) for k, v in values.items()})
    out = {}
    for key, v in values.items():
        out[resolve_vertex(gen, key)] = float(v)
    return VertexFunction(out)


# -- runners -------------------------------------------------------------------------

def _base_report(cfg: RunConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "mode": cfg.mode, "config": cfg.echo()}


def _local_problem(cfg: RunConfig, k: int):
    from .functionals import LocalProblem

    g = cfg.graph.materialize(cfg.center, k + 1)
    return LocalProblem(g, ball(g, cfg.center, k), cfg.potential, cfg.epsilon)


def run_solve_local(cfg: RunConfig) -> tuple[dict, int]:
    from .functionals import constants_ledger
    from .solvers import certify, solve

    p = _local_problem(cfg, cfg.k)
    ledger = constants_ledger(p)
    s = solve(p, cfg.solver)
    rep = _base_report(cfg)
    rep["ledger"] = ledger.to_json()
    rep["solution"] = s.to_json()
    rep["certificate"] = certify(p, s, ledger).to_json()
    return rep, EXIT_OK if s.converged else EXIT_SOLVER


def run_exhaust(cfg: RunConfig) -> tuple[dict, int]:
    from .exhaustion import exhaustion_ledger, run_exhaustion

    rep = _base_report(cfg)
    rep["ledger"] = exhaustion_ledger(cfg.graph, cfg.potential, cfg.center, cfg.k_to,
                                      cfg.epsilon).to_json()
    try:
        trace, cand = run_exhaustion(cfg.graph, cfg.potential, cfg.center, cfg.k_from,
                                     cfg.k_to, cfg.window_radius, cfg.solver, cfg.tol_conv,
                                     cfg.epsilon)
    except NoConvergenceInRange as exc:
        rep["status"] = "no-convergence"
        rep["trace"] = exc.trace.to_json() if exc.trace else None
        return rep, EXIT_SOLVER
    except ValueError as exc:
        if isinstance(exc, GraphLogError):
            raise
        raise ConfigError(str(exc)) from None
    rep["status"] = "converged"
    rep["trace"] = trace.to_json()
    rep["candidate"] = cand.to_json()
    return rep, EXIT_OK


def run_multi(cfg: RunConfig) -> tuple[dict, int]:
    from .functionals import GlobalProblem, constants_ledger
    from .solvers import certify, find_solutions

    trunc = None
    if cfg.k is not None:
        g = cfg.graph.materialize(cfg.center, cfg.k + 1)
        trunc = ball(g, cfg.center, cfg.k)
    elif isinstance(cfg.graph, Lattice):
        raise MissingRequired("k")
    else:
        g = cfg.graph
    p = GlobalProblem(g, cfg.potential, trunc, cfg.epsilon)
    ledger = constants_ledger(p)
    sols = find_solutions(p, cfg.solver, cfg.max_solutions)
    rep = _base_report(cfg)
    rep["ledger"] = ledger.to_json()
    rep["solutions"] = []
    for s in sols:
        rec = s.to_json()
        rec["certificate"] = certify(p, s, ledger).to_json()
        rep["solutions"].append(rec)
    rep["n_solutions"] = len(sols)
    return rep, EXIT_OK if sols else EXIT_SOLVER


def run_check_h(cfg: RunConfig) -> tuple[dict, int]:
    mode = SIGN_CHANGING if cfg.alpha is not None else POSITIVE
    hr = check_hypotheses(cfg.graph, cfg.potential, mode, cfg.k, cfg.alpha, cfg.center)
    rep = _base_report(cfg)
    rep["hypotheses"] = hr.to_json()
    return rep, EXIT_HYPOTHESIS if hr.violated else EXIT_OK


def run_verify(cfg: RunConfig) -> tuple[dict, int]:
    from .verify import run_checks

    rep = _base_report(cfg)
    rep["checks"] = run_checks(cfg)
    ok = all(c["passed"] for c in rep["checks"])
    return rep, EXIT_OK if ok else EXIT_SOLVER


RUNNERS = {
    "solve-local": run_solve_local,
    "exhaust": run_exhaust,
    "multi": run_multi,
    "check-h": run_check_h,
    "verify": run_verify,
}


def run(cfg: RunConfig) -> tuple[dict, int]:
    """Execute ``cfg`` and map library errors onto exit codes (report may be None)."""
    try:
        return RUNNERS[cfg.mode](cfg)
    except (NonpositivePotential, PotentialBelowMinusOne) as exc:
        rep = _base_report(cfg)
        rep["error"] = {"type": type(exc).__name__, "message": str(exc)}
        return rep, EXIT_HYPOTHESIS
    except SolverError as exc:
        rep = _base_report(cfg)
        rep["error"] = {"type": type(exc).__name__, "message": str(exc)}
        return rep, EXIT_SOLVER


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    t0 = time.perf_counter()
    try:
        cfg = parse_config(argv)
        report, code = run(cfg)
        emit(report, cfg)
    except (ConfigError, GraphError, EmitError) as exc:
        print(f"graphlog: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GraphLogError as exc:
        print(f"graphlog: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"graphlog: {cfg.mode} finished in {time.perf_counter() - t0:.3f} s (exit {code})",
          file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
