"""Command-line front end: ``fraclap build|solve|verify --config <path>``.

A run reads one JSON config, writes JSON and CSV outputs into ``--out``
(default: ``out`` next to the config) and finishes with ``run_report.json``,
which lists every file written together with its SHA-256.  Exit codes are
0 for success or informational verdicts, 1 for runtime or solver failures
and failing checks, 2 for configuration and validation errors.

Config keys
-----------
space
    Inline space document (see :func:`fraclap.space.space_from_dict`, which
    also accepts ``{"generator": "cycle", "n": 64}``) or a path to one.
params
    ``{"p", "theta", "beta", "weight_rule"}``.
extension
    ``{"kind": "product" | "lattice", "M", "y_min", "rho", "Y_max",
    "connectivity", "knn", "base_point", "b0_radius"}``.
structure
    Differential structure document, default isotropic.
domain
    Path to a domain file written by ``build``.  When absent, ``solve``
    and ``verify`` use ``<out>/domain.json`` if present and otherwise
    build the domain in memory from the config.
data
    ``{"values": [...]}``, ``{"file": "points.csv"}`` or
    ``{"generator": name, ...}`` with generators ``zero``, ``random``,
    ``bump``, ``dipole`` and ``atom``.
solve
    ``{"problem": "dirichlet" | "neumann" | "neumann-exhaustion" |
    "frac-apply" | "frac-solve", "k_max", "roundtrip", ...}`` plus solver
    options (``tol``, ``max_iter``, ``epsilon_schedule``, ``method``).
verify
    ``{"suites": [...], "ensemble_size", "tol", "alpha", "q", "window",
    "radii", "ts", "center", "R0", "refine"}``.
seed
    Unsigned 64-bit seed; ``--seed`` overrides it.
"""

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from contextlib import ExitStack
from pathlib import Path

import numpy as np

from .cheeger import ISOTROPIC, DifferentialStructure, gradient
from .errors import FraclapError, NonConvergence, ValidationError
from .extension import (
    FractionalParams,
    build_product_extension,
    domain_to_dict,
    domain_from_dict,
    lattice_domain,
)
from .fractional import frac_apply, frac_solve, read_point_csv, write_point_csv
from .solve import (
    SolverOptions,
    a_priori_check,
    boundary_data,
    solve_dirichlet,
    solve_neumann,
    solve_neumann_exhaustion,
)
from .space import check_codimension, estimate_mass_exponents, space_from_dict
from .verify import (
    INFO,
    PASS,
    CheckReport,
    check_spectral_oracle,
    effective_q,
    equivalence_check,
    estimate_holder,
    harnack_check,
    make_rng,
    makalainen_check,
    measure_stability_exponent,
)

log = logging.getLogger("fraclap")

SUITES = ("equivalence", "stability", "harnack", "holder", "makalainen", "oracle-p2")
PROBLEMS = ("dirichlet", "neumann", "neumann-exhaustion", "frac-apply", "frac-solve")
EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


# -- JSON helpers ---------------------------------------------------------------------------

def _plain(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def _dumps(doc):
    return json.dumps(_plain(doc), sort_keys=True, indent=1) + "\n"


class Outputs:
    """Writes files into one directory and remembers them for the manifest."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        return self.root / name

    def _record(self, name):
        if name not in self.files:
            self.files.append(name)

    def json(self, name, doc):
        self.path(name).write_text(_dumps(doc))
        self._record(name)

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                            for v in row])
        self._record(name)

    def points(self, name, values):
        write_point_csv(self.path(name), values)
        self._record(name)

    def manifest(self):
        out = []
        for name in self.files:
            data = self.path(name).read_bytes()
            out.append({"path": name, "bytes": len(data),
                        "sha256": hashlib.sha256(data).hexdigest()})
        return out


# -- config ---------------------------------------------------------------------------------

class RunConfig:
    """Parsed and validated configuration."""

    def __init__(self, doc, base_dir, seed=None):
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object")
        self.doc = doc
        self.base_dir = Path(base_dir)
        raw_seed = doc.get("seed", 0) if seed is None else seed
        try:
            self.seed = int(raw_seed)
        except (TypeError, ValueError):
            raise ValidationError(f"seed must be an integer, got {raw_seed!r}") from None
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if "params" not in doc:
            raise ValidationError("config needs a 'params' section")
        self.params = FractionalParams.from_dict(doc["params"])
        self.extension = dict(doc.get("extension") or {})
        self.structure = (DifferentialStructure.from_dict(doc["structure"])
                          if doc.get("structure") else ISOTROPIC)
        self.solve = dict(doc.get("solve") or {})
        self.verify = dict(doc.get("verify") or {})
        self.data = doc.get("data")
        self._space = None

    @classmethod
    def load(cls, path, seed=None):
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
        return cls(doc, path.parent, seed)

    def resolve(self, name):
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p

    def _read_json(self, name, what):
        p = self.resolve(name)
        if not p.is_file():
            raise ValidationError(f"{what} file {p} does not exist")
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{what} file {p} is not valid JSON: {exc}") from None

    @property
    def space(self):
        if self._space is None:
            src = self.doc.get("space")
            if src is None:
                raise ValidationError("config needs a 'space' section")
            if isinstance(src, str):
                src = self._read_json(src, "space")
            elif isinstance(src, dict) and "file" in src:
                src = self._read_json(src["file"], "space")
            self._space = space_from_dict(src)
        return self._space

    def fingerprint(self, command):
        canon = json.dumps({"command": command, "config": self.doc, "seed": self.seed},
                           sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def solver_options(self):
        return SolverOptions.from_dict(self.solve)


def build_domain(cfg):
    ext = cfg.extension
    kind = ext.get("kind", "product")
    Z = cfg.space
    if kind == "lattice":
        return lattice_domain(Z, cfg.params)
    if kind != "product":
        raise ValidationError(f"unknown extension kind {kind!r}")
    known = ("M", "y_min", "rho", "Y_max", "connectivity", "knn", "base_point", "b0_radius")
    unknown = sorted(set(ext) - set(known) - {"kind"})
    if unknown:
        raise ValidationError(f"unknown extension keys {unknown}")
    kw = {k: ext[k] for k in known if ext.get(k) is not None}
    return build_product_extension(Z, cfg.params, **kw)


def obtain_domain(cfg, out_dir):
    """Domain named in the config, else ``<out>/domain.json``, else built in memory."""
    if cfg.doc.get("domain"):
        doc = cfg._read_json(cfg.doc["domain"], "domain")
    elif (Path(out_dir) / "domain.json").is_file():
        doc = json.loads((Path(out_dir) / "domain.json").read_text())
    else:
        return build_domain(cfg)
    domain = domain_from_dict(doc)
    if domain.params != cfg.params:
        raise ValidationError("domain file was built with different params than the config")
    return domain


# -- data generators -------------------------------------------------------------------------

def _balanced(Z, f):
    return f - float(np.dot(f, Z.nu)) / float(Z.nu.sum())


def make_data(cfg, spec=None, Z=None):
    """Boundary function described by ``spec`` (default: the config's ``data``)."""
    Z = cfg.space if Z is None else Z
    spec = cfg.data if spec is None else spec
    if spec is None:
        spec = {"generator": "random"}
    if isinstance(spec, list):
        spec = {"values": spec}
    if not isinstance(spec, dict):
        raise ValidationError("data must be an object, a list of values or omitted")
    if "values" in spec:
        f = np.asarray(spec["values"], dtype=float)
    elif "file" in spec:
        p = cfg.resolve(spec["file"])
        if not p.is_file():
            raise ValidationError(f"data file {p} does not exist")
        f = read_point_csv(p)
    else:
        f = _generate(Z, spec, cfg.seed)
    if f.shape != (Z.n,):
        raise ValidationError(f"data has {f.size} values for {Z.n} points")
    return f


def _generate(Z, spec, seed):
    name = spec.get("generator", "random")
    rng = make_rng(spec.get("seed", seed))
    if name == "zero":
        return np.zeros(Z.n)
    if name == "random":
        f = rng.standard_normal(Z.n)
        return _balanced(Z, f) if spec.get("balanced", True) else f
    if name == "bump":
        center = int(spec.get("center", 0))
        scale = float(spec.get("scale", Z.diameter / 8))
        f = np.exp(-Z.dist[center] / scale)
        return _balanced(Z, f) if spec.get("balanced", True) else f
    if name == "dipole":
        src, snk = int(spec.get("source", 0)), int(spec.get("sink", Z.n // 2))
        r = float(spec.get("radius", Z.diameter / 8))
        plus = (Z.dist[src] < r).astype(float)
        minus = (Z.dist[snk] < r).astype(float)
        return plus / np.dot(plus, Z.nu) - minus / np.dot(minus, Z.nu)
    if name == "atom":
        src, snk = int(spec.get("point", 0)), int(spec.get("sink", Z.n // 2))
        f = np.zeros(Z.n)
        f[src] += 1.0 / Z.nu[src]
        f[snk] -= 1.0 / Z.nu[snk]
        return f
    raise ValidationError(f"unknown data generator {name!r}")


# -- commands -------------------------------------------------------------------------------

def cmd_build(cfg, out):
    Z = cfg.space
    domain = build_domain(cfg)
    out.json("domain.json", domain_to_dict(domain))
    diag = {"nodes": domain.node_count, "edges": domain.edge_count,
            "boundary_points": Z.n, "params": cfg.params.to_dict(),
            "Theta": cfg.params.Theta, "a": cfg.params.a}
    try:
        diag["doubling"] = estimate_mass_exponents(Z).to_dict()
    except FraclapError as exc:
        diag["doubling"] = {"error": str(exc)}
    if domain.is_product:
        diag["codimension"] = check_codimension(Z, domain, cfg.params.Theta, cfg.params.p).to_dict()
    out.json("diagnostics.json", diag)
    return {"nodes": domain.node_count, "edges": domain.edge_count}, []


def _solution_rows(domain, structure, u, p):
    mag = gradient(domain, structure, u, p).magnitude
    return [(i, int(domain.layer_of[i]), float(domain.y_of[i]), float(u[i]), float(mag[i]))
            for i in range(domain.node_count)]


def _write_solution(out, domain, structure, u, p, name="solution.csv"):
    out.csv(name, ("node_id", "layer", "y", "u", "grad_mag"),
            _solution_rows(domain, structure, u, p))


def cmd_solve(cfg, out, domain):
    Z, params, st = cfg.space, cfg.params, cfg.structure
    p = params.p
    problem = cfg.solve.get("problem", "neumann")
    if problem not in PROBLEMS:
        raise ValidationError(f"unknown problem {problem!r}; choose from {PROBLEMS}")
    opts = cfg.solver_options()
    values = make_data(cfg)
    x0 = domain.col_of[domain.base_point]
    report = {"problem": problem, "options": opts.to_dict()}
    try:
        if problem == "dirichlet":
            sol = solve_dirichlet(domain, st, p, values, options=opts)
            report["solution"] = sol.diagnostics()
            _write_solution(out, domain, st, sol.u, p)
        elif problem == "neumann":
            fd = boundary_data(Z, values, params, x0=x0)
            sol = solve_neumann(domain, st, p, fd, options=opts)
            report["solution"] = sol.diagnostics()
            report["a_priori"] = a_priori_check(sol, fd)
            _write_solution(out, domain, st, sol.u, p)
        elif problem == "neumann-exhaustion":
            fd = boundary_data(Z, values, params, x0=x0)
            sol, exh = solve_neumann_exhaustion(domain, st, p, fd, int(cfg.solve.get("k_max", 4)),
                                                options=opts)
            report["solution"] = sol.diagnostics()
            report["exhaustion"] = exh.to_dict()
            _write_solution(out, domain, st, sol.u, p)
        elif problem == "frac-apply":
            res = frac_apply(Z, domain, st, values, params, options=opts,
                             estimator=cfg.solve.get("estimator", "residual"))
            report["solution"] = res.solution.diagnostics()
            report["mean"] = res.mean
            out.points("frac_apply.csv", res.f)
            _write_solution(out, domain, st, res.solution.u, p)
        else:
            fd = boundary_data(Z, values, params, x0=x0)
            bf = frac_solve(Z, domain, st, fd, params, options=opts)
            report["solution"] = bf.solution.diagnostics()
            report["seminorm"] = bf.seminorm
            out.points("frac_solve.csv", bf.values)
            _write_solution(out, domain, st, bf.solution.u, p)
            if cfg.solve.get("roundtrip", True):
                back = frac_apply(Z, domain, st, bf.values, params, options=opts).f
                err = float(np.abs(back - fd.f).max() / max(np.abs(fd.f).max(), 1e-300))
                report["roundtrip_error"] = err
                out.points("roundtrip.csv", back)
    except NonConvergence as exc:
        diag = {k: v for k, v in exc.diagnostics.items() if k != "solution"}
        report["failure"] = {"error": "NonConvergence", "message": str(exc), "diagnostics": diag}
        partial = exc.diagnostics.get("solution")
        if partial is not None:
            _write_solution(out, domain, st, partial.u, p, name="solution_partial.csv")
        out.json("solve_report.json", report)
        raise
    out.json("solve_report.json", report)
    sol_diag = report["solution"]
    return {"energy": sol_diag["energy"], "el_residual": sol_diag["el_residual"]}, []


def _window(cfg, Z, f):
    W = cfg.verify.get("window")
    if W is None:
        return np.abs(f) == 0.0
    if isinstance(W, dict):
        lo, hi = int(W["start"]), int(W["stop"])
        return np.arange(lo, hi)
    return np.asarray(W, dtype=np.intp)


def _suite_report(name, cfg, Z, domain):
    v, params, st, seed = cfg.verify, cfg.params, cfg.structure, cfg.seed
    opts = cfg.solver_options()
    if name == "oracle-p2":
        if params.p != 2.0:
            return CheckReport("oracle-p2", {"p": params.p, "theta": params.theta}, seed, INFO,
                               [], {"status": "requires p = 2"})
        return check_spectral_oracle(Z, domain, st, params, seed=seed,
                                     tol=float(v.get("tol", 0.1)),
                                     samples=int(v.get("samples", 1)))
    if name == "equivalence":
        return equivalence_check(Z, domain, st, params, int(v.get("ensemble_size", 100)), seed,
                                 opts, refine=bool(v.get("refine", True)))
    f = make_data(cfg, v.get("data"), Z)
    if name == "stability":
        return measure_stability_exponent(Z, domain, st, params, f, ts=v.get("ts"), seed=seed,
                                          options=opts)
    if name == "harnack":
        return harnack_check(Z, domain, st, params, f, _window(cfg, Z, f), radii=v.get("radii"),
                             seed=seed, options=opts, refine=bool(v.get("refine", True)))
    if name == "holder":
        q = v.get("q", "inf")
        if q == "effective":
            q = effective_q(Z, f)
        return estimate_holder(Z, domain, st, params, f, q=float(q), center=v.get("center"),
                               R0=v.get("R0"), seed=seed, options=opts)
    if name == "makalainen":
        region = v.get("region")
        region = (f >= 0) if region is None else np.asarray(region, dtype=np.intp)
        return makalainen_check(Z, domain, f, params.p, float(v.get("alpha", 0.5)),
                                region=region, radii=v.get("radii"), seed=seed)
    raise ValidationError(f"unknown suite {name!r}")


def _selected_suites(cfg, suite):
    names = [suite] if suite else list(cfg.verify.get("suites") or ["all"])
    for n in names:
        if n != "all" and n not in SUITES:
            raise ValidationError(f"unknown suite {n!r}; choose from {SUITES + ('all',)}")
    if "all" in names:
        return list(SUITES)
    return names


def cmd_verify(cfg, out, domain, suite=None):
    names = _selected_suites(cfg, suite)
    Z = cfg.space
    verdicts = {}
    for name in names:
        rep = _suite_report(name, cfg, Z, domain).to_dict()
        verdicts[name] = rep["verdict"]
        stem = name.replace("-", "_")
        out.json(f"{stem}.json", rep)
        rows = rep["data"]
        if rows:
            header = sorted({k for r in rows for k in r})
            out.csv(f"{stem}.csv", header, [[r.get(k, "") for k in header] for r in rows])
        else:
            out.csv(f"{stem}.csv", ("empty",), [])
    ok = all(vd in (PASS, INFO) for vd in verdicts.values())
    return {"aggregate": PASS if ok else "FAIL"}, verdicts


# -- entry point ----------------------------------------------------------------------------

def _limit_threads():
    n = os.environ.get("FRACLAP_THREADS")
    if not n:
        return None
    try:
        count = int(n)
    except ValueError:
        raise ValidationError(f"FRACLAP_THREADS must be an integer, got {n!r}") from None
    if count < 1:
        raise ValidationError("FRACLAP_THREADS must be at least 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=count)


def parse_args(argv):
    ap = argparse.ArgumentParser(prog="fraclap", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=("build", "solve", "verify"))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (default: 'out' next to the config)")
    ap.add_argument("--seed", type=int, help="unsigned 64-bit seed overriding the config")
    ap.add_argument("--suite", help="verification suite (verify only)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap.parse_args(argv)


def run(args):
    """Execute one command and write ``run_report.json``; returns the exit code.

    Validation errors raised before the output directory exists propagate
    (exit 2 without outputs).  Later errors are recorded in the report so
    that every written file stays listed in a manifest, then re-raised.
    """
    cfg = RunConfig.load(args.config, seed=args.seed)
    if args.command == "verify":
        _selected_suites(cfg, args.suite)
    out = Outputs(args.out if args.out else cfg.base_dir / "out")
    t0 = time.perf_counter()
    verdicts, summary, status, code = {}, {}, "ok", EXIT_OK
    failure = None
    with ExitStack() as stack:
        limiter = _limit_threads()
        if limiter is not None:
            stack.enter_context(limiter)
        try:
            if args.command == "build":
                summary, _ = cmd_build(cfg, out)
            elif args.command == "solve":
                summary, _ = cmd_solve(cfg, out, obtain_domain(cfg, out.root))
            else:
                summary, verdicts = cmd_verify(cfg, out, obtain_domain(cfg, out.root), args.suite)
                if summary["aggregate"] != PASS:
                    status, code = "fail", EXIT_RUNTIME
        except FraclapError as exc:
            failure = exc
            status = "invalid" if isinstance(exc, ValidationError) else "error"
            summary = {"error": type(exc).__name__, "message": str(exc)}
    report = {"command": args.command, "config_fingerprint": cfg.fingerprint(args.command),
              "seed": cfg.seed, "status": status, "summary": summary, "verdicts": verdicts,
              "manifest": out.manifest()}
    out.json("run_report.json", report)
    elapsed = time.perf_counter() - t0
    print(f"fraclap {args.command}: {status} ({elapsed:.2f} s) -> {out.root}")
    for name, vd in verdicts.items():
        print(f"  {name}: {vd}")
    if failure is not None:
        raise failure
    return code


def main(argv=None):
    args = parse_args(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ValidationError as exc:
        print(f"fraclap: invalid input: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FraclapError as exc:
        print(f"fraclap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (np.linalg.LinAlgError, FloatingPointError, MemoryError) as exc:
        print(f"fraclap: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
