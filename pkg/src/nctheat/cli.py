"""Command-line front end: term lists, H evaluation, verification suites and
the heat-trace cross-check.

Options may also come from a line-based ``key=value`` file given with
``--config``; flags on the command line override it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nc_torus import TorusError
from .rearrange import DomainError, QuadratureError

SCHEMA_VERSION = 1
NORMS = ("pi", "2pi", "one")
FORMS = ("general", "components", "diagonal", "conformal")
OPS = ("delta_k", "delta_phi", "custom")
SUITES = ("all", "relations", "recurrences", "oracles", "torus")

log = logging.getLogger("nctheat")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    m: int = 2
    norm: str = "2pi"
    tol: float | None = None
    quad_tol: float = 1e-12
    grid: str = "default"
    L: int = 10
    theta: tuple = (0.3,)
    eps: tuple = (0.1, 0.2)
    weyl: str | None = None
    out: str | None = None
    format: str | None = None
    threads: int = 1
    seed: int = 0
    points: int = 20
    max_failed_fraction: float = 0.0

    def validate(self) -> "RunConfig":
        if self.m < 1:
            raise ConfigError("m must be positive")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {', '.join(NORMS)}")
        for name in ("tol", "quad_tol"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be > 0")
        if not self.grid:
            raise ConfigError("grid must be nonempty")
        if self.L < 1:
            raise ConfigError("L must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.points < 1:
            raise ConfigError("points must be at least 1")
        if not 0 <= self.max_failed_fraction < 1:
            raise ConfigError("max_failed_fraction must lie in [0, 1)")
        if self.format is not None and self.format not in ("json", "csv", "text"):
            raise ConfigError("format must be json, csv or text")
        if not self.eps:
            raise ConfigError("eps must be nonempty")
        return self

    def theta_matrix(self, m: int | None = None):
        """Theta from its entries above the diagonal, in row order."""
        from .nc_torus import Theta

        m = m or self.m
        need = m * (m - 1) // 2
        vals = list(self.theta)
        if len(vals) == 1 and need > 1:
            vals = vals * need
        if len(vals) != need:
            raise ConfigError(f"theta needs {need} entries for m={m}")
        a = np.zeros((m, m))
        it = iter(vals)
        for i in range(m):
            for j in range(i + 1, m):
                a[i, j] = next(it)
                a[j, i] = -a[i, j]
        return Theta.from_array(a)


_FIELD_TYPES = {
    "m": int, "norm": str, "tol": float, "quad_tol": float, "grid": str, "L": int,
    "theta": "floats", "eps": "floats", "weyl": str, "out": str, "format": str,
    "threads": int, "seed": int, "points": int, "max_failed_fraction": float,
}


def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _coerce(key: str, value):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "floats":
            return _floats(value)
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def read_config(path: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value")
            key, value = (x.strip() for x in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
            out[key] = _coerce(key, value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = read_config(args.config) if args.config else {}
    for key in _FIELD_TYPES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = _coerce(key, v)
    return RunConfig(**values).validate()


# ---------------------------------------------------------------- output helpers

def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _text_path(out: str) -> str:
    return (out[:-5] if out.endswith(".json") else out) + ".txt"


# ---------------------------------------------------------------- v2

def _v2_terms(form: str, op: str, m: int):
    from . import heat2, symcalc

    if form == "general":
        lower = op != "delta_k"
        groups = heat2.v2_general(with_p1=lower, with_p0=lower)
        terms = [t for ts in groups.values() for t in ts]
        part1 = sum(1 for a in groups if len(a) == 2)
        header = f"{part1} part-I groups, {len(groups) - part1} part-II groups"
        return terms, header
    if form == "components":
        if op == "delta_k":
            ops = symcalc.general_operator(m, with_p1=False, with_p0=False)
        else:
            ops = symcalc.general_operator(m)
        terms = heat2.v2_components(m, ops)
        return terms, f"{len(terms)} components at m={m}"
    if form == "diagonal":
        lower = op != "delta_k"
        terms = heat2.v2_diagonal(m, with_p1=lower, with_p0=lower)
        return terms, f"{len(terms)} diagonal terms at m={m}"
    if op == "custom":
        raise ConfigError("the conformal form takes --op delta_k or delta_phi")
    res = heat2.v2_conformal(op)
    return res.G_I + res.G_II + res.J, (
        f"G_I: {len(res.G_I)} terms, G_II: {len(res.G_II)} terms, J: {len(res.J)} terms")


def _conformal_summary(op: str) -> str:
    from . import heat2

    res = heat2.v2_conformal(op)

    def line(ts):
        return " + ".join(f"({t.coeff})" + ("(1-z1)" if t.zpow else "") + "H_{" + ",".join(map(str, t.alpha)) + "}"
                          for t in ts)

    return f"G_I = {line(res.G_I)}\nG_II = {line(res.G_II)}"


def cmd_v2(args, cfg: RunConfig) -> int:
    from . import heat2

    op = args.op or ("delta_k" if args.form == "conformal" else "custom")
    terms, header = _v2_terms(args.form, op, cfg.m)
    fmt = cfg.format or "json"
    text = header + "\n"
    if args.form == "conformal":
        text += _conformal_summary(op) + "\n"
    text += heat2.format_terms(terms) + "\n"
    if fmt == "text":
        _emit(text, cfg.out)
        return 0
    if fmt == "csv":
        raise ConfigError("term lists are written as json or text")
    js = heat2.terms_to_json(args.form, terms, m=cfg.m)
    _emit(js, cfg.out)
    if cfg.out:
        _emit(text, _text_path(cfg.out))
    else:
        sys.stderr.write(header + "\n")
    return 0


# ---------------------------------------------------------------- eval-h

def cmd_eval_h(args, cfg: RunConfig) -> int:
    from .rearrange import H_alpha

    alpha = tuple(int(x) for x in args.alpha.replace(",", " ").split())
    z = _floats(args.z) if args.z else (0.0,) * (len(alpha) - 1)
    if len(z) != len(alpha) - 1:
        raise ConfigError(f"alpha of length {len(alpha)} takes {len(alpha) - 1} z-values")
    val = float(H_alpha(alpha, z, cfg.m, args.j, norm=cfg.norm, tol=cfg.quad_tol))
    fmt = cfg.format or "text"
    if fmt == "json":
        _emit(json.dumps({"schema_version": SCHEMA_VERSION, "alpha": list(alpha), "z": list(z),
                          "m": cfg.m, "j": args.j, "norm": cfg.norm, "value": val}), cfg.out)
    elif fmt == "csv":
        _emit(f"schema_version,alpha,z,m,j,norm,value\n{SCHEMA_VERSION},{' '.join(map(str, alpha))},"
              f"{' '.join(map(repr, z))},{cfg.m},{args.j},{cfg.norm},{val!r}\n", cfg.out)
    else:
        _emit(repr(val), cfg.out)
    return 0


# ---------------------------------------------------------------- verify

@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    tol: float
    detail: str = ""
    seconds: float = 0.0
    warning: bool = False

    def __post_init__(self):
        # numpy scalars are not JSON serializable
        self.passed, self.warning = bool(self.passed), bool(self.warning)
        self.value, self.tol, self.seconds = float(self.value), float(self.tol), float(self.seconds)


@dataclass
class Report:
    checks: list = field(default_factory=list)
    tables: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        return json.dumps({"schema_version": SCHEMA_VERSION, "passed": self.passed,
                           "checks": [asdict(c) for c in self.checks]}, indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["schema_version", "suite", "name", "passed", "value", "tol", "warning", "seconds", "detail"])
        for c in self.checks:
            w.writerow([SCHEMA_VERSION, c.suite, c.name, c.passed, repr(c.value), c.tol, c.warning,
                        f"{c.seconds:.2f}", c.detail])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            if c.warning:
                flag += " (warning)"
            lines.append(f"{flag:16s} {c.suite:12s} {c.name:40s} {c.value:.3e} (tol {c.tol:.0e}) {c.detail}")
        lines.append("all passed" if self.passed else "FAILURES")
        return "\n".join(lines) + "\n"


def _timed(fn: Callable):
    t0 = time.perf_counter()
    res = fn()
    return res, time.perf_counter() - t0


def _table_check(suite, name, table, cfg: RunConfig) -> Check:
    """A residual table passes if every point is within tolerance; points whose
    evaluation failed are tolerated up to ``max_failed_fraction``."""
    rows = table.rows
    failed_eval = [r for r in rows if r.note.startswith("evaluation failed")]
    bad = [r for r in rows if not r.ok and r not in failed_eval]
    frac = len(failed_eval) / max(1, len(rows))
    passed = bool(rows) and not bad and (not failed_eval or frac <= cfg.max_failed_fraction)
    finite = [r.residual for r in rows if math.isfinite(r.residual)]
    detail = f"{len(rows)} points"
    if failed_eval:
        detail += f", {len(failed_eval)} evaluation failures"
    return Check(suite, name, passed, max(finite, default=float("nan")), table.tol, detail,
                 warning=bool(failed_eval) and passed)


def load_grid(spec: str, nvar: int):
    """``default`` or a file of rows 'y m' (nvar=1) or 'y1 y2 m' (nvar=2)."""
    if spec == "default":
        return None
    rows = []
    with open(spec) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append(tuple(float(x) for x in line.replace(",", " ").split()))
    rows = [r for r in rows if len(r) == nvar + 1]
    if not rows:
        raise ConfigError(f"grid file {spec} has no rows with {nvar + 1} columns")
    return rows


def suite_relations(cfg: RunConfig, report: Report) -> None:
    from . import conformal as C

    tab, dt = _timed(lambda: C.verify_relation_I(load_grid(cfg.grid, 1), tol=cfg.tol or 1e-8,
                                                 norm=cfg.norm, threads=cfg.threads))
    report.tables.append(tab)
    report.checks.append(_table_check("relations", "relation I", tab, cfg))
    report.checks[-1].seconds = dt
    tab, dt = _timed(lambda: C.verify_relation_II(load_grid(cfg.grid, 2), tol=cfg.tol or 1e-6,
                                                  norm=cfg.norm, threads=cfg.threads))
    report.tables.append(tab)
    report.checks.append(_table_check("relations", "relation II and lemma forms", tab, cfg))
    report.checks[-1].seconds = dt
    spread, dt = _timed(C.normalization_spread)
    report.checks.append(Check("relations", "normalization independence", spread < 1e-9, spread, 1e-9,
                               "pi, 2pi, one", dt))


def suite_recurrences(cfg: RunConfig, report: Report) -> None:
    from . import conformal as C

    rng = np.random.default_rng(cfg.seed)
    tol = cfg.tol or 1e-8
    for ident in C.recurrences() + C.gpow_identities():
        pts = C.random_points(ident.nvar, cfg.points, rng)
        tab, dt = _timed(lambda: C.check_identity(ident, pts, tol=tol, norm=cfg.norm, threads=cfg.threads))
        report.tables.append(tab)
        report.checks.append(_table_check("recurrences", ident.name, tab, cfg))
        report.checks[-1].seconds = dt
    for dc in C.display_checks():
        pts = C.random_points(dc.corrected.nvar, cfg.points, rng)
        tab = C.check_identity(dc.corrected, pts, tol=tol, relative=True, norm=cfg.norm)
        report.checks.append(_table_check("recurrences", f"corrected: {dc.corrected.name}", tab, cfg))


def suite_oracles(cfg: RunConfig, report: Report) -> None:
    from . import rearrange as R

    rng = np.random.default_rng(cfg.seed)
    worst, t0 = 0.0, time.perf_counter()
    n_inst = max(50, cfg.points)
    for _ in range(n_inst):
        n = int(rng.integers(1, 4))
        while True:
            l = [int(x) for x in rng.integers(1, 4, size=n + 1)]
            if sum(l) <= 6:
                break
        A = list(rng.uniform(0.5, 4.0, size=n + 1))
        a = R.simplex_G(l, A)
        b = R.contour_G(l, A)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    report.checks.append(Check("oracles", "simplex vs contour", worst < 1e-6, worst, 1e-6,
                               f"{n_inst} instances", time.perf_counter() - t0))
    worst, t0 = 0.0, time.perf_counter()
    for _ in range(n_inst):
        m = int(rng.integers(1, 5))
        X = rng.normal(size=(m, m))
        B = X @ X.T + m * np.eye(m) * 0.5
        poly = {}
        for _ in range(int(rng.integers(1, 5))):
            deg = int(rng.integers(0, 7))
            e = [0] * m
            for _ in range(deg):
                e[int(rng.integers(0, m))] += 1
            poly[tuple(e)] = poly.get(tuple(e), 0.0) + float(rng.normal())
        a = R.gaussian_moment(B, poly, method="series")
        b = R.gaussian_moment(B, poly, method="wick")
        worst = max(worst, abs(a - b) / max(1.0, abs(a), abs(b)))
    report.checks.append(Check("oracles", "operator series vs Wick", worst < 1e-12, worst, 1e-12,
                               f"{n_inst} instances", time.perf_counter() - t0))


def torus_case(theta, eps: Sequence[float], L_fit: int, L_formula: int | None = None, a=None):
    """(formula, fit) for k = exp(sum eps_s (U_s + U_s^*)/2)."""
    from . import nc_torus as T

    L_formula = L_formula or max(8, L_fit - 4)
    v = T.v2_formula_eval(T.cosine_weyl(theta, eps, L_formula), a)
    fit = T.heat_trace_fit(T.cosine_weyl(theta, eps, L_fit), theta, L_fit, a=a)
    return v, fit


def xcheck_error(formula: complex, fit: complex, eps: float) -> float:
    return abs(fit - formula) / max(abs(formula), eps ** 2)


def suite_torus(cfg: RunConfig, report: Report) -> None:
    from . import nc_torus as T

    theta = cfg.theta_matrix(2)
    tol = cfg.tol or 0.05
    fit, dt = _timed(lambda: T.heat_trace_fit(None, theta, cfg.L))
    v2 = abs(fit.V2)
    report.checks.append(Check("torus", "flat V2 in the fit window", v2 < 1e-6, v2, 1e-6, f"L={cfg.L}", dt))
    for e in cfg.eps:
        (v, f), dt = _timed(lambda: torus_case(theta, [e, 0.0], cfg.L))
        err = xcheck_error(v, f.V2, e)
        report.checks.append(Check("torus", f"fit vs formula eps={e}", err < tol, err, tol,
                                   f"formula {v.real:.6e} fit {f.V2.real:.6e}", dt))
    U1 = T.FourierElement.monomial(theta, (1, 0))
    U2 = T.FourierElement.monomial(theta, (0, 1))
    w = U2 * U1
    a = T.FourierElement.one(theta) + (U1 + U1.adjoint()) * 0.5 + (w + w.adjoint()) * 0.3
    e = max(cfg.eps)
    (v, f), dt = _timed(lambda: torus_case(theta, [e, 0.7 * e], cfg.L, a=a))
    err = xcheck_error(v, f.V2, e)
    report.checks.append(Check("torus", f"weighted noncommutative eps={e}", err < tol, err, tol,
                               f"formula {v.real:.6e} fit {f.V2.real:.6e}", dt))


SUITE_FNS = {"relations": suite_relations, "recurrences": suite_recurrences,
             "oracles": suite_oracles, "torus": suite_torus}


def run_suites(cfg: RunConfig, suite: str) -> Report:
    report = Report()
    names = list(SUITE_FNS) if suite == "all" else [suite]
    for name in names:
        log.info("running suite %s", name)
        SUITE_FNS[name](cfg, report)
    return report


def cmd_verify(args, cfg: RunConfig) -> int:
    report = run_suites(cfg, args.suite)
    fmt = cfg.format or "text"
    if fmt == "json":
        _emit(report.to_json(), cfg.out)
    elif fmt == "csv":
        if args.residuals and report.tables:
            text = "".join(t.to_csv() for t in report.tables)
        else:
            text = report.to_csv()
        _emit(text, cfg.out)
    else:
        _emit(report.to_text(), cfg.out)
    return 0 if report.passed else 1


# ---------------------------------------------------------------- heat-xcheck

def cmd_heat_xcheck(args, cfg: RunConfig) -> int:
    from . import nc_torus as T

    m = cfg.m
    theta = cfg.theta_matrix(m)
    if m != 2:
        raise ConfigError("the heat-trace cross-check is implemented for m=2")
    L_formula = args.L_formula or max(8, cfg.L - 4)
    if cfg.weyl:
        wf_formula = T.read_weyl_file(cfg.weyl, theta, L_formula)
        wf_fit = T.read_weyl_file(cfg.weyl, theta, cfg.L)
        cases = [("file", wf_formula, wf_fit, max(abs(v) for _, v in wf_fit.h.items()))]
    else:
        cases = [(f"eps={e}", T.cosine_weyl(theta, [e, 0.0], L_formula),
                  T.cosine_weyl(theta, [e, 0.0], cfg.L), e) for e in cfg.eps]
    rows = []
    fits = []
    for label, wfa, wfb, size in cases:
        t0 = time.perf_counter()
        v = T.v2_formula_eval(wfa, op=args.op, norm="pi")
        fit = T.heat_trace_fit(wfb, theta, cfg.L) if args.op == "delta_k" else None
        v0 = T.v0_formula_eval(wfa)
        row = {"case": label, "L": cfg.L, "L_formula": L_formula, "op": args.op,
               "V0_formula": v0.real, "V2_formula": v.real}
        if fit is not None:
            row.update(V0_fit=fit.V0.real, V2_fit=fit.V2.real, rel_error=xcheck_error(v, fit.V2, size),
                       fit_condition=fit.condition)
            fits.append(fit)
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    tol = cfg.tol or 0.05
    ok = all(r.get("rel_error", 0.0) < tol for r in rows)
    fmt = cfg.format or "text"
    if fmt == "json":
        _emit(json.dumps({"schema_version": SCHEMA_VERSION, "passed": ok, "tol": tol, "rows": rows}, indent=1),
              cfg.out)
    elif fmt == "csv":
        buf = io.StringIO()
        keys = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, ["schema_version"] + keys)
        w.writeheader()
        for r in rows:
            w.writerow({"schema_version": SCHEMA_VERSION, **r})
        if args.fit_table:
            for i, fit in enumerate(fits):
                fit.to_csv(f"{args.fit_table}.{i}.csv")
        _emit(buf.getvalue(), cfg.out)
    else:
        lines = [" ".join(f"{k}={v:.8g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items())
                 for r in rows]
        lines.append("within tolerance" if ok else "OUTSIDE TOLERANCE")
        _emit("\n".join(lines), cfg.out)
    return 0 if ok else 1


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override it")
    common.add_argument("--m", type=int)
    common.add_argument("--norm", choices=NORMS)
    common.add_argument("--tol", type=float)
    common.add_argument("--quad-tol", dest="quad_tol", type=float)
    common.add_argument("--grid", help="'default' or a file of grid rows")
    common.add_argument("--L", type=int, help="lattice truncation radius")
    common.add_argument("--theta", help="entries of theta above the diagonal")
    common.add_argument("--eps", help="Weyl-factor amplitudes")
    common.add_argument("--weyl", metavar="FILE", help="log of the Weyl factor, lines 'l1 .. lm re im'")
    common.add_argument("--out", metavar="FILE")
    common.add_argument("--format", choices=("json", "csv", "text"))
    common.add_argument("--threads", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--points", type=int, help="random points per identity")
    common.add_argument("--max-failed-fraction", dest="max_failed_fraction", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nctheat", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("v2", parents=[common], help="write a v2 term list")
    s.add_argument("--form", required=True, choices=FORMS)
    s.add_argument("--op", choices=OPS, help="default: delta_k for conformal, custom otherwise")
    s.set_defaults(fn=cmd_v2)

    s = sub.add_parser("eval-h", parents=[common], help="evaluate H_alpha")
    s.add_argument("--alpha", required=True, help="e.g. 2,1")
    s.add_argument("--z", help="z-values, one fewer than alpha")
    s.add_argument("--j", type=float, default=2.0)
    s.set_defaults(fn=cmd_eval_h)

    s = sub.add_parser("verify", parents=[common], help="run verification suites")
    s.add_argument("--suite", default="all", choices=SUITES)
    s.add_argument("--residuals", action="store_true", help="with --format csv, write residual tables")
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("heat-xcheck", parents=[common], help="heat-trace fit against the v2 formula")
    s.add_argument("--op", default="delta_k", choices=("delta_k", "delta_phi"))
    s.add_argument("--L-formula", dest="L_formula", type=int)
    s.add_argument("--fit-table", dest="fit_table", metavar="PREFIX")
    s.set_defaults(fn=cmd_heat_xcheck)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        return args.fn(args, cfg)
    except (ConfigError, OSError) as exc:
        parser.error(str(exc))
    except (DomainError, QuadratureError, TorusError) as exc:
        sys.stderr.write(f"nctheat: {type(exc).__name__}: {exc}\n")
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
