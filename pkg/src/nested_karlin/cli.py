"""Command-line entry point.

One executable, seven subcommands (weights, identities, simulate, moments,
limits, sample, verify), CSV on stdout or --out, key=value config files with
flag override, and a fixed exit-code contract:

    0  success
    1  validation / usage error
    2  numeric or budget failure
    3  a `verify` run whose acceptance condition failed

Every run echoes its effective configuration to stderr as `# key=value`
lines, so CSV output on stdout stays clean while runs remain auditable.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .errors import NumericalError, ValidationError
from .gaussian import (
    build_grid,
    draws_to_csv_rows,
    sample,
    sample_csv_header,
    sample_Z1_whitenoise,
)
from .harness import (
    ExperimentConfig,
    run_asymptotic_trend,
    run_clt_check,
    run_depoissonization_check,
    run_moment_check,
)
from .kernels import binomial_identity_lhs, convolution_identity
from .limits import closed_cov, comparison_table
from .moments import (
    cov_K_cross_gen,
    cov_K_cross_level,
    cov_K_same,
    cov_K_star_same,
    depoissonization_constant,
    mean_K,
    mean_K_binomial,
    mean_K_star,
)
from .scheme import OccupancyTrajectory, simulate_deterministic, simulate_poissonized
from .weights import WeightFamily

MOMENTS_CSV_HEADER = "quantity,j,l,l2,s,t,value,error_bound,boxes"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1 (not 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _csv_floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip() != ""]


def _family(ns) -> WeightFamily:
    if ns.family == "weibull":
        return WeightFamily.weibull_like(ns.alpha)
    if ns.family == "geometric":
        return WeightFamily.geometric(ns.p)
    probs = _csv_floats(ns.probs)
    if not probs:
        raise ValidationError("finite family needs --probs p1,p2,...")
    return WeightFamily.finite(probs)


def _threads(ns) -> int:
    if getattr(ns, "threads", None):
        return int(ns.threads)
    env = os.environ.get("NESTED_KARLIN_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(
                f"NESTED_KARLIN_THREADS must be an integer, got {env!r}"
            ) from exc
    return os.cpu_count() or 1


def _echo_config(ns) -> None:
    skip = {"func"}
    for key in sorted(vars(ns)):
        if key in skip:
            continue
        print(f"# {key}={getattr(ns, key)}", file=sys.stderr)


def _emit(lines, out: str) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_family_flags(p) -> None:
    p.add_argument("--family", choices=("weibull", "geometric", "finite"),
                   default="weibull", help="weight family")
    p.add_argument("--alpha", type=float, default=0.5,
                   help="weibull-like exponent in (0,1)")
    p.add_argument("--p", type=float, default=0.5, help="geometric parameter")
    p.add_argument("--probs", default="", help="finite family probabilities p1,p2,...")


def _add_common(p, *, seed=0) -> None:
    p.add_argument("--config", default="", help="key=value config file (flags override)")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", default="", help="output CSV path (default stdout)")
    p.add_argument("--threads", type=int, default=0,
                   help="worker count (default: NESTED_KARLIN_THREADS or CPU count)")


# ---------------------------------------------------------------------------
# handlers


def _cmd_weights_table(ns) -> int:
    fam = _family(ns)
    lines = ["k,weight,cumulative"]
    acc = 0.0
    for k in range(1, ns.k_max + 1):
        w = float(fam.weight(k))
        acc += w
        lines.append(f"{k},{w!r},{acc!r}")
    _emit(lines, ns.out)
    return 0


def _cmd_weights_rho(ns) -> int:
    fam = _family(ns)
    lines = ["t,rho"]
    for t in _csv_floats(ns.t):
        lines.append(f"{t!r},{fam.rho(t)}")
    _emit(lines, ns.out)
    return 0


def _cmd_weights_profile(ns) -> int:
    fam = _family(ns)
    lines = ["lambda,t,ratio"]
    for lam, t, ratio in fam.dehaan_profile(_csv_floats(ns.lambdas), _csv_floats(ns.times)):
        lines.append(f"{lam!r},{t!r},{ratio!r}")
    _emit(lines, ns.out)
    return 0


def _cmd_identities(ns) -> int:
    cells = 0
    for a in range(ns.max_n + 1):
        for r in range(ns.max_n + 1):
            for n in range(ns.max_n + 1):
                lhs, rhs = convolution_identity(a, r, n, max_value=ns.max_n)
                if lhs != rhs:
                    print(f"convolution identity FAILED at a={a} r={r} n={n}")
                    return 2
                cells += 1
    rng = np.random.default_rng(ns.seed)
    worst = 0.0
    checks = 0
    for _ in range(100):
        a, b = rng.uniform(0.0, 10.0, size=2)
        a, b = a or 1e-3, b or 1e-3
        for l in range(1, ns.max_l + 1):
            got = binomial_identity_lhs(l, a, b)
            worst = max(worst, abs(got - 1.0 / l) * l)
            checks += 1
    ok = worst <= 1e-12
    print(
        f"identities {'ok' if ok else 'FAILED'}: convolution_cells={cells} "
        f"binomial_checks={checks} worst_rel={worst:.3e}"
    )
    return 0 if ok else 2


def _cmd_simulate(ns) -> int:
    fam = _family(ns)
    lines = [OccupancyTrajectory.csv_header()]
    if ns.deterministic_n:
        grid = [int(x) for x in _csv_floats(ns.times)] if ns.times else [int(ns.deterministic_n)]
        for r in range(ns.replicas):
            traj = simulate_deterministic(
                fam, ns.deterministic_n, ns.generations, ns.levels, grid,
                ns.seed, replica=r,
            )
            lines.extend(traj.to_csv_rows())
    else:
        times = _csv_floats(ns.times) if ns.times else [float(ns.t)]
        for r in range(ns.replicas):
            traj = simulate_poissonized(
                fam, times, ns.generations, ns.levels, ns.seed, replica=r
            )
            lines.extend(traj.to_csv_rows())
    _emit(lines, ns.out)
    return 0


def _moment_row(quantity, j, l, l2, s, t, est) -> str:
    def num(x):
        return "" if x is None else repr(float(x))

    l2txt = "" if l2 is None else str(l2)
    return (
        f"{quantity},{j},{l},{l2txt},{num(s)},{num(t)},"
        f"{est.value!r},{est.error_bound!r},{est.boxes_enumerated}"
    )


def _cmd_moments_mean(ns) -> int:
    fam = _family(ns)
    if ns.binomial:
        est = mean_K_binomial(fam, ns.j, ns.l, ns.n, prune=ns.prune)
        row = _moment_row("mean_K_binomial", ns.j, ns.l, None, None, float(ns.n), est)
    elif ns.star:
        est = mean_K_star(fam, ns.j, ns.l, ns.t, prune=ns.prune)
        row = _moment_row("mean_K_star", ns.j, ns.l, None, None, ns.t, est)
    else:
        est = mean_K(fam, ns.j, ns.l, ns.t, prune=ns.prune)
        row = _moment_row("mean_K", ns.j, ns.l, None, None, ns.t, est)
    _emit([MOMENTS_CSV_HEADER, row], ns.out)
    return 0


def _cmd_moments_cov(ns) -> int:
    fam = _family(ns)
    s = ns.s if ns.s is not None else ns.t
    if ns.which == "same":
        est = cov_K_same(fam, ns.j, ns.l, s, ns.t, prune=ns.prune)
        row = _moment_row("cov_K_same", ns.j, ns.l, None, s, ns.t, est)
    elif ns.which == "star":
        est = cov_K_star_same(fam, ns.j, ns.l, s, ns.t, prune=ns.prune)
        row = _moment_row("cov_K_star_same", ns.j, ns.l, None, s, ns.t, est)
    elif ns.which == "levels":
        est = cov_K_cross_level(fam, ns.j, ns.l, ns.l2, s, ns.t, prune=ns.prune)
        row = _moment_row("cov_K_cross_level", ns.j, ns.l, ns.l2, s, ns.t, est)
    else:  # gens
        est = cov_K_cross_gen(
            fam, ns.gen_i, ns.j, ns.l, ns.l2, s, ns.t, prune=ns.prune
        )
        row = _moment_row(
            f"cov_K_cross_gen_{ns.gen_i}_{ns.j}", ns.j, ns.l, ns.l2, s, ns.t, est
        )
    _emit([MOMENTS_CSV_HEADER, row], ns.out)
    return 0


def _cmd_moments_gap(ns) -> int:
    fam = _family(ns)
    a = mean_K(fam, ns.j, ns.l, ns.t, prune=ns.prune)
    b = mean_K_binomial(fam, ns.j, ns.l, int(math.floor(ns.t)), prune=ns.prune)
    gap = abs(a.value - b.value)
    bound = depoissonization_constant(ns.l)
    lines = [
        MOMENTS_CSV_HEADER + ",uniform_bound",
        _moment_row("depoissonization_gap", ns.j, ns.l, None, None, ns.t,
                    type(a)(gap, a.error_bound + b.error_bound,
                            a.boxes_enumerated + b.boxes_enumerated, ns.prune))
        + f",{bound!r}",
    ]
    _emit(lines, ns.out)
    return 0


def _cmd_limits_cov(ns) -> int:
    val = closed_cov(ns.kind, ns.l1, ns.l2, ns.delta)
    print(repr(val))
    return 0


def _cmd_limits_table(ns) -> int:
    kinds = [k.strip() for k in ns.kinds.split(",") if k.strip()]
    pairs = [
        (l1, l2)
        for l1 in range(1, ns.max_l + 1)
        for l2 in range(1, ns.max_l + 1)
    ]
    rows = comparison_table(kinds, pairs, _csv_floats(ns.deltas))
    lines = ["kind,l1,l2,delta,closed_form,quadrature,abs_diff"]
    for kind, l1, l2, d, closed, quad, diff in rows:
        lines.append(f"{kind},{l1},{l2},{d!r},{closed!r},{quad!r},{diff!r}")
    _emit(lines, ns.out)
    return 0


def _cmd_sample_limit(ns) -> int:
    grid = build_grid(ns.kind, _csv_floats(ns.u_grid), ns.levels)
    draws = sample(grid, ns.n, ns.seed)
    lines = [sample_csv_header()]
    lines.extend(draws_to_csv_rows(draws, grid.labels()))
    _emit(lines, ns.out)
    return 0


def _cmd_sample_whitenoise(ns) -> int:
    u = _csv_floats(ns.u_grid)
    draws = sample_Z1_whitenoise(
        u, x_window=ns.x_window, x_step=ns.x_step, y_step=ns.y_step,
        n=ns.n, seed=ns.seed,
    )
    lines = [sample_csv_header()]
    lines.extend(draws_to_csv_rows(draws, [(1, float(x)) for x in u]))
    _emit(lines, ns.out)
    return 0


def _experiment_config(ns) -> ExperimentConfig:
    kwargs = dict(
        family_kind=ns.family,
        alpha=ns.alpha,
        p=ns.p,
        probs=tuple(_csv_floats(ns.probs)),
        generations=ns.generations,
        levels=ns.levels,
        replicas=ns.replicas,
        seed=ns.seed,
        prune=ns.prune,
        threads=_threads(ns),
        out=ns.out,
    )
    if hasattr(ns, "t"):
        kwargs["t"] = ns.t
    if hasattr(ns, "deterministic_n"):
        kwargs["deterministic_n"] = ns.deterministic_n
    if hasattr(ns, "T"):
        kwargs["T"] = ns.T
    if hasattr(ns, "T_grid") and ns.T_grid:
        kwargs["T_grid"] = tuple(_csv_floats(ns.T_grid))
    if hasattr(ns, "t_grid") and ns.t_grid:
        kwargs["t_grid"] = tuple(_csv_floats(ns.t_grid))
    if hasattr(ns, "u_grid"):
        kwargs["u_grid"] = tuple(_csv_floats(ns.u_grid))
    return ExperimentConfig(**kwargs)


_VERIFY_RUNNERS = {
    "moment": run_moment_check,
    "clt": run_clt_check,
    "trend": run_asymptotic_trend,
    "gap": run_depoissonization_check,
}


def _cmd_verify(ns) -> int:
    runner = _VERIFY_RUNNERS[ns.check]
    report = runner(_experiment_config(ns))
    flagged = report.flagged
    print(
        f"verify {ns.check}: passed={report.passed} "
        f"cells={len(report.cells)} flagged={len(flagged)} "
        f"pass_fraction={report.pass_fraction:.4f} "
        f"runtime={report.runtime_seconds:.1f}s"
    )
    if not ns.out:
        sys.stdout.write(report.to_csv())
    return 0 if report.passed else 3


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> _Parser:
    root = _Parser(prog="nested-karlin",
                   description="Nested Karlin occupancy scheme toolkit")
    subs = root.add_subparsers(dest="command", parser_class=_Parser)
    subs.required = True

    w = subs.add_parser("weights", help="inspect a weight family")
    wsubs = w.add_subparsers(dest="action", parser_class=_Parser)
    wsubs.required = True
    wt = wsubs.add_parser("table", help="dump k,weight,cumulative rows")
    _add_family_flags(wt); _add_common(wt)
    wt.add_argument("--k-max", type=int, default=20)
    wt.set_defaults(func=_cmd_weights_table)
    wr = wsubs.add_parser("rho", help="counting function rho(t)")
    _add_family_flags(wr); _add_common(wr)
    wr.add_argument("--t", default="100.0", help="comma-separated times")
    wr.set_defaults(func=_cmd_weights_rho)
    wp = wsubs.add_parser("profile", help="de Haan profile ratios")
    _add_family_flags(wp); _add_common(wp)
    wp.add_argument("--lambdas", default="2.0,8.0")
    wp.add_argument("--times", default="100.0,10000.0")
    wp.set_defaults(func=_cmd_weights_profile)

    idn = subs.add_parser("identities", help="combinatorial identity checks")
    isubs = idn.add_subparsers(dest="action", parser_class=_Parser)
    isubs.required = True
    ic = isubs.add_parser("check")
    _add_common(ic, seed=7)
    ic.add_argument("--max-l", type=int, default=12)
    ic.add_argument("--max-n", type=int, default=30)
    ic.set_defaults(func=_cmd_identities)

    sim = subs.add_parser("simulate", help="simulate occupancy trajectories")
    _add_family_flags(sim); _add_common(sim, seed=1)
    sim.add_argument("--t", type=float, default=100.0, help="single Poissonized time")
    sim.add_argument("--times", default="", help="snapshot grid (comma-separated)")
    sim.add_argument("--deterministic-n", type=int, default=0,
                     help="run the fixed-ball-count scheme with n balls")
    sim.add_argument("--generations", type=int, default=2)
    sim.add_argument("--levels", type=int, default=3)
    sim.add_argument("--replicas", type=int, default=1)
    sim.set_defaults(func=_cmd_simulate)

    mom = subs.add_parser("moments", help="exact finite-time moments")
    msubs = mom.add_subparsers(dest="action", parser_class=_Parser)
    msubs.required = True

    mm = msubs.add_parser("mean")
    _add_family_flags(mm); _add_common(mm)
    mm.add_argument("--j", type=int, default=1)
    mm.add_argument("--l", type=int, default=1)
    mm.add_argument("--t", type=float, default=100.0)
    mm.add_argument("--n", type=int, default=100, help="ball count for --binomial")
    mm.add_argument("--star", action="store_true", help="exactly-l boxes")
    mm.add_argument("--binomial", action="store_true", help="deterministic scheme")
    mm.add_argument("--prune", type=float, default=1e-9)
    mm.set_defaults(func=_cmd_moments_mean)

    mc = msubs.add_parser("cov")
    _add_family_flags(mc); _add_common(mc)
    mc.add_argument("--which", choices=("same", "star", "levels", "gens"),
                    default="same")
    mc.add_argument("--j", type=int, default=1)
    mc.add_argument("--gen-i", type=int, default=1, help="outer generation for --which gens")
    mc.add_argument("--l", type=int, default=1)
    mc.add_argument("--l2", type=int, default=2)
    mc.add_argument("--s", type=float, default=None)
    mc.add_argument("--t", type=float, default=100.0)
    mc.add_argument("--prune", type=float, default=1e-9)
    mc.set_defaults(func=_cmd_moments_cov)

    mg = msubs.add_parser("gap")
    _add_family_flags(mg); _add_common(mg)
    mg.add_argument("--j", type=int, default=1)
    mg.add_argument("--l", type=int, default=1)
    mg.add_argument("--t", type=float, default=100.0)
    mg.add_argument("--prune", type=float, default=1e-9)
    mg.set_defaults(func=_cmd_moments_gap)

    lim = subs.add_parser("limits", help="limit covariances")
    lsubs = lim.add_subparsers(dest="action", parser_class=_Parser)
    lsubs.required = True
    lc = lsubs.add_parser("cov")
    _add_common(lc)
    lc.add_argument("--kind", choices=("Z", "X"), required=True)
    lc.add_argument("--l1", type=int, required=True)
    lc.add_argument("--l2", type=int, required=True)
    lc.add_argument("--delta", type=float, default=0.0)
    lc.set_defaults(func=_cmd_limits_cov)
    lt = lsubs.add_parser("table")
    _add_common(lt)
    lt.add_argument("--kinds", default="Z,X")
    lt.add_argument("--max-l", type=int, default=3)
    lt.add_argument("--deltas", default="-2.0,-1.0,-0.5,0.0,0.5,1.0,2.0")
    lt.set_defaults(func=_cmd_limits_table)

    smp = subs.add_parser("sample", help="draw from the Gaussian limit laws")
    ssubs = smp.add_subparsers(dest="action", parser_class=_Parser)
    ssubs.required = True
    sl = ssubs.add_parser("limit")
    _add_common(sl)
    sl.add_argument("--kind", choices=("Z", "X"), default="Z")
    sl.add_argument("--levels", type=int, default=3)
    sl.add_argument("--u-grid", default="0.0,0.5,1.0")
    sl.add_argument("--n", type=int, default=100)
    sl.set_defaults(func=_cmd_sample_limit)
    sw = ssubs.add_parser("whitenoise")
    _add_common(sw)
    sw.add_argument("--u-grid", default="0.0,1.0")
    sw.add_argument("--x-window", type=float, default=30.0)
    sw.add_argument("--x-step", type=float, default=0.01)
    sw.add_argument("--y-step", type=float, default=0.01)
    sw.add_argument("--n", type=int, default=100)
    sw.set_defaults(func=_cmd_sample_whitenoise)

    ver = subs.add_parser("verify", help="run a verification experiment")
    vsubs = ver.add_subparsers(dest="check", parser_class=_Parser)
    vsubs.required = True
    for name in ("moment", "clt", "trend", "gap"):
        vp = vsubs.add_parser(name)
        _add_family_flags(vp)
        _add_common(vp, seed=2026)
        vp.add_argument("--generations", type=int, default=2)
        vp.add_argument("--levels", type=int, default=3)
        vp.add_argument("--replicas", type=int, default=2000)
        vp.add_argument("--prune", type=float, default=1e-9)
        if name == "moment":
            vp.add_argument("--t", type=float, default=3000.0)
            vp.add_argument("--deterministic-n", dest="deterministic_n",
                            type=int, default=0)
        elif name == "clt":
            vp.add_argument("--T", type=float, default=8.0)
            vp.add_argument("--u-grid", dest="u_grid", default="0.0,0.5,1.0")
            vp.set_defaults(replicas=4000)
        elif name == "trend":
            vp.add_argument("--T-grid", dest="T_grid", default="10.0,15.0,20.0,25.0")
        else:
            vp.add_argument("--t-grid", dest="t_grid", default="")
        vp.set_defaults(func=_cmd_verify, check=name)
    return root


def _expand_config(argv: list) -> list:
    """Insert config-file entries as flags right after the subcommand tokens
    so explicitly passed flags (parsed later) override them."""
    if "--config" not in " ".join(argv):
        return argv
    head = []
    tail = list(argv)
    while tail and not tail[0].startswith("-"):
        head.append(tail.pop(0))
    path = ""
    for i, tok in enumerate(tail):
        if tok == "--config" and i + 1 < len(tail):
            path = tail[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if not path:
        return argv
    try:
        with open(path) as fh:
            entries = []
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValidationError(f"config line without '=': {line!r}")
                key, value = line.split("=", 1)
                entries.append(f"--{key.strip().replace('_', '-')}={value.strip()}")
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    return head + entries + tail


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv)
        ns = parser.parse_args(argv)
        if hasattr(ns, "threads"):
            ns.threads = _threads(ns)  # resolve flag/env/cpu before echoing
        _echo_config(ns)
        return ns.func(ns)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
