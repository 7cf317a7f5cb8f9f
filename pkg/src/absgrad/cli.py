"""Command-line surface.

Subcommands: eval, grad, likq, limiting, sample, verify, train, figure.
Problems are JSON tape files or the built-in generator
(--problem builtin:phimu with --mu).  Exit codes: 0 ok, 1 validation
error, 2 numerical assertion failure; errors go to stderr as JSON.
"""

import argparse
import json
import sys

import numpy as np

from . import problems
from .absnormal import DEFAULT_CAP, DEFAULT_KINK_TOL, extract
from .gradients import (DEFAULT_RANK_TOL, check_likq, check_rank_stability,
                        grad_xi, limiting_gradients, xi_from_policy)
from .oracle import SamplingPlan, sample_bouligand
from .relunet import Dataset, ReluNetSpec, bundled_1d_dataset, sgd_train
from .tape import EvalDomainError, TapeError, forward_eval, parse_tape
from .verify import batch_decomposition_suite, convex_combination_suite

# slope used for |.|'(0) in the backward sweep by mainstream AD tools
PRESETS = {
    "jax": 1.0,
    "tensorflow": 0.0,
    "pytorch": 0.0,
    "reversediff": 1.0,
    "adolc": 0.0,
    "codipack": 0.0,
}


class CliValidationError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliValidationError(message)


def _fmt(v):
    return f"{v:.17g}"


def _fmt_vec(vec):
    return ",".join(_fmt(v) for v in vec)


def _parse_vector(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise CliValidationError(f"not a comma-separated vector: {text!r}")


def _load_problem(args):
    name = args.problem
    if name.startswith("builtin:"):
        key = name.split(":", 1)[1]
        if key == "phimu":
            mu = 1.0 if args.mu is None else args.mu
            return problems.phimu_tape(mu)
        raise CliValidationError(f"unknown builtin problem {key!r}")
    if args.mu is not None:
        raise CliValidationError(
            "--mu only applies to builtin:phimu; a tape file fixes it")
    with open(name, "r", encoding="utf-8") as fh:
        return parse_tape(fh.read())


def _write(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _emit_gradient_set(gset, args):
    if args.format == "json":
        _write(gset.to_json() + "\n", args.out)
    else:
        _write(gset.to_csv(), args.out)


def _cmd_eval(args):
    tape = _load_problem(args)
    x = _parse_vector(args.x)
    xi = _parse_vector(args.xi) if args.xi else None
    if args.point:
        if xi is not None:
            raise CliValidationError("--point dumps the plain abs-normal "
                                     "data; drop --xi")
        print(extract(tape, x, args.kink_tol).to_json())
        return 0
    trace = forward_eval(tape, x, xi)
    sigma = extract(tape, x, args.kink_tol).sigma if xi is None else None
    if args.format == "json":
        doc = {"phi": trace.phi, "z": trace.z.tolist(),
               "abs_values": trace.abs_values.tolist()}
        if sigma is not None:
            doc["sigma"] = sigma.tolist()
        print(json.dumps(doc))
    else:
        print(f"phi: {_fmt(trace.phi)}")
        print(f"z: {_fmt_vec(trace.z)}")
        if sigma is not None:
            print("sigma: " + ",".join(str(int(v)) for v in sigma))
    return 0


def _cmd_grad(args):
    tape = _load_problem(args)
    x = _parse_vector(args.x)
    point = extract(tape, x, args.kink_tol)
    if args.xi is not None:
        xi = _parse_vector(args.xi)
    else:
        zeta = PRESETS[args.preset]
        xi = xi_from_policy(point.sigma, zeta)
    g = grad_xi(point, xi)
    if args.format == "json":
        print(json.dumps({"gradient": g.tolist(), "xi": np.asarray(xi).tolist(),
                          "sigma": point.sigma.tolist()}))
    else:
        print(f"gradient: {_fmt_vec(g)}")
    return 0


def _cmd_likq(args):
    tape = _load_problem(args)
    point = extract(tape, _parse_vector(args.x), args.kink_tol)
    report = check_likq(point, args.rank_tol)
    print(str(report))
    print("singular values: " + _fmt_vec(report.singular_values))
    stability = check_rank_stability(point, args.rank_tol, args.cap)
    print(f"rank stability: {len(stability.ranks)} sign patterns, "
          f"all full rank: {stability.all_full}")
    return 0


def _cmd_limiting(args):
    tape = _load_problem(args)
    point = extract(tape, _parse_vector(args.x), args.kink_tol)
    gset = limiting_gradients(point, cap=args.cap, rank_tol=args.rank_tol)
    _emit_gradient_set(gset, args)
    return 0


def _cmd_sample(args):
    tape = _load_problem(args)
    x = _parse_vector(args.x)
    plan = SamplingPlan(radius=args.radius, count=args.count, seed=args.seed,
                        kink_tol=args.kink_tol, cluster_tol=args.cluster_tol,
                        at_anchor=args.at_anchor)
    dump = [] if args.dump else None
    gset = sample_bouligand(tape, x, plan, samples_out=dump)
    _emit_gradient_set(gset, args)
    if args.dump:
        n, s = tape.n_inputs, tape.n_switch
        header = [f"x_{k + 1}" for k in range(n)]
        header += [f"sigma_{i + 1}" for i in range(s)]
        header += [f"g_{k + 1}" for k in range(n)]
        lines = [",".join(header)]
        for xs, sig, g in dump:
            cells = [_fmt(v) for v in xs]
            cells += [str(int(v)) for v in sig]
            cells += [_fmt(v) for v in g]
            lines.append(",".join(cells))
        _write("\n".join(lines) + "\n", args.dump)
    return 0


def _cmd_verify(args):
    reports = []
    if args.suite in ("all", "convex-combination"):
        reports.append(convex_combination_suite(
            n_instances=args.count or 200, seed=args.seed))
    if args.suite in ("all", "batch-decomposition"):
        reports.append(batch_decomposition_suite(
            n_instances=args.count or 20, seed=args.seed))
    failed = False
    for report in reports:
        for line in report.lines():
            print(line)
        failed |= not report.passed
    if failed:
        raise AssertionError("verification suite failed")
    return 0


def _load_net(args):
    if args.net == "builtin:relu1d":
        return ReluNetSpec((1, 1, 1)), bundled_1d_dataset()
    with open(args.net, "r", encoding="utf-8") as fh:
        spec = ReluNetSpec.from_document(json.load(fh))
    if args.data is None:
        raise CliValidationError("--data required unless --net is a builtin")
    with open(args.data, "r", encoding="utf-8") as fh:
        data = Dataset.from_document(json.load(fh))
    return spec, data


def _cmd_train(args):
    spec, data = _load_net(args)
    if args.data and args.net == "builtin:relu1d":
        with open(args.data, "r", encoding="utf-8") as fh:
            data = Dataset.from_document(json.load(fh))
    traj = sgd_train(spec, data, step=args.step, iterations=args.iters,
                     batch_size=args.batch_size, zeta=args.zeta,
                     seed=args.seed)
    print(f"initial loss: {_fmt(traj.initial_loss)}")
    print(f"final loss: {_fmt(traj.final_loss)}")
    if args.out:
        _write(traj.to_csv(), args.out)
    if args.checkpoint:
        doc = spec.to_document(params=traj.params)
        _write(json.dumps(doc) + "\n", args.checkpoint)
    return 0


def _cmd_figure(args):
    tape = _load_problem(args)
    if tape.n_inputs != 2:
        raise CliValidationError("figure needs a two-input problem")
    prefix = args.out_prefix

    half = args.extent
    grid = np.linspace(-half, half, args.grid)
    lines = ["x1,x2,phi"]
    for x1 in grid:
        for x2 in grid:
            phi = forward_eval(tape, np.array([x1, x2])).phi
            lines.append(f"{_fmt(x1)},{_fmt(x2)},{_fmt(phi)}")
    _write("\n".join(lines) + "\n", f"{prefix}levelsets.csv")

    point = extract(tape, _parse_vector(args.x), args.kink_tol)
    gset = limiting_gradients(point, cap=args.cap, rank_tol=args.rank_tol)
    _write(gset.to_csv(), f"{prefix}gradients.csv")
    print(f"wrote {prefix}levelsets.csv and {prefix}gradients.csv")
    return 0


def _add_problem_flags(p):
    p.add_argument("--problem", required=True,
                   help="tape JSON file or builtin:phimu")
    p.add_argument("--mu", type=float, default=None,
                   help="kink weight for builtin:phimu")
    p.add_argument("--kink-tol", type=float, default=DEFAULT_KINK_TOL,
                   dest="kink_tol")


def _add_output_flags(p):
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    parser = _Parser(prog="absgrad",
                     description="abs-normal forms and generalized gradients")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate phi, z and sigma at a point")
    _add_problem_flags(p)
    p.add_argument("--x", required=True)
    p.add_argument("--xi", default=None, help="frozen slopes in [-1,1]^s")
    p.add_argument("--point", action="store_true",
                   help="dump the full extracted abs-normal data as JSON")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("grad", help="backward gradient under a slope policy")
    _add_problem_flags(p)
    p.add_argument("--x", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--xi", default=None, help="explicit slope vector")
    group.add_argument("--preset", choices=sorted(PRESETS), default="pytorch",
                       help="AD-tool slope convention for kinks")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_grad)

    p = sub.add_parser("likq", help="kink qualification and rank stability")
    _add_problem_flags(p)
    p.add_argument("--x", required=True)
    p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL,
                   dest="rank_tol")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.set_defaults(func=_cmd_likq)

    p = sub.add_parser("limiting",
                       help="enumerate definite-signature gradients")
    _add_problem_flags(p)
    p.add_argument("--x", required=True)
    p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL,
                   dest="rank_tol")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    _add_output_flags(p)
    p.set_defaults(func=_cmd_limiting)

    p = sub.add_parser("sample", help="sampled limiting-gradient clusters")
    _add_problem_flags(p)
    p.add_argument("--x", required=True)
    p.add_argument("--radius", type=float, default=1e-3)
    p.add_argument("--count", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cluster-tol", type=float, default=None,
                   dest="cluster_tol")
    p.add_argument("--at-anchor", action="store_true", dest="at_anchor",
                   help="evaluate each selection gradient at the anchor")
    p.add_argument("--dump", default=None,
                   help="write per-sample (x, sigma, gradient) CSV")
    _add_output_flags(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("verify", help="run the identity verification suites")
    p.add_argument("--suite", default="all",
                   choices=("all", "convex-combination", "batch-decomposition"))
    p.add_argument("--count", type=int, default=None,
                   help="instances per suite (defaults per suite)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("train", help="stochastic subgradient descent")
    p.add_argument("--net", required=True,
                   help="network JSON or builtin:relu1d")
    p.add_argument("--data", default=None, help="dataset JSON")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=2, dest="batch_size")
    p.add_argument("--zeta", type=float, default=0.0,
                   help="shared slope policy for kinks, in [-1,1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="trajectory CSV")
    p.add_argument("--checkpoint", default=None, help="trained network JSON")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("figure",
                       help="emit level-set and gradient-set CSV data")
    _add_problem_flags(p)
    p.add_argument("--x", default="0,0", help="anchor for the gradient set")
    p.add_argument("--grid", type=int, default=81)
    p.add_argument("--extent", type=float, default=2.0)
    p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL,
                   dest="rank_tol")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--out-prefix", default="figure_", dest="out_prefix")
    p.set_defaults(func=_cmd_figure)

    return parser


# EvalDomainError (bad user data) is validation and must win over the
# ArithmeticError catch-all below, so the validation clause comes first.
_VALIDATION_ERRORS = (CliValidationError, TapeError, EvalDomainError,
                      ValueError, KeyError, OSError)
_NUMERICAL_ERRORS = (AssertionError, RuntimeError, ArithmeticError)


def _emit_error(exc):
    doc = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    node = getattr(exc, "node", None)
    if node is not None:
        doc["error"]["node"] = node
    print(json.dumps(doc), file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        _emit_error(exc)
        return 1
    except _NUMERICAL_ERRORS as exc:
        _emit_error(exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
