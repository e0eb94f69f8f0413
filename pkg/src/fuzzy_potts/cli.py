"""Command-line entry point ``fuzzy-potts``.

Exit status: 0 on success, 1 on a domain error or failed verification,
2 on a usage error.  JSON goes to stdout (or --output) with sorted keys;
CSV files start with ``#`` metadata lines.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .mc import RNG_NAME, default_threads, estimate_kernel, estimate_occupation, project_occupation
from .mf_exact import brute_force_kernel, fuzzy_kernel
from .mf_limit import discontinuity_set, limiting_fuzzy_kernel
from .model import ModelError, ModelParams, validate
from .scan import scan_kernel
from .tree import (RootedTree, b_recursion_finite, fixed_point_b, tree_critical_beta,
                   verify_ratio_identity, wired_gap)
from .verify import SUITES, oracle_check


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _rounded(obj, digits: int):
    if isinstance(obj, dict):
        return {k: _rounded(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return _rounded(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.{digits}g}")
    return obj


def _metadata(args, params: ModelParams | None = None, **extra) -> dict:
    meta = {"program": "fuzzy-potts", "version": __version__, "command": args.command}
    if params is not None:
        meta["params"] = params.to_dict()
    meta.update(extra)
    return meta


def _emit_json(args, payload: dict) -> None:
    text = json.dumps(_rounded(payload, args.precision), sort_keys=True, indent=2,
                      ensure_ascii=False) + "\n"
    _write(args, text)


def _write(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _emit_csv(args, meta: dict, header: list[str], rows) -> None:
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}: {json.dumps(_rounded(meta[key], args.precision), sort_keys=True)}\n")
    buf.write(",".join(header) + "\n")
    fmt = f"{{:.{args.precision}g}}"
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else str(v) if isinstance(v, (int, np.integer))
                           else fmt.format(v) for v in row) + "\n")
    _write(args, buf.getvalue())


def _params(args, require_partition: bool = True) -> ModelParams:
    data = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
    for key in ("q", "beta", "partition"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if "partition" not in data and not require_partition:
        data["partition"] = []
    missing = [k for k in ("q", "beta", "partition") if k not in data]
    if missing:
        raise ModelError(f"missing parameter(s): {', '.join(missing)} (give flags or --config)")
    return ModelParams.from_dict(data)


def cmd_tree_gap(args) -> int:
    params = validate(_params(args))
    extra = args.extra_children
    if args.tree:
        tree = RootedTree.from_json(args.tree)
        b = b_recursion_finite(tree, params)
        kids = sorted(tree.children(tree.root), key=lambda y: -b[y])
        if len(kids) < 2:
            raise ModelError("the root needs at least two children")
        b1, b2 = b[kids[0]], b[kids[1]]
        if extra is None:
            extra = len(kids) - 2
        source = {"tree": str(args.tree), "root_children": len(kids)}
    else:
        b1 = b2 = fixed_point_b(args.d, params, args.tol)
        source = {"d": args.d}
    rec = wired_gap(b1, b2, params, extra or 0)
    payload = {"metadata": _metadata(args, params, extra_children=extra or 0, **source),
               "b1": b1, "b2": b2, **rec.to_dict(),
               "ratio_identity": verify_ratio_identity(b1, b2, params)}
    _emit_json(args, payload)
    return 0


def cmd_tree_critical(args) -> int:
    beta = tree_critical_beta(args.d, args.q, args.tol, args.beta_max)
    _emit_json(args, {"metadata": _metadata(args, d=args.d, q=args.q, tol=args.tol),
                      "beta_c": beta})
    return 0


def cmd_mf_kernel(args) -> int:
    # validate() would reject the all-singleton partition, which is allowed here
    params = _params(args)
    if not params.beta >= 0:
        raise ModelError(f"beta must be >= 0, got {params.beta}")
    if args.N is not None and args.N != sum(args.counts) + 1:
        raise ModelError(f"counts sum to {sum(args.counts)} but N - 1 = {args.N - 1}")
    probs = brute_force_kernel(params, args.counts) if args.oracle else fuzzy_kernel(params, args.counts)
    _emit_json(args, {"metadata": _metadata(args, params, N=sum(args.counts) + 1,
                                            counts=args.counts, method="brute-force" if args.oracle else "exact"),
                      "probs": probs})
    return 0


def cmd_mf_oracle_check(args) -> int:
    res = oracle_check(args.grid)
    if not args.rows:
        res.pop("rows")
    _emit_json(args, {"metadata": _metadata(args, grid=args.grid), **res})
    return 0 if res["passed"] else 1


def cmd_mf_limit(args) -> int:
    params = validate(_params(args))
    sides = None if args.side is None else [args.side] * params.s
    probs = limiting_fuzzy_kernel(params, args.n, sides=sides)
    _emit_json(args, {"metadata": _metadata(args, params, n=args.n),
                      "probs": probs, "jumps": [j.to_dict() for j in discontinuity_set(params)]})
    return 0


def cmd_mf_scan(args) -> int:
    params = validate(_params(args))
    res = scan_kernel(params, args.grid, axis=args.axis)
    meta = _metadata(args, params, grid=args.grid, axis=args.axis,
                     jumps=[j.to_dict() for j in res.jumps])
    s = params.s
    if args.format == "json":
        _emit_json(args, {"metadata": meta, "n": res.densities, "probs": res.probs,
                          "jump_flag": res.jump_flag.astype(int)})
        return 0
    header = [f"n_{l}" for l in range(1, s + 1)] + [f"Q_{l}" for l in range(1, s + 1)] + ["jump_flag"]
    rows = ([*n, *p, int(f)] for n, p, f in zip(res.densities, res.probs, res.jump_flag))
    _emit_csv(args, meta, header, rows)
    return 0


def cmd_mc_occupation(args) -> int:
    params = _params(args, require_partition=False)
    if params.q < 2:
        raise ModelError("q must be >= 2")
    threads = args.threads or default_threads()
    samples = estimate_occupation(params, args.N, args.sweeps, args.burn_in, args.replicas,
                                  args.seed, threads)
    meta = _metadata(args, params, N=args.N, sweeps=args.sweeps, burn_in=args.burn_in,
                     replicas=args.replicas, seed=args.seed, rng=RNG_NAME)
    header = [f"n_{i}" for i in range(1, params.q + 1)]
    cols = samples
    if params.partition:
        validate(params)
        cols = np.hstack([samples, project_occupation(samples, params.partition)])
        header += [f"y_{l}" for l in range(1, params.s + 1)]
    replica = np.repeat(np.arange(args.replicas), args.sweeps)
    _emit_csv(args, meta, ["replica"] + header, ([int(k), *row] for k, row in zip(replica, cols)))
    return 0


def cmd_mc_kernel(args) -> int:
    params = _params(args)
    if not params.beta >= 0:
        raise ModelError(f"beta must be >= 0, got {params.beta}")
    if args.N is not None and args.N != sum(args.counts) + 1:
        raise ModelError(f"counts sum to {sum(args.counts)} but N - 1 = {args.N - 1}")
    est = estimate_kernel(params, args.counts, args.sweeps, args.seed, args.burn_in)
    meta = _metadata(args, params, N=sum(args.counts) + 1, counts=args.counts, sweeps=args.sweeps,
                     burn_in=args.burn_in, seed=args.seed, rng=RNG_NAME)
    _emit_json(args, {"metadata": meta, "probs": est.probs, "stderr": est.stderr,
                      "samples": est.samples})
    return 0


def cmd_verify(args) -> int:
    res = SUITES[args.suite]()
    res.pop("rows", None)
    _emit_json(args, {"metadata": _metadata(args, suite=args.suite), **res})
    return 0 if res["passed"] else 1


def _add_params(p, partition=True):
    p.add_argument("--config", help="JSON file with q, beta, partition")
    p.add_argument("--q", type=int)
    p.add_argument("--beta", type=float)
    if partition:
        p.add_argument("--partition", type=_int_list, help="class sizes, e.g. 3,1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuzzy-potts", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", help="write to this file instead of stdout")
    common.add_argument("--precision", type=int, default=17, help="significant digits (default 17)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tree-gap", parents=[common], help="wired vs free root conditional gap")
    _add_params(p)
    p.add_argument("--d", type=int, default=2, help="children per vertex for the fixed point")
    p.add_argument("--tree", help="tree JSON {nodes, parent}; b values from the finite recursion")
    p.add_argument("--extra-children", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_tree_gap)

    p = sub.add_parser("tree-critical", parents=[common], help="critical beta on the d-ary tree")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--beta-max", type=float, default=20.0)
    p.set_defaults(func=cmd_tree_critical)

    p = sub.add_parser("mf-kernel", parents=[common], help="exact finite-N fuzzy kernel")
    _add_params(p)
    p.add_argument("--N", type=int)
    p.add_argument("--counts", type=_int_list, required=True)
    p.add_argument("--oracle", action="store_true", help="use brute-force enumeration")
    p.set_defaults(func=cmd_mf_kernel)

    p = sub.add_parser("mf-oracle-check", parents=[common], help="exact vs brute-force kernels")
    p.add_argument("--grid", choices=["tiny", "small"], default="small")
    p.add_argument("--rows", action="store_true", help="include every case in the output")
    p.set_defaults(func=cmd_mf_oracle_check)

    p = sub.add_parser("mf-limit", parents=[common], help="limiting fuzzy kernel")
    _add_params(p)
    p.add_argument("--n", type=_float_list, required=True, help="class densities")
    p.add_argument("--side", choices=["left", "right"], help="one-sided value on a jump")
    p.set_defaults(func=cmd_mf_limit)

    p = sub.add_parser("mf-scan", parents=[common], help="scan the limiting kernel for jumps")
    _add_params(p)
    p.add_argument("--grid", type=int, default=2000)
    p.add_argument("--axis", type=int, default=1, help="class whose density is scanned")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_mf_scan)

    p = sub.add_parser("mc-occupation", parents=[common], help="heat-bath occupation samples")
    _add_params(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--replicas", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_mc_occupation)

    p = sub.add_parser("mc-kernel", parents=[common], help="Monte Carlo fuzzy kernel")
    _add_params(p)
    p.add_argument("--N", type=int)
    p.add_argument("--counts", type=_int_list, required=True)
    p.add_argument("--sweeps", type=int, default=10000)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mc_kernel)

    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("--suite", choices=sorted(SUITES), required=True)
    p.set_defaults(func=cmd_verify)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, OSError, json.JSONDecodeError) as exc:
        print(f"fuzzy-potts {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
