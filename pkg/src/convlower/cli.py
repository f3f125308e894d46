"""Command-line front end.

Every command is fully determined by an optional JSON job file (``--spec``)
plus flags. Flags given on the command line win over fields of the job file,
which win over the built-in defaults. Job-file keys are the flag names with
dashes replaced by underscores, plus ``command`` and ``arch``.

Exit codes: 0 pass, 1 equivalence failure, 2 audit failure, 64 usage or
input errors. Stdout carries a one-line summary; JSON artifacts go to the
``--out`` and ``--report`` paths.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from . import harness
from .decompose import lower_kernel
from .exceptions import AuditFailure, ConvLowerError, ParseError
from .networks import ARCHITECTURES, CLASSIC, MGNET, PREACT, DeepNet, ShallowNet, build
from .networks import random_residual_kernels, zero_residual_kernels
from .serialization import read_json, tensor_from_json, write_json
from .tensor import as_padding

EXIT_USAGE = 64
COMMANDS = ("decompose", "lower", "build", "verify", "count", "probe-padding")
RESIDUALS = ("identity", "zero", "random")

DEFAULTS = {
    "kernel": None,
    "shallow": None,
    "net": None,
    "k": 2,
    "M": 1,
    "d": None,
    "N": None,
    "box": None,
    "pad": "constant",
    "pad_value": 0.0,
    "residual": "identity",
    "seed": 0,
    "samples": None,
    "tol": None,
    "out": None,
    "report": None,
}
SAMPLES = {"lower": 20, "probe-padding": 5}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _common() -> argparse.ArgumentParser:
    # suppressed defaults keep a flag given before the command from being reset after it
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--spec", help="JSON job file; flags override its fields")
    p.add_argument("--kernel", help="kernel tensor JSON (2-D or 1 x M x ks x ks)")
    p.add_argument("--shallow", help="shallow network JSON")
    p.add_argument("--net", help="deep (or shallow) network JSON")
    p.add_argument("--k", type=int, help="half-width of a random kernel")
    p.add_argument("--M", type=int, help="output channels of a random kernel")
    p.add_argument("--d", type=int, help="image side length")
    p.add_argument("--N", type=int, help="width of a random shallow network")
    p.add_argument("--box", type=float, help="input box half-width")
    p.add_argument("--pad", choices=("constant", "periodic", "reflect", "replicate"), help="padding mode")
    p.add_argument("--pad-value", type=float, help="constant padding value")
    p.add_argument("--residual", choices=RESIDUALS, help="residual kernels for residual architectures")
    p.add_argument("--seed", type=int, help="seed for every random choice")
    p.add_argument("--samples", type=int, help="number of certification samples")
    p.add_argument("--tol", type=float, help="equivalence tolerance")
    p.add_argument("--out", help="path of the main JSON artifact")
    p.add_argument("--report", help="path of the JSON report")
    return p


def make_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="convlower", description=__doc__.split("\n")[0], parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("decompose", parents=[common], help="lower a kernel and audit the plan")
    sub.add_parser("lower", parents=[common], help="lower, audit and check the cascade against the oracle")
    b = sub.add_parser("build", parents=[common], help="build a deep CNN from a shallow network")
    b.add_argument("arch", choices=ARCHITECTURES)
    sub.add_parser("verify", parents=[common], help="certify a network against a shallow reference")
    sub.add_parser("count", parents=[common], help="parameter counts and bound")
    sub.add_parser("probe-padding", parents=[common], help="reflection-padding negative control")
    return parser


_INT_FIELDS = {"k", "M", "d", "N", "seed", "samples"}
_FLOAT_FIELDS = {"box", "pad_value", "tol"}


def _check_field(spec, key, value):
    if value is None:
        return
    if key in _INT_FIELDS:
        ok = isinstance(value, int) and not isinstance(value, bool)
        want = "an integer"
    elif key in _FLOAT_FIELDS:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        want = "a number"
    elif key == "pad":
        ok = isinstance(value, (str, dict))
        want = "a padding mode"
    else:
        ok = isinstance(value, str)
        want = "a string"
    if not ok:
        raise ParseError(f"{spec}.{key}", f"expected {want}, got {value!r}")


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags, job file and defaults into one job dict."""
    job = dict(DEFAULTS)
    spec = getattr(args, "spec", None)
    if spec:
        doc = read_json(spec)
        if not isinstance(doc, dict):
            raise ParseError(spec, "job file must hold an object")
        unknown = set(doc) - set(DEFAULTS) - {"command", "arch"}
        if unknown:
            raise ParseError(f"{spec}.{sorted(unknown)[0]}", "unknown field")
        for key, value in doc.items():
            _check_field(spec, key, value)
        job.update(doc)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            job[key] = value
    if getattr(args, "command", None) is not None:
        job["command"] = args.command
    if getattr(args, "arch", None) is not None:
        job["arch"] = args.arch
    if job.get("command") not in COMMANDS:
        raise UsageError(f"missing or unknown command {job.get('command')!r}; choose from {', '.join(COMMANDS)}")
    if job["command"] == "build" and job.get("arch") not in ARCHITECTURES:
        raise UsageError(f"build needs an architecture from {', '.join(ARCHITECTURES)}")
    if job["samples"] is None:
        job["samples"] = SAMPLES.get(job["command"], 200)
    return job


def _pad(job):
    return as_padding(job["pad"], job["pad_value"])


def _kernel(job) -> np.ndarray:
    if job["kernel"]:
        kernel = tensor_from_json(read_json(job["kernel"]), job["kernel"], ndim=(2, 4))
        return kernel[None, None] if kernel.ndim == 2 else kernel
    k, M = int(job["k"]), int(job["M"])
    rng = harness.sample_generator(job["seed"])
    return rng.uniform(-1.0, 1.0, (1, M, 2 * k + 1, 2 * k + 1))


def _shallow(job) -> ShallowNet:
    if job["shallow"]:
        net = ShallowNet.from_dict(read_json(job["shallow"]), job["shallow"])
    else:
        d = job["d"] if job["d"] is not None else 8
        n = job["N"] if job["N"] is not None else 4
        net = ShallowNet.random(int(d), int(n), job["seed"], 1.0)
    if job["box"] is not None:
        net = ShallowNet(net.W, net.beta, net.alpha, float(job["box"]))
    return net


def _network(path: str):
    doc = read_json(path)
    if isinstance(doc, dict) and "arch" in doc:
        return DeepNet.from_dict(doc, path)
    return ShallowNet.from_dict(doc, path)


def _residual_kernels(job, arch, shallow):
    if arch == CLASSIC or job["residual"] == "identity":
        return None
    n_out = shallow.width + (2 if arch in (PREACT, MGNET) else 0)
    if job["residual"] == "zero":
        return zero_residual_kernels(shallow.d, n_out)
    return random_residual_kernels(shallow.d, n_out, job["seed"] + 1)


def _fmt(x: float) -> str:
    return f"{x:.3e}"


def _write(path, doc):
    if path:
        write_json(path, doc)


def cmd_decompose(job, numeric: bool):
    kernel = _kernel(job)
    k = kernel.shape[2] // 2
    d = job["d"] if job["d"] is not None else (max(8, k + 1) if numeric else None)
    pad = _pad(job)
    plan = lower_kernel(kernel, d, pad)
    _write(job["out"], plan.to_dict())
    widths = "-".join(str(w) for w in plan.widths)
    try:
        audit = harness.audit_plan(plan)
    except AuditFailure as exc:
        _write(job["report"], {"audit": {"verdict": "AuditFailure", "violations": exc.violations}})
        print(f"{job['command']} k={k} widths={widths} audit=AuditFailure")
        return harness.EXIT_AUDIT
    doc = {"audit": audit}
    line = f"{job['command']} k={k} widths={widths} audit=Pass"
    code = harness.EXIT_PASS
    if numeric:
        tol = job["tol"] if job["tol"] is not None else harness.KERNEL_TOL
        report = harness.certify_plan(plan, kernel, d, pad, job["samples"], job["seed"], tol)
        doc["equivalence"] = report.to_dict()
        line += f" d={d} pad={harness.pad_label(pad)} max_abs_err={_fmt(report.max_abs_err)} verdict={report.verdict}"
        code = report.exit_code
    _write(job["report"], doc)
    print(line)
    return code


def cmd_build(job):
    arch = job["arch"]
    shallow = _shallow(job)
    pad = _pad(job)
    given_R = _residual_kernels(job, arch, shallow)
    net = build(arch, shallow, job["d"], pad, shallow.box, given_R)
    _write(job["out"], net.to_dict())
    tol = job["tol"] if job["tol"] is not None else harness.NETWORK_TOL
    report = harness.certify_network(net, shallow, job["samples"], job["seed"], tol)
    counts = harness.count_params(net, net.d, shallow.width)
    _write(job["report"], {"equivalence": report.to_dict(), "params": counts.to_dict(), "widths": net.widths})
    print(
        f"build {arch} d={net.d} N={shallow.width} depth={net.depth} c_L={net.out_channels} "
        f"pad={harness.pad_label(pad)} max_rel_err={_fmt(report.max_rel_err)} verdict={report.verdict}"
    )
    return report.exit_code


def cmd_verify(job):
    if not job["net"] or not job["shallow"]:
        raise UsageError("verify needs --net and --shallow")
    net = _network(job["net"])
    shallow = _shallow(job)
    tol = job["tol"] if job["tol"] is not None else harness.NETWORK_TOL
    if isinstance(net, DeepNet):
        if net.d != shallow.d:
            raise ParseError(job["net"], f"network is for d={net.d}, reference for d={shallow.d}")
        report = harness.certify_network(net, shallow, job["samples"], job["seed"], tol)
    else:
        report = harness.certify_equivalence(net, shallow, shallow.box, shallow.d, job["samples"], job["seed"], tol)
    _write(job["report"], {"equivalence": report.to_dict()})
    print(f"verify samples={report.samples} max_rel_err={_fmt(report.max_rel_err)} verdict={report.verdict}")
    return report.exit_code


def cmd_count(job):
    if job["net"]:
        net = _network(job["net"])
        counts = harness.count_params(net, job["d"], job["N"])
    else:
        if job["d"] is None:
            raise UsageError("count needs --d (and --N) or --net")
        if job["N"] is None:
            raise UsageError("count needs --N with --d")
        counts = harness.schedule_param_count(int(job["d"]), int(job["N"]))
    doc = counts.to_dict()
    _write(job["out"], doc)
    _write(job["report"], doc)
    print(f"count N_F={counts.n_f} N_C={counts.n_c} bound={counts.bound} within_bound={counts.within_bound}")
    return harness.EXIT_PASS


def cmd_probe(job):
    if not job["kernel"] and job["k"] < 2:
        raise UsageError("probe-padding needs k >= 2")
    kernel = _kernel(job)
    d = job["d"] if job["d"] is not None else 6
    doc = harness.negative_padding_probe(kernel, d, job["samples"], job["seed"])
    _write(job["report"], doc)
    print(
        f"probe-padding k={doc['k']} d={d} reflect_border_err={_fmt(doc['reflect_border_max_abs_err'])} "
        f"reflect_interior_err={_fmt(doc['reflect_interior_max_abs_err'])} "
        f"periodic_err={_fmt(doc['periodic_max_abs_err'])} reproduced={doc['reproduces_negative_claim']}"
    )
    return harness.EXIT_PASS if doc["reproduces_negative_claim"] else harness.EXIT_FAIL


def run(job: dict) -> int:
    command = job["command"]
    if command == "decompose":
        return cmd_decompose(job, numeric=False)
    if command == "lower":
        return cmd_decompose(job, numeric=True)
    if command == "build":
        return cmd_build(job)
    if command == "verify":
        return cmd_verify(job)
    if command == "count":
        return cmd_count(job)
    return cmd_probe(job)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        job = resolve(args)
        return run(job)
    except UsageError as exc:
        sys.stderr.write(f"convlower: error: {exc}\n")
        return EXIT_USAGE
    except AuditFailure as exc:
        sys.stderr.write(f"convlower: audit failure: {exc}\n")
        return harness.EXIT_AUDIT
    except ConvLowerError as exc:
        sys.stderr.write(f"convlower: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
