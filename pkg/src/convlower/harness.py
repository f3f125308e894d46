"""Independent oracles and equivalence certificates.

Nothing in this module calls :func:`convlower.tensor.conv2d` on the oracle
side of a comparison: :func:`oracle_conv` is a separate scalar loop, and the
shallow network is evaluated as a plain matrix product.

Random inputs come from numpy's Philox generator (a 64-bit counter-based
bit generator) seeded with the caller's integer seed, drawn uniformly from
the input box. The first three inputs of every certificate are fixed: the
box corners ``-M * 1`` and ``+M * 1`` and the zero image.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .decompose import BOUNDARY, CORNER, FULL, LoweredPlan, lower_kernel, pattern_census
from .exceptions import AuditFailure, ChannelMismatch, InvalidKernel, UnsupportedPadding
from .networks import MGNET, PREACT, ConvLayer, DeepNet, ShallowNet
from .tensor import Constant, Periodic, as_padding

PASS, FAIL = "Pass", "Fail"
EXIT_PASS, EXIT_FAIL, EXIT_AUDIT = 0, 1, 2

NETWORK_TOL = 1e-8
KERNEL_TOL = 1e-12
LINEARITY_TOL = 1e-12

# samples per evaluation batch; fixed so reports do not depend on thread count
CHUNK = 25


def sample_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def thread_count() -> int:
    raw = os.environ.get("CONV_LOWER_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def oracle_conv(kernel, x, pad) -> np.ndarray:
    """Convolution as an explicit scalar loop over ``q, m, n, p, s, t``."""
    kernel = np.asarray(kernel, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if not isinstance(pad, (Constant, Periodic)):
        raise UnsupportedPadding(f"oracle supports constant and periodic padding, got {pad!r}")
    if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3] or kernel.shape[2] % 2 != 1:
        raise InvalidKernel(f"bad kernel shape {kernel.shape}")
    c_in, c_out, ks, _ = kernel.shape
    if x.ndim != 3 or x.shape[1] != x.shape[2]:
        raise ChannelMismatch(f"oracle expects a single (c, d, d) tensor, got {x.shape}")
    if x.shape[0] != c_in:
        raise ChannelMismatch(f"input has {x.shape[0]} channels, kernel expects {c_in}")
    return _loop_conv(kernel.tolist(), x.tolist(), c_in, c_out, ks // 2, x.shape[1], pad)


def _loop_conv(K, X, c_in, c_out, k, d, pad, resolve=None) -> np.ndarray:
    if resolve is None:
        def resolve(idx):
            if 0 <= idx < d:
                return idx
            return idx % d if isinstance(pad, Periodic) else None
    fill = pad.value if isinstance(pad, Constant) else None
    out = [[[0.0] * d for _ in range(d)] for _ in range(c_out)]
    for q in range(c_out):
        for m in range(d):
            for n in range(d):
                acc = 0.0
                for p in range(c_in):
                    for s in range(-k, k + 1):
                        row = resolve(m + s)
                        for t in range(-k, k + 1):
                            col = resolve(n + t)
                            if row is None or col is None:
                                value = fill
                            else:
                                value = X[p][row][col]
                            acc += K[p][q][s + k][t + k] * value
                out[q][m][n] = acc
    return np.array(out)


def _reflect_index(d: int):
    def resolve(idx):
        while idx < 0 or idx >= d:
            idx = -idx if idx < 0 else 2 * (d - 1) - idx
        return idx

    return resolve


def reflect_conv(kernel, x) -> np.ndarray:
    """Convolution under reflection padding; a falsification instrument only."""
    kernel = np.asarray(kernel, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    c_in, c_out, ks, _ = kernel.shape
    d = x.shape[-1]
    return _loop_conv(kernel.tolist(), x.tolist(), c_in, c_out, ks // 2, d, None, _reflect_index(d))


@dataclass
class EquivalenceReport:
    samples: int
    max_abs_err: float
    max_rel_err: float
    pads: List[str]
    seed: int
    tolerance: float
    linearity_violations: int = 0
    verdict: str = PASS
    label: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def exit_code(self) -> int:
        return EXIT_PASS if self.verdict == PASS else EXIT_FAIL

    def merge(self, other: "EquivalenceReport") -> "EquivalenceReport":
        pads = self.pads + [p for p in other.pads if p not in self.pads]
        violations = self.linearity_violations + other.linearity_violations
        tol = min(self.tolerance, other.tolerance)
        rel = max(self.max_rel_err, other.max_rel_err)
        return EquivalenceReport(
            self.samples + other.samples,
            max(self.max_abs_err, other.max_abs_err),
            rel,
            pads,
            self.seed,
            tol,
            violations,
            PASS if rel <= tol and violations == 0 else FAIL,
            self.label,
        )


def _evaluate(fn, chunk) -> np.ndarray:
    """Values of ``fn`` on a chunk, batched when ``fn`` accepts batches."""
    try:
        out = np.asarray(fn(chunk), dtype=np.float64)
    except Exception:
        out = None
    if out is None or out.shape != (len(chunk),):
        out = np.array([float(fn(x)) for x in chunk])
    return out


def sample_inputs(d: int, box: float, samples: int, seed: int) -> np.ndarray:
    """``samples`` images of shape ``(1, d, d)``: the fixed points first, then uniform draws."""
    fixed = [np.full((1, d, d), -box), np.full((1, d, d), box), np.zeros((1, d, d))]
    rng = sample_generator(seed)
    drawn = rng.uniform(-box, box, (max(samples - len(fixed), 0), 1, d, d))
    return np.concatenate([np.stack(fixed), drawn])[:samples]


def pad_label(pad) -> str:
    pad = as_padding(pad)
    return "periodic" if isinstance(pad, Periodic) else f"constant({pad.value!r})"


def certify_equivalence(
    f: Callable,
    g: Callable,
    box: float,
    d: int,
    samples: int = 200,
    seed: int = 0,
    tol: float = NETWORK_TOL,
    linearity: Optional[Callable] = None,
    pads: Sequence[str] = (),
    label: str = "",
) -> EquivalenceReport:
    """Compare ``f`` against the reference ``g`` on seeded samples from the box.

    Relative error is ``|f - g| / (1 + |g|)``. ``linearity(x)``, if given,
    returns the smallest certified hidden pre-activation; values below
    ``-1e-12`` count as violations.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    xs = sample_inputs(d, box, samples, seed)
    chunks = [xs[i : i + CHUNK] for i in range(0, len(xs), CHUNK)]

    def one(chunk):
        fv, gv = _evaluate(f, chunk), _evaluate(g, chunk)
        low = _evaluate(linearity, chunk) if linearity is not None else np.full(len(chunk), np.inf)
        diff = np.abs(fv - gv)
        return [(a, a / (1.0 + abs(b)), c) for a, b, c in zip(diff, gv, low)]

    workers = min(thread_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, chunks))
    else:
        parts = [one(c) for c in chunks]
    results = [r for part in parts for r in part]
    abs_err = max(r[0] for r in results)
    rel_err = max(r[1] for r in results)
    violations = sum(1 for r in results if r[2] < -LINEARITY_TOL)
    verdict = PASS if rel_err <= tol and violations == 0 else FAIL
    return EquivalenceReport(
        len(xs), float(abs_err), float(rel_err), list(pads), int(seed), float(tol), violations, verdict, label
    )


def certify_network(net: DeepNet, shallow: ShallowNet, samples: int = 200, seed: int = 0, tol=NETWORK_TOL):
    """Deep network against the shallow network it was built from."""
    from .networks import min_certified_preactivation

    return certify_equivalence(
        net,
        shallow,
        shallow.box,
        net.d,
        samples,
        seed,
        tol,
        linearity=lambda x: min_certified_preactivation(net, x),
        pads=[pad_label(net.pad)],
        label=net.arch,
    )


def certify_plan(plan: LoweredPlan, kernel, d: int, pad, samples: int = 10, seed: int = 0, tol=KERNEL_TOL):
    """Cascade against the oracle big-kernel convolution, max error over every output pixel."""
    pad = as_padding(pad)
    kernel = np.asarray(kernel, dtype=np.float64)
    rng = sample_generator(seed)
    xs = rng.uniform(-1.0, 1.0, (samples, 1, d, d))
    abs_err = 0.0
    for x in xs:
        diff = np.abs(plan.apply(x, pad) - oracle_conv(kernel, x, pad)).max()
        abs_err = max(abs_err, float(diff))
    verdict = PASS if abs_err <= tol else FAIL
    return EquivalenceReport(samples, abs_err, abs_err, [pad_label(pad)], int(seed), float(tol), 0, verdict, "plan")


def audit_plan(plan: LoweredPlan) -> dict:
    """Check widths, one-hot shift blocks, pattern census and prefix closure.

    Returns a report on success; raises :class:`AuditFailure` naming every
    violated invariant otherwise.
    """
    problems = []
    k = plan.k
    if len(plan.stages) != max(k - 1, 0):
        problems.append(f"expected {k - 1} shift stages, found {len(plan.stages)}")
    if len(plan.index_sets) != max(k - 1, 0):
        problems.append(f"expected {k - 1} index sets, found {len(plan.index_sets)}")
    census = []
    prev_pos = {(): 0}
    for n, (stage, iset) in enumerate(zip(plan.stages, plan.index_sets), start=1):
        want_in, want_out = (2 * n - 1) ** 2, (2 * n + 1) ** 2
        if stage.shape != (want_in, want_out, 3, 3):
            problems.append(f"stage {n} has shape {stage.shape}, expected {(want_in, want_out, 3, 3)}")
            break
        used = int(np.count_nonzero(np.abs(stage).sum(axis=(0, 2, 3))))
        if used != want_out:
            problems.append(f"stage {n} uses {used} output channels, expected {want_out}")
        nonzero_blocks = np.abs(stage).sum(axis=(2, 3)) != 0
        for p, q in zip(*np.nonzero(nonzero_blocks)):
            block = stage[p, q]
            if np.count_nonzero(block) != 1 or block.max() != 1.0:
                problems.append(f"stage {n} block ({p}, {q}) is not a shift kernel")
        if np.any(nonzero_blocks.sum(axis=0) > 1):
            problems.append(f"stage {n} has an output channel fed by more than one input")
        if len(iset) != want_out:
            problems.append(f"index set {n} has {len(iset)} members, expected {want_out}")
        counts = pattern_census(iset)
        census.append(counts)
        if (counts[CORNER], counts[BOUNDARY], counts[FULL]) != (4 * n * n, 4 * n, 1):
            problems.append(f"index set {n} census {counts} != (4n^2, 4n, 1)")
        moves = [seq.moves for seq in iset]
        if moves != sorted(moves) or len(set(moves)) != len(moves):
            problems.append(f"index set {n} is not in strict lexicographic order")
        for q, seq in enumerate(iset):
            if len(seq) != n:
                problems.append(f"index set {n} member {q} has length {len(seq)}")
                continue
            parent = prev_pos.get(seq.moves[:-1])
            if parent is None:
                problems.append(f"index set {n} member {seq.moves} has no prefix in set {n - 1}")
                continue
            i, j = seq.moves[-1]
            if q < stage.shape[1] and stage[parent, q, i + 1, j + 1] != 1.0:
                problems.append(f"stage {n} channel {q} does not shift by {(i, j)} from channel {parent}")
        prev_pos = {seq.moves: q for q, seq in enumerate(iset)}
    want_rows = (2 * k - 1) ** 2 if k > 1 else 1
    want_size = 3 if k >= 1 else 1
    if plan.terminal.shape[0] != want_rows or plan.terminal.shape[2:] != (want_size, want_size):
        problems.append(f"terminal kernel has shape {plan.terminal.shape}, expected {want_rows} input channels")
    if problems:
        raise AuditFailure(problems)
    return {
        "k": k,
        "widths": plan.widths,
        "census": [[c[CORNER], c[BOUNDARY], c[FULL]] for c in census],
        "terminal_rows": int(plan.terminal.shape[0]),
        "verdict": PASS,
    }


@dataclass
class ParamCount:
    n_f: int
    n_c: int
    bound: int
    layers: List[dict] = field(default_factory=list)

    @property
    def within_bound(self) -> bool:
        return self.n_c <= self.bound

    def to_dict(self) -> dict:
        return {
            "N_F": self.n_f,
            "N_C": self.n_c,
            "bound": self.bound,
            "within_bound": self.within_bound,
            "layers": self.layers,
        }


def param_bound(d: int, n: int) -> int:
    return 2 * (d**5 + n * d * d)


def shallow_param_count(d: int, n: int) -> int:
    return n * (d * d + 2)


def schedule_param_count(d: int, n: int) -> ParamCount:
    """Counts for the classic ``d//2``-layer schedule without building the net."""
    L = d // 2
    layers = []
    for l in range(1, L):
        c_in, c_out = (2 * l - 1) ** 2, (2 * l + 1) ** 2
        layers.append({"layer": l, "kernel": 9 * c_in * c_out, "bias": c_out})
    c_in = (2 * L - 1) ** 2
    layers.append({"layer": L, "kernel": 9 * c_in * n, "bias": n})
    layers.append({"layer": "readout", "readout": n * d * d})
    total = sum(v for entry in layers for key, v in entry.items() if key != "layer")
    return ParamCount(shallow_param_count(d, n), total, param_bound(d, n), layers)


def count_params(net, d: Optional[int] = None, n: Optional[int] = None) -> ParamCount:
    """Free-parameter counts of a shallow or deep network, with the ``2(d^5 + N d^2)`` bound.

    Deep networks are counted from their stored tensors (kernels, biases,
    residual and ``theta`` kernels, readout). ``N`` is the width of the
    shallow network the deep one represents.
    """
    if isinstance(net, ShallowNet):
        d = net.d if d is None else d
        n = net.width if n is None else n
        n_f = shallow_param_count(d, n)
        return ParamCount(n_f, n_f, param_bound(d, n), [{"layer": 1, "W": n * d * d, "beta": n, "alpha": n}])
    d = net.d if d is None else d
    if n is None:
        n = net.out_channels - (2 if net.arch in (PREACT, MGNET) else 0)
    layers = []
    for idx, layer in enumerate(net.layers, start=1):
        if isinstance(layer, ConvLayer):
            layers.append({"layer": idx, "kernel": int(layer.kernel.size), "bias": int(layer.bias.size)})
        else:
            entry = {
                "layer": idx,
                "A": int(layer.A.size),
                "a": int(layer.a.size),
                "B": int(layer.B.size),
                "b": int(layer.b.size),
                "R": int(layer.R.size),
            }
            if layer.theta is not None:
                entry["theta"] = int(layer.theta.size)
            layers.append(entry)
    layers.append({"layer": "readout", "readout": int(net.readout.size)})
    total = sum(v for entry in layers for key, v in entry.items() if key != "layer")
    return ParamCount(shallow_param_count(d, n), total, param_bound(d, n), layers)


def negative_padding_probe(kernel, d: int, samples: int = 5, seed: int = 0) -> dict:
    """Show that the lowered cascade is not exact under reflection padding.

    Runs the cascade and the big kernel under a reflection rule implemented
    here (the tensor module refuses it) and reports the discrepancy split
    into border and interior pixels, with a periodic run as the control.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 2:
        kernel = kernel[None, None]
    k = kernel.shape[2] // 2
    plan = lower_kernel(kernel, d)
    rng = sample_generator(seed)
    xs = rng.uniform(-1.0, 1.0, (samples, 1, d, d))
    interior = np.zeros((d, d), dtype=bool)
    interior[k : d - k, k : d - k] = True
    border_err = interior_err = 0.0
    for x in xs:
        y = x
        for stage in plan.kernels:
            y = reflect_conv(stage, y)
        diff = np.abs(y - reflect_conv(kernel, x)).max(axis=0)
        border_err = max(border_err, float(diff[~interior].max()) if (~interior).any() else 0.0)
        interior_err = max(interior_err, float(diff[interior].max()) if interior.any() else 0.0)
    control = certify_plan(plan, kernel, d, Periodic(), samples=samples, seed=seed)
    try:
        as_padding("reflect")
        rejected = False
    except UnsupportedPadding:
        rejected = True
    return {
        "k": k,
        "d": d,
        "samples": samples,
        "seed": int(seed),
        "reflect_max_abs_err": max(border_err, interior_err),
        "reflect_border_max_abs_err": border_err,
        "reflect_interior_max_abs_err": interior_err,
        "periodic_max_abs_err": control.max_abs_err,
        "periodic_verdict": control.verdict,
        "reflect_rejected_by_tensor_core": rejected,
        "reproduces_negative_claim": bool(border_err > 1e-6 and control.verdict == PASS and rejected),
    }
