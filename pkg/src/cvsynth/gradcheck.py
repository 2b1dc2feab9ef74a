"""Finite-difference verification of hand-written backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DeterminismError
from .rng import SplitMix64
from .tensor import Tensor


@dataclass
class GradCheckReport:
    op_name: str
    max_rel_error: float
    per_input_errors: list[float] = field(default_factory=list)
    passed: bool = False

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{self.op_name}: max rel err {self.max_rel_error:.3e} [{status}]"


def grad_check(
    op_name: str,
    forward: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    seed: int = 0,
    max_entries_per_input: int | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``forward`` is a zero-argument closure that reads the current data of
    ``inputs`` (directly or through structures holding them) and returns a
    tensor whose ``vjp`` accumulates into the inputs' grads. The scalar
    under test is ``<u, forward()>`` for a fixed random cotangent ``u``.
    Relative error per entry is ``|a - n| / max(|a|, |n|, 1e-8)``.

    ``max_entries_per_input`` caps how many coordinates of each input are
    perturbed (a seeded sample without replacement); the analytic side is
    always the full gradient.
    """
    rng = SplitMix64(seed).fork(op_name)

    first = forward()
    second = forward()
    if first.data.tobytes() != second.data.tobytes():
        raise DeterminismError(f"{op_name}: two forward passes disagreed")

    cotangent = np.asarray(rng.normal(size=first.data.shape), dtype=np.float64)
    # Keep the probe objective small: central differences carry absolute
    # noise ~ machine_eps * |objective| / epsilon, which must stay below
    # tolerance * the 1e-8 error floor or near-zero gradient entries fail
    # spuriously.
    norm = float(np.linalg.norm(cotangent))
    cotangent *= 0.01 / (norm * max(1.0, float(np.linalg.norm(first.data))))
    if first.vjp is None:
        raise ValueError(f"{op_name}: forward output has no vjp attached")
    for t in inputs:
        t.zero_grad()
    first.vjp(cotangent)
    analytic = [t.grad.copy() for t in inputs]

    def objective() -> float:
        return float(np.vdot(cotangent, forward().data))

    per_input: list[float] = []
    for t, full_grad in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        if max_entries_per_input is not None and n > max_entries_per_input:
            idx = [int(i) for i in rng.u64_block(max_entries_per_input) % np.uint64(n)]
        else:
            idx = range(n)
        worst = 0.0
        grad_flat = full_grad.reshape(-1)
        for j in idx:
            saved = flat[j]
            flat[j] = saved + epsilon
            plus = objective()
            flat[j] = saved - epsilon
            minus = objective()
            flat[j] = saved
            numeric = (plus - minus) / (2.0 * epsilon)
            a = grad_flat[j]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
        per_input.append(worst)

    max_err = max(per_input) if per_input else 0.0
    return GradCheckReport(
        op_name=op_name,
        max_rel_error=max_err,
        per_input_errors=per_input,
        passed=max_err < tolerance,
    )
