"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .tensor import Tensor, backward


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-5

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def lines(self) -> list[str]:
        out = []
        for name, err in self.errors.items():
            flag = "ok" if err < self.tol else "FAIL"
            out.append(f"{name:<48s} rel_err={err:.3e} {flag}")
        return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max abs difference scaled by the larger gradient magnitude of the pair.

    Scaling by the tensor-wide magnitude keeps entries whose true gradient is
    ~0 from producing spurious failures out of central-difference roundoff.
    """
    diff = np.max(np.abs(analytic - numeric), initial=0.0)
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    if scale < 1e-12:
        return float(diff)
    return float(diff / scale)


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-5,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f()`` against central differences.

    ``f`` is re-evaluated after in-place perturbation of each parameter entry,
    so it must read the parameters' current ``.data`` on every call. With
    ``max_entries`` set, each parameter is checked on a random subset of at
    most that many coordinates.
    """
    for p in params.values():
        p.grad = None
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError("gradcheck: objective is not finite at the base point")
    backward(loss)

    rng = rng if rng is not None else np.random.default_rng(0)
    report = GradCheckReport(tol=tol)
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data.sum())
            flat[i] = orig - h
            fm = float(f().data.sum())
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"gradcheck: non-finite objective perturbing {name}[{i}]")
            numeric[j] = (fp - fm) / (2 * h)
        report.errors[name] = relative_error(analytic.reshape(-1)[idx], numeric)
    return report
