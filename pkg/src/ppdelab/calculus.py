"""Functional path calculus: time and vertical derivatives, the Ito defect.

The time derivative compares the functional at (t+h) on the path frozen at t
with its value at t. Vertical derivatives bump the path by a constant vector
from t onward (flat bump) and take central differences; the second
derivative is the symmetrized stencil. For functionals carrying analytic
evaluators these finite differences are only used in convergence tests.

The Ito defect of a candidate C^{1,2} functional along a simulated path is

    u_T - u_0 - sum_i [ dt_u dt + dw_u . dB_i + 1/2 dww_u : Q_i ]

with Q_i the realized bracket dB_i dB_i^T by default (the model bracket
beta^2 dt is available as an option). For genuinely smooth functionals the
root-mean-square defect is O(dt); a functional with no valid derivatives
keeps a defect bounded away from zero no matter what constant derivatives
are plugged in, which is how non-smoothness is detected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import ControlProcess, PathBatch
from .pathspace import DiscretePath, DomainError


@dataclass(frozen=True)
class SmoothFunctional:
    """An adapted functional bundled with its derivative evaluators."""

    u: object            # (t, path) -> float
    dt: object           # (t, path) -> float
    dw: object           # (t, path) -> (d,)
    dww: object          # (t, path) -> (d, d) symmetric
    provenance: str = "analytic"


def time_derivative_fd(u, t: float, path: DiscretePath, h: float) -> float:
    """[u(t+h, path frozen at t) - u(t, path)] / h."""
    if h <= 0:
        raise DomainError("step must be positive")
    if t + h > path.horizon + 1e-12:
        raise DomainError("t + h exceeds the horizon")
    frozen = path.stopped_at(t)
    return (u(t + h, frozen) - u(t, path)) / h


def vertical_derivative_fd(u, t: float, path: DiscretePath, bump: float) -> np.ndarray:
    """Central difference under the flat bump path -> path + eps e_k 1_[t,T]."""
    if bump <= 0:
        raise DomainError("bump must be positive")
    d = path.d
    out = np.empty(d)
    for k in range(d):
        e = np.zeros(d)
        e[k] = bump
        up = u(t, path.flat_bump(t, e))
        dn = u(t, path.flat_bump(t, -e))
        out[k] = (up - dn) / (2.0 * bump)
    return out


def second_vertical_derivative_fd(u, t: float, path: DiscretePath, bump: float) -> np.ndarray:
    """Symmetrized 3-point (diagonal) / 4-point (cross) second difference."""
    if bump <= 0:
        raise DomainError("bump must be positive")
    d = path.d
    base = u(t, path)
    out = np.empty((d, d))
    for j in range(d):
        ej = np.zeros(d)
        ej[j] = bump
        up = u(t, path.flat_bump(t, ej))
        dn = u(t, path.flat_bump(t, -ej))
        out[j, j] = (up - 2.0 * base + dn) / bump ** 2
        for k in range(j + 1, d):
            ek = np.zeros(d)
            ek[k] = bump
            pp = u(t, path.flat_bump(t, ej + ek))
            pm = u(t, path.flat_bump(t, ej - ek))
            mp = u(t, path.flat_bump(t, -ej + ek))
            mm = u(t, path.flat_bump(t, -ej - ek))
            out[j, k] = out[k, j] = (pp - pm - mp + mm) / (4.0 * bump ** 2)
    return 0.5 * (out + out.T)


def smooth_from_fd(u, h: float, bump: float) -> SmoothFunctional:
    """Finite-difference derivative bundle with fixed step sizes."""
    return SmoothFunctional(
        u=u,
        dt=lambda t, p: time_derivative_fd(u, t, p, h),
        dw=lambda t, p: vertical_derivative_fd(u, t, p, bump),
        dww=lambda t, p: second_vertical_derivative_fd(u, t, p, bump),
        provenance=f"finite-difference(h={h},bump={bump})",
    )


def ito_residual(f: SmoothFunctional, path: DiscretePath, control: ControlProcess | None = None,
                 bracket: str = "realized") -> float:
    """Absolute terminal defect of the Ito decomposition along one path."""
    times = path.times
    values = path.values
    total = 0.0
    for i in range(len(times) - 1):
        t, tn = times[i], times[i + 1]
        dt = tn - t
        db = values[i + 1] - values[i]
        total += f.dt(t, path) * dt
        total += float(np.dot(np.atleast_1d(f.dw(t, path)), db))
        gamma = np.atleast_2d(f.dww(t, path))
        if bracket == "realized":
            q = np.outer(db, db)
        elif bracket == "model":
            if control is None:
                raise DomainError("model bracket needs the simulating control")
            b = control.betas[min(i, control.betas.shape[0] - 1)]
            q = b @ b * dt
        else:
            raise DomainError(f"unknown bracket {bracket!r}")
        total += 0.5 * float(np.tensordot(gamma, q))
    u_start = f.u(times[0], path)
    u_end = f.u(times[-1], path)
    return abs(u_end - u_start - total)


def ito_residual_rms(f: SmoothFunctional, batch: PathBatch, control: ControlProcess | None = None,
                     bracket: str = "realized") -> float:
    vals = [ito_residual(f, batch.path(i), control, bracket) for i in range(batch.n)]
    return float(np.sqrt(np.mean(np.square(vals))))


class ScaledFunctional:
    """exp(lam * t) * base(t, path); nested scalings accumulate in lam so a
    round trip with -lam returns the base functional itself.
    """

    def __init__(self, base, lam: float):
        if isinstance(base, ScaledFunctional):
            lam = lam + base.lam
            base = base.base
        self.base = base
        self.lam = lam

    def __call__(self, t, path):
        return np.exp(self.lam * t) * self.base(t, path)


class ScaledGeneratorFn:
    """Generator transform matching the scaled unknown: the scaled process
    solves the equation with nonlinearity

        -lam * y + exp(lam t) G(t, w, e^{-lam t} y, e^{-lam t} z, e^{-lam t} g).
    """

    def __init__(self, base, lam: float):
        if isinstance(base, ScaledGeneratorFn):
            lam = lam + base.lam
            base = base.base
        self.base = base
        self.lam = lam

    def __call__(self, t, w, y, z, gamma):
        e = np.exp(-self.lam * t)
        return -self.lam * y + np.exp(self.lam * t) * self.base(t, w, e * y, e * z, e * gamma)


def exponential_scaling(u, generator, lam: float):
    """Returns the scaled pair; lam == 0 (after flattening) is the identity."""
    su = ScaledFunctional(u, lam)
    sg = ScaledGeneratorFn(generator, lam)
    if su.lam == 0.0:
        su = su.base
    if sg.lam == 0.0:
        sg = sg.base
    return su, sg
