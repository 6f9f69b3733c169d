"""Renormalization-coefficient fitting and power-law scaling of the results.

The memory prefactors alpha_i are chosen so the reduced right-hand side best
reproduces, mode by mode, the rate of change of the per-mode mass |u_k|^2
observed along a fully resolved trajectory.  The cost is quadratic in the
alphas, so the fit is plain linear least squares.  Fitted coefficients are
nondimensionalized and regressed against the dispersive Reynolds number and
the resolution parameter to produce predictive power laws.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .solver import Trajectory, rhs_full
from .spectral import ModePartition, SpectralField, total_mass
from .terms import KernelEvaluator

DOMAIN_LENGTH = 2.0 * np.pi
ALL_ORDERS = (1, 2, 3, 4)

# odd-order memory contributions below this fraction of the even-order ones
# are considered negligible
ODD_CONTRIBUTION_THRESHOLD = 0.25


class SingularFitError(RuntimeError):
    """The least-squares design is rank deficient."""


class SignInconsistencyError(ValueError):
    """Power-law regression got coefficients of mixed sign."""


@dataclass(frozen=True)
class NondimParams:
    """Characteristic scales of a run.

    U is the root mean square of the initial condition, T = L/U the eddy
    turnover time, Re = sqrt(U) L / eps the dispersive Reynolds number and
    Lambda = N * L the resolution parameter.
    """

    L: float
    U: float
    T: float
    Re: float
    Lambda: float

    @classmethod
    def from_energy(cls, u0_energy: float, epsilon: float, N: int) -> "NondimParams":
        """Build from the mean-square initial value (1/L) * integral of u0^2."""
        if u0_energy <= 0:
            raise ValueError("initial energy must be positive")
        L = DOMAIN_LENGTH
        U = float(np.sqrt(u0_energy))
        return cls(L=L, U=U, T=L / U, Re=np.sqrt(U) * L / epsilon, Lambda=N * L)

    @classmethod
    def from_initial(cls, u0: SpectralField, epsilon: float, N: int) -> "NondimParams":
        # Parseval: (1/L) * integral of u^2 = sum_k |u_k|^2
        return cls.from_energy(total_mass(u0), epsilon, N)


@dataclass
class MassDerivativeDataset:
    """Sampled per-mode mass derivatives and the memory-term counterparts.

    ``dm_exact[j, m]`` is d|u_k|^2/dt of resolved mode k = modes[m] under the
    fully resolved dynamics at time ``times[j]``; ``dm_markov[j, m]`` is the
    contribution of the Markov term evaluated on the state projected to the
    resolved set; ``dm_terms[j, m, i-1]`` is the contribution of the order-i
    memory kernel on the projected state.  The fitting target is the memory-
    attributable flux ``dm_exact - dm_markov``: the Markov term enters the
    reduced model with fixed unit weight, so only the remainder is left for
    the memory terms to explain.
    """

    times: np.ndarray
    modes: np.ndarray
    dm_exact: np.ndarray  # (n_times, n_modes)
    dm_markov: np.ndarray  # (n_times, n_modes)
    dm_terms: np.ndarray  # (n_times, n_modes, 4)
    N: int
    epsilon: float

    def __post_init__(self):
        if self.dm_exact.shape != (len(self.times), len(self.modes)):
            raise ValueError("dm_exact shape inconsistent with times/modes")
        if self.dm_markov.shape != self.dm_exact.shape:
            raise ValueError("dm_markov shape inconsistent")
        if self.dm_terms.shape != self.dm_exact.shape + (4,):
            raise ValueError("dm_terms shape inconsistent")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dm_target(self) -> np.ndarray:
        return self.dm_exact - self.dm_markov

    def write_csv(self, path):
        """Columns t, k, dM_exact, dM_1..dM_4; dM_exact is the fit target."""
        target = self.dm_target
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "k", "dM_exact", "dM_1", "dM_2", "dM_3", "dM_4"])
            for j, t in enumerate(self.times):
                for m, k in enumerate(self.modes):
                    w.writerow(
                        [repr(float(t)), int(k), repr(float(target[j, m]))]
                        + [repr(float(self.dm_terms[j, m, i])) for i in range(4)]
                    )


def build_dataset(trajectory: Trajectory, partition: ModePartition,
                  epsilon: float, window, stride: int = 1) -> MassDerivativeDataset:
    """Evaluate exact and memory-term mass derivatives along a trajectory.

    ``window`` is (t_a, t_b); every stride-th trajectory sample inside it is
    used.  The exact derivative uses the full state; the memory terms see only
    its restriction to the resolved set.
    """
    t_a, t_b = window
    if stride < 1:
        raise ValueError("stride must be >= 1")
    tol = 1e-9
    idx = np.nonzero((trajectory.times >= t_a - tol) & (trajectory.times <= t_b + tol))[0]
    if len(idx) == 0:
        raise ValueError(
            f"window [{t_a}, {t_b}] contains no trajectory samples "
            f"(range [{trajectory.times[0]}, {trajectory.times[-1]}])"
        )
    idx = idx[::stride]

    N = partition.N
    k_big = trajectory.k_max
    fmask_big = partition.resolved_mask(k_big)
    modes = np.arange(-k_big, k_big + 1)[fmask_big]
    ev = KernelEvaluator(N, epsilon)
    lo_big, hi_big = k_big - (N - 1), k_big + N
    lo_small, hi_small = ev.k_max - (N - 1), ev.k_max + N

    n = len(idx)
    dm_exact = np.empty((n, len(modes)))
    dm_markov = np.empty((n, len(modes)))
    dm_terms = np.empty((n, len(modes), 4))
    for j, i in enumerate(idx):
        state = trajectory.state(i)
        r = rhs_full(state, epsilon)
        dm_exact[j] = 2.0 * np.real(
            np.conj(state.coeffs[fmask_big]) * r.coeffs[fmask_big]
        )
        u_small = np.zeros(2 * ev.k_max + 1, dtype=complex)
        u_small[lo_small:hi_small] = state.coeffs[lo_big:hi_big]
        uu = ev._conv(u_small, u_small)
        r0 = ev.markov(u_small, uu)
        kernels = ev.kernels(u_small, 4, uu)
        cu = np.conj(u_small[lo_small:hi_small])
        dm_markov[j] = 2.0 * np.real(cu * r0[lo_small:hi_small])
        for i_ord in range(4):
            dm_terms[j, :, i_ord] = 2.0 * np.real(
                cu * kernels[i_ord][lo_small:hi_small]
            )
    return MassDerivativeDataset(
        times=trajectory.times[idx],
        modes=modes,
        dm_exact=dm_exact,
        dm_markov=dm_markov,
        dm_terms=dm_terms,
        N=N,
        epsilon=epsilon,
    )


@dataclass(frozen=True)
class FitResult:
    """Least-squares minimizer of the mass-derivative matching cost."""

    orders: tuple
    alphas: np.ndarray
    residual: float
    window: tuple
    stride: int

    def alpha(self, order: int) -> float:
        return float(self.alphas[self.orders.index(order)])

    def full_alphas(self, max_order: int = 4) -> np.ndarray:
        """Alphas padded with zeros for orders not included in the fit."""
        out = np.zeros(max_order)
        for o, a in zip(self.orders, self.alphas):
            if o <= max_order:
                out[o - 1] = a
        return out


def fit_cost(dataset: MassDerivativeDataset, alphas_by_order: dict) -> float:
    """Matching cost: per-mode residuals plus the squared net resolved flow."""
    resid = dataset.dm_target.copy()
    for o, a in alphas_by_order.items():
        resid -= a * dataset.dm_terms[:, :, o - 1]
    return float(np.sum(resid**2) + np.sum(resid.sum(axis=1) ** 2))


def fit_alphas(dataset: MassDerivativeDataset,
               orders=ALL_ORDERS, window=None, stride: int = 1) -> FitResult:
    """Fit memory prefactors by linear least squares.

    The target is the memory-attributable per-mode mass derivative (exact
    minus Markov); regressors are the memory-term derivatives of the requested
    orders.  One extra equation per time sample matches the net flow out of
    the resolved set (sum over modes).
    """
    orders = tuple(sorted(orders))
    if not orders or any(o not in ALL_ORDERS for o in orders):
        raise ValueError(f"orders must be a nonempty subset of {ALL_ORDERS}")
    n_t, n_k = dataset.dm_exact.shape
    cols = [dataset.dm_terms[:, :, o - 1] for o in orders]
    goal = dataset.dm_target
    # per-mode rows, then one net-flow row per time sample
    design = np.concatenate(
        [
            np.stack([c.ravel() for c in cols], axis=1),
            np.stack([c.sum(axis=1) for c in cols], axis=1),
        ]
    )
    target = np.concatenate([goal.ravel(), goal.sum(axis=1)])
    rank = np.linalg.matrix_rank(design)
    if rank < len(orders):
        raise SingularFitError(
            f"design rank {rank} < {len(orders)} fitted orders; "
            "the dataset does not constrain all requested terms"
        )
    sol, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ sol
    if window is None:
        window = (float(dataset.times[0]), float(dataset.times[-1]))
    return FitResult(
        orders=orders,
        alphas=sol,
        residual=float(np.sum(resid**2)),
        window=tuple(window),
        stride=stride,
    )


def odd_contribution_ratio(dataset: MassDerivativeDataset, fit: FitResult) -> float:
    """Size of the fitted odd-order memory contributions relative to the even.

    Each order contributes |alpha_i| times the Frobenius norm of its mass-
    derivative regressor over the dataset.
    """
    alphas = fit.full_alphas()
    sizes = [
        abs(alphas[i]) * float(np.linalg.norm(dataset.dm_terms[:, :, i]))
        for i in range(4)
    ]
    even = sizes[1] + sizes[3]
    if even == 0:
        return np.inf
    return (sizes[0] + sizes[2]) / even


def nondimensionalize(alphas, epsilon: float, N: int, u0_energy: float):
    """Convert fitted alphas (units time^i) to dimensionless Pi_i.

    Returns (Pi, Re, Lambda) with Pi_i = alpha_i / T^i where T = L/U.
    """
    p = NondimParams.from_energy(u0_energy, epsilon, N)
    alphas = np.asarray(alphas, dtype=float)
    powers = np.arange(1, len(alphas) + 1)
    return alphas / p.T**powers, p.Re, p.Lambda


@dataclass(frozen=True)
class ScalingLaw:
    """Power law Pi = a * Re^b * Lambda^c for one memory order."""

    order: int
    a: float
    b: float
    c: float
    residual: float
    n_points: int

    def predict_pi(self, Re: float, Lambda: float) -> float:
        return self.a * Re**self.b * Lambda**self.c


def fit_scaling_law(points, order: int) -> ScalingLaw:
    """Log-log regression of |Pi| on (Re, Lambda) for one memory order.

    ``points`` is a sequence of (Pi, Re, Lambda).  All Pi must share one sign;
    the prefactor carries it.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
        raise ValueError("need at least 3 points of (Pi, Re, Lambda)")
    pi, re_, lam = pts[:, 0], pts[:, 1], pts[:, 2]
    if np.any(pi == 0):
        raise SignInconsistencyError(f"order {order}: zero Pi in regression input")
    signs = np.sign(pi)
    if not np.all(signs == signs[0]):
        raise SignInconsistencyError(
            f"order {order}: Pi values change sign across the grid; "
            "a single power law cannot represent them"
        )
    design = np.stack([np.ones_like(pi), np.log(re_), np.log(lam)], axis=1)
    if np.linalg.matrix_rank(design) < 3:
        raise SingularFitError(
            f"order {order}: (Re, Lambda) samples are degenerate; "
            "vary both parameters"
        )
    sol, *_ = np.linalg.lstsq(design, np.log(np.abs(pi)), rcond=None)
    resid = np.log(np.abs(pi)) - design @ sol
    return ScalingLaw(
        order=order,
        a=float(signs[0] * np.exp(sol[0])),
        b=float(sol[1]),
        c=float(sol[2]),
        residual=float(np.sum(resid**2)),
        n_points=len(pts),
    )


def predict_alphas(epsilon: float, N: int, laws: dict, u0_energy: float) -> dict:
    """Dimensional alphas from fitted scaling laws: alpha_i = Pi_i * T^i."""
    p = NondimParams.from_energy(u0_energy, epsilon, N)
    return {
        order: law.predict_pi(p.Re, p.Lambda) * p.T**order
        for order, law in laws.items()
    }


def fit_window_robustness(datasets: dict, orders=ALL_ORDERS,
                          reference_width=None, threshold: float = 0.25) -> dict:
    """Sensitivity of the fitted alphas to the fit-window width.

    ``datasets`` maps window width to a MassDerivativeDataset.  Returns per
    width the fitted alpha_2 and alpha_4, their relative deviation from the
    widest (or given reference) window, and a stability flag.
    """
    if not datasets:
        raise ValueError("need at least one dataset")
    widths = sorted(datasets)
    if reference_width is None:
        reference_width = widths[-1]
    fits = {wd: fit_alphas(datasets[wd], orders) for wd in widths}
    ref = fits[reference_width]
    report = {}
    for wd in widths:
        f = fits[wd]
        rel = {}
        for o in (2, 4):
            if o in orders:
                denom = abs(ref.alpha(o))
                rel[o] = abs(f.alpha(o) - ref.alpha(o)) / denom if denom > 0 else np.inf
        report[wd] = {
            "alpha_2": f.alpha(2) if 2 in orders else None,
            "alpha_4": f.alpha(4) if 4 in orders else None,
            "rel_change": rel,
            "stable": all(r <= threshold for r in rel.values()),
        }
    return report
