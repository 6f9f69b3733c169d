"""Hand-coded memory-closure terms and reduced-model right-hand sides.

The reduced model evolves the resolved modes F = {|k| < N} with a buffer
G = {N <= |k| < 2N} wide enough that every quadratic product of resolved
fields is captured exactly.  The right-hand side is the Markov term R0 plus
memory kernels R1..R4; renormalized models weight the kernels by constant
prefactors alpha_i, non-renormalized ones by (-1)^(i+1) t^i / i!.

The kernels here are flat numpy transcriptions of the nested convolution
formulas, written for speed: every distinct convolution is computed once per
evaluation and reused, and convolutions against fixed linear combinations of
u and its quadratic products are collapsed by bilinearity.  Correctness is
gated by agreement with the tree-walking symbolic evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .spectral import ModePartition, SpectralField, conv_arrays
from .solver import Trajectory, dispersive_phase, integrate_arrays


@dataclass(frozen=True)
class RomConfig:
    """Reduced model parameters.

    ``order`` is the highest memory kernel retained (0 = Markov only).  In
    renormalized mode ``alphas`` supplies one constant prefactor per kernel;
    in non-renormalized mode the kernels carry their bare Taylor weights and
    ``alphas`` must be empty.
    """

    N: int
    epsilon: float
    order: int = 0
    alphas: tuple = ()
    renormalized: bool = True
    dt: float = 1e-3
    t_end: float = 10.0

    def __post_init__(self):
        if self.N <= 0 or self.epsilon < 0 or self.dt <= 0 or self.t_end < 0:
            raise ValueError("N, dt must be positive; epsilon, t_end nonnegative")
        if self.order not in (0, 1, 2, 3, 4):
            raise ValueError(f"order must be in 0..4, got {self.order}")
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.renormalized:
            if len(self.alphas) != self.order:
                raise ValueError(
                    f"renormalized model of order {self.order} needs "
                    f"{self.order} alphas, got {len(self.alphas)}"
                )
        elif self.alphas:
            raise ValueError("non-renormalized model takes no alphas")

    @property
    def partition(self) -> ModePartition:
        return ModePartition.for_rom(self.N)


class KernelEvaluator:
    """Evaluates R0 and the memory kernels on coefficient arrays.

    Arrays span |k| <= 2N - 1 so that buffer modes are representable; inputs
    must vanish outside the resolved set.  ``conv_calls`` counts convolution
    evaluations (one forward/inverse transform pair each, with transforms of
    repeated operands fused), the unit used for work accounting.
    """

    def __init__(self, N: int, epsilon: float):
        self.N = N
        self.epsilon = float(epsilon)
        self.k_max = 2 * N - 1
        k = np.arange(-self.k_max, self.k_max + 1)
        self.fmask = np.abs(k) < N
        self.gmask = ~self.fmask
        self.k3 = (k.astype(float)) ** 3
        self.k6 = self.k3**2
        self.k9 = self.k3**3
        self.conv_calls = 0

    def _conv(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.conv_calls += 1
        return conv_arrays(a, b, self.k_max)

    def markov(self, u: np.ndarray, uu: np.ndarray | None = None) -> np.ndarray:
        if uu is None:
            uu = self._conv(u, u)
        ie2 = 1j * self.epsilon**2
        return ie2 * self.k3 * u + self.fmask * uu

    def kernels(self, u: np.ndarray, order: int,
                uu: np.ndarray | None = None) -> list:
        """Memory kernels [R1, .., R_order] for a resolved-supported state."""
        if not 1 <= order <= 4:
            raise ValueError(f"order must be in 1..4, got {order}")
        eps = self.epsilon
        ie2 = 1j * eps**2
        e4 = eps**4
        ie6 = 1j * eps**6
        F, G, k3, k6, k9 = self.fmask, self.gmask, self.k3, self.k6, self.k9

        if uu is None:
            uu = self._conv(u, u)
        cuu = F * uu
        tuu = G * uu
        w = ie2 * k3 * u + cuu  # the Markov term itself
        ut = self._conv(u, tuu)
        out = [2 * F * ut]
        if order == 1:
            return out

        uw = self._conv(u, w)
        tt = self._conv(tuu, tuu)
        out.append(
            -2 * F * tt
            - 2 * F * self._conv(u, ie2 * k3 * tuu + 2 * G * (ut - uw))
        )
        if order == 2:
            return out

        # conv(u, a*w + b*tuu) = a*uw + b*ut and likewise for conv(w, .):
        # bilinearity turns most inner convolutions into reused combinations.
        ww = self._conv(w, w)
        wt = self._conv(w, tuu)
        inner3 = (
            -e4 * k6 * u
            + ie2 * k3 * cuu
            + 2 * F * (uw - 2 * ut)
            + ie2 * k3 * tuu
            + 2 * G * (ut - 2 * uw)
        )
        A = (
            -e4 * k6 * tuu
            - 2 * ie2 * k3 * G * (2 * uw - ut)
            + 2 * G * self._conv(u, inner3)
            + 2 * G * (ww - wt)
            + 2 * G * tt
        )
        B = ie2 * k3 * tuu - 2 * G * (uw - ut)
        out.append(2 * F * self._conv(u, A) + 6 * F * self._conv(tuu, B))
        if order == 3:
            return out

        s1 = (
            -3 * e4 * k6 * u
            + 3 * ie2 * k3 * cuu
            + 2 * F * (3 * uw - 5 * ut)
            + ie2 * k3 * tuu
            - 2 * G * (3 * uw - ut)
        )
        s2 = (
            e4 * k6 * u
            - ie2 * k3 * cuu
            - 2 * F * (uw - 3 * ut)
            - 3 * ie2 * k3 * tuu
            + 2 * G * (5 * uw - 3 * ut)
        )
        us1 = self._conv(u, s1)
        us2 = self._conv(u, s2)
        X = (
            ie6 * k9 * u
            + e4 * k6 * cuu
            - 2 * ie2 * k3 * F * (uw - 3 * ut)
            + 2 * F * us2
            - 2 * F * (ww - 2 * wt)
            - 6 * F * tt
            - e4 * k6 * tuu
            - 2 * ie2 * k3 * G * (3 * uw - ut)
            + 2 * G * us1
            + 2 * G * (3 * ww - 2 * wt)
            + 2 * G * tt
        )
        T1 = (
            ie6 * k9 * tuu
            - 2 * e4 * k6 * G * (3 * uw - ut)
            - 2 * ie2 * k3 * G * us1
            - 2 * G * self._conv(u, X)
            - 2 * ie2 * k3 * G * (3 * ww - 2 * wt)
            + 2 * G * self._conv(w, s1)
            + 2 * G * self._conv(tuu, s2)
            - 2 * ie2 * k3 * G * tt
        )
        T3 = ie2 * k3 * tuu + 2 * G * (uw + ut)
        out.append(
            2 * F * self._conv(u, T1)
            - 8 * F * self._conv(tuu, A)
            + 48 * F * self._conv(G * uw, ie2 * k3 * tuu + 2 * G * ut)
            - 6 * F * self._conv(T3, T3)
        )
        return out


def _embed(u_hat: SpectralField, partition: ModePartition) -> np.ndarray:
    """Resolved-supported coefficients on the buffer-wide range |k| <= M-1."""
    need = partition.M - 1
    arr = u_hat.resized(need).coeffs if u_hat.k_max != need else u_hat.coeffs
    if np.any(arr[~partition.resolved_mask(need)] != 0):
        raise ValueError("state has support outside the resolved set")
    return arr


def r0_markov(u_hat: SpectralField, epsilon: float,
              partition: ModePartition) -> SpectralField:
    """Markov term i*eps^2*k^3*u_k + Chat_k(u, u) on the resolved set."""
    ev = KernelEvaluator(partition.N, epsilon)
    return SpectralField(ev.markov(_embed(u_hat, partition)))


def r1_tmodel(u_hat: SpectralField, epsilon: float,
              partition: ModePartition) -> SpectralField:
    """First memory kernel 2*Chat(u, Ctil(u, u))."""
    ev = KernelEvaluator(partition.N, epsilon)
    return SpectralField(ev.kernels(_embed(u_hat, partition), 1)[0])


def r_high(u_hat: SpectralField, epsilon: float, partition: ModePartition,
           i: int) -> SpectralField:
    """Memory kernel of order i in {2, 3, 4}."""
    if i not in (2, 3, 4):
        raise ValueError(f"order must be 2, 3 or 4, got {i}")
    ev = KernelEvaluator(partition.N, epsilon)
    return SpectralField(ev.kernels(_embed(u_hat, partition), i)[i - 1])


def memory_weights(config: RomConfig, t: float) -> np.ndarray:
    """Scalar weight of each kernel R1..R_order in the model right-hand side."""
    if config.renormalized:
        return np.array(config.alphas, dtype=float)
    return np.array(
        [(-1.0) ** (i + 1) * t**i / factorial(i) for i in range(1, config.order + 1)]
    )


def rom_rhs(u_hat: SpectralField, t: float, config: RomConfig) -> SpectralField:
    """Reduced-model right-hand side R0 + sum_i weight_i(t) * R^i."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    ev = KernelEvaluator(config.N, config.epsilon)
    u = _embed(u_hat, config.partition)
    uu = ev._conv(u, u)
    out = ev.markov(u, uu)
    if config.order >= 1:
        ks = ev.kernels(u, config.order, uu)
        for wgt, r in zip(memory_weights(config, t), ks):
            out = out + wgt * r
    return SpectralField(out)


def integrate_rom(u0: SpectralField, config: RomConfig,
                  sample_stride: int = 1):
    """Integrate the reduced model from u0 to t_end.

    The dispersive part of the Markov term is advanced exactly by an
    integrating factor; all convolution terms are explicit.  Returns the
    trajectory together with the evaluator so callers can read work counters.
    """
    ev = KernelEvaluator(config.N, config.epsilon)
    k_max = ev.k_max
    u = _embed(u0, config.partition).copy()
    half_phase = dispersive_phase(k_max, config.epsilon, 0.5 * config.dt)
    order = config.order
    fmask = ev.fmask

    def nonlinear(arr, t):
        uu = ev._conv(arr, arr)
        out = fmask * uu
        if order >= 1:
            weights = memory_weights(config, t)
            for wgt, r in zip(weights, ev.kernels(arr, order, uu)):
                out = out + wgt * r
        return out

    n_steps = int(round(config.t_end / config.dt))
    times, states = integrate_arrays(u, config.dt, n_steps, half_phase,
                                     nonlinear, sample_stride)
    return Trajectory(times, states), ev
