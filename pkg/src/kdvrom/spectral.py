"""Truncated Fourier convolution algebra for real periodic fields on [0, 2*pi].

A field u(x) = sum_k u_k exp(i*k*x) is stored by its complex coefficients on
the symmetric signed-wavenumber range -k_max..k_max.  All convolutions are
exact truncated sums: the transform-based implementation pads far enough that
no retained output mode aliases, and a direct O(K^2) summation is available as
an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import fft, ifft, next_fast_len


class DimensionMismatchError(ValueError):
    """Raised when two fields with different mode counts are combined."""


@dataclass(frozen=True)
class ModePartition:
    """Split of the retained modes into resolved set F and unresolved buffer G.

    F = {k : |k| < N}, G = {k : N <= |k| < M}.  For reduced-order-model
    construction M = 2N, so every quadratic product of resolved fields is
    captured exactly by F union G.
    """

    N: int
    M: int

    def __post_init__(self):
        if self.N <= 0 or self.M <= self.N:
            raise ValueError(f"need 0 < N < M, got N={self.N}, M={self.M}")

    @classmethod
    def for_rom(cls, N: int) -> "ModePartition":
        return cls(N=N, M=2 * N)

    def resolved_mask(self, k_max: int) -> np.ndarray:
        k = np.arange(-k_max, k_max + 1)
        return np.abs(k) < self.N

    def unresolved_mask(self, k_max: int) -> np.ndarray:
        k = np.arange(-k_max, k_max + 1)
        return (np.abs(k) >= self.N) & (np.abs(k) < self.M)


class SpectralField:
    """Complex Fourier coefficients of a real periodic field.

    ``coeffs[i]`` holds the amplitude of wavenumber ``k = i - k_max``.
    Hermitian symmetry (u_{-k} = conj(u_k)) is the caller's invariant; it is
    checked by :func:`hermitian_asymmetry` and restored by
    :func:`hermitian_symmetrize`.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim != 1 or coeffs.size % 2 == 0:
            raise ValueError("coeffs must be a 1-d array of odd length")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def k_max(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    def __getitem__(self, k: int) -> complex:
        if abs(k) > self.k_max:
            return 0.0 + 0.0j
        return complex(self.coeffs[k + self.k_max])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SpectralField)
            and self.k_max == other.k_max
            and np.array_equal(self.coeffs, other.coeffs)
        )

    def __repr__(self) -> str:
        nz = {int(k): complex(self[k]) for k in self.wavenumbers if self[k] != 0}
        return f"SpectralField(k_max={self.k_max}, modes={nz})"

    @classmethod
    def zeros(cls, k_max: int) -> "SpectralField":
        return cls(np.zeros(2 * k_max + 1, dtype=complex))

    @classmethod
    def from_modes(cls, modes: dict, k_max: int) -> "SpectralField":
        """Build a field from a {wavenumber: amplitude} mapping."""
        c = np.zeros(2 * k_max + 1, dtype=complex)
        for k, v in modes.items():
            if abs(k) > k_max:
                raise ValueError(f"mode {k} outside |k| <= {k_max}")
            c[k + k_max] = v
        return cls(c)

    @classmethod
    def sine(cls, k_max: int) -> "SpectralField":
        """Coefficients of sin(x): u_1 = -i/2, u_{-1} = i/2."""
        return cls.from_modes({1: -0.5j, -1: 0.5j}, k_max)

    def resized(self, k_max: int) -> "SpectralField":
        """Zero-pad or truncate to a new symmetric range."""
        c = np.zeros(2 * k_max + 1, dtype=complex)
        m = min(k_max, self.k_max)
        c[k_max - m : k_max + m + 1] = self.coeffs[self.k_max - m : self.k_max + m + 1]
        return SpectralField(c)

    def to_json_dict(self) -> dict:
        return {
            "k_max": self.k_max,
            "re": self.coeffs.real.tolist(),
            "im": self.coeffs.imag.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SpectralField":
        c = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
        if c.size != 2 * d["k_max"] + 1:
            raise ValueError("array length inconsistent with k_max")
        return cls(c)


def hermitian_symmetrize(f: SpectralField) -> SpectralField:
    """Project onto the Hermitian-symmetric subspace (real fields)."""
    c = 0.5 * (f.coeffs + np.conj(f.coeffs[::-1]))
    c[f.k_max] = c[f.k_max].real
    return SpectralField(c)


def hermitian_asymmetry(f: SpectralField) -> float:
    """Max |u_k - conj(u_{-k})| relative to the field magnitude."""
    dev = np.max(np.abs(f.coeffs - np.conj(f.coeffs[::-1])))
    scale = np.max(np.abs(f.coeffs))
    return float(dev / scale) if scale > 0 else float(dev)


def random_hermitian(k_max: int, rng: np.random.Generator, support=None,
                     scale: float = 1.0) -> SpectralField:
    """Random Hermitian-symmetric field, optionally restricted to a mode mask."""
    c = scale * (rng.standard_normal(2 * k_max + 1) + 1j * rng.standard_normal(2 * k_max + 1))
    f = hermitian_symmetrize(SpectralField(c))
    if support is not None:
        c = f.coeffs.copy()
        c[~support] = 0.0
        f = SpectralField(c)
    return f


# --- convolution kernels -------------------------------------------------

@lru_cache(maxsize=None)
def _fft_length(k_max: int) -> int:
    # Exactness for all output modes |k| <= k_max from inputs supported on
    # |k| <= k_max requires length >= 3*k_max + 1 (no wrap-around aliasing).
    return next_fast_len(3 * k_max + 2)


def conv_arrays(a: np.ndarray, b: np.ndarray, k_max: int) -> np.ndarray:
    """Exact truncated product kernel -(ik/2) sum_{p+q=k} a_p b_q, all |k| <= k_max."""
    n = _fft_length(k_max)
    fa = np.zeros(n, dtype=complex)
    fb = np.zeros(n, dtype=complex)
    fa[: k_max + 1] = a[k_max:]
    fa[-k_max:] = a[:k_max]
    fb[: k_max + 1] = b[k_max:]
    fb[-k_max:] = b[:k_max]
    prod = fft(ifft(fa) * ifft(fb)) * n
    out = np.empty(2 * k_max + 1, dtype=complex)
    out[k_max:] = prod[: k_max + 1]
    out[:k_max] = prod[-k_max:]
    k = np.arange(-k_max, k_max + 1)
    return -0.5j * k * out


def conv_truncated(f: SpectralField, g: SpectralField, retain: str = "all",
                   partition: ModePartition | None = None) -> SpectralField:
    """Convolution term -(ik/2) sum_{p+q=k} f_p g_q on a selected mode set.

    ``retain`` is one of ``"all"``, ``"resolved"`` (output restricted to F) or
    ``"unresolved"`` (output restricted to the buffer G); the latter two need a
    partition.  The result is exact (alias-free) on the retained set and zero
    elsewhere.
    """
    if f.k_max != g.k_max:
        raise DimensionMismatchError(f"k_max mismatch: {f.k_max} != {g.k_max}")
    out = conv_arrays(f.coeffs, g.coeffs, f.k_max)
    if retain == "all":
        return SpectralField(out)
    if partition is None:
        raise ValueError("retain='resolved'/'unresolved' requires a partition")
    if retain == "resolved":
        mask = partition.resolved_mask(f.k_max)
    elif retain == "unresolved":
        mask = partition.unresolved_mask(f.k_max)
    else:
        raise ValueError(f"unknown retain selector {retain!r}")
    out = np.where(mask, out, 0.0)
    return SpectralField(out)


def scale_by_k_power(f: SpectralField, p: int) -> SpectralField:
    """Multiply mode j by j**p (spectral realization of repeated d/dx up to factors)."""
    if p <= 0:
        raise ValueError("power must be a positive integer")
    k = np.arange(-f.k_max, f.k_max + 1, dtype=float)
    return SpectralField((k ** p) * f.coeffs)


def project_resolved(f: SpectralField, partition: ModePartition) -> SpectralField:
    """Zero every mode outside the resolved set F; idempotent."""
    mask = partition.resolved_mask(f.k_max)
    return SpectralField(np.where(mask, f.coeffs, 0.0))


def project_unresolved(f: SpectralField, partition: ModePartition) -> SpectralField:
    """Zero every mode outside the unresolved buffer G."""
    mask = partition.unresolved_mask(f.k_max)
    return SpectralField(np.where(mask, f.coeffs, 0.0))


def real_space_samples(f: SpectralField, n_points: int) -> np.ndarray:
    """Evaluate u(x_j) on a uniform grid of n_points over [0, 2*pi)."""
    if n_points < 2 * f.k_max + 1:
        raise ValueError(
            f"n_points={n_points} aliases modes up to k_max={f.k_max}; "
            f"need at least {2 * f.k_max + 1}"
        )
    spec = np.zeros(n_points, dtype=complex)
    spec[: f.k_max + 1] = f.coeffs[f.k_max:]
    spec[-f.k_max:] = f.coeffs[: f.k_max]
    return np.real(ifft(spec) * n_points)


def resolved_mass(f: SpectralField, partition: ModePartition) -> float:
    """Total mass sum |u_k|^2 over the resolved set F."""
    mask = partition.resolved_mask(f.k_max)
    return float(np.sum(np.abs(f.coeffs[mask]) ** 2))


def total_mass(f: SpectralField) -> float:
    return float(np.sum(np.abs(f.coeffs) ** 2))
