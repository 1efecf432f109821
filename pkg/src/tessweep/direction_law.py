"""Direction distributions of a planar line process.

A law assigns an intensity F(phi) to line inclinations phi in (0, pi).
Everything the rest of the package needs derives from it:

* the crossing intensity C = integral of F(phi) sin(phi) over (0, pi),
  which is the rate at which process lines cross any fixed line,
* the per-end jump rates (the alpha' integrals of the angle-jump kernel
  F(alpha') sin(alpha' - alpha) / sin(alpha) and its mirrored twin),
* exact samplers for line inclinations and for the angle-jump kernel.

Isotropic laws (constant F = intensity) use closed forms throughout.
Tabulated laws are interpolated piecewise-linearly between the given
nodes and extended with constant value beyond the first/last node; all
their integrals are evaluated segment-exactly, so no quadrature error
enters the hot sampling and rate paths.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import DegenerateLawError, DomainError, NumericalError

# Angle guard: angles are kept inside [EPS_ANGLE, pi - EPS_ANGLE]; ends whose
# angle reaches the upper guard are treated as absorbed (their jump rate is
# integrably small there).
EPS_ANGLE = 1e-9

_REJECTION_ROUNDS = 1000


def _as_angle_array(alpha):
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= 0.0) or np.any(a >= np.pi):
        raise DomainError("angle must lie strictly inside (0, pi)")
    return a


class DirectionLaw:
    """Inclination intensity F(phi) on (0, pi) with its derived quantities.

    Instances are immutable and safe to share between parallel workers.
    Construct via :meth:`isotropic`, :meth:`tabulated` or :meth:`from_csv`.
    """

    def __init__(self, *, intensity=None, phi=None, values=None):
        self.is_isotropic = intensity is not None
        if self.is_isotropic:
            if intensity < 0:
                raise DomainError("isotropic intensity must be >= 0")
            self.intensity = float(intensity)
            self.phi = None
            self.values = None
        else:
            phi = np.asarray(phi, dtype=float)
            values = np.asarray(values, dtype=float)
            if phi.ndim != 1 or phi.shape != values.shape or phi.size < 2:
                raise DomainError("tabulated law needs matching 1-d phi/value arrays")
            if np.any(np.diff(phi) <= 0):
                raise DomainError("tabulated phi grid must be strictly increasing")
            if phi[0] <= 0.0 or phi[-1] >= np.pi:
                raise DomainError("tabulated phi grid must lie inside (0, pi)")
            if np.any(values < 0):
                raise DomainError("tabulated values must be nonnegative")
            self.intensity = None
            # Extend to the full interval with constant end values.
            self.phi = np.concatenate(([0.0], phi, [np.pi]))
            self.values = np.concatenate(([values[0]], values, [values[-1]]))
            self.phi.setflags(write=False)
            self.values.setflags(write=False)
            self._build_tables()

    # -- constructors -----------------------------------------------------

    @classmethod
    def isotropic(cls, intensity: float) -> "DirectionLaw":
        """Constant law F = intensity (lines per unit parameter measure)."""
        return cls(intensity=intensity)

    @classmethod
    def tabulated(cls, phi, values) -> "DirectionLaw":
        """Piecewise-linear law through the nodes (phi_k, values_k)."""
        return cls(phi=phi, values=values)

    @classmethod
    def from_csv(cls, path) -> "DirectionLaw":
        """Load a tabulated law from a two-column CSV (phi, F(phi)), phi in radians."""
        phis, vals = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                phis.append(float(row[0]))
                vals.append(float(row[1]))
        return cls(phi=phis, values=vals)

    def mirrored(self) -> "DirectionLaw":
        """The law of the reflected process, F(pi - phi)."""
        if self.is_isotropic:
            return self
        inner_phi = self.phi[1:-1]
        inner_val = self.values[1:-1]
        return DirectionLaw(phi=(np.pi - inner_phi)[::-1], values=inner_val[::-1])

    # -- tabulated-law integral tables ------------------------------------

    def _build_tables(self):
        """Segment-exact suffix integrals of F sin, F cos, F over (phi_k, pi)."""
        a, b = self.phi[:-1], self.phi[1:]
        fa, fb = self.values[:-1], self.values[1:]
        slope = (fb - fa) / (b - a)
        # antiderivatives of (c0 + c1 x) sin x and (c0 + c1 x) cos x
        c0 = fa - slope * a
        c1 = slope

        def seg_sin(lo, hi, c0, c1):
            anti = lambda x: -c0 * np.cos(x) + c1 * (np.sin(x) - x * np.cos(x))
            return anti(hi) - anti(lo)

        def seg_cos(lo, hi, c0, c1):
            anti = lambda x: c0 * np.sin(x) + c1 * (np.cos(x) + x * np.sin(x))
            return anti(hi) - anti(lo)

        seg_s = seg_sin(a, b, c0, c1)
        seg_c = seg_cos(a, b, c0, c1)
        seg_f = 0.5 * (fa + fb) * (b - a)
        self._c0, self._c1 = c0, c1
        self._suffix_sin = np.concatenate((np.cumsum(seg_s[::-1])[::-1], [0.0]))
        self._suffix_cos = np.concatenate((np.cumsum(seg_c[::-1])[::-1], [0.0]))
        self._suffix_f = np.concatenate((np.cumsum(seg_f[::-1])[::-1], [0.0]))
        self._suffix_max = np.maximum.accumulate(self.values[::-1])[::-1]
        self._seg_sin_fn, self._seg_cos_fn = seg_sin, seg_cos
        # fine inverse-CDF table for inclination sampling
        grid = np.linspace(0.0, np.pi, 4097)
        dens = self.density(grid)
        cdf = np.concatenate(([0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))))
        total = cdf[-1]
        self._inv_cdf_grid = grid
        self._inv_cdf = cdf / total if total > 0 else None

    def _suffix_integrals(self, alpha):
        """(Is, Ic)(alpha) = integrals of F sin / F cos over (alpha, pi)."""
        k = np.clip(np.searchsorted(self.phi, alpha, side="right") - 1, 0, len(self._c0) - 1)
        hi = self.phi[k + 1]
        Is = self._seg_sin_fn(alpha, hi, self._c0[k], self._c1[k]) + self._suffix_sin[k + 1]
        Ic = self._seg_cos_fn(alpha, hi, self._c0[k], self._c1[k]) + self._suffix_cos[k + 1]
        return Is, Ic

    # -- evaluation --------------------------------------------------------

    def density(self, phi):
        """F(phi); vectorized, constant beyond the tabulated range."""
        phi = np.asarray(phi, dtype=float)
        if self.is_isotropic:
            return np.full_like(phi, self.intensity)
        return np.interp(phi, self.phi, self.values)

    @property
    def crossing_intensity(self) -> float:
        """C: rate of process-line crossings per unit length of any fixed line."""
        if self.is_isotropic:
            return 2.0 * self.intensity
        c = float(self._suffix_sin[0])
        if c <= 0.0:
            raise DegenerateLawError("tabulated law has zero mass")
        return c

    @property
    def total_intensity(self) -> float:
        """Integral of F over (0, pi): line hits per unit offset interval."""
        if self.is_isotropic:
            return np.pi * self.intensity
        return float(self._suffix_f[0])

    def jump_rate(self, alpha):
        """Total angle-jump rate with target weight F(alpha'):

        integral over (alpha, pi) of F(phi) sin(phi - alpha) / sin(alpha).

        Closed form intensity * (1 + cos alpha) / sin alpha for isotropic laws.
        This is the rate of the end whose outward ray is +x (the right end of
        a chord); the opposite end uses :meth:`jump_rate_mirrored`.
        """
        a = _as_angle_array(alpha)
        if self.is_isotropic:
            return self.intensity * (1.0 + np.cos(a)) / np.sin(a)
        Is, Ic = self._suffix_integrals(a)
        return (np.cos(a) * Is - np.sin(a) * Ic) / np.sin(a)

    def jump_rate_mirrored(self, alpha):
        """As :meth:`jump_rate` with target weight F(pi - alpha') (left end)."""
        if self.is_isotropic:
            return self.jump_rate(alpha)
        return self.mirrored().jump_rate(alpha)

    def band_rate(self, alpha, lo, hi):
        """Partial jump rate restricted to targets in (lo, hi), segment-exact."""
        a = _as_angle_array(alpha)
        lo = np.maximum(lo, a)
        if self.is_isotropic:
            # integral of sin(phi - a) over (lo, hi) = cos(lo - a) - cos(hi - a)
            return self.intensity * (np.cos(lo - a) - np.cos(hi - a)) / np.sin(a)
        Is_lo, Ic_lo = self._suffix_integrals(np.asarray(lo, dtype=float))
        Is_hi, Ic_hi = self._suffix_integrals(np.asarray(hi, dtype=float))
        return (np.cos(a) * (Is_lo - Is_hi) - np.sin(a) * (Ic_lo - Ic_hi)) / np.sin(a)

    def max_density_above(self, alpha) -> float:
        """Maximum of F over [alpha, pi); envelope for rejection sampling."""
        if self.is_isotropic:
            return self.intensity
        a = np.asarray(alpha, dtype=float)
        k = np.clip(np.searchsorted(self.phi, a, side="right"), 1, len(self.phi) - 1)
        return np.maximum(self.density(a), self._suffix_max[k])

    # -- samplers ----------------------------------------------------------

    def sample_jump_angle(self, alpha, u=None, rng=None):
        """Draw alpha' in (alpha, pi) from the normalized angle-jump kernel.

        The kernel density is F(alpha') sin(alpha' - alpha) / sin(alpha) up to
        normalization.  Isotropic laws invert the cumulative distribution
        exactly: alpha' = alpha + arccos(1 - u (1 + cos alpha)).  Tabulated
        laws draw the proposal from that same sine-shaped envelope and accept
        with probability F(alpha') / max F; the envelope's sine factor cancels
        against the target.  u = 0 returns the lower endpoint alpha exactly.

        Vectorized over alpha.  Tabulated laws need `rng` for the accept step.
        """
        a = _as_angle_array(alpha)
        scalar = np.ndim(alpha) == 0
        a = np.atleast_1d(a)
        if u is None:
            if rng is None:
                raise DomainError("need u or rng to sample")
            u = rng.random(a.shape)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if np.any(u < 0.0) or np.any(u > 1.0):
            raise DomainError("u must lie in [0, 1]")
        u = np.broadcast_to(u, a.shape).copy()

        def envelope_inverse(a, u):
            arg = np.clip(1.0 - u * (1.0 + np.cos(a)), -1.0, 1.0)
            return a + np.arccos(arg)

        if self.is_isotropic:
            out = envelope_inverse(a, u)
        else:
            if rng is None:
                raise DomainError("tabulated laws need rng for rejection sampling")
            fmax = np.broadcast_to(self.max_density_above(a), a.shape)
            if np.any(fmax <= 0.0):
                raise DegenerateLawError("law vanishes above alpha; no jumps possible")
            out = np.empty_like(a)
            pending = np.ones(a.shape, dtype=bool)
            zero = u == 0.0
            out[zero] = a[zero]
            pending &= ~zero
            uu = u
            for _ in range(_REJECTION_ROUNDS):
                if not pending.any():
                    break
                prop = envelope_inverse(a[pending], uu[pending])
                accept = rng.random(prop.shape) * fmax[pending] <= self.density(prop)
                idx = np.flatnonzero(pending)
                out[idx[accept]] = prop[accept]
                pending[idx[accept]] = False
                uu[pending] = rng.random(int(pending.sum()))
            else:
                raise NumericalError(
                    "jump-angle rejection sampling exceeded its round budget",
                    residual=float(pending.mean()),
                )
        out = np.clip(out, a, np.pi)
        return float(out[0]) if scalar else out

    def jump_cdf(self, alpha, alpha_prime):
        """Normalized kernel CDF P(jump target <= alpha' | from alpha)."""
        a = _as_angle_array(alpha)
        total = self.jump_rate(a)
        part = self.band_rate(a, a, np.asarray(alpha_prime, dtype=float))
        return np.clip(part / total, 0.0, 1.0)

    def sample_inclination(self, n, rng):
        """Draw n line inclinations with density proportional to F on (0, pi)."""
        if self.is_isotropic:
            return rng.uniform(0.0, np.pi, n)
        if self._inv_cdf is None:
            raise DegenerateLawError("tabulated law has zero mass")
        return np.interp(rng.random(n), self._inv_cdf, self._inv_cdf_grid)

    def __repr__(self):
        if self.is_isotropic:
            return f"DirectionLaw.isotropic({self.intensity!r})"
        return f"DirectionLaw.tabulated(<{len(self.phi) - 2} nodes>)"


def quadrature_jump_rate(law: DirectionLaw, alpha: float, mirrored=False) -> float:
    """Independent adaptive-quadrature evaluation of the jump rate.

    Slow path used for validation; raises NumericalError when the
    integrator cannot reach the requested absolute tolerance.
    """
    from scipy.integrate import quad

    a = float(alpha)
    if not 0.0 < a < np.pi:
        raise DomainError("angle must lie strictly inside (0, pi)")

    def integrand(phi):
        f = law.density(np.pi - phi if mirrored else phi)
        return f * np.sin(phi - a) / np.sin(a)

    points = None
    if not law.is_isotropic:
        inner = law.phi[(law.phi > a) & (law.phi < np.pi)]
        points = inner if inner.size else None
    val, err = quad(integrand, a, np.pi, epsabs=1e-10, epsrel=1e-10,
                    limit=200, points=points)
    if err > 1e-7 * max(1.0, abs(val)):
        raise NumericalError("jump-rate quadrature did not converge", residual=err)
    return val
