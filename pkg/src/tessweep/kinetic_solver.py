"""Deterministic transport solver for the single-end transition law and
residual verification of the full two-end balance on Monte Carlo fields.

The single-end state (alpha', l, S or P) obeys a linear transport equation:
advection with velocity cot(alpha') in l, velocity l in S, velocity
1/sin(alpha') in P, plus an angle-jump operator that removes mass at the
total jump rate and reinjects it at larger angles with kernel weight
F(alpha') sin(alpha' - phi) / sin(phi).

Discretization notes, in the order they matter:

* The jump operator uses segment-exact band integrals of the kernel per
  target bin, and the per-bin loss rate is defined as the column sum of
  that gain matrix, so jumps conserve mass to machine precision by
  construction (the column sums converge to the analytic rate at second
  order, which a test pins down).
* The angle axis stops one guard width short of pi; jumps landing in the
  guard band go to a final absorbing bin.  The band is dynamically inert
  for jumps (the rate vanishes there) but its advection velocity diverges,
  which is exactly why it is frozen.
* Advection applies per-slice constant-velocity shifts with linear
  interpolation (the semi-Lagrangian form of first-order upwinding).  For
  shifts under one cell per step this is textbook upwind; larger shifts
  stay stable, positive and mean-exact, so the guard-adjacent slices with
  huge |cot| cannot throttle the global step.  Mass reaching an l/S/P
  domain edge accumulates in the edge cell.

The only hard step bound is positivity of the explicit jump update,
dt * max rate <= 1;步 violating it raises StabilityError before touching
the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .direction_law import DirectionLaw
from .errors import ResolutionError, StabilityError, DomainError
from .line_process import make_rng
from .section_sweep import PolygonEnsemble, sample_birth_angles, _cot
from .stats_io import chi2_from_counts

ANGLE_GUARD = 1e-3


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def _centered_edges(lo, hi, n):
    """Uniform edges over [lo, hi] adjusted so that 0 is a bin center."""
    h = (hi - lo) / n
    if lo < 0 < hi:
        k = round(-lo / h - 0.5)
        shift = (-lo / h - 0.5) - k
        lo += shift * h
        hi += shift * h
    return np.linspace(lo, hi, n + 1)


@dataclass
class KernelGrid:
    """Mass-per-cell discretization of the single-end transition density.

    axes maps name -> bin edges, in array order; "alpha" always comes
    first and its final bin is the absorbing guard band near pi.  values
    holds mass per cell; density() converts to density.

    The never-jumped component is an exact point mass whose weight decays
    as exp(-rate(alpha0) t) while it rides the deterministic drift; the
    grid would smear it badly, so it is carried analytically in
    atom_weight and only the jumped remainder lives on the grid.  Masses
    and marginals include the atom at its exact position.
    """

    axes: dict
    values: np.ndarray
    t: float
    alpha0: float
    atom_weight: float = 0.0
    meta: dict = field(default_factory=dict)

    def atom_position(self, name: str) -> float:
        """Exact coordinates of the never-jumped state at the current time."""
        c = 1.0 / np.tan(self.alpha0)
        return {"l": self.t * c, "s": 0.5 * self.t**2 * c,
                "p": self.t / np.sin(self.alpha0)}[name]

    @property
    def alpha_centers(self):
        e = self.axes["alpha"]
        return 0.5 * (e[1:] + e[:-1])

    def centers(self, name):
        e = self.axes[name]
        return 0.5 * (e[1:] + e[:-1])

    def widths(self, name):
        return np.diff(self.axes[name])

    def mass(self) -> float:
        return float(self.values.sum()) + self.atom_weight

    def density(self) -> np.ndarray:
        vol = np.ones(self.values.shape)
        for ax, name in enumerate(self.axes):
            w = self.widths(name)
            shape = [1] * self.values.ndim
            shape[ax] = w.size
            vol = vol * w.reshape(shape)
        return self.values / vol

    def marginal(self, name) -> np.ndarray:
        """Mass marginal over one axis (atom included at its exact spot)."""
        ax = list(self.axes).index(name)
        other = tuple(i for i in range(self.values.ndim) if i != ax)
        m = self.values.sum(axis=other)
        if self.atom_weight > 0:
            if name == "alpha":
                m = m.copy()
                m[0] += self.atom_weight
            else:
                idx, w = _linear_deposit(self.axes[name], self.atom_position(name))
                m = m.copy()
                for i, wi in zip(idx, w):
                    m[i] += self.atom_weight * wi
        return m

    def marginal2(self, name_a, name_b) -> np.ndarray:
        keep = (list(self.axes).index(name_a), list(self.axes).index(name_b))
        other = tuple(i for i in range(self.values.ndim) if i not in keep)
        m = self.values.sum(axis=other)
        m = m if keep[0] < keep[1] else m.T
        if self.atom_weight > 0:
            m = m.copy()
            spots = []
            for name in (name_a, name_b):
                if name == "alpha":
                    spots.append(([0], [1.0]))
                else:
                    spots.append(_linear_deposit(self.axes[name],
                                                 self.atom_position(name)))
            for i, wi in zip(*spots[0]):
                for j, wj in zip(*spots[1]):
                    m[i, j] += self.atom_weight * wi * wj
        return m

    def copy(self):
        return KernelGrid(axes={k: v.copy() for k, v in self.axes.items()},
                          values=self.values.copy(), t=self.t,
                          alpha0=self.alpha0, atom_weight=self.atom_weight,
                          meta=dict(self.meta))


def make_kernel_grid(alpha0: float, variant: str = "s", n_alpha: int = 96,
                     n_l: int = 129, l_range=(-4.0, 4.0), n_extra: int = 96,
                     s_range=(-2.0, 4.0), p_range=(0.0, 8.0),
                     guard: float = ANGLE_GUARD) -> KernelGrid:
    """Fresh grid with the initial delta at (alpha0, l=0, S=0, P=0).

    variant: "s", "p", or "sp" (joint).  The delta lands in the cell whose
    center is closest to the origin of each axis; l and S axes are nudged
    so that 0 is exactly a bin center.
    """
    if not 0 < alpha0 < np.pi - 2 * guard:
        raise DomainError("alpha0 must lie inside the guarded angle range")
    a_edges = np.concatenate((np.linspace(alpha0, np.pi - guard, n_alpha + 1),
                              [np.pi]))
    axes = {"alpha": a_edges, "l": _centered_edges(*l_range, n_l)}
    if variant in ("s", "sp"):
        axes["s"] = _centered_edges(*s_range, n_extra)
    if variant in ("p", "sp"):
        axes["p"] = np.linspace(*p_range, n_extra + 1)
    if variant not in ("s", "p", "sp"):
        raise DomainError(f"unknown variant {variant!r}")
    shape = tuple(len(e) - 1 for e in axes.values())
    return KernelGrid(axes=axes, values=np.zeros(shape), t=0.0, alpha0=alpha0,
                      atom_weight=1.0, meta={"variant": variant, "guard": guard})


def _linear_deposit(edges, x):
    """Index and weight placing a point mass in its containing bin.

    Finite-volume semantics: a point belongs to one cell, exactly as a
    histogram would bin it, so grid marginals and Monte Carlo histograms
    of an atom agree bin for bin.
    """
    j = int(np.clip(np.searchsorted(edges, x, side="right") - 1,
                    0, len(edges) - 2))
    return [j], [1.0]


# ---------------------------------------------------------------------------
# jump operator
# ---------------------------------------------------------------------------

def jump_matrix(law: DirectionLaw, grid: KernelGrid):
    """(gain matrix, loss vector) for the angle axis, segment exact.

    gain[i, j] is the rate from a source at the center of bin j into bin
    i > j; loss[j] is the corresponding column sum, so the pair conserves
    mass identically.  Jumps within the source bin are left in place.
    """
    e = grid.axes["alpha"]
    c = grid.alpha_centers
    nb = c.size
    if nb < 8:
        raise ResolutionError("need at least 8 angle bins for the jump operator")
    G = np.zeros((nb, nb))
    for j in range(nb - 1):  # absorbing bin has no outflow
        lo = np.maximum(e[j + 1:-1], c[j])
        hi = e[j + 2:]
        G[j + 1:, j] = law.band_rate(c[j], lo, hi)
    loss = G.sum(axis=0)
    return G, loss


def step_transition(grid: KernelGrid, law: DirectionLaw, dt: float,
                    _cache={}) -> KernelGrid:
    """One split step: atom decay and first-collision source, explicit jump
    exchange on the grid, then per-axis advection.

    Raises StabilityError when dt violates the positivity bound of the
    jump update.  Mass is conserved to machine precision; values never go
    negative.
    """
    key = (id(law), grid.alpha0, grid.values.shape, grid.axes["alpha"][1])
    cached = _cache.get(key)
    if cached is None:
        cached = jump_matrix(law, grid)
        e = grid.axes["alpha"]
        rate0 = float(law.jump_rate(grid.alpha0))
        if rate0 > 0:
            bands = law.band_rate(grid.alpha0,
                                  np.maximum(e[:-1], grid.alpha0), e[1:])
            q0 = np.clip(bands, 0.0, None)
            q0 = q0 / q0.sum()
        else:
            q0 = None
        _cache.clear()
        _cache[key] = cached + (rate0, q0)
    G, loss, rate0, q0 = cached if len(cached) == 4 else _cache[key]
    if dt * loss.max() > 1.0:
        raise StabilityError(
            f"dt={dt} violates jump positivity (max rate {loss.max():.3g})")
    M = grid.values
    flat = M.reshape(M.shape[0], -1)
    flat = flat + dt * (G @ flat - loss[:, None] * flat)
    M = flat.reshape(M.shape)

    atom = grid.atom_weight
    if atom > 0 and rate0 > 0:
        emitted = atom * -np.expm1(-rate0 * dt)
        atom -= emitted
        # Jumps happen mid-step on average.  The fresh deposit is advected
        # by the full step right below, so it is backdated by half a step
        # at the velocity of its target bin.
        t_mid = grid.t + 0.5 * dt
        names = list(grid.axes)
        c0 = 1.0 / np.tan(grid.alpha0)
        a_c = grid.alpha_centers
        source = np.zeros(M.shape)
        last = M.shape[0] - 1
        for i in np.flatnonzero(q0 > 0):
            v_l = 0.0 if i == last else 1.0 / np.tan(a_c[i])
            v_p = 0.0 if i == last else 1.0 / np.sin(a_c[i])
            idx = []
            for name in names[1:]:
                if name == "l":
                    pos = t_mid * c0 - 0.5 * dt * v_l
                elif name == "s":
                    pos = 0.5 * t_mid**2 * c0 - 0.5 * dt * t_mid * c0
                else:
                    pos = t_mid / np.sin(grid.alpha0) - 0.5 * dt * v_p
                idx.append(_linear_deposit(grid.axes[name], pos)[0][0])
            source[(i, *idx)] = q0[i]
        M = M + emitted * source

    names = list(grid.axes)
    a_c = grid.alpha_centers
    vel_l = np.where(np.arange(a_c.size) < a_c.size - 1, _cot(a_c), 0.0)
    h_l = grid.widths("l")[0]
    M = _shift_per_slice(M, slice_axis=0, move_axis=names.index("l"),
                         shifts=vel_l * dt / h_l)
    if "s" in grid.axes:
        l_c = grid.centers("l")
        h_s = grid.widths("s")[0]
        M = _shift_per_slice(M, slice_axis=names.index("l"),
                             move_axis=names.index("s"),
                             shifts=l_c * dt / h_s)
    if "p" in grid.axes:
        vel_p = np.where(np.arange(a_c.size) < a_c.size - 1,
                         1.0 / np.sin(a_c), 0.0)
        h_p = grid.widths("p")[0]
        M = _shift_per_slice(M, slice_axis=0, move_axis=names.index("p"),
                             shifts=vel_p * dt / h_p)
    out = grid.copy()
    out.values = M
    out.atom_weight = atom
    out.t = grid.t + dt
    return out


def _shift_per_slice(M, slice_axis, move_axis, shifts):
    """Shift M along move_axis by a per-slice fractional cell count.

    Nearest-integer shift (exact) plus a minmod-limited second-order
    correction for the remaining sub-cell fraction: upwind-stable,
    positivity-preserving, conservative, and far less diffusive than
    linear interpolation.  Overflow accumulates in the edge cells.
    """
    M = np.moveaxis(M, (slice_axis, move_axis), (0, 1))
    out = np.empty_like(M)
    n = M.shape[1]
    for i, s in enumerate(shifts):
        k = int(np.round(s))
        f = s - k
        a = _int_shift(M[i], n, k)
        out[i] = _fractional_muscl(a, f) if f != 0.0 else a
    return np.moveaxis(out, (0, 1), (slice_axis, move_axis))


def _fractional_muscl(u, f):
    """Advect u (axis 0) by a fraction f in (-0.5, 0.5] of one cell."""
    sl = np.zeros_like(u)
    dp = u[2:] - u[1:-1]
    dm = u[1:-1] - u[:-2]
    sl[1:-1] = np.where(dp * dm > 0,
                        np.sign(dp) * np.minimum(np.abs(dp), np.abs(dm)), 0.0)
    out = u.copy()
    if f > 0:
        flux = f * (u + 0.5 * (1.0 - f) * sl)   # through the right face
        flux = np.clip(flux, 0.0, u)
        out -= flux
        out[1:] += flux[:-1]
        out[-1] += flux[-1]
    else:
        g = -f
        flux = g * (u - 0.5 * (1.0 - g) * sl)   # through the left face
        flux = np.clip(flux, 0.0, u)
        out -= flux
        out[:-1] += flux[1:]
        out[0] += flux[0]
    return out


def _int_shift(arr, n, k):
    """Integer shift along axis 0 with absorbing edges."""
    if k == 0:
        return arr.copy()
    out = np.zeros_like(arr)
    if k >= n:
        out[-1] = arr.sum(axis=0)
    elif k > 0:
        out[k:] = arr[:n - k]
        out[-1] += arr[n - k:].sum(axis=0)
    elif k <= -n:
        out[0] = arr.sum(axis=0)
    else:
        out[:k] = arr[-k:]
        out[0] += arr[:-k].sum(axis=0)
    return out


def solve_transition(law: DirectionLaw, alpha0: float, t_targets,
                     variant: str = "s", dt_max: float = 0.01,
                     cfl: float = 0.5, **grid_kw):
    """March the kernel grid to each target time; returns snapshots.

    The step is the smaller of dt_max and the jump positivity bound times
    cfl.  Snapshot times are hit exactly.
    """
    grid = make_kernel_grid(alpha0, variant=variant, **grid_kw)
    _, loss = jump_matrix(law, grid)
    dt_stab = cfl / loss.max() if loss.max() > 0 else np.inf
    dt = min(dt_max, dt_stab)
    snaps = []
    for t_target in np.atleast_1d(np.asarray(t_targets, dtype=float)):
        while grid.t < t_target - 1e-12:
            step = min(dt, t_target - grid.t)
            grid = step_transition(grid, law, step)
        snaps.append(grid.copy())
    return snaps


# ---------------------------------------------------------------------------
# literal generator application (residual form)
# ---------------------------------------------------------------------------

def apply_generator(grid: KernelGrid, law: DirectionLaw) -> np.ndarray:
    """The spatial single-end operator applied to the grid's density field:

        cot(alpha) d/dl (upwind) + rate(alpha) f
        - F(alpha) * integral_{alpha0}^{alpha} f(phi) sin(alpha - phi)/sin(phi) dphi

    evaluated on bin centers with a trapezoid rule over the angle axis.
    This is the literal form used for residual checks; the time stepper
    uses the conservative bin-integrated variant instead.
    """
    a = grid.alpha_centers[:-1]  # exclude absorbing bin
    if a.size < 8:
        raise ResolutionError("need at least 8 angle nodes between alpha0 and pi")
    f = grid.density()
    f_reg = f[:-1]
    l_ax = list(grid.axes).index("l")
    h_l = grid.widths("l")[0]
    cot = _cot(a)
    shape = [1] * f_reg.ndim
    shape[0] = a.size
    cotb = cot.reshape(shape)
    # upwind one-sided difference against the flow direction
    fwd = (np.roll(f_reg, -1, axis=l_ax) - f_reg) / h_l
    bwd = (f_reg - np.roll(f_reg, 1, axis=l_ax)) / h_l
    adv = np.where(cotb > 0, cotb * bwd, cotb * fwd)
    rate = np.asarray(law.jump_rate(a)).reshape(shape)
    # trapezoid weights on the angle nodes up to each target
    h_a = a[1] - a[0] if a.size > 1 else 1.0
    W = np.zeros((a.size, a.size))
    for i in range(a.size):
        if i >= 1:
            w = np.full(i + 1, h_a)
            w[0] = w[-1] = 0.5 * h_a
            kern = np.sin(a[i] - a[:i + 1]) / np.sin(a[:i + 1])
            W[i, :i + 1] = law.density(a[i]) * w * kern
    gain = np.tensordot(W, f_reg, axes=(1, 0))
    return adv + rate * f_reg - gain


# ---------------------------------------------------------------------------
# Monte Carlo section fields and the full two-end residual
# ---------------------------------------------------------------------------

def mc_section_field(law: DirectionLaw, seed, n: int, t_nodes,
                     n_angle: int = 32, n_l: int = 32, l_max: float = 4.0,
                     birth_form: str = "crossing"):
    """Smoothed density of open two-end sections on (alpha1, alpha2, l, t).

    Runs n polygon trajectories, snapshotting the open ones at each time
    node.  Returns (density, counts, coords): density is per unit
    (alpha1, alpha2, l) and per trajectory (so its t-slices decay as cells
    close), counts are raw per-cell occupancies for masking.
    """
    t_nodes = np.asarray(t_nodes, dtype=float)
    ens = PolygonEnsemble(law, n, make_rng(seed), birth_form=birth_form)
    a_edges = np.linspace(0.0, np.pi, n_angle + 1)
    l_edges = np.linspace(0.0, l_max, n_l + 1)
    counts = np.zeros((n_angle, n_angle, n_l, t_nodes.size))
    for k, t in enumerate(t_nodes):
        ens.run_until(t)
        live = ens.open & ~ens.nonclosing
        sample = np.column_stack((ens.a1[live], ens.a2[live], ens.l[live]))
        H, _ = np.histogramdd(sample, bins=(a_edges, a_edges, l_edges))
        counts[..., k] = H
    vol = np.diff(a_edges)[0] ** 2 * np.diff(l_edges)[0]
    density = counts / (n * vol)
    coords = {
        "alpha1": 0.5 * (a_edges[1:] + a_edges[:-1]),
        "alpha2": 0.5 * (a_edges[1:] + a_edges[:-1]),
        "l": 0.5 * (l_edges[1:] + l_edges[:-1]),
        "t": t_nodes,
    }
    return density, counts, coords


def smooth_field(density, counts, coords, bandwidth_factor: float = 1.0,
                 min_cells: float = 1.0, free_axis_cells: float = 2.5):
    """Product-Gaussian smoothing with Silverman's per-axis bandwidth.

    Silverman's rule tuned for 1-d data badly under-smooths a sparse 4-d
    histogram, so kernel widths are floored in grid cells.  The balance
    operator's coefficients depend only on the angle axes, so smoothing
    along l and t commutes with it exactly and costs no bias; those axes
    get the larger free_axis_cells floor while angle axes stay near
    min_cells.  bandwidth_factor scales the whole kernel for sensitivity
    runs.
    """
    n_eff = max(counts.sum(), 2.0)
    sigmas = []
    total = density.sum()
    for ax, name in enumerate(coords):
        x = coords[name]
        marg = density.sum(axis=tuple(i for i in range(density.ndim) if i != ax))
        mu = np.sum(x * marg) / total
        sd = np.sqrt(max(np.sum((x - mu) ** 2 * marg) / total, 1e-30))
        bw = 1.06 * sd * n_eff ** (-1.0 / 5.0)
        h = x[1] - x[0] if x.size > 1 else 1.0
        floor = min_cells if name.startswith("alpha") else free_axis_cells
        sigmas.append(bandwidth_factor * max(bw / h, floor))
    return gaussian_filter(density, sigma=sigmas, mode="nearest")


def residual_full_kinetic(field, coords: dict, law: DirectionLaw,
                          counts=None, rate_form: str = "g",
                          min_count: int = 20, edge_margin=1):
    """Mass-weighted normalized residual of the two-end balance law.

    field is a density over the named axes in coords (alpha1, alpha2, l, t
    and optionally s or p; axes with S or P present add their drift terms,
    otherwise those terms integrate out exactly for interior states).
    rate_form "g" uses the law's jump rates; "tan" uses the historical
    intensity * (tan(alpha1/2) + tan(alpha2/2)) loss, kept to show the
    comparative residual discriminates the two.

    Returns a dict with the normalized residual and per-term norms; nodes
    with fewer than min_count raw samples are masked out.
    """
    names = list(coords)
    for need in ("alpha1", "alpha2", "l", "t"):
        if need not in names:
            raise DomainError(f"field must carry axis {need!r}")
    f = np.asarray(field, dtype=float)
    ax = {n: names.index(n) for n in names}
    a1 = coords["alpha1"]
    a2 = coords["alpha2"]

    def axis_grad(arr, name):
        return np.gradient(arr, coords[name], axis=ax[name], edge_order=1)

    def bshape(name):
        s = [1] * f.ndim
        s[ax[name]] = len(coords[name])
        return s

    a1b = a1.reshape(bshape("alpha1"))
    a2b = a2.reshape(bshape("alpha2"))
    lb = np.asarray(coords["l"]).reshape(bshape("l"))

    dt_term = axis_grad(f, "t")
    drift_l = (_cot(a1b) + _cot(a2b)) * axis_grad(f, "l")
    extra = 0.0
    if "s" in names:
        extra = extra + lb * axis_grad(f, "s")
    if "p" in names:
        extra = extra + (1.0 / np.sin(a1b) + 1.0 / np.sin(a2b)) * axis_grad(f, "p")

    if rate_form == "g":
        rate = (np.asarray(law.jump_rate_mirrored(a1)).reshape(bshape("alpha1"))
                + np.asarray(law.jump_rate(a2)).reshape(bshape("alpha2")))
    elif rate_form == "tan":
        lam = law.intensity if law.is_isotropic else law.crossing_intensity / 2.0
        rate = lam * (np.tan(a1b / 2.0) + np.tan(a2b / 2.0))
    else:
        raise DomainError(f"unknown rate form {rate_form!r}")
    loss = rate * f

    def gain_matrix(centers, weight_fn):
        n = centers.size
        h = centers[1] - centers[0]
        W = np.zeros((n, n))
        for i in range(1, n):
            w = np.full(i + 1, h)
            w[0] = w[-1] = 0.5 * h
            kern = np.sin(centers[i] - centers[:i + 1]) / np.sin(centers[:i + 1])
            W[i, :i + 1] = weight_fn(centers[i]) * w * kern
        return W

    W1 = gain_matrix(a1, lambda a: law.density(np.pi - a))
    W2 = gain_matrix(a2, lambda a: law.density(a))
    gain = (np.moveaxis(np.tensordot(W1, f, axes=(1, ax["alpha1"])), 0, ax["alpha1"])
            + np.moveaxis(np.tensordot(W2, f, axes=(1, ax["alpha2"])), 0, ax["alpha2"]))

    res = dt_term + drift_l + extra + loss - gain
    scale = np.abs(dt_term) + np.abs(drift_l) + np.abs(extra) + loss + gain

    mask = np.ones(f.shape, dtype=bool)
    if counts is not None:
        mask &= np.asarray(counts) >= min_count
    # drop boundary slices: one-sided gradients are first order there and
    # smoothing pads the field past the domain cut (e.g. the closure
    # outflow at l = 0), so a smoothed field is only trustworthy a margin
    # of roughly twice the kernel width into the interior
    for name in names:
        m = edge_margin[name] if isinstance(edge_margin, dict) else edge_margin
        m = max(1, int(m))
        sl = [slice(None)] * f.ndim
        for edge in (slice(0, m), slice(f.shape[ax[name]] - m, None)):
            sl[ax[name]] = edge
            mask[tuple(sl)] = False
            sl[ax[name]] = slice(None)

    w = np.where(mask, f, 0.0)
    denom = float(np.sum(w * scale))
    if denom <= 0:
        raise DomainError("residual undefined: empty mask or zero field")
    normalized = float(np.sum(w * np.abs(res)) / denom)
    return {
        "normalized_residual": normalized,
        "masked_fraction": float(1.0 - mask.mean()),
        "term_norms": {
            "dt": float(np.sum(w * np.abs(dt_term)) / denom),
            "drift_l": float(np.sum(w * np.abs(drift_l)) / denom),
            "loss": float(np.sum(w * loss) / denom),
            "gain": float(np.sum(w * gain) / denom),
        },
    }


# ---------------------------------------------------------------------------
# birth boundary condition
# ---------------------------------------------------------------------------

def check_boundary(law: DirectionLaw, delta: float, n: int, seed,
                   birth_form: str = "crossing", n_bins: int = 12,
                   initial_angles=None):
    """Verify the small-height state against the birth constraints.

    Evolves n births to height delta exactly and checks, on the lanes that
    have not jumped yet, the deterministic relations

        l = delta (cot a1 + cot a2),     S = delta^2 (cot a1 + cot a2) / 2,
        P = delta (1/sin a1 + 1/sin a2),

    reporting the maximum relative errors, plus a chi-square p-value of the
    birth angles against the law's birth density on the triangle.
    """
    rng = make_rng(seed)
    ens = PolygonEnsemble(law, n, rng, birth_form=birth_form,
                          initial_angles=initial_angles)
    a1_0, a2_0 = ens.a1.copy(), ens.a2.copy()
    ens.run_until(delta)
    clean = (ens.n_jumps == 0) & (ens.open | (ens.t >= delta)) & ~ens.nonclosing
    c = _cot(a1_0[clean]) + _cot(a2_0[clean])
    inv = 1.0 / np.sin(a1_0[clean]) + 1.0 / np.sin(a2_0[clean])
    rel = lambda got, want: float(np.max(np.abs(got - want)
                                         / np.maximum(np.abs(want), 1e-12)))
    report = {
        "delta": delta,
        "fraction_jumped": float(1.0 - clean.mean()),
        "rel_err_l": rel(ens.l[clean], delta * c),
        "rel_err_S": rel(ens.S[clean], 0.5 * delta**2 * c),
        "rel_err_P": rel(ens.P[clean], delta * inv),
    }
    if initial_angles is None:
        # chi-square in rotated coordinates u = a1+a2, v = a1-a2: the
        # triangle becomes |v| < u < pi, so bin probabilities integrate the
        # smooth density without support-clipping error
        from .section_sweep import birth_density
        u = a1_0 + a2_0
        edges = np.linspace(0.0, np.pi, n_bins + 1)
        counts, _ = np.histogram(u, bins=edges)
        probs = np.empty(n_bins)
        for k in range(n_bins):
            uu = np.linspace(edges[k], edges[k + 1], 9)[1::2]
            acc = 0.0
            for uc in uu:
                vv = np.linspace(-uc, uc, 65)[1::2]
                aa1 = 0.5 * (uc + vv)
                aa2 = 0.5 * (uc - vv)
                dens = birth_density(law, aa1, aa2, birth_form)
                acc += dens.sum() * (2.0 * uc / 32.0)
            probs[k] = acc
        stat, p, dof = chi2_from_counts(counts, probs)
        report["chi2_stat"] = stat
        report["chi2_p"] = p
        report["chi2_dof"] = dof
    return report
