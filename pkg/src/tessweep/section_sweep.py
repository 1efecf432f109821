"""Chord evolution along a rising horizontal sweep line.

Two views of the same process live here.  The deterministic view,
:func:`sweep_cell`, replays the sweep over a realized convex cell and is
exact: the chord length l(t) is piecewise linear with breakpoints at vertex
heights, the swept area integrates it, and the side angles come straight
from the edge slopes.  The stochastic view simulates the Markov jump
process that the sweep induces on an unbounded tessellation: between jumps
the state drifts with

    dl/dt = cot(alpha1) + cot(alpha2),   dS/dt = l,
    dP/dt = 1/sin(alpha1) + 1/sin(alpha2),

and each chord end independently waits an exponential time with its total
jump rate, then increases its angle by the angle-jump kernel of the
direction law.  A polygon sample terminates at the exact root of l(t) = 0.

Angle conventions: alpha2 is measured at the right end from the outward +x
ray, alpha1 at the left end from the outward -x ray, both to the side going
up into the cell.  The right end jumps with target weight F(alpha'), the
left end with F(pi - alpha'); a left end of law F is statistically a right
end of the mirrored law.

Birth states draw (alpha1, alpha2) on the open triangle alpha1 + alpha2 <
pi.  The default density is F(pi - alpha1) F(alpha2) sin(alpha1 + alpha2),
the law of the upward wedge spanned by two process lines at a typical
crossing; every crossing is the lowest vertex of exactly one cell, so this
makes polygon samples number-weighted.  The historical product form
F(alpha1) sin(alpha1) F(pi - alpha2) sin(alpha2) is kept selectable for
comparison runs; the tessellation equivalence suite discriminates the two
decisively in favor of the wedge form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .direction_law import EPS_ANGLE, DirectionLaw
from .errors import DegenerateLawError, DomainError, RunawayError
from .line_process import make_rng
from .tessellation import ConvexCell

DEFAULT_MAX_EVENTS = 10_000


def compose_increments(s1: float, s2: float, l1: float, t2: float) -> float:
    """Area bookkeeping for chaining two end displacements in time.

    The second leg's swept area is measured from where the first leg ended,
    so the through area gains the rectangle l1 * t2 on top of s1 + s2.
    """
    return s1 + s2 + l1 * t2


def _clip_angle(a):
    return np.clip(a, EPS_ANGLE, np.pi - EPS_ANGLE)


def _cot(a):
    return np.cos(a) / np.sin(a)


# ---------------------------------------------------------------------------
# deterministic sweep over a realized cell
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    """Exact sweep trajectory of one convex cell.

    events holds the breakpoint heights (starting at 0), chord the l value
    at each breakpoint; alpha1/alpha2 are the side angles on each interval.
    """

    events: np.ndarray
    chord: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    S_total: float
    P_total: float
    t_height: float
    n_sides: int
    degenerate: bool

    def chord_at(self, t):
        return np.interp(t, self.events, self.chord)

    def sample(self):
        return PolygonSample(self.S_total, self.P_total, self.t_height,
                             self.n_sides, self.degenerate)


@dataclass
class PolygonSample:
    """Final metrics of one swept polygon."""

    S_total: float
    P_total: float
    t_height: float
    n_sides: int
    degenerate: bool = False


def sweep_cell(cell: ConvexCell) -> SweepResult:
    """Replay the horizontal sweep over one convex cell exactly.

    Walks the left and right vertex chains from the lowest vertex to the
    highest; between consecutive vertex heights the chord is linear.  Cells
    with a horizontal edge (equivalently a tie for the lowest or highest
    vertex) are processed but flagged degenerate.
    """
    # recentered at the lowest vertex so chord differences keep full precision
    v = cell.vertices - cell.vertices[cell.bottom_index]
    n = v.shape[0]
    scale = max(1.0, float(np.abs(cell.vertices).max()))
    b = cell.bottom_index
    top = int(np.argmax(v[:, 1]))
    y0, y1 = v[b, 1], v[top, 1]
    degenerate = cell.degenerate

    # chains from bottom to top; CCW successor walks the right side
    right = [b]
    i = b
    while i != top:
        i = (i + 1) % n
        right.append(i)
    left = [b]
    i = b
    while i != top:
        i = (i - 1) % n
        left.append(i)

    def chain_edges(chain):
        segs = []
        for a, c in zip(chain[:-1], chain[1:]):
            d = v[c] - v[a]
            segs.append((v[a], d))
        return segs

    redges = chain_edges(right)
    ledges = chain_edges(left)
    for _, d in redges + ledges:
        if abs(d[1]) <= 1e-9 * scale:
            degenerate = True

    heights = np.unique(v[:, 1])
    events = heights - y0
    t_height = y1 - y0

    def x_on(chain_edges_, y):
        for (a, d) in chain_edges_:
            if a[1] <= y <= a[1] + d[1] and d[1] > 0:
                return a[0] + d[0] * (y - a[1]) / d[1]
        # y at the very top
        a, d = chain_edges_[-1]
        return a[0] + d[0]

    chord = np.array([
        max(0.0, x_on(redges, y) - x_on(ledges, y)) for y in heights
    ])
    chord[0] = max(0.0, chord[0])
    chord[-1] = 0.0 if abs(v[top, 1] - heights[-1]) < 1e-15 else chord[-1]

    def angles_on(chain_edges_, ys, sign):
        out = np.empty(len(ys))
        for k, y in enumerate(ys):
            for (a, d) in chain_edges_:
                if d[1] > 0 and a[1] <= y < a[1] + d[1]:
                    out[k] = np.arctan2(d[1], sign * d[0])
                    break
            else:
                a, d = chain_edges_[-1]
                out[k] = np.arctan2(abs(d[1]), sign * d[0])
        return out

    mids = 0.5 * (heights[:-1] + heights[1:])
    alpha2 = angles_on(redges, mids, 1.0)
    alpha1 = angles_on(ledges, mids, -1.0)

    S_total = float(np.sum(0.5 * (chord[:-1] + chord[1:]) * np.diff(events)))
    P_total = float(sum(np.hypot(d[0], d[1]) for _, d in redges + ledges))
    # horizontal bottom/top chords belong to the swept region boundary too
    return SweepResult(events=events, chord=chord, alpha1=alpha1, alpha2=alpha2,
                       S_total=S_total, P_total=P_total, t_height=float(t_height),
                       n_sides=n, degenerate=bool(degenerate))


# ---------------------------------------------------------------------------
# birth states
# ---------------------------------------------------------------------------

def birth_density(law: DirectionLaw, alpha1, alpha2, form: str = "crossing"):
    """Unnormalized birth-angle density on the triangle alpha1 + alpha2 < pi.

    form="crossing": F(pi - alpha1) F(alpha2) sin(alpha1 + alpha2), the
    upward-wedge law at a typical line crossing (matches tessellations).
    form="product": F(alpha1) sin(alpha1) F(pi - alpha2) sin(alpha2), the
    historical display kept for comparison experiments.
    """
    a1 = np.asarray(alpha1, dtype=float)
    a2 = np.asarray(alpha2, dtype=float)
    simplex = (a1 > 0) & (a2 > 0) & (a1 + a2 < np.pi)
    if form == "crossing":
        val = law.density(np.pi - a1) * law.density(a2) * np.sin(a1 + a2)
    elif form == "product":
        val = (law.density(a1) * np.sin(a1)
               * law.density(np.pi - a2) * np.sin(a2))
    else:
        raise DomainError(f"unknown birth form {form!r}")
    return np.where(simplex, val, 0.0)


def sample_birth_angles(law: DirectionLaw, n: int, rng, form: str = "crossing",
                        max_rounds: int = 10_000):
    """Draw n birth angle pairs by rejection on the triangle."""
    if law.is_isotropic and law.intensity == 0.0:
        raise DegenerateLawError("zero-intensity law has no births")
    mirrored = law.mirrored()
    a1 = np.empty(n)
    a2 = np.empty(n)
    pending = np.ones(n, dtype=bool)
    for _ in range(max_rounds):
        m = int(pending.sum())
        if m == 0:
            return _clip_angle(a1), _clip_angle(a2)
        if form == "crossing":
            c1 = np.pi - mirrored.sample_inclination(m, rng)
            c2 = law.sample_inclination(m, rng)
            accept = rng.random(m) < np.sin(np.clip(c1 + c2, 0.0, np.pi)) \
                * ((c1 + c2) < np.pi)
        else:
            c1 = law.sample_inclination(m, rng)
            c2 = np.pi - law.mirrored().sample_inclination(m, rng)
            accept = (rng.random(m) < np.sin(c1) * np.sin(c2)) & ((c1 + c2) < np.pi)
        idx = np.flatnonzero(pending)
        hit = idx[accept]
        a1[hit] = c1[accept]
        a2[hit] = c2[accept]
        pending[hit] = False
    raise RunawayError("birth-angle rejection sampling stalled")


# ---------------------------------------------------------------------------
# vectorized end ensembles
# ---------------------------------------------------------------------------

class EndEnsemble:
    """A batch of independent chord ends in the right-end convention.

    State per lane: angle alpha, displacement l, swept area S, traversed
    side length P, elapsed height t.  Drift between jumps is exact
    (dl = cot(alpha) dt, dS = l dt, dP = dt / sin(alpha)); jump times are
    exponential with the law's jump rate at the current angle, so event
    simulation is exact, with no time discretization anywhere.
    """

    def __init__(self, law: DirectionLaw, alpha0, n: int, rng,
                 max_events: int = DEFAULT_MAX_EVENTS):
        self.law = law
        self.rng = rng
        self.max_events = max_events
        a0 = np.asarray(alpha0, dtype=float)
        self.alpha = _clip_angle(np.broadcast_to(a0, (n,)).astype(float).copy())
        self.l = np.zeros(n)
        self.S = np.zeros(n)
        self.P = np.zeros(n)
        self.t = np.zeros(n)
        self.n_jumps = np.zeros(n, dtype=np.int64)
        self.next_jump = self._draw_jump_times(np.arange(n))

    def _rates(self, idx):
        return np.asarray(self.law.jump_rate(self.alpha[idx]), dtype=float)

    def _draw_jump_times(self, idx):
        r = self._rates(idx)
        wait = np.full(idx.shape, np.inf)
        pos = r > 1e-300
        wait[pos] = self.rng.exponential(1.0, int(pos.sum())) / r[pos]
        return self.t[idx] + wait

    def _drift(self, idx, dt):
        a = self.alpha[idx]
        c = _cot(a)
        self.S[idx] += (self.l[idx] + 0.5 * c * dt) * dt
        self.l[idx] += c * dt
        self.P[idx] += dt / np.sin(a)
        self.t[idx] += dt

    def advance_to(self, target):
        """Advance every lane to its target time, jumping en route."""
        n = self.alpha.size
        target = np.broadcast_to(np.asarray(target, dtype=float), (n,))
        for _ in range(self.max_events + 1):
            behind = self.t < target - 1e-15
            if not behind.any():
                return self
            idx = np.flatnonzero(behind)
            t_stop = np.minimum(self.next_jump[idx], target[idx])
            self._drift(idx, t_stop - self.t[idx])
            jmp = idx[self.next_jump[idx] <= target[idx]]
            if jmp.size:
                self.alpha[jmp] = _clip_angle(
                    self.law.sample_jump_angle(self.alpha[jmp], rng=self.rng))
                self.n_jumps[jmp] += 1
                self.next_jump[jmp] = self._draw_jump_times(jmp)
        raise RunawayError("end ensemble exceeded its event budget")

    def state(self):
        return {k: getattr(self, k).copy()
                for k in ("alpha", "l", "S", "P", "t", "n_jumps")}


@dataclass
class EndSnapshots:
    """States of an end ensemble recorded on a shared time grid."""

    t_grid: np.ndarray
    alpha: np.ndarray  # (n_times, n_lanes)
    l: np.ndarray
    S: np.ndarray
    P: np.ndarray


def simulate_end(law: DirectionLaw, alpha0, t_max, seed, n: int = 1,
                 checkpoints=None, max_events: int = DEFAULT_MAX_EVENTS):
    """Run n independent single-end trajectories to time t_max.

    t_max may be a scalar or a per-lane array.  When checkpoints are given
    (an increasing array of times within [0, t_max]), the full state is
    recorded at each and returned alongside the final ensemble.
    """
    if np.any(np.asarray(t_max) <= 0):
        raise DomainError("t_max must be positive")
    ens = EndEnsemble(law, alpha0, n, make_rng(seed), max_events=max_events)
    snaps = None
    if checkpoints is not None:
        cps = np.asarray(checkpoints, dtype=float)
        rec = {k: np.empty((cps.size, n)) for k in ("alpha", "l", "S", "P")}
        for i, tc in enumerate(cps):
            ens.advance_to(np.minimum(tc, t_max))
            for k in rec:
                rec[k][i] = getattr(ens, k)
        snaps = EndSnapshots(t_grid=cps, **rec)
    ens.advance_to(t_max)
    return (ens, snaps) if checkpoints is not None else ens


def compose_check(law: DirectionLaw, alpha0: float, t1: float, t2: float,
                  seed, n: int = 1):
    """Direct run to t1 + t2 versus two chained runs with the area shift.

    Returns (direct, composed) dicts of final-state arrays.  The chained
    pass reuses the leg-1 terminal angles as leg-2 initial angles and sums
    the increments, shifting the area by l1 * t2.
    """
    if t1 <= 0 or t2 <= 0:
        raise DomainError("both leg durations must be positive")
    direct = simulate_end(law, alpha0, t1 + t2, (seed, 0), n=n).state()
    leg1 = simulate_end(law, alpha0, t1, (seed, 1), n=n)
    rng2 = make_rng((seed, 2))
    leg2 = EndEnsemble(law, leg1.alpha, n, rng2)
    leg2.advance_to(t2)
    composed = {
        "alpha": leg2.alpha.copy(),
        "l": leg1.l + leg2.l,
        "S": compose_increments(leg1.S, leg2.S, leg1.l, t2),
        "P": leg1.P + leg2.P,
        "t": leg1.t + leg2.t,
        "n_jumps": leg1.n_jumps + leg2.n_jumps,
    }
    return direct, composed


# ---------------------------------------------------------------------------
# two-end polygon simulation
# ---------------------------------------------------------------------------

@dataclass
class PolygonBatch:
    """Closure metrics of a batch of simulated polygons."""

    S: np.ndarray
    P: np.ndarray
    t_height: np.ndarray
    n_sides: np.ndarray
    n_nonclosing: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.S.size

    def records(self):
        return [{"S": float(s), "P": float(p), "t": float(t), "n_sides": int(k)}
                for s, p, t, k in zip(self.S, self.P, self.t_height, self.n_sides)]


class PolygonEnsemble:
    """Vectorized two-end chord evolution with exact closure detection.

    The left end (angle alpha1) jumps at the mirrored law's rate, the right
    end (alpha2) at the plain rate; an exponential clock with the summed
    rate picks the next jump and the jumping end is chosen proportionally
    to its rate.  Between events l is linear in t, so the closure root
    l(t*) = 0 is exact arithmetic.
    """

    def __init__(self, law: DirectionLaw, n: int, rng,
                 initial_angles=None, birth_form: str = "crossing",
                 max_events: int = DEFAULT_MAX_EVENTS):
        self.law = law
        self.mirrored = law.mirrored()
        self.rng = rng
        self.max_events = max_events
        if initial_angles is None:
            a1, a2 = sample_birth_angles(law, n, rng, form=birth_form)
        else:
            a1 = np.broadcast_to(np.asarray(initial_angles[0], float), (n,)).copy()
            a2 = np.broadcast_to(np.asarray(initial_angles[1], float), (n,)).copy()
        self.a1, self.a2 = _clip_angle(a1), _clip_angle(a2)
        self.l = np.zeros(n)
        self.S = np.zeros(n)
        self.P = np.zeros(n)
        self.t = np.zeros(n)
        self.n_jumps = np.zeros(n, dtype=np.int64)
        self.open = np.ones(n, dtype=bool)
        self.nonclosing = np.zeros(n, dtype=bool)
        self.events_used = np.zeros(n, dtype=np.int64)

    def _rates(self, idx):
        r1 = np.asarray(self.mirrored.jump_rate(self.a1[idx]), dtype=float)
        r2 = np.asarray(self.law.jump_rate(self.a2[idx]), dtype=float)
        return r1, r2

    def _drift(self, idx, dt):
        c = _cot(self.a1[idx]) + _cot(self.a2[idx])
        self.S[idx] += (self.l[idx] + 0.5 * c * dt) * dt
        self.l[idx] += c * dt
        self.P[idx] += (1.0 / np.sin(self.a1[idx]) + 1.0 / np.sin(self.a2[idx])) * dt
        self.t[idx] += dt

    def run_until(self, t_stop=np.inf):
        """Advance all open lanes to t_stop (or closure, whichever first)."""
        for _ in range(self.max_events + 1):
            idx = np.flatnonzero(self.open & (self.t < t_stop) & ~self.nonclosing)
            if idx.size == 0:
                return self
            r1, r2 = self._rates(idx)
            rt = r1 + r2
            c = _cot(self.a1[idx]) + _cot(self.a2[idx])
            # a zero-rate lane with nonnegative drift can never close; with a
            # finite horizon it still drifts there, so only flag at t_stop=inf
            stuck = (rt <= 1e-300) & (c >= 0.0) & np.isinf(t_stop)
            if stuck.any():
                self.nonclosing[idx[stuck]] = True
                live = ~stuck
                idx, r1, r2, rt, c = idx[live], r1[live], r2[live], rt[live], c[live]
                if idx.size == 0:
                    continue
            wait = np.full(idx.shape, np.inf)
            pos = rt > 1e-300
            wait[pos] = self.rng.exponential(1.0, int(pos.sum())) / rt[pos]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_close = np.where(c < 0.0, self.l[idx] / (-c), np.inf)
            dt = np.minimum.reduce([wait, t_close, t_stop - self.t[idx]])
            closing = t_close <= np.minimum(wait, t_stop - self.t[idx])
            jumping = ~closing & (wait <= t_stop - self.t[idx])
            self._drift(idx, dt)
            self.events_used[idx] += 1
            if np.any(self.events_used[idx] > self.max_events):
                raise RunawayError("polygon trajectory exceeded its event budget")
            cl = idx[closing]
            if cl.size:
                self.l[cl] = 0.0
                self.open[cl] = False
            jm = idx[jumping]
            if jm.size:
                p1 = r1[jumping] / rt[jumping]
                pick1 = self.rng.random(jm.size) < p1
                j1, j2 = jm[pick1], jm[~pick1]
                if j1.size:
                    self.a1[j1] = _clip_angle(
                        self.mirrored.sample_jump_angle(self.a1[j1], rng=self.rng))
                if j2.size:
                    self.a2[j2] = _clip_angle(
                        self.law.sample_jump_angle(self.a2[j2], rng=self.rng))
                self.n_jumps[jm] += 1
        raise RunawayError("polygon ensemble exceeded its event budget")

    def batch(self, meta=None):
        done = ~self.open & ~self.nonclosing
        return PolygonBatch(
            S=self.S[done].copy(), P=self.P[done].copy(),
            t_height=self.t[done].copy(),
            n_sides=2 + self.n_jumps[done].astype(np.int64),
            n_nonclosing=int(self.nonclosing.sum()),
            meta=meta or {},
        )


def simulate_polygon(law: DirectionLaw, seed, n: int = 1,
                     initial_angles=None, birth_form: str = "crossing",
                     max_events: int = DEFAULT_MAX_EVENTS) -> PolygonBatch:
    """Simulate n number-weighted polygons; see :class:`PolygonEnsemble`.

    A closed polygon has 2 + n_jumps sides: two at birth and one per angle
    jump; the closure vertex adds none.  Configurations that provably never
    close (possible only when the jump rate vanishes while the chord still
    grows, e.g. under a zero-intensity law) are counted in n_nonclosing and
    excluded from the returned batch.
    """
    ens = PolygonEnsemble(law, n, make_rng(seed), initial_angles=initial_angles,
                          birth_form=birth_form, max_events=max_events)
    ens.run_until(np.inf)
    return ens.batch(meta={"law": repr(law), "seed": repr(seed), "n": n,
                           "birth_form": birth_form})


def simulate_polygon_events(law: DirectionLaw, seed,
                            initial_angles=None, birth_form: str = "crossing",
                            max_events: int = DEFAULT_MAX_EVENTS):
    """Scalar reference simulation returning (PolygonSample, event log).

    Independent of the vectorized path; used to cross-check it.  The event
    log holds dicts with keys t, kind ('birth'|'jump'|'close'), end, old,
    new.
    """
    rng = make_rng(seed)
    if initial_angles is None:
        a1v, a2v = sample_birth_angles(law, 1, rng, form=birth_form)
        a1, a2 = float(a1v[0]), float(a2v[0])
    else:
        a1, a2 = map(float, initial_angles)
    mirrored = law.mirrored()
    t = l = S = P = 0.0
    events = [{"t": 0.0, "kind": "birth", "end": None, "old": None,
               "new": (a1, a2)}]
    for _ in range(max_events):
        r1 = float(mirrored.jump_rate(a1))
        r2 = float(law.jump_rate(a2))
        rt = r1 + r2
        c = 1.0 / np.tan(a1) + 1.0 / np.tan(a2)
        if rt <= 1e-300 and c >= 0:
            return None, events  # never closes
        wait = rng.exponential(1.0) / rt if rt > 1e-300 else np.inf
        t_close = l / (-c) if c < 0 else np.inf
        dt = min(wait, t_close)
        S += (l + 0.5 * c * dt) * dt
        l += c * dt
        P += (1.0 / np.sin(a1) + 1.0 / np.sin(a2)) * dt
        t += dt
        if t_close <= wait:
            events.append({"t": t, "kind": "close", "end": None,
                           "old": (a1, a2), "new": None})
            n_sides = 2 + sum(1 for e in events if e["kind"] == "jump")
            return PolygonSample(S, P, t, n_sides), events
        if rng.random() < r1 / rt:
            new = float(mirrored.sample_jump_angle(a1, rng=rng))
            events.append({"t": t, "kind": "jump", "end": 1, "old": a1, "new": new})
            a1 = new
        else:
            new = float(law.sample_jump_angle(a2, rng=rng))
            events.append({"t": t, "kind": "jump", "end": 2, "old": a2, "new": new})
            a2 = new
    raise RunawayError("scalar polygon simulation exceeded its event budget")
