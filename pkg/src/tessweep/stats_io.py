"""Histograms, statistical tests, bootstrap, and all artifact serialization.

CSV output uses '.' decimals and 17 significant digits so every float
round-trips exactly; JSON-lines artifacts carry one record per object.
Grids are stored as .npz (axis arrays plus values) with a JSON sidecar
describing the axes.  Writers go through a quarantine suffix and rename
into place only on success, so interrupted runs never clobber valid
artifacts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats as sps

from .errors import ContractError, DomainError, SampleSizeError


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------

@dataclass
class Histogram:
    """A binned density of one variable with provenance.

    weighting is either "line-sampled" (each object counted with the raw
    sweep multiplicity) or "height-unweighted" (typical, every object once)
    or "plain" for quantities with no sweep weighting involved.
    """

    name: str
    unit: str
    edges: np.ndarray
    density: np.ndarray
    n_samples: int
    weighting: str = "plain"
    meta: dict = field(default_factory=dict)
    ci_low: np.ndarray = None
    ci_high: np.ndarray = None

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.edges.ndim != 1 or self.edges.size != self.density.size + 1:
            raise ContractError("edges must bracket the density bins")
        if np.any(self.density < 0):
            raise ContractError("densities must be nonnegative")

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def mass(self) -> float:
        return float(np.sum(self.density * self.widths))

    def normalized(self) -> "Histogram":
        m = self.mass()
        if m <= 0:
            raise DomainError("cannot normalize an empty histogram")
        return Histogram(self.name, self.unit, self.edges, self.density / m,
                         self.n_samples, self.weighting, dict(self.meta))

    def cdf(self):
        return np.concatenate(([0.0], np.cumsum(self.density * self.widths)))

    @classmethod
    def from_samples(cls, values, bins, name, unit="", range=None, weights=None,
                     weighting="plain", meta=None):
        values = np.asarray(values, dtype=float)
        counts, edges = np.histogram(values, bins=bins, range=range, weights=weights)
        total = counts.sum() if weights is None else np.sum(weights)
        widths = np.diff(edges)
        dens = counts / (total * widths) if total > 0 else counts * 0.0
        return cls(name=name, unit=unit, edges=edges, density=dens,
                   n_samples=int(values.size), weighting=weighting,
                   meta=meta or {})

    def to_dict(self):
        d = {
            "name": self.name, "unit": self.unit,
            "edges": self.edges.tolist(), "density": self.density.tolist(),
            "n_samples": self.n_samples, "weighting": self.weighting,
            "meta": self.meta,
        }
        if self.ci_low is not None:
            d["ci_low"] = np.asarray(self.ci_low).tolist()
            d["ci_high"] = np.asarray(self.ci_high).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        h = cls(name=d["name"], unit=d["unit"], edges=np.array(d["edges"]),
                density=np.array(d["density"]), n_samples=d["n_samples"],
                weighting=d.get("weighting", "plain"), meta=d.get("meta", {}))
        if "ci_low" in d:
            h.ci_low = np.array(d["ci_low"])
            h.ci_high = np.array(d["ci_high"])
        return h


# ---------------------------------------------------------------------------
# tests
# ---------------------------------------------------------------------------

def ks_distance(a, b) -> float:
    """Sup distance between two empirical or binned distributions.

    Accepts sample arrays or Histogram objects (same variable and unit
    required for histograms).  Histograms are compared through their CDFs
    on the merged edge set.
    """
    if isinstance(a, Histogram) and isinstance(b, Histogram):
        if (a.name, a.unit) != (b.name, b.unit):
            raise ContractError(
                f"histogram mismatch: {(a.name, a.unit)} vs {(b.name, b.unit)}")
        an, bn = a.normalized(), b.normalized()
        grid = np.union1d(an.edges, bn.edges)
        ca = np.interp(grid, an.edges, an.cdf())
        cb = np.interp(grid, bn.edges, bn.cdf())
        return float(np.abs(ca - cb).max())
    if isinstance(a, Histogram) or isinstance(b, Histogram):
        raise ContractError("compare histograms with histograms, samples with samples")
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise SampleSizeError("KS needs nonempty samples")
    grid = np.concatenate([a, b])
    ca = np.searchsorted(a, grid, side="right") / a.size
    cb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(ca - cb).max())


def ks_distance_to_cdf(samples, cdf) -> float:
    """Sup distance between an empirical CDF and an analytic one."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise SampleSizeError("KS needs nonempty samples")
    F = np.asarray(cdf(x), dtype=float)
    up = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.abs(up - F).max(), np.abs(F - lo).max()))


def ks_critical(n, m=None, level=0.01) -> float:
    """Asymptotic two-sample (or one-sample when m is None) KS threshold."""
    c = np.sqrt(-0.5 * np.log(level / 2.0))
    if m is None:
        return float(c / np.sqrt(n))
    return float(c * np.sqrt((n + m) / (n * m)))


def chi2_test(samples, density, bins, range=None, min_expected=5.0):
    """Chi-square goodness of fit of samples against an analytic density.

    density is integrated per bin with the trapezoid rule on a refined
    grid; bins with too-small expectation are pooled into their neighbor.
    Returns (statistic, p_value, dof).
    """
    x = np.asarray(samples, dtype=float)
    counts, edges = np.histogram(x, bins=bins, range=range)
    probs = np.empty(len(counts))
    for k in range(len(counts)):
        g = np.linspace(edges[k], edges[k + 1], 33)
        probs[k] = np.trapezoid(density(g), g)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    expected = probs * counts.sum()
    # pool neighbors until every expectation is large enough
    c_list, e_list = list(counts.astype(float)), list(expected)
    k = 0
    while k < len(e_list):
        if e_list[k] < min_expected and len(e_list) > 1:
            j = k + 1 if k + 1 < len(e_list) else k - 1
            e_list[j] += e_list[k]
            c_list[j] += c_list[k]
            del e_list[k], c_list[k]
        else:
            k += 1
    c_arr, e_arr = np.array(c_list), np.array(e_list)
    stat = float(np.sum((c_arr - e_arr) ** 2 / e_arr))
    dof = max(1, c_arr.size - 1)
    p = float(sps.chi2.sf(stat, dof))
    return stat, p, dof


def bootstrap_ci(samples, statistic, level=0.95, n_boot=1000, seed=0):
    """Percentile bootstrap interval, deterministic given the seed.

    statistic receives a (n_boot, n) resample matrix and an `axis` keyword
    when it supports one (numpy reducers do); otherwise it is applied row
    by row.  Constant samples yield a zero-width interval with a flag in
    the third return slot.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 100:
        raise SampleSizeError("bootstrap needs at least 100 samples")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    degenerate = bool(np.all(x == x[0]))
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    res = x[idx]
    try:
        vals = np.asarray(statistic(res, axis=1), dtype=float)
        if vals.shape != (n_boot,):
            raise TypeError
    except TypeError:
        vals = np.array([statistic(row) for row in res], dtype=float)
    lo, hi = np.quantile(vals, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi), degenerate


def exponential_rate_fit(gaps):
    """MLE exponential rate for inter-arrival gaps plus its standard error."""
    g = np.asarray(gaps, dtype=float)
    if g.size < 2 or np.any(g < 0):
        raise SampleSizeError("rate fit needs nonnegative gaps")
    rate = 1.0 / g.mean()
    return float(rate), float(rate / np.sqrt(g.size))


def chi2_from_counts(counts, probs, min_expected=5.0):
    """Chi-square test given observed counts and model probabilities.

    Pools small-expectation cells into their neighbors (flattened order).
    Returns (statistic, p_value, dof).
    """
    counts = np.asarray(counts, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    probs = probs / probs.sum()
    expected = probs * counts.sum()
    c_list, e_list = list(counts), list(expected)
    k = 0
    while k < len(e_list):
        if e_list[k] < min_expected and len(e_list) > 1:
            j = k + 1 if k + 1 < len(e_list) else k - 1
            e_list[j] += e_list[k]
            c_list[j] += c_list[k]
            del e_list[k], c_list[k]
        else:
            k += 1
    c_arr, e_arr = np.array(c_list), np.array(e_list)
    stat = float(np.sum((c_arr - e_arr) ** 2 / e_arr))
    dof = max(1, c_arr.size - 1)
    return stat, float(sps.chi2.sf(stat, dof)), dof


@dataclass
class TestReport:
    """Outcome of one statistical acceptance check."""

    name: str
    statistic: float
    threshold: float
    passed: bool
    kind: str = "distance"  # distance | p_value
    sample_sizes: tuple = ()
    seeds: tuple = ()
    details: dict = field(default_factory=dict)

    @classmethod
    def from_distance(cls, name, statistic, threshold, **kw):
        return cls(name=name, statistic=float(statistic), threshold=float(threshold),
                   passed=bool(statistic <= threshold), kind="distance", **kw)

    @classmethod
    def from_p_value(cls, name, p, level, **kw):
        return cls(name=name, statistic=float(p), threshold=float(level),
                   passed=bool(p > level), kind="p_value", **kw)

    def to_dict(self):
        d = asdict(self)
        d["sample_sizes"] = list(self.sample_sizes)
        d["seeds"] = [repr(s) for s in self.seeds]
        return d


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def atomic_write(path, writer):
    """Write through a quarantine suffix; rename into place only on success."""
    tmp = f"{path}.partial"
    try:
        with open(tmp, "w", newline="") as fh:
            writer(fh)
    except BaseException:
        if os.path.exists(tmp):
            os.replace(tmp, f"{path}.quarantine")
        raise
    os.replace(tmp, path)


def write_jsonl(path, records):
    def _w(fh):
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    atomic_write(path, _w)


def read_jsonl(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_json(path, obj):
    atomic_write(path, lambda fh: json.dump(obj, fh, indent=2, sort_keys=True))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv(path, columns: dict):
    """Write named columns; floats at 17 significant digits."""
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ContractError("CSV columns must share a length")

    def _w(fh):
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(a[i].item() if hasattr(a[i], "item") else a[i])
                              for a in arrays) + "\n")
    atomic_write(path, _w)


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def save_grid(path, axes: dict, values: np.ndarray, meta: dict = None):
    """Self-describing binary grid: axis arrays + row-major values + sidecar."""
    arrays = {f"axis_{k}": np.asarray(v, dtype=float) for k, v in axes.items()}
    arrays["values"] = np.asarray(values)
    tmp = f"{path}.partial"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)
    sidecar = {
        "schema_version": 1,
        "axes": {k: len(np.asarray(v)) for k, v in axes.items()},
        "axis_order": list(axes),
        "shape": list(np.asarray(values).shape),
        "meta": meta or {},
    }
    write_json(f"{path}.json", sidecar)


def load_grid(path):
    with np.load(path) as z:
        axes = {k[5:]: z[k] for k in z.files if k.startswith("axis_")}
        values = z["values"]
    side = read_json(f"{path}.json") if os.path.exists(f"{path}.json") else {}
    order = side.get("axis_order")
    if order:
        axes = {k: axes[k] for k in order}
    return axes, values, side.get("meta", {})
