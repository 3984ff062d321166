"""Binning of continuous power observations into discrete state indices.

Four ways to place the bin edges: equal width, Freedman-Diaconis width,
empirical quantiles of historical data, and equal width with the
reference power level forced to be an edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, InvalidInputError, InvalidParameterError


@dataclass(frozen=True)
class BinningSpec:
    """Ordered bin edges. Intervals are [e_i, e_{i+1}), the last one closed.

    With a single edge there is one bin and everything maps to it.
    """

    edges: tuple[float, ...]
    open_left: bool = True
    open_right: bool = True

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if not edges:
            raise InvalidParameterError("need at least one edge")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise InvalidParameterError("edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @property
    def n_bins(self) -> int:
        return max(1, len(self.edges) - 1)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


@dataclass(frozen=True)
class HistoricalDataset:
    samples: tuple[float, ...]
    provenance: str = "constant-sweep"

    @classmethod
    def from_file(cls, path: str | Path, provenance: str = "constant-sweep") -> "HistoricalDataset":
        """Read one APL value per line; blank lines and '#' comments skipped."""
        path = Path(path)
        if not path.is_file():
            raise InvalidInputError(f"historical data file not found: {path}")
        values = []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise InvalidInputError(f"{path}:{lineno}: not a number: {line!r}") from None
        if not values:
            raise InvalidInputError(f"{path}: no samples")
        return cls(tuple(values), provenance)

    def to_file(self, path: str | Path) -> None:
        lines = [f"# APL samples ({self.provenance})"]
        lines += [repr(float(x)) for x in self.samples]
        Path(path).write_text("\n".join(lines) + "\n")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=float)


def equal_width_edges(lo: float, hi: float, n_bins: int) -> BinningSpec:
    if not lo < hi:
        raise InvalidParameterError("lo must be below hi")
    if n_bins < 1:
        raise InvalidParameterError("n_bins must be >= 1")
    return BinningSpec(tuple(np.linspace(lo, hi, n_bins + 1)))


def _median_sorted(x: np.ndarray) -> float:
    n = len(x)
    mid = n // 2
    return float(x[mid]) if n % 2 else 0.5 * (x[mid - 1] + x[mid])


def interquartile_range(data) -> float:
    """IQR from Tukey's hinges: medians of the lower and upper halves.

    For odd n the overall median is left out of both halves.
    """
    x = np.sort(np.asarray(data, dtype=float))
    n = len(x)
    half = n // 2
    return _median_sorted(x[n - half:]) - _median_sorted(x[:half])


def fd_width(data) -> float:
    x = np.asarray(data, dtype=float)
    return 2.0 * interquartile_range(x) * len(x) ** (-1.0 / 3.0)


def fd_edges(data: HistoricalDataset) -> BinningSpec:
    x = data.as_array() if isinstance(data, HistoricalDataset) else np.asarray(data, dtype=float)
    if len(np.unique(x)) < 2:
        raise DegenerateDataError("Freedman-Diaconis binning needs at least two distinct samples")
    w = fd_width(x)
    if w <= 0:
        raise DegenerateDataError("interquartile range is zero")
    lo, hi = float(x.min()), float(x.max())
    n = max(1, math.ceil((hi - lo) / w))
    return BinningSpec(tuple(lo + w * np.arange(n + 1)))


def quantile_edges(data: HistoricalDataset, n_bins: int) -> BinningSpec:
    """Edges at the i/n_bins empirical quantiles (linear interpolation).

    Edges that coincide because of tied samples are merged.
    """
    if n_bins < 1:
        raise InvalidParameterError("n_bins must be >= 1")
    x = data.as_array() if isinstance(data, HistoricalDataset) else np.asarray(data, dtype=float)
    if len(np.unique(x)) < max(2, n_bins):
        raise DegenerateDataError(f"need at least {max(2, n_bins)} distinct samples for {n_bins} quantile bins")
    q = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1), method="linear")
    return BinningSpec(tuple(np.unique(q)))


def rpl_edge_edges(lo: float, hi: float, n_bins: int, rpl: float) -> BinningSpec:
    """Equal-width bins on each side of ``rpl``, which becomes an edge.

    The bins are split between [lo, rpl] and [rpl, hi] in proportion to
    their lengths, at least one bin per side.
    """
    if not lo < rpl < hi:
        raise InvalidParameterError("rpl must lie strictly inside (lo, hi)")
    if n_bins < 2:
        raise InvalidParameterError("RPL-edge binning needs n_bins >= 2")
    n_left = int(round(n_bins * (rpl - lo) / (hi - lo)))
    n_left = min(n_bins - 1, max(1, n_left))
    left = np.linspace(lo, rpl, n_left + 1)
    right = np.linspace(rpl, hi, n_bins - n_left + 1)
    return BinningSpec(tuple(np.concatenate([left, right[1:]])))


def encode(spec: BinningSpec, value: float) -> int:
    edges = spec.edges
    if len(edges) == 1:
        return 0
    if value < edges[0] and not spec.open_left:
        raise InvalidParameterError(f"{value} below the closed left edge {edges[0]}")
    if value > edges[-1] and not spec.open_right:
        raise InvalidParameterError(f"{value} above the closed right edge {edges[-1]}")
    i = int(np.searchsorted(edges, value, side="right")) - 1
    return min(max(i, 0), spec.n_bins - 1)


def rpl_binning(levels) -> BinningSpec:
    """One bin per distinct reference level; edges at the midpoints."""
    levels = sorted(set(float(x) for x in levels))
    if len(levels) == 1:
        return BinningSpec((levels[0],))
    mids = [0.5 * (a + b) for a, b in zip(levels, levels[1:])]
    # outer edges only bound the half-open end bins
    return BinningSpec((levels[0] - 1.0, *mids, levels[-1] + 1.0))


@dataclass(frozen=True)
class StateEncoder:
    """Joint (APL bin, RPL bin) index, flattened row-major."""

    apl: BinningSpec
    rpl: BinningSpec

    @property
    def n_states(self) -> int:
        return self.apl.n_bins * self.rpl.n_bins

    def __call__(self, apl: float, rpl: float) -> int:
        return encode(self.apl, apl) * self.rpl.n_bins + encode(self.rpl, rpl)


def parse_binning(descriptor: str, rpl: float | None = None, historical: HistoricalDataset | None = None) -> BinningSpec:
    """Build a BinningSpec from a descriptor.

    Forms: ``equal:lo,hi,n``, ``fd[:file]``, ``quantile:[file,]n``,
    ``rpledge:lo,hi,n``. A file given in the descriptor wins over
    ``historical``; RPL-edge binning needs ``rpl``.
    """
    kind, _, rest = descriptor.partition(":")
    parts = [p for p in rest.split(",") if p] if rest else []
    try:
        if kind in ("equal", "rpledge"):
            if len(parts) != 3:
                raise InvalidParameterError(f"{kind} binning needs lo,hi,n: {descriptor!r}")
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
            if kind == "equal":
                return equal_width_edges(lo, hi, n)
            if rpl is None:
                raise InvalidParameterError("rpledge binning needs a reference level")
            return rpl_edge_edges(lo, hi, n, rpl)
        if kind == "fd":
            data = HistoricalDataset.from_file(parts[0]) if parts else historical
            if data is None:
                raise InvalidInputError("fd binning needs historical data")
            return fd_edges(data)
        if kind == "quantile":
            if not parts:
                raise InvalidParameterError(f"quantile binning needs n: {descriptor!r}")
            n = int(parts[-1])
            data = HistoricalDataset.from_file(parts[0]) if len(parts) > 1 else historical
            if data is None:
                raise InvalidInputError("quantile binning needs historical data")
            return quantile_edges(data, n)
    except ValueError as exc:
        if isinstance(exc, (InvalidParameterError, InvalidInputError, DegenerateDataError)):
            raise
        raise InvalidParameterError(f"bad binning descriptor {descriptor!r}") from None
    raise InvalidParameterError(f"unknown binning kind {kind!r}")
