"""Logical-error-rate sweeps and the fits run on them."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .circuit import SurfaceCodeSpec, build_memory_experiment
from .decoder import Decoder, build_matching_graph
from .embedder import emit_physical_circuit
from .noise import apply_noise_model
from .sim import CompiledCircuit, iter_samples
from .surface_router import MoveTable, golden_round, tile_schedule
from .topology import LatticeKind, SurfacePatch

CSV_COLUMNS = ["lattice", "variant", "d", "p", "shots", "logical_errors", "p_L", "stderr"]
ABSTRACT_LATTICE = "rotated_square"


class FitError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    lattices: list[str] = field(default_factory=lambda: ["heavy_hexagonal", "hexagonal"])
    distances: list[int] = field(default_factory=lambda: [3, 5])
    p_grid: dict[str, list[float]] = field(default_factory=dict)  # lattice (or rotated_square) -> p values
    shots: int = 100_000
    seed: int = 1
    decompose_swaps: bool = True
    cancel_cnots: dict[str, bool] = field(default_factory=lambda: {"hexagonal": True})
    p_swap: float | None = None  # defaults to 3p for native swaps
    dp_limit: int = 16
    batch_size: int = 1 << 16
    workers: int = 1
    tables: dict[str, str] = field(default_factory=dict)  # lattice -> move table CSV path

    def __post_init__(self):
        for lat in self.lattices:
            LatticeKind(lat)
        for d in self.distances:
            SurfaceCodeSpec(d)
        if self.shots < 1:
            raise ValueError("shots must be positive")
        for key, grid in self.p_grid.items():
            if any(not 0 <= p <= 0.75 for p in grid):
                raise ValueError(f"p grid for {key} leaves [0, 3/4]")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def digest(self) -> str:
        d = asdict(self)
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def points(self) -> list[tuple[str, str, int, float]]:
        pts = []
        for d in self.distances:
            for p in self.p_grid.get(ABSTRACT_LATTICE, []):
                pts.append((ABSTRACT_LATTICE, "abstract", d, p))
            for lat in self.lattices:
                for p in self.p_grid.get(lat, []):
                    pts.append((lat, "embedded", d, p))
        return pts


@dataclass
class Point:
    lattice: str
    variant: str
    d: int
    p: float
    shots: int
    logical_errors: int

    @property
    def p_L(self) -> float:
        return self.logical_errors / self.shots

    @property
    def stderr(self) -> float:
        q = self.p_L
        return math.sqrt(q * (1 - q) / self.shots)

    def row(self) -> dict:
        return {"lattice": self.lattice, "variant": self.variant, "d": self.d, "p": repr(self.p),
                "shots": self.shots, "logical_errors": self.logical_errors,
                "p_L": repr(self.p_L), "stderr": repr(self.stderr)}


def build_circuit(lattice: str, variant: str, d: int, *, decompose: bool = True, cancel: bool = False,
                  table: MoveTable | None = None):
    """(circuit, initial abstract->wire mapping) for one sweep point."""
    spec = SurfaceCodeSpec(d)
    if variant == "abstract":
        return build_memory_experiment(spec, reverse_odd_rounds=True), None
    tr = golden_round(lattice, d) if table is None else tile_schedule(table, spec, kind=lattice)
    c = emit_physical_circuit(tr.schedule, spec, tr.device, decompose_swaps=decompose, cancel_cnots=cancel)
    return c, tr.schedule.initial_mapping.assignment


def _point_seed(seed: int, lattice: str, variant: str, d: int, p: float) -> int:
    return zlib.crc32(f"{seed}|{lattice}|{variant}|{d}|{p!r}".encode())


def simulate_point(cfg: ExperimentConfig, lattice: str, variant: str, d: int, p: float) -> Point:
    if p == 0:
        return Point(lattice, variant, d, p, cfg.shots, 0)
    table = MoveTable.from_csv(Path(cfg.tables[lattice]).read_text()) if lattice in cfg.tables else None
    circuit, initial = build_circuit(lattice, variant, d, decompose=cfg.decompose_swaps,
                                     cancel=cfg.cancel_cnots.get(lattice, False), table=table)
    noisy = apply_noise_model(circuit, p, cfg.p_swap)
    graph = build_matching_graph(noisy, SurfacePatch(d), initial=initial)
    dec = Decoder(graph, dp_limit=cfg.dp_limit)
    cc = CompiledCircuit(noisy)
    errors = 0
    seed = _point_seed(cfg.seed, lattice, variant, d, p)
    for b in iter_samples(cc, cfg.shots, seed, batch_size=cfg.batch_size):
        pred = dec.decode_batch(b.detectors[:, graph.nodes])
        errors += int(np.count_nonzero(pred != b.observables[:, 0]))
    return Point(lattice, variant, d, p, cfg.shots, errors)


def _run_one(args):
    cfg, pt = args
    return simulate_point(cfg, *pt)


def run_experiment(cfg: ExperimentConfig, *, cache: Path | None = None, progress=None) -> list[Point]:
    """Simulate every configured point; rows come back in config order.

    With ``cache`` the results are stored next to the config digest and
    reused when the same config is run again.
    """
    if cache is not None and cache.exists():
        pts = read_csv(cache.read_text(), expect_digest=cfg.digest())
        if pts is not None:
            return pts
    jobs = [(cfg, pt) for pt in cfg.points()]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            out = []
            for r in ex.map(_run_one, jobs):
                out.append(r)
                if progress:
                    progress(r)
    else:
        out = []
        for j in jobs:
            r = _run_one(j)
            out.append(r)
            if progress:
                progress(r)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        cache.write_text(write_csv(out, digest=cfg.digest()))
    return out


def write_csv(points: list[Point], digest: str | None = None) -> str:
    buf = io.StringIO()
    if digest:
        buf.write(f"# config {digest}\n")
    w = csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for pt in points:
        w.writerow(pt.row())
    return buf.getvalue()


def read_csv(text: str, expect_digest: str | None = None) -> list[Point] | None:
    lines = text.splitlines()
    if expect_digest is not None:
        if not lines or lines[0] != f"# config {expect_digest}":
            return None
    body = [l for l in lines if not l.startswith("#")]
    out = []
    for r in csv.DictReader(body):
        out.append(Point(r["lattice"], r["variant"], int(r["d"]), float(r["p"]), int(r["shots"]),
                         int(r["logical_errors"])))
    return out


# ---------------------------------------------------------------------------
# fits


def sub_threshold(points: list[Point], max_pl: float = 0.1, max_rel_err: float = 0.2) -> list[Point]:
    return [pt for pt in points if 0 < pt.p_L < max_pl and pt.stderr / pt.p_L < max_rel_err]


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int


def fit_slope(points: list[Point], *, min_points: int = 4) -> SlopeFit:
    """Weighted least squares of log p_L against log p."""
    pts = sub_threshold(points)
    if len(pts) < min_points:
        raise FitError(f"need {min_points} sub-threshold points, have {len(pts)}")
    x = np.log([pt.p for pt in pts])
    y = np.log([pt.p_L for pt in pts])
    sig = np.array([pt.stderr / pt.p_L for pt in pts])
    (b, a), cov = np.polyfit(x, y, 1, w=1 / sig, cov="unscaled")
    resid = (y - (a + b * x)) / sig
    chi2 = float(resid @ resid) / max(len(pts) - 2, 1)
    err = math.sqrt(cov[0, 0] * max(chi2, 1.0))
    return SlopeFit(float(b), err, float(a), len(pts))


def matched_window(a: list[Point], b: list[Point]) -> tuple[list[Point], list[Point]]:
    """Restrict two curves to the p_L range both of them cover."""
    a, b = sub_threshold(a), sub_threshold(b)
    if not a or not b:
        return [], []
    lo = max(min(pt.p_L for pt in a), min(pt.p_L for pt in b))
    hi = min(max(pt.p_L for pt in a), max(pt.p_L for pt in b))
    keep = lambda pts: [pt for pt in pts if lo <= pt.p_L <= hi]
    return keep(a), keep(b)


def slopes_agree(a: SlopeFit, b: SlopeFit, n_sigma: float = 1.0) -> bool:
    return abs(a.slope - b.slope) <= n_sigma * math.hypot(a.stderr, b.stderr)


@dataclass
class ScaleFit:
    s: float
    low: float
    high: float
    n_points: int


def _abstract_model(pts: list[Point]):
    x = np.log([pt.p for pt in pts])
    y = np.log([pt.p_L for pt in pts])
    sig = np.array([pt.stderr / pt.p_L for pt in pts])
    deg = 2 if len(pts) >= 4 else 1
    coef = np.polyfit(x, y, deg, w=1 / sig)
    return np.poly1d(coef), x.min(), x.max()


def _scale_objective(log_s, models, emb_sets):
    total = 0.0
    for (model, lo, hi), pts in zip(models, emb_sets):
        for pt in pts:
            r = (math.log(pt.p_L) - model(math.log(pt.p) + log_s)) / (pt.stderr / pt.p_L)
            total += r * r
    return total


def fit_peff(abstract: list[Point] | dict[int, list[Point]], embedded: list[Point] | dict[int, list[Point]],
             *, bootstrap: int = 200, seed: int = 0, min_points: int = 4) -> ScaleFit:
    """Horizontal scale s with p_L_emb(p) ~ p_L_abs(s p) in log-log space.

    Accepts a single curve each or dicts keyed by distance (one common s).
    The abstract curve is a weighted quadratic in log-log; the interval is
    the 16-84 % range of a parametric bootstrap.
    """
    if not isinstance(abstract, dict):
        abstract, embedded = {0: abstract}, {0: embedded}
    models, emb_sets = [], []
    for d in sorted(embedded):
        a = sub_threshold(abstract.get(d, []))
        e = sub_threshold(embedded[d])
        if len(a) < min_points or len(e) < min_points:
            raise FitError(f"too few sub-threshold points at d={d}")
        models.append(_abstract_model(a))
        emb_sets.append(e)

    def solve(models, emb_sets):
        res = minimize_scalar(_scale_objective, bounds=(math.log(0.05), math.log(50)),
                              args=(models, emb_sets), method="bounded", options={"xatol": 1e-6})
        return float(res.x)

    log_s = solve(models, emb_sets)
    outside = sum(not lo <= math.log(pt.p) + log_s <= hi
                  for (m, lo, hi), pts in zip(models, emb_sets) for pt in pts)
    if outside:
        raise FitError(f"{outside} embedded points fall outside the abstract range after scaling")
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(bootstrap):
        ms, es = [], []
        for d in sorted(embedded):
            ms.append(_abstract_model(_jitter(sub_threshold(abstract.get(d, [])), rng)))
            es.append(_jitter(sub_threshold(embedded[d]), rng))
        boots.append(solve(ms, es))
    lo, hi = (np.percentile(boots, [16, 84]) if boots else (log_s, log_s))
    return ScaleFit(math.exp(log_s), math.exp(lo), math.exp(hi), sum(len(e) for e in emb_sets))


def _jitter(pts: list[Point], rng) -> list[Point]:
    out = []
    for pt in pts:
        k = max(int(rng.binomial(pt.shots, pt.p_L)), 1)
        out.append(Point(pt.lattice, pt.variant, pt.d, pt.p, pt.shots, k))
    return out


def curves(points: list[Point]) -> dict[tuple[str, str, int], list[Point]]:
    out: dict[tuple[str, str, int], list[Point]] = {}
    for pt in points:
        out.setdefault((pt.lattice, pt.variant, pt.d), []).append(pt)
    for v in out.values():
        v.sort(key=lambda pt: pt.p)
    return out


def plot_spec(points: list[Point]) -> dict:
    """Vega-lite description of the p_L curves."""
    return {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "data": {"values": [pt.row() for pt in points]},
        "mark": {"type": "line", "point": True},
        "encoding": {
            "x": {"field": "p", "type": "quantitative", "scale": {"type": "log"}},
            "y": {"field": "p_L", "type": "quantitative", "scale": {"type": "log"}},
            "color": {"field": "lattice", "type": "nominal"},
            "strokeDash": {"field": "d", "type": "nominal"},
        },
    }


def default_workers() -> int:
    return max(1, min(8, (os.cpu_count() or 2) - 1))
