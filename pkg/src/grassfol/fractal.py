"""Self-similar test measures of known dimension and their chart pushforwards."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.optimize

from .exterior import Field
from .projective import affine_chart_many, field_to_real, real_to_field, stereographic_many

CHARTS = ("affine", "stereographic")


@dataclass(frozen=True)
class Similarity:
    """x -> ratio * rotation @ x + offset."""

    ratio: float
    offset: tuple[float, ...]
    rotation: tuple[tuple[float, ...], ...] | None = None

    def matrix(self) -> np.ndarray:
        m = len(self.offset)
        rot = np.eye(m) if self.rotation is None else np.asarray(self.rotation, dtype=float)
        return self.ratio * rot

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.matrix().T + np.asarray(self.offset)


@dataclass(frozen=True)
class IfsSpec:
    dim: int
    maps: tuple[Similarity, ...]
    weights: tuple[float, ...] | None = None
    box: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    name: str = "custom"

    def __post_init__(self):
        if not self.maps:
            raise ValueError("an IFS needs at least one map")
        for f in self.maps:
            if not 0 < f.ratio < 1:
                raise ValueError(f"contraction ratio {f.ratio} outside (0, 1)")
            if len(f.offset) != self.dim:
                raise ValueError("offset dimension does not match the chart dimension")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if len(w) != len(self.maps) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise ValueError("weights must be a probability vector, one per map")

    def probabilities(self) -> np.ndarray:
        """Map-selection weights; natural weights r_i^s when none are declared."""
        if self.weights is not None:
            return np.asarray(self.weights, dtype=float)
        s = similarity_dimension(self)
        w = np.array([f.ratio**s for f in self.maps])
        return w / w.sum()

    def open_set_condition(self) -> bool:
        """Check the declared box: images inside the box with pairwise disjoint interiors.

        Images are compared through their corner bounding boxes, exact for
        axis-aligned maps.
        """
        if self.box is None:
            return False
        lo, hi = (np.asarray(b, dtype=float) for b in self.box)
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        boxes = []
        for f in self.maps:
            img = f(corners)
            if np.any(img < lo - 1e-12) or np.any(img > hi + 1e-12):
                return False
            boxes.append((img.min(axis=0), img.max(axis=0)))
        for (alo, ahi), (blo, bhi) in itertools.combinations(boxes, 2):
            if np.all(np.minimum(ahi, bhi) - np.maximum(alo, blo) > 1e-12):
                return False
        return True

    def placed(self, scale: float, shift: Sequence[float]) -> "IfsSpec":
        """Conjugate by y = scale * x + shift."""
        shift = np.asarray(shift, dtype=float)
        maps = []
        for f in self.maps:
            lin = f.matrix()
            off = scale * np.asarray(f.offset) + shift - lin @ shift
            maps.append(Similarity(f.ratio, tuple(off), f.rotation))
        box = None
        if self.box is not None:
            box = tuple(tuple(scale * np.asarray(b) + shift) for b in self.box)
        return IfsSpec(self.dim, tuple(maps), self.weights, box, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "maps": [
                {"ratio": f.ratio, "offset": list(f.offset), "rotation": f.rotation and [list(r) for r in f.rotation]}
                for f in self.maps
            ],
            "weights": None if self.weights is None else list(self.weights),
            "box": None if self.box is None else [list(b) for b in self.box],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IfsSpec":
        maps = tuple(
            Similarity(
                float(m["ratio"]),
                tuple(float(v) for v in m["offset"]),
                None if m.get("rotation") is None else tuple(tuple(map(float, r)) for r in m["rotation"]),
            )
            for m in d["maps"]
        )
        weights = None if d.get("weights") is None else tuple(map(float, d["weights"]))
        box = None if d.get("box") is None else tuple(tuple(map(float, b)) for b in d["box"])
        return cls(int(d["dim"]), maps, weights, box, d.get("name", "custom"))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def similarity_dimension(spec: IfsSpec) -> float:
    """Root s of sum_i r_i^s = 1."""
    ratios = np.array([f.ratio for f in spec.maps])

    def moran(s):
        return np.sum(ratios**s) - 1.0

    if moran(0.0) == 0.0:
        return 0.0
    hi = float(spec.dim)
    while moran(hi) > 0:
        hi *= 2
    return float(scipy.optimize.bisect(moran, 0.0, hi, xtol=1e-12))


# ---------------------------------------------------------------------------
# Named families


def cantor(ratio: float = 1 / 3) -> IfsSpec:
    """Middle Cantor set on [0, 1] with two maps of the given ratio."""
    return IfsSpec(
        1,
        (Similarity(ratio, (0.0,)), Similarity(ratio, (1.0 - ratio,))),
        box=((0.0,), (1.0,)),
        name=f"cantor({ratio:.6g})",
    )


def cantor_of_dimension(s: float) -> IfsSpec:
    if not 0 < s < 1:
        raise ValueError("a two-map Cantor set has dimension in (0, 1)")
    return cantor(2.0 ** (-1.0 / s))


def cantor_product(ratio: float = 1 / 3) -> IfsSpec:
    """Product of two middle Cantor sets in the unit square (four corner maps)."""
    maps = tuple(
        Similarity(ratio, (a * (1 - ratio), b * (1 - ratio))) for a in (0, 1) for b in (0, 1)
    )
    return IfsSpec(2, maps, box=((0.0, 0.0), (1.0, 1.0)), name=f"cantor_product({ratio:.6g})")


def four_corner() -> IfsSpec:
    return cantor_product(0.25)


def menger_sponge() -> IfsSpec:
    maps = []
    for idx in itertools.product(range(3), repeat=3):
        if sum(i == 1 for i in idx) <= 1:
            maps.append(Similarity(1 / 3, tuple(i / 3 for i in idx)))
    return IfsSpec(3, tuple(maps), box=((0.0,) * 3, (1.0,) * 3), name="menger")


NAMED = {
    "cantor": cantor,
    "cantor-product": cantor_product,
    "four-corner": four_corner,
    "menger": menger_sponge,
}


def load_spec(name_or_path: str) -> IfsSpec:
    """A named family, ``cantor:<s>`` for a middle Cantor set of dimension s, or a JSON path."""
    if name_or_path in NAMED:
        return NAMED[name_or_path]()
    if name_or_path.startswith("cantor:"):
        return cantor_of_dimension(float(name_or_path.split(":", 1)[1]))
    return IfsSpec.from_dict(json.loads(Path(name_or_path).read_text()))


# ---------------------------------------------------------------------------
# Measures


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted point cloud.

    ``space`` is "chart" for real chart coordinates, or "projective" /
    "sphere" for unit representatives in K^{n+1}.
    """

    points: np.ndarray
    weights: np.ndarray
    space: str = "chart"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) != len(self.points):
            raise ValueError("one weight per point")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def uniform(cls, points: np.ndarray, space: str = "chart", **meta) -> "EmpiricalMeasure":
        return cls(points, np.full(len(points), 1.0 / len(points)), space, meta)

    def subset(self, mask_or_idx) -> "EmpiricalMeasure":
        pts = self.points[mask_or_idx]
        w = self.weights[mask_or_idx]
        return EmpiricalMeasure(pts, w / w.sum(), self.space, dict(self.meta))


def ifs_attractor_sample(rng, spec: IfsSpec, depth: int = 100, count: int = 10_000) -> EmpiricalMeasure:
    """Independent chaos-game chains, each run ``depth`` steps from the fixed
    point of the first map; the final states sample the self-similar measure
    to resolution max(r_i)^depth."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    lin = np.stack([f.matrix() for f in spec.maps])
    off = np.stack([np.asarray(f.offset, dtype=float) for f in spec.maps])
    fixed = np.linalg.solve(np.eye(spec.dim) - lin[0], off[0])
    x = np.tile(fixed, (count, 1))
    p = spec.probabilities()
    choices = rng.choice(len(spec.maps), size=(depth, count), p=p)
    for step in choices:
        x = np.einsum("nij,nj->ni", lin[step], x) + off[step]
    return EmpiricalMeasure.uniform(x, "chart", spec=spec.name, spec_hash=spec.digest())


def push_measure(m: EmpiricalMeasure, chart: str, field: Field, n: int) -> EmpiricalMeasure:
    """Image of a chart measure in P^n_K (affine) or on the sphere S (stereographic)."""
    if m.space != "chart":
        raise ValueError("only chart measures can be pushed")
    x = np.asarray(m.points, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("chart singularity: non-finite chart coordinates")
    if chart == "affine":
        pts = affine_chart_many(real_to_field(x, field, n), field)
        space = "projective"
    elif chart == "stereographic":
        need = field.delta * n - 1
        if x.shape[1] > need:
            raise ValueError(f"stereographic chart has {need} coordinates")
        pad = np.zeros((len(x), need))
        pad[:, : x.shape[1]] = x
        pts = stereographic_many(pad, field, n)
        space = "sphere"
    else:
        raise ValueError(f"unknown chart {chart!r}; expected one of {CHARTS}")
    meta = dict(m.meta, chart=chart, field=field.value, n=n)
    return EmpiricalMeasure(pts, m.weights, space, meta)


def export_csv(m: EmpiricalMeasure, path=None, seed: int | None = None) -> str:
    """Rows of (weight, coordinates); complex coordinates are split re/im.

    Header comment lines record chart, field, n, seed and spec hash.  Returns
    the CSV text and writes it when ``path`` is given.
    """
    buf = io.StringIO()
    meta = dict(m.meta, space=m.space, seed="" if seed is None else seed)
    for key in ("space", "chart", "field", "n", "seed", "spec", "spec_hash"):
        buf.write(f"# {key}={meta.get(key, '')}\n")
    coords = m.points
    if np.iscomplexobj(coords):
        coords = field_to_real(coords, Field.COMPLEX)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["weight"] + [f"x{i}" for i in range(coords.shape[1])])
    for w, row in zip(m.weights, coords):
        writer.writerow([repr(float(w))] + [repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def import_csv(path_or_text: str) -> EmpiricalMeasure:
    text = path_or_text
    if "\n" not in path_or_text:
        text = Path(path_or_text).read_text()
    meta, rows = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line.strip():
            rows.append(line)
    reader = csv.reader(rows)
    next(reader)
    data = np.array([[float(v) for v in r] for r in reader])
    weights, coords = data[:, 0], data[:, 1:]
    space = meta.pop("space", "chart")
    if meta.get("field") == "C":
        half = coords.shape[1] // 2
        coords = coords[:, :half] + 1j * coords[:, half:]
    if meta.get("n"):
        meta["n"] = int(meta["n"])
    meta = {k: v for k, v in meta.items() if v != ""}
    return EmpiricalMeasure(coords, weights, space, meta)
