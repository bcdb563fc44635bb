"""Object pose hypotheses by heuristic-guided coplanar 4-point base matching

Scene bases are drawn from the segmented object cloud, weighted away from the
hand and filtered by point pair features seen on the model. Each accepted base
is matched to every approximately congruent 4-point set of the model samples
and each match is aligned in closed form and scored by LCP.
"""
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from exceptions import DegeneratePairError, NoValidBasesError, RankDeficientAlignmentError
from models.geometry import OrientedPointCloud, RigidTransform
from models.hypothesis import Base, PoseHypothesis, Ppf, PpfHashMap, SamplingHeuristic
from models.params import HeuristicParams, LcpParams, PpfParams, RegistrationParams
from models.sdf import SignedDistanceField
from services.geometry import SpatialIndex, fit_rigid_transform, lcp_score
from services.hand_model import sdf_query
from services.parallel import parallel_map

logger = logging.getLogger(__name__)

MIN_PAIR_DISTANCE = 1e-9
PARALLEL_TOLERANCE = 1e-12
# Search radius for the predicted 4th point, in units of the distance tolerance
PREDICTION_SLACK = 2.0
# First-diagonal pairs joined per block
JOIN_CHUNK = 2048
# Pairings of four points into two diagonals
DIAGONAL_PAIRINGS = ((0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2))


# ---------------------------------------------------------------------------
# Point pair features
# ---------------------------------------------------------------------------

def _angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0))


def ppf_features(p1: np.ndarray, n1: np.ndarray, p2: np.ndarray, n2: np.ndarray) -> np.ndarray:
    """(N, 4) features (‖d‖, ∠(n1, d), ∠(n2, d), ∠(n1, n2)) with d = p2 − p1"""
    d = np.atleast_2d(p2) - np.atleast_2d(p1)
    distance = np.linalg.norm(d, axis=1)
    direction = d / np.maximum(distance, MIN_PAIR_DISTANCE)[:, None]
    n1 = np.atleast_2d(n1)
    n2 = np.atleast_2d(n2)
    return np.stack([distance, _angles(n1, direction), _angles(n2, direction), _angles(n1, n2)], axis=1)


def compute_ppf(p1, n1, p2, n2) -> Ppf:
    """Point pair feature of two oriented points

    Raises:
        DegeneratePairError: the points coincide
    """
    p1, p2 = np.asarray(p1, dtype=float), np.asarray(p2, dtype=float)
    if np.linalg.norm(p2 - p1) < MIN_PAIR_DISTANCE:
        raise DegeneratePairError()
    distance, a1, a2, a3 = ppf_features(p1, np.asarray(n1, dtype=float), p2, np.asarray(n2, dtype=float))[0]
    return Ppf(distance=distance, angle_n1_d=a1, angle_n2_d=a2, angle_n1_n2=a3)


def _angle_bins(angle_step: float) -> int:
    return int(math.floor(math.pi / angle_step)) + 1


def ppf_keys(features: np.ndarray, params: PpfParams) -> np.ndarray:
    """Pack discretized features into one int64 key per row"""
    bins = _angle_bins(params.angle_step)
    d = np.floor(features[:, 0] / params.distance_step).astype(np.int64)
    a = np.minimum(np.floor(features[:, 1:] / params.angle_step).astype(np.int64), bins - 1)
    return ((d * bins + a[:, 0]) * bins + a[:, 1]) * bins + a[:, 2]


def build_ppf_hashmap(samples: OrientedPointCloud, params: PpfParams = PpfParams(), chunk: int = 256) -> PpfHashMap:
    """Count discretized features over all ordered pairs i != j of the model samples"""
    n = len(samples)
    if n < 2:
        raise ValueError("A PPF hash map needs at least two model points")
    all_keys = []
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        i = np.repeat(rows, n)
        j = np.tile(np.arange(n), len(rows))
        keep = i != j
        i, j = i[keep], j[keep]
        features = ppf_features(samples.positions[i], samples.normals[i], samples.positions[j], samples.normals[j])
        all_keys.append(ppf_keys(features, params))
    keys, counts = np.unique(np.concatenate(all_keys), return_counts=True)
    logger.info(f"PPF map: {len(keys)} distinct keys over {n * (n - 1)} ordered pairs")
    return PpfHashMap(distance_step=params.distance_step, angle_step=params.angle_step, keys=keys, counts=counts)


def ppf_counts(hashmap: PpfHashMap, features: np.ndarray) -> np.ndarray:
    """Stored count of each feature row, 0 when absent"""
    keys = ppf_keys(np.atleast_2d(features),
                    PpfParams(distance_step=hashmap.distance_step, angle_step=hashmap.angle_step))
    slots = np.searchsorted(hashmap.keys, keys)
    slots = np.minimum(slots, len(hashmap.keys) - 1)
    present = hashmap.keys[slots] == keys
    return np.where(present, hashmap.counts[slots], 0)


# ---------------------------------------------------------------------------
# Sampling heuristic and base sampling
# ---------------------------------------------------------------------------

def init_heuristic(object_cloud: OrientedPointCloud, sdf: SignedDistanceField,
                   params: HeuristicParams = HeuristicParams()) -> SamplingHeuristic:
    """Weights ∝ max(0, 1 − exp(−λ · SDF)), uniform when all are zero"""
    if len(object_cloud) == 0:
        raise ValueError("The sampling heuristic needs a nonempty object cloud")
    distances = np.asarray(sdf_query(sdf, object_cloud.positions), dtype=float)
    weights = np.maximum(0.0, 1.0 - np.exp(-params.rate * distances))
    total = weights.sum()
    if total <= 0:
        logger.warning("All heuristic weights are zero; falling back to uniform sampling")
        return uniform_heuristic(object_cloud, params)
    return SamplingHeuristic(weights=weights / total, rate=params.rate, decay=params.decay)


def uniform_heuristic(object_cloud: OrientedPointCloud, params: HeuristicParams = HeuristicParams()) -> SamplingHeuristic:
    n = len(object_cloud)
    return SamplingHeuristic(weights=np.full(n, 1.0 / n), rate=params.rate, decay=params.decay)


class BaseDraw(BaseModel):
    """Outcome of one sampling attempt: an accepted base or the rejection reason"""

    base: Optional[Base] = None
    rejection: Optional[str] = None

    model_config = ConfigDict(frozen=True)


def closest_line_parameters(a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parameters (s, t) of the closest points a + s(b − a) and c + t(d − c), plus their gap

    Works row-wise on (N, 3) arrays; parallel lines get s = t = nan.
    """
    u, v, w = b - a, d - c, a - c
    uu = np.einsum("ij,ij->i", u, u)
    uv = np.einsum("ij,ij->i", u, v)
    vv = np.einsum("ij,ij->i", v, v)
    uw = np.einsum("ij,ij->i", u, w)
    vw = np.einsum("ij,ij->i", v, w)
    denominator = uu * vv - uv ** 2
    parallel = denominator <= PARALLEL_TOLERANCE * uu * vv
    safe = np.where(parallel, 1.0, denominator)
    s = np.where(parallel, np.nan, (uv * vw - vv * uw) / safe)
    t = np.where(parallel, np.nan, (uu * vw - uv * uw) / safe)
    gap = np.linalg.norm((a + s[:, None] * u) - (c + t[:, None] * v), axis=1)
    return s, t, gap


def order_base(points: np.ndarray) -> Optional[Tuple[int, int, int, int]]:
    """Pairing of the four points into diagonals whose lines cross most centrally

    Returns the index order (a, b, c, d) with diagonals ab and cd, or None when
    every pairing has parallel lines.
    """
    best, best_score = None, np.inf
    for order in DIAGONAL_PAIRINGS:
        p = points[list(order)]
        s, t, _ = closest_line_parameters(p[None, 0], p[None, 1], p[None, 2], p[None, 3])
        if np.isnan(s[0]):
            continue
        score = max(abs(s[0] - 0.5), abs(t[0] - 0.5))
        if score < best_score:
            best, best_score = order, score
    return best


def sample_base(object_cloud: OrientedPointCloud, heuristic: SamplingHeuristic, hashmap: PpfHashMap,
                params: RegistrationParams, rng: np.random.Generator, diagonal: Optional[float] = None) -> BaseDraw:
    """Draw four points from the heuristic, each decaying its weight by γ

    Only points with a valid normal are eligible. The drawn points are then
    checked in order: distinct and pairwise at least min_spread_fraction of the
    cloud's bounding-box diagonal apart, first three not collinear, fourth
    within coplanarity_tol of their plane, crossing diagonals, and every
    pairwise PPF seen on the model. The weight decay persists even when the
    attempt is rejected.
    """
    positions = object_cloud.positions
    if len(positions) < 4:
        raise ValueError("Base sampling needs at least four object points")
    if diagonal is None:
        diagonal = float(np.linalg.norm(positions.max(axis=0) - positions.min(axis=0)))
    usable = object_cloud.normal_mask

    drawn: List[int] = []
    for _ in range(4):
        candidates = heuristic.weights * usable
        total = candidates.sum()
        if total <= 0:
            return BaseDraw(rejection="no_candidates")
        index = int(rng.choice(len(positions), p=candidates / total))
        heuristic.discount(index)
        drawn.append(index)

    if len(set(drawn)) < 4:
        return BaseDraw(rejection="duplicate")
    i, j = np.triu_indices(4, k=1)
    quad = positions[drawn]
    if np.min(np.linalg.norm(quad[j] - quad[i], axis=1)) < params.min_spread_fraction * diagonal:
        return BaseDraw(rejection="narrow")
    a, b, c, d = quad
    longest = max(np.linalg.norm(b - a), np.linalg.norm(c - b), np.linalg.norm(a - c))
    normal = np.cross(b - a, c - a)
    area = np.linalg.norm(normal)
    if area / max(longest ** 2, MIN_PAIR_DISTANCE) < params.collinearity_tol:
        return BaseDraw(rejection="collinear")
    if abs((d - a) @ normal) / area > params.coplanarity_tol:
        return BaseDraw(rejection="noncoplanar")

    order = order_base(quad)
    if order is None:
        return BaseDraw(rejection="collinear")
    indices = tuple(drawn[k] for k in order)

    idx = np.array(indices)
    features = ppf_features(positions[idx[i]], object_cloud.normals[idx[i]], positions[idx[j]], object_cloud.normals[idx[j]])
    if np.any(ppf_counts(hashmap, features) == 0):
        return BaseDraw(rejection="ppf_absent")
    return BaseDraw(base=Base(indices=indices))


# ---------------------------------------------------------------------------
# Congruent sets and alignment
# ---------------------------------------------------------------------------

class ModelPairs:
    """All unordered model sample pairs sorted by length, for banded pair lookup"""

    def __init__(self, samples: OrientedPointCloud):
        self.samples = samples
        self.index = SpatialIndex(samples.positions)
        i, j = np.triu_indices(len(samples), k=1)
        lengths = np.linalg.norm(samples.positions[j] - samples.positions[i], axis=1)
        order = np.argsort(lengths, kind="stable")
        self.i, self.j, self.lengths = i[order], j[order], lengths[order]
        self.cosines = np.einsum("ij,ij->i", samples.normals[self.i], samples.normals[self.j])

    def band(self, length: float, tolerance: float, normal_angle: Optional[float] = None,
             normal_tolerance: float = math.pi) -> Tuple[np.ndarray, np.ndarray]:
        """Ordered pairs (both directions) with |length − L| ≤ tolerance and a matching normal angle"""
        lo = np.searchsorted(self.lengths, length - tolerance, side="left")
        hi = np.searchsorted(self.lengths, length + tolerance, side="right")
        i, j = self.i[lo:hi], self.j[lo:hi]
        if normal_angle is not None:
            angles = np.arccos(np.clip(self.cosines[lo:hi], -1.0, 1.0))
            keep = np.abs(angles - normal_angle) <= normal_tolerance
            i, j = i[keep], j[keep]
        return np.concatenate([i, j]), np.concatenate([j, i])


def base_invariants(points: np.ndarray) -> Tuple[float, float, float, float]:
    """(d1, d2, r1, r2): diagonal lengths and where each diagonal meets the other"""
    a, b, c, d = points
    s, t, _ = closest_line_parameters(a[None], b[None], c[None], d[None])
    return float(np.linalg.norm(b - a)), float(np.linalg.norm(d - c)), float(s[0]), float(t[0])


def congruence_errors(base_points: np.ndarray, quads: np.ndarray, params: RegistrationParams,
                      base_normals: Optional[np.ndarray] = None, quad_normals: Optional[np.ndarray] = None) -> np.ndarray:
    """Sum of pairwise distance deviations per candidate quad, inf where it is not congruent

    A quad (N, 4, 3) is congruent to the base when all six pairwise distances
    agree within congruence_distance_tol, both diagonals cross at the base's
    ratios within congruence_ratio_tol with a line gap within the distance
    tolerance, and (when normals are given) all six pairwise normal angles
    agree within congruence_normal_tol.
    """
    quads = np.asarray(quads, dtype=float).reshape(-1, 4, 3)
    i, j = np.triu_indices(4, k=1)
    base_lengths = np.linalg.norm(base_points[j] - base_points[i], axis=1)
    lengths = np.linalg.norm(quads[:, j] - quads[:, i], axis=2)
    deviation = np.abs(lengths - base_lengths)
    ok = np.all(deviation <= params.congruence_distance_tol, axis=1)

    _, _, r1, r2 = base_invariants(base_points)
    s, t, gap = closest_line_parameters(quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3])
    with np.errstate(invalid="ignore"):
        ok &= np.abs(s - r1) <= params.congruence_ratio_tol
        ok &= np.abs(t - r2) <= params.congruence_ratio_tol
    ok &= gap <= params.congruence_distance_tol

    if base_normals is not None and quad_normals is not None:
        base_angles = _angles(base_normals[i], base_normals[j])
        cosines = np.einsum("nkd,nkd->nk", quad_normals[:, i], quad_normals[:, j])
        angles = np.arccos(np.clip(cosines, -1.0, 1.0))
        ok &= np.all(np.abs(angles - base_angles) <= params.congruence_normal_tol, axis=1)
    return np.where(ok, deviation.sum(axis=1), np.inf)


def _pair_angle(normals: Optional[np.ndarray], p: int, q: int) -> Optional[float]:
    if normals is None:
        return None
    return float(np.arccos(np.clip(normals[p] @ normals[q], -1.0, 1.0)))


def _join_on_first(ia: np.ndarray, ib: np.ndarray, ja: np.ndarray, jc: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Every (a, b, c) with (a, b) from the first pair list and (a, c) from the second

    ja must be sorted ascending.
    """
    lo = np.searchsorted(ja, ia, side="left")
    counts = np.searchsorted(ja, ia, side="right") - lo
    rows = np.repeat(np.arange(len(ia)), counts)
    starts = np.repeat(lo - (np.cumsum(counts) - counts), counts)
    return ia[rows], ib[rows], jc[starts + np.arange(len(rows))]


def triangle_frame_coordinates(points: np.ndarray) -> np.ndarray:
    """Coordinates of the 4th point in the frame (b − a, c − a, unit normal) of the first three"""
    a, b, c, d = points
    u, v = b - a, c - a
    normal = np.cross(u, v)
    normal /= np.linalg.norm(normal)
    return np.linalg.solve(np.column_stack([u, v, normal]), d - a)


def find_congruent_sets(base_points: np.ndarray, pairs: ModelPairs, params: RegistrationParams,
                        base_normals: Optional[np.ndarray] = None) -> np.ndarray:
    """Model index quads (K, 4) approximately congruent to the scene base

    Model triangles (a, b, c) are built by joining the length bands of the
    first diagonal ab and the side ac on their shared point, then filtered by
    the bc length. The 4th point is predicted from the base's coordinates in
    the triangle frame and matched to every model sample within
    PREDICTION_SLACK · dt of the prediction. Each candidate is then verified
    exactly. Results are ordered by deviation then
    index, and capped at max_congruent_per_base when one is set.
    """
    empty = np.empty((0, 4), dtype=np.int64)
    base_points = np.asarray(base_points, dtype=float).reshape(4, 3)
    _, _, r1, _ = base_invariants(base_points)
    a0, b0, c0, _ = base_points
    if np.isnan(r1) or np.linalg.norm(np.cross(b0 - a0, c0 - a0)) < MIN_PAIR_DISTANCE ** 2:
        return empty

    dt = params.congruence_distance_tol
    ia, ib = pairs.band(float(np.linalg.norm(b0 - a0)), dt, _pair_angle(base_normals, 0, 1),
                        params.congruence_normal_tol)
    ja, jc = pairs.band(float(np.linalg.norm(c0 - a0)), dt, _pair_angle(base_normals, 0, 2),
                        params.congruence_normal_tol)
    if len(ia) == 0 or len(ja) == 0:
        return empty
    order = np.argsort(ja, kind="stable")
    ja, jc = ja[order], jc[order]

    positions = pairs.samples.positions
    bc_length = float(np.linalg.norm(c0 - b0))
    alpha, beta, gamma = triangle_frame_coordinates(base_points)
    found = []
    for start in range(0, len(ia), JOIN_CHUNK):
        a, b, c = _join_on_first(ia[start:start + JOIN_CHUNK], ib[start:start + JOIN_CHUNK], ja, jc)
        keep = (c != b) & (np.abs(np.linalg.norm(positions[c] - positions[b], axis=1) - bc_length) <= dt)
        a, b, c = a[keep], b[keep], c[keep]
        if len(a) == 0:
            continue
        u = positions[b] - positions[a]
        v = positions[c] - positions[a]
        normal = np.cross(u, v)
        norms = np.linalg.norm(normal, axis=1)
        valid = norms > MIN_PAIR_DISTANCE ** 2
        normal[valid] /= norms[valid, None]
        predicted = positions[a] + alpha * u + beta * v + gamma * normal
        a, b, c, predicted = a[valid], b[valid], c[valid], predicted[valid]
        if len(a) == 0:
            continue
        # every sample in the prediction ball is a candidate 4th point
        matches = pairs.index.query_ball_point(predicted, PREDICTION_SLACK * dt)
        counts = np.array([len(match) for match in matches])
        rows = np.repeat(np.arange(len(a)), counts)
        if counts.sum() == 0:
            continue
        d = np.concatenate([np.asarray(match, dtype=np.int64) for match in matches])
        a, b, c = a[rows], b[rows], c[rows]
        keep = (d != a) & (d != b) & (d != c)
        found.append(np.stack([a[keep], b[keep], c[keep], d[keep]], axis=1))
    if not found:
        return empty
    quads = np.concatenate(found).astype(np.int64)

    normals = pairs.samples.normals
    errors = congruence_errors(base_points, positions[quads], params, base_normals,
                               None if base_normals is None else normals[quads])
    keep = np.isfinite(errors)
    quads, errors = quads[keep], errors[keep]
    order = np.lexsort(tuple(quads[:, k] for k in range(3, -1, -1)) + (errors,))
    return quads[order][:params.max_congruent_per_base]


def align_base(base_points: np.ndarray, congruent_points: np.ndarray) -> RigidTransform:
    """Model -> scene transform minimizing Σ‖T·m_i − s_i‖²

    Raises:
        RankDeficientAlignmentError: the points are (nearly) collinear
    """
    return fit_rigid_transform(congruent_points, base_points)


# ---------------------------------------------------------------------------
# Hypothesis generation
# ---------------------------------------------------------------------------

class HypothesisBatch(BaseModel):
    """Hypotheses of one registration run with its sampling statistics"""

    hypotheses: List[PoseHypothesis]
    bases: List[Base]
    rejections: Dict[str, int] = Field(default_factory=dict)

    model_config = ConfigDict(frozen=True)


def _hypotheses_for_base(base: Base, object_cloud: OrientedPointCloud, pairs: ModelPairs, scene_index: SpatialIndex,
                         params: RegistrationParams, lcp: LcpParams) -> List[PoseHypothesis]:
    idx = list(base.indices)
    base_points = object_cloud.positions[idx]
    quads = find_congruent_sets(base_points, pairs, params, object_cloud.normals[idx])
    hypotheses = []
    for quad in quads:
        try:
            transform = align_base(base_points, pairs.samples.positions[quad])
        except RankDeficientAlignmentError:
            continue
        hypotheses.append(PoseHypothesis(transform=transform, lcp=lcp_score(pairs.samples, scene_index, transform, lcp)))
    return hypotheses


def sample_bases(object_cloud: OrientedPointCloud, heuristic: SamplingHeuristic, hashmap: PpfHashMap,
                 params: RegistrationParams) -> Tuple[List[Base], Dict[str, int]]:
    """Draw until n_bases are accepted or rejection_budget_factor · n_bases attempts are spent"""
    rng = np.random.default_rng(params.rng_seed)
    positions = object_cloud.positions
    diagonal = float(np.linalg.norm(positions.max(axis=0) - positions.min(axis=0)))
    budget = params.rejection_budget_factor * params.n_bases
    bases: List[Base] = []
    rejections: Dict[str, int] = {}
    attempts = 0
    while len(bases) < params.n_bases and attempts < budget:
        attempts += 1
        draw = sample_base(object_cloud, heuristic, hashmap, params, rng, diagonal)
        if draw.base is not None:
            bases.append(draw.base)
        else:
            rejections[draw.rejection] = rejections.get(draw.rejection, 0) + 1
    logger.info(f"Accepted {len(bases)} bases in {attempts} attempts; rejections {rejections}")
    return bases, rejections


def generate_hypotheses(object_cloud: OrientedPointCloud, pairs: ModelPairs, hashmap: PpfHashMap,
                        heuristic: SamplingHeuristic, params: RegistrationParams = RegistrationParams(),
                        lcp: LcpParams = LcpParams(), workers: int = 1) -> HypothesisBatch:
    """Sample bases sequentially, then match, align and score them in parallel

    Raises:
        NoValidBasesError: n_bases > 0 and the budget ran out without an accepted base
    """
    if params.n_bases == 0:
        return HypothesisBatch(hypotheses=[], bases=[])
    if len(object_cloud) < 4:
        raise ValueError("Hypothesis generation needs at least four object points")

    bases, rejections = sample_bases(object_cloud, heuristic, hashmap, params)
    if not bases:
        raise NoValidBasesError(rejections)

    scene_index = SpatialIndex(object_cloud.positions)
    per_base = parallel_map(
        lambda base: _hypotheses_for_base(base, object_cloud, pairs, scene_index, params, lcp),
        bases,
        workers
    )
    hypotheses = [hypothesis for batch in per_base for hypothesis in batch]
    logger.info(f"Generated {len(hypotheses)} hypotheses from {len(bases)} bases")
    return HypothesisBatch(hypotheses=hypotheses, bases=bases, rejections=rejections)
