"""
Dressed spectra: a batched complex Jacobi eigensolver, (M, parity) labeling of
the static spectrum and label continuation along omega_r sweeps.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from core.dressing import dress, dressed_stack, rotation_generator
from core.errors import AmbiguousLabel, ConvergenceFailure, LabelMismatch, TrackingBreakdown
from core.model import DIM, FieldProtocol, MoleculeParams, derived_frequencies, freeze

logger = logging.getLogger(__name__)

SWEEP_CAP = 100
CONVERGENCE = 1e-15
HERMITIAN_TOL = 1e-12

OVERLAP_THRESHOLD = 1.0 / math.sqrt(2.0)
REFINEMENT_FLOOR = 1e-9  # fraction of the sweep span
DEGENERACY_TOL = 1e-12  # relative to the largest |eigenvalue|
WEIGHT_TOL = 1e-6
GAP_TOL = 1e-6  # relative to the largest |eigenvalue| on the sweep


class StateLabel(NamedTuple):
    """(M, parity) tag. M is stored doubled so labels stay integral."""

    m_twice: int
    parity: str  # "e" or "f"

    @property
    def m(self) -> float:
        return self.m_twice / 2.0

    @property
    def epsilon(self) -> int:
        return -1 if self.parity == "e" else 1

    @property
    def index(self) -> int:
        return CANONICAL_LABELS.index(self)

    def __str__(self) -> str:
        return f"({self.m_twice:+d}/2,{self.parity})"


CANONICAL_LABELS: Tuple[StateLabel, ...] = tuple(
    StateLabel(int(m2), parity) for parity in ("e", "f") for m2 in (-3, -1, 1, 3)
)


@dataclass(frozen=True)
class DressedSpectrum:
    """
    Eigen-decomposition of one dressed matrix.

    eigenvalues ascend; labels[k] tags eigenvalues[k] and eigenvectors[:, k].
    lifted marks spectra whose degenerate clusters were rotated to diagonalize J_z.
    """

    omega_r: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: Optional[Tuple[StateLabel, ...]] = None
    lifted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", freeze(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", freeze(self.eigenvectors))
        if self.labels is not None and sorted(self.labels) != sorted(CANONICAL_LABELS):
            raise LabelMismatch(f"labels are not a permutation of the 8 states: {self.labels}")

    def canonical_order(self) -> np.ndarray:
        """Column index of each canonical label."""
        if self.labels is None:
            raise LabelMismatch("spectrum is unlabeled")
        position = {label: k for k, label in enumerate(self.labels)}
        return np.array([position[label] for label in CANONICAL_LABELS])

    def canonical_energies(self) -> np.ndarray:
        return self.eigenvalues[self.canonical_order()]

    def energy(self, label: StateLabel) -> float:
        return float(self.eigenvalues[self.labels.index(label)])

    def expectation(self, operator: np.ndarray) -> np.ndarray:
        """Real <v_k|O|v_k> for every eigenvector, in eigenvalue order."""
        v = self.eigenvectors
        return np.real(np.einsum("ik,ij,jk->k", v.conj(), operator, v))


@dataclass(frozen=True)
class TrackedSweep:
    params: MoleculeParams
    fields: FieldProtocol
    grid: np.ndarray
    spectra: Tuple[DressedSpectrum, ...]
    zero: DressedSpectrum  # labeled static spectrum the labels descend from
    refinements: int = 0

    def energies(self) -> np.ndarray:
        """(points, 8) dressed energies in canonical label order."""
        return np.array([spectrum.canonical_energies() for spectrum in self.spectra])


class SpectrumGap(NamedTuple):
    pair: Tuple[StateLabel, StateLabel]
    omega_r: float
    gap: float  # joules
    kind: str  # "crossing" or "avoided"


# --- eigensolver -----------------------------------------------------------


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """One complex Jacobi rotation annihilating a[:, p, q] across the batch, in place."""
    b = a[:, p, q]
    magnitude = np.abs(b)
    active = magnitude > 0.0
    if not np.any(active):
        return

    a_pp = a[:, p, p].real.copy()
    a_qq = a[:, q, q].real.copy()
    safe = np.where(active, magnitude, 1.0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        theta = (a_qq - a_pp) / (2.0 * safe)
        t = np.where(theta >= 0.0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t = np.where(active & np.isfinite(t), t, 0.0)
    phase = np.where(active, b / safe, 1.0)
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c

    # G = [[c, s*phase], [-s*conj(phase), c]] on the (p, q) plane; A <- G^H A G
    cc = c[:, None]
    sp = (s * phase)[:, None]
    spc = (s * np.conj(phase))[:, None]

    col_p = a[:, :, p].copy()
    col_q = a[:, :, q].copy()
    a[:, :, p] = cc * col_p - spc * col_q
    a[:, :, q] = sp * col_p + cc * col_q

    row_p = a[:, p, :].copy()
    row_q = a[:, q, :].copy()
    a[:, p, :] = cc * row_p - sp * row_q
    a[:, q, :] = spc * row_p + cc * row_q

    a[:, p, p] = a_pp - t * magnitude
    a[:, q, q] = a_qq + t * magnitude
    a[:, p, q] = 0.0
    a[:, q, p] = 0.0

    vec_p = v[:, :, p].copy()
    vec_q = v[:, :, q].copy()
    v[:, :, p] = cc * vec_p - spc * vec_q
    v[:, :, q] = sp * vec_p + cc * vec_q


def jacobi_eigh(matrices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cyclic Jacobi for a stack of complex Hermitian matrices, shape (batch, n, n).

    Returns ascending eigenvalues (batch, n) and eigenvector columns (batch, n, n).
    Converged when the off-diagonal Frobenius norm drops below 1e-15 of the
    input's Frobenius norm.
    """
    a = np.array(matrices, dtype=complex)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError(f"expected a (batch, n, n) stack, got {a.shape}")
    batch, n, _ = a.shape

    scale = np.linalg.norm(a, axis=(1, 2))
    asymmetry = np.max(np.abs(a - np.conj(np.swapaxes(a, 1, 2))), axis=(1, 2))
    if np.any(asymmetry > HERMITIAN_TOL * np.maximum(scale, np.finfo(float).tiny)):
        raise ValueError("Jacobi eigensolver needs Hermitian input")

    v = np.broadcast_to(np.eye(n, dtype=complex), a.shape).copy()
    off_mask = ~np.eye(n, dtype=bool)
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]

    def off_norm() -> np.ndarray:
        return np.sqrt(np.sum(np.abs(a[:, off_mask]) ** 2, axis=1))

    sweeps = 0
    while True:
        off = off_norm()
        if np.all(off <= CONVERGENCE * scale):
            break
        if sweeps == SWEEP_CAP:
            raise ConvergenceFailure(SWEEP_CAP, float(np.max(off / np.maximum(scale, np.finfo(float).tiny))))
        for p, q in pairs:
            _rotate(a, v, p, q)
        sweeps += 1
    logger.debug("jacobi converged in %d sweeps for a batch of %d", sweeps, batch)

    values = np.real(np.diagonal(a, axis1=1, axis2=2))
    order = np.argsort(values, axis=1, kind="stable")
    values = np.take_along_axis(values, order, axis=1)
    vectors = np.take_along_axis(v, order[:, None, :], axis=2)
    return values, vectors


def eigh8(matrix) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigen-decomposition of an 8x8 Hermitian matrix or a (..., 8, 8) stack.

    Accepts HamiltonianMatrix, DressedMatrix or a plain array.
    """
    entries = np.asarray(getattr(matrix, "entries", matrix))
    if entries.shape[-2:] != (DIM, DIM):
        raise ValueError(f"eigh8 needs 8x8 input, got {entries.shape}")
    lead = entries.shape[:-2]
    values, vectors = jacobi_eigh(entries.reshape((-1, DIM, DIM)))
    return values.reshape(lead + (DIM,)), vectors.reshape(lead + (DIM, DIM))


def spectrum_of(params: MoleculeParams, fields: FieldProtocol, omega_r: float) -> DressedSpectrum:
    """Unlabeled dressed spectrum at one rotation rate."""
    values, vectors = eigh8(dressed_stack(params, fields, [omega_r])[0])
    return DressedSpectrum(float(omega_r), values, vectors)


# --- labeling --------------------------------------------------------------


def stark_scale(params: MoleculeParams, fields: FieldProtocol) -> float:
    """Splitting between the |M|=3/2 and |M|=1/2 Stark doublets, rad/s."""
    omega_e = derived_frequencies(params, fields).omega_e
    half = 0.5 * params.delta
    return math.hypot(half, 0.6 * omega_e) - math.hypot(half, 0.2 * omega_e)


def _clusters(values: np.ndarray, tol: float) -> List[List[int]]:
    """Group indices of an ascending array into runs closer than tol."""
    groups = [[0]]
    for k in range(1, len(values)):
        if values[k] - values[k - 1] <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def lift_degeneracies(spectrum: DressedSpectrum) -> DressedSpectrum:
    """
    Rotate every degenerate eigenvalue cluster so J_z is diagonal inside it.

    This is the zeroth-order state selected by an infinitesimal rotation, since
    dH_d/domega_r = -hbar J_z.
    """
    values = spectrum.eigenvalues
    vectors = np.array(spectrum.eigenvectors)
    tol = DEGENERACY_TOL * max(np.max(np.abs(values)), np.finfo(float).tiny)
    generator = rotation_generator()
    for group in _clusters(values, tol):
        if len(group) < 2:
            continue
        block = vectors[:, group]
        projected = block.conj().T @ generator @ block
        _, rotation = jacobi_eigh(0.5 * (projected + projected.conj().T)[None])
        vectors[:, group] = block @ rotation[0]
        logger.debug("lifted a %d-fold cluster at E=%.6e J", len(group), values[group[0]])
    return replace(spectrum, eigenvectors=vectors, lifted=True)


def label_states(spectrum_at_zero: DressedSpectrum, params: MoleculeParams, fields: FieldProtocol) -> DressedSpectrum:
    """
    Attach (M, parity) labels to a static spectrum.

    Parity goes to the four eigenvectors with the largest f-block weight. M
    follows the dominant splitting:

    - Zeeman (omega_L >= Stark scale): M = -3/2 ... +3/2 in ascending energy
      within each parity class.
    - Stark: |M| = 3/2 for the two members farthest from the spectral centre;
      the member with the more negative <J_z> gets +|M|.

    Raises:
        AmbiguousLabel: parity weights, energies or <J_z> values needed for the
            assignment coincide (an exact degeneracy). lift_degeneracies() first.
    """
    values = spectrum_at_zero.eigenvalues
    vectors = spectrum_at_zero.eigenvectors
    scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)
    energy_tol = DEGENERACY_TOL * scale
    check_energies = not spectrum_at_zero.lifted

    f_weight = np.sum(np.abs(vectors[4:, :]) ** 2, axis=0)
    order = np.argsort(f_weight, kind="stable")
    if f_weight[order[4]] - f_weight[order[3]] < WEIGHT_TOL:
        raise AmbiguousLabel("parity weights do not separate e from f")
    classes = {"e": order[:4], "f": order[4:]}

    jz = spectrum_at_zero.expectation(rotation_generator())
    frequencies = derived_frequencies(params, fields)
    use_stark = stark_scale(params, fields) > frequencies.omega_l
    labels: List[Optional[StateLabel]] = [None] * DIM

    cluster_of = np.empty(DIM, dtype=int)
    for number, group in enumerate(_clusters(values, energy_tol)):
        cluster_of[group] = number

    for parity, members in classes.items():
        if not use_stark:
            # degenerate levels of a lifted spectrum are ordered by <J_z>
            ranked = sorted(members, key=lambda k: (cluster_of[k], jz[k]))
            for low, high in zip(ranked, ranked[1:]):
                if cluster_of[low] == cluster_of[high] and (check_energies or abs(jz[high] - jz[low]) < WEIGHT_TOL):
                    raise AmbiguousLabel(f"degenerate {parity} levels under the Zeeman ordering")
            for m2, k in zip((-3, -1, 1, 3), ranked):
                labels[k] = StateLabel(m2, parity)
            continue

        centre = float(np.mean(values))
        distance = np.abs(values - centre)
        ranked = sorted(members, key=lambda k: distance[k])
        if distance[ranked[2]] - distance[ranked[1]] < energy_tol:
            raise AmbiguousLabel(f"|M| doublets of the {parity} class are not separated")
        for magnitude, pair in ((1, ranked[:2]), (3, ranked[2:])):
            a, b = pair
            if check_energies and abs(values[a] - values[b]) < energy_tol:
                raise AmbiguousLabel(f"|M|={magnitude}/2 {parity} doublet is degenerate")
            if abs(jz[a] - jz[b]) < WEIGHT_TOL:
                raise AmbiguousLabel(f"<J_z> does not separate the |M|={magnitude}/2 {parity} doublet")
            rising, falling = (a, b) if jz[a] < jz[b] else (b, a)
            labels[rising] = StateLabel(magnitude, parity)
            labels[falling] = StateLabel(-magnitude, parity)

    return replace(spectrum_at_zero, labels=tuple(labels))


def static_spectrum(params: MoleculeParams, fields: FieldProtocol) -> DressedSpectrum:
    """Labeled omega_r = 0 spectrum, lifting degeneracies when labels are ambiguous."""
    zero = spectrum_of(params, fields, 0.0)
    try:
        return label_states(zero, params, fields)
    except AmbiguousLabel as exc:
        logger.debug("static labels ambiguous (%s); lifting degeneracies by rotation", exc)
    return label_states(lift_degeneracies(zero), params, fields)


# --- continuation ----------------------------------------------------------


def _align_clusters(previous: DressedSpectrum, candidate: DressedSpectrum) -> DressedSpectrum:
    """Rotate degenerate clusters of candidate onto the previous vectors (orthogonal Procrustes)."""
    values = candidate.eigenvalues
    tol = DEGENERACY_TOL * max(float(np.max(np.abs(values))), np.finfo(float).tiny)
    groups = [group for group in _clusters(values, tol) if len(group) > 1]
    if not groups:
        return candidate
    vectors = np.array(candidate.eigenvectors)
    for group in groups:
        block = vectors[:, group]
        overlap = block.conj().T @ previous.eigenvectors
        weight = np.sum(np.abs(overlap) ** 2, axis=0)
        nearest = np.sort(np.argsort(weight)[::-1][: len(group)])
        u, _, vh = np.linalg.svd(overlap[:, nearest])
        vectors[:, group] = block @ (u @ vh)
    return replace(candidate, eigenvectors=vectors)


def _match(previous: DressedSpectrum, candidate: DressedSpectrum) -> Tuple[Tuple[StateLabel, ...], float]:
    """Maximal-overlap label assignment and its worst overlap amplitude."""
    overlap = np.abs(previous.eigenvectors.conj().T @ candidate.eigenvectors)
    rows, cols = linear_sum_assignment(overlap**2, maximize=True)
    labels: List[Optional[StateLabel]] = [None] * DIM
    for row, col in zip(rows, cols):
        labels[col] = previous.labels[row]
    return tuple(labels), float(np.min(overlap[rows, cols]))


def continue_spectrum(
    params: MoleculeParams,
    fields: FieldProtocol,
    start: DressedSpectrum,
    target,
    floor: Optional[float] = None,
) -> Tuple[DressedSpectrum, int]:
    """
    Carry labels from start to the target rate (or unlabeled spectrum).

    Intervals whose best assignment has an overlap below 1/sqrt(2) are bisected
    until the step reaches floor.

    Returns:
        (labeled spectrum at the target, number of inserted refinement points)

    Raises:
        TrackingBreakdown: refinement reached the floor without a clean match
    """
    if not isinstance(target, DressedSpectrum):
        target = spectrum_of(params, fields, target)
    if floor is None:
        floor = REFINEMENT_FLOOR * max(abs(target.omega_r - start.omega_r), np.finfo(float).tiny)

    current = start
    pending = [target]
    inserted = 0
    while pending:
        candidate = _align_clusters(current, pending[-1])
        labels, worst = _match(current, candidate)
        if worst > OVERLAP_THRESHOLD:
            current = replace(candidate, labels=labels, lifted=False)
            pending.pop()
            continue
        step = abs(candidate.omega_r - current.omega_r)
        if step <= floor:
            interval = tuple(sorted((current.omega_r, candidate.omega_r)))
            raise TrackingBreakdown(interval, worst)
        midpoint = 0.5 * (current.omega_r + candidate.omega_r)
        pending.append(spectrum_of(params, fields, midpoint))
        inserted += 1
    return current, inserted


def _diagonalize(params: MoleculeParams, fields: FieldProtocol, grid: np.ndarray, threads: int):
    stack = dressed_stack(params, fields, grid)
    if threads <= 1 or len(grid) < 2 * threads:
        return eigh8(stack)
    chunks = np.array_split(np.arange(len(grid)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda index: eigh8(stack[index]), chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def track_sweep(params: MoleculeParams, fields: FieldProtocol, grid: Sequence[float], threads: int = 1) -> TrackedSweep:
    """
    Labeled dressed spectra along an ascending omega_r grid.

    Grid points are diagonalized independently (optionally in a thread pool),
    then linked in order starting from the labeled static spectrum.

    Raises:
        NonCancellation: the protocol is not co-rotating
        AmbiguousLabel: static labels stay ambiguous after lifting
        TrackingBreakdown: carries the sweep up to the failure as .partial
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("grid must be a non-empty 1-D sequence")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be ascending and start at omega_r >= 0")

    dress(params, replace(fields, omega_r=float(grid[-1]) if grid[-1] > 0 else 1.0))

    zero = static_spectrum(params, fields)
    values, vectors = _diagonalize(params, fields, grid, threads)
    floor = REFINEMENT_FLOOR * max(float(grid[-1]), np.finfo(float).tiny)

    spectra: List[DressedSpectrum] = []
    current = zero
    refinements = 0
    for k, omega in enumerate(grid):
        if omega == 0.0:
            current = zero
        else:
            candidate = DressedSpectrum(float(omega), values[k], vectors[k])
            try:
                current, inserted = continue_spectrum(params, fields, current, candidate, floor)
            except TrackingBreakdown as exc:
                exc.partial = TrackedSweep(params, fields, freeze(grid[:k]), tuple(spectra), zero, refinements)
                raise
            refinements += inserted
        spectra.append(current)

    if refinements:
        logger.info("tracking inserted %d refinement points over %d grid points", refinements, len(grid))
    return TrackedSweep(params, fields, freeze(grid), tuple(spectra), zero, refinements)


def spectrum_at(sweep: TrackedSweep, omega_r: float) -> DressedSpectrum:
    """Labeled spectrum at an off-grid rate, continued from the nearest grid point."""
    nearest = int(np.argmin(np.abs(sweep.grid - omega_r)))
    start = sweep.spectra[nearest]
    if start.omega_r == omega_r:
        return start
    floor = REFINEMENT_FLOOR * max(float(sweep.grid[-1]), abs(omega_r), np.finfo(float).tiny)
    spectrum, _ = continue_spectrum(sweep.params, sweep.fields, start, omega_r, floor)
    return spectrum


# --- gaps ------------------------------------------------------------------


def _parabola_minimum(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    origin, width = x[1], max(x[2] - x[0], np.finfo(float).tiny)
    a, b, c = np.polyfit((x - origin) / width, y, 2)
    if a <= 0:
        return float(x[1]), float(y[1])
    vertex = float(np.clip(-b / (2.0 * a), (x[0] - origin) / width, (x[2] - origin) / width))
    return origin + vertex * width, float(a * vertex * vertex + b * vertex + c)


def find_spectrum_gaps(sweep: TrackedSweep, gap_tol: Optional[float] = None) -> List[SpectrumGap]:
    """
    Local minima of |E_i - E_j| for every state pair along the sweep.

    A sign change of E_i - E_j between grid points is an exact crossing located
    by linear interpolation. Other interior minima are refined with a parabola;
    those below gap_tol count as crossings, the rest as avoided crossings.
    """
    energies = sweep.energies()
    grid = sweep.grid
    if gap_tol is None:
        gap_tol = GAP_TOL * float(np.max(np.abs(energies)))

    events: List[SpectrumGap] = []
    for i in range(DIM):
        for j in range(i + 1, DIM):
            pair = (CANONICAL_LABELS[i], CANONICAL_LABELS[j])
            diff = energies[:, i] - energies[:, j]
            gap = np.abs(diff)
            for k in range(len(grid) - 1):
                if diff[k] == 0.0:
                    events.append(SpectrumGap(pair, float(grid[k]), 0.0, "crossing"))
                elif diff[k] * diff[k + 1] < 0.0:
                    fraction = diff[k] / (diff[k] - diff[k + 1])
                    omega = grid[k] + fraction * (grid[k + 1] - grid[k])
                    events.append(SpectrumGap(pair, float(omega), 0.0, "crossing"))
                elif 0 < k and gap[k] < gap[k - 1] and gap[k] <= gap[k + 1] and diff[k - 1] * diff[k] > 0:
                    omega, minimum = _parabola_minimum(grid[k - 1 : k + 2], gap[k - 1 : k + 2])
                    minimum = max(minimum, 0.0)
                    kind = "crossing" if minimum < gap_tol else "avoided"
                    events.append(SpectrumGap(pair, omega, minimum, kind))

    events.sort(key=lambda event: (event.omega_r, event.pair))
    return events