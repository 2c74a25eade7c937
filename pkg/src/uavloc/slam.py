"""Joint user localization and UAV tracking via iterative linearized
least squares.

The state stacks the UAV poses of every observed step (3D) followed by the
user positions (2D). GPS terms anchor each pose; ToA terms couple a pose with
a user. The normal equations are the standard graph-least-squares scatter-sum
H = sum_i J_i^T Q_i^-1 J_i, solved with Levenberg-Marquardt damping.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .channel import sigma_tau_of_distance
from .errors import DegenerateGeometry, NotConverged, SingularSystem
from .model import SPEED_OF_LIGHT, MeasurementSample, ToaNoiseModel

logger = logging.getLogger(__name__)


@dataclass
class StateVector:
    """SLAM unknowns: poses for the observed steps and the user positions.

    Flattened ordering is [pose_1 ... pose_S, user_1 ... user_K].
    """
    uav: np.ndarray    # (S, 3)
    users: np.ndarray  # (K, 2)

    @property
    def dim(self) -> int:
        return 3 * len(self.uav) + 2 * len(self.users)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.uav.ravel(), self.users.ravel()])

    @classmethod
    def from_flat(cls, flat, num_poses, num_users):
        flat = np.asarray(flat, dtype=float)
        split = 3 * num_poses
        return cls(uav=flat[:split].reshape(num_poses, 3).copy(),
                   users=flat[split:].reshape(num_users, 2).copy())

    def copy(self):
        return StateVector(self.uav.copy(), self.users.copy())


@dataclass(frozen=True)
class ErrorTerm:
    """One weighted residual block of the objective.

    GPS terms touch the 3 indices of one pose; ToA terms touch one pose and
    one user (5 indices). weight is 1/sigma^2.
    """
    kind: str                 # "gps" | "toa"
    indices: tuple[int, ...]  # flat state indices
    measured: np.ndarray | float
    weight: float


@dataclass
class NormalEquations:
    H: np.ndarray
    b: np.ndarray
    damping: float = 0.0


@dataclass
class SolveReport:
    iterations: int
    objective_trace: list[float]
    converged: bool
    final_step_norm: float


@dataclass(frozen=True)
class SlamConfig:
    sigma_gps: float = 1.0
    sigma_tau: float = 1.25e-8
    noise_model: ToaNoiseModel | None = None
    per_distance_weights: bool = False  # refresh toa sigma from current distances
    huber_delta: float | None = None    # seconds; robust ToA reweighting when set
    tol_step: float = 1e-6
    max_iter: int = 100
    lambda_init: float = 1e-4
    lambda_max: float = 1e8


@dataclass(frozen=True)
class SlamProblem:
    """Index layout derived from a measurement set."""
    steps: tuple[int, ...]      # observed mission steps, sorted
    user_ids: tuple[int, ...]   # observed user ids, sorted
    gps: np.ndarray             # (S, 3) one GPS fix per observed step
    toa: tuple[tuple[int, int, float], ...]  # (pose_idx, user_idx, toa)

    @property
    def num_poses(self):
        return len(self.steps)

    @property
    def num_users(self):
        return len(self.user_ids)

    def pose_slice(self, i):
        return slice(3 * i, 3 * i + 3)

    def user_indices(self, j):
        base = 3 * self.num_poses + 2 * j
        return (base, base + 1)


def build_problem(measurements: list[MeasurementSample]) -> SlamProblem:
    if not measurements:
        raise ValueError("measurement set is empty")
    steps = tuple(sorted({m.step for m in measurements}))
    user_ids = tuple(sorted({m.user_id for m in measurements}))
    step_idx = {s: i for i, s in enumerate(steps)}
    user_idx = {u: j for j, u in enumerate(user_ids)}
    gps = np.zeros((len(steps), 3))
    seen = set()
    toa = []
    for m in measurements:
        i = step_idx[m.step]
        if m.step not in seen:
            gps[i] = m.gps_pos.as_array()
            seen.add(m.step)
        toa.append((i, user_idx[m.user_id], float(m.toa)))
    return SlamProblem(steps=steps, user_ids=user_ids, gps=gps, toa=tuple(toa))


def toa_jacobian_row(uav, user) -> np.ndarray:
    """Partials of the ToA residual r = tau_hat - ||x - u||/C.

    Returns [dr/dx (3 entries), dr/du (2 entries)].
    """
    x = np.asarray(uav, dtype=float)
    u = np.asarray(user, dtype=float)
    diff = x - np.array([u[0], u[1], 0.0])
    d = float(np.linalg.norm(diff))
    if d == 0.0:
        raise DegenerateGeometry("zero UAV-user distance")
    row = np.empty(5)
    row[:3] = -diff / (SPEED_OF_LIGHT * d)
    row[3:] = diff[:2] / (SPEED_OF_LIGHT * d)
    return row


def _toa_sigma(problem, state, cfg) -> np.ndarray:
    """Per-measurement ToA sigma under the configured weighting mode."""
    if cfg.per_distance_weights and cfg.noise_model is not None:
        out = np.empty(len(problem.toa))
        for t, (i, j, _) in enumerate(problem.toa):
            diff = state.uav[i] - np.array([state.users[j][0], state.users[j][1], 0.0])
            out[t] = sigma_tau_of_distance(float(np.linalg.norm(diff)), cfg.noise_model)
        return out
    return np.full(len(problem.toa), cfg.sigma_tau)


def build_error_terms(problem: SlamProblem, cfg: SlamConfig,
                      state: StateVector | None = None) -> list[ErrorTerm]:
    """One GPS term per observed pose plus one ToA term per measurement."""
    terms = []
    w_gps = 1.0 / cfg.sigma_gps ** 2
    for i in range(problem.num_poses):
        sl = problem.pose_slice(i)
        terms.append(ErrorTerm("gps", tuple(range(sl.start, sl.stop)),
                               problem.gps[i].copy(), w_gps))
    sigmas = _toa_sigma(problem, state, cfg) if state is not None \
        else np.full(len(problem.toa), cfg.sigma_tau)
    for t, (i, j, tau) in enumerate(problem.toa):
        sl = problem.pose_slice(i)
        idx = tuple(range(sl.start, sl.stop)) + problem.user_indices(j)
        terms.append(ErrorTerm("toa", idx, tau, 1.0 / sigmas[t] ** 2))
    return terms


def _term_residual(term: ErrorTerm, flat: np.ndarray):
    """Residual vector and local Jacobian for one term."""
    if term.kind == "gps":
        r = np.asarray(term.measured) - flat[list(term.indices)]
        jac = -np.eye(3)
        return r, jac
    x = flat[list(term.indices[:3])]
    u = flat[list(term.indices[3:])]
    diff = x - np.array([u[0], u[1], 0.0])
    d = float(np.linalg.norm(diff))
    if d == 0.0:
        raise DegenerateGeometry("zero UAV-user distance")
    r = np.array([term.measured - d / SPEED_OF_LIGHT])
    jac = toa_jacobian_row(x, u).reshape(1, 5)
    return r, jac


def objective_terms(terms: list[ErrorTerm], flat: np.ndarray,
                    huber_delta: float | None = None) -> float:
    total = 0.0
    for term in terms:
        r, _ = _term_residual(term, flat)
        if huber_delta is not None and term.kind == "toa":
            a = abs(float(r[0]))
            if a > huber_delta:
                total += term.weight * huber_delta * (2 * a - huber_delta)
                continue
        total += term.weight * float(r @ r)
    return total


def objective(state: StateVector, measurements, cfg: SlamConfig) -> float:
    """Negative log-likelihood (up to constants) of the measurement set."""
    problem = build_problem(measurements)
    terms = build_error_terms(problem, cfg, state)
    return objective_terms(terms, state.flatten(), cfg.huber_delta)


def assemble_normal_equations(flat_state: np.ndarray, terms: list[ErrorTerm],
                              damping: float = 0.0,
                              huber_delta: float | None = None) -> NormalEquations:
    """Scatter-sum H = sum J_i^T w_i J_i and b = sum J_i^T w_i r_i."""
    dim = len(flat_state)
    H = np.zeros((dim, dim))
    b = np.zeros(dim)
    for term in terms:
        r, jac = _term_residual(term, flat_state)
        w = term.weight
        if huber_delta is not None and term.kind == "toa":
            a = abs(float(r[0]))
            if a > huber_delta:
                w *= huber_delta / a
        idx = np.asarray(term.indices)
        H[np.ix_(idx, idx)] += w * (jac.T @ jac)
        b[idx] += w * (jac.T @ r)
    return NormalEquations(H=H, b=b, damping=damping)


def gauss_newton_step(ne: NormalEquations) -> np.ndarray:
    """Solve (H + lambda I) delta = -b with a Cholesky factorization."""
    A = ne.H + ne.damping * np.eye(len(ne.b))
    try:
        c, low = scipy.linalg.cho_factor(A, check_finite=False)
        return scipy.linalg.cho_solve((c, low), -ne.b, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularSystem(f"factorization failed at damping {ne.damping:g}") from exc


def check_identifiability(problem: SlamProblem, warn: bool = True) -> list[int]:
    """Users lacking >= 3 ToA measurements from non-collinear horizontal
    UAV positions. Logs a warning for each (identifiability is marginal)."""
    weak = []
    for j, uid in enumerate(problem.user_ids):
        pts = np.array([problem.gps[i][:2] for i, jj, _ in problem.toa if jj == j])
        ok = False
        if len(pts) >= 3:
            centered = pts - pts.mean(axis=0)
            ok = np.linalg.matrix_rank(centered, tol=1e-9) >= 2
        if not ok:
            weak.append(uid)
            if warn:
                logger.warning("user %d is weakly observed "
                               "(needs >=3 non-collinear ToA measurements)", uid)
    return weak


def solve_slam(init: StateVector, measurements, cfg: SlamConfig,
               warn_identifiability: bool = True):
    """Levenberg-Marquardt minimization of the joint negative log-likelihood.

    Returns (state, report). Raises NotConverged (carrying the best state and
    report) if the step-size tolerance is not met within cfg.max_iter.
    """
    problem = build_problem(measurements)
    check_identifiability(problem, warn=warn_identifiability)
    if init.uav.shape != (problem.num_poses, 3) or init.users.shape != (problem.num_users, 2):
        raise ValueError("initial state dimensions do not match the measurement set")

    flat = init.flatten()
    lam = cfg.lambda_init
    terms = build_error_terms(problem, cfg,
                              StateVector.from_flat(flat, problem.num_poses, problem.num_users))
    f = objective_terms(terms, flat, cfg.huber_delta)
    trace = [f]
    converged = False
    step_norm = np.inf
    iterations = 0

    for _ in range(cfg.max_iter):
        iterations += 1
        state = StateVector.from_flat(flat, problem.num_poses, problem.num_users)
        terms = build_error_terms(problem, cfg, state)
        f = objective_terms(terms, flat, cfg.huber_delta)
        ne = assemble_normal_equations(flat, terms, huber_delta=cfg.huber_delta)

        accepted = False
        while lam <= cfg.lambda_max:
            try:
                delta = gauss_newton_step(replace(ne, damping=lam))
            except SingularSystem:
                lam *= 10.0
                continue
            f_new = objective_terms(terms, flat + delta, cfg.huber_delta)
            if f_new <= f:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break

        flat = flat + delta
        f = f_new
        trace.append(f)
        lam = max(lam / 10.0, 1e-15)
        step_norm = float(np.linalg.norm(delta))
        if step_norm < cfg.tol_step:
            converged = True
            break

    state = StateVector.from_flat(flat, problem.num_poses, problem.num_users)
    report = SolveReport(iterations=iterations, objective_trace=trace,
                         converged=converged, final_step_norm=step_norm)
    if not converged:
        raise NotConverged("step tolerance not reached", state=state, report=report)
    return state, report


def initial_state(measurements, rng, margin: float = 50.0) -> StateVector:
    """Default initialization: UAV poses from GPS, users uniform over the
    GPS-trace horizontal bounding box expanded by `margin` meters."""
    problem = build_problem(measurements)
    lo = problem.gps[:, :2].min(axis=0) - margin
    hi = problem.gps[:, :2].max(axis=0) + margin
    users = np.column_stack([rng.uniform(lo[0], hi[0], problem.num_users),
                             rng.uniform(lo[1], hi[1], problem.num_users)])
    return StateVector(uav=problem.gps.copy(), users=users)
