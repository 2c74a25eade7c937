"""Online greedy informative trajectory design.

At each step the UAV evaluates a ring of candidate headings (plus holding
position) and picks the one maximizing the estimated CRB improvement, subject
to the per-step distance budget and terminal reachability. Infeasible steps
fall back to moving straight toward the terminal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fim import InfoState, improvement_matrix, step_contribution
from .model import ToaNoiseModel

_FEAS_TOL = 1e-9  # meters of slack on the reachability comparison


@dataclass
class PlannerState:
    step: int                  # current step n, 1-based; must be < mission_steps
    pos: np.ndarray            # current UAV position x[n]
    terminal: np.ndarray       # x_F
    mission_steps: int         # N
    d_max: float
    info: InfoState
    user_estimates: np.ndarray  # (K, 2)
    noise_model: ToaNoiseModel = field(default_factory=ToaNoiseModel)
    headings: int = 8
    include_hold: bool = True


def reach_threshold(n: int, mission_steps: int, d_max: float) -> float:
    """Maximum distance from the terminal still compatible with arriving
    exactly at step N: d_max * (N - n)."""
    return d_max * (mission_steps - n)


def candidate_positions(st: PlannerState) -> list[np.ndarray]:
    """Ring of `headings` points at radius d_max, constant altitude, hold last."""
    pos = np.asarray(st.pos, dtype=float)
    cands = []
    for i in range(st.headings):
        theta = 2.0 * np.pi * i / st.headings
        cands.append(pos + st.d_max * np.array([np.cos(theta), np.sin(theta), 0.0]))
    if st.include_hold:
        cands.append(pos.copy())
    return cands


def greedy_cost(candidate, st: PlannerState) -> float:
    """tr(R) of measuring from `candidate`, or -inf if the terminal would
    become unreachable from there."""
    cand = np.asarray(candidate, dtype=float)
    slack = reach_threshold(st.step + 1, st.mission_steps, st.d_max)
    if np.linalg.norm(cand - np.asarray(st.terminal, dtype=float)) > slack + _FEAS_TOL:
        return float("-inf")
    contribs = step_contribution(cand, st.user_estimates, st.noise_model)
    return float(np.trace(improvement_matrix(st.info, contribs)))


def next_waypoint(st: PlannerState) -> np.ndarray:
    """Argmax of greedy_cost over the candidate set (ties to the smallest
    heading index). If no candidate is feasible, move straight toward the
    terminal by ||x - x_F|| / (N - n) meters."""
    if st.step >= st.mission_steps:
        raise ValueError("no next step: already at the final mission step")
    best = float("-inf")
    best_pos = None
    for cand in candidate_positions(st):
        cost = greedy_cost(cand, st)
        if cost > best:
            best = cost
            best_pos = cand
    if best_pos is not None and best > float("-inf"):
        return best_pos
    pos = np.asarray(st.pos, dtype=float)
    term = np.asarray(st.terminal, dtype=float)
    remaining = st.mission_steps - st.step
    if remaining == 1:
        return term.copy()
    return pos + (term - pos) / remaining
