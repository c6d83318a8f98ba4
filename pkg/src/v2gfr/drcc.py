"""Moment-based distributionally robust chance constraints on V2G response.

The scheduled EV response ``r_bar`` must be deliverable with probability at
least ``1 - epsilon``::

    P[ r_bar <= sum_i g_i * (n0_i + dN_i) ] >= 1 - epsilon

With independent ``dN_i`` of known mean/std this becomes the second-order
cone constraint::

    k * || (g_i * sigma_i)_i ||_2 <= sum_i g_i * (n0_i + mu_i) - r_bar

where ``k = inverse_cdf_bound(ambiguity, epsilon)`` is the quantile bound of
the normalised excess over the ambiguity set.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np


class Ambiguity(enum.Enum):
    GAUSSIAN = "gaussian"
    UNIMODAL = "unimodal"
    DRO = "dro"


class Mode(enum.Enum):
    JOINT = "joint"
    INDIVIDUAL = "individual"
    DETERMINISTIC = "deterministic"
    DISABLED = "disabled"


BIG_M_SIGMA_MULTIPLE = 6.0

_STD_NORMAL = NormalDist()


def inverse_cdf_bound(ambiguity, epsilon: float) -> float:
    """Worst-case ``(1 - epsilon)`` quantile of a zero-mean, unit-variance variable."""
    ambiguity = Ambiguity(ambiguity)
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if ambiguity is Ambiguity.GAUSSIAN:
        return _STD_NORMAL.inv_cdf(1.0 - epsilon)
    if ambiguity is Ambiguity.UNIMODAL:
        if epsilon <= 1.0 / 6.0:
            return math.sqrt(4.0 / (9.0 * epsilon) - 1.0)
        return math.sqrt(3.0 * (1.0 - epsilon) / (1.0 + 3.0 * epsilon))
    return math.sqrt((1.0 - epsilon) / epsilon)


@dataclass(frozen=True)
class FleetUncertainty:
    """Per-EV response ``g`` (GW/EV) and the forecast of net connections."""

    g: float
    n0: float
    mu: float
    sigma: float

    def __post_init__(self):
        if self.g < 0:
            raise ValueError(f"g must be >= 0, got {self.g}")
        if self.n0 < 0:
            raise ValueError(f"n0 must be >= 0, got {self.n0}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        # small negative slack tolerates round-off from fleet scaling
        if self.n0 + self.mu < -1e-9 * max(1.0, self.n0):
            raise ValueError(
                f"expected connected count n0 + mu = {self.n0 + self.mu} is negative")

    @property
    def expected_count(self) -> float:
        return max(self.n0 + self.mu, 0.0)


@dataclass(frozen=True)
class DrccConfig:
    ambiguity: Ambiguity = Ambiguity.UNIMODAL
    epsilon: float = 0.01
    mode: Mode = Mode.JOINT
    big_m1: Optional[float] = None
    big_m2: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "ambiguity", Ambiguity(self.ambiguity))
        object.__setattr__(self, "mode", Mode(self.mode))
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        for name in ("big_m1", "big_m2"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0, got {v}")

    @functools.cached_property
    def k(self) -> float:
        """Quantile multiplier; zero when uncertainty is ignored."""
        if self.mode is Mode.DETERMINISTIC:
            return 0.0
        return inverse_cdf_bound(self.ambiguity, self.epsilon)


def _arrays(fleets: Sequence[FleetUncertainty]):
    g = np.array([f.g for f in fleets], dtype=float)
    a = np.array([f.n0 + f.mu for f in fleets], dtype=float)
    s = np.array([f.sigma for f in fleets], dtype=float)
    return g, a, s


def delta_moments(fleets: Sequence[FleetUncertainty], r_bar: float):
    """Mean and standard deviation of the excess ``r_bar - sum_i g_i (n0_i + dN_i)``."""
    if not fleets:
        raise ValueError("need at least one fleet")
    g, a, s = _arrays(fleets)
    return r_bar - float(g @ a), math.hypot(*(g * s))


def optimal_participation(fleets: Sequence[FleetUncertainty], config: DrccConfig) -> np.ndarray:
    """Fractions ``lam`` in [0, 1] of each fleet's capacity maximising the joint bound.

    Each fleet contributes ``g_i (n0_i + dN_i) >= 0``, so counting only part of
    it keeps the constraint sufficient. The bound ``sum lam w - k ||lam s||``
    (``w = g a``, ``s = g sigma``) is concave in ``lam``; at the optimum
    ``lam_i = clip(w_i T / (k s_i^2), 0, 1)`` with ``T = ||lam s||``, a scalar
    fixed point solved exactly: on each interval of ``T`` between consecutive
    saturation thresholds ``s_i / c_i`` the fixed-point equation is linear in ``T^2``.
    Full participation is optimal whenever every fleet has ``n0 + mu >= k sigma``.
    """
    g, a, s = _arrays(fleets)
    w, sd = g * a, g * s
    k = config.k
    lam = (w > 0).astype(float)
    risky = (sd > 0) & (w > 0)
    if k == 0.0 or not risky.any():
        return lam
    # stationarity in ratio form: lam_i = min(1, c_i T / s_i), c_i = a_i / (k sigma_i)
    with np.errstate(over="ignore"):
        c = a[risky] / (k * s[risky])  # may be inf for denormal sigma: full participation
    s_r = sd[risky]
    t_full = math.hypot(*s_r)
    if np.all(c * t_full >= s_r):
        return lam
    if math.hypot(*c) <= 1.0:
        lam[risky] = 0.0
        return lam
    t_star = _participation_fixed_point(s_r, c)
    with np.errstate(over="ignore", divide="ignore"):
        lam[risky] = np.minimum(1.0, c * t_star / s_r)
    return lam


def _participation_fixed_point(s: np.ndarray, c: np.ndarray) -> float:
    """Positive root of ``T = || min(s, c T) ||`` given ``||c|| > 1``.

    ``||min(s/T, c)||`` falls monotonically from ``||c||`` to 0, so the root is
    unique. Fleets with ``s_i / c_i <= T`` are saturated (set S), the rest scale
    with ``T``, giving ``T^2 = sum_S s^2 / (1 - sum_U c^2)`` on that interval.
    """
    scale = float(np.max(s))          # the root is homogeneous in s
    s = s / scale
    with np.errstate(divide="ignore", over="ignore"):
        tau = np.where(np.isinf(c), 0.0, s / c)
        c2 = c * c                    # inf only for fleets that are always saturated
    order = np.argsort(tau)
    tau, s, c2 = tau[order], s[order], c2[order]
    free_c2 = np.concatenate([np.cumsum(c2[::-1])[::-1], [0.0]])
    sat_norm = 0.0                    # ||s_S|| without squaring tiny entries
    for j in range(1, len(tau) + 1):
        sat_norm = math.hypot(sat_norm, s[j - 1])
        denom = 1.0 - free_c2[j]
        if denom <= 0:
            continue
        t = sat_norm / math.sqrt(denom)
        upper = tau[j] if j < len(tau) else math.inf
        if tau[j - 1] * (1 - 1e-12) <= t <= upper * (1 + 1e-12):
            return t * scale
    raise ArithmeticError("participation fixed point not bracketed")


def max_joint_schedulable(fleets: Sequence[FleetUncertainty], config: DrccConfig) -> float:
    """Largest ``r_bar`` meeting the joint constraint for the given per-EV capacities.

    With every fleet able to back its own share (``n0 + mu >= k sigma``) this is
    ``sum g a - k ||g sigma||``; otherwise weak fleets are partly or wholly left
    out (see ``optimal_participation``), never going below zero.
    """
    if config.mode is Mode.DISABLED:
        return 0.0
    g, a, s = _arrays(fleets)
    lam = optimal_participation(fleets, config)
    val = float((lam * g) @ a) - config.k * math.hypot(*(lam * g * s))
    return max(0.0, val)


def individual_limit(fleet: FleetUncertainty, config: DrccConfig) -> float:
    """Per-fleet response deliverable with probability ``1 - epsilon`` on its own."""
    if config.mode is Mode.DISABLED:
        return 0.0
    return max(0.0, fleet.g * (fleet.n0 + fleet.mu) - config.k * fleet.g * fleet.sigma)


def total_individual_limit(fleets: Sequence[FleetUncertainty], config: DrccConfig) -> float:
    return sum(individual_limit(f, config) for f in fleets)


def joint_improvement(fleets: Sequence[FleetUncertainty], config: DrccConfig) -> float:
    """Extra response the joint constraint admits over the per-fleet one (unclamped)."""
    g, _, s = _arrays(fleets)
    u = g * s
    # sum - norm computed as sum_{i != j} u_i u_j / (sum + norm) to avoid cancellation
    total = float(np.sum(u))
    norm = float(np.sqrt(np.sum(u * u)))
    if total == 0.0:
        return 0.0
    cross = total * total - float(np.sum(u * u))
    return config.k * max(cross, 0.0) / (total + norm)


def big_m_values(fleets_max: Sequence[FleetUncertainty], config: DrccConfig):
    """Relaxation constants from instance bounds; ``fleets_max[i].g`` is the largest g_i.

    ``m1`` bounds ``k * ||g * sigma||`` and ``m2`` bounds any deliverable ``r_bar``.
    """
    g, a, s = _arrays(fleets_max)
    m1 = config.big_m1 if config.big_m1 is not None else config.k * float(g @ s)
    m2 = (config.big_m2 if config.big_m2 is not None
          else float(g @ (a + BIG_M_SIGMA_MULTIPLE * s)))
    return m1, m2


def needs_relaxation(fleets: Sequence[FleetUncertainty], config: DrccConfig) -> bool:
    """Whether the joint cone can be infeasible at ``r_bar = 0`` for some ``g >= 0``.

    When every fleet satisfies ``n0 + mu >= k * sigma`` the cone always holds at
    ``r_bar = 0`` (norm <= sum), so the binary can be fixed to 0.
    """
    _, a, s = _arrays(fleets)
    return bool(np.any(a < config.k * s))


# --- conic rows ---------------------------------------------------------------

@dataclass
class JointRows:
    b: object                 # binary LinExpr under big-M relaxation, else None
    shares: Optional[list]    # participating capacities under participation relaxation
    soc_name: str
    cap_name: str
    linear: bool


RELAXATIONS = ("participation", "big_m")


def joint_constraint_rows(prog, g_exprs, r_bar, fleets: Sequence[FleetUncertainty],
                          config: DrccConfig, name: str = "drcc",
                          relaxation: str = "participation"):
    """Add the joint constraint for decision capacities ``g_exprs`` to ``prog``.

    ``fleets`` carries the moments; its ``g`` fields are the upper bounds of
    ``g_exprs`` and only feed the big-M constants.

    When some fleet cannot back its own share (``n0 + mu < k sigma``) the cone
    may be infeasible even at ``r_bar = 0`` and needs relaxing:

    ``big_m``: one binary ``b``::

        || k * sigma_i * g_i ||_2 <= sum_i g_i (n0_i + mu_i) - r_bar + M1 * b
        r_bar <= M2 * (1 - b)

    ``participation``: continuous ``0 <= h_i <= g_i`` replace ``g_i`` in the
    cone. Every fleet contributes non-negatively, so counting only ``h_i`` is
    still sufficient, and ``h = 0`` reproduces ``b = 1`` while ``h = g``
    reproduces ``b = 0``.

    With all ``sigma = 0`` the cone degenerates to a linear row.
    """
    if config.mode not in (Mode.JOINT, Mode.DETERMINISTIC):
        raise ValueError(f"joint rows requested in mode {config.mode.value}")
    if relaxation not in RELAXATIONS:
        raise ValueError(f"relaxation must be one of {RELAXATIONS}, got {relaxation!r}")
    k = config.k
    _, a, s = _arrays(fleets)
    m1, m2 = big_m_values(fleets, config)
    relax = needs_relaxation(fleets, config) and m1 > 0
    b, shares = None, None
    caps = list(g_exprs)
    if relax and relaxation == "participation":
        shares = []
        for i, gi in enumerate(g_exprs):
            if a[i] < k * s[i]:
                hi = prog.var(f"{name}.h{i}", 0.0, None)
                prog.add_le(hi - gi, 0.0, name=f"{name}.hcap{i}")
                shares.append(hi)
            else:
                shares.append(gi)
        caps = shares
    v = -r_bar
    for gi, ai in zip(caps, a):
        v = v + ai * gi
    u = [k * si * gi for gi, si in zip(caps, s) if k * si > 0]
    if relax and relaxation == "big_m":
        b = prog.var(f"{name}.b", 0.0, 1.0, binary=True)
        v = v + m1 * b
    soc_name, cap_name = f"{name}.soc", f"{name}.cap"
    if u:
        prog.add_soc(v, u, name=soc_name)
    else:
        prog.add_ge(v, 0.0, name=soc_name)
    if b is not None:
        prog.add_le(r_bar + m2 * b, m2, name=cap_name)
    else:
        prog.add_le(r_bar, m2, name=cap_name)
    return JointRows(b=b, shares=shares, soc_name=soc_name, cap_name=cap_name, linear=not u)


def individual_constraint_rows(prog, g_exprs, r_bar, fleets: Sequence[FleetUncertainty],
                               config: DrccConfig, name: str = "indiv"):
    """Per-fleet linear limits summed into ``r_bar``; returns the per-fleet variables.

    A fleet whose forecast cannot support any response (``n0 + mu <= k sigma``)
    gets its share fixed to zero, the closed-form counterpart of relaxing it.
    """
    if config.mode is not Mode.INDIVIDUAL:
        raise ValueError(f"individual rows requested in mode {config.mode.value}")
    k = config.k
    shares = []
    total = -r_bar
    for i, (gi, f) in enumerate(zip(g_exprs, fleets)):
        coef = f.n0 + f.mu - k * f.sigma
        ri = prog.var(f"{name}.r{i}", 0.0, None if coef > 0 else 0.0)
        if coef > 0:
            prog.add_le(ri - coef * gi, 0.0, name=f"{name}.lim{i}")
        shares.append(ri)
        total = total + ri
    prog.add_eq(total, 0.0, name=f"{name}.sum")
    return shares
