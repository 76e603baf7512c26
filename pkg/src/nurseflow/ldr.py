"""Robust transfer-planning LP with affine decision rules.

The deployment, emergency-excess and shortage recourse decisions are
restricted to affine functions of the demand history (``b0 + sum b1 * zeta``
with coefficients only on past days).  For each demand sample a box of
half-width epsilon is placed around the path and the *average of per-box
worst cases* is minimized.  Each robust constraint ``max_{zeta in box}
beta'zeta <= gamma`` is replaced exactly by a nonnegative dual pair
``(nu, psi)`` with ``nu - psi = beta`` and ``nu'upper - psi'lower <= gamma``;
because the optimal pair ``([beta]+, [-beta]+)`` does not depend on which
box is active, a single pair is shared across all samples and only the box
bounds enter the rows.  Setting epsilon = 0 collapses the model to the
scenario (sample-average) formulation, built independently by
:func:`build_saa_ldr_lp` as a cross-check.

Two generalizations beyond the textbook statement (both exercised by the
rolling-horizon planner): the model may cover only the tail of a week
(``start_day`` > 1) while secondment lengths keep the week-end truncation,
and a nonempty carry-over state enters the capacity and shortage windows as
committed constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import CostParams, NetworkConfig, secondment_matrix
from .lp import LinearProgram
from .uncertainty import UncertaintyBox, enumerate_vertices

__all__ = [
    "LdrModel",
    "LdrSolution",
    "build_sro_ldr_lp",
    "build_saa_ldr_lp",
    "extract_solution",
    "evaluate_ldr",
    "rule_values",
    "worst_case_objective_oracle",
    "saa_objective_oracle",
    "dual_link_residual",
]

DUAL_FAMILIES = ("epi", "cap", "sho", "eme", "nnb", "nnx", "nny")


def _pairs_before(td: int) -> int:
    """Number of (decision day, demand day) pairs strictly before day td."""
    return td * (td + 1) // 2


@dataclass
class LdrModel:
    """Index map and cost coefficients for one decision-rule model.

    Days are 0-based internally; ``start_day`` is the 1-based position of
    local day 0 inside the enclosing week of length ``horizon``.
    """

    network: NetworkConfig
    S: int
    start_day: int
    horizon: int
    num_samples: int
    arcs: list[tuple[int, int]]
    mu: np.ndarray  # (S, A) secondment lengths
    base: np.ndarray  # (S, A) premium * mu + bonus
    emer: np.ndarray  # (S, A) theta * premium * mu + bonus
    s_cost: np.ndarray  # (S, L)
    eta: float
    offsets: dict = field(default_factory=dict)
    fixed_plan: np.ndarray | None = None
    committed_out: np.ndarray | None = None  # (S, L) nurses already away from i
    committed_in: np.ndarray | None = None  # (S, L) nurses already seconded at i

    @property
    def L(self) -> int:
        return self.network.num_locations

    @property
    def A(self) -> int:
        return len(self.arcs)

    # -- variable index arithmetic (all 0-based) ---------------------------

    def ia(self, td, e):
        return self.offsets["a"] + td * self.A + e

    def ib0(self, td, e):
        return self.offsets["b0"] + td * self.A + e

    def ix0(self, td, e):
        return self.offsets["x0"] + td * self.A + e

    def iy0(self, td, i):
        return self.offsets["y0"] + td * self.L + i

    def ib1(self, td, md, l, e):
        return self.offsets["b1"] + (_pairs_before(td) * self.L + md * self.L + l) * self.A + e

    def ix1(self, td, md, l, e):
        return self.offsets["x1"] + (_pairs_before(td) * self.L + md * self.L + l) * self.A + e

    def iy1(self, td, md, l, i):
        return self.offsets["y1"] + (_pairs_before(td) * self.L + md * self.L + l) * self.L + i

    def rule_slice(self, kind: str, td: int, e_or_i: int) -> np.ndarray:
        """Indices of all (md, l) coefficients of one rule, ravel order (md, l)."""
        width = self.A if kind in ("b1", "x1") else self.L
        start = self.offsets[kind] + _pairs_before(td) * self.L * width + e_or_i
        return start + width * np.arange((td + 1) * self.L)

    def dual_index(self, family: str, nu: bool, td: int, unit: int, md: int, l: int) -> int:
        width = self.A if family in ("eme", "nnb", "nnx") else self.L
        off = self.offsets[("nu_" if nu else "psi_") + family]
        if family == "epi":
            return off + md * self.L + l
        return off + _pairs_before(td) * width * self.L + unit * (td + 1) * self.L + md * self.L + l

    def dual_slice(self, family: str, nu: bool, td: int, unit: int) -> np.ndarray:
        """Contiguous duals of one constraint, ravel order (md, l), md <= td."""
        start = self.dual_index(family, nu, td, unit, 0, 0)
        return start + np.arange((td + 1) * self.L)

    # -- away-day windows ---------------------------------------------------

    def out_window(self, td: int, i: int) -> list[tuple[int, int]]:
        """(decision day, arc) pairs whose nurses from i are still away on td."""
        pairs = []
        for e, (o, d) in enumerate(self.arcs):
            if o != i:
                continue
            omega = int(self.network.secondment[o, d])
            for kd in range(max(td - omega + 1, 0), td + 1):
                pairs.append((kd, e))
        return pairs

    def in_window(self, td: int, i: int) -> list[tuple[int, int]]:
        """(decision day, arc) pairs whose nurses are seconded at i on day td."""
        pairs = []
        for e, (o, d) in enumerate(self.arcs):
            if d != i:
                continue
            omega = int(self.network.secondment[o, d])
            for kd in range(max(td - omega + 1, 0), td + 1):
                pairs.append((kd, e))
        return pairs


@dataclass
class LdrSolution:
    """Optimal decision rules plus shared dual variables.

    Rule coefficient arrays are dense with exact zeros wherever a
    coefficient would look at future demand (non-anticipativity).  The dual
    arrays are stored flat in the model's index order; ``objective_value``
    re-evaluates against the variable values within solver tolerance.
    """

    a: np.ndarray  # (S, L, L)
    b0: np.ndarray  # (S, L, L)
    b1: np.ndarray  # (S, S, L, L, L) [t, m, l, i, j]
    x0: np.ndarray
    x1: np.ndarray
    y0: np.ndarray  # (S, L)
    y1: np.ndarray  # (S, S, L, L) [t, m, l, i]
    duals: dict[str, tuple[np.ndarray, np.ndarray]]
    objective_value: float
    model: LdrModel


def _coefficients(network, costs, S, start_day, horizon, arcs):
    ii = np.array([i for i, _ in arcs], dtype=int)
    jj = np.array([j for _, j in arcs], dtype=int)
    mu = secondment_matrix(network, horizon, start_day)[:S, ii, jj]  # (S, A)
    tau = network.transfer_bonus[ii, jj]
    theta = np.array([costs.theta(start_day + td) for td in range(S)])
    s_cost = np.array(
        [[costs.shortage_at(start_day + td, i) for i in range(network.num_locations)] for td in range(S)]
    )
    base = costs.premium * mu + tau[None, :]
    emer = theta[:, None] * costs.premium * mu + tau[None, :]
    return mu, base, emer, s_cost


def _committed(z1, S, L):
    out = np.zeros((S, L))
    inc = np.zeros((S, L))
    if z1 is not None and z1.size:
        kmax = z1.shape[2]
        for td in range(min(S, kmax)):
            out[td] = z1[:, :, td:].sum(axis=(1, 2))
            inc[td] = z1[:, :, td:].sum(axis=(0, 2))
    return out, inc


def _make_model(network, costs, S, num_samples, start_day, horizon, z1, fixed_plan) -> LdrModel:
    if horizon is None:
        horizon = start_day + S - 1
    if start_day + S - 1 > horizon:
        raise ValueError("modeled days run past the end of the enclosing horizon")
    arcs = network.arcs
    if not arcs:
        raise ValueError("network has no allowed arcs")
    mu, base, emer, s_cost = _coefficients(network, costs, S, start_day, horizon, arcs)
    out, inc = _committed(z1, S, network.num_locations)
    return LdrModel(
        network=network,
        S=S,
        start_day=start_day,
        horizon=horizon,
        num_samples=num_samples,
        arcs=arcs,
        mu=mu,
        base=base,
        emer=emer,
        s_cost=s_cost,
        eta=costs.cancellation_pct,
        fixed_plan=None if fixed_plan is None else np.asarray(fixed_plan, dtype=float),
        committed_out=out,
        committed_in=inc,
    )


def _register_rule_blocks(lp: LinearProgram, m: LdrModel, with_duals: bool) -> None:
    S, L, A = m.S, m.L, m.A
    npairs = _pairs_before(S)

    def arc_label(kind):
        def lab(local):
            td, e = divmod(local, A)
            i, j = m.arcs[e]
            return f"{kind}_t{m.start_day + td}_i{i}_j{j}"

        return lab

    def rule_label(kind, width_arcs):
        def lab(local):
            td = 0
            rest = local
            while rest >= (td + 1) * L * (A if width_arcs else L):
                rest -= (td + 1) * L * (A if width_arcs else L)
                td += 1
            pair, unit = divmod(rest, A if width_arcs else L)
            md, l = divmod(pair, L)
            tag = f"i{m.arcs[unit][0]}_j{m.arcs[unit][1]}" if width_arcs else f"i{unit}"
            return f"{kind}_t{m.start_day + td}_m{m.start_day + md}_l{l}_{tag}"

        return lab

    def loc_label(kind):
        def lab(local):
            td, i = divmod(local, L)
            return f"{kind}_t{m.start_day + td}_i{i}"

        return lab

    def dual_label(kind, arcwise):
        width = A if arcwise else L

        def lab(local):
            td, rest = 0, local
            while rest >= width * (td + 1) * L:
                rest -= width * (td + 1) * L
                td += 1
            unit, pair = divmod(rest, (td + 1) * L)
            md, l = divmod(pair, L)
            tag = f"i{m.arcs[unit][0]}_j{m.arcs[unit][1]}" if arcwise else f"i{unit}"
            return f"{kind}_t{m.start_day + td}_{tag}_m{m.start_day + md}_l{l}"

        return lab

    def epi_label(kind):
        def lab(local):
            md, l = divmod(local, L)
            return f"{kind}_m{m.start_day + md}_l{l}"

        return lab

    m.offsets["a"] = lp.add_block("a", S * A, lb=0.0, labeler=arc_label("a"))
    m.offsets["b0"] = lp.add_block("b0", S * A, lb=-np.inf, labeler=arc_label("b0"))
    m.offsets["x0"] = lp.add_block("x0", S * A, lb=-np.inf, labeler=arc_label("x0"))
    m.offsets["y0"] = lp.add_block("y0", S * L, lb=-np.inf, labeler=loc_label("y0"))
    m.offsets["b1"] = lp.add_block("b1", npairs * L * A, lb=-np.inf, labeler=rule_label("b1", True))
    m.offsets["x1"] = lp.add_block("x1", npairs * L * A, lb=-np.inf, labeler=rule_label("x1", True))
    m.offsets["y1"] = lp.add_block("y1", npairs * L * L, lb=-np.inf, labeler=rule_label("y1", False))
    if with_duals:
        sizes = {
            "epi": S * L,
            "cap": npairs * L * L,
            "sho": npairs * L * L,
            "eme": npairs * L * A,
            "nnb": npairs * L * A,
            "nnx": npairs * L * A,
            "nny": npairs * L * L,
        }
        for fam in DUAL_FAMILIES:
            for side in ("nu", "psi"):
                name = f"{side}_{fam}"
                if fam == "epi":
                    labeler = epi_label(name)
                else:
                    labeler = dual_label(name, fam in ("eme", "nnb", "nnx"))
                m.offsets[name] = lp.add_block(name, sizes[fam], lb=0.0, labeler=labeler)
    if m.fixed_plan is not None:
        cols = []
        vals = []
        for td in range(S):
            for e, (i, j) in enumerate(m.arcs):
                cols.append(m.ia(td, e))
                vals.append(m.fixed_plan[td, i, j])
        lp.set_bounds(np.array(cols), np.array(vals), np.array(vals))


def _objective_rule_part(lp: LinearProgram, m: LdrModel) -> None:
    """Terms that do not depend on the boxes: a, b0, x0, y0.

    The planned bonus-and-premium charge and the (eta - 1) cancellation
    refund both multiply ``a``, which nets to eta * base; deploying restores
    the refunded (1 - eta) share on b, and the emergency premium rides on x.
    """
    S, L, A = m.S, m.L, m.A
    eta = m.eta
    a_cols = m.offsets["a"] + np.arange(S * A)
    lp.add_objective(a_cols, (eta * m.base).ravel())
    lp.add_objective(m.offsets["b0"] + np.arange(S * A), ((1 - eta) * m.base).ravel())
    lp.add_objective(m.offsets["x0"] + np.arange(S * A), (m.emer + (eta - 1) * m.base).ravel())
    lp.add_objective(m.offsets["y0"] + np.arange(S * L), m.s_cost.ravel())


def build_sro_ldr_lp(
    network: NetworkConfig,
    costs: CostParams,
    boxes: Sequence[UncertaintyBox],
    initial_state: np.ndarray | None = None,
    fixed_plan: np.ndarray | None = None,
    start_day: int = 1,
    horizon: int | None = None,
) -> tuple[LinearProgram, LdrModel]:
    """Deterministic LP whose optimum is the average worst-case cost.

    ``boxes`` carries one demand box per sample over the modeled days.
    ``initial_state`` threads committed secondments into the capacity and
    shortage windows; ``fixed_plan`` pins the planned decisions (daily
    re-optimization with a committed weekly plan).  ``start_day``/``horizon``
    place the modeled days inside the enclosing week so secondment lengths
    truncate at the week end, not the sub-horizon end.
    """
    if not boxes:
        raise ValueError("need at least one uncertainty box")
    S = boxes[0].horizon
    L = network.num_locations
    for box in boxes:
        if box.horizon != S or box.num_locations != L:
            raise ValueError("all boxes must share the modeled (days, locations) shape")
    if fixed_plan is not None and np.asarray(fixed_plan).shape != (S, L, L):
        raise ValueError("fixed plan must cover exactly the modeled days")
    m = _make_model(network, costs, S, len(boxes), start_day, horizon, initial_state, fixed_plan)
    A = m.A
    K = network.capacity.astype(float)
    eta = m.eta
    uppers = [np.asarray(b.upper) for b in boxes]
    lowers = [np.asarray(b.lower) for b in boxes]

    lp = LinearProgram()
    _register_rule_blocks(lp, m, with_duals=True)
    _objective_rule_part(lp, m)
    n_inv = 1.0 / len(boxes)
    ubar = n_inv * sum(uppers)
    lbar = n_inv * sum(lowers)
    lp.add_objective(m.offsets["nu_epi"] + np.arange(S * L), ubar.ravel())
    lp.add_objective(m.offsets["psi_epi"] + np.arange(S * L), -lbar.ravel())

    cx1 = m.emer + (eta - 1) * m.base  # objective weight of the excess rule
    cb1 = (1 - eta) * m.base  # weight restored on the deployment rule

    # Worst-case objective linkage: nu - psi equals the total objective
    # sensitivity to demand (md, l) across all later rule days.
    for md in range(S):
        for l in range(L):
            cols = [m.dual_index("epi", True, 0, 0, md, l), m.dual_index("epi", False, 0, 0, md, l)]
            vals = [1.0, -1.0]
            for kd in range(md, S):
                xs = m.ix1(kd, md, l, 0) + np.arange(A)
                bs = m.ib1(kd, md, l, 0) + np.arange(A)
                ys = m.iy1(kd, md, l, 0) + np.arange(L)
                cols.extend(xs.tolist() + bs.tolist() + ys.tolist())
                vals.extend((-cx1[kd]).tolist() + (-cb1[kd]).tolist() + (-m.s_cost[kd]).tolist())
            lp.add_eq(np.array(cols), np.array(vals), 0.0)

    out_windows = [[m.out_window(td, i) for i in range(L)] for td in range(S)]
    in_windows = [[m.in_window(td, i) for i in range(L)] for td in range(S)]

    # Planning-stage capacity (only while the plan is still a decision).
    if m.fixed_plan is None:
        for td in range(S):
            for i in range(L):
                win = out_windows[td][i]
                if not win:
                    continue
                cols = np.array([m.ia(kd, e) for kd, e in win])
                lp.add_le(cols, np.ones(len(win)), K[i] - m.committed_out[td, i])

    def robust_le(family, td, unit, extra_cols, extra_vals, rhs_base):
        """One robust row per box plus the shared dual-link equalities."""
        nu = m.dual_slice(family, True, td, unit)
        psi = m.dual_slice(family, False, td, unit)
        for n in range(len(boxes)):
            u = uppers[n][: td + 1].ravel()
            lo = lowers[n][: td + 1].ravel()
            cols = np.concatenate([nu, psi, extra_cols])
            vals = np.concatenate([u, -lo, extra_vals])
            lp.add_le(cols, vals, rhs_base[n] if isinstance(rhs_base, (list, np.ndarray)) else rhs_base)

    # Deployment capacity: everyone away from i on day td (committed state
    # plus in-window rule values) must fit inside the home staff.
    for td in range(S):
        for i in range(L):
            win = out_windows[td][i]
            b0_cols = np.array([m.ib0(kd, e) for kd, e in win], dtype=np.int64)
            robust_le(
                "cap",
                td,
                i,
                b0_cols,
                np.ones(len(win)),
                K[i] - m.committed_out[td, i],
            )
            for md in range(td + 1):
                for l in range(L):
                    cols = [m.dual_index("cap", True, td, i, md, l), m.dual_index("cap", False, td, i, md, l)]
                    vals = [1.0, -1.0]
                    for kd, e in win:
                        if kd >= md:
                            cols.append(m.ib1(kd, md, l, e))
                            vals.append(-1.0)
                    lp.add_eq(np.array(cols), np.array(vals), 0.0)

    # Shortage epigraph: demand minus on-site staff stays below the y rule.
    for td in range(S):
        for i in range(L):
            wout = out_windows[td][i]
            win = in_windows[td][i]
            extra_cols = np.array(
                [m.ib0(kd, e) for kd, e in wout]
                + [m.ib0(kd, e) for kd, e in win]
                + [m.iy0(td, i)],
                dtype=np.int64,
            )
            extra_vals = np.concatenate([np.ones(len(wout)), -np.ones(len(win)), [-1.0]])
            robust_le(
                "sho",
                td,
                i,
                extra_cols,
                extra_vals,
                K[i] - m.committed_out[td, i] + m.committed_in[td, i],
            )
            for md in range(td + 1):
                for l in range(L):
                    cols = [m.dual_index("sho", True, td, i, md, l), m.dual_index("sho", False, td, i, md, l)]
                    vals = [1.0, -1.0]
                    for kd, e in wout:
                        if kd >= md:
                            cols.append(m.ib1(kd, md, l, e))
                            vals.append(-1.0)
                    for kd, e in win:
                        if kd >= md:
                            cols.append(m.ib1(kd, md, l, e))
                            vals.append(1.0)
                    cols.append(m.iy1(td, md, l, i))
                    vals.append(1.0)
                    rhs = 1.0 if (md == td and l == i) else 0.0
                    lp.add_eq(np.array(cols), np.array(vals), rhs)

    # Emergency excess definition and the three nonnegativity families.
    for td in range(S):
        for e in range(A):
            robust_le(
                "eme",
                td,
                e,
                np.array([m.ib0(td, e), m.ix0(td, e), m.ia(td, e)], dtype=np.int64),
                np.array([1.0, -1.0, -1.0]),
                0.0,
            )
            robust_le("nnb", td, e, np.array([m.ib0(td, e)]), np.array([-1.0]), 0.0)
            robust_le("nnx", td, e, np.array([m.ix0(td, e)]), np.array([-1.0]), 0.0)
            for md in range(td + 1):
                for l in range(L):
                    b1c = m.ib1(td, md, l, e)
                    x1c = m.ix1(td, md, l, e)
                    lp.add_eq(
                        np.array(
                            [
                                m.dual_index("eme", True, td, e, md, l),
                                m.dual_index("eme", False, td, e, md, l),
                                b1c,
                                x1c,
                            ]
                        ),
                        np.array([1.0, -1.0, -1.0, 1.0]),
                        0.0,
                    )
                    lp.add_eq(
                        np.array([m.dual_index("nnb", True, td, e, md, l), m.dual_index("nnb", False, td, e, md, l), b1c]),
                        np.array([1.0, -1.0, 1.0]),
                        0.0,
                    )
                    lp.add_eq(
                        np.array([m.dual_index("nnx", True, td, e, md, l), m.dual_index("nnx", False, td, e, md, l), x1c]),
                        np.array([1.0, -1.0, 1.0]),
                        0.0,
                    )
        for i in range(L):
            robust_le("nny", td, i, np.array([m.iy0(td, i)]), np.array([-1.0]), 0.0)
            for md in range(td + 1):
                for l in range(L):
                    lp.add_eq(
                        np.array(
                            [
                                m.dual_index("nny", True, td, i, md, l),
                                m.dual_index("nny", False, td, i, md, l),
                                m.iy1(td, md, l, i),
                            ]
                        ),
                        np.array([1.0, -1.0, 1.0]),
                        0.0,
                    )

    return lp, m


def build_saa_ldr_lp(
    network: NetworkConfig,
    costs: CostParams,
    paths: Sequence[np.ndarray],
    initial_state: np.ndarray | None = None,
    fixed_plan: np.ndarray | None = None,
    start_day: int = 1,
    horizon: int | None = None,
) -> tuple[LinearProgram, LdrModel]:
    """Scenario formulation: same decision rules, constraints pinned at the samples.

    Mathematically the epsilon = 0 special case of the robust model, but
    constructed without any dual machinery so the two can cross-check each
    other.
    """
    paths = [np.asarray(p, dtype=float) for p in paths]
    if not paths:
        raise ValueError("need at least one scenario path")
    L, S = paths[0].shape
    m = _make_model(network, costs, S, len(paths), start_day, horizon, initial_state, fixed_plan)
    if L != m.L:
        raise ValueError("scenario paths do not match the network size")
    A = m.A
    K = network.capacity.astype(float)
    eta = m.eta
    lp = LinearProgram()
    _register_rule_blocks(lp, m, with_duals=False)
    _objective_rule_part(lp, m)

    n_inv = 1.0 / len(paths)
    cx1 = m.emer + (eta - 1) * m.base
    cb1 = (1 - eta) * m.base

    # Rule coefficients hit the objective through each scenario's demand.
    for zeta in paths:
        zT = zeta.T  # (S, L)
        for td in range(S):
            hist = zT[: td + 1].ravel()  # (md, l) raveled
            for e in range(A):
                lp.add_objective(m.rule_slice("x1", td, e), n_inv * cx1[td, e] * hist)
                lp.add_objective(m.rule_slice("b1", td, e), n_inv * cb1[td, e] * hist)
            for i in range(L):
                lp.add_objective(m.rule_slice("y1", td, i), n_inv * m.s_cost[td, i] * hist)

    out_windows = [[m.out_window(td, i) for i in range(L)] for td in range(S)]
    in_windows = [[m.in_window(td, i) for i in range(L)] for td in range(S)]

    if m.fixed_plan is None:
        for td in range(S):
            for i in range(L):
                win = out_windows[td][i]
                if win:
                    cols = np.array([m.ia(kd, e) for kd, e in win])
                    lp.add_le(cols, np.ones(len(win)), K[i] - m.committed_out[td, i])

    def rule_value_cols(kind, td, e_or_i, zT, sign=1.0):
        """Columns/values of one rule evaluated at a scenario."""
        width = m.A if kind in ("b1", "x1") else m.L
        intercept = {"b1": "b0", "x1": "x0", "y1": "y0"}[kind]
        icol = m.offsets[intercept] + td * (m.A if intercept != "y0" else m.L) + e_or_i
        cols = np.concatenate([[icol], m.rule_slice(kind, td, e_or_i)])
        vals = np.concatenate([[sign], sign * zT[: td + 1].ravel()])
        return cols, vals

    for n, zeta in enumerate(paths):
        zT = zeta.T
        for td in range(S):
            for i in range(L):
                cols_list, vals_list = [], []
                for kd, e in out_windows[td][i]:
                    c, v = rule_value_cols("b1", kd, e, zT, 1.0)
                    cols_list.append(c)
                    vals_list.append(v)
                if cols_list:
                    lp.add_le(
                        np.concatenate(cols_list),
                        np.concatenate(vals_list),
                        K[i] - m.committed_out[td, i],
                    )
                # shortage at the sample point
                cols_list, vals_list = [], []
                for kd, e in out_windows[td][i]:
                    c, v = rule_value_cols("b1", kd, e, zT, 1.0)
                    cols_list.append(c)
                    vals_list.append(v)
                for kd, e in in_windows[td][i]:
                    c, v = rule_value_cols("b1", kd, e, zT, -1.0)
                    cols_list.append(c)
                    vals_list.append(v)
                c, v = rule_value_cols("y1", td, i, zT, -1.0)
                cols_list.append(c)
                vals_list.append(v)
                lp.add_le(
                    np.concatenate(cols_list),
                    np.concatenate(vals_list),
                    K[i] - m.committed_out[td, i] + m.committed_in[td, i] - zT[td, i],
                )
                cy, vy = rule_value_cols("y1", td, i, zT, -1.0)
                lp.add_le(cy, vy, 0.0)
            for e in range(A):
                cb, vb = rule_value_cols("b1", td, e, zT, 1.0)
                cx, vx = rule_value_cols("x1", td, e, zT, -1.0)
                lp.add_le(
                    np.concatenate([cb, cx, [m.ia(td, e)]]),
                    np.concatenate([vb, vx, [-1.0]]),
                    0.0,
                )
                lp.add_le(cb, -vb, 0.0)
                cxp, vxp = rule_value_cols("x1", td, e, zT, 1.0)
                lp.add_le(cxp, -vxp, 0.0)

    return lp, m


def extract_solution(x: np.ndarray, m: LdrModel, objective: float) -> LdrSolution:
    """Decode the flat solver vector into structured rule arrays."""
    S, L, A = m.S, m.L, m.A

    def arc_scatter(flat):
        out = np.zeros((S, L, L))
        for e, (i, j) in enumerate(m.arcs):
            out[:, i, j] = flat[:, e]
        return out

    def grab(name, count):
        off = m.offsets[name]
        return x[off : off + count]

    a = arc_scatter(grab("a", S * A).reshape(S, A))
    b0 = arc_scatter(grab("b0", S * A).reshape(S, A))
    x0 = arc_scatter(grab("x0", S * A).reshape(S, A))
    y0 = grab("y0", S * L).reshape(S, L)
    b1 = np.zeros((S, S, L, L, L))
    x1 = np.zeros((S, S, L, L, L))
    y1 = np.zeros((S, S, L, L))
    for td in range(S):
        b_block = grab("b1", _pairs_before(S) * L * A)[
            _pairs_before(td) * L * A : (_pairs_before(td) + td + 1) * L * A
        ].reshape(td + 1, L, A)
        x_block = grab("x1", _pairs_before(S) * L * A)[
            _pairs_before(td) * L * A : (_pairs_before(td) + td + 1) * L * A
        ].reshape(td + 1, L, A)
        y_block = grab("y1", _pairs_before(S) * L * L)[
            _pairs_before(td) * L * L : (_pairs_before(td) + td + 1) * L * L
        ].reshape(td + 1, L, L)
        for e, (i, j) in enumerate(m.arcs):
            b1[td, : td + 1, :, i, j] = b_block[:, :, e]
            x1[td, : td + 1, :, i, j] = x_block[:, :, e]
        y1[td, : td + 1] = y_block
    duals = {}
    for fam in DUAL_FAMILIES:
        if "nu_" + fam not in m.offsets:
            continue
        width = A if fam in ("eme", "nnb", "nnx") else L
        size = S * L if fam == "epi" else _pairs_before(S) * L * width
        duals[fam] = (grab("nu_" + fam, size).copy(), grab("psi_" + fam, size).copy())
    return LdrSolution(a=a, b0=b0, b1=b1, x0=x0, x1=x1, y0=y0, y1=y1, duals=duals, objective_value=objective, model=m)


def rule_values(sol: LdrSolution, zeta: np.ndarray):
    """Evaluate the affine rules along a demand path (L, S): returns (b, x, y)."""
    zT = np.asarray(zeta, dtype=float)
    b = sol.b0 + np.einsum("tmlij,lm->tij", sol.b1, zT)
    x = sol.x0 + np.einsum("tmlij,lm->tij", sol.x1, zT)
    y = sol.y0 + np.einsum("tmli,lm->ti", sol.y1, zT)
    return b, x, y


def evaluate_ldr(sol: LdrSolution, realized: np.ndarray, t: int) -> np.ndarray:
    """Deployment rule for (1-based local) day t at the realized history.

    Values may be negative or capacity-violating away from the training
    samples; the planner rounds and repairs before implementing.
    """
    realized = np.asarray(realized, dtype=float)
    if realized.shape[1] < t:
        raise ValueError("realized history shorter than the requested day")
    td = t - 1
    out = sol.b0[td].copy()
    out += np.einsum("mlij,lm->ij", sol.b1[td, : td + 1], realized[:, : td + 1])
    return out


def _stage_cost_at(sol: LdrSolution, zeta: np.ndarray) -> float:
    """Recourse objective at one demand path, decision rules taken literally."""
    m = sol.model
    b, x, y = rule_values(sol, zeta)
    eta = m.eta
    total = 0.0
    for e, (i, j) in enumerate(m.arcs):
        total += float(
            np.sum(m.emer[:, e] * x[:, i, j])
            + np.sum((eta - 1) * m.base[:, e] * (x[:, i, j] - b[:, i, j] + sol.a[:, i, j]))
        )
    total += float(np.sum(m.s_cost * y))
    return total


def planned_term(sol: LdrSolution) -> float:
    m = sol.model
    return float(sum(np.sum(m.base[:, e] * sol.a[:, i, j]) for e, (i, j) in enumerate(m.arcs)))


def worst_case_objective_oracle(
    sol: LdrSolution, boxes: Sequence[UncertaintyBox], network: NetworkConfig, costs: CostParams
) -> float:
    """Average of per-box worst cases by brute-force corner enumeration.

    Independent route to the model objective: must match the LP optimum at
    the LP's optimal point.  Guarded by the vertex enumerator's dimension
    limit.
    """
    del network, costs  # coefficients live in sol.model, kept for signature symmetry
    total = 0.0
    for box in boxes:
        total += max(_stage_cost_at(sol, v) for v in enumerate_vertices(box))
    return planned_term(sol) + total / len(boxes)


def saa_objective_oracle(sol: LdrSolution, paths: Sequence[np.ndarray]) -> float:
    """Plain sample average of the recourse objective at the given paths."""
    avg = sum(_stage_cost_at(sol, np.asarray(p, dtype=float)) for p in paths) / len(paths)
    return planned_term(sol) + avg


def dual_link_residual(sol: LdrSolution) -> dict[str, float]:
    """Max violation of each nu - psi = beta linkage, recomputed from the rules.

    The betas are the demand sensitivities of the objective (epi), the
    capacity windows (cap), the shortage rows (sho, including the unit
    demand coefficient), the excess definition (eme) and the three
    nonnegativity families.
    """
    m = sol.model
    S, L = m.S, m.L
    eta = m.eta
    cx1 = m.emer + (eta - 1) * m.base
    cb1 = (1 - eta) * m.base
    res: dict[str, float] = {}

    def beta_from(fam, td, unit, md, l):
        if fam == "epi":
            val = 0.0
            for kd in range(md, S):
                for e, (i, j) in enumerate(m.arcs):
                    val += cx1[kd, e] * sol.x1[kd, md, l, i, j] + cb1[kd, e] * sol.b1[kd, md, l, i, j]
                val += float(np.sum(m.s_cost[kd] * sol.y1[kd, md, l]))
            return val
        if fam == "cap":
            return sum(
                sol.b1[kd, md, l, m.arcs[e][0], m.arcs[e][1]]
                for kd, e in m.out_window(td, unit)
                if kd >= md
            )
        if fam == "sho":
            val = sum(
                sol.b1[kd, md, l, m.arcs[e][0], m.arcs[e][1]]
                for kd, e in m.out_window(td, unit)
                if kd >= md
            )
            val -= sum(
                sol.b1[kd, md, l, m.arcs[e][0], m.arcs[e][1]]
                for kd, e in m.in_window(td, unit)
                if kd >= md
            )
            val -= sol.y1[td, md, l, unit]
            return val + (1.0 if (md == td and l == unit) else 0.0)
        i, j = m.arcs[unit]
        if fam == "eme":
            return sol.b1[td, md, l, i, j] - sol.x1[td, md, l, i, j]
        if fam == "nnb":
            return -sol.b1[td, md, l, i, j]
        if fam == "nnx":
            return -sol.x1[td, md, l, i, j]
        raise ValueError(fam)

    for fam in DUAL_FAMILIES:
        if fam not in sol.duals:
            continue
        nu, psi = sol.duals[fam]
        worst = 0.0
        if fam == "epi":
            for md in range(S):
                for l in range(L):
                    idx = md * L + l
                    worst = max(worst, abs(nu[idx] - psi[idx] - beta_from(fam, 0, 0, md, l)))
        else:
            units = range(m.A) if fam in ("eme", "nnb", "nnx") else range(L)
            for td in range(S):
                for unit in units:
                    for md in range(td + 1):
                        for l in range(L):
                            idx = m.dual_index(fam, True, td, unit, md, l) - m.offsets["nu_" + fam]
                            if fam == "nny":
                                beta = -sol.y1[td, md, l, unit]
                            else:
                                beta = beta_from(fam, td, unit, md, l)
                            worst = max(worst, abs(nu[idx] - psi[idx] - beta))
        res[fam] = worst
    return res
