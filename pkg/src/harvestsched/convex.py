"""Verified solvers for the two convex blocks and the alternating driver.

With shares fixed, the power problem maximizes the log-sum utility under
cumulative energy budgets; with powers fixed, the time problem maximizes it
over per-slot share simplices.  Both are solved by a damped Newton method on
a shrinking log-barrier.  The solver is deliberately decoupled from its
certificate: every solution is checked through explicit KKT residuals, with
multipliers either taken from the barrier or rebuilt from the candidate
point alone, so any ascent scheme could be swapped in behind the same
contract.

The alternating driver runs the time block first, then the power block, and
never accepts a half-step that lowers utility, so traces are monotone by
construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    LN2,
    TOL_ZERO,
    Instance,
    Schedule,
    check_feasibility,
    rate_matrix,
    score,
    _check_dims,
)
from .structure import virtual_harvests

_ARMIJO = 1e-4
_BOUNDARY_FRAC = 0.995
_MAX_NEWTON_PER_STAGE = 100


class NonconvergenceError(RuntimeError):
    """Solver ran out of iterations; carries the best iterate and residual."""

    def __init__(self, message: str, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class DegenerateShareError(ValueError):
    """A user's shares give it zero bits for every feasible power vector."""


class InfeasiblePointError(ValueError):
    """Candidate point is too far from primal feasibility to certify."""


class InfeasibleStartError(ValueError):
    """The initial schedule handed to the alternating driver is infeasible."""


@dataclass(frozen=True)
class SolverConfig:
    tol_kkt: float = 1e-6
    tol_utility: float = 1e-8
    max_inner_iters: int = 10_000
    max_bcd_rounds: int = 200
    step_shrink: float = 0.5

    def __post_init__(self):
        if not (self.tol_kkt > 0 and self.tol_utility > 0):
            raise ValueError("tolerances must be positive")
        if not (self.max_inner_iters > 0 and self.max_bcd_rounds > 0):
            raise ValueError("iteration limits must be positive")
        if not (0.0 < self.step_shrink < 1.0):
            raise ValueError("step_shrink must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class KktResidual:
    """Worst-case optimality residuals plus the multipliers that achieve them.

    ``multipliers`` maps names to nonnegative vectors: for the power problem
    ``lambda`` (cumulative energy) and ``mu`` (power nonnegativity); for the
    time problem ``lambda`` (per-slot time), ``mu`` (share nonnegativity,
    N x K) and ``mu_eps`` (minimum total share).  All residuals are in log2
    utility units.
    """

    stationarity_max: float
    complementarity_max: float
    primal_violation_max: float
    multipliers: dict

    @property
    def max_residual(self) -> float:
        return max(self.stationarity_max, self.complementarity_max, self.primal_violation_max)

    def certified(self, tol: float) -> bool:
        return self.max_residual <= tol


@dataclass(frozen=True, eq=False)
class BcdTrace:
    """Utility trajectory of one alternating run; utilities[0] is the start."""

    utilities: tuple
    rounds_used: int
    converged: bool
    warnings: tuple = ()
    schedules: tuple = ()


# ---------------------------------------------------------------------------
# shared pieces

def _bits_per_user(rates: np.ndarray, tau: np.ndarray) -> np.ndarray:
    return (tau * rates).sum(axis=1)


def power_utility_gradient(inst: Instance, shares_tau, powers_p) -> np.ndarray:
    """Gradient of the log2-sum utility with respect to the slot powers."""
    tau = np.asarray(shares_tau, dtype=float)
    p = np.maximum(np.asarray(powers_p, dtype=float), 0.0)
    L = inst.norm_gains
    W = inst.bandwidth_w_hz
    ln_terms = np.log1p(np.outer(L, p))
    A_nat = (tau * ln_terms).sum(axis=1) * (W / LN2)  # bits
    if np.any(A_nat <= 0):
        raise DegenerateShareError("a user receives zero bits at this point")
    dA = tau * (W / LN2) * L[:, None] / (1.0 + np.outer(L, p))
    return (dA / A_nat[:, None]).sum(axis=0) / LN2


def _validate_shares(inst: Instance, tau: np.ndarray) -> None:
    T = inst.slot_length_t
    if tau.shape != (inst.n_users, inst.n_slots):
        raise ValueError(f"share matrix shape {tau.shape} does not match instance")
    if np.any(tau < -TOL_ZERO):
        raise ValueError("shares must be nonnegative")
    if np.any(np.abs(tau.sum(axis=0) - T) > max(inst.tol_time, 1e-7 * T)):
        raise ValueError("per-slot shares must sum to the slot length")
    if np.any(tau.sum(axis=1) < inst.epsilon_share - 1e-7 * T):
        raise ValueError("every user must keep at least the minimum total share")


def _validate_powers(inst: Instance, p: np.ndarray) -> np.ndarray:
    if p.shape != (inst.n_slots,):
        raise ValueError(f"expected {inst.n_slots} powers, got shape {p.shape}")
    if np.any(p < -TOL_ZERO):
        raise ValueError("powers must be nonnegative")
    p = np.maximum(p, 0.0)
    spent = np.cumsum(p) * inst.slot_length_t
    if np.any(spent > inst.cum_harvests + max(inst.tol_energy, 1e-7 * inst.total_harvest)):
        raise ValueError("powers violate the cumulative energy budget")
    return p


# ---------------------------------------------------------------------------
# time block: fixed powers, optimize shares over per-slot simplices

def solve_time(inst: Instance, powers_p, cfg: SolverConfig | None = None, initial_shares=None):
    """Optimal time shares for fixed powers, with a KKT certificate.

    Returns ``(shares_tau, KktResidual)``.  The barrier keeps all shares
    strictly positive, forcing a deterministic interior optimum (the analytic
    center when the optimal face is flat); per-slot sums are exact on return.
    """
    cfg = cfg or SolverConfig()
    p = _validate_powers(inst, np.asarray(powers_p, dtype=float))
    if not np.any(p > 0):
        raise ValueError("all powers are zero; the time block is vacuous")
    rates = rate_matrix(inst, p).rates_r
    N, K = rates.shape
    T, eps = inst.slot_length_t, inst.epsilon_share

    tau = np.full((N, K), T / N)
    if initial_shares is not None:
        init = np.asarray(initial_shares, dtype=float)
        if init.shape == (N, K) and np.all(np.isfinite(init)):
            blended = 0.9 * np.maximum(init, 0.0) + 0.1 * tau
            blended *= T / blended.sum(axis=0, keepdims=True)
            if np.all(blended > 0):
                tau = blended

    sigma = 1.0
    sigma_final = cfg.tol_kkt * LN2 / 100.0
    res_final = cfg.tol_kkt * LN2 * 1e-3
    iters = 0
    while True:
        res_tol = res_final if sigma <= sigma_final else max(res_final, sigma * 1e-2)
        for _ in range(_MAX_NEWTON_PER_STAGE):
            A = _bits_per_user(rates, tau)
            s = tau.sum(axis=1)
            grad = rates / A[:, None] + sigma / tau + (sigma / (s - eps))[:, None]
            slot_price = grad.mean(axis=0)
            if np.abs(grad - slot_price[None, :]).max() <= res_tol:
                break
            iters += 1
            if iters > cfg.max_inner_iters:
                raise NonconvergenceError(
                    "time block exceeded the inner iteration budget",
                    best=tau,
                    residual=float(np.abs(grad - slot_price[None, :]).max()),
                )
            d = _newton_step_time(rates, tau, A, s, grad, sigma, eps, N, K)
            tau = _line_search_time(rates, tau, d, grad, sigma, eps, T, cfg.step_shrink)
        if sigma <= sigma_final:
            break
        sigma = max(sigma * 0.1, sigma_final)

    tau = tau * (T / tau.sum(axis=0, keepdims=True))  # exact slot sums
    # certify through the reconstruction path: it rebuilds multipliers from
    # the point alone, which stays accurate even when binding constraints
    # make the barrier's own sigma/slack multipliers ill-conditioned
    return tau, kkt_residual_time(inst, p, tau)


def _newton_step_time(rates, tau, A, s, grad, sigma, eps, N, K):
    nk = N * K
    H = np.zeros((nk, nk))
    for n in range(N):
        sl = slice(n * K, (n + 1) * K)
        rn = rates[n]
        block = -np.outer(rn, rn) / (A[n] * A[n])
        block -= sigma / (s[n] - eps) ** 2
        block[np.diag_indices(K)] -= sigma / (tau[n] * tau[n])
        H[sl, sl] = block
    kkt = np.zeros((nk + K, nk + K))
    kkt[:nk, :nk] = H
    for t in range(K):
        rows = np.arange(N) * K + t  # the shares of slot t in the raveled layout
        kkt[rows, nk + t] = 1.0
        kkt[nk + t, rows] = 1.0
    rhs = np.concatenate([-grad.ravel(), np.zeros(K)])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:nk].reshape(N, K)


def _line_search_time(rates, tau, d, grad, sigma, eps, T, shrink):
    def phi(x):
        bits = _bits_per_user(rates, x)
        s = x.sum(axis=1)
        if np.any(bits <= 0) or np.any(x <= 0) or np.any(s <= eps):
            return -math.inf
        return float(np.log(bits).sum() + sigma * np.log(x).sum() + sigma * np.log(s - eps).sum())

    alpha = 1.0
    neg = d < 0
    if np.any(neg):
        alpha = min(alpha, _BOUNDARY_FRAC * float((-tau[neg] / d[neg]).min()))
    ds = d.sum(axis=1)
    shrinking = ds < 0
    if np.any(shrinking):
        alpha = min(alpha, _BOUNDARY_FRAC * float(((eps - tau.sum(axis=1))[shrinking] / ds[shrinking]).min()))
    base = phi(tau)
    slope = float((grad * d).sum())
    # near convergence the merit change drops below evaluation noise, so a
    # step is also accepted when it does not measurably decrease the merit
    noise = 1e-11 * (1.0 + abs(base))
    while alpha > 1e-16:
        cand = tau + alpha * d
        val = phi(cand)
        if val >= base + _ARMIJO * alpha * slope or val >= base - noise:
            return cand
        alpha *= shrink
    return tau


def kkt_residual_time(inst: Instance, powers_p, shares_tau, multipliers: dict | None = None) -> KktResidual:
    """KKT residuals of a time allocation for fixed powers.

    Without supplied multipliers, the tightest dual-feasible ones are
    reconstructed from the point itself: each slot's price is the best
    marginal value among its users and every share's nonnegativity
    multiplier absorbs its gap to that price.  Stationarity is then exact by
    construction, so non-optimality surfaces as complementarity (a user
    holding time in a slot it does not price).
    """
    p = np.maximum(np.asarray(powers_p, dtype=float), 0.0)
    tau = np.asarray(shares_tau, dtype=float)
    T, eps = inst.slot_length_t, inst.epsilon_share
    if tau.shape != (inst.n_users, inst.n_slots):
        raise ValueError(f"share matrix shape {tau.shape} does not match instance")
    loose = 1e-6 * T
    if np.any(tau < -loose) or np.any(np.abs(tau.sum(axis=0) - T) > loose):
        raise InfeasiblePointError("share matrix is too far from feasibility to certify")
    rates = rate_matrix(inst, p).rates_r
    A = _bits_per_user(rates, tau)
    if np.any(A <= 0):
        raise DegenerateShareError("a user receives zero bits; the utility gradient is undefined")
    values = rates / (A[:, None] * LN2)
    row = tau.sum(axis=1)

    if multipliers is None:
        lam = values.max(axis=0)
        mu = lam[None, :] - values
        mu_eps = np.zeros(inst.n_users)
        multipliers = {"lambda": lam, "mu": mu, "mu_eps": mu_eps}
    lam = np.asarray(multipliers["lambda"], dtype=float)
    mu = np.asarray(multipliers["mu"], dtype=float)
    mu_eps = np.asarray(multipliers.get("mu_eps", np.zeros(inst.n_users)), dtype=float)

    stationarity = np.abs(values + mu + mu_eps[:, None] - lam[None, :]).max()
    complementarity = max(
        float(np.abs(mu * tau).max()),
        float(np.abs(mu_eps * (row - eps)).max()),
    )
    primal = max(
        float(max(0.0, -tau.min())),
        float(np.abs(tau.sum(axis=0) - T).max()),
        float(max(0.0, (eps - row).max())),
    )
    return KktResidual(
        stationarity_max=float(stationarity),
        complementarity_max=float(complementarity),
        primal_violation_max=float(primal),
        multipliers=multipliers,
    )


# ---------------------------------------------------------------------------
# power block: fixed shares, optimize powers under cumulative energy budgets

def solve_power(inst: Instance, shares_tau, cfg: SolverConfig | None = None, initial_powers=None):
    """Optimal powers for fixed shares, with a KKT certificate.

    Returns ``(powers_p, KktResidual)``.  Slots whose cumulative harvest is
    still zero are pinned to zero power; the rest are solved by barrier
    Newton, so the unique optimum of this strictly concave block is reached
    regardless of the starting point.
    """
    cfg = cfg or SolverConfig()
    tau = np.asarray(shares_tau, dtype=float)
    _validate_shares(inst, tau)
    tau = np.maximum(tau, 0.0)
    T = inst.slot_length_t
    K = inst.n_slots
    C = inst.cum_harvests
    L = inst.norm_gains
    W = inst.bandwidth_w_hz

    t0 = int(np.argmax(C > 0))  # zero cumulative harvest forms a prefix
    free = slice(t0, K)
    if np.any(tau[:, free].sum(axis=1) <= 0):
        raise DegenerateShareError(
            "a user has no share on any slot that can carry power; its utility "
            "would be -inf for every feasible power vector"
        )

    stair = virtual_harvests(inst).virtual_e / T
    p_free = 0.9 * stair[free]
    if initial_powers is not None:
        init = np.asarray(initial_powers, dtype=float)
        if init.shape == (K,) and np.all(np.isfinite(init)):
            cand = 0.9 * np.maximum(init[free], 0.0) + 0.1 * p_free
            if np.all(cand > 0) and np.all(np.cumsum(cand) * T < C[free]):
                p_free = cand

    tau_f = tau[:, free]
    C_f = C[free]

    def parts(p):
        # pinned zero-power slots contribute zero rate, so bits come from
        # the free slots alone
        A = (tau_f * np.log1p(np.outer(L, p))).sum(axis=1) * (W / LN2)
        slack = C_f - T * np.cumsum(p)
        return A, slack

    def phi(p):
        if np.any(p <= 0):
            return -math.inf
        A, slack = parts(p)
        if np.any(A <= 0) or np.any(slack <= 0):
            return -math.inf
        return float(np.log(A).sum() + sigma * np.log(p).sum() + sigma * np.log(slack).sum())

    sigma = 1.0
    sigma_final = cfg.tol_kkt * LN2 / 100.0
    res_final = cfg.tol_kkt * LN2 * 1e-3
    iters = 0
    m = K - t0
    idx = np.arange(m)
    pair_max = np.maximum.outer(idx, idx)
    while True:
        res_tol = res_final if sigma <= sigma_final else max(res_final, sigma * 1e-2)
        for _ in range(_MAX_NEWTON_PER_STAGE):
            A, slack = parts(p_free)
            denom = 1.0 + np.outer(L, p_free)
            a = tau_f * (W / LN2) * L[:, None] / denom
            inv_slack = 1.0 / slack
            suffix = np.cumsum(inv_slack[::-1])[::-1]
            grad = (a / A[:, None]).sum(axis=0) + sigma / p_free - sigma * T * suffix
            if np.abs(grad).max() <= res_tol:
                break
            iters += 1
            if iters > cfg.max_inner_iters:
                p_full = np.zeros(K)
                p_full[free] = p_free
                raise NonconvergenceError(
                    "power block exceeded the inner iteration budget",
                    best=p_full,
                    residual=float(np.abs(grad).max()),
                )
            M = a / A[:, None]
            H = -(M.T @ M)
            b = a * L[:, None] / denom
            H[np.diag_indices(m)] -= (b / A[:, None]).sum(axis=0) + sigma / p_free**2
            suffix_sq = np.cumsum((inv_slack**2)[::-1])[::-1]
            H -= sigma * T * T * suffix_sq[pair_max]
            d = np.linalg.solve(H, -grad)
            alpha = 1.0
            neg = d < 0
            if np.any(neg):
                alpha = min(alpha, _BOUNDARY_FRAC * float((-p_free[neg] / d[neg]).min()))
            dspend = T * np.cumsum(d)
            grow = dspend > 0
            if np.any(grow):
                alpha = min(alpha, _BOUNDARY_FRAC * float((slack[grow] / dspend[grow]).min()))
            base = phi(p_free)
            slope = float(grad @ d)
            noise = 1e-11 * (1.0 + abs(base))  # merit noise floor, as in the time block
            while alpha > 1e-16:
                cand = p_free + alpha * d
                val = phi(cand)
                if val >= base + _ARMIJO * alpha * slope or val >= base - noise:
                    p_free = cand
                    break
                alpha *= cfg.step_shrink
        if sigma <= sigma_final:
            break
        sigma = max(sigma * 0.1, sigma_final)

    p_full = np.zeros(K)
    p_full[free] = p_free
    # reconstruction-path certificate, for the same reason as in solve_time
    return p_full, kkt_residual_power(inst, tau, p_full)


def kkt_residual_power(inst: Instance, shares_tau, powers_p, multipliers: dict | None = None) -> KktResidual:
    """KKT residuals of a power vector for fixed shares.

    Stationarity couples each slot to the multipliers of every later
    cumulative budget, so the budget prices seen from slot t form a suffix
    sum that can only fall over time.  Without supplied multipliers the
    smallest dual-feasible prices are rebuilt backward from the last slot
    (each budget's multiplier is the rise its suffix price needs) and each
    slot's nonnegativity multiplier absorbs any remaining gap.  Stationarity
    is then exact and non-optimality surfaces as complementarity: positive
    prices on slack budgets or positive gaps on powered slots.
    """
    tau = np.asarray(shares_tau, dtype=float)
    p = np.asarray(powers_p, dtype=float)
    if p.shape != (inst.n_slots,):
        raise ValueError(f"expected {inst.n_slots} powers, got shape {p.shape}")
    T = inst.slot_length_t
    C = inst.cum_harvests
    loose = max(1e-6 * inst.total_harvest, 1e3 * inst.tol_energy)
    spent = np.cumsum(np.maximum(p, 0.0)) * T
    if np.any(p < -1e-9) or np.any(spent > C + loose):
        raise InfeasiblePointError("powers are too far from feasibility to certify")
    p = np.maximum(p, 0.0)
    grad = power_utility_gradient(inst, tau, p)
    slack = C - spent
    K = inst.n_slots

    if multipliers is None:
        suffix = np.zeros(K)  # price of energy as seen from slot t onward
        run = 0.0
        for t in range(K - 1, -1, -1):
            run = max(run, grad[t] / T)
            suffix[t] = run
        lam = suffix - np.append(suffix[1:], 0.0)
        mu = T * suffix - grad
        multipliers = {"lambda": lam, "mu": mu}
        stationarity = 0.0
    else:
        lam = np.asarray(multipliers["lambda"], dtype=float)
        mu = np.asarray(multipliers["mu"], dtype=float)
        suffix = np.cumsum(lam[::-1])[::-1]
        stationarity = float(np.abs(grad + mu - T * suffix).max())

    complementarity = max(float(np.abs(mu * p).max()), float(np.abs(lam * slack).max()))
    primal = max(float(max(0.0, -p.min())), float(max(0.0, (spent - C).max())))
    return KktResidual(
        stationarity_max=stationarity,
        complementarity_max=complementarity,
        primal_violation_max=float(primal),
        multipliers=multipliers,
    )


# ---------------------------------------------------------------------------
# alternating driver

def bcd(inst: Instance, init: Schedule, cfg: SolverConfig | None = None):
    """Alternate the time and power blocks from a feasible start.

    Each round solves the time block first, then the power block, accepting a
    half-step only when it improves utility; the run stops once a whole round
    gains less than ``tol_utility`` or the round budget is exhausted.
    Subsolver nonconvergence is downgraded to a trace warning and the best
    iterate is used.  Returns ``(schedule, BcdTrace)``.
    """
    cfg = cfg or SolverConfig()
    _check_dims(inst, init)
    violations = check_feasibility(inst, init)
    if violations:
        raise InfeasibleStartError(f"initial schedule is infeasible: {violations[:3]}")

    p = np.maximum(init.powers_p, 0.0)
    tau = np.maximum(init.shares_tau, 0.0)
    utility = score(inst, Schedule(p, tau)).utility_u
    utilities = [utility]
    schedules = [Schedule(p, tau)]
    warnings: list[str] = []
    rounds = 0
    converged = False
    for rounds in range(1, cfg.max_bcd_rounds + 1):
        try:
            tau_new, _ = solve_time(inst, p, cfg, initial_shares=tau)
        except NonconvergenceError as err:
            warnings.append(f"round {rounds} time block: {err}")
            tau_new = err.best
        u_new = score(inst, Schedule(p, tau_new)).utility_u
        if u_new > utility:
            tau, utility = tau_new, u_new

        try:
            p_new, _ = solve_power(inst, tau, cfg, initial_powers=p)
        except NonconvergenceError as err:
            warnings.append(f"round {rounds} power block: {err}")
            p_new = err.best
        u_new = score(inst, Schedule(p_new, tau)).utility_u
        if u_new > utility:
            p, utility = p_new, u_new

        utilities.append(utility)
        schedules.append(Schedule(p, tau))
        if utilities[-1] - utilities[-2] < cfg.tol_utility:
            converged = True
            break

    trace = BcdTrace(
        utilities=tuple(utilities),
        rounds_used=rounds,
        converged=converged,
        warnings=tuple(warnings),
        schedules=tuple(schedules),
    )
    return Schedule(p, tau), trace
