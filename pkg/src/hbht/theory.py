"""Convergence constants, RIP conditions and the brute-force RIC oracle.

The heavy-ball error recursion has the form

    e(p+1) <= gain * (|1 - alpha + beta| + alpha * d) * e(p) + gain * beta * e(p-1) + noise

where ``d`` is the restricted isometry constant that controls the
``(I - A^T A)`` term (``delta_3k``, or ``sqrt(3) * delta_2k`` in the
order-2k variants) and ``gain`` is the thresholding gain: the golden ratio
for HBHT and ``sqrt(2) / sqrt(1 - delta_2k^2)`` for HBHTP. Everything below
evaluates the resulting rates and constants and the parameter ranges under
which the rate is below one.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg import as_matrix, as_vector
from .sparsity import best_term_residual, hard_threshold, support_of

__all__ = [
    "ETA",
    "RicMethod",
    "RipEstimate",
    "HbhtBounds",
    "HbhtpBounds",
    "StabilityBound",
    "eta_constant",
    "brute_force_ric",
    "ric_profile",
    "hbht_bounds",
    "hbht_bounds_2k",
    "hbhtp_bounds",
    "hbhtp_bounds_2k",
    "finite_convergence_iterations",
    "rip_threshold",
    "RIP_THRESHOLDS",
    "geometric_envelope",
    "deviation_bound_holds",
    "adjoint_bound_holds",
    "split_deviation_bound_holds",
    "threshold_error_bound_holds",
    "best_term_l1_bound_holds",
    "dominated_norm_bound_holds",
    "stability_coefficients",
    "stability_bound",
]

ETA = (math.sqrt(5.0) + 1.0) / 2.0
SQRT3 = math.sqrt(3.0)

# closed forms of the largest admissible RIC for each (algorithm, order) pair
RIP_THRESHOLDS = {
    ("hbht", "3k"): ETA - 1.0,
    ("hbhtp", "3k"): 1.0 / SQRT3,
    ("hbht", "2k"): (ETA - 1.0) / SQRT3,
    ("hbhtp", "2k"): 1.0 / math.sqrt(7.0),
}


def eta_constant() -> float:
    """Golden ratio, the positive root of ``t^2 - t = 1``."""
    return ETA


class RicMethod(str, Enum):
    EXACT = "ExactBruteForce"
    MONTE_CARLO = "MonteCarloLowerBound"


@dataclass(frozen=True)
class RipEstimate:
    order: int
    delta: float
    method: RicMethod
    samples: int = 0
    worst_support: tuple[int, ...] = ()

    @property
    def exact(self) -> bool:
        return self.method is RicMethod.EXACT

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "delta": self.delta,
            "method": self.method.value,
            "samples": self.samples,
            "worst_support": list(self.worst_support),
        }


def _gram_deviation(G: np.ndarray, supports: np.ndarray):
    sub = G[supports[:, :, None], supports[:, None, :]]
    w = np.linalg.eigvalsh(sub)
    dev = np.maximum(w[:, -1] - 1.0, 1.0 - w[:, 0])
    i = int(np.argmax(dev))
    return float(dev[i]), supports[i]


def brute_force_ric(A, order: int, max_enumeration: int = 2_000_000, seed: int = 0,
                    batch: int = 20_000) -> RipEstimate:
    """Restricted isometry constant of ``A`` of the given order.

    When there are at most ``max_enumeration`` supports of size ``order`` all
    of them are visited and the result is exact: the largest deviation of an
    eigenvalue of ``A_S^T A_S`` from one. Otherwise ``max_enumeration``
    random supports are sampled and the result is only a lower bound.
    Supports are processed in fixed-size batches in enumeration order, so the
    answer does not depend on ``batch``.
    """
    A = as_matrix(A)
    n = A.shape[1]
    if not 1 <= order <= n:
        raise ValueError(f"order must lie in [1, {n}]")
    G = A.T @ A
    total = math.comb(n, order)
    best, worst = -math.inf, None

    if total <= max_enumeration:
        combos = itertools.combinations(range(n), order)
        while True:
            chunk = list(itertools.islice(combos, batch))
            if not chunk:
                break
            dev, S = _gram_deviation(G, np.array(chunk, dtype=np.intp))
            if dev > best:
                best, worst = dev, S
        return RipEstimate(order, max(best, 0.0), RicMethod.EXACT, 0, tuple(int(i) for i in worst))

    rng = np.random.Generator(np.random.Philox(key=seed))
    remaining = max_enumeration
    while remaining > 0:
        size = min(batch, remaining)
        supports = np.sort(np.argsort(rng.random((size, n)), axis=1)[:, :order], axis=1)
        dev, S = _gram_deviation(G, supports)
        if dev > best:
            best, worst = dev, S
        remaining -= size
    return RipEstimate(order, max(best, 0.0), RicMethod.MONTE_CARLO, max_enumeration,
                       tuple(int(i) for i in worst))


def ric_profile(A, orders, max_enumeration: int = 2_000_000) -> dict[int, RipEstimate]:
    """:func:`brute_force_ric` for several orders, keyed by order."""
    return {int(t): brute_force_ric(A, int(t), max_enumeration) for t in orders}


@dataclass(frozen=True)
class HbhtBounds:
    eta: float
    b: float
    tau: float
    C1: float
    C2: float
    condition_met: bool

    def to_dict(self) -> dict:
        return {"eta": self.eta, "b": self.b, "tau": self.tau, "C1": self.C1, "C2": self.C2,
                "condition_met": self.condition_met}


@dataclass(frozen=True)
class HbhtpBounds:
    eta_hat: float
    b_hat: float
    tau_hat: float
    C3: float
    C4: float
    p_star: int | None
    condition_met: bool

    def to_dict(self) -> dict:
        return {"eta_hat": self.eta_hat, "b_hat": self.b_hat, "tau_hat": self.tau_hat,
                "C3": self.C3, "C4": self.C4, "p_star": self.p_star,
                "condition_met": self.condition_met}


def _check_common(alpha, beta, e0, e1):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not beta >= 0:
        raise ValueError("beta must be non-negative")
    if not (e0 >= 0 and e1 >= 0):
        raise ValueError("initial errors e0, e1 must be non-negative")


def _check_deltas(*deltas):
    """Deltas must be listed in non-decreasing order of RIC order."""
    for d in deltas:
        if not 0 <= d < 1:
            raise ValueError(f"restricted isometry constants must lie in [0, 1), got {d}")
    for lo, hi in zip(deltas, deltas[1:]):
        if lo > hi:
            raise ValueError("restricted isometry constants must be non-decreasing in the order")


def _rate(gain: float, alpha: float, beta: float, d: float):
    b = gain * (abs(1.0 - alpha + beta) + alpha * d)
    tau = (b + math.sqrt(b * b + 4.0 * gain * beta)) / 2.0
    return b, tau


def _parameter_window(gain: float, alpha: float, beta: float, d: float, d_limit: float) -> bool:
    # both windows use c = 1/gain + 1; for HBHT that is ETA itself since 1/ETA + 1 = ETA
    if not d < d_limit:
        return False
    c = 1.0 / gain + 1.0
    if not beta < c / (1.0 + d) - 1.0:
        return False
    return (2.0 * (1.0 + beta) - c) / (1.0 - d) < alpha < c / (1.0 + d)


def _hbht(alpha, beta, d, delta2k, e0, e1, d_limit) -> HbhtBounds:
    b, tau = _rate(ETA, alpha, beta, d)
    met = _parameter_window(ETA, alpha, beta, d, d_limit)
    if met:
        assert b + ETA * beta < 1 and 0 <= tau < 1
    C1 = e1 + (tau - b) * e0
    C2 = ETA * alpha * math.sqrt(1.0 + delta2k) / (1.0 - tau) if tau < 1 else math.inf
    return HbhtBounds(ETA, b, tau, C1, C2, met)


def hbht_bounds(alpha: float, beta: float, delta3k: float, delta2k: float, e0: float = 1.0,
                e1: float = 1.0) -> HbhtBounds:
    """HBHT rate and constants under an order-3k RIC.

    ``e0`` and ``e1`` are the distances of the two starting points from the
    k-term approximation of the target. ``condition_met`` reports whether
    ``delta3k`` and ``(alpha, beta)`` lie in the convergence region; outside
    it the constants are still returned (``C2`` is infinite when the rate is
    not below one).
    """
    _check_common(alpha, beta, e0, e1)
    _check_deltas(delta2k, delta3k)
    return _hbht(alpha, beta, delta3k, delta2k, e0, e1, RIP_THRESHOLDS[("hbht", "3k")])


def hbht_bounds_2k(alpha: float, beta: float, delta2k: float, e0: float = 1.0,
                   e1: float = 1.0) -> HbhtBounds:
    """As :func:`hbht_bounds` with ``delta3k`` replaced by ``sqrt(3) * delta2k``."""
    _check_common(alpha, beta, e0, e1)
    _check_deltas(delta2k)
    return _hbht(alpha, beta, SQRT3 * delta2k, delta2k, e0, e1, ETA - 1.0)


def _hbhtp(alpha, beta, d, delta_k, delta2k, e0, e1, mu, d_limit, with_p_star) -> HbhtpBounds:
    eta_hat = math.sqrt(2.0) / math.sqrt(1.0 - delta2k * delta2k)
    b_hat, tau_hat = _rate(eta_hat, alpha, beta, d)
    met = _parameter_window(eta_hat, alpha, beta, d, d_limit)
    if met:
        assert b_hat + eta_hat * beta < 1 and 0 <= tau_hat < 1
    C3 = e1 + (tau_hat - b_hat) * e0
    if tau_hat < 1:
        C4 = (eta_hat * alpha * math.sqrt(1.0 + delta2k)
              + math.sqrt(1.0 + delta_k) / (1.0 - delta2k)) / (1.0 - tau_hat)
    else:
        C4 = math.inf

    out = HbhtpBounds(eta_hat, b_hat, tau_hat, C3, C4, None, met)
    if with_p_star and mu is not None:
        out = dataclasses.replace(out, p_star=finite_convergence_iterations(out, mu))
    return out


def finite_convergence_iterations(bounds: HbhtpBounds, mu: float) -> int | None:
    """Iterations after which noiseless HBHTP has found the exact support.

    ``mu`` is the smallest nonzero magnitude of the k-sparse target. The
    count is ``ceil(log(sqrt(2) C3 / (eta_hat mu)) / log(1 / tau_hat)) + 1``,
    clamped below at 1. Returns ``None`` when the convergence condition fails
    or ``C3 = 0``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    if not bounds.condition_met or bounds.C3 <= 0:
        return None
    if bounds.tau_hat == 0:
        return 1
    ratio = math.sqrt(2.0) * bounds.C3 / (bounds.eta_hat * mu)
    return max(math.ceil(math.log(ratio) / math.log(1.0 / bounds.tau_hat)) + 1, 1)


def hbhtp_bounds(alpha: float, beta: float, delta_k: float, delta2k: float, delta3k: float,
                 e0: float = 1.0, e1: float = 1.0, mu: float | None = None) -> HbhtpBounds:
    """HBHTP rate and constants under an order-3k RIC.

    When ``mu`` (the smallest nonzero magnitude of an exactly k-sparse
    target) is given and the condition holds, ``p_star`` is the number of
    iterations after which noiseless recovery is exact. It is ``None`` when
    it is undefined (condition not met or ``C3 = 0``). The count is clamped
    below at 1.
    """
    _check_common(alpha, beta, e0, e1)
    _check_deltas(delta_k, delta2k, delta3k)
    return _hbhtp(alpha, beta, delta3k, delta_k, delta2k, e0, e1, mu,
                  RIP_THRESHOLDS[("hbhtp", "3k")], True)


def hbhtp_bounds_2k(alpha: float, beta: float, delta_k: float, delta2k: float, e0: float = 1.0,
                    e1: float = 1.0) -> HbhtpBounds:
    """As :func:`hbhtp_bounds` with ``delta3k`` replaced by ``sqrt(3) * delta2k``.

    The finite-termination count needs an honest order-3k constant, so
    ``p_star`` is always ``None`` here.
    """
    _check_common(alpha, beta, e0, e1)
    _check_deltas(delta_k, delta2k)
    # delta2k < 1/sqrt(7) is the same as sqrt(3)*delta2k < sqrt(3/7)
    return _hbhtp(alpha, beta, SQRT3 * delta2k, delta_k, delta2k, e0, e1, None,
                  SQRT3 * RIP_THRESHOLDS[("hbhtp", "2k")], False)


def _condition_at(algorithm: str, order: str, delta: float) -> bool:
    if algorithm == "hbht" and order == "3k":
        return hbht_bounds(1.0, 0.0, delta, delta).condition_met
    if algorithm == "hbht" and order == "2k":
        return hbht_bounds_2k(1.0, 0.0, delta).condition_met
    if algorithm == "hbhtp" and order == "3k":
        return hbhtp_bounds(1.0, 0.0, delta, delta, delta).condition_met
    if algorithm == "hbhtp" and order == "2k":
        return hbhtp_bounds_2k(1.0, 0.0, delta, delta).condition_met
    raise ValueError(f"no RIP condition for algorithm={algorithm!r}, order={order!r}")


def rip_threshold(algorithm: str, order: str, iterations: int = 80) -> float:
    """Largest RIC for which some parameters satisfy the convergence condition.

    Found by bisection on the condition evaluators at ``alpha = 1,
    beta = 0`` (the centre of every admissible window) with all RICs of
    lower order set equal to the one being varied, which is the worst case.
    """
    algorithm = str(getattr(algorithm, "value", algorithm)).lower()
    lo, hi = 0.0, 1.0 - 1e-12
    if not _condition_at(algorithm, order, lo) or _condition_at(algorithm, order, hi):
        raise RuntimeError("condition is not a threshold in delta")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if _condition_at(algorithm, order, mid):
            lo = mid
        else:
            hi = mid
    return lo


def geometric_envelope(a0: float, a1: float, b1: float, b2: float, b3: float, p: int) -> float:
    """Upper bound at index ``p >= 1`` for ``a(p+1) <= b1 a(p) + b2 a(p-1) + b3``.

    The bound is ``theta^(p-1) (a1 + (theta - b1) a0) + b3 / (1 - theta)``
    with ``theta`` the positive root of ``t^2 = b1 t + b2``.
    """
    if min(a0, a1, b1, b2, b3) < 0:
        raise ValueError("all recursion data must be non-negative")
    if not b1 + b2 < 1:
        raise ValueError("need b1 + b2 < 1")
    if p < 1:
        raise ValueError("the envelope is stated for p >= 1")
    theta = (b1 + math.sqrt(b1 * b1 + 4.0 * b2)) / 2.0
    assert 0 <= theta < 1
    return theta ** (p - 1) * (a1 + (theta - b1) * a0) + b3 / (1.0 - theta)


def _index_set(W, n) -> np.ndarray:
    W = np.unique(np.asarray(W, dtype=np.intp).reshape(-1))
    if W.size and (W[0] < 0 or W[-1] >= n):
        raise ValueError(f"indices must lie in [0, {n})")
    return W


def deviation_bound_holds(A, v, W, delta_t: float, order: int, slack: float = 1e-12) -> bool:
    """``||((I - A^T A) v)_W|| <= delta_t ||v||`` for ``|W u supp(v)| <= order``."""
    A = as_matrix(A)
    v = as_vector(v)
    W = _index_set(W, A.shape[1])
    if np.union1d(W, support_of(v)).size > order:
        raise ValueError("|W u supp(v)| exceeds the RIC order")
    w = v - A.T @ (A @ v)
    return bool(np.linalg.norm(w[W]) <= delta_t * np.linalg.norm(v) + slack)


def adjoint_bound_holds(A, v, W, delta_t: float, order: int, slack: float = 1e-12) -> bool:
    """``||(A^T v)_W|| <= sqrt(1 + delta_t) ||v||`` for ``|W| <= order``."""
    A = as_matrix(A)
    v = as_vector(v)
    W = _index_set(W, A.shape[1])
    if W.size > order:
        raise ValueError("|W| exceeds the RIC order")
    return bool(np.linalg.norm((A.T @ v)[W]) <= math.sqrt(1.0 + delta_t) * np.linalg.norm(v) + slack)


def split_deviation_bound_holds(A, x, z, S_star, delta2k: float, k: int | None = None,
                                slack: float = 1e-12) -> bool:
    """``||((I - A^T A)(x - z))_{S u S*}|| <= sqrt(3) delta_2k ||x - z||``.

    ``x`` and ``z`` must be k-sparse and ``|supp(x) u S*| <= 2k``. When ``k``
    is omitted the smallest admissible value is used.
    """
    A = as_matrix(A)
    x = as_vector(x)
    z = as_vector(z)
    n = A.shape[1]
    S_star = _index_set(S_star, n)
    union = np.union1d(support_of(x), S_star)
    if k is None:
        k = max(support_of(x).size, support_of(z).size, math.ceil(union.size / 2), 1)
    if support_of(x).size > k or support_of(z).size > k or union.size > 2 * k:
        raise ValueError("precondition violated: x, z must be k-sparse and |supp(x) u S*| <= 2k")
    d = x - z
    w = d - A.T @ (A @ d)
    return bool(np.linalg.norm(w[union]) <= SQRT3 * delta2k * np.linalg.norm(d) + slack)


def threshold_error_bound_holds(x, z, k: int, slack: float = 1e-12) -> bool:
    """``||x - H_k(z)|| <= ETA ||(x - z)_{W u W*}||`` for k-sparse ``x``,
    with ``W = supp(x)`` and ``W* = supp(H_k(z))``."""
    x = as_vector(x)
    z = as_vector(z)
    if support_of(x).size > k:
        raise ValueError("x must be k-sparse")
    hz = hard_threshold(z, k)
    union = np.union1d(support_of(x), support_of(hz))
    lhs = np.linalg.norm(x - hz)
    return bool(lhs <= ETA * np.linalg.norm((x - z)[union]) + slack)


def best_term_l1_bound_holds(z, s: int, slack: float = 1e-12) -> bool:
    """``sigma_s(z)_2 <= ||z||_1 / (2 sqrt(s))`` for ``s >= 1``."""
    z = as_vector(z)
    if s < 1:
        raise ValueError("s must be at least 1")
    return bool(best_term_residual(z, s, 2) <= np.linalg.norm(z, 1) / (2.0 * math.sqrt(s)) + slack)


def dominated_norm_bound_holds(u, v, slack: float = 1e-12) -> bool:
    """``||u||_2 <= ||v||_1 / sqrt(n)`` when ``max |u_i| <= min |v_i|``."""
    u = as_vector(u)
    v = as_vector(v)
    if u.shape != v.shape or u.size == 0:
        raise ValueError("u and v must be non-empty and of equal length")
    if np.abs(u).max() > np.abs(v).min():
        raise ValueError("precondition violated: max |u_i| must not exceed min |v_i|")
    return bool(np.linalg.norm(u) <= np.linalg.norm(v, 1) / math.sqrt(u.size) + slack)


@dataclass(frozen=True)
class StabilityBound:
    """Coefficients of the error bound from zero starting points:

        ||x - x^p|| <= approx_coeff * sigma_j(x)_1 + noise_coeff * ||nu||
                       + transient_coeff * rate^(p-1) * ||x||
    """

    approx_coeff: float
    noise_coeff: float
    transient_coeff: float
    rate: float
    j: int

    def evaluate(self, x, noise_norm: float, p: int) -> float:
        if p < 1:
            raise ValueError("p must be at least 1")
        x = as_vector(x)
        return (self.approx_coeff * best_term_residual(x, self.j, 1)
                + self.noise_coeff * noise_norm
                + self.transient_coeff * self.rate ** (p - 1) * float(np.linalg.norm(x)))


def stability_coefficients(kind, bounds, k: int, delta_j: float) -> StabilityBound:
    kind = str(getattr(kind, "value", kind)).lower()
    if k < 2:
        raise ValueError("stability bounds need k >= 2")
    if not bounds.condition_met:
        raise ValueError("stability bounds need the convergence condition to hold")
    if kind == "hbht" and isinstance(bounds, HbhtBounds):
        C, T, B = bounds.C2, bounds.tau, bounds.b
    elif kind == "hbhtp" and isinstance(bounds, HbhtpBounds):
        C, T, B = bounds.C4, bounds.tau_hat, bounds.b_hat
    else:
        raise ValueError(f"bounds of type {type(bounds).__name__} do not match kind {kind!r}")
    j = k // 2
    approx = (1.0 + 2.0 * C * math.sqrt(1.0 + delta_j)) / (2.0 * math.sqrt(j))
    return StabilityBound(approx, C, T - B + 1.0, T, j)


def stability_bound(kind, bounds, x, k: int, delta_j: float, noise_norm: float, p: int) -> float:
    """Bound on ``||x - x^p||`` for HBHT/HBHTP started at ``x0 = x1 = 0``.

    ``bounds`` must come from :func:`hbht_bounds` (``kind='hbht'``) or
    :func:`hbhtp_bounds` (``kind='hbhtp'``) and satisfy the convergence
    condition; ``delta_j`` is the RIC of order ``j = k // 2``.
    """
    return stability_coefficients(kind, bounds, k, delta_j).evaluate(x, noise_norm, p)
