"""
Derivative-free optimizers: COBYLA, Powell and dual annealing.

Every optimizer evaluates through an Objective, which counts calls and
rejects points outside its bounds, and stops after at most ``maxfev``
evaluations.
"""
import math
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from errors import BudgetError, ConfigurationError, UsageError
from sim_core import RngStream

logger = logging.getLogger(__name__)

OPTIMIZERS = ("cobyla", "powell", "dual_annealing")

DEFAULT_HYPERPARAMETERS = {
    "cobyla": {"rho_beg": 0.5, "rho_end": 1e-4, "maxfev": 1000},
    "powell": {"xtol": 1e-4, "ftol": 1e-4, "maxfev": 1000},
    "dual_annealing": {"q_v": 2.62, "q_a": -5.0, "t0": 5230.0, "maxfev": 2000, "local_polish": True},
}


class Objective:
    """
    Bounded objective with an exact evaluation counter.

    Args:
        func (callable): Vector -> real
        bounds (array-like): Shape (arity, 2), finite, lo < hi
        name (str): Label used in logs
    """

    def __init__(self, func, bounds, name="objective"):
        bounds = np.array(bounds, dtype=float)
        if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] < 1:
            raise UsageError(f"bounds must have shape (arity, 2), got {bounds.shape}")
        if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ConfigurationError(f"bounds must be finite with lo < hi, got {bounds.tolist()}")
        self.func = func
        self.bounds = bounds
        self.name = name
        self.eval_count = 0

    @property
    def arity(self):
        return self.bounds.shape[0]

    def clip(self, x):
        return np.clip(np.asarray(x, dtype=float), self.bounds[:, 0], self.bounds[:, 1])

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.bounds[:, 0]) and np.all(x <= self.bounds[:, 1]))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.arity,):
            raise UsageError(f"{self.name} takes {self.arity} values, got shape {x.shape}")
        if not self.contains(x):
            raise UsageError(f"{self.name} evaluated outside its bounds at {x.tolist()}")
        self.eval_count += 1
        return float(self.func(x.copy()))

    __call__ = evaluate


class Termination(str, Enum):
    CONVERGED = "converged"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True, eq=False)
class OptResult:
    """
    Outcome of one optimizer run.

    Attributes:
        best_x (np.ndarray): Best point evaluated
        best_value (float): Its recorded value
        nfev (int): Evaluations used, <= maxfev
        termination (Termination): Why the run stopped
        nit (int): Iterations of the optimizer's outer loop
        incumbents (tuple): Best value after each improvement, non-increasing
    """

    best_x: np.ndarray
    best_value: float
    nfev: int
    termination: Termination
    nit: int = 0
    incumbents: tuple = ()


class _BudgetExhausted(Exception):
    pass


class _Run:
    """Budgeted evaluation of one objective with incumbent tracking."""

    def __init__(self, objective, maxfev):
        self.objective = objective
        self.maxfev = int(maxfev)
        self.limit = self.maxfev
        self.nfev = 0
        self.nit = 0
        self.best_x = None
        self.best_value = math.inf
        self.incumbents = []

    def evaluate(self, x):
        if self.nfev >= self.limit:
            raise _BudgetExhausted()
        x = self.objective.clip(x)
        value = self.objective.evaluate(x)
        self.nfev += 1
        if math.isnan(value):
            value = math.inf
        if self.best_x is None or value < self.best_value:
            self.best_x = x.copy()
            self.best_value = value
            self.incumbents.append(value)
        return value

    def result(self, termination):
        return OptResult(
            best_x=self.best_x.copy(),
            best_value=float(self.best_value),
            nfev=self.nfev,
            termination=termination,
            nit=self.nit,
            incumbents=tuple(self.incumbents),
        )


def _check_budget(maxfev, arity, method):
    if maxfev < arity + 2:
        raise BudgetError(f"{method} needs maxfev >= {arity + 2} for {arity} parameters, got {maxfev}")


def _check_start(objective, x0):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (objective.arity,):
        raise UsageError(f"x0 must have {objective.arity} values, got shape {x0.shape}")
    if not objective.contains(x0):
        raise UsageError(f"x0 {x0.tolist()} lies outside the bounds")
    return x0.copy()


# --- COBYLA ---------------------------------------------------------------

def _axis_step(value, lo, hi, rho):
    if hi - value >= rho:
        return rho
    if value - lo >= rho:
        return -rho
    return hi - value if hi - value >= value - lo else lo - value


def _trust_region_step(gradient, rho, lower, upper):
    """Minimise g.d over |d| <= rho and lower <= d <= upper."""
    full = np.where(gradient > 0, lower, np.where(gradient < 0, upper, 0.0))
    if np.linalg.norm(full) <= rho:
        return full
    t_lo, t_hi = 0.0, 1.0
    while np.linalg.norm(np.clip(-t_hi * gradient, lower, upper)) < rho:
        t_hi *= 2.0
    for _ in range(100):
        t_mid = 0.5 * (t_lo + t_hi)
        if np.linalg.norm(np.clip(-t_mid * gradient, lower, upper)) <= rho:
            t_lo = t_mid
        else:
            t_hi = t_mid
    return np.clip(-t_lo * gradient, lower, upper)


def _simplex_model(points, values):
    best = int(np.argmin(values))
    others = [j for j in range(len(points)) if j != best]
    edges = np.array([points[j] - points[best] for j in others])
    diffs = np.array([values[j] - values[best] for j in others])
    if np.all(np.isfinite(diffs)):
        gradient = np.linalg.lstsq(edges, diffs, rcond=None)[0]
    else:
        gradient = np.zeros(points[best].shape)
    return best, others, edges, gradient


def _improve_geometry(run, points, values, rho, lower, upper):
    """Pull the vertex farthest from the best one back within rho. Returns False if none is far."""
    best, others, edges, _ = _simplex_model(points, values)
    distances = np.linalg.norm(edges, axis=1)
    far = int(np.argmax(distances))
    if distances[far] <= 2.0 * rho:
        return False

    xb = points[best]
    direction = np.linalg.pinv(edges)[:, far]
    if np.linalg.norm(direction) == 0:
        direction = np.zeros_like(xb)
        direction[int(np.argmax(upper - lower))] = 1.0
    direction = rho * direction / np.linalg.norm(direction)
    forward = np.clip(xb + direction, lower, upper)
    backward = np.clip(xb - direction, lower, upper)
    candidate = forward if np.linalg.norm(forward - xb) >= np.linalg.norm(backward - xb) else backward

    j = others[far]
    points[j] = candidate
    values[j] = run.evaluate(candidate)
    return True


def _cobyla_loop(run, x0, rho_beg, rho_end):
    lower, upper = run.objective.bounds[:, 0], run.objective.bounds[:, 1]
    n = run.objective.arity
    rho = rho_beg

    # initial simplex: x0 plus one step of rho along every axis
    points = [x0.copy()]
    values = [run.evaluate(x0)]
    for i in range(n):
        x = x0.copy()
        x[i] += _axis_step(x0[i], lower[i], upper[i], rho)
        points.append(x)
        values.append(run.evaluate(x))

    while True:
        run.nit += 1
        best, others, edges, gradient = _simplex_model(points, values)
        xb, fb = points[best], values[best]
        # trust-region step on the linear model, skipped when the box clips it short
        step = _trust_region_step(gradient, rho, lower - xb, upper - xb)
        if np.linalg.norm(step) > 0.1 * rho:
            trial = np.clip(xb + step, lower, upper)
            f_trial = run.evaluate(trial)
            predicted = -float(gradient @ step)
            ratio = (fb - f_trial) / predicted if predicted > 0 else -1.0

            # the trial replaces the vertex whose edge carries most of the step
            coefficients = np.linalg.lstsq(edges.T, step, rcond=None)[0]
            distances = np.array([np.linalg.norm(points[j] - trial) for j in others])
            scores = np.abs(coefficients) * np.maximum(1.0, distances / rho)
            if scores.max() > 1e-8:
                j = others[int(np.argmax(scores))]
                points[j], values[j] = trial, f_trial
            if ratio >= 0.1:
                continue

        # poor step: repair the simplex first, then shrink rho
        if _improve_geometry(run, points, values, rho, lower, upper):
            continue
        if rho <= rho_end:
            return
        rho = rho_end if 0.5 * rho <= 1.5 * rho_end else 0.5 * rho
        logger.debug(f"cobyla: rho -> {rho:.3e} after {run.nfev} evaluations")


def minimize_cobyla(obj, x0, rho_beg=0.5, rho_end=1e-4, maxfev=1000):
    """
    Linear-model trust-region search over an n+1 point simplex.

    Args:
        obj (Objective): Objective to minimise
        x0 (array-like): Start inside the bounds
        rho_beg (float): Initial trust radius
        rho_end (float): Final trust radius, 0 < rho_end < rho_beg
        maxfev (int): Evaluation budget

    Returns:
        OptResult: Deterministic result

    Raises:
        BudgetError: If maxfev < arity + 2
    """
    _check_budget(maxfev, obj.arity, "cobyla")
    if not 0 < rho_end < rho_beg:
        raise ConfigurationError(f"need 0 < rho_end < rho_beg, got {rho_end}, {rho_beg}")
    x0 = _check_start(obj, x0)
    run = _Run(obj, maxfev)
    try:
        _cobyla_loop(run, x0, rho_beg, rho_end)
        termination = Termination.CONVERGED
    except _BudgetExhausted:
        termination = Termination.BUDGET_EXHAUSTED
    logger.debug(f"cobyla on {obj.name}: {run.best_value:.6g} after {run.nfev} evaluations ({termination.value})")
    return run.result(termination)


# --- Powell ---------------------------------------------------------------

_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
_SQRT_EPS = math.sqrt(2.2e-16)


def _bounded_brent(func, a, b, xatol, maxiter=500):
    """Brent's bounded scalar minimisation on [a, b]; returns (x, f)."""
    fulc = a + _GOLDEN * (b - a)
    nfc, xf = fulc, fulc
    rat = e = 0.0
    fx = func(xf)
    ffulc = fnfc = fx
    xm = 0.5 * (a + b)
    tol1 = _SQRT_EPS * abs(xf) + xatol / 3.0
    tol2 = 2.0 * tol1
    iterations = 0

    while abs(xf - xm) > (tol2 - 0.5 * (b - a)) and iterations < maxiter:
        iterations += 1
        golden = True
        if abs(e) > tol1:
            golden = False
            r = (xf - nfc) * (fx - ffulc)
            q = (xf - fulc) * (fx - fnfc)
            p = (xf - fulc) * q - (xf - nfc) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            r = e
            e = rat
            if abs(p) < abs(0.5 * q * r) and q * (a - xf) < p < q * (b - xf):
                rat = p / q
                x = xf + rat
                if (x - a) < tol2 or (b - x) < tol2:
                    rat = tol1 * (1.0 if xm >= xf else -1.0)
            else:
                golden = True
        if golden:
            e = (a - xf) if xf >= xm else (b - xf)
            rat = _GOLDEN * e

        x = xf + (1.0 if rat >= 0 else -1.0) * max(abs(rat), tol1)
        fu = func(x)
        if fu <= fx:
            if x >= xf:
                a = xf
            else:
                b = xf
            fulc, ffulc = nfc, fnfc
            nfc, fnfc = xf, fx
            xf, fx = x, fu
        else:
            if x < xf:
                a = x
            else:
                b = x
            if fu <= fnfc or nfc == xf:
                fulc, ffulc = nfc, fnfc
                nfc, fnfc = x, fu
            elif fu <= ffulc or fulc == xf or fulc == nfc:
                fulc, ffulc = x, fu
        xm = 0.5 * (a + b)
        tol1 = _SQRT_EPS * abs(xf) + xatol / 3.0
        tol2 = 2.0 * tol1
    return xf, fx


def _line_interval(x, direction, lower, upper):
    """Range [t_min, t_max] keeping x + t*direction inside the box."""
    t_min, t_max = -math.inf, math.inf
    for xi, di, lo, hi in zip(x, direction, lower, upper):
        if di > 0:
            t_min, t_max = max(t_min, (lo - xi) / di), min(t_max, (hi - xi) / di)
        elif di < 0:
            t_min, t_max = max(t_min, (hi - xi) / di), min(t_max, (lo - xi) / di)
    return min(t_min, 0.0), max(t_max, 0.0)


def _line_minimize(run, x, fx, direction, xtol):
    lower, upper = run.objective.bounds[:, 0], run.objective.bounds[:, 1]
    t_min, t_max = _line_interval(x, direction, lower, upper)
    if t_max - t_min < 1e-12:
        return x, fx
    t, ft = _bounded_brent(lambda s: run.evaluate(x + s * direction), t_min, t_max, xtol)
    if ft < fx:
        return np.clip(x + t * direction, lower, upper), ft
    return x, fx


def _powell_loop(run, x, fx, xtol, ftol):
    lower, upper = run.objective.bounds[:, 0], run.objective.bounds[:, 1]
    n = run.objective.arity
    directions = [row for row in np.eye(n)]

    while True:
        run.nit += 1
        x_start, f_start = x.copy(), fx
        biggest_drop, biggest_index = 0.0, 0
        for i, direction in enumerate(directions):
            f_before = fx
            x, fx = _line_minimize(run, x, fx, direction, xtol)
            if f_before - fx > biggest_drop:
                biggest_drop, biggest_index = f_before - fx, i

        if f_start - fx < ftol * (abs(fx) + ftol):
            return x, fx

        new_direction = x - x_start
        length = np.linalg.norm(new_direction)
        if length == 0:
            continue
        _, t_max = _line_interval(x, new_direction, lower, upper)
        f_ext = run.evaluate(x + min(t_max, 1.0) * new_direction)
        if f_ext < f_start:
            delta = f_start - fx - biggest_drop
            test = 2.0 * (f_start - 2.0 * fx + f_ext) * delta * delta
            test -= biggest_drop * (f_start - f_ext) ** 2
            if test < 0.0:
                unit = new_direction / length
                x, fx = _line_minimize(run, x, fx, unit, xtol)
                directions.pop(biggest_index)
                directions.append(unit)


def minimize_powell(obj, x0, xtol=1e-4, ftol=1e-4, maxfev=1000):
    """
    Powell's conjugate-direction method with bounded Brent line searches.

    Args:
        obj (Objective): Objective to minimise
        x0 (array-like): Start inside the bounds
        xtol (float): Line-search tolerance along unit directions
        ftol (float): Relative decrease below which a cycle counts as converged
        maxfev (int): Evaluation budget

    Returns:
        OptResult: Deterministic result
    """
    _check_budget(maxfev, obj.arity, "powell")
    if xtol <= 0 or ftol <= 0:
        raise ConfigurationError(f"xtol and ftol must be positive, got {xtol}, {ftol}")
    x0 = _check_start(obj, x0)
    run = _Run(obj, maxfev)
    try:
        _powell_loop(run, x0, run.evaluate(x0), xtol, ftol)
        termination = Termination.CONVERGED
    except _BudgetExhausted:
        termination = Termination.BUDGET_EXHAUSTED
    logger.debug(f"powell on {obj.name}: {run.best_value:.6g} after {run.nfev} evaluations ({termination.value})")
    return run.result(termination)


# --- dual annealing -------------------------------------------------------

class _VisitingDistribution:
    """Tsallis-Stariolo visiting distribution with wrap-around into the box."""

    TAIL_LIMIT = 1.0e8
    MIN_VISIT_BOUND = 1.0e-10

    def __init__(self, lower, upper, q_v, generator):
        self.q_v = q_v
        self.generator = generator
        self.lower = lower
        self.upper = upper
        self.bound_range = upper - lower

        self._factor2 = np.exp((4.0 - q_v) * np.log(q_v - 1.0))
        self._factor3 = np.exp((2.0 - q_v) * np.log(2.0) / (q_v - 1.0))
        self._factor4_p = np.sqrt(np.pi) * self._factor2 / (self._factor3 * (3.0 - q_v))
        self._factor5 = 1.0 / (q_v - 1.0) - 0.5
        self._d1 = 2.0 - self._factor5
        self._factor6 = np.pi * (1.0 - self._factor5) / np.sin(
            np.pi * (1.0 - self._factor5)) / np.exp(gammaln(self._d1))

    def _jumps(self, temperature, dim):
        x, y = self.generator.normal(size=(2, dim))
        factor1 = np.exp(np.log(temperature) / (self.q_v - 1.0))
        factor4 = self._factor4_p * factor1
        x *= np.exp(-(self.q_v - 1.0) * np.log(self._factor6 / factor4) / (3.0 - self.q_v))
        den = np.exp((self.q_v - 1.0) * np.log(np.fabs(y)) / (3.0 - self.q_v))
        return x / den

    def _clamp(self, visits):
        upper_sample, lower_sample = self.generator.uniform(size=2)
        visits[visits > self.TAIL_LIMIT] = self.TAIL_LIMIT * upper_sample
        visits[visits < -self.TAIL_LIMIT] = -self.TAIL_LIMIT * lower_sample
        return visits

    def visit(self, x, step, temperature):
        """Full move for step < dim, otherwise a move of coordinate step - dim."""
        dim = x.size
        if step < dim:
            x_visit = x + self._clamp(self._jumps(temperature, dim))
            shifted = np.fmod(x_visit - self.lower, self.bound_range) + self.bound_range
            x_visit = np.fmod(shifted, self.bound_range) + self.lower
            x_visit[np.fabs(x_visit - self.lower) < self.MIN_VISIT_BOUND] += self.MIN_VISIT_BOUND
            return x_visit

        index = step - dim
        x_visit = x.copy()
        jump = self._clamp(self._jumps(temperature, 1))[0]
        span = self.bound_range[index]
        shifted = np.fmod(x[index] + jump - self.lower[index], span) + span
        x_visit[index] = np.fmod(shifted, span) + self.lower[index]
        if np.fabs(x_visit[index] - self.lower[index]) < self.MIN_VISIT_BOUND:
            x_visit[index] += self.MIN_VISIT_BOUND
        return x_visit


def _local_search(run, x, fx, budget, xtol, ftol):
    """Powell polish from x with at most ``budget`` evaluations of the run."""
    saved = run.limit
    run.limit = min(saved, run.nfev + budget)
    nit = run.nit
    try:
        _powell_loop(run, x, fx, xtol, ftol)
    except _BudgetExhausted:
        if run.nfev >= saved:
            raise
    finally:
        run.limit = saved
        run.nit = nit


def _accept_probability(delta, temperature_step, q_a):
    base = 1.0 - (1.0 - q_a) * delta / temperature_step
    if base <= 0.0:
        return 0.0
    return math.exp(math.log(base) / (1.0 - q_a))


def minimize_dual_annealing(obj, bounds=None, seed=0, maxfev=2000, q_v=2.62, q_a=-5.0,
                            t0=5230.0, local_polish=True, x0=None, maxiter=1000,
                            restart_temp_ratio=2e-5):
    """
    Generalized simulated annealing with optional Powell local search.

    Each iteration runs a Markov chain of 2*dim visits (full moves, then one
    coordinate at a time) at temperature
    t0 * (2**(q_v-1) - 1) / ((i+2)**(q_v-1) - 1). The chain restarts from a
    random point once the temperature drops below t0 * restart_temp_ratio.
    With ``local_polish`` an improving chain is followed by a local search and
    budget is reserved for a final polish of the incumbent.

    Args:
        obj (Objective): Objective to minimise
        bounds (array-like): Finite box; defaults to obj.bounds and must match it
        seed (int | RngStream): Random seed
        maxfev (int): Evaluation budget
        q_v (float): Visiting parameter in (1, 3)
        q_a (float): Acceptance parameter, < 1
        t0 (float): Initial temperature
        local_polish (bool): Run local searches
        x0 (array-like): Optional first point
        maxiter (int): Annealing iterations before declaring convergence

    Returns:
        OptResult: Reproducible for a given seed
    """
    _check_budget(maxfev, obj.arity, "dual_annealing")
    if bounds is not None and not np.array_equal(np.asarray(bounds, dtype=float), obj.bounds):
        raise ConfigurationError("dual annealing bounds must match the objective bounds")
    if not 1.0 < q_v < 3.0:
        raise ConfigurationError(f"q_v must lie in (1, 3), got {q_v}")
    if not q_a < 1.0:
        raise ConfigurationError(f"q_a must be < 1, got {q_a}")
    if not t0 > 0:
        raise ConfigurationError(f"t0 must be positive, got {t0}")

    stream = seed if isinstance(seed, RngStream) else RngStream(seed)
    generator = stream.generator
    lower, upper = obj.bounds[:, 0], obj.bounds[:, 1]
    dim = obj.arity
    visiting = _VisitingDistribution(lower, upper, q_v, generator)
    local_budget = max(100, 50 * dim)
    reserve = min(local_budget, maxfev // 5) if local_polish else 0
    t_factor = math.exp((q_v - 1.0) * math.log(2.0)) - 1.0

    run = _Run(obj, maxfev)
    run.limit = maxfev - reserve
    termination = Termination.BUDGET_EXHAUSTED
    start = None if x0 is None else _check_start(obj, x0)
    try:
        while run.nit < maxiter:
            x = start if start is not None else generator.uniform(lower, upper)
            start = None
            energy = run.evaluate(x)
            for i in range(maxiter - run.nit):
                temperature = t0 * t_factor / (math.exp((q_v - 1.0) * math.log(i + 2.0)) - 1.0)
                if temperature < t0 * restart_temp_ratio:
                    logger.debug(f"dual annealing restart after {run.nfev} evaluations")
                    break
                run.nit += 1
                temperature_step = temperature / float(i + 1)
                best_before = run.best_value
                for step in range(2 * dim):
                    x_visit = visiting.visit(x, step, temperature)
                    e = run.evaluate(x_visit)
                    if e < energy or generator.uniform() <= _accept_probability(e - energy, temperature_step, q_a):
                        x, energy = x_visit, e
                if local_polish and run.best_value < best_before:
                    _local_search(run, run.best_x.copy(), run.best_value, local_budget, 1e-4, 1e-4)
                    if run.best_value < energy:
                        x, energy = run.best_x.copy(), run.best_value
        termination = Termination.CONVERGED
    except _BudgetExhausted:
        pass

    run.limit = maxfev
    if local_polish and run.nfev < maxfev:
        try:
            _local_search(run, run.best_x.copy(), run.best_value, maxfev - run.nfev, 1e-4, 1e-4)
            # a polish that settles inside the reserve ends the run
            termination = Termination.CONVERGED
        except _BudgetExhausted:
            pass
    if run.nfev >= maxfev:
        termination = Termination.BUDGET_EXHAUSTED
    logger.debug(f"dual annealing on {obj.name}: {run.best_value:.6g} after {run.nfev} evaluations")
    return run.result(termination)


def minimize(name, objective, x0, seed=0, **hyperparameters):
    """
    Run an optimizer by name with its default hyperparameters overridden.

    Raises:
        ConfigurationError: On an unknown optimizer or hyperparameter
    """
    if name not in DEFAULT_HYPERPARAMETERS:
        raise ConfigurationError(f"unknown optimizer {name!r}; expected one of {', '.join(OPTIMIZERS)}")
    settings = dict(DEFAULT_HYPERPARAMETERS[name])
    unknown = set(hyperparameters) - set(settings)
    if unknown:
        raise ConfigurationError(f"unknown {name} settings: {', '.join(sorted(unknown))}")
    settings.update(hyperparameters)
    if name == "cobyla":
        return minimize_cobyla(objective, x0, **settings)
    if name == "powell":
        return minimize_powell(objective, x0, **settings)
    return minimize_dual_annealing(objective, seed=seed, x0=x0, **settings)
