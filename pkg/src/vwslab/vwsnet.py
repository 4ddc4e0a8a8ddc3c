"""Epsilon-net orchestration: moderateness, negligibility/uniqueness, and
classical-consistency verdicts for the regularised Cauchy problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeffs import (CoefficientModel, CoefficientSet, HypothesisReport,
                     check_hypotheses, regularise, sample)
from .evolve import EvolutionProblem, Forcing, SolveResult, solve, stable_dt
from .grid import Field, GridSpec, forward, inverse, sobolev_norm
from .mollify import Mollifier, ScaleFn, fit_slope, mollify, scale_omega


class NetError(ValueError):
    pass


class HypothesisFailure(NetError):
    def __init__(self, report: HypothesisReport):
        super().__init__("coefficient model failed hypothesis validation")
        self.report = report


# ---------------------------------------------------------------------------
# data generators


def rough_field(spec: GridSpec, s: float, seed: int, offset: float = 0.51) -> Field:
    """Fourier coefficients <k>^{-s-offset} with random phases: borderline
    H^s data."""
    rng = np.random.default_rng(seed)
    bra = spec.kappa_bracket()
    phases = np.exp(2j * np.pi * rng.random(spec.shape))
    coeffs = bra ** (-(s + offset)) * phases
    return Field(spec, inverse(coeffs, spec))


def delta_field(spec: GridSpec) -> Field:
    """Grid realisation of the Dirac delta: flat coefficients (2L)^{-n}."""
    coeffs = np.full(spec.shape, (2.0 * spec.L) ** (-spec.n), dtype=complex)
    return Field(spec, inverse(coeffs, spec))


def gaussian_field(spec: GridSpec, width: float = 1.0, amplitude: float = 1.0) -> Field:
    r2 = spec.x_norm_sq()
    return Field(spec, amplitude * np.exp(-r2 / (2.0 * width**2)))


def bump_perturbation(spec: GridSpec, N: int, seed_shift: float = 0.0) -> np.ndarray:
    """Fixed smooth symmetric bump obeying the <x>^{-N} derivative envelope."""
    r2 = spec.x_norm_sq()
    x0 = spec.x_mesh()[0]
    return ((1.0 + r2) ** (-N / 2.0) * np.exp(-r2 / 2.0)
            * np.cos(x0 + seed_shift)).astype(float)


# ---------------------------------------------------------------------------
# nets


@dataclass
class NetParams:
    spec: GridSpec
    eps_ladder: tuple = (2**-3, 2**-4, 2**-5, 2**-6, 2**-7)
    scale: ScaleFn = field(default_factory=ScaleFn)
    T: float = 0.5
    dt: float | None = None      # None: per-eps stability step
    s_list: tuple = (0.0,)
    N_weight: int = 2
    data_mollifier: Mollifier = field(default_factory=Mollifier)
    mollify_data: bool = True
    record_states: bool = False

    def __post_init__(self):
        eps = list(self.eps_ladder)
        if len(eps) < 4:
            raise NetError("epsilon ladder must have at least 4 values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise NetError("epsilon ladder must be strictly decreasing")
        if any(not (0.0 < e <= 1.0) for e in eps):
            raise NetError("epsilon values must lie in (0, 1]")


@dataclass
class EpsilonNet:
    params: NetParams
    model: CoefficientModel
    hypothesis_report: HypothesisReport
    members: dict  # eps -> dict(cs, u0, forcing, result)

    def omega(self, eps: float) -> float:
        return self.members[eps]["cs"].omega


@dataclass
class FitReport:
    slope: float
    residual: float
    passed: bool
    bound: float
    values: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "residual": self.residual,
            "passed": self.passed,
            "bound": self.bound,
            "values": self.values,
            "extra": self.extra,
        }


def _mollify_data(u: Field | None, m: Mollifier, eps: float) -> Field | None:
    # Cauchy data are regularised at parameter eps itself, not omega(eps)
    if u is None:
        return None
    return mollify(u, m, eps)


def run_net(model: CoefficientModel, u0: Field, params: NetParams,
            forcing: Forcing = Forcing(), skip_hypotheses: bool = False) -> EpsilonNet:
    """Regularise, solve and collect norms for every epsilon on the ladder."""
    moll = Mollifier("gaussian")
    sets = [regularise(model, moll, e, params.scale, params.spec)
            for e in params.eps_ladder]
    report = check_hypotheses(sets, nu=max(model.nu, 0.05), c0=max(model.c0, 0.05),
                              N=model.N)
    if not (report.passed or skip_hypotheses):
        raise HypothesisFailure(report)

    members = {}
    for eps, cs in zip(params.eps_ladder, sets):
        if params.mollify_data:
            u0_eps = _mollify_data(u0, params.data_mollifier, eps)
            g_eps = Forcing(_mollify_data(forcing.G, params.data_mollifier, eps),
                            forcing.rate)
        else:
            u0_eps, g_eps = u0, forcing
        prob = EvolutionProblem(cs, u0_eps, g_eps, T=params.T, dt=params.dt,
                                s_list=params.s_list, N_weight=params.N_weight)
        result = solve(prob, record_states=params.record_states)
        members[eps] = {"cs": cs, "u0": u0_eps, "forcing": g_eps, "result": result}
    return EpsilonNet(params, model, report, members)


def moderateness_fit(net: EpsilonNet, s: float, n_cap: float = 10.0,
                     resid_cap: float = 0.5) -> FitReport:
    """Slope of log sup_t ||u_eps||_s against log(1/eps); pass iff the
    exponent is capped and the fit is tight (polynomial moderateness)."""
    eps = np.array(sorted(net.members, reverse=True))
    sups = np.array([net.members[e]["result"].series.sup_norm(s) for e in eps])
    if np.max(sups) <= 0.0:
        return FitReport(0.0, 0.0, True, n_cap, {float(e): 0.0 for e in eps})
    slope, resid = fit_slope(np.log(1.0 / eps), np.log(np.maximum(sups, 1e-300)))
    passed = bool(slope <= n_cap and resid < resid_cap)
    return FitReport(slope, resid, passed, n_cap,
                     {float(e): float(v) for e, v in zip(eps, sups)})


def hs_mode(model: CoefficientModel, u0: Field, params: NetParams,
            forcing: Forcing = Forcing()) -> EpsilonNet:
    """H^s pipeline: data held fixed across epsilon, only coefficients vary."""
    fixed = NetParams(**{**params.__dict__, "mollify_data": False})
    return run_net(model, u0, fixed, forcing)


# ---------------------------------------------------------------------------
# uniqueness


def _perturbed_set(cs: CoefficientSet, eps: float, q: int, N: int) -> CoefficientSet:
    """Coefficients plus eps^q times fixed smooth bumps (symmetric in (i,j))."""
    from .grid import spectral_derivative

    spec = cs.spec
    n = spec.n
    amp = eps**q
    a = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            bump = bump_perturbation(spec, N, seed_shift=0.3 * (i + j))
            arr = cs.a[i][j] + amp * bump
            a[i][j] = arr
            a[j][i] = arr
    da = [[[spectral_derivative(a[i][j], spec, k).real for j in range(n)]
           for i in range(n)] for k in range(n)]
    b = [cs.b[k] + amp * bump_perturbation(spec, N, seed_shift=1.0 + k)
         for k in range(n)]
    V = cs.V + amp * bump_perturbation(spec, N, seed_shift=2.0)
    return CoefficientSet(spec, cs.eps, cs.omega, a, da, b, V)


def _h2_margin(cs: CoefficientSet) -> float:
    A = cs.matrix_at().reshape(-1, cs.n, cs.n)
    sv = np.linalg.svd(A, compute_uv=False)
    return float(np.min(sv))


def uniqueness_probe(model: CoefficientModel, q: int, u0: Field,
                     params: NetParams, forcing: Forcing = Forcing()) -> FitReport:
    """Negligible-in, negligible-out: solve the base and the eps^q-perturbed
    families and fit the difference-norm slope against log eps."""
    if q < 1:
        raise NetError("perturbation order q must be >= 1")
    s = params.s_list[0]
    moll = Mollifier("gaussian")
    eps_used, diffs, dropped = [], [], []
    for eps in params.eps_ladder:
        cs = regularise(model, moll, eps, params.scale, params.spec)
        cs_p = _perturbed_set(cs, eps, q, model.N)
        if _h2_margin(cs_p) <= 0.0:
            dropped.append(eps)  # shrink eps_0: perturbation broke (H2)
            continue
        u0_eps = _mollify_data(u0, params.data_mollifier, eps) \
            if params.mollify_data else u0
        g = Forcing(_mollify_data(forcing.G, params.data_mollifier, eps),
                    forcing.rate) if params.mollify_data else forcing
        # data perturbations eps^q * bump on both slots
        du = Field(params.spec, u0_eps.values + eps**q
                   * bump_perturbation(params.spec, model.N, seed_shift=3.0))
        gG = g.G.values if g.G is not None else 0.0
        g_p = Forcing(Field(params.spec, gG + eps**q
                            * bump_perturbation(params.spec, model.N, seed_shift=4.0)),
                      g.rate)
        dt = min(stable_dt(cs), stable_dt(cs_p))
        base = solve(EvolutionProblem(cs, u0_eps, g, T=params.T, dt=dt,
                                      s_list=(s,), N_weight=params.N_weight),
                     record_states=True)
        pert = solve(EvolutionProblem(cs_p, du, g_p, T=params.T, dt=dt,
                                      s_list=(s,), N_weight=params.N_weight),
                     record_states=True)
        sup_diff = max(
            sobolev_norm(Field(params.spec, a - b), s)
            for a, b in zip(base.states, pert.states)
        )
        eps_used.append(eps)
        diffs.append(sup_diff)
    if len(eps_used) < 4:
        raise NetError(f"fewer than 4 usable epsilons (dropped {dropped})")
    diffs = np.array(diffs)
    values = {float(e): float(d) for e, d in zip(eps_used, diffs)}
    if np.max(diffs) == 0.0:
        return FitReport(float("inf"), 0.0, True, q - 0.5, values,
                         extra={"dropped_eps": dropped})
    slope, resid = fit_slope(np.log(eps_used), np.log(np.maximum(diffs, 1e-300)))
    return FitReport(slope, resid, bool(slope >= q - 0.5), q - 0.5, values,
                     extra={"dropped_eps": dropped})


# ---------------------------------------------------------------------------
# consistency


def consistency_run(model: CoefficientModel, u0: Field, params: NetParams,
                    forcing: Forcing = Forcing(), tol: float = 1e-4) -> FitReport:
    """Compare the epsilon-net against the classical solution of the smooth
    problem; the data mollifier must be of vanishing-moment type."""
    if not model.smooth:
        raise NetError("consistency requires a smooth-coefficient model")
    if params.data_mollifier.kind == "gaussian":
        raise NetError("consistency requires a vanishing-moment data mollifier")
    s = params.s_list[0]
    cs0 = sample(model, params.spec)
    moll = Mollifier("gaussian")
    sets = {e: regularise(model, moll, e, params.scale, params.spec)
            for e in params.eps_ladder}
    dt = min([stable_dt(cs0)] + [stable_dt(cs) for cs in sets.values()])
    classical = solve(
        EvolutionProblem(cs0, u0, forcing, T=params.T, dt=dt, s_list=(s,),
                         N_weight=params.N_weight),
        record_states=True,
    )
    errors = []
    for eps in params.eps_ladder:
        u0_eps = _mollify_data(u0, params.data_mollifier, eps)
        g_eps = Forcing(_mollify_data(forcing.G, params.data_mollifier, eps),
                        forcing.rate)
        run = solve(
            EvolutionProblem(sets[eps], u0_eps, g_eps, T=params.T, dt=dt,
                             s_list=(s,), N_weight=params.N_weight),
            record_states=True,
        )
        err = max(
            sobolev_norm(Field(params.spec, a - b), s)
            for a, b in zip(classical.states, run.states)
        )
        errors.append(err)
    errors = np.array(errors)
    values = {float(e): float(v) for e, v in zip(params.eps_ladder, errors)}
    decreasing = bool(np.all(np.diff(errors) < 0.0))
    final_ok = bool(errors[-1] < tol)
    if np.max(errors) > 0.0:
        slope, resid = fit_slope(np.log(params.eps_ladder),
                                 np.log(np.maximum(errors, 1e-300)))
    else:
        slope, resid = float("inf"), 0.0
    return FitReport(slope, resid, decreasing and final_ok, tol, values,
                     extra={"monotone_decreasing": decreasing,
                            "final_error": float(errors[-1])})
