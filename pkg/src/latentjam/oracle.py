"""Analytic and Monte-Carlo ground truth for the linear-Gaussian jamming game.

A transmitter sends alpha*x through an additive channel carrying fixed
noise n and a jammer signal z; a linear decoder estimates x from the sum.
In the isotropic case the saddle point is closed-form: gaussian jammer at
full power, distortion D* = sigma_x^2 (sigma_n^2 + P_a) / (P_t + sigma_n^2
+ P_a). Three checks live here: the closed form vs Monte-Carlo, the saddle
inequalities under strategy perturbations, and the characteristic-function
matching condition that is necessary and sufficient for the optimal
estimator to be linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DegenerateGameError, NumericError
from .rng import Rng, derive_seed

# ============================================================
# Specs and strategies
# ============================================================


@dataclass
class OracleSpec:
    """Per-dimension game parameters for the isotropic linear-Gaussian game."""

    sigma_x_sq: float = 1.0
    P_t: float = 1.0
    P_a: float = 1.0
    sigma_n_sq: float = 0.0
    k: int = 1

    def __post_init__(self):
        if self.sigma_x_sq < 0 or self.sigma_n_sq < 0 or self.P_t < 0 or self.P_a < 0:
            raise ConfigError("variances and powers must be nonnegative")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")

    def theoretical_beta(self, power: Optional[float] = None) -> float:
        """Jammer gain so that beta^2 (sigma_n^2 + sigma_x^2) hits the power cap."""
        p = self.P_a if power is None else power
        denom = self.sigma_n_sq + self.sigma_x_sq
        if denom == 0:
            raise DegenerateGameError("scaled-source jammer undefined for a zero-variance source")
        return float(np.sqrt(p / denom))


@dataclass
class LinearStrategy:
    """Scalar per-dimension gains plus the jammer's distribution family.

    jammer is (family, param): ("gaussian", variance), ("uniform", variance)
    or ("scaled_source", beta). decoder_gain may be the string "optimal",
    which resolves to the minimum-MSE gain Cov(x, yhat)/Var(yhat) for the
    given game parameters.
    """

    encoder_gain: float
    decoder_gain: Union[float, str]
    jammer: tuple = ("gaussian", 1.0)

    def jammer_variance(self, spec: OracleSpec) -> float:
        family, param = self.jammer
        if family in ("gaussian", "uniform"):
            return float(param)
        if family == "scaled_source":
            return float(param) ** 2 * (spec.sigma_n_sq + spec.sigma_x_sq)
        raise ConfigError(f"unknown jammer family '{family}'")

    def check_feasible(self, spec: OracleSpec) -> None:
        if self.encoder_gain ** 2 * spec.sigma_x_sq > spec.P_t + 1e-9:
            raise ConfigError(
                f"encoder gain {self.encoder_gain} violates transmit power {spec.P_t}")
        if self.jammer_variance(spec) > spec.P_a + 1e-9:
            raise ConfigError(
                f"jammer variance {self.jammer_variance(spec)} violates jam power {spec.P_a}")


def saddle_strategy(spec: OracleSpec) -> LinearStrategy:
    """Full-power encoder, MMSE decoder, full-power gaussian jammer."""
    if spec.sigma_x_sq == 0:
        raise DegenerateGameError("zero-variance source has no meaningful encoder gain")
    if spec.P_t == 0:
        raise DegenerateGameError("zero transmit power leaves the codec side of the game empty")
    alpha = float(np.sqrt(spec.P_t / spec.sigma_x_sq))
    return LinearStrategy(alpha, "optimal", ("gaussian", spec.P_a))


# ============================================================
# Closed form and Monte-Carlo game value
# ============================================================


def scalar_saddle_distortion(spec: OracleSpec) -> float:
    """Per-dimension distortion at the saddle point."""
    denom = spec.P_t + spec.sigma_n_sq + spec.P_a
    if denom == 0:
        raise DegenerateGameError("P_t + sigma_n_sq + P_a is zero; the game has no signal at all")
    return spec.sigma_x_sq * (spec.sigma_n_sq + spec.P_a) / denom


@dataclass
class McResult:
    value: float
    std_error: float
    samples: int


def resolve_decoder_gain(spec: OracleSpec, strategy: LinearStrategy) -> float:
    """Closed-form Cov(x, yhat)/Var(yhat) when the decoder asks for "optimal"."""
    if isinstance(strategy.decoder_gain, str):
        if strategy.decoder_gain != "optimal":
            raise ConfigError(f"unknown decoder gain '{strategy.decoder_gain}'")
        alpha = strategy.encoder_gain
        var_y = alpha ** 2 * spec.sigma_x_sq + spec.sigma_n_sq + strategy.jammer_variance(spec)
        if var_y == 0:
            return 0.0
        return alpha * spec.sigma_x_sq / var_y
    return float(strategy.decoder_gain)


def _draw_jammer(spec: OracleSpec, strategy: LinearStrategy, shape, rng: Rng) -> np.ndarray:
    family, param = strategy.jammer
    if family == "gaussian":
        return np.sqrt(param) * rng.normal(shape)
    if family == "uniform":
        half = np.sqrt(3.0 * param)
        return half * (2.0 * rng.uniform(shape) - 1.0)
    if family == "scaled_source":
        # The certificate form beta*(n - x) realized with the jammer's own
        # independent draws; in law this is N(0, beta^2 (sigma_n^2 + sigma_x^2)).
        x_own = np.sqrt(spec.sigma_x_sq) * rng.normal(shape)
        n_own = np.sqrt(spec.sigma_n_sq) * rng.normal(shape)
        return param * (n_own - x_own)
    raise ConfigError(f"unknown jammer family '{family}'")


def mc_game_value(spec: OracleSpec, strategy: LinearStrategy, samples: int, seed: int) -> McResult:
    """Monte-Carlo per-dimension MSE of xhat = gamma (alpha x + n + z)."""
    if samples < 10_000:
        raise ConfigError(f"mc_game_value needs >= 1e4 samples, got {samples}")
    strategy.check_feasible(spec)
    rng = Rng(seed)
    rows = max(2, samples // spec.k)
    shape = (rows, spec.k)
    x = np.sqrt(spec.sigma_x_sq) * rng.spawn("x").normal(shape)
    n = np.sqrt(spec.sigma_n_sq) * rng.spawn("n").normal(shape) if spec.sigma_n_sq > 0 else 0.0
    z = _draw_jammer(spec, strategy, shape, rng.spawn("z"))
    gamma = resolve_decoder_gain(spec, strategy)
    err = x - gamma * (strategy.encoder_gain * x + n + z)
    sq = (err * err).ravel()
    return McResult(float(sq.mean()), float(sq.std() / np.sqrt(sq.size)), sq.size)


# ============================================================
# Saddle-inequality verification
# ============================================================


@dataclass
class SaddleRow:
    name: str
    side: str  # "jammer" or "codec"
    value: float
    std_error: float
    ok: bool


@dataclass
class SaddleReport:
    j_star: float
    saddle_mc: McResult
    rows: list
    max_jammer_gain: float
    max_codec_loss: float
    passed: bool


def default_perturbations(spec: OracleSpec) -> list:
    """(name, side, strategy) triples: every jammer deviation should lower J,
    every codec deviation should raise it."""
    alpha = saddle_strategy(spec).encoder_gain
    gamma_star = resolve_decoder_gain(spec, saddle_strategy(spec))
    rows = []
    for s in (0.25, 0.5, 0.75):
        rows.append((f"jammer/gaussian-{s}Pa", "jammer",
                     LinearStrategy(alpha, "optimal", ("gaussian", s * spec.P_a))))
    for s in (0.5, 1.0):
        rows.append((f"jammer/uniform-{s}Pa", "jammer",
                     LinearStrategy(alpha, "optimal", ("uniform", s * spec.P_a))))
        rows.append((f"jammer/scaled-source-{s}Pa", "jammer",
                     LinearStrategy(alpha, "optimal",
                                    ("scaled_source", spec.theoretical_beta(s * spec.P_a)))))
    # encoder can only scale down: upscaling breaks power feasibility
    for s in (0.5, 0.75):
        rows.append((f"codec/alpha-x{s}", "codec",
                     LinearStrategy(s * alpha, "optimal", ("gaussian", spec.P_a))))
    for s in (0.0, 0.5, 0.75, 1.25, 1.5):
        rows.append((f"codec/gamma-x{s}", "codec",
                     LinearStrategy(alpha, s * gamma_star, ("gaussian", spec.P_a))))
    return rows


def saddle_verify(spec: OracleSpec, perturbations=None, samples: int = 400_000,
                  seed: int = 0) -> SaddleReport:
    """Check J(jammer dev) <= J* and J(codec dev) >= J* within 3 standard errors."""
    rows_in = default_perturbations(spec) if perturbations is None else perturbations
    jam = [r for r in rows_in if r[1] == "jammer"]
    cod = [r for r in rows_in if r[1] == "codec"]
    if len(jam) < 5 or len(cod) < 5:
        raise ConfigError(f"perturbation grid too small: {len(jam)} jammer, {len(cod)} codec rows")
    j_star = scalar_saddle_distortion(spec)
    saddle_mc = mc_game_value(spec, saddle_strategy(spec), samples, derive_seed(seed, "saddle"))
    rows = []
    max_gain = -np.inf
    max_loss = -np.inf
    for name, side, strat in rows_in:
        res = mc_game_value(spec, strat, samples, derive_seed(seed, f"grid/{name}"))
        if side == "jammer":
            ok = res.value <= j_star + 3.0 * res.std_error
            max_gain = max(max_gain, res.value - j_star)
        else:
            ok = res.value >= j_star - 3.0 * res.std_error
            max_loss = max(max_loss, j_star - res.value)
        rows.append(SaddleRow(name, side, res.value, res.std_error, ok))
    return SaddleReport(j_star, saddle_mc, rows, float(max_gain), float(max_loss),
                        all(r.ok for r in rows))


# ============================================================
# Matching condition (characteristic-function residual)
# ============================================================


@dataclass
class MatchingSpec:
    """Diagonalized matching-condition data for S = Sigma Lambda_X Sigma Lambda_Z^-1.

    sigma, lambda_x, lambda_z hold the diagonals; q_x, q_z are the
    orthonormal eigenbases. The evaluation grid is axis-aligned: omega =
    t * e_i for each dimension i and each radius t.
    """

    sigma: np.ndarray
    lambda_x: np.ndarray
    lambda_z: np.ndarray
    q_x: np.ndarray
    q_z: np.ndarray
    radii: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    step: float = 0.05

    def __post_init__(self):
        k = len(self.sigma)
        for q, label in ((self.q_x, "q_x"), (self.q_z, "q_z")):
            if not np.allclose(q.T @ q, np.eye(k), atol=1e-10):
                raise ConfigError(f"{label} is not orthonormal within 1e-10")
        if np.any(self.sigma <= 0) or np.any(self.lambda_x <= 0) or np.any(self.lambda_z <= 0):
            raise ConfigError("sigma and eigenvalue diagonals must be positive")
        if max(self.radii) > 1.0 + 1e-12:
            raise ConfigError("omega grid must stay within ||omega|| <= 1")
        if self.step <= 0:
            raise ConfigError("finite-difference step must be positive")

    @property
    def s_diag(self) -> np.ndarray:
        return self.sigma * self.lambda_x * self.sigma / self.lambda_z


def isotropic_matching(spec: OracleSpec, kappa: Optional[float] = None,
                       radii=(0.0, 0.25, 0.5, 0.75, 1.0), step: float = 0.05) -> MatchingSpec:
    """Identity eigenbases, Sigma = sqrt(P_t/sigma_x^2) I, Lambda_Z = (sigma_n^2 + kappa) I."""
    if spec.sigma_x_sq <= 0:
        raise DegenerateGameError("matching condition needs a nondegenerate source")
    if spec.P_t == 0:
        raise DegenerateGameError("zero transmit power gives a degenerate power allocation")
    kappa = spec.P_a if kappa is None else kappa
    k = spec.k
    eye = np.eye(k)
    return MatchingSpec(
        sigma=np.full(k, np.sqrt(spec.P_t / spec.sigma_x_sq)),
        lambda_x=np.full(k, spec.sigma_x_sq),
        lambda_z=np.full(k, spec.sigma_n_sq + kappa),
        q_x=eye, q_z=eye, radii=tuple(radii), step=step)


def matching_samples(spec: OracleSpec, jammer: tuple, samples: int, seed: int):
    """Draw (X, N+Z) sample blocks for matching_residual."""
    rng = Rng(seed)
    shape = (samples, spec.k)
    x = np.sqrt(spec.sigma_x_sq) * rng.spawn("x").normal(shape)
    n = np.sqrt(spec.sigma_n_sq) * rng.spawn("n").normal(shape) if spec.sigma_n_sq > 0 else 0.0
    family, param = jammer
    if family == "gaussian":
        z = np.sqrt(param) * rng.spawn("z").normal(shape)
    elif family == "uniform":
        half = np.sqrt(3.0 * param)
        z = half * (2.0 * rng.spawn("z").uniform(shape) - 1.0)
    else:
        raise ConfigError(f"unknown jammer family '{family}' for matching samples")
    return x, n + z


def _log_cf_slope(column: np.ndarray, t: float, h: float) -> complex:
    """Central difference of log E[exp(i w column)] at w = t."""
    f_hi = np.mean(np.exp(1j * (t + h) * column))
    f_lo = np.mean(np.exp(1j * (t - h) * column))
    if abs(f_hi) < 0.1 or abs(f_lo) < 0.1:
        raise NumericError(f"characteristic function magnitude below 0.1 near w={t}; grid too wide")
    return (np.log(f_hi) - np.log(f_lo)) / (2.0 * h)


def matching_residual(samples_x: np.ndarray, samples_zn: np.ndarray,
                      matching: MatchingSpec) -> float:
    """Max over grid and dims of |dlogF_A/dw_i - S_i dlogF_B/dw_i|.

    A = Sigma Q_X^T X and B = Q_Z^T (N+Z); both log-CFs are quadratic with
    ratio exactly S when the jammer-plus-noise is Gaussian matched to the
    source, so the residual is a direct linearity-of-estimation probe.
    """
    x = np.asarray(samples_x, dtype=np.float64)
    zn = np.asarray(samples_zn, dtype=np.float64)
    if x.shape[0] < 100_000 or zn.shape[0] < 100_000:
        raise ConfigError("matching_residual needs >= 1e5 samples per block")
    a = (x @ matching.q_x) * matching.sigma[None, :]
    b = zn @ matching.q_z
    s = matching.s_diag
    h = matching.step
    worst = 0.0
    for i in range(a.shape[1]):
        for t in matching.radii:
            lhs = _log_cf_slope(a[:, i], t, h)
            rhs = _log_cf_slope(b[:, i], t, h)
            worst = max(worst, abs(lhs - s[i] * rhs))
    return worst
