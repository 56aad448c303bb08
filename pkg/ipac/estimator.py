"""Maximum-likelihood UE positioning from delay, Doppler and AoD observations.

The likelihood is evaluated at the *assumed* satellite states, which may be
off from the states that produced the observations (ephemeris mismatch).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from numpy.random import Generator
from numpy.typing import NDArray
from scipy import linalg

from ipac.errors import ConfigurationError, DegenerateGeometryError, UnlocalizableGeometryError
from ipac.fim import ObservationNoise, aod_bases, link_noises, observation_fim, position_crb
from ipac.geometry import (
    EARTH_RADIUS,
    SPEED_OF_LIGHT,
    SatelliteState,
    array_frame,
    as_ecef,
    check_ue_position,
    direction_angles,
    los_geometry,
)
from ipac.streams import derive_rng

if TYPE_CHECKING:
    from ipac.harness import Scenario

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 100
DECREMENT_TOLERANCE = 1e-6
STEP_TOLERANCE_M = 1e-4
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 30


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - angle, 2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    delays: NDArray[np.float64]
    dopplers: NDArray[np.float64]
    aod_az: NDArray[np.float64] | None
    aod_el: NDArray[np.float64] | None
    noises: tuple[ObservationNoise, ...]
    assumed_sats: tuple[SatelliteState, ...]
    carrier_hz: float

    def __post_init__(self):
        object.__setattr__(self, "noises", tuple(self.noises))
        object.__setattr__(self, "assumed_sats", tuple(self.assumed_sats))
        count = len(self.assumed_sats)
        if count == 0:
            raise ValueError("observation set needs at least one satellite")
        if len(self.delays) != count or len(self.dopplers) != count or len(self.noises) != count:
            raise ValueError("one delay, Doppler and noise record is needed per satellite")
        if (self.aod_az is None) != (self.aod_el is None):
            raise ValueError("AoD azimuth and elevation must be both present or both absent")
        if self.has_angles:
            if len(self.aod_az) != count or len(self.aod_el) != count:
                raise ValueError("one AoD pair is needed per satellite")
            if not all(noise.has_angles for noise in self.noises):
                raise ValueError("angle observations need angle variances for every satellite")

    def __len__(self):
        return len(self.assumed_sats)

    @property
    def has_angles(self) -> bool:
        return self.aod_az is not None

    def with_assumed(self, sats: Sequence[SatelliteState]) -> "ObservationSet":
        return ObservationSet(self.delays, self.dopplers, self.aod_az, self.aod_el,
                              self.noises, tuple(sats), self.carrier_hz)

    @cached_property
    def _model(self) -> dict:
        # Stacked per-satellite constants used on every likelihood evaluation
        variances = np.array([noise.variances()[: 4 if self.has_angles else 2] for noise in self.noises])
        return {
            "positions": np.array([sat.position for sat in self.assumed_sats]),
            "velocities": np.array([sat.velocity for sat in self.assumed_sats]),
            "frames": np.array([array_frame(sat) for sat in self.assumed_sats]) if self.has_angles else None,
            "inv_sigma": 1.0 / np.sqrt(variances),
        }


@dataclass(frozen=True, eq=False)
class EstimationResult:
    position: NDArray[np.float64]
    cost: float
    iterations: int
    converged: bool
    cost_history: tuple[float, ...] = ()


def _noise_list(noise, count: int) -> list[ObservationNoise]:
    if isinstance(noise, ObservationNoise):
        return [noise] * count
    noises = list(noise)
    if len(noises) != count:
        raise ValueError(f"{count} satellites but {len(noises)} noise records")
    return noises


def _observe(true_ue, true_sats: Sequence[SatelliteState], noises: Sequence[ObservationNoise],
             unit: NDArray[np.float64], carrier_hz: float) -> ObservationSet:
    """Noisy observations from standard-normal draws ``unit`` (one row of four per satellite)."""
    has_angles = noises[0].has_angles
    delays, dopplers, azimuths, elevations = [], [], [], []
    for sat, noise, draw in zip(true_sats, noises, unit):
        geom = los_geometry(sat, true_ue, carrier_hz)
        delays.append(geom.delay + math.sqrt(noise.var_delay) * draw[0])
        dopplers.append(geom.doppler + math.sqrt(noise.var_doppler) * draw[1])
        if not has_angles:
            continue
        # Rotate the true direction along a Gaussian tangent offset
        e_polar, e_azimuth = aod_bases(geom.aod_azimuth, geom.aod_elevation)
        offset = math.sqrt(noise.var_az) * draw[2] * e_azimuth + math.sqrt(noise.var_el) * draw[3] * e_polar
        angle = float(np.linalg.norm(offset))
        direction = array_frame(sat) @ ((as_ecef(true_ue) - sat.position) / geom.range)
        if angle > 0.0:
            direction = math.cos(angle) * direction + math.sin(angle) * offset / angle
        az, el = direction_angles(direction)
        azimuths.append(az)
        elevations.append(el)

    return ObservationSet(
        delays=np.array(delays),
        dopplers=np.array(dopplers),
        aod_az=np.array(azimuths) if has_angles else None,
        aod_el=np.array(elevations) if has_angles else None,
        noises=tuple(noises),
        assumed_sats=tuple(true_sats),
        carrier_hz=carrier_hz,
    )


def simulate_observations(true_ue, true_sats: Sequence[SatelliteState], noise, rng: Generator,
                          carrier_hz: float) -> ObservationSet:
    """Noiseless LoS observations plus independent Gaussian errors.

    ``noise`` is one ObservationNoise shared by all satellites or one per
    satellite. The returned set assumes the true satellite states; use
    ``ObservationSet.with_assumed`` to model ephemeris mismatch.
    """
    noises = _noise_list(noise, len(true_sats))
    unit = rng.standard_normal((len(true_sats), 4))
    return _observe(check_ue_position(true_ue), true_sats, noises, unit, carrier_hz)


def residuals(p, obs: ObservationSet) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Whitened residuals and their Jacobian with respect to ``p``."""
    model = obs._model
    p = np.asarray(p, dtype=float)
    offset = p - model["positions"]
    ranges = np.linalg.norm(offset, axis=1)
    if np.any(ranges == 0.0):
        raise DegenerateGeometryError("candidate position coincides with a satellite")
    u = offset / ranges[:, None]
    inv_sigma = model["inv_sigma"]
    scale = obs.carrier_hz / SPEED_OF_LIGHT

    v_dot_u = np.einsum("ij,ij->i", model["velocities"], u)
    delay_res = (obs.delays - ranges / SPEED_OF_LIGHT) * inv_sigma[:, 0]
    doppler_res = (obs.dopplers + v_dot_u * scale) * inv_sigma[:, 1]
    delay_jac = -(u / SPEED_OF_LIGHT) * inv_sigma[:, :1]
    tangential_v = model["velocities"] - v_dot_u[:, None] * u
    doppler_jac = (tangential_v / ranges[:, None] * scale) * inv_sigma[:, 1:2]

    res = [delay_res, doppler_res]
    jac = [delay_jac, doppler_jac]
    if obs.has_angles:
        frames = model["frames"]
        d = np.einsum("sij,sj->si", frames, u)
        polar = np.arctan2(np.hypot(d[:, 0], d[:, 1]), d[:, 2])
        azimuth = np.arctan2(d[:, 1], d[:, 0])
        cos_p, sin_p = np.cos(polar), np.sin(polar)
        cos_a, sin_a = np.cos(azimuth), np.sin(azimuth)
        e_polar = np.stack([cos_p * cos_a, cos_p * sin_a, -sin_p], axis=1)
        e_azimuth = np.stack([-sin_a, cos_a, np.zeros_like(sin_a)], axis=1)
        polar_grad = np.einsum("sji,sj->si", frames, e_polar) / ranges[:, None]
        arc_grad = np.einsum("sji,sj->si", frames, e_azimuth) / ranges[:, None]

        d_az = wrap_angle(obs.aod_az - azimuth)
        arc_res = sin_p * d_az * inv_sigma[:, 2]
        el_res = (obs.aod_el - polar) * inv_sigma[:, 3]
        arc_jac = ((cos_p * d_az)[:, None] * polar_grad - arc_grad) * inv_sigma[:, 2:3]
        el_jac = -polar_grad * inv_sigma[:, 3:4]
        res += [arc_res, el_res]
        jac += [arc_jac, el_jac]
    return np.concatenate(res), np.vstack(jac)


def nll(p, obs: ObservationSet) -> tuple[float, NDArray[np.float64]]:
    """Gaussian negative log-likelihood (constant dropped) and its gradient."""
    res, jac = residuals(p, obs)
    return 0.5 * float(res @ res), jac.T @ res


def _newton_step(jac: NDArray[np.float64], res: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    grad = jac.T @ res
    hessian = jac.T @ jac
    try:
        step = -linalg.solve(hessian, grad, assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        step = -linalg.lstsq(hessian, grad)[0]
    return grad, step


def _gauss_newton(start, obs: ObservationSet, max_iterations: int = MAX_ITERATIONS) -> EstimationResult:
    p = np.array(start, dtype=float)
    res, jac = residuals(p, obs)
    cost = 0.5 * float(res @ res)
    history = [cost]
    converged = False
    iterations = 0
    while iterations < max_iterations:
        grad, step = _newton_step(jac, res)
        slope = float(grad @ step)
        if math.sqrt(max(-slope, 0.0)) < DECREMENT_TOLERANCE:
            converged = True
            break
        # A sub-tolerance step is tried once and ends the run either way
        small = float(np.linalg.norm(step)) < STEP_TOLERANCE_M

        # Armijo backtracking
        t = 1.0
        accepted = None
        for _ in range(1 if small else MAX_BACKTRACKS):
            candidate = p + t * step
            try:
                c_res, c_jac = residuals(candidate, obs)
            except DegenerateGeometryError:
                t *= 0.5
                continue
            c_cost = 0.5 * float(c_res @ c_res)
            if c_cost <= cost + ARMIJO_C * t * slope:
                accepted = (candidate, c_res, c_jac, c_cost)
                break
            t *= 0.5
        if accepted is None:
            converged = small
            break

        iterations += 1
        moved = float(np.linalg.norm(accepted[0] - p))
        p, res, jac, cost = accepted
        history.append(cost)
        if moved < STEP_TOLERANCE_M:
            converged = True
            break

    p.setflags(write=False)
    return EstimationResult(position=p, cost=cost, iterations=iterations, converged=converged,
                            cost_history=tuple(history))


def ground_grid(center, points: int, span_m: float) -> NDArray[np.float64]:
    """``points x points`` starts on the Earth sphere, spanning ``span_m`` east and north of ``center``."""
    center = as_ecef(center)
    up = center / np.linalg.norm(center)
    east = np.cross([0.0, 0.0, 1.0], up)
    if np.linalg.norm(east) < 1e-12:
        east = np.array([0.0, 1.0, 0.0])
    east = east / np.linalg.norm(east)
    north = np.cross(up, east)
    offsets = np.linspace(-span_m / 2.0, span_m / 2.0, points) if points > 1 else np.zeros(1)
    starts = np.array([center + a * east + b * north for b in offsets for a in offsets])
    return EARTH_RADIUS * starts / np.linalg.norm(starts, axis=1, keepdims=True)


def ml_estimate(obs: ObservationSet, init, multi_start: bool = True, grid_points: int = 5,
                grid_span_m: float = 200e3) -> EstimationResult:
    """Multi-start Gauss-Newton; the lowest-cost converged run wins."""
    starts = ground_grid(init, grid_points, grid_span_m) if multi_start else [as_ecef(init)]
    runs = []
    for start in starts:
        try:
            runs.append(_gauss_newton(start, obs))
        except DegenerateGeometryError as exc:
            logger.debug("start %s skipped: %s", np.round(start), exc)
    if not runs:
        raise DegenerateGeometryError("every start position is degenerate")

    converged = [run for run in runs if run.converged]
    best = min(converged or runs, key=lambda run: run.cost)
    if not converged:
        logger.warning("no start converged; best cost %.6g after %d iterations", best.cost, best.iterations)
    return best


def apply_orbit_mismatch(sats: Sequence[SatelliteState], magnitude_m: float, rng: Generator) -> list[SatelliteState]:
    """Offset every satellite position by ``magnitude_m`` along an independent uniform direction."""
    if magnitude_m < 0.0:
        raise ValueError(f"mismatch magnitude must be >= 0, got {magnitude_m}")
    assumed = []
    for sat in sats:
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        if magnitude_m == 0.0:
            assumed.append(sat)
            continue
        assumed.append(SatelliteState(sat.id, sat.position + magnitude_m * direction, sat.velocity))
    return assumed


def _rmse_point(scenario: "Scenario", mismatch_idx: int, mismatch_m: float, sigma_ns: float,
                trials: int, seed: int) -> tuple[float, float]:
    ue = scenario.reference_ue()
    sats = scenario.satellites()
    reference = link_noises(sats, ue, scenario.tx_mode, scenario.array(), scenario.single_antenna, scenario.rf())
    # Every observation std scales with the satellite's delay std
    noises = [noise.scaled((sigma_ns * 1e-9) ** 2 / noise.var_delay) for noise in reference]
    try:
        crb = position_crb(observation_fim(sats, ue, noises, scenario.carrier_hz, use_angles=not scenario.single_antenna))
    except UnlocalizableGeometryError as exc:
        logger.warning("matched CRB unavailable: %s", exc)
        crb = math.inf

    squared = np.empty(trials)
    for trial in range(trials):
        # Same mismatch and unit draws at every sigma of this mismatch level
        rng = derive_rng(seed, mismatch_idx, trial)
        assumed = apply_orbit_mismatch(sats, mismatch_m, rng)
        unit = rng.standard_normal((len(sats), 4))
        obs = _observe(ue, sats, noises, unit, scenario.carrier_hz).with_assumed(assumed)
        # Multi-start grid centred on a coarse location prior, not the truth
        prior = ue + rng.normal(0.0, scenario.prior_sigma_m / math.sqrt(3.0), size=3)
        result = ml_estimate(obs, prior, grid_points=scenario.ml_grid_points, grid_span_m=scenario.ml_grid_span_m)
        squared[trial] = float(np.sum((result.position - ue) ** 2))

    rmse = math.sqrt(float(np.mean(squared)))
    logger.info("mismatch %.0f m, delay sigma %.4g ns: RMSE %.4g m, CRB %.4g m", mismatch_m, sigma_ns, rmse, crb)
    return rmse, crb


def rmse_sweep(delay_sigma_grid_ns: Sequence[float], mismatch_levels_m: Sequence[float], trials: int,
               scenario: "Scenario", seed: int) -> pd.DataFrame:
    """Positioning RMSE of the ML estimator against the matched CRB."""
    if len(delay_sigma_grid_ns) == 0 or len(mismatch_levels_m) == 0:
        raise ConfigurationError("rmse sweep needs non-empty sigma and mismatch grids")
    if trials < 1:
        raise ConfigurationError(f"rmse sweep needs at least one trial, got {trials}")
    if trials < 100:
        logger.warning("rmse sweep with %d trials per point; RMSE estimates will be rough", trials)

    points = [(mi, float(m), float(sigma)) for mi, m in enumerate(mismatch_levels_m) for sigma in delay_sigma_grid_ns]
    results = Parallel(n_jobs=scenario.workers)(
        delayed(_rmse_point)(scenario, mi, m, sigma, trials, seed) for mi, m, sigma in points
    )
    return pd.DataFrame({
        "mismatch_m": [m for _, m, _ in points],
        "delay_sigma_ns": [sigma for _, _, sigma in points],
        "rmse_m": [rmse for rmse, _ in results],
        "crb_m": [crb for _, crb in results],
        "trials": trials,
    })
