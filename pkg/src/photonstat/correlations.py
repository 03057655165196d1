"""Photon-counting observables of the dimer.

Zero-delay ``g2(0)`` and the coherence witness work on a stationary
density matrix. Frequency-filtered quantities use ancillary two-level
sensors: each sensor has transition frequency ``omega``, decay ``Gamma``
and couples with strength ``epsilon`` to the detected field ``E+``. For
``epsilon -> 0`` a sensor coherence follows the Lorentzian-filtered field

    E+_{w,G}(t) = (G/2) int_0^inf exp(-(i w + G/2) t') E+(t - t') dt'

as ``<s> ~ -i (2 epsilon / G) E+_{w,G}``, so the filtered intensity is the
sensor population times ``(G / 2 epsilon)^2`` and the filtered
cross-correlation is the normalized sensor cross-population.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dimer_model import E1, E2, EE, ExcitonicStructure, field_operator
from .quantum_core import (
    LindbladSystem,
    build_liouvillian,
    destroy_tls,
    expectation,
    steady_state,
)

INTENSITY_FLOOR = 1e-14
NULL_FRACTION = 1e-10
CONVERGENCE_TOL = 1e-2
EPSILON_DEFAULT = 1e-3
EPSILON_FLOOR = 1e-6
# g2 of balanced incoherent emitters reaches exactly 1; round-off above it
# must not count as a detection
WITNESS_TOL = 1e-9


class ZeroIntensity(ArithmeticError):
    """The detected intensity vanishes; g2 is undefined."""


class ZeroFilteredIntensity(ArithmeticError):
    """A filtered intensity vanishes; the filtered g2 is undefined."""


class SensorNotConverged(RuntimeError):
    """Halving the sensor coupling changed the result by more than 1 %."""


def detected_intensity(rho, E1w: float, E2w: float) -> float:
    """``<E- E+>`` for ``E+ = E1 s1 + E2 s2``."""
    rho = np.asarray(rho)
    n1 = rho[E1, E1].real + rho[EE, EE].real
    n2 = rho[E2, E2].real + rho[EE, EE].real
    return E1w ** 2 * n1 + E2w ** 2 * n2 + 2 * E1w * E2w * rho[E2, E1].real


def peak_intensity_over_phi(rho, theta: float, d1: float = 1.0, d2: float = 1.0) -> float:
    """Maximum over polarizer angle of the detected intensity.

    With ``v = (cos phi, sin phi)`` the field weights are ``E1 = a.v`` and
    ``E2 = b.v``, so the intensity is a quadratic form in ``v`` whose
    maximum is the largest eigenvalue.
    """
    rho = np.asarray(rho)
    a = np.array([d1, 0.0])
    b = d2 * np.array([math.cos(theta), math.sin(theta)])
    n1 = rho[E1, E1].real + rho[EE, EE].real
    n2 = rho[E2, E2].real + rho[EE, EE].real
    m = n1 * np.outer(a, a) + n2 * np.outer(b, b) + rho[E2, E1].real * (np.outer(a, b) + np.outer(b, a))
    return float(np.linalg.eigvalsh(m)[-1])


def near_null(rho, E1w: float, E2w: float, theta: float, d1: float = 1.0, d2: float = 1.0) -> bool:
    """True where the detected intensity is below ``NULL_FRACTION`` of its
    polarizer maximum; g2 and filtered quantities are undefined there."""
    return detected_intensity(rho, E1w, E2w) < NULL_FRACTION * peak_intensity_over_phi(rho, theta, d1, d2)


def g2_zero_delay(rho, E1w: float, E2w: float) -> float:
    """Zero-delay ``g2`` of the polarizer-projected field, from the site
    populations, ``rho_dd`` and ``Re rho_21``."""
    rho = np.asarray(rho)
    denom = (E1w ** 2 * rho[E1, E1].real + E2w ** 2 * rho[E2, E2].real
             + (E1w ** 2 + E2w ** 2) * rho[EE, EE].real
             + 2 * E1w * E2w * rho[E2, E1].real)
    if denom <= INTENSITY_FLOOR:
        raise ZeroIntensity(f"detected intensity {denom:.3g} is zero")
    return 4 * (E1w * E2w) ** 2 * rho[EE, EE].real / denom ** 2


def g2_operator_form(rho, E1w: float, E2w: float) -> float:
    """``<E- E- E+ E+> / <E- E+>^2`` evaluated with operators."""
    ep = field_operator(E1w, E2w)
    em = ep.conj().T
    intensity = expectation(rho, em @ ep).real
    if intensity <= INTENSITY_FLOOR:
        raise ZeroIntensity(f"detected intensity {intensity:.3g} is zero")
    return expectation(rho, em @ em @ ep @ ep).real / intensity ** 2


def independent_emitter_reference(r: float) -> float:
    """``g2(0)`` of two independent, balanced emitters with field ratio
    ``r = E2/E1``: ``4 r^2 / (1 + r^2)^2``, never above 1."""
    if math.isinf(r):
        return 0.0
    return 4 * r * r / (1 + r * r) ** 2


def coherence_witness(rho, E1w: float, E2w: float) -> tuple[bool, float]:
    """``(witnessed, g2 - 1)``. A positive margin is impossible for
    incoherent, balanced emitters; ``witnessed`` requires the margin to
    exceed ``WITNESS_TOL``."""
    margin = g2_zero_delay(rho, E1w, E2w) - 1.0
    return margin > WITNESS_TOL, margin


def single_excitation_spectrum_approx(exc: ExcitonicStructure, E1w: float, E2w: float,
                                      branch: int) -> float:
    """Unnormalized ``|<gg|E+|+->|^2``; ``branch`` is +1 or -1."""
    c, s = exc.c, exc.s
    if branch > 0:
        return (E1w * c + E2w * s) ** 2
    if branch < 0:
        return (E1w * s - E2w * c) ** 2
    raise ValueError("branch must be +1 or -1")


def analytic_filtered_g2_shape(beta_case: float, theta: float, phi: float) -> float:
    """Transition-amplitude estimate of ``g2(w+, w-)`` versus polarizer
    angle for the two limiting mixing angles, up to normalization.

    ``beta_case = 0`` gives ``E1^2 E2^2 / (E1^2 - E2^2)^2`` (``inf`` where
    the denominator vanishes); ``beta_case = pi/2`` gives 1.
    """
    if abs(beta_case - math.pi / 2) < 1e-12:
        return 1.0
    if abs(beta_case) > 1e-12:
        raise ValueError("beta_case must be 0 or pi/2")
    a = math.cos(phi) ** 2
    b = math.cos(theta - phi) ** 2
    num = a * b
    den = (a - b) ** 2
    if den < 1e-28:
        return 0.0 if num < 1e-28 else math.inf
    return num / den


@dataclass(frozen=True)
class SensorConfig:
    omega1: float
    omega2: float
    gamma_filter: float = 1.0
    epsilon: float = EPSILON_DEFAULT

    def check(self, gamma: float = 1.0) -> None:
        if not self.gamma_filter > 0:
            raise ValueError("gamma_filter must be positive")
        if not 0 < self.epsilon <= 1e-2 * min(self.gamma_filter, gamma) * (1 + 1e-12):
            raise ValueError(
                f"epsilon={self.epsilon:g} outside weak-coupling range (0, {1e-2 * min(self.gamma_filter, gamma):g}]")


@dataclass(frozen=True)
class FilteredG2Result:
    value: float
    s1: float
    s2: float
    epsilon_used: float
    convergence_ratio: float


def sensor_system(system: LindbladSystem, emit_op, omegas, gamma_filter: float,
                  epsilon: float) -> LindbladSystem:
    """Attach one two-level sensor per entry of ``omegas`` to ``system``.

    The Hilbert space is ``system x sensor_1 x sensor_2 ...`` with each sensor
    ordered (|0>, |1>). Sensor k gets ``omega_k s_k^+ s_k`` plus
    ``epsilon (E+ s_k^+ + h.c.)`` and decays at ``gamma_filter``.
    """
    d = system.dim
    n = len(omegas)
    emit_op = np.asarray(emit_op, dtype=complex)
    sm = destroy_tls()
    eye2 = np.eye(2, dtype=complex)

    def embed(sys_op, k=None, sens_op=None):
        ops = [sys_op] + [eye2] * n
        if k is not None:
            ops[k + 1] = sens_op
        out = ops[0]
        for op in ops[1:]:
            out = np.kron(out, op)
        return out

    eye_sys = np.eye(d, dtype=complex)
    h = embed(system.hamiltonian)
    channels = [(embed(jump), rate) for jump, rate in system.channels]
    for k, w in enumerate(omegas):
        s_k = embed(eye_sys, k, sm)
        couple = epsilon * embed(emit_op) @ s_k.conj().T
        h = h + w * s_k.conj().T @ s_k + couple + couple.conj().T
        channels.append((s_k, gamma_filter))
    return LindbladSystem(h, tuple(channels))


def _sensor_moments(system, emit_op, omegas, gamma_filter, epsilon):
    """Filtered intensities and (for two sensors) the cross-population."""
    n = len(omegas)
    aug = sensor_system(system, emit_op, omegas, gamma_filter, epsilon)
    amp = 2 * epsilon / gamma_filter
    scale = np.ones(1)
    for _ in range(n):
        scale = np.kron(scale, [1.0, amp])
    scale = np.kron(np.ones(system.dim), scale)
    rho = steady_state(build_liouvillian(aug), scaling=scale)
    # sensor populations read off the diagonal in the sensor occupation bits
    diag = rho.diagonal().real.reshape(system.dim, *([2] * n)).sum(axis=0)
    norm = (gamma_filter / (2 * epsilon)) ** 2
    if n == 1:
        return diag[1] * norm, None
    pop1 = diag[1, :].sum() * norm
    pop2 = diag[:, 1].sum() * norm
    return (pop1, pop2), diag[1, 1] * norm ** 2


def _relative_change(new: float, old: float) -> float:
    if new == old:
        return 0.0
    return abs(new - old) / max(abs(new), abs(old))


def _converged(evaluate, cfg: SensorConfig):
    """Halve epsilon from ``cfg.epsilon`` until successive results agree to
    1 %; return ``(values, epsilon, ratio)`` at the smaller epsilon."""
    eps = cfg.epsilon
    prev = evaluate(eps)
    while True:
        half = eps / 2
        if half < EPSILON_FLOOR:
            raise SensorNotConverged(
                f"no 1% agreement under epsilon-halving down to {EPSILON_FLOOR:g}")
        cur = evaluate(half)
        ratio = max(_relative_change(c, p) for c, p in zip(cur, prev))
        if ratio <= CONVERGENCE_TOL:
            return cur, half, ratio
        prev, eps = cur, half


def filtered_spectrum_result(system: LindbladSystem, emit_op, omega: float,
                             cfg: SensorConfig) -> tuple[float, float, float]:
    """``(S(omega), epsilon_used, convergence_ratio)``; ``cfg.omega1/2``
    are ignored in favor of ``omega``."""
    cfg.check()
    emit_op = np.asarray(emit_op, dtype=complex)
    if not np.any(np.abs(emit_op) > 0):
        return 0.0, cfg.epsilon, 0.0

    def evaluate(eps):
        s, _ = _sensor_moments(system, emit_op, [omega], cfg.gamma_filter, eps)
        # below the floor the population is round-off of a nulled field
        return (0.0 if s <= INTENSITY_FLOOR else s,)

    (s,), eps, ratio = _converged(evaluate, cfg)
    return s, eps, ratio


def filtered_spectrum(system: LindbladSystem, emit_op, omega: float, cfg: SensorConfig) -> float:
    """Stationary Lorentzian-filtered intensity at ``omega`` (filter
    linewidth ``cfg.gamma_filter``, unit peak transmission)."""
    return filtered_spectrum_result(system, emit_op, omega, cfg)[0]


def filtered_g2(system: LindbladSystem, emit_op, cfg: SensorConfig) -> FilteredG2Result:
    """Zero-delay stationary ``g2(omega1, omega2)`` via two sensors."""
    cfg.check()
    emit_op = np.asarray(emit_op, dtype=complex)
    if not np.any(np.abs(emit_op) > 0):
        raise ZeroFilteredIntensity("emission is nulled")

    def evaluate(eps):
        (s1, s2), cross = _sensor_moments(system, emit_op, [cfg.omega1, cfg.omega2],
                                          cfg.gamma_filter, eps)
        if min(s1, s2) <= INTENSITY_FLOOR:
            raise ZeroFilteredIntensity(f"filtered intensities ({s1:.3g}, {s2:.3g})")
        return cross / (s1 * s2), s1, s2

    (value, s1, s2), eps, ratio = _converged(evaluate, cfg)
    return FilteredG2Result(value=float(value), s1=float(s1), s2=float(s2),
                            epsilon_used=eps, convergence_ratio=ratio)
