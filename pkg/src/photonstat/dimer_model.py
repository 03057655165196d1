"""Two coupled two-level emitters under decay and incoherent pumping.

Basis ordering is fixed as (|gg>, |e1>, |e2>, |ee>); ``rho_dd`` is the
(|ee>, |ee>) element. The single-excitation block of the Hamiltonian is

    [[w_s - Delta/2, J], [J, w_s + Delta/2]]

with ``J = R cos(beta)`` and ``Delta/2 = R sin(beta)``, so the peak
splitting ``2R`` is held fixed while ``beta`` moves between resonant,
coupled emitters (``beta = 0``) and detuned, uncoupled ones (``pi/2``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .quantum_core import DimensionMismatch, LindbladSystem, destroy_tls, tensor

GG, E1, E2, EE = 0, 1, 2, 3

_sm = destroy_tls()
_id2 = np.eye(2, dtype=complex)


def _site_lowering():
    # |e1> = (e, g) and |e2> = (g, e) in the tensor basis of emitter 1 x emitter 2,
    # permuted onto the documented ordering (|gg>, |e1>, |e2>, |ee>).
    perm = [0, 2, 1, 3]
    s1 = tensor(_sm, _id2)[np.ix_(perm, perm)]
    s2 = tensor(_id2, _sm)[np.ix_(perm, perm)]
    return s1, s2


SIGMA1, SIGMA2 = _site_lowering()


@dataclass(frozen=True)
class DimerParams:
    R: float
    beta: float
    gamma: float = 1.0
    p1: float = 0.0
    p2: float = 0.0
    omega_sigma: float = 0.0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")
        if not -1e-12 <= self.beta <= math.pi / 2 + 1e-12:
            raise ValueError(f"beta must lie in [0, pi/2], got {self.beta}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.p1 < 0 or self.p2 < 0:
            raise ValueError("pump rates must be non-negative")

    @property
    def J(self) -> float:
        return self.R * math.cos(self.beta)

    @property
    def delta(self) -> float:
        """Site detuning ``Delta``."""
        return 2.0 * self.R * math.sin(self.beta)

    def replace(self, **changes) -> "DimerParams":
        return DimerParams(**{**asdict(self), **changes})


@dataclass(frozen=True)
class ExcitonicStructure:
    """Single-excitation eigenstates ``|+> = c|e1> + s|e2>`` and
    ``|-> = s|e1> - c|e2>`` with energies ``omega_plus/minus``."""

    c: float
    s: float
    xi: float
    omega_plus: float
    omega_minus: float

    @property
    def plus(self) -> np.ndarray:
        return np.array([0, self.c, self.s, 0], dtype=complex)

    @property
    def minus(self) -> np.ndarray:
        return np.array([0, self.s, -self.c, 0], dtype=complex)


@dataclass(frozen=True)
class DetectionGeometry:
    theta: float = math.pi / 2
    phi: float = 0.0
    d1: float = 1.0
    d2: float = 1.0

    def replace(self, **changes) -> "DetectionGeometry":
        return DetectionGeometry(**{**asdict(self), **changes})


@dataclass(frozen=True)
class AnalyticCorrelators:
    n1: float
    n2: float
    coh: complex
    nn: float
    pop_imbalance: float


def dimer_hamiltonian(params: DimerParams) -> np.ndarray:
    ws, half_delta, J = params.omega_sigma, 0.5 * params.delta, params.J
    n1 = SIGMA1.conj().T @ SIGMA1
    n2 = SIGMA2.conj().T @ SIGMA2
    hop = SIGMA1.conj().T @ SIGMA2
    return (ws - half_delta) * n1 + (ws + half_delta) * n2 + J * (hop + hop.conj().T)


def build_dimer_system(params: DimerParams) -> LindbladSystem:
    """Dimer Hamiltonian with decay ``gamma`` and pumps ``p1``, ``p2`` on
    each emitter. Channel order: (s1, gamma), (s2, gamma), (s1+, p1), (s2+, p2)."""
    return LindbladSystem(
        dimer_hamiltonian(params),
        (
            (SIGMA1, params.gamma),
            (SIGMA2, params.gamma),
            (SIGMA1.conj().T, params.p1),
            (SIGMA2.conj().T, params.p2),
        ),
    )


def excitonic_structure(params: DimerParams) -> ExcitonicStructure:
    R = params.R
    J = params.J
    xi = J / (0.5 * params.delta + R)
    # c = 1/sqrt(1 + xi^-2) written to stay finite at xi = 0
    c = abs(xi) / math.sqrt(1.0 + xi * xi)
    s = 1.0 / math.sqrt(1.0 + xi * xi)
    if xi < 0:
        c = -c
    return ExcitonicStructure(c=c, s=s, xi=xi,
                              omega_plus=params.omega_sigma + R,
                              omega_minus=params.omega_sigma - R)


def field_weights(geom: DetectionGeometry) -> tuple[float, float]:
    """Polarizer-projected field amplitudes ``(E1, E2)``."""
    return geom.d1 * math.cos(geom.phi), geom.d2 * math.cos(geom.theta - geom.phi)


def field_operator(E1: float, E2: float) -> np.ndarray:
    """Positive-frequency detected field ``E1 s1 + E2 s2``."""
    return E1 * SIGMA1 + E2 * SIGMA2


def analytic_steady_correlators(params: DimerParams) -> AnalyticCorrelators:
    """Closed-form stationary correlators of the pumped dimer."""
    g, J, delta = params.gamma, params.J, params.delta
    p1, p2 = params.p1, params.p2
    pt1, pt2 = p1 + g, p2 + g
    chi = (pt1 + pt2) ** 2 + 4 * delta ** 2
    den = 4 * J ** 2 * (pt1 + pt2) ** 2 + pt1 * pt2 * chi
    n1 = (4 * J ** 2 * (pt1 + pt2) * (p1 + p2) + p1 * pt2 * chi) / den
    n2 = (4 * J ** 2 * (pt1 + pt2) * (p1 + p2) + pt1 * p2 * chi) / den
    # Detuning term signed for emitter 1 sitting at w_s - Delta/2, matching
    # dimer_hamiltonian; the opposite sign belongs to the mirrored dimer.
    coh = -2j * J * g * (pt1 - pt2) * (pt1 + pt2 - 2j * delta) / den
    nn = (4 * J ** 2 * (p1 + p2) ** 2 + p1 * p2 * chi) / den
    imbalance = (p1 - p2) * g * chi / den
    return AnalyticCorrelators(n1=n1, n2=n2, coh=complex(coh), nn=nn, pop_imbalance=imbalance)


def excitonic_coherence(rho, exc: ExcitonicStructure) -> complex:
    """``rho_{-+} = cs (rho_11 - rho_22) + s^2 rho_21 - c^2 rho_12`` in site labels."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise DimensionMismatch(f"expected a 4x4 dimer state, got {rho.shape}")
    c, s = exc.c, exc.s
    return complex(c * s * (rho[E1, E1] - rho[E2, E2]) + s * s * rho[E2, E1] - c * c * rho[E1, E2])


def factorized_state(n1: float, n2: float | None = None) -> np.ndarray:
    """Product state of two incoherent emitters with excited populations
    ``n1`` and ``n2``. With ``n1 == n2`` it is the coherence-free,
    balanced reference state for which ``<s1+ s2+ s1 s2> = <n1><n2>``."""
    n2 = n1 if n2 is None else n2
    return np.diag([(1 - n1) * (1 - n2), n1 * (1 - n2), (1 - n1) * n2, n1 * n2]).astype(complex)
