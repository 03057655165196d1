"""Dense Lindblad engine: operators, Liouvillians, steady states, evolution
and quantum-jump trajectories.

Conventions
-----------
Operators are plain ``numpy`` complex arrays. Energies and rates are in
units of the emitter decay rate (``gamma = 1``, ``hbar = 1``).

The master equation is

    drho/dt = -i[H, rho] + sum_k (rate_k / 2) * D_k{rho},
    D_k{rho} = 2 L rho L^+ - L^+ L rho - rho L^+ L,

so a channel ``(L, rate)`` depletes ``<L^+ L>`` at ``rate``.

Density matrices are vectorized row-major (``rho.reshape(-1)``), for which
``vec(A rho B) = kron(A, B.T) @ vec(rho)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

HERMITIAN_TOL = 1e-12
DEGENERACY_TOL = 1e-8
MAX_JUMP_PROBABILITY = 0.1


class DimensionMismatch(ValueError):
    """Operators that must share a Hilbert space do not."""


class DegenerateSteadyState(RuntimeError):
    """The Liouvillian kernel is not one-dimensional."""


class StepTooLarge(RuntimeError):
    """Per-step jump probability of a trajectory exceeded the guard."""


class IntegrationError(RuntimeError):
    """The adaptive integrator failed (typically step-size underflow)."""


def as_operator(a, dim: int | None = None, hermitian: bool = False) -> np.ndarray:
    """Return ``a`` as a square complex array, validating shape and, if
    requested, Hermiticity."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"operator must be square, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionMismatch(f"operator has dim {a.shape[0]}, expected {dim}")
    if hermitian and np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise ValueError("operator is not Hermitian")
    return a


def check_density_matrix(rho, tol: float = 1e-10, positivity_tol: float = 1e-9) -> np.ndarray:
    """Validate the density-matrix invariants and return ``rho`` as an array."""
    rho = as_operator(rho)
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real:.3g}, not 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -positivity_tol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def ket2dm(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def destroy_tls() -> np.ndarray:
    """Two-level lowering operator in the ordering (|g>, |e>)."""
    return np.array([[0, 1], [0, 0]], dtype=complex)


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product with ``a`` as the slow index."""
    return np.kron(as_operator(a), as_operator(b))


def tensor(*ops) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = tensor_product(out, op)
    return out


@dataclass(frozen=True)
class LindbladSystem:
    """Hamiltonian plus a list of ``(jump_operator, rate)`` channels."""

    hamiltonian: np.ndarray
    channels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        h = as_operator(self.hamiltonian, hermitian=True)
        chans = []
        for jump, rate in self.channels:
            if rate < 0:
                raise ValueError(f"channel rate must be non-negative, got {rate}")
            chans.append((as_operator(jump, dim=h.shape[0]), float(rate)))
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "channels", tuple(chans))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def effective_hamiltonian(self) -> np.ndarray:
        """Non-Hermitian drift ``H - (i/2) sum rate L^+ L``."""
        h = self.hamiltonian.copy()
        for jump, rate in self.channels:
            h -= 0.5j * rate * jump.conj().T @ jump
        return h

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        """Master-equation right-hand side evaluated directly on ``rho``."""
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for jump, rate in self.channels:
            jd = jump.conj().T
            jdj = jd @ jump
            out += 0.5 * rate * (2 * jump @ rho @ jd - jdj @ rho - rho @ jdj)
        return out


def build_liouvillian(system: LindbladSystem) -> np.ndarray:
    """Matrix of the Liouvillian acting on row-major vectorized ``rho``."""
    d = system.dim
    eye = np.eye(d)
    h = system.hamiltonian
    L = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for jump, rate in system.channels:
        if rate == 0.0:
            continue
        jdj = jump.conj().T @ jump
        L += rate * (np.kron(jump, jump.conj())
                     - 0.5 * np.kron(jdj, eye)
                     - 0.5 * np.kron(eye, jdj.T))
    return L


def vectorize(rho) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1)


def unvectorize(vec) -> np.ndarray:
    vec = np.asarray(vec)
    d = int(round(np.sqrt(vec.size)))
    if d * d != vec.size:
        raise DimensionMismatch(f"vector of length {vec.size} is not a vectorized square matrix")
    return vec.reshape(d, d)


def steady_state(liouvillian: np.ndarray, scaling: np.ndarray | None = None) -> np.ndarray:
    """Kernel of ``liouvillian`` via SVD, normalized to unit trace.

    ``scaling`` optionally gives the diagonal of a Hilbert-space similarity
    ``S``: the kernel is then found for ``D^-1 L D`` with ``D = kron(S, S)``
    and mapped back as ``S rho~ S``. Use it when some populations are
    expected to be many orders of magnitude below one, so that they are
    resolved with relative rather than absolute precision.
    """
    L = np.asarray(liouvillian, dtype=complex)
    n = L.shape[0]
    d = int(round(np.sqrt(n)))
    if L.shape != (n, n) or d * d != n:
        raise DimensionMismatch(f"Liouvillian shape {L.shape} is not (d^2, d^2)")
    if scaling is not None:
        s = np.asarray(scaling, dtype=float)
        dd = np.kron(s, s)
        L = L * dd[None, :] / dd[:, None]
    _, sv, vh = np.linalg.svd(L)
    if n > 1 and sv[-2] < DEGENERACY_TOL:
        raise DegenerateSteadyState(
            f"second-smallest singular value {sv[-2]:.3g} is below {DEGENERACY_TOL:g}")
    rho = vh[-1].conj().reshape(d, d)
    if scaling is not None:
        rho = s[:, None] * rho * s[None, :]
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def expectation(rho, op) -> complex:
    """``Tr(rho @ op)``."""
    rho = np.asarray(rho)
    op = np.asarray(op)
    if rho.shape != op.shape:
        raise DimensionMismatch(f"state shape {rho.shape} does not match operator {op.shape}")
    return complex(np.einsum("ij,ji->", rho, op))


def evolve(system: LindbladSystem, rho0, t_grid, rtol: float = 1e-9,
           atol: float = 1e-12) -> list[np.ndarray]:
    """Integrate the master equation with adaptive RK45 and return the
    density matrix at every time in ``t_grid`` (which must start at 0)."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or t_grid[0] != 0.0:
        raise ValueError("t_grid must be a non-empty 1-d grid starting at 0")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    rho0 = as_operator(rho0, dim=system.dim)
    if t_grid.size == 1:
        return [rho0.copy()]
    L = build_liouvillian(system)
    sol = solve_ivp(lambda t, y: L @ y, (0.0, t_grid[-1]), vectorize(rho0),
                    method="RK45", t_eval=t_grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(sol.message)
    d = system.dim
    return [sol.y[:, k].reshape(d, d) for k in range(t_grid.size)]


@dataclass
class Trajectory:
    """One quantum-jump trajectory.

    ``states`` holds the normalized state vector at each record time;
    ``jumps`` lists ``(time, channel_index)`` in order of occurrence.
    """

    times: np.ndarray
    states: np.ndarray
    jumps: list
    rng_seed: int

    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    def element(self, i: int, j: int) -> np.ndarray:
        """``rho_ij(t) = psi_i psi_j^*`` along the trajectory."""
        return self.states[:, i] * self.states[:, j].conj()


@dataclass
class TrajectoryEnsemble:
    """Batch of trajectories sharing a system and record grid.

    Trajectory ``k`` used seed ``seeds[k]`` and is bit-identical to a
    single :func:`mcwf_trajectory` call with that seed.
    """

    times: np.ndarray
    states: np.ndarray  # (n_traj, n_records, dim)
    jumps: list
    seeds: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, k: int) -> Trajectory:
        return Trajectory(self.times, self.states[k], self.jumps[k], int(self.seeds[k]))

    def element(self, i: int, j: int) -> np.ndarray:
        """``rho_ij`` for every trajectory, shape ``(n_traj, n_records)``."""
        return self.states[:, :, i] * self.states[:, :, j].conj()

    def mean_element(self, i: int, j: int) -> np.ndarray:
        return self.element(i, j).mean(axis=0)


def _apply(mat: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """``mat @ cols`` for a ``(dim, n_traj)`` batch, summed term by term.

    Elementwise arithmetic makes every column's result independent of the
    batch size, so batched and single runs are bit-identical. Structurally
    zero entries of ``mat`` are skipped.
    """
    out = np.zeros(cols.shape, dtype=complex)
    for i in range(mat.shape[0]):
        terms = [mat[i, j] * cols[j] for j in np.flatnonzero(mat[i])]
        if terms:
            row = terms[0]
            for t in terms[1:]:
                row = row + t
            out[i] = row
    return out


def _weighted_norm2(cols: np.ndarray, weights) -> np.ndarray:
    p2 = cols.real ** 2 + cols.imag ** 2
    out = p2[0] * weights[0]
    for j in range(1, cols.shape[0]):
        out = out + p2[j] * weights[j]
    return out


def mcwf_ensemble(system: LindbladSystem, psi0, t_max: float, dt: float = 1e-3,
                  seeds=(0,), record_every: int = 1, block: int = 512) -> TrajectoryEnsemble:
    """Run first-order quantum-jump trajectories for every seed in ``seeds``.

    Each step draws two uniforms per trajectory from its own
    ``numpy.random.default_rng(seed)`` stream: the first decides whether a
    jump happens (probability ``dt * sum_k rate_k <L_k^+ L_k>``), the second
    picks the channel in proportion to ``rate_k <L_k^+ L_k>``. Without a
    jump the state is propagated exactly under the non-Hermitian drift for
    ``dt``. The state is renormalized after every step. States are recorded
    every ``record_every`` steps.
    """
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    dim = system.dim
    if psi0.size != dim:
        raise DimensionMismatch(f"psi0 has length {psi0.size}, system dim is {dim}")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("psi0 must be normalized")
    if dt <= 0 or t_max < 0 or record_every < 1:
        raise ValueError("dt and record_every must be positive, t_max non-negative")
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.int64))
    n_traj = seeds.size
    n_steps = int(round(t_max / dt))
    rec_steps = np.arange(0, n_steps + 1, record_every)
    times = rec_steps * dt

    propagator = expm(-1j * system.effective_hamiltonian() * dt)
    propagator[np.abs(propagator) < 1e-300] = 0.0
    jump_ops = [j for j, r in system.channels]
    rates = np.array([r for j, r in system.channels])
    n_ch = len(jump_ops)
    # total rate operator sum_k rate_k L_k^+ L_k; per-channel weights are
    # only resolved for trajectories that actually jump
    total_rate = np.zeros((dim, dim), dtype=complex)
    for j, r in system.channels:
        total_rate += r * j.conj().T @ j
    diag_rate = np.diag(total_rate).real.copy()
    rate_is_diagonal = not np.any(total_rate - np.diag(np.diag(total_rate)))
    ones = np.ones(dim)

    rngs = [np.random.default_rng(int(s)) for s in seeds]
    psi = np.repeat(psi0[:, None], n_traj, axis=1)
    states = np.empty((rec_steps.size, dim, n_traj), dtype=complex)
    states[0] = psi
    jumps = [[] for _ in range(n_traj)]
    rec_idx = 1
    draws = None

    for step in range(1, n_steps + 1):
        b = (step - 1) % block
        if b == 0:
            size = min(block, n_steps - step + 1)
            draws = np.stack([g.random((size, 2)) for g in rngs], axis=2)
        u_jump, u_channel = draws[b]
        new = _apply(propagator, psi)
        if n_ch:
            if rate_is_diagonal:
                dp = dt * _weighted_norm2(psi, diag_rate)
            else:
                dp = dt * (psi.conj() * _apply(total_rate, psi)).real.sum(axis=0)
            if dp.max() > MAX_JUMP_PROBABILITY:
                raise StepTooLarge(
                    f"jump probability per step {dp.max():.3g} exceeds {MAX_JUMP_PROBABILITY}; reduce dt")
            jumped = np.flatnonzero(u_jump < dp)
            if jumped.size:
                t = step * dt
                for k in jumped:
                    cand = [op @ psi[:, k] for op in jump_ops]
                    w = np.array([r * np.vdot(c, c).real for r, c in zip(rates, cand)])
                    cdf = np.cumsum(w) / w.sum()
                    ch = min(int(np.searchsorted(cdf, u_channel[k], side="right")), n_ch - 1)
                    new[:, k] = cand[ch]
                    jumps[k].append((t, ch))
        psi = new / np.sqrt(_weighted_norm2(new, ones))
        if rec_idx < rec_steps.size and step == rec_steps[rec_idx]:
            states[rec_idx] = psi
            rec_idx += 1
    return TrajectoryEnsemble(times, states.transpose(2, 0, 1).copy(), jumps, seeds)


def mcwf_trajectory(system: LindbladSystem, psi0, t_max: float, dt: float = 1e-3,
                    seed: int = 0, record_every: int = 1) -> Trajectory:
    """Single quantum-jump trajectory; see :func:`mcwf_ensemble`."""
    return mcwf_ensemble(system, psi0, t_max, dt, seeds=(seed,), record_every=record_every)[0]
