"""State-vector emulation of a globally driven Rydberg register.

Units: positions in µm, time in µs, frequencies in rad/µs.  Basis state
``k`` stores atom ``i`` in bit ``i`` (atom 0 is least significant), with
bit value 1 meaning the Rydberg state.  Bitstrings are written atom 0
first, so ``"10"`` means atom 0 excited and atom 1 in the ground state.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

DEFAULT_C6 = 5.42e6  # rad·µm⁶/µs, Rb 70S-class device value
DEFAULT_OMEGA_MAX = 15.8  # rad/µs


class CapacityError(ValueError):
    pass


class IntegrationError(RuntimeError):
    def __init__(self, segment, message):
        self.segment = segment
        super().__init__(f"segment {segment}: {message}")


@dataclass(frozen=True)
class PhysicsConfig:
    c6_over_hbar: float = DEFAULT_C6
    rtol: float = 1e-8
    atol: float = 1e-11
    max_step: float = np.inf
    max_atoms: int = 14

    def __post_init__(self):
        if self.c6_over_hbar <= 0:
            raise ValueError("c6_over_hbar must be positive")
        if not 0 < self.rtol < 1e-4:
            raise ValueError("rtol must lie in (0, 1e-4)")


def blockade_radius(omega=DEFAULT_OMEGA_MAX, detuning=0.0, c6_over_hbar=DEFAULT_C6):
    """Rydberg radius (C6 / sqrt(Ω² + Δ²))^(1/6) in µm."""
    return (c6_over_hbar / np.hypot(omega, detuning)) ** (1 / 6)


def interaction_matrix(positions, c6_over_hbar=DEFAULT_C6):
    """Symmetric V_ij = C6/|x_i - x_j|^6 with zero diagonal."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    with np.errstate(divide="ignore"):
        v = c6_over_hbar / d**6
    np.fill_diagonal(v, 0.0)
    return v


def _occupations(n):
    k = np.arange(2**n)
    return ((k[:, None] >> np.arange(n)[None, :]) & 1).astype(float)


class RydbergHamiltonian:
    """Matrix-free action of the global-drive Rydberg Hamiltonian (divided by ħ).

    The interaction energy of every basis state is precomputed; the drive
    term is applied per atom by pairing amplitudes that differ in one bit.
    """

    def __init__(self, positions, c6_over_hbar=DEFAULT_C6):
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        self.n = len(self.positions)
        self.V = interaction_matrix(self.positions, c6_over_hbar)
        occ = _occupations(self.n)
        self.n_excited = occ.sum(axis=1)
        # Σ_{i<j} V_ij n_i n_j = ½ nᵀ V n
        self.interaction_diag = 0.5 * np.einsum("ki,ij,kj->k", occ, self.V, occ)

    def apply(self, omega, phase, detuning, state):
        """Return Ĥ|ψ⟩/ħ."""
        out = (self.interaction_diag - detuning * self.n_excited) * state
        if omega != 0.0:
            half = 0.5 * omega
            up = half * np.exp(1j * phase)  # |0⟩⟨1| coefficient
            psi = state.reshape((2,) * self.n) if self.n else state
            res = out.reshape((2,) * self.n)
            for i in range(self.n):
                ax = self.n - 1 - i
                s0 = [slice(None)] * self.n
                s1 = [slice(None)] * self.n
                s0[ax], s1[ax] = 0, 1
                s0, s1 = tuple(s0), tuple(s1)
                res[s0] += up * psi[s1]
                res[s1] += np.conj(up) * psi[s0]
        return out

    def dense(self, omega, phase, detuning):
        """Dense Ĥ/ħ assembled from Kronecker products (independent of :meth:`apply`)."""
        n = self.n
        eye = np.eye(2)
        drive1 = 0.5 * omega * np.array([[0, np.exp(1j * phase)], [np.exp(-1j * phase), 0]])
        num = np.diag([0.0, 1.0])

        def site(op, i):
            # kron order puts the highest atom index first so atom 0 is the LSB
            mats = [op if j == i else eye for j in reversed(range(n))]
            out = mats[0]
            for m in mats[1:]:
                out = np.kron(out, m)
            return out

        h = np.zeros((2**n, 2**n), dtype=complex)
        for i in range(n):
            h += site(drive1, i) - detuning * site(num, i)
        for i in range(n):
            for j in range(i + 1, n):
                h += self.V[i, j] * site(num, i) @ site(num, j)
        return h


def hamiltonian_apply(positions, omega, phase, detuning, state, c6_over_hbar=DEFAULT_C6):
    """Time derivative −iĤ|ψ⟩/ħ for a constant drive."""
    ham = RydbergHamiltonian(positions, c6_over_hbar)
    return -1j * ham.apply(omega, phase, detuning, np.asarray(state, dtype=complex))


def ground_state(n):
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    return psi


@dataclass
class EvolutionResult:
    state: np.ndarray
    norm_drift: float = 0.0
    renormalized: bool = False
    n_steps: int = 0

    @property
    def probabilities(self):
        p = np.abs(self.state) ** 2
        return p / p.sum()


def evolve(positions, schedule, physics: PhysicsConfig | None = None, initial_state=None):
    """Integrate the Schrödinger equation over every segment of ``schedule``.

    Each piecewise-constant segment is integrated with an embedded
    Runge–Kutta 4(5) pair at ``physics.rtol``/``physics.atol``.  Returns an
    :class:`EvolutionResult`; ``norm_drift`` is the largest |‖ψ‖ − 1| seen
    before renormalization.
    """
    physics = physics or PhysicsConfig()
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(pos)
    if n > physics.max_atoms:
        raise CapacityError(f"{n} atoms exceeds the emulator cap of {physics.max_atoms}")
    ham = RydbergHamiltonian(pos, physics.c6_over_hbar)
    psi = ground_state(n) if initial_state is None else np.array(initial_state, dtype=complex)
    drift = 0.0
    renormed = False
    steps = 0
    for idx, seg in enumerate(schedule.segments):
        if seg.omega == 0.0:
            # diagonal generator: exact phase rotation
            psi = np.exp(-1j * seg.duration * (ham.interaction_diag - seg.detuning * ham.n_excited)) * psi
            continue

        def rhs(_t, y, seg=seg):
            return -1j * ham.apply(seg.omega, seg.phase, seg.detuning, y)

        sol = solve_ivp(rhs, (0.0, seg.duration), psi, method="RK45", rtol=physics.rtol,
                        atol=physics.atol, max_step=physics.max_step, t_eval=[seg.duration])
        if not sol.success:
            raise IntegrationError(idx, sol.message)
        steps += int(sol.nfev) // 6
        psi = sol.y[:, -1]
        norm = np.linalg.norm(psi)
        d = abs(norm - 1.0)
        drift = max(drift, d)
        if d > 1e-12:
            psi = psi / norm
            renormed = True
    return EvolutionResult(state=psi, norm_drift=drift, renormalized=renormed, n_steps=steps)


def expm_oracle(positions, omega, phase, detuning, duration, state, c6_over_hbar=DEFAULT_C6):
    """Dense exp(−iĤ·duration)|ψ⟩ for test cross-checks (≤ 6 atoms)."""
    from scipy.linalg import expm

    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pos) > 6:
        raise CapacityError("expm_oracle is limited to 6 atoms")
    h = RydbergHamiltonian(pos, c6_over_hbar).dense(omega, phase, detuning)
    return expm(-1j * duration * h) @ np.asarray(state, dtype=complex)


@dataclass(frozen=True)
class NoiseModel:
    p_init_fail: float = 0.0
    eps_g_to_r: float = 0.0
    eps_r_to_g: float = 0.0

    def __post_init__(self):
        for name in ("p_init_fail", "eps_g_to_r", "eps_r_to_g"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")


@dataclass
class MeasurementSet:
    graph_id: int
    n_atoms: int
    requested: int
    shots: list[str] = field(default_factory=list)

    @property
    def kept(self) -> int:
        return len(self.shots)

    def to_record(self) -> dict:
        return {"graph_id": self.graph_id, "requested": self.requested,
                "kept": self.kept, "shots": list(self.shots)}

    @classmethod
    def from_record(cls, rec: dict) -> "MeasurementSet":
        shots = list(rec["shots"])
        n = len(shots[0]) if shots else int(rec.get("n_atoms", 0))
        if rec.get("kept", len(shots)) != len(shots):
            raise ValueError(f"graph {rec['graph_id']}: kept != number of shots")
        if any(len(s) != n for s in shots):
            raise ValueError(f"graph {rec['graph_id']}: ragged bitstrings")
        return cls(graph_id=int(rec["graph_id"]), n_atoms=n,
                   requested=int(rec["requested"]), shots=shots)

    def bit_array(self) -> np.ndarray:
        if not self.shots:
            return np.zeros((0, self.n_atoms), dtype=np.int8)
        return (np.frombuffer("".join(self.shots).encode(), dtype=np.uint8) - 48).reshape(
            len(self.shots), self.n_atoms).astype(np.int8)


def derive_rng(seed, stage: str, graph_id: int = 0) -> np.random.Generator:
    """Independent stream per (master seed, stage name, graph id)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(stage.encode()), int(graph_id)]))


def sample(state, n_shots, seed=0, noise: NoiseModel | None = None, graph_id=0, rng=None):
    """Draw computational-basis shots from ``state``.

    Returns a :class:`MeasurementSet`.  With a noise model, a shot is
    discarded with probability 1 − (1 − p_init_fail)^n, and surviving
    bits are flipped 0→1 with ``eps_g_to_r`` and 1→0 with ``eps_r_to_g``.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    noise = noise or NoiseModel()
    rng = rng if rng is not None else derive_rng(seed, "sample", graph_id)
    probs = np.abs(np.asarray(state)) ** 2
    probs = probs / probs.sum()
    n = int(round(np.log2(len(probs))))
    idx = rng.choice(len(probs), size=n_shots, p=probs)
    bits = ((idx[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8)
    if noise.p_init_fail > 0:
        keep = rng.random(n_shots) >= 1.0 - (1.0 - noise.p_init_fail) ** n
        bits = bits[keep]
    if noise.eps_g_to_r > 0 or noise.eps_r_to_g > 0:
        u = rng.random(bits.shape)
        flip = np.where(bits == 0, u < noise.eps_g_to_r, u < noise.eps_r_to_g)
        bits = np.where(flip, 1 - bits, bits)
    shots = ["".join(map(str, row)) for row in bits.tolist()]
    return MeasurementSet(graph_id=graph_id, n_atoms=n, requested=n_shots, shots=shots)
