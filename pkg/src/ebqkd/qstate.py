"""Two-qubit polarization state algebra.

Pure and mixed states over the two-photon product basis {HH, HV, VH, VV},
Bell states with a tunable amplitude imbalance, and joint outcome
probabilities behind linear polarization analyzers.

Conventions
-----------
* Basis order is fixed globally as ``(HH, HV, VH, VV)``; index ``2*i + j``
  holds the amplitude of Alice's polarization ``i`` and Bob's ``j`` with
  ``H = 0`` and ``V = 1``.
* The source's two output ports map to the parties as port 1 -> Alice,
  port 2 -> Bob.
* An analyzer's "+" outcome is transmission along its polarization axis;
  "-" is the orthogonal port.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .measurement import AnalyzerSetting

#: Fixed ordering of the two-photon polarization product basis.
BASIS_LABELS = ("HH", "HV", "VH", "VV")

NORM_ATOL = 1e-12
HERMITICITY_ATOL = 1e-12
TRACE_ATOL = 1e-12
PSD_ATOL = 1e-9


class InvariantViolation(ValueError):
    """A state or distribution failed one of its defining invariants."""


class BellLabel(enum.Enum):
    """The four maximally entangled polarization states."""

    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"
    PSI_PLUS = "psi_plus"
    PSI_MINUS = "psi_minus"


# (index of the first basis term, index of the second, relative sign)
_BELL_TERMS: dict[BellLabel, tuple[int, int, float]] = {
    BellLabel.PHI_PLUS: (0, 3, 1.0),
    BellLabel.PHI_MINUS: (0, 3, -1.0),
    BellLabel.PSI_PLUS: (1, 2, 1.0),
    BellLabel.PSI_MINUS: (1, 2, -1.0),
}


def _frozen_array(x, shape, dtype=complex) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype).reshape(shape).copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PureTwoQubit:
    """A normalized pure two-photon polarization state.

    Amplitudes are stored complex (channels may introduce phases) and
    ordered as :data:`BASIS_LABELS`.  The constructor checks normalization
    but never normalizes silently; use :meth:`normalized` for that.
    """

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        norm_sq = float(np.vdot(amp, amp).real)
        if abs(norm_sq - 1.0) > 10 * NORM_ATOL:
            raise InvariantViolation(
                f"amplitudes are not normalized: sum |a_i|^2 = {norm_sq!r}"
            )
        object.__setattr__(self, "amplitudes", _frozen_array(amp, 4))

    @classmethod
    def normalized(cls, amplitudes) -> "PureTwoQubit":
        """Explicitly normalize ``amplitudes`` and build a state from them."""
        amp = np.asarray(amplitudes, dtype=complex).reshape(4)
        norm = np.linalg.norm(amp)
        if norm == 0.0:
            raise InvariantViolation("cannot normalize the zero vector")
        return cls(amp / norm)


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    """A 4x4 density operator on the polarization product basis.

    The constructor enforces Hermiticity, unit trace and positive
    semidefiniteness (eigenvalues >= -1e-9); instances are immutable and
    safe to share between parallel workers.
    """

    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=complex).reshape(4, 4)
        if not np.allclose(rho, rho.conj().T, rtol=0.0, atol=HERMITICITY_ATOL):
            raise InvariantViolation("density matrix is not Hermitian")
        trace = float(np.trace(rho).real)
        if abs(trace - 1.0) > 10 * TRACE_ATOL:
            raise InvariantViolation(f"density matrix has trace {trace!r}, expected 1")
        lowest = float(np.linalg.eigvalsh(rho)[0])
        if lowest < -PSD_ATOL:
            raise InvariantViolation(
                f"density matrix is not positive semidefinite (lowest eigenvalue {lowest:.3e})"
            )
        object.__setattr__(self, "rho", _frozen_array(rho, (4, 4)))

    def purity(self) -> float:
        """Tr(rho^2); 1 for pure states, 1/4 for the maximally mixed state."""
        return float(np.trace(self.rho @ self.rho).real)


@dataclass(frozen=True)
class JointDistribution:
    """Probabilities of the four joint analyzer outcomes.

    Outcome order is ``(++, +-, -+, --)`` where the first slot is Alice's
    port and "+" means transmission along the analyzer axis.
    """

    p_pp: float
    p_pm: float
    p_mp: float
    p_mm: float

    def __post_init__(self) -> None:
        probs = (self.p_pp, self.p_pm, self.p_mp, self.p_mm)
        if min(probs) < -1e-9:
            raise InvariantViolation(f"negative outcome probability in {probs}")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise InvariantViolation(f"outcome probabilities sum to {sum(probs)!r}")
        # Clip floating-point dust so downstream samplers see exact simplex points.
        for name, p in zip(("p_pp", "p_pm", "p_mp", "p_mm"), probs):
            object.__setattr__(self, name, min(max(float(p), 0.0), 1.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.p_pp, self.p_pm, self.p_mp, self.p_mm])

    def correlator(self) -> float:
        """E = p(++) + p(--) - p(+-) - p(-+)."""
        return self.p_pp + self.p_mm - self.p_pm - self.p_mp


def bell_state(label: BellLabel, epsilon: float = math.pi / 4) -> PureTwoQubit:
    """Bell state with amplitude imbalance ``epsilon``.

    Returns ``cos(eps)|first> +/- sin(eps)|second>`` for the label's two
    basis terms, e.g. ``cos(eps)|HH> + sin(eps)|VV>`` for phi+.
    ``epsilon = pi/4`` is the maximally entangled case; ``epsilon = 0``
    degenerates to a product state.

    Args:
        label: which Bell state family.
        epsilon: amplitude imbalance in radians, within [0, pi/2].
    """
    if not 0.0 <= epsilon <= math.pi / 2:
        raise ValueError(f"epsilon must be in [0, pi/2], got {epsilon!r}")
    first, second, sign = _BELL_TERMS[label]
    amp = np.zeros(4, dtype=complex)
    amp[first] = math.cos(epsilon)
    amp[second] = sign * math.sin(epsilon)
    return PureTwoQubit(amp)


def to_density(psi: PureTwoQubit) -> TwoQubitState:
    """Rank-1 density operator |psi><psi|."""
    return TwoQubitState(np.outer(psi.amplitudes, psi.amplitudes.conj()))


def polarization_projector(angle_rad: float) -> np.ndarray:
    """2x2 projector onto linear polarization at ``angle_rad`` from H."""
    c = math.cos(angle_rad)
    s = math.sin(angle_rad)
    return np.array([[c * c, c * s], [c * s, s * s]])


def joint_probabilities(
    state: TwoQubitState, a: "AnalyzerSetting", b: "AnalyzerSetting"
) -> JointDistribution:
    """Born-rule outcome probabilities for a pair of linear analyzers.

    Each probability is Tr(rho (P_a x P_b)) with P the projector onto the
    analyzer's transmission (+) or reflection (-) axis.
    """
    alpha = a.polarization_angle_rad
    beta = b.polarization_angle_rad
    proj_a = (polarization_projector(alpha), polarization_projector(alpha + math.pi / 2))
    proj_b = (polarization_projector(beta), polarization_projector(beta + math.pi / 2))
    probs = [
        float(np.trace(state.rho @ np.kron(pa, pb)).real)
        for pa in proj_a
        for pb in proj_b
    ]
    return JointDistribution(*probs)


def ptrace_alice(rho: np.ndarray) -> np.ndarray:
    """Trace out Alice's qubit, returning Bob's 2x2 marginal."""
    return np.einsum("ajal->jl", np.asarray(rho).reshape(2, 2, 2, 2))


def ptrace_bob(rho: np.ndarray) -> np.ndarray:
    """Trace out Bob's qubit, returning Alice's 2x2 marginal."""
    return np.einsum("iaka->ik", np.asarray(rho).reshape(2, 2, 2, 2))
