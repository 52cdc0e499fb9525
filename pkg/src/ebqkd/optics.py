"""Source and channel models.

The photon-pair source produces a chosen Bell state whose maximality is
degraded two ways: an amplitude imbalance between the two superposition
terms and a partial-distinguishability (HOM-visibility) factor that
dephases the coherence between them.  Channels add a Werner-style
depolarizing disturbance or tag the stream for an intercept-resend attack
that is realized at the sampling level.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .qstate import (
    BellLabel,
    TwoQubitState,
    _BELL_TERMS,
    bell_state,
    ptrace_alice,
    ptrace_bob,
)


@dataclass(frozen=True)
class SourceModel:
    """Photon-pair source emitting one Bell-state family.

    Args:
        label: which Bell state the optics are arranged to produce.
        epsilon_rad: amplitude imbalance in [0, pi/2]; pi/4 is maximal.
        hom_visibility: HOM-dip visibility in [0, 1].  Partial photon
            distinguishability (V < 1) dephases the two-term coherence:
            populations stay fixed by ``epsilon_rad`` while the
            off-diagonal terms are scaled by V.
    """

    label: BellLabel
    epsilon_rad: float = math.pi / 4
    hom_visibility: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon_rad <= math.pi / 2:
            raise ValueError(f"epsilon_rad must be in [0, pi/2], got {self.epsilon_rad!r}")
        if not 0.0 <= self.hom_visibility <= 1.0:
            raise ValueError(f"hom_visibility must be in [0, 1], got {self.hom_visibility!r}")


class ChannelKind(enum.Enum):
    IDENTITY = "identity"
    DEPOLARIZING = "depolarizing"
    INTERCEPT_RESEND = "intercept_resend"


@dataclass(frozen=True)
class ChannelModel:
    """Disturbance applied between source and analyzers.

    ``DEPOLARIZING`` with ``arm="both"`` is the Werner form
    ``rho -> (1-p) rho + p I/4`` (Werner weight W = 1 - p); ``arm="a"`` or
    ``"b"`` depolarizes a single arm towards its marginal.
    ``INTERCEPT_RESEND`` only tags the stream here: the attack is not a
    per-pair CP map without Eve's outcome records, so it is realized in
    the sampling layer (see :mod:`ebqkd.measurement`).
    """

    kind: ChannelKind = ChannelKind.IDENTITY
    parameter: float = 0.0
    arm: str = "both"

    def __post_init__(self) -> None:
        if not 0.0 <= self.parameter <= 1.0:
            raise ValueError(f"channel parameter must be in [0, 1], got {self.parameter!r}")
        if self.arm not in ("a", "b", "both"):
            raise ValueError(f"arm must be 'a', 'b' or 'both', got {self.arm!r}")

    @classmethod
    def identity(cls) -> "ChannelModel":
        return cls(ChannelKind.IDENTITY)

    @classmethod
    def depolarizing(cls, p: float, arm: str = "both") -> "ChannelModel":
        return cls(ChannelKind.DEPOLARIZING, p, arm)

    @classmethod
    def werner(cls, w: float) -> "ChannelModel":
        """Symmetric depolarizing channel with Werner weight ``w``."""
        return cls(ChannelKind.DEPOLARIZING, 1.0 - w, "both")

    @classmethod
    def intercept_resend(cls, fraction: float) -> "ChannelModel":
        return cls(ChannelKind.INTERCEPT_RESEND, fraction)

    @property
    def eve_fraction(self) -> float:
        return self.parameter if self.kind is ChannelKind.INTERCEPT_RESEND else 0.0


def generate(source: SourceModel) -> TwoQubitState:
    """Post-selected two-photon polarization state of the source.

    With V = 1 and epsilon = pi/4 this is the exact Bell state; lower
    visibility scales the two-term coherence, ``epsilon`` skews the
    populations.  Coherence magnitude is nondecreasing in V for fixed
    epsilon, and the output is always a valid density operator.
    """
    psi = bell_state(source.label, source.epsilon_rad)
    rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
    first, second, _ = _BELL_TERMS[source.label]
    rho[first, second] *= source.hom_visibility
    rho[second, first] *= source.hom_visibility
    return TwoQubitState(rho)


def apply_channel(
    state: TwoQubitState, channel: ChannelModel, rng_seed: int | None = None
) -> TwoQubitState:
    """Propagate a state through the channel.

    ``rng_seed`` is accepted for interface symmetry with sampled channels;
    the maps implemented here are deterministic and ignore it.
    """
    if channel.kind is ChannelKind.IDENTITY:
        return state
    if channel.kind is ChannelKind.INTERCEPT_RESEND:
        # Tag only; per-pair attack statistics live in the sampling layer.
        return state
    p = channel.parameter
    if channel.arm == "both":
        mixed = np.eye(4) / 4.0
    elif channel.arm == "a":
        mixed = np.kron(np.eye(2) / 2.0, ptrace_alice(state.rho))
    else:
        mixed = np.kron(ptrace_bob(state.rho), np.eye(2) / 2.0)
    return TwoQubitState((1.0 - p) * state.rho + p * mixed)


def werner_state(label: BellLabel, w: float) -> TwoQubitState:
    """Werner mixture w |bell><bell| + (1 - w) I/4 of a maximal Bell state."""
    return apply_channel(generate(SourceModel(label)), ChannelModel.werner(w))
