"""Analyzer settings, per-pair outcome sampling and coincidence counting.

A coincidence is both photons of one emitted pair being detected in the
same emission slot; detector efficiency is applied independently per arm
and accidental coincidences follow a Poisson model spread uniformly over
the four outcomes.  All sampling is deterministic given a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qstate import (
    BellLabel,
    TwoQubitState,
    bell_state,
    joint_probabilities,
    polarization_projector,
    ptrace_bob,
    to_density,
)

#: Polarization angles (radians) of the two key-generation bases, H/V and D/A.
KEY_BASES_RAD = (0.0, math.pi / 4)


@dataclass(frozen=True)
class AnalyzerSetting:
    """Half-wave-plate setting of one party's polarization analyzer.

    A half-wave plate at angle t rotates polarization by 2t, so the
    analyzer projects onto linear polarization at twice the plate angle;
    the reflected port sits 90 degrees away.
    """

    hwp_angle_deg: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.hwp_angle_deg < 180.0:
            raise ValueError(
                f"HWP angle must be in [0, 180) degrees, got {self.hwp_angle_deg!r}"
            )

    @classmethod
    def from_polarization(cls, polarization_angle_deg: float) -> "AnalyzerSetting":
        """Setting whose transmission axis is at the given polarization angle."""
        return cls((polarization_angle_deg % 360.0) / 2.0)

    @property
    def polarization_angle_deg(self) -> float:
        return 2.0 * self.hwp_angle_deg

    @property
    def polarization_angle_rad(self) -> float:
        return math.radians(self.polarization_angle_deg)


@dataclass(frozen=True)
class DetectorModel:
    """Identical twin single-photon detectors with Poisson accidentals.

    Args:
        efficiency: detection probability per photon in (0, 1].
        dark_rate: expected accidental coincidences per acquisition window.
        window_pairs: emitted pairs per acquisition window.
        efficiency_b: optional asymmetric efficiency for Bob's arm;
            defaults to ``efficiency`` (both parties identical).
    """

    efficiency: float = 0.6
    dark_rate: float = 0.0
    window_pairs: int = 1
    efficiency_b: float | None = None

    def __post_init__(self) -> None:
        for eff in (self.efficiency, self.efficiency_b):
            if eff is not None and not 0.0 < eff <= 1.0:
                raise ValueError(f"efficiency must be in (0, 1], got {eff!r}")
        if self.dark_rate < 0.0:
            raise ValueError(f"dark_rate must be >= 0, got {self.dark_rate!r}")
        if self.window_pairs < 1:
            raise ValueError(f"window_pairs must be >= 1, got {self.window_pairs!r}")

    @property
    def eff_alice(self) -> float:
        return self.efficiency

    @property
    def eff_bob(self) -> float:
        return self.efficiency if self.efficiency_b is None else self.efficiency_b

    def coincidence_efficiency(self) -> float:
        """Probability that both photons of a pair are detected."""
        return self.eff_alice * self.eff_bob

    def expected_accidentals(self, n_pairs: int) -> float:
        """Expected accidental coincidences over ``n_pairs`` emissions."""
        return self.dark_rate * n_pairs / self.window_pairs


@dataclass(frozen=True)
class CoincidenceRow:
    """Counts of the four joint outcomes for one analyzer setting pair."""

    a: AnalyzerSetting
    b: AnalyzerSetting
    n_pp: int
    n_pm: int
    n_mp: int
    n_mm: int
    duration_tag: str = ""

    def __post_init__(self) -> None:
        if min(self.n_pp, self.n_pm, self.n_mp, self.n_mm) < 0:
            raise ValueError("coincidence counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.n_pp + self.n_pm + self.n_mp + self.n_mm

    def counts(self) -> tuple[int, int, int, int]:
        return (self.n_pp, self.n_pm, self.n_mp, self.n_mm)


@dataclass(frozen=True)
class CoincidenceTable:
    """Coincidence counts per (Alice setting, Bob setting) combination."""

    rows: tuple[CoincidenceRow, ...]

    def find(
        self, a: AnalyzerSetting, b: AnalyzerSetting, atol_deg: float = 1e-6
    ) -> CoincidenceRow | None:
        for row in self.rows:
            if (
                abs(row.a.hwp_angle_deg - a.hwp_angle_deg) <= atol_deg
                and abs(row.b.hwp_angle_deg - b.hwp_angle_deg) <= atol_deg
            ):
                return row
        return None


def spawn_rng(seed: int | np.random.Generator, *stream: int) -> np.random.Generator:
    """Deterministic child generator for (master seed, stream indices).

    The fixed splitting rule makes parallel work independent of scheduling
    order: every task keyed by the same indices sees the same stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(stream)))


def _intercept_states(
    state: TwoQubitState, eve_bases_rad: Sequence[float] = KEY_BASES_RAD
) -> tuple[list[TwoQubitState], np.ndarray]:
    """Post-measurement product states for an intercept-resend attack.

    Eve measures Bob's photon in one of ``eve_bases_rad`` (chosen uniformly)
    and forwards a freshly prepared eigenstate of her result.  Returns the
    conditional states indexed by (basis, outcome) flattened as
    ``2 * basis + outcome``, plus the outcome probabilities per basis.
    """
    states: list[TwoQubitState] = []
    outcome_probs = np.zeros((len(eve_bases_rad), 2))
    for k, theta in enumerate(eve_bases_rad):
        for outcome in (0, 1):
            # Projector onto Eve's result; also the state she re-prepares.
            proj = polarization_projector(theta + outcome * math.pi / 2)
            unnorm = ptrace_bob(state.rho @ np.kron(np.eye(2), proj))
            p = float(np.trace(unnorm).real)
            outcome_probs[k, outcome] = p
            if p <= 0.0:
                # Unreachable outcome; keep a placeholder of the right shape.
                alice = np.eye(2) / 2.0
            else:
                alice = unnorm / p
            alice = (alice + alice.conj().T) / 2.0
            states.append(TwoQubitState(np.kron(alice, proj)))
    return states, outcome_probs


def intercept_strata(
    state: TwoQubitState, eve_fraction: float
) -> tuple[list[TwoQubitState], np.ndarray]:
    """Mixture components seen downstream of an intercept-resend attack.

    Index 0 is the untouched state (weight ``1 - eve_fraction``); indices
    1..4 are Eve's (basis, outcome) product states with their weights.
    """
    if not 0.0 <= eve_fraction <= 1.0:
        raise ValueError(f"eve_fraction must be in [0, 1], got {eve_fraction!r}")
    eve_states, outcome_probs = _intercept_states(state)
    weights = np.concatenate(
        ([1.0 - eve_fraction], eve_fraction * 0.5 * outcome_probs.reshape(-1))
    )
    return [state] + eve_states, weights


def intercept_average_state(state: TwoQubitState, eve_fraction: float) -> TwoQubitState:
    """Ensemble-average state after intercept-resend (Eve's records discarded).

    Valid for computing expected correlators and error rates; per-pair key
    correlations with Eve additionally require the outcome records that
    :func:`intercept_resend` keeps implicitly while sampling.
    """
    states, weights = intercept_strata(state, eve_fraction)
    rho = sum(w * s.rho for w, s in zip(weights, states))
    return TwoQubitState(rho)


def _outcome_array(dist) -> np.ndarray:
    p = dist.as_array()
    return p / p.sum()


def sample_outcomes(
    state: TwoQubitState,
    a: AnalyzerSetting,
    b: AnalyzerSetting,
    det: DetectorModel,
    n_pairs: int,
    seed: int | np.random.Generator,
    eve_fraction: float = 0.0,
) -> tuple[int, int, int, int]:
    """Coincidence counts for one analyzer setting pair.

    Draws joint outcomes from the Born-rule distribution, thins by the
    per-arm detection efficiencies (a coincidence needs both detections)
    and adds Poisson accidentals spread uniformly over the four outcomes.
    With ``eve_fraction > 0`` the stated share of pairs passes through an
    intercept-resend attack first.

    Returns:
        ``(n_pp, n_pm, n_mp, n_mm)``, deterministic given the seed.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs!r}")
    rng = spawn_rng(seed)
    n_coinc = int(rng.binomial(n_pairs, det.coincidence_efficiency()))
    counts = np.zeros(4, dtype=np.int64)
    if eve_fraction > 0.0:
        states, weights = intercept_strata(state, eve_fraction)
        per_stratum = rng.multinomial(n_coinc, weights / weights.sum())
        for n_s, stratum in zip(per_stratum, states):
            if n_s:
                counts += rng.multinomial(n_s, _outcome_array(joint_probabilities(stratum, a, b)))
    elif n_coinc:
        counts += rng.multinomial(n_coinc, _outcome_array(joint_probabilities(state, a, b)))
    n_acc = int(rng.poisson(det.expected_accidentals(n_pairs)))
    if n_acc:
        counts += rng.multinomial(n_acc, np.full(4, 0.25))
    return tuple(int(c) for c in counts)


def sample_outcome_stream(
    states: Sequence[TwoQubitState],
    stratum_idx: np.ndarray,
    a_settings: Sequence[AnalyzerSetting],
    b_settings: Sequence[AnalyzerSetting],
    a_idx: np.ndarray,
    b_idx: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-pair joint outcomes (0..3 encoding ++, +-, -+, --).

    Pairs are grouped by (stratum, Alice setting, Bob setting) and each
    group is drawn from its Born-rule distribution; groups are visited in
    a fixed sorted order so results do not depend on scheduling.
    """
    n = len(stratum_idx)
    if not (len(a_idx) == len(b_idx) == n):
        raise ValueError("stratum and setting index streams must have equal length")
    out = np.zeros(n, dtype=np.uint8)
    key = (stratum_idx.astype(np.int64) * len(a_settings) + a_idx) * len(b_settings) + b_idx
    for group in np.unique(key):
        members = np.nonzero(key == group)[0]
        si, rest = divmod(int(group), len(a_settings) * len(b_settings))
        ai, bi = divmod(rest, len(b_settings))
        dist = joint_probabilities(states[si], a_settings[ai], b_settings[bi])
        out[members] = rng.choice(4, size=members.size, p=_outcome_array(dist))
    return out


def intercept_resend(
    state: TwoQubitState,
    a_settings: Sequence[AnalyzerSetting],
    b_settings: Sequence[AnalyzerSetting],
    a_idx: np.ndarray,
    b_idx: np.ndarray,
    eve_fraction: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Joint outcomes for a stream of pairs under partial intercept-resend.

    For an intercepted pair Eve measures Bob's photon in a uniformly random
    key basis (H/V or D/A) and forwards a re-prepared eigenstate; downstream
    outcomes are then sampled from the resulting product state.  With
    ``eve_fraction = 0`` no Eve randomness is consumed and the stream is
    identical to an attack-free run with the same generator state.
    """
    states, _ = intercept_strata(state, eve_fraction)
    n = len(a_idx)
    stratum_idx = np.zeros(n, dtype=np.int64)
    if eve_fraction > 0.0:
        intercepted = rng.random(n) < eve_fraction
        eve_basis = rng.integers(0, 2, size=n)
        # Born-rule probability of Eve's "+" outcome in each basis.
        _, outcome_probs = _intercept_states(state)
        p_plus = outcome_probs[:, 0] / outcome_probs.sum(axis=1)
        eve_outcome = (rng.random(n) >= p_plus[eve_basis]).astype(np.int64)
        stratum_idx[intercepted] = 1 + 2 * eve_basis[intercepted] + eve_outcome[intercepted]
    return sample_outcome_stream(states, stratum_idx, a_settings, b_settings, a_idx, b_idx, rng)


def expected_counts(
    state: TwoQubitState,
    a: AnalyzerSetting,
    b: AnalyzerSetting,
    n_pairs: int,
) -> CoincidenceRow:
    """Noiseless expected coincidence counts (rounded) for one setting pair."""
    dist = joint_probabilities(state, a, b)
    n = np.rint(dist.as_array() * n_pairs).astype(int)
    return CoincidenceRow(a, b, *(int(c) for c in n), duration_tag="expected")


def qber_for_basis(
    state: TwoQubitState, label: BellLabel, basis_pol_rad: float
) -> float:
    """Analytic error probability when both parties measure at one angle.

    A "wrong" coincidence is one that breaks the correlation sign of the
    ideal (maximal) Bell state of ``label`` in that basis; the sign also
    fixes the key-bit mapping used by the protocol engines.
    """
    setting = AnalyzerSetting.from_polarization(math.degrees(basis_pol_rad))
    dist = joint_probabilities(state, setting, setting)
    if bob_flip(label, basis_pol_rad):
        return dist.p_pp + dist.p_mm
    return dist.p_pm + dist.p_mp


def bob_flip(label: BellLabel, basis_pol_rad: float) -> bool:
    """Whether Bob inverts his bit in this basis to align keys.

    True when the ideal maximal state of ``label`` is anticorrelated for
    equal analyzer angles at ``basis_pol_rad`` (e.g. the singlet in every
    basis, psi+ in H/V, phi- in D/A).
    """
    setting = AnalyzerSetting.from_polarization(math.degrees(basis_pol_rad))
    ideal = joint_probabilities(
        _ideal_state(label), setting, setting
    )
    return ideal.correlator() < 0.0


_IDEAL_CACHE: dict[BellLabel, TwoQubitState] = {}


def _ideal_state(label: BellLabel) -> TwoQubitState:
    if label not in _IDEAL_CACHE:
        _IDEAL_CACHE[label] = to_density(bell_state(label, math.pi / 4))
    return _IDEAL_CACHE[label]
