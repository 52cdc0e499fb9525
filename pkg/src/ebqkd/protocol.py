"""BBM92 and E91 session engines.

A session emits entangled pairs, draws independent uniform basis choices
for Alice and Bob, samples joint analyzer outcomes, drops non-coincident
pairs, sifts on announced bases and estimates the QBER from a disclosed
random subset (those bits are consumed).  E91 additionally routes the four
designated unmatched setting combinations into a CHSH estimate.

Bit mapping: the transmitted port is bit 0.  Bob inverts his bit in a
matched basis exactly when the session's ideal Bell state is
anticorrelated there (singlet: every basis; psi+: H/V; phi-: D/A), so all
four families yield agreeing keys on a noiseless channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import chsh, optics
from .measurement import (
    AnalyzerSetting,
    CoincidenceRow,
    CoincidenceTable,
    DetectorModel,
    bob_flip,
    intercept_resend,
    spawn_rng,
)
from .optics import ChannelModel, SourceModel
from .qstate import BellLabel


class NoSiftedBitsError(RuntimeError):
    """A session produced no compatible-basis coincidences."""


@dataclass(frozen=True)
class ProtocolKind:
    """Measurement-basis layout of one protocol variant.

    ``chsh_pairs`` lists the (Alice index, Bob index) combinations whose
    outcomes feed the security CHSH test (E91 only).
    """

    name: str
    alice_hwp_deg: tuple[float, ...]
    bob_hwp_deg: tuple[float, ...]
    chsh_pairs: tuple[tuple[int, int], ...] = ()

    def alice_settings(self) -> tuple[AnalyzerSetting, ...]:
        return tuple(AnalyzerSetting(t) for t in self.alice_hwp_deg)

    def bob_settings(self) -> tuple[AnalyzerSetting, ...]:
        return tuple(AnalyzerSetting(t) for t in self.bob_hwp_deg)

    def matched_pairs(self) -> tuple[tuple[int, int], ...]:
        """Setting-index pairs with equal polarization angles (key events)."""
        matches = []
        for i, ta in enumerate(self.alice_hwp_deg):
            for j, tb in enumerate(self.bob_hwp_deg):
                if abs((2 * ta) % 180.0 - (2 * tb) % 180.0) < 1e-9:
                    matches.append((i, j))
        return tuple(matches)


#: Both parties measure in {H/V, D/A}.
BBM92 = ProtocolKind("bbm92", (0.0, 22.5), (0.0, 22.5))

#: Three bases per party; the outer combinations form the CHSH test at the
#: canonical polarization angles (0, 45) x (22.5, 67.5).
E91 = ProtocolKind(
    "e91",
    (0.0, 11.25, 22.5),
    (11.25, 22.5, 33.75),
    chsh_pairs=((0, 0), (0, 2), (2, 0), (2, 2)),
)

_KINDS = {k.name: k for k in (BBM92, E91)}


def protocol_by_name(name: str) -> ProtocolKind:
    try:
        return _KINDS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown protocol {name!r}; expected one of {sorted(_KINDS)}")


@dataclass(frozen=True)
class SessionConfig:
    kind: ProtocolKind
    source: SourceModel
    channel: ChannelModel = ChannelModel.identity()
    detector: DetectorModel = DetectorModel()
    n_pairs: int = 100_000
    qber_sample_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_pairs < 1:
            raise ValueError(f"n_pairs must be >= 1, got {self.n_pairs!r}")
        if not 0.0 < self.qber_sample_fraction < 1.0:
            raise ValueError(
                f"qber_sample_fraction must be in (0, 1), got {self.qber_sample_fraction!r}"
            )


@dataclass(frozen=True)
class SessionRecord:
    """Outcome of one protocol session.

    ``per_basis_qber`` is keyed by the matched polarization angle in
    degrees (0.0 is H/V, 45.0 is D/A for BBM92).  Disclosed QBER-sample
    bits are removed from the keys, so
    ``disclosed_length + len(key_bits_alice) == sifted_length``.
    """

    n_pairs: int
    n_coincident: int
    sifted_length: int
    disclosed_length: int
    qber_hat: float
    qber_ci: tuple[float, float]
    per_basis_qber: dict[float, float]
    chsh_subset: chsh.ChshEstimate | None
    key_bits_alice: np.ndarray
    key_bits_bob: np.ndarray


@dataclass(frozen=True)
class SiftResult:
    kept: np.ndarray
    bits_alice: np.ndarray
    bits_bob: np.ndarray
    basis_pol_deg: np.ndarray


def sift(
    kind: ProtocolKind,
    label: BellLabel,
    a_idx: np.ndarray,
    b_idx: np.ndarray,
    outcomes: np.ndarray,
) -> SiftResult:
    """Keep matched-basis events and map outcomes to key bits.

    Deterministic and order-preserving; sifting looks only at the
    announced basis indices, never at outcomes.

    Raises:
        ValueError: if the announcement and outcome streams differ in length.
    """
    if not (len(a_idx) == len(b_idx) == len(outcomes)):
        raise ValueError("announcement and outcome streams must have equal length")
    matched = kind.matched_pairs()
    keep = np.zeros(len(a_idx), dtype=bool)
    flips: dict[tuple[int, int], bool] = {}
    pol_of_pair: dict[tuple[int, int], float] = {}
    for i, j in matched:
        keep |= (a_idx == i) & (b_idx == j)
        pol = (2.0 * kind.alice_hwp_deg[i]) % 180.0
        pol_of_pair[(i, j)] = pol
        flips[(i, j)] = bob_flip(label, math.radians(pol))
    kept = np.nonzero(keep)[0]
    bits_a = (outcomes[kept] >> 1).astype(np.uint8)
    bits_b = (outcomes[kept] & 1).astype(np.uint8)
    basis_pol = np.zeros(kept.size)
    for (i, j), pol in pol_of_pair.items():
        mask = (a_idx[kept] == i) & (b_idx[kept] == j)
        basis_pol[mask] = pol
        if flips[(i, j)]:
            bits_b[mask] ^= 1
    return SiftResult(kept=kept, bits_alice=bits_a, bits_bob=bits_b, basis_pol_deg=basis_pol)


def _wilson_interval(errors: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = errors / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def run_session(cfg: SessionConfig) -> SessionRecord:
    """Run a full protocol session; identical configs give identical records.

    Raises:
        NoSiftedBitsError: if no compatible-basis coincidence survived.
    """
    rng = spawn_rng(cfg.seed)
    state = optics.apply_channel(optics.generate(cfg.source), cfg.channel)
    eve_fraction = cfg.channel.eve_fraction

    alice = cfg.kind.alice_settings()
    bob = cfg.kind.bob_settings()
    n = cfg.n_pairs

    # Fixed draw order: bases, per-arm detection, Eve, outcomes, accidentals,
    # disclosure. Changing it changes the streams, so it is part of the
    # reproducibility contract.
    a_idx = rng.integers(0, len(alice), size=n)
    b_idx = rng.integers(0, len(bob), size=n)
    det_a = rng.random(n) < cfg.detector.eff_alice
    det_b = rng.random(n) < cfg.detector.eff_bob
    coincident = det_a & det_b

    outcomes = intercept_resend(state, alice, bob, a_idx, b_idx, eve_fraction, rng)

    a_idx = a_idx[coincident]
    b_idx = b_idx[coincident]
    outcomes = outcomes[coincident]

    n_acc = int(rng.poisson(cfg.detector.expected_accidentals(n)))
    if n_acc:
        a_idx = np.concatenate([a_idx, rng.integers(0, len(alice), size=n_acc)])
        b_idx = np.concatenate([b_idx, rng.integers(0, len(bob), size=n_acc)])
        outcomes = np.concatenate([outcomes, rng.integers(0, 4, size=n_acc).astype(np.uint8)])

    sifted = sift(cfg.kind, cfg.source.label, a_idx, b_idx, outcomes)
    n_sifted = sifted.kept.size
    if n_sifted == 0:
        raise NoSiftedBitsError(
            f"no sifted bits: {int(coincident.sum())} coincidences, none in matched bases"
        )

    n_disclose = max(1, int(round(cfg.qber_sample_fraction * n_sifted)))
    disclosed = np.sort(rng.choice(n_sifted, size=n_disclose, replace=False))
    errors = sifted.bits_alice[disclosed] != sifted.bits_bob[disclosed]
    qber_hat = float(errors.mean())

    per_basis: dict[float, float] = {}
    for i, j in cfg.kind.matched_pairs():
        pol = (2.0 * cfg.kind.alice_hwp_deg[i]) % 180.0
        in_basis = sifted.basis_pol_deg[disclosed] == pol
        if in_basis.any():
            per_basis[pol] = float(errors[in_basis].mean())

    chsh_subset = None
    if cfg.kind.chsh_pairs:
        chsh_subset = _chsh_from_unmatched(cfg, a_idx, b_idx, outcomes)

    retained = np.setdiff1d(np.arange(n_sifted), disclosed, assume_unique=False)
    return SessionRecord(
        n_pairs=cfg.n_pairs,
        n_coincident=int(len(outcomes)),
        sifted_length=int(n_sifted),
        disclosed_length=int(n_disclose),
        qber_hat=qber_hat,
        qber_ci=_wilson_interval(int(errors.sum()), n_disclose),
        per_basis_qber=per_basis,
        chsh_subset=chsh_subset,
        key_bits_alice=sifted.bits_alice[retained],
        key_bits_bob=sifted.bits_bob[retained],
    )


def _chsh_from_unmatched(
    cfg: SessionConfig, a_idx: np.ndarray, b_idx: np.ndarray, outcomes: np.ndarray
) -> chsh.ChshEstimate | None:
    """CHSH estimate from the designated unmatched setting combinations."""
    alice = cfg.kind.alice_settings()
    bob = cfg.kind.bob_settings()
    rows = []
    for i, j in cfg.kind.chsh_pairs:
        sel = outcomes[(a_idx == i) & (b_idx == j)]
        counts = [int((sel == o).sum()) for o in range(4)]
        if sum(counts) == 0:
            return None
        rows.append(CoincidenceRow(alice[i], bob[j], *counts, duration_tag="session"))
    settings = chsh.canonical_settings(cfg.source.label)
    return chsh.s_from_counts(CoincidenceTable(tuple(rows)), settings)


def security_report(cfg: SessionConfig, record: SessionRecord):
    """Security evaluation of a finished session.

    Bit/phase errors are the two per-basis QBERs (H/V as key basis when
    present); Eve's bound uses the session's measured CHSH value when the
    protocol provides one, otherwise the linear disturbance law.
    """
    from . import security

    pols = sorted(record.per_basis_qber)
    if not pols:
        raise ValueError("session record carries no per-basis QBER estimates")
    e_b = record.per_basis_qber[pols[0]]
    e_p = record.per_basis_qber[pols[-1]] if len(pols) > 1 else e_b
    s = record.chsh_subset.s if record.chsh_subset is not None else None
    return security.evaluate(e_b, e_p, s=s)
