"""Measured coincidence-count files and the calibration pipeline.

The on-disk format (``qkd-counts/1``) is a comment-tolerant, whitespace
delimited UTF-8 text table recording one analyzer projection combination
per row, the way a two-detector setup acquires them.  See
``docs/counts-format.md`` for the grammar.

Example::

    # any line content after '#' is ignored
    format: qkd-counts/1
    state: phi_plus
    seconds-per-row: 1.0
    # alice_hwp_deg  bob_hwp_deg  singles_a  singles_b  coincidences
    0       11.25   58934   59102   853

``analyze_counts`` assembles full outcome quadruples for each CHSH setting
pair from the projector rows (a, a+90) x (b, b+90), estimates S and the
per-basis QBERs, and evaluates the security quantities.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from . import chsh, security
from .measurement import (
    AnalyzerSetting,
    CoincidenceRow,
    CoincidenceTable,
    DetectorModel,
    bob_flip,
    sample_outcomes,
    spawn_rng,
)
from .protocol import BBM92, ProtocolKind
from .qstate import BellLabel, TwoQubitState, joint_probabilities

FORMAT_NAME = "qkd-counts"
FORMAT_VERSION = 1
_HEADER_KEYS = ("state", "seconds-per-row")


class CountFileError(ValueError):
    """A count file failed parsing or validation.

    ``line`` is the 1-based source line when the failure is localized.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class CountRow:
    """One projection combination: both analyzers fixed, coincidences counted."""

    alice_hwp_deg: float
    bob_hwp_deg: float
    singles_a: int
    singles_b: int
    coincidences: int
    line: int = 0


@dataclass(frozen=True)
class CountRecordFile:
    version: int
    state_label: BellLabel
    seconds_per_row: float
    rows: tuple[CountRow, ...]

    def find(self, alice_hwp_deg: float, bob_hwp_deg: float, atol: float = 1e-6) -> CountRow | None:
        for row in self.rows:
            if (
                abs(row.alice_hwp_deg - alice_hwp_deg % 180.0) <= atol
                and abs(row.bob_hwp_deg - bob_hwp_deg % 180.0) <= atol
            ):
                return row
        return None


def _iter_content_lines(text: str) -> Iterable[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if content:
            yield lineno, content


def parse_counts(source: str | Path | bytes | IO[str] | IO[bytes]) -> CountRecordFile:
    """Parse and strictly validate a count file.

    Accepts a path, raw bytes, or an open text/binary stream.

    Raises:
        CountFileError: naming the offending line for malformed rows,
            negative counts, duplicate angle pairs, unknown versions and
            empty files.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    lines = list(_iter_content_lines(text))
    if not lines:
        raise CountFileError("no rows: file has no content")

    lineno, first = lines[0]
    if not first.startswith("format:"):
        raise CountFileError(f"expected 'format: {FORMAT_NAME}/{FORMAT_VERSION}' header", lineno)
    declared = first.split(":", 1)[1].strip()
    if declared != f"{FORMAT_NAME}/{FORMAT_VERSION}":
        raise CountFileError(f"unknown format version {declared!r}", lineno)

    header: dict[str, str] = {}
    rows: list[CountRow] = []
    seen: dict[tuple[float, float], int] = {}
    for lineno, content in lines[1:]:
        if ":" in content and not rows:
            key, _, value = content.partition(":")
            key = key.strip().lower()
            if key not in _HEADER_KEYS:
                raise CountFileError(f"unknown header key {key!r}", lineno)
            if key in header:
                raise CountFileError(f"duplicate header key {key!r}", lineno)
            header[key] = value.strip()
            continue
        rows.append(_parse_row(content, lineno, seen))

    for key in _HEADER_KEYS:
        if key not in header:
            raise CountFileError(f"missing required header {key!r}")
    try:
        label = BellLabel(header["state"])
    except ValueError:
        raise CountFileError(
            f"unknown state {header['state']!r}; expected one of "
            f"{[l.value for l in BellLabel]}"
        )
    try:
        seconds = float(header["seconds-per-row"])
    except ValueError:
        raise CountFileError(f"seconds-per-row is not a number: {header['seconds-per-row']!r}")
    if not math.isfinite(seconds) or seconds <= 0.0:
        raise CountFileError(f"seconds-per-row must be positive and finite, got {seconds!r}")
    if not rows:
        raise CountFileError("no rows: file contains headers only")

    return CountRecordFile(
        version=FORMAT_VERSION,
        state_label=label,
        seconds_per_row=seconds,
        rows=tuple(rows),
    )


_COLUMNS = ("alice_hwp_deg", "bob_hwp_deg", "singles_a", "singles_b", "coincidences")


def _parse_row(content: str, lineno: int, seen: dict[tuple[float, float], int]) -> CountRow:
    tokens = content.split()
    if len(tokens) != 5:
        raise CountFileError(
            f"malformed row: expected 5 columns ({' '.join(_COLUMNS)}), got {len(tokens)}",
            lineno,
        )
    angles = []
    for col, token in enumerate(tokens[:2]):
        try:
            value = float(token)
        except ValueError:
            raise CountFileError(
                f"malformed row: column {col + 1} ({_COLUMNS[col]}) must be decimal degrees,"
                f" got {token!r}",
                lineno,
            )
        if not math.isfinite(value):
            raise CountFileError(
                f"malformed row: column {col + 1} ({_COLUMNS[col]}) must be finite", lineno
            )
        if not 0.0 <= value < 180.0:
            raise CountFileError(
                f"HWP angles must be in [0, 180) degrees, got {value} in column {col + 1}",
                lineno,
            )
        angles.append(value)
    counts = []
    for col, token in enumerate(tokens[2:], start=2):
        try:
            value = int(token)
        except ValueError:
            raise CountFileError(
                f"malformed row: column {col + 1} ({_COLUMNS[col]}) count {token!r}"
                f" is not an integer",
                lineno,
            )
        if value < 0:
            raise CountFileError(
                f"negative count {value} in column {col + 1} ({_COLUMNS[col]})", lineno
            )
        counts.append(value)
    a_deg, b_deg = angles
    key = (round(a_deg, 6), round(b_deg, 6))
    if key in seen:
        raise CountFileError(
            f"duplicate angle pair ({a_deg}, {b_deg}), first seen on line {seen[key]}", lineno
        )
    seen[key] = lineno
    return CountRow(a_deg, b_deg, counts[0], counts[1], counts[2], line=lineno)


def write_counts(record: CountRecordFile, dest: str | Path | IO[str]) -> None:
    """Serialize a count file in the exact shape ``parse_counts`` reads."""
    buf = io.StringIO()
    buf.write(f"format: {FORMAT_NAME}/{FORMAT_VERSION}\n")
    buf.write(f"state: {record.state_label.value}\n")
    buf.write(f"seconds-per-row: {record.seconds_per_row:g}\n")
    buf.write("# alice_hwp_deg bob_hwp_deg singles_a singles_b coincidences\n")
    for row in record.rows:
        buf.write(
            f"{row.alice_hwp_deg:g} {row.bob_hwp_deg:g} "
            f"{row.singles_a} {row.singles_b} {row.coincidences}\n"
        )
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(buf.getvalue(), encoding="utf-8")
    else:
        dest.write(buf.getvalue())


def _orthogonal_hwp(hwp_deg: float) -> float:
    """HWP angle projecting on the orthogonal polarization (+90 deg)."""
    return (hwp_deg + 45.0) % 180.0


def required_hwp_pairs(
    settings: chsh.ChshSettings, protocol: ProtocolKind = BBM92
) -> tuple[tuple[float, float], ...]:
    """All (alice_hwp, bob_hwp) rows a full analysis file must carry.

    16 projector combinations for the CHSH estimate (4 setting pairs, each
    expanded over both output ports per side) plus 4 per compatible basis
    for the QBER estimate.
    """
    pairs: list[tuple[float, float]] = []
    for a, b in settings.pairs():
        pairs.append((a.hwp_angle_deg, b.hwp_angle_deg))
    for i, j in protocol.matched_pairs():
        pairs.append((protocol.alice_hwp_deg[i], protocol.bob_hwp_deg[j]))
    expanded: list[tuple[float, float]] = []
    seen: set[tuple[float, float]] = set()
    for a_hwp, b_hwp in pairs:
        for ah in (a_hwp, _orthogonal_hwp(a_hwp)):
            for bh in (b_hwp, _orthogonal_hwp(b_hwp)):
                key = (round(ah, 6), round(bh, 6))
                if key not in seen:
                    seen.add(key)
                    expanded.append((ah, bh))
    return tuple(expanded)


def synthesize_counts(
    state: TwoQubitState,
    label: BellLabel,
    n_pairs_per_row: int,
    seed: int,
    detector: DetectorModel | None = None,
    settings: chsh.ChshSettings | None = None,
    protocol: ProtocolKind = BBM92,
    seconds_per_row: float = 1.0,
    poisson: bool = True,
) -> CountRecordFile:
    """Simulate the acquisition of a full analysis file from a known state.

    Each row is an independent acquisition of ``n_pairs_per_row`` emitted
    pairs with both analyzers fixed; only the doubly transmitted
    coincidences of that projection are recorded, as in hardware.  With
    ``poisson=False`` the rows carry rounded expected counts instead of
    sampled ones.
    """
    det = detector or DetectorModel(efficiency=1.0)
    settings = settings or chsh.canonical_settings(label)
    rows = []
    for k, (a_hwp, b_hwp) in enumerate(required_hwp_pairs(settings, protocol)):
        a = AnalyzerSetting(a_hwp)
        b = AnalyzerSetting(b_hwp)
        if poisson:
            n_pp, _, _, _ = sample_outcomes(
                state, a, b, det, n_pairs_per_row, spawn_rng(seed, k)
            )
        else:
            dist = joint_probabilities(state, a, b)
            n_pp = int(round(dist.p_pp * n_pairs_per_row * det.coincidence_efficiency()))
        rng = spawn_rng(seed, k, 1)
        p_single_a = float(
            np.trace(state.rho @ np.kron(_transmission_projector(a), np.eye(2))).real
        )
        p_single_b = float(
            np.trace(state.rho @ np.kron(np.eye(2), _transmission_projector(b))).real
        )
        singles_a = int(rng.binomial(n_pairs_per_row, det.eff_alice * p_single_a))
        singles_b = int(rng.binomial(n_pairs_per_row, det.eff_bob * p_single_b))
        rows.append(CountRow(a_hwp, b_hwp, singles_a, singles_b, n_pp))
    return CountRecordFile(
        version=FORMAT_VERSION,
        state_label=label,
        seconds_per_row=seconds_per_row,
        rows=tuple(rows),
    )


def _transmission_projector(setting: AnalyzerSetting) -> np.ndarray:
    from .qstate import polarization_projector

    return polarization_projector(setting.polarization_angle_rad)


def analyze_counts(
    record: CountRecordFile,
    settings: chsh.ChshSettings | None = None,
    protocol: ProtocolKind = BBM92,
    accidental_window: float | None = None,
) -> tuple[chsh.ChshEstimate, security.SecurityReport]:
    """Drive the estimator pipeline over a parsed count file.

    Builds outcome quadruples per CHSH setting pair from the projector
    rows, estimates S with Poisson uncertainty, computes per-basis QBERs
    in the protocol's compatible bases (bit errors counted against the
    file's state label), and evaluates the security report with Eve's
    bound at the measured S.

    Args:
        accidental_window: optional coincidence-window/duration ratio; when
            given, ``singles_a * singles_b * window / seconds_per_row`` is
            subtracted from each row's coincidences (clamped at zero).
            Off by default since the window is setup-specific.

    Raises:
        CountFileError: listing any missing (alice, bob) HWP pairs.
    """
    settings = settings or chsh.canonical_settings(record.state_label)

    def coincidences(row: CountRow) -> int:
        if accidental_window is None:
            return row.coincidences
        accidental = row.singles_a * row.singles_b * accidental_window / record.seconds_per_row
        return max(0, int(round(row.coincidences - accidental)))

    missing_pairs: list[tuple[float, float]] = []

    def quad(a_hwp: float, b_hwp: float) -> tuple[int, int, int, int] | None:
        combos = [
            (a_hwp, b_hwp),
            (a_hwp, _orthogonal_hwp(b_hwp)),
            (_orthogonal_hwp(a_hwp), b_hwp),
            (_orthogonal_hwp(a_hwp), _orthogonal_hwp(b_hwp)),
        ]
        found = [record.find(a, b) for a, b in combos]
        if any(row is None for row in found):
            missing_pairs.extend(c for c, row in zip(combos, found) if row is None)
            return None
        return tuple(coincidences(row) for row in found)

    rows = []
    for a, b in settings.pairs():
        counts = quad(a.hwp_angle_deg, b.hwp_angle_deg)
        if counts is not None:
            rows.append(
                CoincidenceRow(a, b, *counts, duration_tag=f"{record.seconds_per_row:g}s")
            )

    basis_qber: dict[float, float] = {}
    zero_basis: float | None = None
    for i, j in protocol.matched_pairs():
        a_hwp = protocol.alice_hwp_deg[i]
        counts = quad(a_hwp, protocol.bob_hwp_deg[j])
        if counts is None:
            continue
        pol = (2.0 * a_hwp) % 180.0
        n_pp, n_pm, n_mp, n_mm = counts
        total = sum(counts)
        if total == 0:
            zero_basis = pol
            continue
        wrong = (n_pp + n_mm) if bob_flip(record.state_label, math.radians(pol)) else (n_pm + n_mp)
        basis_qber[pol] = wrong / total

    if missing_pairs:
        pretty = ", ".join(f"({a:g}, {b:g})" for a, b in dict.fromkeys(missing_pairs))
        raise CountFileError(f"missing required HWP angle pairs: {pretty}")
    if zero_basis is not None:
        raise CountFileError(
            f"zero coincidences in the compatible basis at {zero_basis:g} deg polarization"
        )

    estimate = chsh.s_from_counts(CoincidenceTable(tuple(rows)), settings)
    pols = sorted(basis_qber)
    e_b = basis_qber[pols[0]]
    e_p = basis_qber[pols[-1]] if len(pols) > 1 else e_b
    report = security.evaluate(e_b, e_p, s=estimate.s)
    return estimate, report
