"""Command-line front end.

Subcommands: ``sweep`` (parameter scans with analytic and sampled S, QBER
and mutual-information columns), ``session`` (one protocol run from a JSON
config file), ``thresholds`` (safe-operation QBER limits) and ``analyze``
(coincidence-count file to CHSH + security report).

Exit codes: 0 success, 2 usage/configuration, 3 I/O, 4 data validation.
Sweeps write a versioned tab-delimited table; reports are versioned JSON.
All outputs are byte-identical across runs with the same seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from . import chsh, ingest, optics, protocol, security
from .measurement import (
    AnalyzerSetting,
    CoincidenceRow,
    CoincidenceTable,
    DetectorModel,
    bob_flip,
    intercept_average_state,
    sample_outcomes,
    spawn_rng,
)
from .optics import ChannelKind, ChannelModel, SourceModel
from .qstate import BellLabel

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4

SWEEP_FORMAT = "ebqkd-sweep/1"
REPORT_FORMAT = "ebqkd-report/1"
CONFIG_DIR_ENV = "EBQKD_CONFIG_DIR"

#: Stable sweep column order; parsers may rely on it.
SWEEP_COLUMNS = (
    "mechanism_param",
    "S_analytic",
    "S_sampled",
    "sigma_S",
    "qber",
    "I_AB",
    "I_AE",
    "r",
)

MECHANISMS = ("werner", "imbalance", "hom_visibility", "intercept_fraction")


class ConfigError(ValueError):
    """A sweep spec or session config is invalid (usage-class failure)."""


@dataclasses.dataclass(frozen=True)
class SweepSpec:
    """One parameter scan: a mechanism, its grid and the per-point budget.

    QBER columns always sample the H/V and D/A key bases, the reference
    frame in which the linear S-QBER law is exact for every mechanism;
    ``protocol_kind`` tags the emitted header.
    """

    mechanism: str
    grid: tuple[float, ...]
    n_pairs: int
    protocol_kind: protocol.ProtocolKind = protocol.BBM92
    label: BellLabel = BellLabel.PHI_PLUS
    detector: DetectorModel = DetectorModel()
    qber_mode: str = "mean"  # or "worst"

    def __post_init__(self) -> None:
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}; expected one of {MECHANISMS}")
        if not self.grid:
            raise ConfigError("sweep grid must not be empty")
        lo, hi = (0.0, math.pi / 2) if self.mechanism == "imbalance" else (0.0, 1.0)
        for value in self.grid:
            if not lo <= value <= hi:
                raise ConfigError(
                    f"grid value {value!r} outside [{lo:g}, {hi:g}] for {self.mechanism}"
                )
        if self.n_pairs < 1:
            raise ConfigError(f"n_pairs must be >= 1, got {self.n_pairs!r}")
        if self.qber_mode not in ("mean", "worst"):
            raise ConfigError(f"qber mode must be 'mean' or 'worst', got {self.qber_mode!r}")


def _point_models(spec: SweepSpec, value: float) -> tuple[SourceModel, ChannelModel]:
    if spec.mechanism == "werner":
        return SourceModel(spec.label), ChannelModel.werner(value)
    if spec.mechanism == "imbalance":
        return SourceModel(spec.label, epsilon_rad=value), ChannelModel.identity()
    if spec.mechanism == "hom_visibility":
        return SourceModel(spec.label, hom_visibility=value), ChannelModel.identity()
    return SourceModel(spec.label), ChannelModel.intercept_resend(value)


def sweep_point(spec: SweepSpec, index: int, value: float, seed: int) -> dict[str, float]:
    """Analytic and sampled quantities for one grid point.

    Sampling uses ``n_pairs`` emitted pairs per analyzer configuration
    (four CHSH setting pairs plus one per key basis), each on its own
    deterministic child stream of ``seed``.
    """
    source, channel = _point_models(spec, value)
    state = optics.apply_channel(optics.generate(source), channel)
    eve = channel.eve_fraction
    analytic_state = intercept_average_state(state, eve) if eve else state
    settings = chsh.canonical_settings(spec.label)

    s_analytic = chsh.s_analytic(analytic_state, settings).s

    rows = []
    for k, (a, b) in enumerate(settings.pairs()):
        counts = sample_outcomes(
            state, a, b, spec.detector, spec.n_pairs, spawn_rng(seed, index, k), eve_fraction=eve
        )
        rows.append(CoincidenceRow(a, b, *counts))
    sampled = chsh.s_from_counts(CoincidenceTable(tuple(rows)), settings)

    basis_qber = []
    for k, pol_rad in enumerate((0.0, math.pi / 4)):
        setting = AnalyzerSetting.from_polarization(math.degrees(pol_rad))
        counts = sample_outcomes(
            state,
            setting,
            setting,
            spec.detector,
            spec.n_pairs,
            spawn_rng(seed, index, 4 + k),
            eve_fraction=eve,
        )
        n_pp, n_pm, n_mp, n_mm = counts
        total = sum(counts)
        wrong = (n_pp + n_mm) if bob_flip(spec.label, pol_rad) else (n_pm + n_mp)
        basis_qber.append(wrong / total if total else 0.0)

    qber = max(basis_qber) if spec.qber_mode == "worst" else sum(basis_qber) / 2.0
    report = security.evaluate(basis_qber[0], basis_qber[1], s=sampled.s)
    return {
        "mechanism_param": value,
        "S_analytic": s_analytic,
        "S_sampled": sampled.s,
        "sigma_S": sampled.sigma_s,
        "qber": qber,
        "I_AB": report.i_ab,
        "I_AE": report.i_ae,
        "r": report.r,
    }


def run_sweep(spec: SweepSpec, seed: int, workers: int = 1) -> list[dict[str, float]]:
    """All grid points, in grid order regardless of worker scheduling."""
    if workers <= 1:
        return [sweep_point(spec, i, v, seed) for i, v in enumerate(spec.grid)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(sweep_point, spec, i, v, seed) for i, v in enumerate(spec.grid)
        ]
        return [f.result() for f in futures]


def write_sweep_table(
    rows: list[dict[str, float]], spec: SweepSpec, seed: int, out: TextIO,
    delimiter: str = "\t",
) -> None:
    out.write(f"# {SWEEP_FORMAT}\n")
    out.write(
        f"# mechanism: {spec.mechanism}  protocol: {spec.protocol_kind.name}  "
        f"label: {spec.label.value}  n_pairs: {spec.n_pairs}  seed: {seed}  "
        f"qber: {spec.qber_mode}\n"
    )
    out.write(delimiter.join(SWEEP_COLUMNS) + "\n")
    for row in rows:
        out.write(delimiter.join(f"{row[c]:.10g}" for c in SWEEP_COLUMNS) + "\n")


def read_sweep_table(source: str | Path) -> dict[str, list[float]]:
    """Parse a sweep table back into columns (round-trip of the schema)."""
    columns: list[str] | None = None
    data: dict[str, list[float]] = {}
    for raw in Path(source).read_text(encoding="utf-8").splitlines():
        if not raw.strip() or raw.startswith("#"):
            continue
        delimiter = "\t" if "\t" in raw else ","
        if columns is None:
            columns = raw.split(delimiter)
            if tuple(columns) != SWEEP_COLUMNS:
                raise ValueError(f"unexpected sweep columns: {columns!r}")
            data = {c: [] for c in columns}
            continue
        for c, token in zip(columns, raw.split(delimiter)):
            data[c].append(float(token))
    if columns is None:
        raise ValueError("no header row found")
    return data


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError:
        raise ConfigError(f"grid must be comma-separated numbers, got {text!r}")


def _resolve_config_path(path_arg: str) -> Path:
    path = Path(path_arg)
    if not path.is_absolute() and not path.exists():
        config_dir = os.environ.get(CONFIG_DIR_ENV)
        if config_dir and (Path(config_dir) / path).exists():
            return Path(config_dir) / path
    return path


def _require(mapping: dict, key: str, where: str) -> Any:
    if key not in mapping:
        raise ConfigError(f"missing required config field '{where}{key}'")
    return mapping[key]


def _session_config(doc: dict, args: argparse.Namespace) -> protocol.SessionConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    try:
        kind = protocol.protocol_by_name(str(_require(doc, "protocol", "")))
    except ValueError as exc:
        raise ConfigError(f"config field 'protocol': {exc}")

    source_doc = _require(doc, "source", "")
    try:
        label = BellLabel(str(_require(source_doc, "label", "source.")))
    except ValueError:
        raise ConfigError(
            f"config field 'source.label' must be one of {[l.value for l in BellLabel]}"
        )
    try:
        source = SourceModel(
            label,
            epsilon_rad=float(source_doc.get("epsilon_rad", math.pi / 4)),
            hom_visibility=float(source_doc.get("hom_visibility", 1.0)),
        )
        channel_doc = doc.get("channel", {"kind": "identity"})
        channel = ChannelModel(
            kind=ChannelKind(str(channel_doc.get("kind", "identity"))),
            parameter=float(channel_doc.get("parameter", 0.0)),
            arm=str(channel_doc.get("arm", "both")),
        )
        det_doc = doc.get("detector", {})
        detector = DetectorModel(
            efficiency=float(det_doc.get("efficiency", 0.6)),
            dark_rate=float(det_doc.get("dark_rate", 0.0)),
            window_pairs=int(det_doc.get("window_pairs", 1)),
            efficiency_b=(
                float(det_doc["efficiency_b"]) if "efficiency_b" in det_doc else None
            ),
        )
        return protocol.SessionConfig(
            kind=kind,
            source=source,
            channel=channel,
            detector=detector,
            n_pairs=int(args.n_pairs if args.n_pairs is not None else doc.get("n_pairs", 100_000)),
            qber_sample_fraction=float(doc.get("qber_sample_fraction", 0.1)),
            seed=int(args.seed if args.seed is not None else doc.get("seed", 0)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid session config: {exc}")


def _json_ready(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, BellLabel):
        return value.value
    return value


def _write_report(doc: dict, out_path: str | None) -> None:
    text = json.dumps(_json_ready(doc), sort_keys=True, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _security_dict(report: security.SecurityReport) -> dict:
    return dataclasses.asdict(report)


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = SweepSpec(
        mechanism=args.mechanism,
        grid=_parse_grid(args.grid),
        n_pairs=args.n_pairs if args.n_pairs is not None else 100_000,
        protocol_kind=protocol.protocol_by_name(args.protocol),
        label=BellLabel(args.label),
        detector=DetectorModel(efficiency=args.efficiency),
        qber_mode=args.qber,
    )
    seed = args.seed if args.seed is not None else 0
    rows = run_sweep(spec, seed, workers=args.workers)
    delimiter = "," if args.format == "csv" else "\t"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_sweep_table(rows, spec, seed, fh, delimiter)
    else:
        write_sweep_table(rows, spec, seed, sys.stdout, delimiter)
    return EXIT_OK


def cmd_session(args: argparse.Namespace) -> int:
    path = _resolve_config_path(args.config)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    cfg = _session_config(doc, args)
    record = protocol.run_session(cfg)
    report = protocol.security_report(cfg, record)

    out: dict[str, Any] = {
        "format": REPORT_FORMAT,
        "kind": "session",
        "protocol": cfg.kind.name,
        "label": cfg.source.label.value,
        "seed": cfg.seed,
        "record": {
            "n_pairs": record.n_pairs,
            "n_coincident": record.n_coincident,
            "sifted_length": record.sifted_length,
            "disclosed_length": record.disclosed_length,
            "retained_length": int(record.key_bits_alice.size),
            "qber_hat": record.qber_hat,
            "qber_ci95": list(record.qber_ci),
            "per_basis_qber": {f"{k:g}": v for k, v in sorted(record.per_basis_qber.items())},
            "chsh": None
            if record.chsh_subset is None
            else {
                "S": record.chsh_subset.s,
                "sigma_S": record.chsh_subset.sigma_s,
                "correlators": list(record.chsh_subset.correlators),
            },
        },
        "security": _security_dict(report),
    }
    if args.emit_keys:
        out["record"]["key_alice"] = "".join(str(b) for b in record.key_bits_alice)
        out["record"]["key_bob"] = "".join(str(b) for b in record.key_bits_bob)
    _write_report(out, args.out)
    return EXIT_OK


def cmd_thresholds(args: argparse.Namespace) -> int:
    thr = security.thresholds()
    if args.format == "json":
        _write_report(
            {"format": REPORT_FORMAT, "kind": "thresholds", **dataclasses.asdict(thr)},
            args.out,
        )
        return EXIT_OK
    lines = [
        f"delta_individual  {thr.delta_individual:.6f}   S(delta) = 2 on the linear law (analytic)",
        f"delta_collective  {thr.delta_collective:.6f}   root of 1 - 2 H(delta), bisection to 1e-6",
        f"delta_mi_zero     {thr.delta_mi_zero:.6f}   I(A:B) = I(A:E) crossing, bisection to 1e-6",
        f"S_at_individual   {thr.s_at_individual:.6f}   classical bound",
        f"S_at_collective   {thr.s_at_collective:.6f}   linear law at delta_collective",
        f"S_at_mi_zero      {thr.s_at_mi_zero:.6f}   linear law at delta_mi_zero",
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    record = ingest.parse_counts(args.counts)
    settings = chsh.canonical_settings(record.state_label)
    estimate, report = ingest.analyze_counts(
        record,
        settings=settings,
        protocol=protocol.protocol_by_name(args.protocol),
        accidental_window=args.accidental_window,
    )
    _write_report(
        {
            "format": REPORT_FORMAT,
            "kind": "analysis",
            "counts_file": str(args.counts),
            "state": record.state_label.value,
            "chsh": {
                "S": estimate.s,
                "sigma_S": estimate.sigma_s,
                "correlators": list(estimate.correlators),
            },
            "security": _security_dict(report),
        },
        args.out,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebqkd",
        description="Entanglement-based QKD simulator and security analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="scan a disturbance mechanism over a grid")
    p_sweep.add_argument("--mechanism", required=True, choices=MECHANISMS)
    p_sweep.add_argument("--grid", required=True, help="comma-separated parameter values")
    p_sweep.add_argument("--n-pairs", type=int, default=None, dest="n_pairs")
    p_sweep.add_argument("--protocol", default="bbm92", choices=("bbm92", "e91"))
    p_sweep.add_argument("--label", default="phi_plus", choices=[l.value for l in BellLabel])
    p_sweep.add_argument("--efficiency", type=float, default=0.6)
    p_sweep.add_argument("--qber", default="mean", choices=("mean", "worst"),
                         help="basis-averaged or worst-basis QBER column")
    p_sweep.add_argument("--format", default="tsv", choices=("tsv", "csv"))
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_session = sub.add_parser("session", help="run one protocol session from a config file")
    p_session.add_argument("config", help=f"JSON config path (searched in ${CONFIG_DIR_ENV})")
    p_session.add_argument("--n-pairs", type=int, default=None, dest="n_pairs")
    p_session.add_argument("--seed", type=int, default=None)
    p_session.add_argument("--emit-keys", action="store_true",
                           help="include raw key bits in the report (off by default)")
    p_session.add_argument("--out", default=None)
    p_session.set_defaults(func=cmd_session)

    p_thr = sub.add_parser("thresholds", help="print safe-operation QBER thresholds")
    p_thr.add_argument("--format", default="text", choices=("text", "json"))
    p_thr.add_argument("--out", default=None)
    p_thr.set_defaults(func=cmd_thresholds)

    p_an = sub.add_parser("analyze", help="analyze a coincidence-count file")
    p_an.add_argument("counts", help="qkd-counts file path")
    p_an.add_argument("--protocol", default="bbm92", choices=("bbm92", "e91"))
    p_an.add_argument("--accidental-window", type=float, default=None,
                      dest="accidental_window",
                      help="coincidence window / acquisition time; enables accidental subtraction")
    p_an.add_argument("--out", default=None)
    p_an.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ingest.CountFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, protocol.NoSiftedBitsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
