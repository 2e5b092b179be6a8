"""Command-line front end: run sweeps from JSON configs, emit CSV and SVG.

Grammar::

    ddisac <jcde|rpe|channel-dump|dict-dump> --config <path>
           [--out <dir>] [--seed <u64>] [--trials <n>] [--no-plot]

Every emitted file embeds the resolved configuration and seed, so a run can
be reproduced from its outputs alone. Exit status: 0 on success, 2 on
configuration errors, 1 on runtime failures (a machine-readable JSON line is
printed to stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .channel import SystemConfig, build_td_channel, sample_paths
from .errors import ConfigurationError
from .montecarlo import (
    ExperimentPlan,
    JcdeSettings,
    MetricsRecord,
    RpeSettings,
    run_sweep,
)
from .rpe import build_dictionary
from .waveform import (
    Constellation,
    FrameLayout,
    WaveformSpec,
    block_pilot_layout,
    build_frame,
    single_pilot_layout,
)

CSV_HEADER = (
    "scenario,waveform,method,snr_db,trials,ber,nmse,"
    "rmse_range,rmse_velocity,mean_iterations,failures,seed"
)

_PLOT_METRICS = {
    "jcde": ("ber", "nmse"),
    "rpe": ("nmse", "rmse_range", "rmse_velocity"),
}


@dataclass(frozen=True)
class CliConfig:
    """Parsed command line: subcommand plus file locations and overrides."""

    subcommand: str
    config_path: Path
    output_dir: Path
    seed: Optional[int]
    trials: Optional[int]
    plot: bool


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddisac",
        description="Doubly-dispersive link and radar-parameter simulator",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in (
        ("jcde", "run a joint channel/data estimation sweep"),
        ("rpe", "run a radar parameter estimation sweep"),
        ("channel-dump", "dump one time-domain channel matrix"),
        ("dict-dump", "dump one delay-Doppler dictionary matrix"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        p.add_argument("--trials", type=int, default=None, help="override trials per point")
        p.add_argument("--no-plot", action="store_true", help="skip SVG plots")
    return parser


def _load_json(path: Path) -> dict:
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be a JSON object")
    return cfg


def _require(cfg: dict, key: str, kind, context: str):
    if key not in cfg:
        raise ConfigurationError(f"missing key {key!r} in {context}")
    value = cfg[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigurationError(
            f"key {key!r} in {context} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _waveform_from_config(cfg: dict, f_max: float) -> WaveformSpec:
    kind = _require(cfg, "kind", str, "waveform")
    if kind == "otfs":
        k = _require(cfg, "k", int, "waveform")
        m = _require(cfg, "m", int, "waveform")
        return WaveformSpec.otfs(k, m)
    n = _require(cfg, "n", int, "waveform")
    if kind == "ofdm":
        return WaveformSpec.ofdm(n)
    if kind == "afdm":
        return WaveformSpec.afdm(n, f_max=f_max, c1=cfg.get("c1"), c2=cfg.get("c2"))
    raise ConfigurationError(f"unknown waveform kind {kind!r}")


def _layout_from_config(cfg: dict, n: int, es: float) -> FrameLayout:
    layout_type = _require(cfg, "type", str, "layout")
    block_len = _require(cfg, "block_len", int, "layout")
    boost = float(cfg.get("pilot_power_boost", 1.0))
    if layout_type == "block":
        return block_pilot_layout(n, block_len, es=es, pilot_power_boost=boost)
    if layout_type == "single_pilot":
        return single_pilot_layout(n, block_len, es=es, pilot_power_boost=boost)
    raise ConfigurationError(f"unknown layout type {layout_type!r}")


def plan_from_config(cfg: dict) -> ExperimentPlan:
    """Validate a parsed JSON config and build the experiment plan."""
    scenario = _require(cfg, "scenario", str, "config")
    system_cfg = _require(cfg, "system", dict, "config")
    waveform_cfg = _require(cfg, "waveform", dict, "config")
    layout_cfg = _require(cfg, "layout", dict, "config")
    es = float(cfg.get("es", 1.0))
    f_max = _require(system_cfg, "f_max", float, "system")
    waveform = _waveform_from_config(waveform_cfg, f_max)
    system = SystemConfig(
        n=waveform.n,
        carrier_hz=_require(system_cfg, "carrier_hz", float, "system"),
        bandwidth_hz=_require(system_cfg, "bandwidth_hz", float, "system"),
        ell_max=_require(system_cfg, "ell_max", int, "system"),
        f_max=f_max,
        n_cp=int(system_cfg.get("n_cp", system_cfg["ell_max"])),
    )
    layout = _layout_from_config(layout_cfg, waveform.n, es)
    methods = _require(cfg, "methods", list, "config")
    snr = _require(cfg, "snr_points_db", list, "config")
    jcde_cfg = cfg.get("jcde", {})
    rpe_cfg = cfg.get("rpe", {})
    targets = rpe_cfg.get("targets")
    if targets is not None:
        targets = tuple((int(t[0]), float(t[1])) for t in targets)
    return ExperimentPlan(
        scenario=scenario,
        waveform=waveform,
        system=system,
        layout=layout,
        methods=tuple(methods),
        snr_points_db=tuple(float(s) for s in snr),
        trials_per_point=_require(cfg, "trials_per_point", int, "config"),
        base_seed=_require(cfg, "base_seed", int, "config"),
        num_paths=int(cfg.get("num_paths", 4)),
        es=es,
        sigma_h2=float(cfg.get("sigma_h2", 1.0)),
        jcde=JcdeSettings(
            beta_x=float(jcde_cfg.get("beta_x", 0.3)),
            beta_h=float(jcde_cfg.get("beta_h", 0.3)),
            i_max=int(jcde_cfg.get("i_max", 40)),
        ),
        rpe=RpeSettings(
            num_doppler=int(rpe_cfg.get("num_doppler", 11)),
            num_delay=rpe_cfg.get("num_delay"),
            observation=rpe_cfg.get("observation", "full"),
            num_targets=int(rpe_cfg.get("num_targets", 1)),
            targets=targets,
            pda_beta=float(rpe_cfg.get("pda_beta", 0.5)),
            pda_i_max=int(rpe_cfg.get("pda_i_max", 40)),
            sbl_epsilon=float(rpe_cfg.get("sbl_epsilon", 1e-6)),
            sbl_i_max=int(rpe_cfg.get("sbl_i_max", 80)),
        ),
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17e}"
    return str(value)


def _comment_block(resolved_config: dict) -> list[str]:
    return [
        "# ddisac results",
        f"# config: {json.dumps(resolved_config, sort_keys=True)}",
        f"# seed: {resolved_config.get('base_seed')}",
    ]


def emit_csv(records: Sequence[MetricsRecord], path: Path, resolved_config: dict):
    """Write records with the fixed schema, prefixed by a reproducibility block."""
    if not records:
        raise ValueError("no records to write")
    lines = _comment_block(resolved_config)
    lines.append(CSV_HEADER)
    for r in records:
        lines.append(
            ",".join(
                [
                    r.scenario,
                    r.waveform,
                    r.method,
                    _fmt(r.snr_db),
                    str(r.trials),
                    _fmt(r.ber),
                    _fmt(r.nmse),
                    _fmt(r.rmse_range),
                    _fmt(r.rmse_velocity),
                    _fmt(r.mean_iterations),
                    str(r.failures),
                    str(r.seed),
                ]
            )
        )
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise RuntimeError(f"cannot write CSV to {path}: {exc}") from exc


def read_csv_records(path: Path) -> list[MetricsRecord]:
    """Parse a CSV produced by :func:`emit_csv` back into records."""
    lines = [
        ln
        for ln in Path(path).read_text(encoding="utf-8").splitlines()
        if ln and not ln.startswith("#")
    ]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header in {path}")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        opt = lambda s: float(s) if s else None
        records.append(
            MetricsRecord(
                scenario=parts[0],
                waveform=parts[1],
                method=parts[2],
                snr_db=float(parts[3]),
                trials=int(parts[4]),
                ber=opt(parts[5]),
                nmse=opt(parts[6]),
                rmse_range=opt(parts[7]),
                rmse_velocity=opt(parts[8]),
                mean_iterations=opt(parts[9]),
                failures=int(parts[10]),
                seed=int(parts[11]),
                wall_time_seconds=0.0,
            )
        )
    return records


def emit_plot(
    records: Sequence[MetricsRecord],
    path: Path,
    metric: str,
    resolved_config: Optional[dict] = None,
):
    """One SVG per metric: metric vs SNR, log metric axis, one line per method."""
    if not records:
        raise ValueError("no records to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    methods = sorted({r.method for r in records})
    for method in methods:
        pts = [(r.snr_db, getattr(r, metric)) for r in records if r.method == method]
        pts = [(s, v) for s, v in pts if v is not None]
        if not pts:
            continue
        pts.sort()
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            label=method,
        )
    ax.set_yscale("log")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel(metric)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    metadata = {"Date": None}
    if resolved_config is not None:
        metadata["Description"] = json.dumps(resolved_config, sort_keys=True)
    try:
        fig.savefig(path, format="svg", metadata=metadata)
    except OSError as exc:
        raise RuntimeError(f"cannot write plot to {path}: {exc}") from exc
    finally:
        plt.close(fig)


def _complex_str(z: complex) -> str:
    return f"{z.real:.17e}{z.imag:+.17e}j"


def _write_complex_matrix(matrix: np.ndarray, path: Path, resolved_config: dict):
    lines = _comment_block(resolved_config)
    for row in matrix:
        lines.append(",".join(_complex_str(z) for z in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _dump_channel(plan: ExperimentPlan, out_dir: Path, resolved: dict):
    rng = np.random.default_rng([plan.base_seed, 0, 0])
    realization = sample_paths(plan.system, plan.num_paths, plan.sigma_h2, rng)
    h = build_td_channel(realization, plan.waveform.cp_phase)
    _write_complex_matrix(h, out_dir / "channel.csv", resolved)
    lines = _comment_block(resolved)
    lines.append("gain_re,gain_im,delay_tap,doppler")
    for p in realization.paths:
        lines.append(
            f"{p.gain.real:.17e},{p.gain.imag:.17e},{p.delay_tap},{p.doppler:.17e}"
        )
    (out_dir / "channel_paths.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _dump_dictionary(plan: ExperimentPlan, out_dir: Path, resolved: dict):
    rng = np.random.default_rng([plan.base_seed, 0, 0])
    constellation = Constellation(es=plan.es)
    payload = plan.layout.payload_indices
    bits = rng.integers(0, 2, size=2 * payload.size)
    x = build_frame(plan.layout, constellation.map_bits(bits))
    grid = plan.grid()
    dictionary = build_dictionary(plan.waveform, x, grid)
    _write_complex_matrix(dictionary.matrix, out_dir / "dictionary.csv", resolved)
    lines = _comment_block(resolved)
    lines.append("cell,delay_tap,doppler")
    for m in range(grid.num_cells):
        k, d = grid.cell_coords(m)
        lines.append(f"{m},{grid.delay_taps[k]},{grid.doppler_points[d]:.17e}")
    (out_dir / "dictionary_cells.csv").write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    cli = CliConfig(
        subcommand=args.subcommand,
        config_path=Path(args.config),
        output_dir=Path(args.out),
        seed=args.seed,
        trials=args.trials,
        plot=not args.no_plot,
    )
    try:
        raw = _load_json(cli.config_path)
        if cli.seed is not None:
            raw["base_seed"] = cli.seed
        if cli.trials is not None:
            raw["trials_per_point"] = cli.trials
        plan = plan_from_config(raw)
    except ConfigurationError as exc:
        print(
            json.dumps({"error": {"type": "config", "message": str(exc)}}),
            file=sys.stderr,
        )
        return 2
    try:
        cli.output_dir.mkdir(parents=True, exist_ok=True)
        if cli.subcommand in ("jcde", "rpe"):
            if plan.scenario != cli.subcommand:
                raise ConfigurationError(
                    f"config scenario {plan.scenario!r} does not match "
                    f"subcommand {cli.subcommand!r}"
                )
            records = run_sweep(plan)
            emit_csv(records, cli.output_dir / f"{plan.scenario}_results.csv", raw)
            if cli.plot:
                for metric in _PLOT_METRICS[plan.scenario]:
                    emit_plot(
                        records,
                        cli.output_dir / f"{plan.scenario}_{metric}.svg",
                        metric,
                        raw,
                    )
        elif cli.subcommand == "channel-dump":
            _dump_channel(plan, cli.output_dir, raw)
        else:
            _dump_dictionary(plan, cli.output_dir, raw)
    except ConfigurationError as exc:
        print(
            json.dumps({"error": {"type": "config", "message": str(exc)}}),
            file=sys.stderr,
        )
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as machine-readable line
        print(
            json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
