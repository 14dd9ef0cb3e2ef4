"""Command-line front end.

    gimbal-adrc run CONFIG [--controller TAG] [--out DIR] [--baseline METRICS]
    gimbal-adrc train CONFIG [--out NET]
    gimbal-adrc compare CONFIG [--out DIR] [--jobs N]

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import Config, NetworkSpec, load_config, resolve_network_path
from .controllers import VARIANTS, ControllerVariant, mean_tracking_error, percent_decrease
from .errors import ConfigError, InvalidInputError, NumericError
from .harness import RunLog, run_scenario, train_pipeline
from .nn import Mlp

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
STALE_TAG = "nn-adrc-stale"
METRICS_HEADER = ["variant", "window_start", "window_end", "axis", "mte_deg", "baseline", "pct_decrease"]


def _fmt(x) -> str:
    return "" if x is None else f"{float(x):.10g}"


# -- networks -----------------------------------------------------------------

def ensure_network(config: Config, spec: NetworkSpec, train_if_missing: bool) -> Mlp:
    """Load the network for ``spec``; train and persist it first if allowed and absent."""
    path = resolve_network_path(config, spec)
    if path.is_file():
        return Mlp.load(path)
    if not train_if_missing:
        raise ConfigError(f"network file not found: {path} (run `train` or `compare` first)")
    source = load_config(spec.train_from) if spec.train_from is not None else config
    path.parent.mkdir(parents=True, exist_ok=True)
    outcome = train_pipeline(source.training_scenario(), source.training.config, path)
    _write_loss_history(path, outcome.result.history)
    print(f"trained {path} from {source.name}: final MSE {outcome.final_mse:.6g} "
          f"({outcome.result.iterations} iterations, {outcome.result.reason})")
    return outcome.net


def _write_loss_history(net_path: Path, history) -> Path:
    path = net_path.with_suffix(net_path.suffix + ".loss.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mse"])
        writer.writerows([i, _fmt(v)] for i, v in enumerate(history))
    return path


def build_variant(config: Config, tag: str, train_if_missing: bool = False) -> ControllerVariant:
    """Controller for ``tag`` (including the stale-network pseudo variant)."""
    base = config.scenario.variant
    if tag in ("adrc", "ctm-adrc"):
        return replace(base, tag=tag, network=None, swap_schedule=())
    if tag not in ("nn-adrc", STALE_TAG):
        raise ConfigError(f"unknown controller {tag!r}; expected one of {VARIANTS}")
    if config.network is None:
        raise ConfigError("nn-adrc requires controller.network (path to a trained network) in the config")
    net = ensure_network(config, config.network, train_if_missing)
    schedule = ()
    if config.swap is not None and tag == "nn-adrc":
        t_switch, spec = config.swap
        schedule = ((t_switch, ensure_network(config, spec, train_if_missing)),)
    return replace(base, tag="nn-adrc", network=net, swap_schedule=schedule)


# -- metrics and plot data ----------------------------------------------------

def metric_windows(config: Config):
    end = config.scenario.duration
    windows = [(config.settle_skip, None)]
    if config.swap is not None and config.settle_skip < config.swap[0] < end:
        windows += [(config.settle_skip, config.swap[0]), (config.swap[0], None)]
    return windows


def variant_metrics(log: RunLog, config: Config) -> dict:
    return {w: mean_tracking_error(log, w[0], w[1]) for w in metric_windows(config)}


def metric_rows(results: dict, config: Config, baseline=None) -> list:
    """Rows of metrics.csv; ``baseline`` maps window -> MTE pair or is a variant tag."""
    rows = []
    end = config.scenario.duration
    for tag, metrics in results.items():
        for window, mte in metrics.items():
            if isinstance(baseline, str):
                ref_name, ref = baseline, results.get(baseline, {}).get(window)
            elif baseline is not None:
                ref_name, ref = baseline[0], baseline[1].get(window)
            else:
                ref_name, ref = "", None
            pct = percent_decrease(ref, mte) if ref is not None else [None, None]
            for axis in range(2):
                rows.append([tag, _fmt(window[0]), _fmt(end if window[1] is None else window[1]),
                             ("az", "el")[axis], _fmt(mte[axis]), ref_name if ref is not None else "",
                             _fmt(pct[axis])])
    return rows


def write_metrics(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        writer.writerows(rows)


def read_baseline(path) -> tuple:
    """(name, {window: (az, el)}) from a metrics.csv (or a run directory containing one)."""
    path = Path(path)
    if path.is_dir():
        path = path / "metrics.csv"
    if not path.is_file():
        raise ConfigError(f"baseline metrics not found: {path}")
    table = {}
    name = None
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            name = name or row["variant"]
            if row["variant"] != name:
                continue
            key = (float(row["window_start"]), float(row["window_end"]))
            table.setdefault(key, [None, None])[0 if row["axis"] == "az" else 1] = float(row["mte_deg"])
    if not table:
        raise ConfigError(f"baseline metrics file is empty: {path}")
    return name, table


def _baseline_for(config: Config, baseline) -> tuple:
    name, table = baseline
    end = config.scenario.duration
    lookup = {}
    for w in metric_windows(config):
        key = (w[0], end if w[1] is None else w[1])
        match = next((v for k, v in table.items() if np.allclose(k, key)), None)
        if match is not None and None not in match:
            lookup[w] = np.array(match)
    return name, lookup


def write_plot_data(path: Path, logs: dict) -> None:
    """Position and tracking error in degrees for one or more runs on a shared grid."""
    first = next(iter(logs.values()))
    cols = [first.t, np.degrees(first.ref[:, 0]), np.degrees(first.ref[:, 1])]
    header = ["t", "ref_az_deg", "ref_el_deg"]
    for tag, log in logs.items():
        cols += [np.degrees(log.q[:, 0]), np.degrees(log.q[:, 1]),
                 np.degrees(log.ref[:, 0] - log.q[:, 0]), np.degrees(log.ref[:, 1] - log.q[:, 1])]
        header += [f"{tag}_psi_a_deg", f"{tag}_theta_m_deg", f"{tag}_err_az_deg", f"{tag}_err_el_deg"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_fmt(v) for v in row] for row in np.column_stack(cols))


def write_gnuplot(path: Path, data_name: str, tags) -> None:
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set xlabel 't (s)'",
             "set terminal pngcairo size 1200,900", "set output 'tracking.png'", "set multiplot layout 2,2"]
    for axis, (title, ref_col) in enumerate((("azimuth", 2), ("elevation", 3))):
        plots = [f"'{data_name}' using 1:{ref_col} with lines"]
        plots += [f"'{data_name}' using 1:{4 + 4 * i + axis} with lines" for i in range(len(tags))]
        lines += [f"set title '{title} position (deg)'", "plot " + ", ".join(plots)]
    for axis, title in enumerate(("azimuth", "elevation")):
        plots = [f"'{data_name}' using 1:{6 + 4 * i + axis} with lines" for i in range(len(tags))]
        lines += [f"set title '{title} tracking error (deg)'", "plot " + ", ".join(plots)]
    lines.append("unset multiplot")
    Path(path).write_text("\n".join(lines) + "\n")


# -- commands -----------------------------------------------------------------

def _simulate(args):
    """Worker: run one variant and write its files; returns (tag, log)."""
    config, tag, variant, out_dir = args
    log = run_scenario(config.scenario.replace(variant=variant))
    out_dir.mkdir(parents=True, exist_ok=True)
    log.write_csv(out_dir / "run.csv")
    return tag, log


def cmd_run(config_path, controller=None, out=None, baseline=None) -> int:
    config = load_config(config_path)
    if out is not None:
        config = replace(config, out_dir=Path(out))
    tag = controller or config.variant_tag
    variant = build_variant(config, tag, train_if_missing=False)
    base = _baseline_for(config, read_baseline(baseline)) if baseline else None
    _, log = _simulate((config, tag, variant, config.out_dir))
    results = {tag: variant_metrics(log, config)}
    write_metrics(config.out_dir / "metrics.csv", metric_rows(results, config, base))
    write_plot_data(config.out_dir / "plot_tracking.csv", {tag: log})
    write_gnuplot(config.out_dir / "plot_tracking.gp", "plot_tracking.csv", [tag])
    mte = results[tag][(config.settle_skip, None)]
    print(f"{config.name} {tag}: MTE az {mte[0]:.6f} deg, el {mte[1]:.6f} deg -> {config.out_dir}")
    if log.for_flag.any():
        print(f"warning: field-of-regard clamp engaged on {int(log.for_flag.sum())} steps")
    return EXIT_OK


def cmd_train(config_path, out=None) -> int:
    config = load_config(config_path)
    path = Path(out) if out is not None else config.default_network_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    outcome = train_pipeline(config.training_scenario(), config.training.config, path)
    history = _write_loss_history(path, outcome.result.history)
    print(f"network {path}: final MSE {outcome.final_mse:.6g} (target variance "
          f"{outcome.target_variance:.6g}, {outcome.n_rows} rows, {outcome.result.iterations} "
          f"iterations, stop: {outcome.result.reason}); loss history {history}")
    return EXIT_OK


def compare_tags(config: Config) -> list:
    tags = ["adrc", "ctm-adrc"]
    if config.network is not None:
        tags.append("nn-adrc")
        if config.swap is not None:
            tags.append(STALE_TAG)
    return tags


def cmd_compare(config_path, out=None, jobs=None) -> int:
    config = load_config(config_path)
    if out is not None:
        config = replace(config, out_dir=Path(out))
    config.out_dir.mkdir(parents=True, exist_ok=True)
    tags = compare_tags(config)
    tasks = [(config, tag, build_variant(config, tag, train_if_missing=True), config.out_dir / tag)
             for tag in tags]
    jobs = jobs or min(len(tasks), os.cpu_count() or 1)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = dict(pool.map(_simulate, tasks))
    else:
        done = dict(map(_simulate, tasks))
    logs = {tag: done[tag] for tag in tags}
    results = {tag: variant_metrics(log, config) for tag, log in logs.items()}
    for tag, log in logs.items():
        write_metrics(config.out_dir / tag / "metrics.csv", metric_rows({tag: results[tag]}, config))
    write_metrics(config.out_dir / "metrics.csv", metric_rows(results, config, baseline="adrc"))
    write_plot_data(config.out_dir / "plot_compare.csv", logs)
    write_gnuplot(config.out_dir / "plot_compare.gp", "plot_compare.csv", tags)
    print(format_table(results, config))
    return EXIT_OK


def format_table(results: dict, config: Config) -> str:
    lines = []
    for window in metric_windows(config):
        end = config.scenario.duration if window[1] is None else window[1]
        lines.append(f"MTE (deg), window {window[0]:g}-{end:g} s")
        lines.append(f"{'variant':<15}{'az':>10}{'el':>10}{'az %dec':>10}{'el %dec':>10}")
        ref = results["adrc"][window]
        for tag, metrics in results.items():
            mte = metrics[window]
            pct = percent_decrease(ref, mte)
            lines.append(f"{tag:<15}{mte[0]:>10.4f}{mte[1]:>10.4f}{pct[0]:>10.1f}{pct[1]:>10.1f}")
    return "\n".join(lines)


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gimbal-adrc", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="simulate one controller")
    p.add_argument("config")
    p.add_argument("--controller", choices=VARIANTS)
    p.add_argument("--out", help="output directory")
    p.add_argument("--baseline", help="metrics.csv (or run directory) to compute %% decrease against")
    p = sub.add_parser("train", help="train the compensator network on the config's sweep")
    p.add_argument("config")
    p.add_argument("--out", help="network file")
    p = sub.add_parser("compare", help="run all controllers and tabulate MTE")
    p.add_argument("config")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.controller, args.out, args.baseline)
        if args.command == "train":
            return cmd_train(args.config, args.out)
        return cmd_compare(args.config, args.out, args.jobs)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
