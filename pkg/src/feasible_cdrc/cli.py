"""Command-line front end: ``feasible-cdrc {diagnose,estimate,simulate,version}``.

Exit codes: 0 success, 1 usage error, 2 input validation error, 3 numerical
or pipeline failure. Every output lands in the ``--out`` directory together
with a ``report.json`` listing the files written and any warnings.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import RunConfig, load_config, load_dataset
from .density import density_matrix, fit_cond_density
from .estimands import bootstrap_curves, default_grid, run_pipeline, undefined_regions
from .exceptions import ConfigError, DataError, NumericalError, SupportError
from .simulate import LAW_IDS, SimLaw, monte_carlo_bias
from .support import hdr_thresholds, non_overlap_ratio, write_tau_csv

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunReport:
    command: str
    config: dict
    dataset: dict | None = None
    warnings: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def write(self, out_dir: Path):
        self.outputs.append("report.json")
        doc = {"command": self.command, "version": __version__, "config": self.config,
               "dataset": self.dataset, "warnings": self.warnings, "outputs": self.outputs,
               **self.extra}
        (out_dir / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _load_inputs(args):
    config = load_config(args.config) if args.config else RunConfig()
    if not Path(args.data).is_file():
        raise DataError(f"data file not found: {args.data}")
    data = load_dataset(args.data, config.schema, config.outcome_family)
    grid = config.grid.build() if config.grid is not None else default_grid(data)
    return config, data, grid


def cmd_diagnose(args) -> int:
    config, data, grid = _load_inputs(args)
    out = _out_dir(args.out)
    report = RunReport("diagnose", config.to_dict(), data.summary())
    model = fit_cond_density(data, config.density)
    dm = density_matrix(model, grid, data)
    taus = {}
    for alpha in config.support_levels:
        taus[alpha] = non_overlap_ratio(hdr_thresholds(dm, alpha)).tau
        full = undefined_regions(grid, taus[alpha] < 1)
        for lo, hi, k in full:
            report.warnings.append(f"alpha={alpha:g}: no unit supported for a in [{lo:g}, {hi:g}] "
                                   f"({k} grid points)")
    write_tau_csv(out / "nonoverlap.csv", grid, taus)
    report.outputs.append("nonoverlap.csv")
    if args.write_density:
        dm.to_csv(out / "density_matrix.csv")
        report.outputs.append("density_matrix.csv")
    report.write(out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    config, data, grid = _load_inputs(args)
    seed = config.bootstrap.seed if args.seed is None else args.seed
    out = _out_dir(args.out)
    report = RunReport("estimate", config.to_dict(), data.summary())
    res = run_pipeline(data, config, grid)
    curves = res.curves
    for lo, hi, k in undefined_regions(grid, curves.trimming_defined):
        report.warnings.append(f"m_trimming undefined for a in [{lo:g}, {hi:g}] "
                               f"({k} grid points, tau = 1)")
    if config.bootstrap.B > 0:
        boot = bootstrap_curves(data, config, seed=seed, grid=grid, threads=args.threads)
        curves = curves.with_bands(boot.bands)
        for b in boot.failed:
            report.warnings.append(f"bootstrap replicate {b} failed and was dropped")
        report.extra["bootstrap"] = {"B": boot.B, "seed": seed, "split": boot.split,
                                     "failed": list(boot.failed)}
    curves.to_csv(out / "curves.csv")
    res.outcome_model.to_json(out / "outcome_model.json")
    report.outputs += ["curves.csv", "outcome_model.json"]
    report.write(out)
    return EXIT_OK


def _merge(base, over):
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def cmd_simulate(args) -> int:
    overrides = {}
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
        if not isinstance(overrides, dict):
            raise ConfigError("simulate overrides must be a JSON object")
    law_params = overrides.pop("law_params", {})
    law = SimLaw(args.law.upper(), law_params)
    config = RunConfig.from_dict(_merge(law.default_config().to_dict(), overrides))
    grid = (config.grid or law.default_grid()).build()
    out = _out_dir(args.out)
    seed = 0 if args.seed is None else args.seed
    report = RunReport("simulate", config.to_dict())
    table = monte_carlo_bias(law, R=args.reps, n=args.n, grid=grid, config=config, seed=seed,
                             N=args.oracle_n, threads=args.threads)
    table.to_csv(out / "bias.csv")
    table.truth_to_csv(out / "truth.csv")
    (out / "law.json").write_text(law.to_json() + "\n", encoding="utf-8")
    report.outputs += ["bias.csv", "truth.csv", "law.json"]
    for r in table.failed:
        report.warnings.append(f"replicate {r} failed and was dropped")
    for lo, hi, k in undefined_regions(grid, table.truths["trimming_defined"]):
        report.warnings.append(f"true m_trimming undefined for a in [{lo:g}, {hi:g}] ({k} grid points)")
    report.extra["simulation"] = {"law": law.id, "law_params": law.params, "R": args.reps,
                                  "n": args.n, "seed": seed, "oracle_N": args.oracle_n,
                                  "n_fail": table.n_fail}
    report.write(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="feasible-cdrc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True, help="input CSV")
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)

    d = sub.add_parser("diagnose", help="non-overlap ratio per support level")
    common(d)
    d.add_argument("--write-density", action="store_true", help="also write the density matrix")
    e = sub.add_parser("estimate", help="standard, feasible, trimming (and weighted) curves")
    common(e)
    s = sub.add_parser("simulate", help="Monte Carlo bias study on a simulation law")
    common(s, data=False)
    s.add_argument("--law", required=True, help=f"one of {', '.join(LAW_IDS)}")
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--oracle-n", type=int, default=100_000)
    sub.add_parser("version", help="print the package version")
    return p


_COMMANDS = {"diagnose": cmd_diagnose, "estimate": cmd_estimate, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    if getattr(args, "threads", 1) < 1:
        print("feasible-cdrc: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (DataError, ConfigError) as exc:
        print(f"feasible-cdrc: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SupportError as exc:
        print(f"feasible-cdrc: support error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NumericalError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"feasible-cdrc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
