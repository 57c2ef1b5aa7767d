import argparse
import csv
import itertools
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from .bound import BoundConstants, BoundError, bound_table
from .config import Config, ConfigError, coerce, parse_overrides
from .engine import ScenarioConfig, Simulation
from .idx import IdxFormatError
from .learner import save_checkpoint
from .metrics import RunManifest, _atomic_write, summary, write_csv, write_json
from .sweep_worker import run_pool
from .system import System

log = logging.getLogger(__name__)

AXIS_ALIASES = {
    "delta_t": "sim.delta_t_fraction",
    "theta": "data.dirichlet_theta",
    "eta": "data.zipf_eta",
    "policy": "sched.policy",
    "algorithm": "sim.algorithm",
}

DEFAULT_KS = (0, 1, 10, 100, 1000)


def default_out_dir() -> str:
    return os.environ.get("TTFED_OUT_DIR", "out")


def parse_axis(spec: str) -> Tuple[str, List[object]]:
    name, sep, values = spec.partition("=")
    key = AXIS_ALIASES.get(name.strip(), name.strip())
    defaults = Config.default_config()
    if not sep or key not in defaults:
        raise ConfigError(name or spec, "axis must look like key=v1,v2,... with a known key")
    raw = [v.strip() for v in values.split(",") if v.strip()]
    if not raw:
        raise ConfigError(key, "axis has no values")
    return key, [coerce(key, v, defaults[key]) for v in raw]


def execute(cfg: Config, out_dir: str) -> Tuple[dict, List[Dict[str, str]]]:
    """Run one scenario and write its files; returns the summary and the written paths."""
    scenario = ScenarioConfig.from_settings(cfg.settings)
    sim = Simulation(scenario)
    metrics = sim.run()
    targets = cfg.settings["sim.target_accuracies"]
    result = summary(metrics, targets)
    result["config_hash"] = cfg.config_hash()

    os.makedirs(out_dir, exist_ok=True)
    files = {"metrics": "metrics.csv", "summary": "summary.json", "config": "config.json"}
    write_csv(os.path.join(out_dir, files["metrics"]), metrics)
    write_json(os.path.join(out_dir, files["summary"]), result)
    cfg.save_config(os.path.join(out_dir, files["config"]))
    if cfg.settings["sim.save_model"]:
        files["model"] = "model.bin"
        save_checkpoint(os.path.join(out_dir, files["model"]), sim.model.arch, metrics.final_params)
    return result, [files]


class CLI:
    """Command-line front end: single runs, parameter sweeps and the bound table."""

    def __init__(self, out_dir: Optional[str] = None):
        self.out_dir = out_dir or default_out_dir()

    def cmd_run(self, config_path: Optional[str], overrides: Dict[str, str], seed: Optional[int] = None) -> int:
        try:
            cfg = Config(config_path, overrides)
            if seed is not None:
                cfg = cfg.with_overrides({"sim.seed": seed})
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2

        try:
            result, outputs = execute(cfg, self.out_dir)
            manifest = RunManifest(cfg.config_hash(), [cfg.settings["sim.seed"]], outputs, __version__,
                                   System.get_host_info())
            write_json(os.path.join(self.out_dir, "manifest.json"), manifest.to_dict())
        except (IdxFormatError, FileNotFoundError) as e:
            print(f"data error: {e}", file=sys.stderr)
            return 1
        except Exception as e:
            log.debug("run failed", exc_info=True)
            print(f"run failed: {e}", file=sys.stderr)
            return 1

        print(f"{result['algorithm']}: final accuracy {result['final_accuracy']:.4f} "
              f"after {result['aggregations']} aggregations ({result['num_tiers']} tiers)")
        print(f"Results written to {self.out_dir}")
        return 0

    def cmd_sweep(self, config_path: Optional[str], overrides: Dict[str, str], axes: Sequence[str],
                  seeds: Sequence[int], workers: int = 0) -> int:
        try:
            if not axes:
                raise ConfigError("--axis", "no sweep axis given")
            base = Config(config_path, overrides)
            parsed = [parse_axis(a) for a in axes]
            keys = [k for k, _ in parsed]
            seeds = list(seeds) or [base.settings["sim.seed"]]
            points = []
            for combo in itertools.product(*(values for _, values in parsed)):
                for seed in seeds:
                    point = dict(zip(keys, combo))
                    point["sim.seed"] = seed
                    points.append(base.with_overrides(point))
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2

        def run_point(cfg: Config):
            tag = "_".join(f"{k.split('.')[-1]}-{cfg.settings[k]}" for k in keys)
            run_dir = os.path.join(self.out_dir, f"{tag}_seed-{cfg.settings['sim.seed']}")
            result, files = execute(cfg, run_dir)
            rel = {name: os.path.join(os.path.basename(run_dir), f) for name, f in files[0].items()}
            return cfg, result, rel

        n_workers = System.worker_count(workers)
        log.info("sweeping %d runs over %s on %d workers", len(points), ", ".join(keys), n_workers)
        outcomes = run_pool(points, run_point, n_workers)
        failures = [o for o in outcomes if isinstance(o, Exception)]
        if failures:
            print(f"sweep failed: {failures[0]}", file=sys.stderr)
            return 1

        rows = []
        for cfg, result, _ in outcomes:
            rows.append([cfg.settings[k] for k in keys] + [
                cfg.settings["sim.seed"], result["algorithm"], result["num_tiers"], result["aggregations"],
                result["final_accuracy"], result["uplink_msgs"] + result["downlink_broadcasts"]
                + result["downlink_unicasts"]])
        header = list(keys) + ["seed", "algorithm", "num_tiers", "aggregations", "final_accuracy", "comm_msgs"]

        def write(f):
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        _atomic_write(os.path.join(self.out_dir, "sweep.csv"), write)

        manifest = RunManifest(base.config_hash(), seeds, [o[2] for o in outcomes], __version__,
                               System.get_host_info())
        write_json(os.path.join(self.out_dir, "manifest.json"), manifest.to_dict())

        print(" | ".join(keys + ["tiers", "mean accuracy", "seeds"]))
        for combo, group in itertools.groupby(rows, key=lambda r: tuple(r[:len(keys)])):
            group = list(group)
            mean = sum(r[-2] for r in group) / len(group)
            print(" | ".join([str(v) for v in combo] + [str(group[0][len(keys) + 2]), f"{mean:.4f}",
                                                        str(len(group))]))
        print(f"{len(rows)} runs written to {self.out_dir}")
        return 0

    def cmd_bound(self, constants_path: str, ks: Optional[Sequence[int]] = None) -> int:
        try:
            constants = BoundConstants.from_file(constants_path)
            if ks is None:
                with open(constants_path, "r") as f:
                    ks = json.load(f).get("ks", DEFAULT_KS)
            ks = [int(k) for k in ks]
            table = bound_table(constants, ks)
        except BoundError as e:
            print(f"constants error: {e} (division hazard)", file=sys.stderr)
            return 2
        except (OSError, ValueError, TypeError) as e:
            print(f"constants error: {e}", file=sys.stderr)
            return 2

        def write(f):
            f.write("K,bound,prop1_ok\n")
            for k, b, ok in table:
                f.write(f"{k},{b!r},{str(ok).lower()}\n")
        _atomic_write(os.path.join(self.out_dir, "bound.csv"), write)

        print(f"{'K':>8}  {'bound':>14}  prop1")
        for k, b, ok in table:
            print(f"{k:>8}  {b:>14.6g}  {'ok' if ok else 'VIOLATED'}")
        return 0

    def run(self, argv: Optional[List[str]] = None) -> int:
        argv = argv if argv is not None else sys.argv[1:]
        parser = argparse.ArgumentParser(prog="ttfed", description="Time-triggered federated learning simulator")
        parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
        parser.add_argument("-q", "--quiet", action="store_true", help="Only warnings and errors")
        parser.add_argument("--out-dir", default=None, help="Output directory (default: $TTFED_OUT_DIR or ./out)")
        sub = parser.add_subparsers(dest="command")

        run_p = sub.add_parser("run", help="Run one scenario")
        sweep_p = sub.add_parser("sweep", help="Run a grid of scenarios over one or more axes")
        for p in (run_p, sweep_p):
            p.add_argument("-c", "--config", default=None, help="JSON config of dotted keys")
            p.add_argument("-o", "--override", action="append", default=[], metavar="KEY=VALUE",
                           help="Override one config key (repeatable)")
        run_p.add_argument("-s", "--seed", type=int, default=None, help="Master seed")
        sweep_p.add_argument("-a", "--axis", action="append", default=[], metavar="KEY=V1,V2",
                             help="Sweep axis: delta_t, theta, eta, policy, algorithm or a dotted key")
        sweep_p.add_argument("--seeds", default="", help="Comma-separated seeds (default: sim.seed)")
        sweep_p.add_argument("-j", "--workers", type=int, default=0, help="Worker threads (default: CPU cores)")

        bound_p = sub.add_parser("bound", help="Evaluate the convergence bound for a constants file")
        bound_p.add_argument("constants", help="JSON constants file")
        bound_p.add_argument("-k", "--ks", default=None, help="Comma-separated K values")

        args = parser.parse_args(argv)

        level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
        logging.basicConfig(level=level, format="[%(name)s] %(levelname)s %(message)s")

        cli = CLI(out_dir=args.out_dir or self.out_dir)

        if args.command == "run":
            try:
                overrides = parse_overrides(args.override)
            except ConfigError as e:
                print(f"config error: {e}", file=sys.stderr)
                return 2
            return cli.cmd_run(args.config, overrides, args.seed)

        if args.command == "sweep":
            try:
                overrides = parse_overrides(args.override)
                seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
            except ConfigError as e:
                print(f"config error: {e}", file=sys.stderr)
                return 2
            except ValueError:
                print(f"config error: --seeds: expected integers, got {args.seeds!r}", file=sys.stderr)
                return 2
            return cli.cmd_sweep(args.config, overrides, args.axis, seeds, args.workers)

        if args.command == "bound":
            ks = None
            if args.ks:
                try:
                    ks = [int(k) for k in args.ks.split(",") if k.strip()]
                except ValueError:
                    print(f"constants error: --ks: expected integers, got {args.ks!r}", file=sys.stderr)
                    return 2
            return cli.cmd_bound(args.constants, ks)

        parser.print_help()
        return 0


def main(argv: Optional[List[str]] = None) -> int:
    return CLI().run(argv)


if __name__ == "__main__":
    raise SystemExit(main())
