"""Command-line entry point: ``mixed-traffic {train,eval,baseline,sweep}``.

Every command writes ``<command>_config.json`` into the output directory: the
fully resolved configuration, including command-line overrides, which can be
passed back through ``--config`` to rerun the command identically.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
from importlib import resources

import jsonschema

from .demand import EXPERIMENT_LABELS, DemandConfig, OdPattern, od_pattern_from_experiment
from .env import RewardConfig, TrafficEnv
from .errors import CheckpointError, ConfigError, MissingArtifactError, NumericalError
from .evaluate import EpisodeSpec, evaluate
from .metrics import RunResult, write_report
from .network import SignalPlan, preset
from .rainbow import checkpoint as ckpt_io
from .rainbow.train import Policy, TrainConfig, train
from .sim import SimConfig

log = logging.getLogger("mixed_traffic")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERICAL = 0, 2, 3, 4
CUSTOM_EXPERIMENT = 0
LOG_COLUMNS = ("episode", "steps", "mean_return", "mean_loss", "epsilon", "buffer_size",
               "eval_w_bar")


# ---------------------------------------------------------------- configuration
def _resource(name: str) -> dict:
    return json.loads(resources.files("mixed_traffic").joinpath(name).read_text("utf-8"))


def default_config() -> dict:
    return _resource("defaults.json")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "od_weights":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    parts = ""
    for p in err.absolute_path:
        parts += f"[{p}]" if isinstance(p, int) else (f".{p}" if parts else str(p))
    return parts or "<root>"


def validate_config(cfg: dict) -> dict:
    """Schema check plus cross-field checks; raises ConfigError naming the field."""
    validator = jsonschema.Draft202012Validator(_resource("config_schema.json"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError(errors[0].message, _path(errors[0]))
    n = _network_size(cfg["network"]["preset"])
    bad = [i for i in cfg["network"]["rv_controlled"] if i >= n]
    if bad:
        raise ConfigError(f"intersection ids {bad} out of range 0..{n - 1}",
                          "network.rv_controlled")
    if cfg["demand"]["od_weights"] is not None:
        OdPattern.from_mapping(cfg["demand"]["od_weights"])
    try:
        train_config(cfg)
    except ConfigError as exc:
        raise ConfigError(str(exc), "train") from None
    scale = cfg["train"].get("input_scale")
    if scale is not None and len(scale) != 12:
        raise ConfigError("needs 12 entries", "train.input_scale")
    return cfg


def _network_size(name: str) -> int:
    if name == "colorado14-like":
        return 14
    r, c = name[len("grid-"):].split("x")
    return int(r) * int(c)


def load_config(path: str | None, args: argparse.Namespace | None = None) -> dict:
    cfg = default_config()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc})", path) from None
        if not isinstance(user, dict):
            raise ConfigError("top level must be an object", path)
        cfg = _merge(cfg, user)
    if args is not None:
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["output"] = args.out
        if args.runs is not None:
            cfg["evaluation"]["runs"] = args.runs
        if args.penetration:
            cfg["demand"]["penetrations"] = list(args.penetration)
        if args.experiment:
            cfg["demand"]["experiments"] = list(args.experiment)
    return validate_config(cfg)


# ------------------------------------------------------------------- builders
def build_network(cfg: dict, baseline: bool = False):
    n = cfg["network"]
    plan = SignalPlan(**n["signal_plan"])
    ids = () if baseline else n["rv_controlled"]
    return preset(n["preset"], n["link_length"], rv_controlled_ids=ids, signal_plan=plan,
                  speed_limit=n["speed_limit"], control_zone_radius=n["control_zone_radius"])


def experiments(cfg: dict) -> list[int]:
    if cfg["demand"]["od_weights"] is not None:
        return [CUSTOM_EXPERIMENT]
    return list(cfg["demand"]["experiments"])


def experiment_label(exp: int) -> str:
    return "custom" if exp == CUSTOM_EXPERIMENT else EXPERIMENT_LABELS[exp]


def pattern_for(cfg: dict, exp: int) -> OdPattern:
    if exp == CUSTOM_EXPERIMENT:
        return OdPattern.from_mapping(cfg["demand"]["od_weights"])
    return od_pattern_from_experiment(exp)


def demand_for(cfg: dict, penetration: float, seed: int = 0) -> DemandConfig:
    d = cfg["demand"]
    return DemandConfig(d["total_vehicles"], d["horizon"], penetration, seed,
                        d["departure_window"])


def sim_config(cfg: dict) -> SimConfig:
    return SimConfig(dt=cfg["sim"]["dt"],
                     waiting_speed_threshold=cfg["sim"]["waiting_speed_threshold"])


def reward_config(cfg: dict) -> RewardConfig:
    return RewardConfig(**cfg["reward"])


def train_config(cfg: dict) -> TrainConfig:
    t = dict(cfg["train"])
    t["horizon"] = cfg["demand"]["horizon"]
    t["seed"] = cfg["seed"]
    return TrainConfig.from_dict(t)


def eval_seeds(cfg: dict) -> list[int]:
    base = cfg["evaluation"]["seed_base"]
    return list(range(base, base + cfg["evaluation"]["runs"]))


def _pen_tag(p: float) -> str:
    return f"{round(100 * p):03d}"


def checkpoint_path(cfg: dict, exp: int, pen: float) -> str:
    return os.path.join(cfg["output"], "checkpoints", f"exp{exp}_p{_pen_tag(pen)}.ckpt")


def train_log_path(cfg: dict, exp: int, pen: float) -> str:
    return os.path.join(cfg["output"], "logs", f"train_exp{exp}_p{_pen_tag(pen)}.csv")


def _specs(cfg: dict, exp: int, pen: float, baseline: bool, trace: bool,
           tag: str) -> list[EpisodeSpec]:
    net = build_network(cfg, baseline)
    specs = []
    for seed in eval_seeds(cfg):
        path = None
        if trace:
            path = os.path.join(cfg["output"], "traces", f"exp{exp}_{tag}_seed{seed}.csv")
        specs.append(EpisodeSpec(net, demand_for(cfg, pen, seed), pattern_for(cfg, exp), seed,
                                 sim_config(cfg), reward_config(cfg), path))
    if trace:
        os.makedirs(os.path.join(cfg["output"], "traces"), exist_ok=True)
    return specs


# ------------------------------------------------------------------- commands
def write_config_echo(cfg: dict, command: str) -> str:
    os.makedirs(cfg["output"], exist_ok=True)
    path = os.path.join(cfg["output"], f"{command}_config.json")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return path


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_train_log(rows: list[dict], path: str):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in LOG_COLUMNS])
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def train_one(cfg: dict, exp: int, pen: float):
    tc = train_config(cfg)
    net = build_network(cfg)
    demand = demand_for(cfg, pen)
    pattern = pattern_for(cfg, exp)

    def factory():
        return TrafficEnv(net, demand, pattern, reward_config(cfg), sim_config(cfg))

    evaluate_fn = None
    if tc.eval_every:
        specs = _specs(cfg, exp, pen, False, False, "snapshot")

        def evaluate_fn(policy):
            results = evaluate(specs, policy, workers=cfg["evaluation"]["workers"])
            return sum(r.w_bar for r in results) / len(results)

    log.info("training experiment %s at penetration %s for %d episodes", exp, pen, tc.episodes)
    path = checkpoint_path(cfg, exp, pen)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    try:
        ckpt = train(factory, tc, evaluate=evaluate_fn)
    except NumericalError as exc:
        partial = getattr(exc, "checkpoint", None)
        if partial is not None:
            ckpt_io.save(partial, path + ".aborted")
            write_train_log(partial.log, train_log_path(cfg, exp, pen))
        raise
    ckpt_io.save(ckpt, path)
    write_train_log(ckpt.log, train_log_path(cfg, exp, pen))
    return path


def _results(cfg, exp, pen, results, episodes):
    return [RunResult(exp, experiment_label(exp), pen, r.seed, r.w_bar,
                      r.accumulator.conflicts, r.accumulator.throughput,
                      r.accumulator.spawned, episodes) for r in results]


def eval_one(cfg: dict, exp: int, pen: float, path: str, trace: bool = False):
    ckpt = ckpt_io.load(path, obs_dim=12, n_actions=2)
    policy = Policy(ckpt.params, ckpt.config)
    specs = _specs(cfg, exp, pen, False, trace, f"p{_pen_tag(pen)}")
    results = evaluate(specs, policy, workers=cfg["evaluation"]["workers"])
    return _results(cfg, exp, pen, results, ckpt.config.episodes)


def baseline_one(cfg: dict, exp: int, trace: bool = False):
    pen = cfg["demand"]["penetrations"][0]
    specs = _specs(cfg, exp, pen, True, trace, "baseline")
    results = evaluate(specs, None, workers=cfg["evaluation"]["workers"])
    queries = sum(r.queries for r in results)
    log.info("baseline experiment %s: %d policy queries", exp, queries)
    return _results(cfg, exp, None, results, 0)


def _grid(cfg):
    return [(e, p) for e in experiments(cfg) for p in cfg["demand"]["penetrations"]]


def _ensure_checkpoints(cfg, train_missing: bool) -> dict:
    paths = {key: checkpoint_path(cfg, *key) for key in _grid(cfg)}
    missing = [key for key, p in paths.items() if not os.path.exists(p)]
    if missing and not train_missing:
        listing = ", ".join(f"experiment {e} at penetration {p}" for e, p in missing)
        raise MissingArtifactError(
            f"missing checkpoints for {listing}; run `mixed-traffic train` for them "
            f"or pass --train-missing")
    for e, p in missing:
        train_one(cfg, e, p)
    return paths


def cmd_train(cfg: dict, args) -> int:
    write_config_echo(cfg, "train")
    for exp, pen in _grid(cfg):
        print(train_one(cfg, exp, pen))
    return EXIT_OK


def cmd_eval(cfg: dict, args) -> int:
    write_config_echo(cfg, "eval")
    if args.checkpoint:
        grid = _grid(cfg)
        if len(grid) != 1:
            raise ConfigError("--checkpoint needs exactly one experiment and one penetration")
        if not os.path.exists(args.checkpoint):
            raise MissingArtifactError(f"checkpoint not found: {args.checkpoint}")
        paths = {grid[0]: args.checkpoint}
    else:
        paths = _ensure_checkpoints(cfg, args.train_missing)
    rows = []
    for (exp, pen), path in paths.items():
        rows += eval_one(cfg, exp, pen, path, args.trace)
    _report(cfg, rows, "eval_report.csv")
    return EXIT_OK


def cmd_baseline(cfg: dict, args) -> int:
    write_config_echo(cfg, "baseline")
    rows = []
    for exp in experiments(cfg):
        rows += baseline_one(cfg, exp, args.trace)
    _report(cfg, rows, "baseline_report.csv")
    return EXIT_OK


def cmd_sweep(cfg: dict, args) -> int:
    write_config_echo(cfg, "sweep")
    paths = _ensure_checkpoints(cfg, args.train_missing)
    rows = []
    for exp in experiments(cfg):
        for pen in cfg["demand"]["penetrations"]:
            rows += eval_one(cfg, exp, pen, paths[(exp, pen)], args.trace)
        rows += baseline_one(cfg, exp, args.trace)
    _report(cfg, rows, "report.csv")
    return EXIT_OK


def _report(cfg, rows, name):
    written = write_report(rows, os.path.join(cfg["output"], name))
    for p in written.values():
        print(p)


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "baseline": cmd_baseline, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixed-traffic",
                                     description="Mixed-autonomy intersection control experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("train", "train one checkpoint per (experiment, penetration)"),
                           ("eval", "evaluate trained checkpoints with the greedy policy"),
                           ("baseline", "evaluate all-signal control"),
                           ("sweep", "evaluate every experiment and penetration plus baseline")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        p.add_argument("--config", help="JSON config; missing keys fall back to shipped defaults")
        p.add_argument("--seed", type=int, help="master seed (training and RNG streams)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--runs", type=int, help="evaluation episodes per cell")
        p.add_argument("--penetration", type=float, action="append",
                       help="RV penetration rate in [0, 1]; repeatable")
        p.add_argument("--experiment", type=int, action="append",
                       help="experiment id 1..8; repeatable")
        p.add_argument("--train-missing", action="store_true",
                       help="train checkpoints that do not exist yet")
        p.add_argument("--trace", action="store_true",
                       help="write a per-step vehicle CSV for each evaluation episode")
        if name == "eval":
            p.add_argument("--checkpoint", help="evaluate this checkpoint file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
