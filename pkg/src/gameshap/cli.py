"""``gameshap`` command line: solve, sgfi, ssfi, eval, enumerate.

Exit codes: 0 success, 2 usage or configuration error, 3 resource exhaustion.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np
from pydantic import ValidationError

from .artifacts import RunWriter, dump_json, read_strategy, sha256, strategy_document
from .config import OUT_ENV, ExperimentConfig, GameSection, load_config
from .evaluation import exploitability
from .game import GameError, UsageError
from .goofspiel import cards
from .sgfi import run_sgfi
from .solver import Solver
from .ssfi import InfosetIndex, ResourceError, describe, select_infosets, ssfi, ssfi_exact

EXIT_USAGE = 2
EXIT_RESOURCE = 3
# Spawn key separating the SSFI sampling stream from solver seeds.
_SSFI_STREAM = 0x55F1

log = logging.getLogger("gameshap")


class SelectorError(UsageError):
    pass


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    """Map library exceptions onto the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            _fail(EXIT_USAGE, f"invalid configuration\n{exc}")
        except (ResourceError, MemoryError) as exc:
            _fail(EXIT_RESOURCE, f"out of resources: {exc}")
        except (UsageError, GameError, ValueError, OSError) as exc:
            _fail(EXIT_USAGE, str(exc))

    return wrapper


def config_options(fn):
    fn = click.option("-c", "--config", "config_path", type=click.Path(dir_okay=False), help="TOML config file.")(fn)
    fn = click.option("--replay", type=click.Path(dir_okay=False), help="Reuse the config snapshot of a run_manifest.json.")(fn)
    fn = click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE", help="Override a config value (repeatable).")(fn)
    fn = click.option("-o", "--out", "out_dir", type=click.Path(file_okay=False), help=f"Output directory (default: [output].dir, ${OUT_ENV}, ./gameshap-out).")(fn)
    return fn


def _load(config_path, overrides, replay=None) -> ExperimentConfig:
    try:
        return load_config(config_path, overrides, replay)
    except KeyError as exc:
        raise UsageError(f"{replay} is not a run manifest (missing {exc})") from exc


def _snapshot(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json")


class Stopwatch:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def stage(self, name: str):
        watch = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                watch.timings[name] = round(time.perf_counter() - self.t0, 3)

        return _Stage()


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug).")
@click.version_option(package_name="gameshap")
def main(verbose: int):
    """Shapley feature importance for Goofspiel (and Kuhn poker for calibration)."""
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@config_options
@guarded
def solve(config_path, overrides, out_dir, replay):
    """Solve the configured game and write the average strategy."""
    cfg = _load(config_path, overrides, replay)
    game = cfg.make_game()
    scfg = cfg.solver_config(game)
    writer = RunWriter(cfg.output_dir(out_dir))
    watch = Stopwatch()
    with watch.stage("solve"):
        solver = Solver(game, scfg)
        conv = solver.solve()
        profile = solver.profile()
    with watch.stage("evaluate"):
        rep = exploitability(game, solver.average_policy())
    writer.write("strategy.json", dump_json(strategy_document(game.config_dict(), profile)))
    writer.write("convergence.csv", conv.to_csv())
    writer.write("exploitability.json", dump_json(rep.to_json()))
    summary = {"eps1": rep.eps1, "eps2": rep.eps2, "avg_exploitability": rep.avg,
               "expected_value": conv.last(1)[2]}
    writer.manifest("solve", _snapshot(cfg), scfg.seed, watch.timings, summary)
    click.echo(f"avg exploitability {rep.avg:.6f} (eps1 {rep.eps1:.6f}, eps2 {rep.eps2:.6f})")
    click.echo(f"wrote {writer.out_dir}")


@main.command()
@config_options
@guarded
def sgfi(config_path, overrides, out_dir, replay):
    """Shapley game feature importance over all 2^m coalitions."""
    cfg = _load(config_path, overrides, replay)
    game = cfg.make_game()
    if not game.feature_ids:
        raise UsageError(f"{game.name} registers no features; sgfi needs goofspiel")
    scfg = cfg.solver_config(game)
    writer = RunWriter(cfg.output_dir(out_dir))
    watch = Stopwatch()

    def progress(n, res):
        log.info("coalition %s value %.4f eps %.4f", res.subset.label(game.feature_ids), res.value, res.exploitability)

    with watch.stage("coalitions"):
        run = run_sgfi(game, scfg, replicates=cfg.sgfi.replicates, workers=cfg.sgfi.workers, progress=progress)
    multi = len(run.coalitions) > 1
    for r, coal in enumerate(run.coalitions):
        for label, res in coal.items():
            name = f"convergence/{label}_r{r}.csv" if multi else f"convergence/{label}.csv"
            writer.write(name, res.log.to_csv())
    doc = run.to_json()
    writer.write("sgfi_report.json", dump_json(doc))
    writer.manifest("sgfi", _snapshot(cfg), scfg.seed, watch.timings, {"phi": doc["phi"], "stddev": doc["stddev"]})
    for j in run.feature_ids:
        click.echo(f"phi_{j} = {doc['phi'][j]:+.4f}  (sd {doc['stddev'][j]:.4f})")
    click.echo(f"wrote {writer.out_dir}")


def resolve_infoset(index: InfosetIndex, sel) -> str:
    """Turn the [ssfi] selector into exactly one infoset key."""
    if sel.infoset is not None:
        if sel.infoset not in index.features:
            raise SelectorError(f"{sel.infoset!r} is not an infoset of player {index.player}")
        return sel.infoset
    if sel.hand is None:
        raise SelectorError("ssfi needs either infoset or hand (+ optional C, D, O, P)")
    found = select_infosets(index, sel.hand, sel.C, sel.D, sel.O, sel.P)
    if len(found) == 1:
        return found[0]
    if found:
        listing = "\n".join(f"  {json.dumps(describe(index, k))}" for k in found[:20])
        raise SelectorError(f"selector matches {len(found)} infosets; set ssfi.infoset to one of:\n{listing}")
    near = select_infosets(index, sel.hand, sel.C)
    listing = "\n".join(f"  {json.dumps(describe(index, k))}" for k in near[:20]) or "  (none with this hand)"
    raise SelectorError(f"selector matches no infoset; near matches (same hand and C):\n{listing}")


def _ssfi_seed(master: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(_SSFI_STREAM,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@main.command("ssfi")
@config_options
@guarded
def ssfi_cmd(config_path, overrides, out_dir, replay):
    """Shapley strategy feature importance at one infoset."""
    cfg = _load(config_path, overrides, replay)
    game = cfg.make_game()
    if not game.feature_ids:
        raise UsageError(f"{game.name} registers no features; ssfi needs goofspiel")
    sel = cfg.ssfi
    writer = RunWriter(cfg.output_dir(out_dir))
    watch = Stopwatch()
    with watch.stage("profile"):
        if sel.strategy is not None:
            game_cfg, profile = read_strategy(sel.strategy)
            if game_cfg != game.config_dict():
                raise UsageError(f"strategy file is for {game_cfg}, config says {game.config_dict()}")
        else:
            solver = Solver(game, cfg.solver_config(game))
            solver.solve()
            profile = solver.profile()
            writer.write("strategy.json", dump_json(strategy_document(game.config_dict(), profile)))
    index = InfosetIndex(game)
    key = resolve_infoset(index, sel)
    seed = _ssfi_seed(cfg.solver.seed)
    with watch.stage("ssfi"):
        if sel.exact:
            rep = ssfi_exact(index, profile, key, sel.features)
        else:
            rep = ssfi(index, profile, key, sel.features, sel.t1, sel.t2, seed)
    table = rep.render()
    writer.write("ssfi_report.json", dump_json(rep.to_json()))
    writer.write("ssfi_table.txt", f"{key}  hand={cards(index.signature[key])}\n{table}")
    writer.manifest("ssfi", _snapshot(cfg), cfg.solver.seed, watch.timings,
                    {"infoset": key, "missing_rate": rep.missing_rate, "ssfi_seed": seed})
    click.echo(key)
    click.echo(table, nl=False)
    click.echo(f"wrote {writer.out_dir}")


@main.command("eval")
@click.argument("strategy", type=click.Path(dir_okay=False))
@config_options
@guarded
def eval_cmd(strategy, config_path, overrides, out_dir, replay):
    """Exploitability of a strategy file (game taken from the file)."""
    cfg = _load(config_path, overrides, replay)
    game_cfg, profile = read_strategy(strategy)
    game = cfg.model_copy(update={"game": GameSection.model_validate(game_cfg)}).make_game()
    writer = RunWriter(cfg.output_dir(out_dir))
    watch = Stopwatch()
    with watch.stage("evaluate"):
        rep = exploitability(game, profile)
    writer.write("exploitability.json", dump_json(rep.to_json()))
    summary = dict(rep.to_json(), strategy=str(strategy), strategy_sha256=sha256(Path(strategy)))
    writer.manifest("eval", _snapshot(cfg), cfg.solver.seed, watch.timings, summary)
    click.echo(json.dumps(rep.to_json(), sort_keys=True))


@main.command("enumerate")
@config_options
@click.option("--player", type=click.IntRange(1, 2), default=None, help="Player whose infosets to list (default: target).")
@guarded
def enumerate_cmd(config_path, overrides, out_dir, replay, player):
    """List infosets with their action sets and feature vectors."""
    cfg = _load(config_path, overrides, replay)
    game = cfg.make_game()
    from .tree import get_tree

    tree = get_tree(game)
    target = cfg.game.target_player if game.feature_ids else None
    player = player or target or 1
    rows = []
    for i in tree.player_infosets(player):
        key = tree.infoset_keys[i]
        row = {"infoset": key, "actions": list(tree.infoset_labels[i])}
        if game.feature_ids and player == target:
            row["features"] = game.features(key).to_json()
        rows.append(row)
    writer = RunWriter(cfg.output_dir(out_dir))
    writer.write("infosets.jsonl", "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
    writer.manifest("enumerate", _snapshot(cfg), cfg.solver.seed, {}, {"player": player, "count": len(rows)})
    for r in rows[:50]:
        click.echo(json.dumps(r, sort_keys=True))
    if len(rows) > 50:
        click.echo(f"... {len(rows)} infosets in total")


if __name__ == "__main__":  # pragma: no cover
    main()
