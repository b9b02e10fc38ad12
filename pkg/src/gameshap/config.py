"""Experiment configuration: one TOML file plus ``--set`` overrides."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .abstraction import FeatureSubset
from .game import Game
from .goofspiel import Goofspiel, GoofspielConfig
from .kuhn import KuhnPoker
from .solver import SolverConfig

OUT_ENV = "GAMESHAP_OUT"
DEFAULT_OUT = "gameshap-out"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GameSection(_Section):
    name: Literal["goofspiel", "kuhn"] = "goofspiel"
    k: int = Field(4, ge=2)
    utility_mode: Literal["differential", "win-loss"] = "differential"
    target_player: Literal[1, 2] = 1


class SolverSection(_Section):
    algorithm: Literal["vanilla_cfr", "external_mccfr"] = "external_mccfr"
    iterations: int = Field(1_000_000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    eval_schedule: list[int] = []
    averaging: Literal["opponent", "own_reach"] = "opponent"
    # Visible features of the target player, e.g. "CD"; omitted = no abstraction.
    target_abstraction: Optional[str] = None

    @model_validator(mode="after")
    def _schedule(self):
        bad = [t for t in self.eval_schedule if t < 1 or t > self.iterations]
        if bad:
            raise ValueError(f"eval_schedule checkpoints outside [1, iterations]: {bad}")
        return self


class SgfiSection(_Section):
    replicates: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)


class SsfiSection(_Section):
    # Either a raw infoset key or a (hand, C, D, O, P) selector.
    infoset: Optional[str] = None
    hand: Optional[list[int]] = None
    C: Optional[int] = None
    D: Optional[list[int]] = None
    O: Optional[list[int]] = None
    P: Optional[int] = None
    features: list[str] = ["C", "D", "O", "P"]
    t1: int = Field(1_000_000, ge=1)
    t2: int = Field(1_000_000, ge=1)
    # Strategy JSON from ``solve``; omitted = solve inline with [solver].
    strategy: Optional[str] = None
    exact: bool = False

    @field_validator("features")
    @classmethod
    def _features(cls, v):
        if not v or len(set(v)) != len(v):
            raise ValueError("features must be a non-empty list without repeats")
        return v


class OutputSection(_Section):
    dir: Optional[str] = None


class ExperimentConfig(_Section):
    game: GameSection = GameSection()
    solver: SolverSection = SolverSection()
    sgfi: SgfiSection = SgfiSection()
    ssfi: SsfiSection = SsfiSection()
    output: OutputSection = OutputSection()

    def make_game(self) -> Game:
        g = self.game
        if g.name == "kuhn":
            return KuhnPoker()
        return Goofspiel(GoofspielConfig(k=g.k, target_player=g.target_player, utility_mode=g.utility_mode))

    def solver_config(self, game: Game) -> SolverConfig:
        s = self.solver
        subset = None
        if s.target_abstraction is not None:
            subset = FeatureSubset.parse(s.target_abstraction, game.feature_ids)
        return SolverConfig(
            algorithm=s.algorithm,
            iterations=s.iterations,
            seed=s.seed,
            target_abstraction=subset,
            eval_schedule=tuple(sorted(set(s.eval_schedule))),
            averaging=s.averaging,
        )

    def output_dir(self, override: str | None = None) -> Path:
        return Path(override or self.output.dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` overrides; values use TOML syntax, bare words are strings."""
    for item in overrides:
        path, sep, raw = item.partition("=")
        if not sep or not path.strip():
            raise ValueError(f"override {item!r} is not of the form section.key=value")
        *parents, leaf = path.strip().split(".")
        node = data
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {item!r} descends into a non-table")
        node[leaf] = _parse_value(raw.strip())
    return data


def load_config(
    path: str | Path | None, overrides: list[str] = (), replay: str | Path | None = None
) -> ExperimentConfig:
    """Build the config from a TOML file or a run manifest's snapshot, then overrides."""
    if path is not None and replay is not None:
        raise ValueError("give either a config file or a manifest to replay, not both")
    data: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    elif replay is not None:
        data = json.loads(Path(replay).read_text())["config"]
    return ExperimentConfig.model_validate(apply_overrides(data, list(overrides)))
