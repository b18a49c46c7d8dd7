"""Command-line front end.

    python -m lca.cli.main train --task "Stack the red object on top of the blue object" --out runs/pair
    python -m lca.cli.main schedule --skills runs/pair/skills.json --instruction "..." --out runs/sched

Every command writes ``run_manifest.json`` into its output directory; passing
it back with ``--manifest`` reproduces the run.
"""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from lca.config import EndpointConfig, load_endpoint_config
from lca.executive.demos import load_demo, record_demo, save_demo
from lca.executive.skills import (
    ExecutionTrace,
    ExecutiveConfig,
    SkillManifest,
    imitate,
    infer_subgoals,
    load_library,
    schedule,
)
from lca.graph.artifacts import ArtifactWriter
from lca.graph.experiments import (
    TRANSFER_TASKS,
    TrainingSession,
    run_curriculum_experiment,
    run_sparseness_scaling,
    run_transfer_experiment,
    steps_to_success_rate,
)
from lca.graph.trainer import RunConfig
from lca.llm.decomposer import decompose, parse_task
from lca.policy.network import TrainConfig
from lca.semantics.oracle import OracleConfig
from lca.world.sparseness import estimate_sparseness


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

MANIFEST_FILE = "run_manifest.json"

_DEFAULT_SPARSENESS_TASKS = [
    "Grasp the red object",
    "Stack the red object on top of the blue object",
    "Stack all three objects",
]


class OutputExistsError(ValueError):
    """The output directory already holds files and --force was not given."""


class CliConfig(BaseModel):
    """Flat, fully resolved configuration for one command."""

    model_config = ConfigDict(extra="forbid")

    out_dir: str = "runs/default"
    task: str = "Stack the red object on top of the blue object"
    sparseness_tasks: List[str] = Field(default_factory=lambda: list(_DEFAULT_SPARSENESS_TASKS))
    sparseness_trials: int = Field(200, gt=0)
    sparseness_max_steps: int = Field(1_000_000, gt=0)
    with_training: bool = False

    # trainer
    n_actors: int = Field(32, gt=0)
    episode_cap: Optional[int] = Field(None, gt=0)
    rounds: int = Field(200, gt=0)
    triple_rounds: Optional[int] = Field(None, gt=0)
    eval_episodes: int = Field(50, gt=0)
    eval_greedy: bool = True
    epsilon: float = Field(0.1, ge=0.0, le=1.0)
    explore: Literal["grid", "uniform"] = "grid"
    master_seed: int = 0
    use_subgoals: bool = True
    curriculum_source: Literal["auto", "rule", "external"] = "auto"
    workers: int = Field(1, gt=0)
    checkpoint_every: int = Field(0, ge=0)
    converge_threshold: float = Field(0.95, gt=0.0, le=1.0)
    converge_rounds: int = Field(3, gt=0)

    # policy
    learning_rate: float = Field(0.1, gt=0.0)
    batch_size: int = Field(256, gt=0)
    gradient_steps: int = Field(100, gt=0)
    init_seed: int = 0
    hidden: int = Field(128, gt=0)

    # oracle
    gamma: float = Field(0.8, gt=0.0, lt=1.0)
    target_precision: float = Field(1.0, gt=0.0, le=1.0)
    target_recall: float = Field(1.0, gt=0.0, le=1.0)
    noise_seed: int = 0
    dimension: int = Field(128, ge=32)
    embedding_seed: int = 0

    # test time
    skills: Optional[str] = None
    instruction: Optional[str] = None
    demo: Optional[str] = None
    skill_budget: int = Field(10, gt=0)
    trials: int = Field(10, gt=0)
    reset_seed: int = 0

    @field_validator("sparseness_tasks", mode="before")
    @classmethod
    def _split_tasks(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [part.strip() for part in value.split(";") if part.strip()]
        return value

    @field_validator("episode_cap", "triple_rounds", "skills", "instruction", "demo", mode="before")
    @classmethod
    def _blank_is_none(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("", "none", "null"):
            return None
        return value

    def oracle_config(self) -> OracleConfig:
        return OracleConfig(
            gamma=self.gamma,
            target_precision=self.target_precision,
            target_recall=self.target_recall,
            noise_seed=self.noise_seed,
            dimension=self.dimension,
            embedding_seed=self.embedding_seed,
        )

    def run_config(self, endpoint: EndpointConfig) -> RunConfig:
        source = self.curriculum_source
        if source == "auto":
            source = "external" if endpoint.enabled else "rule"
        return RunConfig(
            n_actors=self.n_actors,
            episode_cap=self.episode_cap,
            rounds=self.rounds,
            triple_rounds=self.triple_rounds,
            eval_episodes=self.eval_episodes,
            eval_greedy=self.eval_greedy,
            epsilon=self.epsilon,
            explore=self.explore,
            master_seed=self.master_seed,
            oracle=self.oracle_config(),
            train=TrainConfig(
                learning_rate=self.learning_rate,
                batch_size=self.batch_size,
                gradient_steps_per_round=self.gradient_steps,
                init_seed=self.init_seed,
                hidden=self.hidden,
            ),
            curriculum_source=source,
            use_subgoals=self.use_subgoals,
            workers=self.workers,
            checkpoint_every=self.checkpoint_every,
            converge_threshold=self.converge_threshold,
            converge_rounds=self.converge_rounds,
        )

    def executive_config(self) -> ExecutiveConfig:
        return ExecutiveConfig(skill_budget=self.skill_budget, oracle=self.oracle_config())


class RunManifest(BaseModel):
    command: str
    config: CliConfig


class ScheduleReport(BaseModel):
    instruction: str
    successes: int
    runs: List[ExecutionTrace]


# --- argument parsing ---------------------------------------------------------


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value file with CliConfig fields")
    parser.add_argument("--manifest", help="run_manifest.json of an earlier run to reproduce")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    parser.add_argument("--seed", dest="master_seed", type=int)
    parser.add_argument("--force", action="store_true", help="reuse a non-empty output directory")
    parser.add_argument("--log-level", default="INFO")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lca", description="Language-driven curriculum agent experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sparseness", help="estimate random-action sparseness per task")
    _common(p)
    p.add_argument("--task", dest="sparseness_tasks", action="append")
    p.add_argument("--trials", dest="sparseness_trials", type=int)
    p.add_argument("--max-steps", dest="sparseness_max_steps", type=int)
    p.add_argument(
        "--with-training", dest="with_training", action="store_true", default=None,
        help="also train each task and pair steps-to-50%%",
    )

    p = sub.add_parser("train", help="train one task with the collect-and-infer loop")
    _common(p)
    p.add_argument("--task")
    p.add_argument("--rounds", type=int)
    p.add_argument("--no-subgoals", dest="use_subgoals", action="store_false", default=None)

    p = sub.add_parser("transfer", help="learn the three pair stacks in sequence")
    _common(p)
    p.add_argument("--rounds", type=int)

    p = sub.add_parser("schedule", help="execute trained skills for an instruction")
    _common(p)
    p.add_argument("--skills", help="skills.json written by train")
    p.add_argument("--instruction")
    p.add_argument("--trials", type=int)

    p = sub.add_parser("imitate", help="infer subgoals from a demonstration and execute them")
    _common(p)
    p.add_argument("--skills", help="skills.json written by train")
    p.add_argument("--demo", help="demonstration JSON")
    p.add_argument("--trials", type=int)

    p = sub.add_parser("record-demo", help="record a scripted-expert demonstration")
    _common(p)
    p.add_argument("--task")
    p.add_argument("--reset-seed", dest="reset_seed", type=int)
    return parser


_FLAG_FIELDS = (
    "out_dir", "master_seed", "task", "rounds", "use_subgoals", "sparseness_tasks", "sparseness_trials",
    "sparseness_max_steps", "with_training", "skills", "instruction", "demo", "trials", "reset_seed",
)


def _parse_overrides(items: Sequence[str]) -> Dict[str, str]:
    values = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value.strip()
    return values


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """Manifest, then config file, then --set, then explicit flags."""
    values: Dict[str, Any] = {}
    if args.manifest:
        manifest = RunManifest.model_validate_json(Path(args.manifest).read_bytes())
        if manifest.command != args.command:
            raise ValueError(f"manifest was written by {manifest.command!r}, not {args.command!r}")
        values.update(manifest.config.model_dump())
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        values.update({k: v for k, v in dotenv_values(path).items() if v is not None})
    values.update(_parse_overrides(args.overrides))
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            values[name] = value
    return CliConfig.model_validate(values)


def prepare_output(out_dir: str, force: bool) -> ArtifactWriter:
    root = Path(out_dir)
    if root.exists() and any(root.iterdir()):
        if not force:
            raise OutputExistsError(f"output directory {root} is not empty; pass --force to reuse it")
        if (root / MANIFEST_FILE).exists():
            shutil.rmtree(root)
    return ArtifactWriter(root)


# --- commands ------------------------------------------------------------------


def cmd_sparseness(cfg: CliConfig, writer: ArtifactWriter) -> None:
    tasks = [parse_task(t) for t in cfg.sparseness_tasks]
    if cfg.with_training:
        scaling = run_sparseness_scaling(
            cfg.run_config(load_endpoint_config()),
            tasks=tasks,
            max_steps=cfg.sparseness_max_steps,
            trials=cfg.sparseness_trials,
            writer=writer,
        )
        # scaling rows come back sorted by sparseness; the table keeps the requested order
        by_task = {row.task: row.sparseness for row in scaling}
        estimates = [by_task[task.text] for task in tasks]
    else:
        estimates = [
            estimate_sparseness(task, cfg.sparseness_max_steps, cfg.sparseness_trials, cfg.master_seed)
            for task in tasks
        ]
    rows = []
    for est in estimates:
        rows.append([est.task, repr(est.mean), repr(est.censored_fraction), str(est.trials)])
    writer.write_csv("sparseness.csv", ["task", "mean", "censored_fraction", "trials"], rows)


def _write_skills(writer: ArtifactWriter, captions: List[str]) -> None:
    writer.write_json("skills.json", SkillManifest(captions=captions))


def cmd_train(cfg: CliConfig, writer: ArtifactWriter) -> None:
    task = parse_task(cfg.task)
    endpoint = load_endpoint_config()
    config = cfg.run_config(endpoint)
    session = TrainingSession(task, config, writer=writer, endpoint=endpoint)
    curve = run_curriculum_experiment(task, config, session=session)
    _write_skills(writer, session.curriculum.texts())
    logger.info(
        "%r: converged=%s steps to 50%% = %s", task.text, curve.converged, steps_to_success_rate(curve, 0.5)
    )


def cmd_transfer(cfg: CliConfig, writer: ArtifactWriter) -> None:
    endpoint = load_endpoint_config()
    results = run_transfer_experiment(TRANSFER_TASKS, cfg.run_config(endpoint), writer=writer, endpoint=endpoint)
    for stage, task in enumerate(TRANSFER_TASKS):
        _write_skills(writer.scoped(f"task{stage}"), decompose(task).texts())
    steps = [r.steps_to_50 for r in results]
    logger.info("steps to 50%% per task: %s", steps)


def _require(value: Optional[str], flag: str) -> str:
    if not value:
        raise ValueError(f"{flag} is required")
    return value


def cmd_schedule(cfg: CliConfig, writer: ArtifactWriter) -> None:
    library = load_library(_require(cfg.skills, "--skills"))
    instruction = _require(cfg.instruction, "--instruction")
    runs = [
        schedule(instruction, library, cfg.executive_config(), reset_seed=cfg.reset_seed + i)
        for i in range(cfg.trials)
    ]
    report = ScheduleReport(instruction=instruction, successes=sum(r.task_success for r in runs), runs=runs)
    writer.write_json("trace.json", report)
    logger.info("%d/%d scheduled runs succeeded", report.successes, len(runs))


def cmd_imitate(cfg: CliConfig, writer: ArtifactWriter) -> None:
    library = load_library(_require(cfg.skills, "--skills"))
    frames = load_demo(_require(cfg.demo, "--demo"))
    exec_cfg = cfg.executive_config()
    inferred = infer_subgoals(frames, library, exec_cfg.oracle)
    runs = [imitate(frames, library, exec_cfg, reset_seed=cfg.reset_seed + i) for i in range(cfg.trials)]
    report = ScheduleReport(instruction=inferred.render(), successes=sum(r.task_success for r in runs), runs=runs)
    writer.write_json("trace.json", report)
    logger.info("%d/%d imitation runs succeeded", report.successes, len(runs))


def cmd_record_demo(cfg: CliConfig, writer: ArtifactWriter) -> None:
    frames = record_demo(parse_task(cfg.task), cfg.reset_seed)
    save_demo(writer.path("demo.json"), frames)
    logger.info("recorded %d frames to %s", len(frames), writer.path("demo.json"))


def run(args: argparse.Namespace) -> None:
    cfg = resolve_config(args)
    if cfg.curriculum_source == "auto":
        source = "external" if load_endpoint_config().enabled else "rule"
        cfg = cfg.model_copy(update={"curriculum_source": source})
    writer = prepare_output(cfg.out_dir, args.force)
    # out_dir is left out so a re-run elsewhere writes an identical manifest
    writer.write_json(MANIFEST_FILE, {"command": args.command, "config": cfg.model_dump(mode="json", exclude={"out_dir"})})
    if args.command == "sparseness":
        cmd_sparseness(cfg, writer)
    elif args.command == "train":
        cmd_train(cfg, writer)
    elif args.command == "transfer":
        cmd_transfer(cfg, writer)
    elif args.command == "schedule":
        cmd_schedule(cfg, writer)
    elif args.command == "imitate":
        cmd_imitate(cfg, writer)
    elif args.command == "record-demo":
        cmd_record_demo(cfg, writer)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        run(args)
    except ValidationError as e:
        print(f"invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        logger.exception("run failed")
        print(f"run failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
