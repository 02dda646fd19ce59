"""Experiment configuration: one YAML file, every default explicit."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from . import presets
from .kinematics import IdentityChain, JointSpec, KinematicChain, PlanarChain, SpatialChain
from .simulator import BoardSpec
from .timeparam import Limits
from .waypoints import MODES, GeneratorConfig, Workspace, action_size

# libyaml when present, same output either way
_Loader = getattr(yaml, "CSafeLoader", yaml.SafeLoader)
_Dumper = getattr(yaml, "CSafeDumper", yaml.SafeDumper)

TASKS = ("ball2d", "ball3d")


LR_SCHEDULES = ("constant", "linear")


class ConfigError(ValueError):
    pass


@dataclass
class GeneratorSection:
    mode: str = "truerma"
    recursion_depth: int = 3
    k_angle: float = 0.8
    fixed_reference_point: list[float] | None = None
    rel_max_step: list[float] | None = None


@dataclass
class WorkspaceSection:
    lower: list[float] = field(default_factory=lambda: list(presets.TASK2D_LOWER))
    upper: list[float] = field(default_factory=lambda: list(presets.TASK2D_UPPER))
    angle_lower: list[float] = field(default_factory=lambda: [0.0, -presets.ANGLE_RANGE, 0.0])
    angle_upper: list[float] = field(default_factory=lambda: [0.0, presets.ANGLE_RANGE, 0.0])
    region_fraction: float = 0.15


@dataclass
class ChainSection:
    """``kind`` is ``identity``, ``planar`` or ``spatial``; unused fields are ignored."""

    kind: str = "planar"
    lengths: list[float] = field(default_factory=lambda: list(presets.PLANAR3_LENGTHS))
    base: list[float] = field(default_factory=lambda: [0.0, 0.0])
    base_angle: float = presets.PLANAR3_BASE_ANGLE
    rest: list[float] = field(default_factory=lambda: list(presets.PLANAR3_REST))
    lower: list[float] | None = None
    upper: list[float] | None = None
    joints: list[dict] | None = None
    tool: list[float] | None = None


@dataclass
class LimitsSection:
    v_max: list[float] = field(default_factory=lambda: list(presets.panda_like(3)[0]))
    a_max: list[float] = field(default_factory=lambda: list(presets.panda_like(3)[1]))


@dataclass
class BoardSection:
    half_extents: list[float] = field(default_factory=lambda: [0.1])
    ball_radius: float = 0.01
    rolling_factor: float = 5.0 / 7.0
    gravity: float = 9.81


@dataclass
class PathSection:
    max_deviation: float = 0.05
    spacing: float = 0.01
    joint_deviation: float = 0.01
    resolution: int = 2000
    dt: float = 1.0 / 240.0


@dataclass
class TrainerSection:
    batch_size: int = 4000
    minibatch_size: int = 128
    epochs: int = 30
    clip: float = 0.3
    learning_rate: float = 5e-5
    entropy_coef: float = 0.0
    value_coef: float = 1.0
    init_log_std: float = 0.0
    hidden: list[int] = field(default_factory=lambda: [200, 100])
    total_episodes: int = 60000
    max_grad_norm: float | None = None
    # "constant" or "linear" (decays to zero at total_episodes)
    lr_schedule: str = "constant"
    checkpoint_interval: int = 10000


@dataclass
class EvaluationSection:
    interval: int = 2000
    episodes: int = 500
    seed: int = 12345
    hit_threshold: float = 0.1


@dataclass
class ExperimentConfig:
    task: str = "ball2d"
    seed: int = 0
    output_dir: str = "runs/ball2d"
    workers: int = 1
    failure_reward: float = -1.0
    generator: GeneratorSection = field(default_factory=GeneratorSection)
    workspace: WorkspaceSection = field(default_factory=WorkspaceSection)
    chain: ChainSection = field(default_factory=ChainSection)
    limits: LimitsSection = field(default_factory=LimitsSection)
    board: BoardSection = field(default_factory=BoardSection)
    path: PathSection = field(default_factory=PathSection)
    trainer: TrainerSection = field(default_factory=TrainerSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    # ------------------------------------------------------------------
    # serialization

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        return _build(cls, data, "")

    def to_yaml(self) -> str:
        return yaml.dump(self.to_dict(), Dumper=_Dumper, sort_keys=False, default_flow_style=None)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.load(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_yaml(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml())

    def hash(self) -> str:
        """Digest of everything except bookkeeping fields that do not change results."""
        d = self.to_dict()
        for key in ("output_dir", "workers"):
            d.pop(key)
        d["trainer"].pop("checkpoint_interval")
        # a longer run extends a shorter one without changing its prefix,
        # unless the step size schedule is tied to the total
        if self.trainer.lr_schedule == "constant":
            d["trainer"].pop("total_episodes")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # ------------------------------------------------------------------
    # object construction

    def make_workspace(self) -> Workspace:
        w = self.workspace
        return Workspace(w.lower, w.upper, w.angle_lower, w.angle_upper)

    def make_generator(self) -> GeneratorConfig:
        g = self.generator
        return GeneratorConfig(
            mode=g.mode, recursion_depth=g.recursion_depth, k_angle=g.k_angle,
            fixed_reference_point=None if g.fixed_reference_point is None else tuple(g.fixed_reference_point),
            rel_max_step=None if g.rel_max_step is None else tuple(g.rel_max_step),
        )

    def make_chain(self) -> KinematicChain:
        c = self.chain
        if c.kind == "identity":
            ws = self.make_workspace()
            return IdentityChain(dim=ws.dim, active_axes=ws.active_axes,
                                 fixed_orientation=ws.angle_lower)
        if c.kind == "planar":
            return PlanarChain(c.lengths, base=c.base, lower=c.lower, upper=c.upper, rest=c.rest,
                               base_angle=c.base_angle)
        if c.kind == "spatial":
            if not c.joints:
                raise ConfigError("spatial chain needs a joints list")
            joints = [JointSpec(tuple(j["offset"]), tuple(j["axis"]), j.get("lower", -math.pi),
                                j.get("upper", math.pi)) for j in c.joints]
            return SpatialChain(joints, tool=c.tool or (0.0, 0.0, 0.0), base=c.base, rest=c.rest)
        raise ConfigError(f"unknown chain kind {c.kind!r}")

    def make_limits(self) -> Limits:
        return Limits(self.limits.v_max, self.limits.a_max)

    def make_board(self) -> BoardSpec:
        b = self.board
        return BoardSpec(b.half_extents, b.ball_radius, b.rolling_factor, b.gravity)

    @property
    def dim(self) -> int:
        return 2 if self.task == "ball2d" else 3

    def action_size(self) -> int:
        return action_size(self.make_generator(), self.make_workspace())

    def validate(self) -> "ExperimentConfig":
        """Check cross-section consistency; returns ``self``."""
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.generator.mode not in MODES:
            raise ConfigError(f"generator.mode must be one of {MODES}")
        try:
            ws = self.make_workspace()
            chain = self.make_chain()
            limits = self.make_limits()
            board = self.make_board()
            self.make_generator()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        if ws.dim != self.dim:
            raise ConfigError(f"task {self.task} needs a {self.dim}D workspace, got {ws.dim}D")
        if chain.dim != ws.dim:
            raise ConfigError(f"chain works in {chain.dim}D but the workspace is {ws.dim}D")
        if limits.n_joints != chain.n_joints:
            raise ConfigError(f"limits cover {limits.n_joints} joints, chain has {chain.n_joints}")
        if board.dim != ws.dim - 1:
            raise ConfigError(f"board needs {ws.dim - 1} half extents for task {self.task}")
        if self.chain.kind != "identity" and len(self.chain.rest) != chain.n_joints:
            raise ConfigError("chain.rest length does not match the joint count")
        if not 0 < self.workspace.region_fraction <= 0.5:
            raise ConfigError("workspace.region_fraction must lie in (0, 0.5]")
        p = self.path
        if min(p.max_deviation, p.joint_deviation) < 0 or p.spacing <= 0 or p.dt <= 0 or p.resolution < 1:
            raise ConfigError("path settings must be positive")
        t = self.trainer
        if min(t.batch_size, t.minibatch_size, t.epochs, t.total_episodes) < 1 or t.learning_rate <= 0:
            raise ConfigError("trainer sizes and learning rate must be positive")
        if t.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"trainer.lr_schedule must be one of {LR_SCHEDULES}")
        if not 0 < t.clip < 1:
            raise ConfigError("trainer.clip must lie in (0, 1)")
        if len(t.hidden) < 1 or min(t.hidden) < 1:
            raise ConfigError("trainer.hidden needs at least one positive width")
        e = self.evaluation
        if e.interval < 1 or e.episodes < 1 or not 0 <= e.hit_threshold <= 1:
            raise ConfigError("evaluation settings out of range")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self


def _build(cls, data: dict, prefix: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in sorted(unknown))}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        sub = _SECTIONS.get(name) if cls is ExperimentConfig else None
        if sub is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{prefix}{name} must be a mapping")
            kwargs[name] = _build(sub, value, f"{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


_SECTIONS = {
    "generator": GeneratorSection,
    "workspace": WorkspaceSection,
    "chain": ChainSection,
    "limits": LimitsSection,
    "board": BoardSection,
    "path": PathSection,
    "trainer": TrainerSection,
    "evaluation": EvaluationSection,
}


def _spatial7_chain() -> ChainSection:
    joints = [{"offset": list(j.offset), "axis": list(j.axis), "lower": j.lower, "upper": j.upper}
              for j in presets.SPATIAL7_JOINTS]
    return ChainSection(kind="spatial", lengths=[], base=[0.0, 0.0, 0.0], base_angle=0.0,
                        rest=list(presets.SPATIAL7_REST), joints=joints, tool=list(presets.SPATIAL7_TOOL))


def default_config(task: str = "ball2d", mode: str = "truerma", chain: str | None = None) -> ExperimentConfig:
    """Shipped defaults for a task; ``chain`` may be ``identity`` to swap
    the robot for a task-space stand-in."""
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}")
    a = presets.ANGLE_RANGE
    if task == "ball2d":
        cfg = ExperimentConfig(task=task, output_dir=f"runs/{task}-{mode}")
    else:
        v, acc = presets.panda_like(7)
        cfg = ExperimentConfig(
            task=task,
            output_dir=f"runs/{task}-{mode}",
            workspace=WorkspaceSection(list(presets.TASK3D_LOWER), list(presets.TASK3D_UPPER),
                                       [-a, -a, 0.0], [a, a, 0.0]),
            chain=_spatial7_chain(),
            limits=LimitsSection(list(v), list(acc)),
            board=BoardSection(half_extents=[0.1, 0.1]),
        )
    cfg.generator.mode = mode
    if chain == "identity":
        n = cfg.dim + (1 if task == "ball2d" else 2)
        cfg.chain = ChainSection(kind="identity", lengths=[], base=[], base_angle=0.0, rest=[])
        cfg.limits = LimitsSection([1.0] * n, [5.0] * n)
    elif chain is not None:
        raise ConfigError(f"unknown chain preset {chain!r}")
    return cfg.validate()
