from __future__ import annotations

from dataclasses import dataclass

RUNNING, SUCCESS, TIMEOUT, FLIPPED, FAILED = range(5)
STATUS_NAMES = ("running", "success", "timeout", "flipped", "failed")

# proxy slots for collision counting: torso, 4 thighs, 4 calves
N_PROXIES = 9
PROXY_TORSO = 0
FOOT_PROXY = -1


@dataclass(frozen=True)
class RandomizationConfig:
    mass_scale: tuple[float, float] = (0.8, 1.2)
    motor_strength: tuple[float, float] = (0.9, 1.1)
    joint_offset: float = 0.02
    friction: tuple[float, float] = (0.4, 1.25)
    restitution: tuple[float, float] = (0.0, 0.2)
    gravity_tilt_deg: float = 2.0
    gravity_magnitude: tuple[float, float] = (9.6, 10.0)

    def problems(self) -> list[str]:
        errs = []
        for name in ("mass_scale", "motor_strength", "friction", "restitution", "gravity_magnitude"):
            lo, hi = getattr(self, name)
            if lo > hi:
                errs.append(f"randomization.{name}: lower bound above upper bound")
        if self.mass_scale[0] <= 0 or self.motor_strength[0] <= 0 or self.gravity_magnitude[0] <= 0:
            errs.append("randomization scales must stay positive")
        if self.friction[0] < 0 or not 0 <= self.restitution[0] <= self.restitution[1] <= 1:
            errs.append("friction must be >= 0 and restitution within [0, 1]")
        if self.joint_offset < 0 or self.gravity_tilt_deg < 0:
            errs.append("joint_offset and gravity_tilt_deg must be >= 0")
        return errs


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 200.0
    decimation: int = 4
    horizon: int = 500
    contact_stiffness: float = 4000.0
    contact_damping: float = 100.0
    tangential_damping: float = 2000.0
    friction: float = 0.8
    restitution: float = 0.0
    gravity: float = 9.81
    goal_threshold: float = 0.2
    flip_threshold: float = -0.1
    collision_depth: float = 1e-3
    stand_height: float = 0.28
    local_goal_threshold: float = 0.1
    replan_interval: int = 50
    randomize: bool = True
    randomization: RandomizationConfig = RandomizationConfig()

    def __post_init__(self):
        errs = self.problems()
        if errs:
            raise ValueError("; ".join(errs))

    def problems(self) -> list[str]:
        errs = []
        if not self.dt > 0:
            errs.append("dt must be > 0")
        if self.decimation < 1:
            errs.append("decimation must be >= 1")
        if self.horizon < 1:
            errs.append("horizon must be >= 1")
        if not self.goal_threshold > 0:
            errs.append("goal_threshold must be > 0")
        if not self.local_goal_threshold > 0:
            errs.append("local_goal_threshold must be > 0")
        if self.contact_stiffness <= 0 or self.contact_damping < 0 or self.tangential_damping < 0:
            errs.append("contact stiffness must be > 0 and dampings >= 0")
        if self.replan_interval < 1:
            errs.append("replan_interval must be >= 1")
        errs += self.randomization.problems()
        return errs

    @property
    def control_dt(self) -> float:
        return self.dt * self.decimation
