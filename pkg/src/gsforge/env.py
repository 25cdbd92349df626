"""Goal-reaching navigation environment over composed splat scenes.

A kinematic planar agent moves over a terrain mesh at 5 Hz, driven by
velocity commands squashed through tanh and scaled by per-axis limits.
Episodes randomize the robot pose and three colored cones (one per
region); the goal is the cone matching the commanded color, reached when
the 3D distance drops to the success radius within the time horizon.
Rewards follow the task/regularization split: a one-time reach bonus,
potential-difference distance terms (planar-3D and vertical), a heading
term, plus stop-at-goal, velocity-tracking, and action-magnitude
regularizers.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentationConfig, augment_image, perturb_camera
from .compose import CONE_COLORS, instantiate_episode, sample_placement
from .mesh import HeightIndex
from .render import RenderOptions, render
from .scene import CameraModel

COLOR_COMMANDS = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
}

# Ego camera intrinsics: deployment resolution and calibrated FOVs.
IMAGE_WIDTH = 320
IMAGE_HEIGHT = 180
FOV_X = 1.5701
FOV_Y = 1.0260

# Camera-to-world for a camera at yaw 0, pitch 0: looks along +x world,
# z up; camera axes are x-right, y-down, z-forward.
_R_CAM_BASE = np.array([[0.0, 0.0, 1.0],
                        [-1.0, 0.0, 0.0],
                        [0.0, -1.0, 0.0]])


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    wrapped = np.remainder(angle + np.pi, 2.0 * np.pi) - np.pi
    if np.isscalar(angle) or np.ndim(angle) == 0:
        return float(wrapped) if wrapped != -np.pi else np.pi
    wrapped = np.asarray(wrapped)
    wrapped[wrapped == -np.pi] = np.pi
    return wrapped


def reward_heading(psi_robot, psi_goal):
    """Negative absolute wrapped yaw error toward the goal bearing."""
    return -abs(wrap_angle(psi_robot - psi_goal))


@dataclass
class RewardWeights:
    reach_goal: float = 1.0
    goal_dis: float = 1.0
    goal_dis_z: float = 1.0
    goal_heading: float = 1.0
    stop_at_goal: float = 0.01
    track_lin_vel: float = 0.01
    track_ang_vel: float = 0.01
    action_l2: float = 0.01


@dataclass
class RewardBreakdown:
    reach_goal: float = 0.0
    goal_dis: float = 0.0
    goal_dis_z: float = 0.0
    goal_heading: float = 0.0
    stop_at_goal: float = 0.0
    track_lin_vel: float = 0.0
    track_ang_vel: float = 0.0
    action_l2: float = 0.0
    total: float = 0.0

    TERMS = ("reach_goal", "goal_dis", "goal_dis_z", "goal_heading",
             "stop_at_goal", "track_lin_vel", "track_ang_vel", "action_l2")

    def as_dict(self):
        return {name: getattr(self, name) for name in self.TERMS + ("total",)}


@dataclass
class EnvConfig:
    dt: float = 0.2                       # 5 Hz control
    horizon: float = 15.0                 # seconds
    success_radius: float = 0.25          # meters
    reach_reward: float = 10.0            # paid once on success
    v_max: tuple = (1.0, 0.5, 1.0)        # (v_x, v_y, v_yaw) limits
    camera_offset: tuple = (0.0, 0.0, 0.3)  # mount position in the base frame
    camera_pitch: float = 0.0             # radians, positive tilts down
    step_threshold: float = 0.15          # max traversable height change
    target_color: str = "red"
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    image_delay_probability: float = 0.0  # chance of a 1-step-old frame
    image_width: int = IMAGE_WIDTH
    image_height: int = IMAGE_HEIGHT
    fov_x: float = FOV_X
    fov_y: float = FOV_Y

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("horizon must be an integral number of steps")
        if self.success_radius <= 0:
            raise ValueError("success radius must be positive")
        if any(v <= 0 for v in self.v_max):
            raise ValueError("velocity limits must be positive")
        if self.target_color not in COLOR_COMMANDS:
            raise ValueError(f"unknown target color {self.target_color!r}")

    @property
    def max_steps(self):
        return int(round(self.horizon / self.dt))


@dataclass
class EnvAssets:
    """Immutable episode ingredients, shareable across env instances."""

    env_scene: object                      # GaussianScene
    object_scenes: dict                    # color -> GaussianScene
    regions: dict                          # name -> RegionSpec (left/middle/right)
    robot_region: object                   # RegionSpec
    alignments: dict = field(default_factory=dict)   # color -> SimilarityTransform
    terrain_mesh: object = None            # TriangleMesh or None (flat z=0)


@dataclass
class EnvState:
    x: float
    y: float
    yaw: float
    z: float
    goal_position: np.ndarray
    d_prev: float
    dz_prev: float
    step_count: int = 0
    last_action: np.ndarray = field(default_factory=lambda: np.zeros(3))
    terminated: bool = False
    truncated: bool = False

    @property
    def position(self):
        return np.array([self.x, self.y, self.z])


@dataclass
class Observation:
    rgb: np.ndarray            # (H, W, 3) float in [0, 1]
    command: np.ndarray        # (3,) RGB color command
    last_action: np.ndarray    # (3,) previous raw action
    proprioception: np.ndarray  # ang vel (3) + projected gravity (3) + joints (24)


class NavEnv:
    """One environment instance; owns its state and rng.

    Assets are read-only and may be shared between instances running in
    parallel.
    """

    def __init__(self, config, assets, render_options=None):
        self.config = config
        self.assets = assets
        self.render_options = render_options or RenderOptions()
        self.camera_base = CameraModel.from_fov(
            config.image_width, config.image_height, config.fov_x, config.fov_y)
        self._height_index = (HeightIndex(assets.terrain_mesh)
                              if assets.terrain_mesh is not None else None)
        self.rng = None
        self.state = None
        self.scene = None
        self.mesh_transforms = None
        self.placement = None
        self._last_frame = None
        self._last_v_cmd = np.zeros(3)

    # -- terrain ----------------------------------------------------------

    def ground_height(self, x, y):
        """Terrain height under (x, y); flat 0 without a mesh, None off-mesh."""
        if self._height_index is None:
            return 0.0
        return self._height_index.query(x, y)

    # -- episode lifecycle -------------------------------------------------

    def reset(self, seed=None):
        """Sample a placement, compose the episode scene, render the first
        observation."""
        self.rng = np.random.default_rng(seed)
        self.placement = sample_placement(self.rng, self.assets.regions,
                                          self.assets.robot_region)
        self.scene, self.mesh_transforms = instantiate_episode(
            self.assets.env_scene, self.assets.object_scenes,
            self.placement, self.assets.alignments)

        goal = self.placement.cone_by_color(self.config.target_color)
        x, y = self.placement.robot_position[:2]
        z = self.ground_height(x, y)
        if z is None:
            z = float(self.placement.robot_position[2])
        goal_position = np.asarray(goal.position, dtype=np.float64)

        d0 = float(np.linalg.norm(np.array([x, y, z]) - goal_position))
        dz0 = abs(z - goal_position[2])
        self.state = EnvState(x=float(x), y=float(y),
                              yaw=float(self.placement.robot_yaw), z=float(z),
                              goal_position=goal_position,
                              d_prev=d0, dz_prev=dz0)
        self._last_frame = None
        self._last_v_cmd = np.zeros(3)
        return self.observe()

    def step(self, raw_action):
        """Advance one control step; see module docstring for dynamics."""
        state = self.state
        if state is None:
            raise RuntimeError("call reset() before step()")
        if state.terminated or state.truncated:
            raise RuntimeError("step() called after the episode ended")
        raw = np.asarray(raw_action, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(raw)):
            raise ValueError("action must be finite")

        cfg = self.config
        v_max = np.asarray(cfg.v_max, dtype=np.float64)
        v_cmd = v_max * np.tanh(raw)
        self._last_v_cmd = v_cmd

        # Yaw first, then translate in the new heading.
        yaw = wrap_angle(state.yaw + v_cmd[2] * cfg.dt)
        c, s = np.cos(yaw), np.sin(yaw)
        dx = (c * v_cmd[0] - s * v_cmd[1]) * cfg.dt
        dy = (s * v_cmd[0] + c * v_cmd[1]) * cfg.dt
        new_x, new_y = state.x + dx, state.y + dy

        new_z = self.ground_height(new_x, new_y)
        moved = new_z is not None and abs(new_z - state.z) <= cfg.step_threshold
        if moved:
            state.x, state.y, state.z = float(new_x), float(new_y), float(new_z)
            achieved_planar = v_cmd[:2]
        else:
            achieved_planar = np.zeros(2)  # move rejected, yaw still applied
        state.yaw = yaw

        goal = state.goal_position
        d = float(np.linalg.norm(state.position - goal))
        dz = abs(state.z - goal[2])
        bearing = np.arctan2(goal[1] - state.y, goal[0] - state.x)

        w = cfg.reward_weights
        breakdown = RewardBreakdown(
            reach_goal=cfg.reach_reward if d <= cfg.success_radius else 0.0,
            goal_dis=state.d_prev - d,
            goal_dis_z=state.dz_prev - dz,
            goal_heading=reward_heading(state.yaw, bearing),
            stop_at_goal=-float(np.linalg.norm(v_cmd))
            if d <= 2.0 * cfg.success_radius else 0.0,
            track_lin_vel=-float(np.linalg.norm(achieved_planar - v_cmd[:2])),
            track_ang_vel=0.0,
            action_l2=-float(np.dot(raw, raw)),
        )
        breakdown.total = sum(getattr(w, name) * getattr(breakdown, name)
                              for name in RewardBreakdown.TERMS)

        state.d_prev = d
        state.dz_prev = dz
        state.step_count += 1
        state.last_action = raw.copy()
        state.terminated = d <= cfg.success_radius
        state.truncated = (not state.terminated
                           and state.step_count >= cfg.max_steps)

        return self.observe(), breakdown, state.terminated, state.truncated

    # -- observation -------------------------------------------------------

    def ego_camera(self):
        """Camera pose from the base pose composed with the mount offset."""
        cfg = self.config
        state = self.state
        c, s = np.cos(state.yaw), np.sin(state.yaw)
        rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        offset = np.asarray(cfg.camera_offset, dtype=np.float64)
        center = state.position + rz @ offset
        pitch = cfg.camera_pitch
        cp, sp = np.cos(pitch), np.sin(pitch)
        ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
        r_cw = rz @ ry @ _R_CAM_BASE
        r_wc = r_cw.T
        base = self.camera_base
        return CameraModel(fx=base.fx, fy=base.fy, cx=base.cx, cy=base.cy,
                           width=base.width, height=base.height,
                           r_wc=r_wc, t_wc=-r_wc @ center)

    def observe(self):
        """Render, randomize, and (possibly) delay the ego view."""
        cfg = self.config
        camera = perturb_camera(self.ego_camera(), cfg.augmentation, self.rng)
        frame = render(self.scene, camera, self.render_options).rgb
        if cfg.augmentation.enabled():
            frame = augment_image(frame, cfg.augmentation, self.rng)

        delayed = frame
        if cfg.image_delay_probability > 0:
            use_old = (self.rng.uniform() < cfg.image_delay_probability
                       and self._last_frame is not None)
            if use_old:
                delayed = self._last_frame
        self._last_frame = frame

        proprio = np.zeros(30)
        proprio[2] = self._last_v_cmd[2]       # base yaw rate
        proprio[3:6] = (0.0, 0.0, -1.0)        # projected gravity, level base
        return Observation(
            rgb=delayed,
            command=np.asarray(COLOR_COMMANDS[cfg.target_color], dtype=np.float64),
            last_action=self.state.last_action.copy(),
            proprioception=proprio,
        )


def scripted_policy(state, config, turn_gain=2.0, forward_fraction=0.9,
                    heading_gate=0.5):
    """Privileged proportional controller standing in for a trained policy.

    Turns toward the goal bearing; drives forward once the heading error
    is inside the gate. Outputs pre-tanh raw values that squash to the
    desired commands.
    """
    goal = state.goal_position
    bearing = np.arctan2(goal[1] - state.y, goal[0] - state.x)
    err = wrap_angle(bearing - state.yaw)
    v_max = np.asarray(config.v_max, dtype=np.float64)

    desired_yaw = np.clip(turn_gain * err, -0.95 * v_max[2], 0.95 * v_max[2])
    desired_x = forward_fraction * v_max[0] if abs(err) < heading_gate else 0.0

    ratios = np.array([desired_x / v_max[0], 0.0, desired_yaw / v_max[2]])
    return np.arctanh(np.clip(ratios, -0.999, 0.999))


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    reach_time: float        # seconds; horizon when failed
    total_reward: float


def run_episode(env, policy=scripted_policy, seed=None, log_path=None,
                frames_dir=None):
    """Roll one episode; optionally write a JSON-lines log and PNG frames."""
    from pathlib import Path

    from .images import save_png

    env.reset(seed=seed)
    cfg = env.config
    log_file = open(log_path, "w") if log_path else None
    if frames_dir:
        Path(frames_dir).mkdir(parents=True, exist_ok=True)

    total_reward = 0.0
    steps = 0
    success = False
    try:
        while True:
            action = policy(env.state, cfg)
            obs, breakdown, terminated, truncated = env.step(action)
            total_reward += breakdown.total
            steps += 1
            if log_file:
                record = {
                    "t": steps * cfg.dt,
                    "pose": [env.state.x, env.state.y, env.state.yaw, env.state.z],
                    "action": [float(a) for a in action],
                    "v_cmd": [float(v) for v in env._last_v_cmd],
                    "reward": breakdown.as_dict(),
                    "terminated": terminated,
                    "truncated": truncated,
                }
                log_file.write(json.dumps(record) + "\n")
            if frames_dir:
                save_png(obs.rgb, Path(frames_dir) / f"frame_{steps:04d}.png")
            if terminated:
                success = True
                break
            if truncated:
                break
    finally:
        if log_file:
            log_file.close()

    reach_time = steps * cfg.dt if success else cfg.horizon
    return EpisodeResult(success=success, steps=steps, reach_time=reach_time,
                         total_reward=total_reward)


@dataclass
class RolloutSummary:
    episodes: int
    success_rate: float
    average_reach_time: float   # failures counted at the full horizon

    def __str__(self):
        return (f"episodes={self.episodes} "
                f"success_rate={self.success_rate:.4f} "
                f"avg_reach_time_s={self.average_reach_time:.2f}")


def evaluate_policy(env, policy=scripted_policy, seeds=range(100)):
    """Success rate and average reaching time over seeded episodes."""
    results = [run_episode(env, policy, seed=seed) for seed in seeds]
    n = len(results)
    return RolloutSummary(
        episodes=n,
        success_rate=sum(r.success for r in results) / n,
        average_reach_time=sum(r.reach_time for r in results) / n,
    )
