"""Deterministic 2D tabletop swarm simulator and control library."""

from .analysis import compute_metrics, metrics, plotdata, read_trajectory
from .bus import Bus, TopicPath, aggregate_matrix
from .controllers import (FormationSpec, SwarmConfig, collision_avoidance, formation_step,
                          polygon_offsets, position_controller, rendezvous_step,
                          sound_rendezvous_step)
from .errors import (ConfigError, RuntimeViolation, SwarmbedError, TrajectoryParseError)
from .kinematics import (Pose2D, RobotParams, Twist, WheelSpeeds, forward_kinematics,
                         inverse_kinematics, saturate_twist)
from .odometry import EncoderState, OdometryEstimate, integrate_pose_exact, update_odometry
from .runner import run, run_config
from .scenario import resolve
from .sim import Simulation

__version__ = "0.1.0"
