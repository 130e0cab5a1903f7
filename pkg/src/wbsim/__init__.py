"""Fixed-step rigid-body simulation of floating-base robots on flat ground."""
from .actuation import ActuatorParams, apply_actuator_dynamics, joint_friction
from .contact import (ContactParams, ContactResult, ContactSolver, ContactVertex, contact_vertices,
                      detect_active_set, loop_closure_constraints, resolve_impacts, solve_contact_forces)
from .errors import (BadProblem, ConfigError, DimensionError, KinematicsError, NonFiniteState, OutputError,
                     ParseError, QPInfeasible, SimulationError, SingularMassMatrix, UnknownFrameError,
                     ValidationError, WbsimError)
from .kindyn import (KinDynQuantities, RobotState, bias_forces, compute_kindyn, forward_dynamics,
                     forward_kinematics, frame_bias_acceleration, frame_jacobian, inverse_dynamics,
                     kinetic_energy, mass_matrix, potential_energy)
from .model import RobotModel, load_model, load_model_file, validate_model
from .qpsolver import ActiveSetSolver, QpProblem, QpResult, QpStatus, solve_qp
from .stepper import OutputBus, SimConfig, Simulator, integrate_state, step

__version__ = "0.1.0"
