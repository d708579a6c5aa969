"""Synchronous-machine model hierarchy on lossless networks.

High-order (flux-level) down to second-order (classical) machine models,
multi-machine assembly over inductive grids, the associated energy
functions, constant-structure (port-Hamiltonian) representations with
dissipation-matrix certificates, shifted-passivity verification along
trajectories, and a scenario-driven CLI.
"""

from .errors import (AssumptionError, EquilibriumError, GridError, MachnetError,
                     OrderError, ParameterError, ScenarioError, SimulationError)
from .params import (KAPPA, FundamentalParams, StandardParams, derive_standard,
                     margins_from_fundamentals, psd_timescale_check,
                     scaled_excitation, validate_standard)
from .frames import (frame_rotation, frame_rotation_dq, from_phasor, park,
                     rotate_phasor, to_phasor)
from .fullmachine import (FULL_STATE_VARS, FullInputs, FullState, flux_to_currents,
                          full_gradient, full_hamiltonian, full_ph_rhs, full_rhs,
                          full_structure, mechanical_power, mechanical_torque,
                          rotor_flux_from_emfs, subtransient_coordinates)
from .network import (ClassicalGrid, Grid, build_grid, classical_power,
                      dq_currents, dq_currents_phasor, node_and_line_power)
from .machines import (ORDER_BLOCKS, MachineInputs, MachineState, MultiMachine,
                       delta_omega, momentum, multimachine_rhs, single_rhs,
                       stack_inputs, terminal_voltage, unstack_inputs)
from .energy import (SystemState, d_axis_energy_from_flux, energy_components,
                     energy_gradient, energy_hessian, line_energy,
                     machine_electrical_energy, mechanical_energy,
                     q_axis_energy_from_flux, scaled_total_energy, total_energy)
from .ph import (Equilibrium, PassivityReport, PHSystem, ShiftedStorage, assemble,
                 find_equilibrium, machine_dissipation_blocks,
                 passivity_certificate, ph_rhs, quotient_hessian_eigenvalues,
                 schur_condition_blocks, shifted_storage, structure_matrices,
                 uniform_angle_direction)
from .sim import (MonitorResult, Trajectory, derivative_stencil,
                  dissipation_monitor, integrate, write_trajectory_csv)

__version__ = "0.1.0"
