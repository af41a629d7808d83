"""Dengue host-vector dynamics under vaccination: simulation, reproduction
numbers and optimal vaccination control."""

from .control import (ControlGrid, ControlProblem, DirectConfig, NormalizationSpec, SolveReport,
                      SweepConfig, adjoint_rhs, compare_policies, denormalize, efficacy_sweep,
                      evaluate_cost, hamiltonian, normalize, project_control, solve_direct,
                      solve_indirect)
from .errors import ContractError, EpivaxError, IntegrationError, ViabilityError
from .models import (EpiParams, MassImperfect, MassPerfect, MassWaning, NoVaccine, Pediatric,
                     Scenario, SysState, disease_free_equilibrium, preset_scenario, rhs_controlled,
                     rhs_mass_imperfect, rhs_mass_perfect, rhs_mass_waning, rhs_pediatric, simulate)
from .ode import TimeGrid, Trajectory, integrate, integrate_backward, rk4_step
from .reproduction import (critical_mass_rate, critical_pediatric_coverage, peak, r0_baseline,
                           r0_family, r0_for_strategy, r0_imperfect, r0_mass, r0_pediatric,
                           r0_waning)
from .scenario_io import (load_scenario, parse_scenario, read_trajectory_csv, serialize_scenario,
                          write_trajectory_csv)

__version__ = "0.1.0"
