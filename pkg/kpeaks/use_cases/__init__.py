"""A module for all kpeaks use cases, one per subcommand."""
# fmt: off
from kpeaks.use_cases.defect_scan import run_defect_scan
from kpeaks.use_cases.energy_scan import run_energy_scan
from kpeaks.use_cases.limit_system import (
    build_limit, solve_ground_states, solve_limit_system,
)
from kpeaks.use_cases.pohozaev import run_pohozaev
from kpeaks.use_cases.reduce import ReductionRun, run_reduction
from kpeaks.use_cases.spectrum import run_coercivity, run_spectrum
# fmt: on
