"""Crossdock door assignment: exact and memetic optimisation of door
assignments, plus a discrete-event simulation of the dock for simulation
optimisation under noise."""

__version__ = "0.1.0"

from .instance import (  # noqa: E402
    Instance,
    InstanceError,
    LayoutSpec,
    ParseError,
    figure1_instance,
    generate_from_layout,
    generate_random,
    read_instance,
    write_instance,
)
from .objective import (  # noqa: E402
    Assignment,
    FeasibilityError,
    MoveError,
    RelocateDestination,
    RelocateOrigin,
    SwapDestinations,
    SwapOrigins,
    apply,
    evaluate,
    evaluate_move_delta,
    random_assignment,
)
from .exact import BudgetExceeded, ExactResult, solve_exact  # noqa: E402
from .memetic import (  # noqa: E402
    FitnessFunction,
    MemeticConfig,
    SolveReport,
    TravelCostFitness,
    crossover,
    local_search,
    mutate,
    solve_memetic,
    solve_random_restart,
)
from .des import SimConfig, SimResult, UnloadTime, estimate_cost, simulate  # noqa: E402
from .simopt import SimOptConfig, SimOptReport, SimulationFitness, solve_simopt  # noqa: E402
