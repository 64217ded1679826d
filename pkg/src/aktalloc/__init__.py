"""Equal-volume cell allocation for point configurations.

Builds cells by dyadic wall-moving transport on shifted lattices, averages
the origin's cell indicator over lattice shifts into a fractional weight
field, and purifies that field into a one-owner-per-cell allocation by
quota-limited nearest-first growth.  A statistics layer estimates diameter
tail decay and checks concentration bounds.
"""

from .fractional import (
    FractionalField,
    GridSpec,
    average_field,
    average_fields,
    l1_distance,
    periodicity_check,
    sample_shifts,
)
from .geometry import Cuboid, ShiftedLattice, diameter_with_anchor, lattice_cube_containing, volume
from .pointprocess import Configuration, palm, sample_binomial, sample_poisson
from .purify import PureAllocation, Region, compute_regions, grow_balls, purify_field, verify_quotas
from .stats import (
    DecayFit,
    TailStats,
    chernoff_bound,
    exact_poisson_two_sided_tail,
    fit_decay,
    sidelength_diagnostics,
    tail_sweep,
)
from .transport import (
    Cell,
    RunReport,
    StepRecord,
    initialize_cells,
    move_wall,
    origin_cell,
    run_akt,
    run_stage,
)

__version__ = "0.1.0"

__all__ = [
    "Cell",
    "Configuration",
    "Cuboid",
    "DecayFit",
    "FractionalField",
    "GridSpec",
    "PureAllocation",
    "Region",
    "RunReport",
    "ShiftedLattice",
    "StepRecord",
    "TailStats",
    "__version__",
    "average_field",
    "average_fields",
    "chernoff_bound",
    "compute_regions",
    "diameter_with_anchor",
    "exact_poisson_two_sided_tail",
    "fit_decay",
    "grow_balls",
    "initialize_cells",
    "l1_distance",
    "lattice_cube_containing",
    "move_wall",
    "origin_cell",
    "palm",
    "periodicity_check",
    "purify_field",
    "run_akt",
    "run_stage",
    "sample_binomial",
    "sample_poisson",
    "sample_shifts",
    "sidelength_diagnostics",
    "tail_sweep",
    "verify_quotas",
    "volume",
]
