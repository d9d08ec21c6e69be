"""Non-geometric rough paths (2 <= p < 3) on manifolds.

Flat rough integration and RDEs, connection-corrected integration on
charted manifolds, constrained (embedded) calculus, and parallel
transport / Cartan development for tangent-bundle connection lifts.
"""

from .rough_core import (
    TimeGrid,
    Control,
    RoughPath,
    AlmostRoughFunctional,
    validate_chen,
    bracket,
    geometrize,
    sew,
    restrict,
    concat,
)
from .controlled import (
    ControlledPath,
    one_form,
    rough_integral,
    young_integral,
    change_driver,
    pushforward_rough,
    pushforward_controlled,
    pullback,
    star,
    leibniz,
    kw_bracket_of_integral,
    associativity_check,
    pushpull_defect,
)
from .rde import VectorFieldFamily, RdeSolution, solve, solve_linear, transform_driver, joint_bracket
from . import geometry
from . import manifolds
from . import manifold_rough
from . import extrinsic
from . import transport
from . import stochastic

__all__ = [
    "TimeGrid", "Control", "RoughPath", "AlmostRoughFunctional",
    "validate_chen", "bracket", "geometrize", "sew", "restrict", "concat",
    "ControlledPath", "one_form", "rough_integral", "young_integral",
    "change_driver", "pushforward_rough", "pushforward_controlled",
    "pullback", "star", "leibniz", "kw_bracket_of_integral",
    "associativity_check", "pushpull_defect",
    "VectorFieldFamily", "RdeSolution", "solve", "solve_linear",
    "transform_driver", "joint_bracket",
    "geometry", "manifolds", "manifold_rough", "extrinsic", "transport",
    "stochastic",
]
