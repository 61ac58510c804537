"""Neural surface maps.

Surfaces and maps between them are small MLPs over a 2D domain. Maps are
overfit to mesh parameterizations, then composed and optimized to reduce
distortion while the represented geometry stays fixed.
"""

from .analytic import AnalyticSurface, exact_conformal_density, exact_dirichlet_density
from .composition import (
    CollectionHandle,
    SurfaceMapHandle,
    jacobian_of_f,
    jacobian_of_param,
    landmark_rotation,
    push_mesh_through,
)
from .domain import Domain
from .energies import EnergyWeights, conformal_density, dirichlet_density, mc_integrate
from .errors import NeuralMapsError
from .neuralmap import SURFACE_ARCH, WARP_ARCH, Architecture, NeuralMap, build, evaluate, load, save
from .optimize import (
    OptimizationTask,
    RunReport,
    WarmRestartSchedule,
    optimize_collection,
    optimize_parameterization,
    optimize_surface_map,
    overfit,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticSurface",
    "Architecture",
    "CollectionHandle",
    "Domain",
    "EnergyWeights",
    "NeuralMap",
    "NeuralMapsError",
    "OptimizationTask",
    "RunReport",
    "SURFACE_ARCH",
    "SurfaceMapHandle",
    "WARP_ARCH",
    "WarmRestartSchedule",
    "build",
    "conformal_density",
    "dirichlet_density",
    "evaluate",
    "exact_conformal_density",
    "exact_dirichlet_density",
    "jacobian_of_f",
    "jacobian_of_param",
    "landmark_rotation",
    "load",
    "mc_integrate",
    "optimize_collection",
    "optimize_parameterization",
    "optimize_surface_map",
    "overfit",
    "push_mesh_through",
    "save",
]
