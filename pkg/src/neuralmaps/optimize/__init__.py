from .rmsprop import RMSPropState, WarmRestartSchedule, rmsprop_step
from .trainer import (
    OptimizationTask,
    RunReport,
    TrainerState,
    checksum,
    collection_densities,
    collection_stats,
    evaluation_points,
    evaluation_triangulation,
    optimize_collection,
    optimize_parameterization,
    optimize_surface_map,
    overfit,
    overfit_stats,
    overfit_terms,
    parameterization_density,
    parameterization_stats,
    surface_map_density,
    surface_map_stats,
    task_dict,
)

__all__ = [
    "OptimizationTask",
    "RMSPropState",
    "RunReport",
    "TrainerState",
    "WarmRestartSchedule",
    "checksum",
    "collection_densities",
    "collection_stats",
    "evaluation_points",
    "evaluation_triangulation",
    "optimize_collection",
    "optimize_parameterization",
    "optimize_surface_map",
    "overfit",
    "overfit_stats",
    "overfit_terms",
    "parameterization_density",
    "parameterization_stats",
    "rmsprop_step",
    "surface_map_density",
    "surface_map_stats",
    "task_dict",
]
