"""Mesh ingestion, Tutte embedding and the piecewise-linear ground-truth map."""

from .obj import load_obj, read_obj, write_obj
from .plmap import (
    DomainSamples,
    PLMap,
    evaluate_pl,
    keypoint_preimage,
    locate,
    sample_domain,
    signed_areas,
    tutte_embed,
)
from .trimesh import TriMesh, boundary_loops, make_mesh, validate_disk

__all__ = [
    "DomainSamples",
    "PLMap",
    "TriMesh",
    "boundary_loops",
    "evaluate_pl",
    "keypoint_preimage",
    "load_obj",
    "locate",
    "make_mesh",
    "read_obj",
    "sample_domain",
    "signed_areas",
    "tutte_embed",
    "validate_disk",
    "write_obj",
]
