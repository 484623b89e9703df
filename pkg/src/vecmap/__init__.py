"""Hierarchical sparse map representation: geometry, matching, losses, fitting and evaluation."""

from .evaluation import ChamferParams, average_precision, chamfer_distance, map_score, match_instances
from .geometry import GeometryError, Polyline, Segment, midpoint_densify, rdp_simplify, resample_uniform
from .hsmr import (
    DensitySchedule,
    ElementCategory,
    MapElement,
    element_at_density,
    equivalent_permutations,
    ground_truth_pyramid,
)
from .losses import LossWeights, VertexRoleMask, focal_loss, polyline_loss
from .mapio import MapFile, MapFormatError, read_map, write_map
from .matching import Assignment, GroundTruthSet, PredictedElement, hungarian, match
from .refine import DivergenceError, FitConfig, densify_candidates, fit_layer, init_candidates, progressive_fit
from .scenegen import PerceptionRange, SceneSpec, clip_to_range, generate_scene, load_suite

__version__ = "0.1.0"
