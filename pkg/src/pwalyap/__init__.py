"""Search for continuous piecewise-affine Lyapunov functions of piecewise-affine systems."""

from .engine import (AnalysisResult, IterationRecord, analyze, check_certificate, compare,
                     metrics, verify_certificate)
from .lp import SearchConfig, build_lp, extract_candidate, slack_cells, solve_lp
from .model import (AffineLaw, Cell, LyapunovCandidate, Partition, discrete_to_continuous,
                    ensure_origin_vertex, simulate_trajectory, validate_partition)
from .refinement import Strategy, apply_plan, assemble_plan, propose

__version__ = "0.1.0"

__all__ = [
    "AffineLaw", "AnalysisResult", "Cell", "IterationRecord", "LyapunovCandidate", "Partition",
    "SearchConfig", "Strategy", "analyze", "apply_plan", "assemble_plan", "build_lp",
    "check_certificate", "compare", "discrete_to_continuous", "ensure_origin_vertex",
    "extract_candidate", "metrics", "propose", "simulate_trajectory", "slack_cells", "solve_lp",
    "validate_partition", "verify_certificate",
]
