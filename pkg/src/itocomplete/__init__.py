"""Hierarchical-block completion of input-to-output matrices and conductivity reconstruction."""
from .completion import (CompletionConfig, coherence, coherence_report, complete_block, complete_ito_matrix,
                         delocalization, success_ratio_sweep)
from .fem import ConductivityField, GridSpec, ItoMatrix, StiffnessSystem, assemble_dtn, boundary_project, jacobian_dtn
from .hpartition import BlockPartition, build_partition, epsilon_rank, rank_survey
from .inversion import InversionConfig, MisfitTarget, compare_reconstructions, gauss_newton, misfit
from .sampling import BudgetRule, SamplingMask, build_mask

__version__ = "0.1.0"
