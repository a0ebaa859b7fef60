"""2D Helmholtz boundary-element solver with adaptive kernel-window sparsification.

Assembles the dense first-kind single-layer collocation matrix for
sound-soft scattering and sparsifies it by smoothly windowing the kernel.
Window locations are discovered adaptively from solution correlations, or
from a geometric visibility criterion, and refined in a frequency sweep.
"""

from sparsebem.geometry import (
    PlaneWave,
    PointSource,
    Superposition,
    Scene,
    ParamCurve,
    preset_scene,
    eval_incident,
)
from sparsebem.kernel import bessel, greens_function, KernelEval
from sparsebem.discretization import (
    Basis,
    Discretization,
    DenseSystem,
    discretize,
    assemble_matrix,
    assemble_rhs,
    assemble_system,
    evaluate_density,
)
from sparsebem.windows import (
    ElementaryWindow,
    CompoundWindow,
    WindowSet,
    eval_chi,
    merge_windows,
    eval_compound,
)
from sparsebem.sparse import SparseComplexMatrix
from sparsebem.solve import SolveReport, dense_solve, gmres, cond_estimate, sparse_matvec
from sparsebem.compression import (
    CorrelationConfig,
    CorrelationMatrix,
    SweepPlan,
    sliding_window,
    compute_correlations,
    windows_from_correlations,
    compress,
    assemble_compressed,
    block_window_truncation,
    recompression_sweep,
)
from sparsebem.visibility import VisibilityConfig, visible, illuminated, visibility_windows
from sparsebem.analysis import (
    MetricsRecord,
    scattered_field,
    boundary_residual,
    mie_density,
    sparsity_stats,
)

__version__ = "0.1.0"
