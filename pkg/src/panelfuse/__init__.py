"""Panel fusion by exact bipartite minimum-cost flow.

Two weighted panel datasets representing the same universe are matched by
solving integer transportation problems: one dense graph (``fuse_single``)
or an iteratively relaxed partition of it (``fuse_iterative``).
"""

from .engine import (
    AssignmentPair,
    AssignmentSet,
    Cluster,
    IterationTrace,
    RelaxationSchedule,
    StageStats,
    balance_cluster,
    fuse_iterative,
    fuse_single,
    generate_assigned_pairs,
    partition,
    run_fusion,
    update_residuals,
)
from .errors import (
    AssignmentIntegrityError,
    ConfigError,
    CostOverflowError,
    InfeasibleFusionError,
    OracleCapError,
    PanelFormatError,
    PanelFuseError,
    QuantizationError,
    SchemaMismatchError,
    UniverseMismatchError,
)
from .flow import (
    Arc,
    FlowNetwork,
    FlowSolution,
    brute_force_mcf,
    solve_mcf,
    to_dimacs,
    verify_solution,
)
from .graph import (
    CostModel,
    FeatureSchema,
    PruneConfig,
    build_bipartite,
    count_arcs,
    default_prune_k,
    distance,
    normalize_features,
    prune_edges,
)
from .metrics import (
    FusionReport,
    SelfFusionReport,
    fusion_report,
    self_fusion_quality,
    synth_panel,
    synth_panels,
)
from .panels import (
    EngineConfig,
    Panel,
    Panelist,
    load_config,
    load_panel,
    quantize_weights,
    read_assignments,
    write_assignments,
    write_panel,
)

__version__ = "0.1.0"
