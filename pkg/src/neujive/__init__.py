"""Joint/individual/residual analysis of multi-block landmark shape data.

The pipeline aligns each block's landmark population, Euclideanizes the
pre-shapes through principal nested spheres, decomposes the resulting score
blocks into shared and block-specific variation, and pulls the components
back to landmark space for interpretation. Inference utilities cover the
mean-difference permutation test and repeated-holdout classification.
"""

from .ajive import (
    AngleThreshold,
    BlockDecomposition,
    EuclideanBlock,
    FixedRank,
    JointBasis,
    LowRankBlock,
    RandomDirection,
    decompose,
    low_rank_approx,
    principal_angles,
    scree_gap_rank,
    select_joint_rank,
)
from .inference import (
    DiProPermResult,
    HarnessConfig,
    HoldoutReport,
    LabeledScores,
    LinearClassifier,
    baseline_features,
    diproperm,
    holdout_harness,
    roc_auc,
    train_dwd,
)
from .pipeline import (
    NeujiveConfig,
    NeujiveResult,
    group_difference_map,
    neujive,
    neujive_on_spheres,
    pullback_points,
    pullback_scores,
)
from .pns import (
    PnsModel,
    fit_subsphere,
    pns_fit,
    pns_inverse,
    pns_scores,
)
from .preshape import (
    AlignedPopulation,
    LandmarkConfig,
    PreShape,
    gpa,
    optimal_rotation,
    to_preshape,
)
from .simulate import (
    CircleSimConfig,
    make_twogroup_blocks,
    simulate_circle_blocks,
    simulate_single_circle,
    synthetic_skull_population,
)
from .sphere import (
    Subsphere,
    exp_map,
    frechet_mean,
    geodesic_distance,
    log_map,
    project_to_subsphere,
    rotate_a_to_b,
    signed_residual,
)

__version__ = "0.1.0"
