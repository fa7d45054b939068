"""Spectrum-ordered patch traversal with selective-scan blocks.

Pipeline: patchify an image with a rotation-normalized linear stem, build a
kNN Gaussian affinity graph over the patch features, take the m smallest
eigenvectors of its symmetric normalized Laplacian, and scan the patch
tokens along each eigenvector (ascending and descending) through diagonal
selective-scan blocks before scattering them back to the grid.
"""

from .backends import BACKEND
from .eigen import (
    EigConfig,
    EigReport,
    SpectralBasis,
    canonicalize_signs,
    dense_eig,
    lanczos_smallest,
    principal_angle_cosines,
)
from .flops import FlopCounter
from .graph import (
    GraphConfig,
    SparseSymMatrix,
    build_adjacency,
    build_graph,
    flatten_features,
    knn_neighbors,
    normalized_laplacian,
    sigma_estimate,
)
from .images import (
    ImageTensor,
    compose_turns,
    inverse_turn,
    read_ppm,
    rotate_grid,
    rotate_quarter,
    synth_two_cluster,
    synth_uniform,
    write_ppm,
)
from .patches import (
    FeatureMap,
    StemWeights,
    identity_stem,
    mean_stem,
    patchify,
    rotation_normalized_features,
)
from .pipeline import TraversalBuild, build_traversal
from .rng import Xorshift64Star
from .ssm import (
    DiscretizedParams,
    SsmParams,
    block_forward,
    conv_kernel,
    conv_scan,
    discretize_zoh,
    layer_norm,
    network_forward,
    recurrent_scan,
    selective_scan,
)
from .traversal import (
    MergeWeights,
    PoolIndexMap,
    TraversalPlan,
    apply_scan,
    averaging_merge,
    build_plan,
    downsample_plan,
    merge_scan,
    pool_indices,
    selector_merge,
)
from .weights import (
    BlockWeights,
    ModelConfig,
    ModelWeights,
    S6Weights,
    load_model_weights,
    parse_model_config,
    read_weight_file,
    render_model_config,
    save_model_weights,
    seeded_model_weights,
    write_weight_file,
)

__version__ = "0.1.0"
