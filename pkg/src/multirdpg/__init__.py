"""Multiple random dot product graph model: joint embedding, fitting and testing."""

from .graphs import (
    EdgeList,
    EdgeListError,
    LatentModel,
    downsample_edges,
    edge_probabilities,
    positive_part,
    read_edge_list,
    sample_graph,
    to_adjacency,
)
from .fit import (
    CommonLambdaFit,
    FitOptions,
    MultiRdpgFit,
    fit_common_lambda,
    fit_multi_rdpg,
    fit_rdpg_single,
    update_lambda,
    update_u,
)

__version__ = "0.1.0"
