"""Tensor-network PCA for populations of symmetric weighted networks."""
from .decompose import (
    Tn4Decomposition,
    TnDecomposition,
    TuckerDecomposition,
    hooi_semisym,
    hosvd_semisym,
    rank_one_step,
    reconstruct,
    tn_pca,
    tn_pca_4mode,
)
from .tensor import (
    SemiSymmetricTensor,
    frobenius_norm,
    inner_product,
    mode_n_multiply,
    refold,
    symmetric_top_eigenvector,
    unfold,
)

__version__ = "0.1.0"
