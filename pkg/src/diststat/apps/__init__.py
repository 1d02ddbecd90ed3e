"""Statistical applications built on distmat and optim."""

from .cox import (
    CoxDataset,
    cox_data,
    cox_gradient,
    cox_l1,
    cox_lipschitz,
    cox_objective,
    log_partial_likelihood,
)
from .mcpi import mc_pi, uniform_square
from .mds import (
    MdsProblem,
    initial_embedding,
    mds_fit,
    mds_problem,
    mds_step,
    pairwise_distances,
    stress,
)
from .nmf import (
    NmfState,
    multiplicative_step,
    nmf_apg,
    nmf_loss,
    nmf_multiplicative,
    nmf_objective,
    nmf_problem,
)
from .pet import (
    PetProblem,
    difference_matrix,
    pet_mm_ridge,
    pet_objective,
    pet_pdhg_tv,
    pet_spdhg_tv,
    pet_system,
    pet_toy,
)

__all__ = [
    "CoxDataset", "MdsProblem", "NmfState", "PetProblem",
    "cox_data", "cox_gradient", "cox_l1", "cox_lipschitz", "cox_objective",
    "difference_matrix", "initial_embedding", "log_partial_likelihood", "mc_pi",
    "mds_fit", "mds_problem", "mds_step", "multiplicative_step", "nmf_apg", "nmf_loss",
    "nmf_multiplicative", "nmf_objective", "nmf_problem", "pairwise_distances",
    "pet_mm_ridge", "pet_objective", "pet_pdhg_tv", "pet_spdhg_tv", "pet_system",
    "pet_toy", "stress", "uniform_square",
]
