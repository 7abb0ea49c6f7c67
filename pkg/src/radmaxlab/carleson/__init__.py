"""Carleson families and norms, the Carleson embedding, stopping times, paraproducts and test functions."""

from .families import (CarlesonFamily, EmbeddingReport, car_norm, carleson_embed_lhs, chain_family,
                       embedding_constant_experiment, random_family, read_family_csv, write_family_csv)
from .paraproducts import ParaproductReport, paraproduct, paraproduct_bound_experiment, sampled_function
from .stopping import StoppingDecomposition, stopping_decomposition
from .testfunctions import (AveragingCheck, EpsilonSweep, TestFunctionBundle, averaging_inequality, build_w_Q,
                            cutoff, epsilon_sweep, test_functions)

__all__ = [
    "AveragingCheck", "CarlesonFamily", "EmbeddingReport", "EpsilonSweep", "ParaproductReport",
    "StoppingDecomposition", "TestFunctionBundle", "averaging_inequality", "build_w_Q", "car_norm",
    "carleson_embed_lhs", "chain_family", "cutoff", "embedding_constant_experiment", "epsilon_sweep",
    "paraproduct", "paraproduct_bound_experiment", "random_family", "read_family_csv", "sampled_function",
    "stopping_decomposition", "test_functions", "write_family_csv",
]
