"""Swap norms, path tricks, product extraction, direct-sum/product testers and 3-AP tools."""
from .core import (Alphabet, BudgetError, DomainError, EXACT_DOMAIN_MAX, FunctionTable,
                   ProductFunction, ProductMeasure, Restriction, expectation, inner_product,
                   lp_norm, product_to_table, random_restriction, restrict)
from .norms import (NormEstimate, box_inner, swap, swap_inner, swap_inner_direct,
                    swap_inner_estimate, swap_inner_mc, swap_norm, swap_T)
from .tridist import TriDist, full_support_pipeline, pairwise_connected, path_trick, tri_correlation
from .extract import (best_product_correlation, extract_product_99, partition_svd,
                      peel_iterate, short_list)
from .bounded import to_bounded_product
from .testers import DPInstance, diamond_pass_prob, dp_recover_global
from .threeap import ConstraintSet, DenseSet, density_increment_step, find_valid_triple
from .store import load_store, save_store
from .experiments import ExperimentConfig, run_experiment

__version__ = "0.1.0"
