"""Maximal clades in random binary search trees: exact tables, samplers and Monte Carlo."""
from .errors import (CapExceeded, CapTooLarge, ConfigMismatch, DegenerateSample, DomainError,
                     MaxCladesError, NonConvergence, TableTooShort)
from .exact import (ALPHA, ExactTables, FDist, abs_central_moment, alpha_closed, alpha_series,
                    build_cutoff_tables, build_f_dist, build_mu_nu, build_psi, central_moment,
                    chain_green_prob, ct_lambda_size_pmf, e_F_ct_lambda, e_f_ct_lambda,
                    e_fk_ct, e_fk_ct_lambda, expected_large_clades, expected_subtree_count,
                    expected_Zk, expected_Zk_approx, f_abs_moment, genfunc_residual,
                    kummer_1f1_unit, sum_f_abs_exact, var_F_exact, var_G_exact,
                    var_Gprime_exact, var_XN_exact)
from .functionals import (ChainCounts, CladeCensus, Decomposition, clade_census, count_chains,
                          count_F, count_F_small, decompose, is_green, maximal_green,
                          stream_functionals, sum_additive, toll_f, tree_functionals)
from .mc import (Diagnostics, MomentSummary, SimConfig, merge, normality, run_experiment,
                 tail_event_rate)
from .rng import RngStream
from .treegen import (BinaryTree, gen_bst_insert, gen_bst_split, sample_ct_clock,
                      sample_ct_size)

__version__ = "0.1.0"
