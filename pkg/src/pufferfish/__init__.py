"""Pufferfish privacy mechanisms for correlated data."""

from .core import (BinaryInterval, DistributionClass, FiniteSet, LaplaceSource,
                   LipschitzQuery, MarkovChainModel, MatrixSetAllInits,
                   MixingParams, NoisePlan, TransitionMatrix, builtin_query,
                   class_spec_to_json, laplace_sample, parse_class_spec,
                   sample_sequence, validate_chain)
from .discrete import (DiscreteDistribution, condition_renormalize,
                       max_divergence, robustness_delta,
                       symmetric_max_divergence, w_infinity,
                       w_infinity_oracle)
from .wasserstein import (GroupStructure, JointModel, conditional_output_dist,
                          group_sensitivity, wasserstein_mechanism,
                          wasserstein_scale)
from .quilt import (CompositionLedger, MarkovQuilt, brute_force_max_influence,
                    compose, exact_influence_all_inits, exact_max_influence,
                    minimal_quilt_set, mqm_exact, score)
from .approx import (MixingSummary, a_star, eigengap, influence_bound,
                     mixing_summary, mqm_approx, mqm_approx_fast,
                     stationary_distribution, time_reversal)
from .baselines import ChainSegmentation, entry_dp_scale, group_dp_scale
from .ingest import (BinSpec, DiscretizedSeries, EstimatedChain, LabelMap,
                     RawSeries, discretize, estimate_transition, load_csv)

__version__ = "0.1.0"
