"""Tractable probability densities over variable-size, tree-structured,
heterogeneous JSON documents: exact log densities, exact marginals over
missing subtrees, gradient training, classification, and ancestral
sampling."""

from .builder import BuildConfig, block_input_count, block_sum_count, spsn_network
from .circuit import (Circuit, count_units, load_model, save_model, scope_of,
                      validate_structure)
from .errors import (ConflictingTypes, EmptyCorpus, MalformedJson,
                     MissingInDensityMode, NonFiniteGradient, SchemaViolation,
                     SpsnError, TooLarge)
from .inference import (classify, expectation, log_densities, log_density,
                        log_posteriors, marginal_log_density)
from .learn import TrainConfig, backward, fit, init_params
from .oracle import (brute_force_mass, finite_diff_grad, free_tree,
                     permutation_sweep)
from .sample import sample_corpus, sample_tree, sample_trees
from .schema import Schema, infer_schema, load_schema, save_schema
from .trees import (MISSING, DataTree, Het, Hom, Leaf, load_corpus,
                    mask_missing, parse_document, parse_value, save_corpus,
                    serialize_tree, validate_tree)

__version__ = "0.1.0"
