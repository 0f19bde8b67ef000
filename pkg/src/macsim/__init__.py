"""Record-linkage accuracy assessment by Markov chain re-sampling of agreement arrays."""

from .analytics import AccuracyReport, bin_report, correct_relink, relink_samples
from .blocking import BlockingSpec, BlockSet, build_agreement, partition
from .core import (AgreementBlock, FieldParams, ParameterError, TernaryAgreement,
                   TransitionParams, transition_params, w_from_g)
from .estimation import estimate_params
from .kernel import (ChainConfig, SampleStream, chain_rng, distance, kernel_step, run_chain,
                     ternary_counts)
from .linker import LinkSet, cell_weight, composite_weights, greedy_link
from .samplefile import load_samples, save_samples

__version__ = "0.1.0"
