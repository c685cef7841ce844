"""Draft-then-verify (speculative) decoding over exactly checkable n-gram models."""
from .core import (BOS, EOS, MASK, ConfigError, CostModel, DecodeConfig, IterationRecord,
                   SpecDecError, Strategy, Vocabulary, rng_stream, validate_config)
from .decode import (DecodeResult, VerifyOutcome, ar_beam_decode, ar_greedy_decode, decode,
                     find_bifurcation, spec_verify, specdec_decode, vanilla_verify)
from .models import (DraftBlock, NgramModel, NoisyOracleDrafter, PositionScores,
                     SelfRolloutDrafter, draft_block_noisy_oracle, draft_block_selfrollout,
                     fit_ngram, greedy_rollout, next_distribution, perturbed_model,
                     random_model, score_positions_parallel)

__version__ = "0.1.0"
