"""Update-then-rank pipeline for keeping code comments in sync with code."""

from .augment import AugmentedGroup, CandidateComment, augment_dataset, build_group
from .data import CommentUpdateSample, load_dataset, save_dataset
from .flatten import EditOp, EditToken, FlattenedPair, Origin, flatten_sample, token_diff
from .llm import CompletionRequest, HttpChatBackend, MockBackend, ResponseCache
from .metrics import MetricReport, UpdateType, evaluate_corpus
from .pipeline import UpdateResult, run_update
from .prompt import PromptStrategy, build_update_prompt, normalize_llm_response
from .rank import DualEncoderRanker, RankerConfig, listwise_loss, rank_candidates, train
from .retrieve import ExampleIndex, build_index, top_k_similar
from .tokenize import HashEmbeddingProvider, provider_from_config

__version__ = "0.1.0"
