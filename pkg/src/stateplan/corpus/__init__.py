"""State-change description corpus: prompting, parsing, storage, featurisation."""

from .features import (
    DescriptionMemory,
    FeatureDimError,
    HashedBagOfWords,
    PrecomputedEmbeddings,
    canonical_texts,
    embed_corpus,
)
from .llm import LlmClient, LlmClientConfig, LlmError, mock_llm_generate
from .prompts import (
    APPENDIX_EXEMPLARS,
    Exemplar,
    ParseError,
    StepDescriptionSet,
    build_prompt,
    parse_llm_response,
    render_response,
    validate_descriptions,
)
from .store import (
    CorpusError,
    DescriptionCorpus,
    corpus_from_dict,
    corpus_to_dict,
    describe_steps,
    load_corpus,
    save_corpus,
)
