"""Length-controllable summarization: a word-level prototype extractor followed
by a prototype-guided copy-mixture encoder-decoder, built on a small numpy
autodiff library."""

from .config import RunConfig, load_config
from .corpus import Document, Vocabulary, synth_corpus
from .infer import summarize
from .labeler import LabeledExample, bin_length, label_corpus
from .prototype import Prototype, select_top_k
from .rouge import rouge_l, rouge_n

__version__ = "0.1.0"

__all__ = [
    "Document",
    "LabeledExample",
    "Prototype",
    "RunConfig",
    "Vocabulary",
    "bin_length",
    "label_corpus",
    "load_config",
    "rouge_l",
    "rouge_n",
    "select_top_k",
    "summarize",
    "synth_corpus",
]
