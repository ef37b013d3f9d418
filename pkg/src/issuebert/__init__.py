"""Issue type prediction (bug / enhancement / question) with a small
BERT-style encoder trained in numpy, plus a fastText-style baseline."""

from .corpus import CleanExample, IssueLabel, IssueRecord, normalize_text, parse_csv, preprocess, split
from .metrics import ConfusionMatrix, MetricsReport, class_metrics, confusion, micro_average, render_report
from .model import ClassifierModel, EncoderConfig, init, load_checkpoint, predict, save_checkpoint
from .tokenizer import Encoding, Vocabulary, build_vocab, encode, load_vocab, pre_tokenize
from .train import TrainConfig, adamw_step

__version__ = "0.1.0"
