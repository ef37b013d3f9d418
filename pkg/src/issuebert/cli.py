"""Command-line entry point: prep, build-vocab, train, eval, predict, serve.

Exit codes: 0 success, 2 usage/config/data error, 3 numerical failure.
Set ``ISSUEBERT_LOG`` (e.g. ``INFO``, ``DEBUG``) for log verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import threading
from dataclasses import dataclass, field
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import baseline, checkpoint, corpus, metrics, tokenizer
from . import model as M
from . import train as T
from .corpus import LABEL_NAMES
from .errors import ConfigError, DataError, IssueBertError, NonFiniteLossError

log = logging.getLogger("issuebert")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
MAX_REQUEST_BYTES = 1 << 20


# -- run config ---------------------------------------------------------------


@dataclass
class PathsConfig:
    train: str = "train.jsonl"
    validation: str = "validation.jsonl"
    vocab: str = "vocab.txt"
    output_dir: str = "runs"


@dataclass
class CorpusConfig:
    fraction: float = 0.8
    seed: int = corpus.DEFAULT_SEED
    stratified: bool = False


@dataclass
class TokenizerConfig:
    max_len: int = tokenizer.MAX_LEN


@dataclass
class EncoderSection:
    layers: int = 2
    hidden: int = 32
    heads: int = 4
    ff_dim: int | None = None
    init_seed: int = 0


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    train: T.TrainConfig = field(default_factory=T.TrainConfig)
    baseline: baseline.BowConfig = field(default_factory=baseline.BowConfig)

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("run config must be a JSON object")
        sections = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kwargs = {}
        for name, value in d.items():
            section_cls = sections[name].default_factory().__class__
            kwargs[name] = _section(section_cls, value, name)
        cfg = cls(**kwargs)
        if base is not None:
            for f in dataclasses.fields(cfg.paths):
                value = getattr(cfg.paths, f.name)
                setattr(cfg.paths, f.name, str((base / value) if not Path(value).is_absolute() else value))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, base=path.parent)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _section(section_cls, value: Any, name: str):
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(section_cls)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(sorted(unknown))}")
    try:
        return section_cls(**value)
    except TypeError as exc:
        raise ConfigError(f"bad section {name!r}: {exc}") from None


# -- predictors ---------------------------------------------------------------


class Predictor:
    """Uniform probability interface over either checkpoint type."""

    def __init__(self, path: str | Path, vocab_path: str | Path | None = None):
        self.path = Path(path)
        self.name = self.path.stem
        self.kind = checkpoint.model_type(path)
        if self.kind == M.MODEL_TYPE:
            self.model = M.load_checkpoint(path)
            vocab = tokenizer.load_vocab(vocab_path) if vocab_path else self.model.vocab
            if vocab is None:
                raise ConfigError(f"{path}: checkpoint carries no vocabulary; pass --vocab")
            if len(vocab) != self.model.config.vocab_size:
                raise DataError(
                    f"vocabulary has {len(vocab)} tokens but {path} expects {self.model.config.vocab_size}"
                )
            self.vocab = vocab
        elif self.kind == baseline.MODEL_TYPE:
            self.model = baseline.load_checkpoint(path)
        else:
            raise ConfigError(f"{path}: unknown model type {self.kind!r}")

    def proba(self, texts: Sequence[str]) -> np.ndarray:
        if self.kind == M.MODEL_TYPE:
            return M.predict_proba(self.model, self.vocab, list(texts))
        return baseline.predict_proba(self.model, list(texts))


def prediction_json(probs: np.ndarray) -> dict:
    return {
        "label": LABEL_NAMES[int(np.argmax(probs))],
        "probabilities": {name: float(p) for name, p in zip(LABEL_NAMES, probs)},
    }


def evaluate_predictor(pred: Predictor, examples: Sequence[corpus.CleanExample]) -> metrics.MetricsReport:
    probs = pred.proba([ex.text for ex in examples])
    cm = metrics.confusion(np.argmax(probs, axis=1).tolist(), [ex.label for ex in examples])
    return metrics.report(cm)


# -- commands -----------------------------------------------------------------


def cmd_prep(args) -> int:
    records = corpus.parse_csv(args.input)
    examples = [corpus.preprocess(r) for r in records]
    split = corpus.split(examples, args.fraction, args.seed, stratified=args.stratified)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    corpus.write_jsonl(split.train, out / "train.jsonl")
    corpus.write_jsonl(split.validation, out / "validation.jsonl")
    summary = {
        "train": corpus.class_counts(split.train),
        "validation": corpus.class_counts(split.validation),
        "total": corpus.class_counts(examples),
        "seed": args.seed,
        "fraction": args.fraction,
    }
    (out / "counts.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"{'class':<12} {'#train':>8} {'#validation':>12} {'#total':>8}")
    for name in LABEL_NAMES:
        print(f"{name:<12} {summary['train'][name]:>8} {summary['validation'][name]:>12} {summary['total'][name]:>8}")
    print(f"{'total':<12} {len(split.train):>8} {len(split.validation):>12} {len(examples):>8}")
    return EXIT_OK


def cmd_build_vocab(args) -> int:
    examples = corpus.read_jsonl(args.input)
    vocab = tokenizer.build_vocab([ex.text for ex in examples], args.size)
    vocab.save(args.output)
    print(f"wrote {len(vocab)} tokens to {args.output}")
    return EXIT_OK


class _EpochWriter:
    def __init__(self, path: Path):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")
        self._emit(T.LOG_HEADER)

    def _emit(self, line: str) -> None:
        print(line, flush=True)
        self.fh.write(line + "\n")
        self.fh.flush()

    def __call__(self, entry: T.EpochLog) -> None:
        self._emit(entry.csv())

    def close(self) -> None:
        self.fh.close()


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    train_set = corpus.read_jsonl(cfg.paths.train)
    val_set = corpus.read_jsonl(cfg.paths.validation)
    if not train_set or not val_set:
        raise DataError("train and validation data must both be non-empty")
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / f"{args.model}.ckpt"
    writer = _EpochWriter(out / f"{args.model}_log.csv")
    try:
        if args.model == "transformer":
            vocab = tokenizer.load_vocab(cfg.paths.vocab)
            enc = cfg.encoder
            config = M.EncoderConfig(
                layers=enc.layers,
                hidden=enc.hidden,
                heads=enc.heads,
                ff_dim=enc.ff_dim,
                vocab_size=len(vocab),
                max_positions=cfg.tokenizer.max_len,
            )
            model = M.init(config, enc.init_seed, vocab=vocab)
            split = corpus.DatasetSplit(train_set, val_set, cfg.corpus.seed, cfg.corpus.fraction)
            best, logs = T.train(model, split, vocab, cfg.train, on_epoch=writer)
            M.save_checkpoint(best, ckpt_path)
        else:
            logs = []

            def on_epoch(epoch, loss, bow):
                acc, _ = baseline.evaluate(bow, val_set)
                entry = T.EpochLog(epoch, loss, acc)
                logs.append(entry)
                writer(entry)

            bow = baseline.bow_train(train_set, cfg.baseline, on_epoch=on_epoch)
            baseline.save_checkpoint(bow, ckpt_path)
    finally:
        writer.close()
    chosen = T.best_epoch(logs) if args.model == "transformer" else logs[-1]
    print(f"best epoch {chosen.epoch}: validation accuracy {chosen.validation_accuracy:.4f}; checkpoint {ckpt_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    examples = corpus.read_jsonl(args.data)
    if not examples:
        raise DataError(f"{args.data}: no examples")
    reports = {}
    for path in args.checkpoint:
        pred = Predictor(path, args.vocab)
        name = pred.name if pred.name not in reports else str(path)
        reports[name] = evaluate_predictor(pred, examples)
    sys.stdout.write(metrics.render_report(reports, args.format))
    if args.format == "json":
        sys.stdout.write("\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    pred = Predictor(args.checkpoint, args.vocab)
    if args.input is None:
        texts = [args.text]
    else:
        texts = []
        with open(args.input, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    texts.append(_request_text(json.loads(line)))
                except (json.JSONDecodeError, ValueError) as exc:
                    raise DataError(f"{args.input}: line {line_no}: {exc}") from None
    for probs in pred.proba(texts):
        print(json.dumps(prediction_json(probs)))
    return EXIT_OK


def _request_text(obj: Any) -> str:
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    if "text" in obj:
        text = obj["text"]
    elif "title" in obj or "body" in obj:
        text = f"{obj.get('title', '')} {obj.get('body', '')}"
    else:
        raise ValueError("expected a 'text' field or 'title'/'body' fields")
    if not isinstance(text, str):
        raise ValueError("text fields must be strings")
    return corpus.normalize_text(text)


def make_server(pred: Predictor, host: str = "127.0.0.1", port: int = 8000) -> ThreadingHTTPServer:
    lock = threading.Lock()

    class Handler(BaseHTTPRequestHandler):
        def _send(self, status: int, body: dict | str) -> None:
            data = (json.dumps(body) if isinstance(body, dict) else body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json" if isinstance(body, dict) else "text/plain")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path == "/health":
                self._send(HTTPStatus.OK, "ok")
            else:
                self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})

        def do_POST(self):
            if self.path != "/predict":
                self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
            except ValueError:
                self._send(HTTPStatus.BAD_REQUEST, {"error": "bad Content-Length"})
                return
            if length > MAX_REQUEST_BYTES:
                # Drain a bounded amount so ordinary clients see the reply instead of a reset.
                remaining = min(length, 16 * MAX_REQUEST_BYTES)
                while remaining > 0:
                    chunk = self.rfile.read(min(remaining, 1 << 16))
                    if not chunk:
                        break
                    remaining -= len(chunk)
                self._send(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, {"error": f"body exceeds {MAX_REQUEST_BYTES} bytes"})
                self.close_connection = True
                return
            raw = self.rfile.read(length)
            try:
                obj = json.loads(raw.decode("utf-8"))
                if not isinstance(obj, dict) or not ({"title", "body"} & set(obj)):
                    raise ValueError("expected an object with 'title' and/or 'body'")
                text = _request_text({"title": obj.get("title", ""), "body": obj.get("body", "")})
            except (UnicodeDecodeError, ValueError) as exc:
                self._send(HTTPStatus.BAD_REQUEST, {"error": str(exc)})
                return
            # numpy releases the GIL; keep one forward pass at a time anyway.
            with lock:
                probs = pred.proba([text])[0]
            self._send(HTTPStatus.OK, prediction_json(probs))

        def log_message(self, fmt, *a):
            log.info("%s - " + fmt, self.address_string(), *a)

    return ThreadingHTTPServer((host, port), Handler)


def cmd_serve(args) -> int:
    server = make_server(Predictor(args.checkpoint, args.vocab), args.host, args.port)
    print(f"serving on http://{args.host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="issuebert", description="Issue type prediction toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="normalize a labeled CSV and split it into train/validation JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=corpus.DEFAULT_SEED)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--stratified", action="store_true")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("build-vocab", help="build a WordPiece vocabulary from JSONL text")
    p.add_argument("--input", required=True)
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--model", choices=("transformer", "baseline"), default="transformer")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one or two checkpoints")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict issue types")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--text")
    g.add_argument("--input", help="JSONL with 'text' or 'title'/'body' per line")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("serve", help="serve predictions over HTTP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = logging.getLevelName(os.environ.get("ISSUEBERT_LOG", "WARNING").upper())
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "eval" and len(args.checkpoint) > 2:
        print("error: eval takes one or two checkpoints", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IssueBertError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
