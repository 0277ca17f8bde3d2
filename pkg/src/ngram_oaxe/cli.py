"""Command-line harness: ``ngram-oaxe {gen,train,eval,verify,bench,demo-figure1}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
Every command writes ``manifest.json`` into its ``--out`` directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import sys
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_INVALID, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    """Bad flags, config or input files (exit 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def write_manifest(out: Path, command: str, config: dict, seed, inputs, outputs) -> Path:
    from .model import atomic_write_text

    manifest = {
        "command": command,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": seed,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
    }
    path = out / "manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")
    return path


def _load_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return data


def _read_corpus(path):
    from .datagen import CorpusFormatError, read_jsonl

    try:
        return read_jsonl(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except CorpusFormatError as exc:
        raise UsageError(str(exc)) from None


# --- gen --------------------------------------------------------------------

def cmd_gen(args) -> int:
    from .datagen import CorpusConfig, gen_corpus, source_vocab, target_vocab, write_jsonl
    from .model import atomic_write_text

    base = _load_json(args.config) if args.config else {}
    flags = {"n_examples": args.examples, "n_phrases": args.phrases,
             "mode_count": args.modes, "seed": args.seed, "n_eval": args.eval_examples}
    merged = {**base, **{k: v for k, v in flags.items() if v is not None}}
    try:
        cfg = CorpusConfig(**merged)
        cfg.validate()
    except TypeError as exc:
        raise UsageError(f"bad corpus config: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    out = Path(args.out)
    params = dataclasses.asdict(cfg)
    train, evalset = gen_corpus(params.pop("n_examples"), params.pop("n_phrases"),
                                params.pop("mode_count"), params.pop("seed"), **params)
    paths = [out / "train.jsonl", out / "eval.jsonl", out / "vocab.json"]
    write_jsonl(train, paths[0])
    write_jsonl(evalset, paths[1])
    vocab = {"src": source_vocab(cfg.n_src_phrases).tokens, "tgt": target_vocab(cfg.n_tgt_tokens).tokens}
    atomic_write_text(paths[2], json.dumps(vocab) + "\n")
    write_manifest(out, "gen", dataclasses.asdict(cfg), cfg.seed, [], paths)
    print(f"wrote {len(train)} train and {len(evalset)} eval examples to {out}")
    return EXIT_OK


# --- train ------------------------------------------------------------------

def _vocabs_for(corpus_path: Path, corpus):
    """Vocabularies from a sibling vocab.json, else sized to cover the corpus ids."""
    from .core import Vocab
    from .datagen import source_vocab, target_vocab

    side = corpus_path.parent / "vocab.json"
    if side.exists():
        data = _load_json(side)
        try:
            return Vocab(data["src"]), Vocab(data["tgt"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{side}: malformed vocabulary ({exc})") from None
    max_src = max(max(ex.src) for ex in corpus)
    max_tgt = max(max(list(ex.target) + [t for r in ex.refs for t in r]) for ex in corpus)
    return source_vocab(max(max_src - 2, 1)), target_vocab(max(max_tgt - 1, 1))


def _check_ids(corpus, src_vocab, tgt_vocab, where) -> None:
    for i, ex in enumerate(corpus, 1):
        if max(ex.src, default=0) >= src_vocab.size:
            raise UsageError(f"{where}: example {i} has source id {max(ex.src)} outside "
                             f"the source vocabulary of size {src_vocab.size}")
        toks = list(ex.target) + [t for r in ex.refs for t in r]
        if max(toks, default=0) >= tgt_vocab.size:
            raise UsageError(f"{where}: example {i} has target id {max(toks)} outside "
                             f"the target vocabulary of size {tgt_vocab.size}")


def cmd_train(args) -> int:
    from .model import DivergenceError, TrainConfig, atomic_write_text, save_checkpoint, train

    base = _load_json(args.config) if args.config else {}
    flags = {"loss_kind": args.loss, "n": args.n, "margin": args.pi,
             "pretrain_steps": args.pretrain, "steps": args.steps, "seed": args.seed,
             "batch_size": args.batch_size, "lr": args.lr}
    merged = {**base, **{k: v for k, v in flags.items() if v is not None}}
    if merged.get("loss_kind") == "oaxe" and "n" not in merged:
        merged["n"] = 1
    try:
        cfg = TrainConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training config: {exc}") from None
    if cfg.loss_kind == "oaxe" and cfg.n != 1:
        raise UsageError("--loss oaxe is the n = 1 case; drop --n or use --loss ngram_oaxe")

    train_path = Path(args.train)
    corpus = _read_corpus(train_path)
    if not corpus:
        raise UsageError(f"{train_path}: no examples")
    src_vocab, tgt_vocab = _vocabs_for(train_path, corpus)
    _check_ids(corpus, src_vocab, tgt_vocab, train_path)

    out = Path(args.out)
    ckpt, hist = out / "checkpoint.json", out / "history.csv"
    config = dataclasses.asdict(cfg)

    def progress(step, value, keep):
        if args.log_every and (step + 1) % args.log_every == 0:
            print(f"step {step + 1}/{cfg.steps} loss {value:.4f} keep {keep:.3f}", flush=True)

    try:
        params, history = train(cfg, corpus, src_vocab_size=src_vocab.size,
                                tgt_vocab_size=tgt_vocab.size, on_step=progress)
    except DivergenceError as exc:
        atomic_write_text(hist, exc.history.to_csv())
        write_manifest(out, "train", {**config, "status": "diverged", "diverged_at": exc.step},
                       cfg.seed, [train_path], [hist])
        print(f"error: training diverged: {exc}; partial history in {hist}", file=sys.stderr)
        return EXIT_FAILURE
    save_checkpoint(ckpt, params, cfg, src_vocab, tgt_vocab)
    atomic_write_text(hist, history.to_csv())
    write_manifest(out, "train", config, cfg.seed, [train_path], [ckpt, hist])
    final = history.loss[-1] if history.loss else float("nan")
    print(f"trained {cfg.steps} steps ({cfg.loss_kind}, n={cfg.n}, pi={cfg.margin}); "
          f"final loss {final:.4f}; checkpoint {ckpt}")
    return EXIT_OK


# --- eval -------------------------------------------------------------------

def cmd_eval(args) -> int:
    from .core import pad_batch
    from .metrics import evaluate
    from .model import atomic_write_text, decode, load_checkpoint

    try:
        params, cfg, src_vocab, tgt_vocab = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise UsageError(f"cannot read {args.checkpoint}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{args.checkpoint}: bad checkpoint ({exc})") from None

    corpus_path = Path(args.corpus)
    corpus = _read_corpus(corpus_path)
    if not corpus:
        raise UsageError(f"{corpus_path}: no examples")
    side = corpus_path.parent / "vocab.json"
    if side.exists() and src_vocab is not None:
        data = _load_json(side)
        if data.get("src") != src_vocab.tokens or data.get("tgt") != tgt_vocab.tokens:
            raise UsageError(f"vocabulary mismatch: {side} differs from the checkpoint's vocabulary")
    from .datagen import source_vocab, target_vocab

    sv = src_vocab or source_vocab(params.src_vocab_size - 3)
    tv = tgt_vocab or target_vocab(params.tgt_vocab_size - 2)
    try:
        _check_ids(corpus, sv, tv, corpus_path)
    except UsageError as exc:
        raise UsageError(f"vocabulary mismatch: {exc}") from None
    too_long = [i for i, ex in enumerate(corpus, 1) if len(ex.target) > params.max_len]
    if too_long:
        raise UsageError(f"{corpus_path}: example {too_long[0]} is longer than the model's "
                         f"{params.max_len} positions")

    src, _ = pad_batch([list(ex.src) for ex in corpus])
    lengths = [len(ex.target) for ex in corpus]
    outputs = decode(params, src, lengths, dedup_output=args.dedup)
    report = evaluate(outputs, [list(ex.refs) for ex in corpus])
    out = Path(args.out)
    path = out / "report.json"
    atomic_write_text(path, report.to_json())
    write_manifest(out, "eval", {"dedup": args.dedup, "checkpoint": str(args.checkpoint)},
                   cfg.seed if cfg else None, [args.checkpoint, corpus_path], [path])
    p = report.ngram_precision
    print(f"examples {report.n_examples}  repetition {report.repetition_rate:.4f}  "
          f"p1 {p['1']}  p2 {p['2']}  mode-match {report.mode_match_rate:.4f}")
    return EXIT_OK


# --- verify -----------------------------------------------------------------

def cmd_verify(args) -> int:
    from . import verify
    from .model import atomic_write_text

    if args.size is not None and not 2 <= args.size <= 9:
        raise UsageError("--size must be in [2, 9] (brute force enumerates all permutations)")
    if args.trials is not None and args.trials < 1:
        raise UsageError("--trials must be >= 1")
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    out = Path(args.out)
    failed = None
    summary = {}
    for name in names:
        res = verify.run(name, args.trials, args.size, args.seed)
        summary[name] = {"passed": res.passed, "total": res.total}
        status = "ok" if res.ok else "FAIL"
        print(f"{name:<11} {res.passed}/{res.total} {status}")
        if not res.ok and failed is None:
            failed = res
    outputs = []
    if failed is not None:
        path = out / "counterexample.json"
        atomic_write_text(path, json.dumps({"suite": failed.name, **failed.counterexample},
                                           indent=2, default=float) + "\n")
        outputs.append(path)
        print(f"first counterexample ({failed.name}) written to {path}", file=sys.stderr)
    write_manifest(out, "verify", {"suite": args.suite, "trials": args.trials, "size": args.size,
                                   "results": summary}, args.seed, [], outputs)
    return EXIT_OK if failed is None else EXIT_FAILURE


# --- bench ------------------------------------------------------------------

def cmd_bench(args) -> int:
    from . import assignment, bench
    from .model import atomic_write_text

    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    backend = args.backend or assignment.BACKEND
    if backend not in assignment.available_backends():
        raise UsageError(f"backend {backend!r} unavailable; have {assignment.available_backends()}")
    rows = bench.run(reps=args.reps, backend=backend, seed=args.seed)
    out = Path(args.out)
    path = out / "bench.csv"
    atomic_write_text(path, bench.to_csv(rows))
    ratio = bench.overhead_ratio(rows)
    slope = bench.loglog_slope(rows)
    write_manifest(out, "bench", {"reps": args.reps, "backend": backend,
                                  "overhead_ratio_n2_n1": ratio, "hungarian_loglog_slope": slope},
                   args.seed, [], [path])
    print(f"{'n':>2} {'len':>4} {'batch':>5} {'loss_ms':>9} {'hung_ms':>9}")
    for r in rows:
        print(f"{r['n']:>2} {r['length']:>4} {r['batch']:>5} "
              f"{1e3 * r['loss_median_s']:>9.3f} {1e3 * r['hungarian_median_s']:>9.3f}")
    print(f"backend {backend}; N=2/N=1 loss time at I=32,B=32: {ratio:.3f}; "
          f"hungarian log-log slope (N=1,B=32): {slope:.2f}")
    return EXIT_OK


# --- demo-figure1 -----------------------------------------------------------

def cmd_demo(args) -> int:
    from . import figure1
    from .model import atomic_write_text

    if not 0.0 <= args.pi <= 1.0:
        raise UsageError(f"--pi must be in [0, 1], got {args.pi}")
    result = figure1.run(args.pi)
    print(figure1.format_report(result).rstrip("\n"))
    out = Path(args.out)
    path = out / "figure1.json"
    atomic_write_text(path, json.dumps(result, indent=2) + "\n")
    write_manifest(out, "demo-figure1", {"pi": args.pi}, None, [], [path])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ngram-oaxe", description="ngram order-agnostic cross entropy toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic multimodal corpus")
    g.add_argument("--examples", type=int, help="training examples (default 2000)")
    g.add_argument("--phrases", type=int, help="phrases per example (default 3)")
    g.add_argument("--modes", type=int, help="orderings per example (default 2)")
    g.add_argument("--eval-examples", type=int, help="held-out examples (default 500)")
    g.add_argument("--seed", type=int)
    g.add_argument("--config", help="JSON file of corpus settings; flags take precedence")
    g.add_argument("--out", default="runs/gen")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the toy model")
    t.add_argument("--train", required=True, help="training corpus (JSON lines)")
    t.add_argument("--loss", choices=("xe", "oaxe", "ngram_oaxe"))
    t.add_argument("--n", type=int, help="ngram size")
    t.add_argument("--pi", type=float, help="truncation margin in [0, 1]; 0 disables")
    t.add_argument("--pretrain", type=int, help="XE warm-up steps")
    t.add_argument("--steps", type=int, help="total update steps")
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--config", help="JSON file of training settings; flags take precedence")
    t.add_argument("--log-every", type=int, default=0, metavar="K")
    t.add_argument("--out", default="runs/train")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="decode a corpus and score it")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--dedup", type=_bool, default=False, metavar="{true,false}")
    e.add_argument("--out", default="runs/eval")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="run randomized oracle checks")
    v.add_argument("--suite", default="all",
                   choices=("all", "hungarian", "reduction", "oracle", "gradient",
                            "truncation", "figure1"))
    v.add_argument("--trials", type=int)
    v.add_argument("--size", type=int, help="largest matrix or sentence size to enumerate")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default="runs/verify")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="time loss evaluation across n, length and batch")
    b.add_argument("--reps", type=int, default=30)
    b.add_argument("--backend", choices=("cython", "python"))
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="runs/bench")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("demo-figure1", help="walk through the five-token bigram example")
    d.add_argument("--pi", type=float, default=0.15)
    d.add_argument("--out", default="runs/demo-figure1")
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001 - last-resort reporting for the CLI contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
