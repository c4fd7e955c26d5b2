"""Command-line pipelines: convert, train, generate, eval-gen, embed, eval-prop.

Configuration is a flat key=value file overridden by repeated --set flags;
every command echoes its fully resolved configuration for provenance. Exit
codes: 0 ok, 1 domain failure, 2 I/O error, 3 configuration error.

Heavy imports happen inside main() so --threads can pin BLAS pools before
numpy loads (required for bit-reproducible runs).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2
EXIT_CONFIG = 3

_MODEL_KEYS = ("d_model", "n_heads", "encoder_layers", "decoder_layers", "ff_width", "max_len", "dropout")
_TRAIN_KEYS = ("steps", "batch_size", "peak_lr", "warmup_frac", "beta1", "beta2", "eps",
               "mask_rate", "checkpoint_interval", "seed", "dtype")


class ConfigError(ValueError):
    pass


def _parse_kv(text: str, source: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"{source}: expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def load_config(path: str | None, overrides: list[str]) -> dict[str, str]:
    config: dict[str, str] = {}
    if path:
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config file: {exc}") from exc
        for lineno, line in enumerate(lines, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, value = _parse_kv(line, f"{path}:{lineno}")
            config[key] = value
    for item in overrides or []:
        key, value = _parse_kv(item, "--set")
        config[key] = value
    return config


def echo_config(config: dict[str, str], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={config[k]}" for k in sorted(config)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _coerce(config: dict[str, str], key: str, default, kind):
    if key not in config:
        return default
    try:
        if kind is bool:
            return config[key].lower() in ("1", "true", "yes")
        return kind(config[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moldae", description=__doc__.split("\n")[0])
    parser.add_argument("--threads", type=int, default=1, help="BLAS/OMP thread count (1 = reproducible)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert between SMILES and SELFIES, line by line")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--direction", choices=("smiles-to-selfies", "selfies-to-smiles"),
                   default="smiles-to-selfies")
    p.add_argument("--lenient", action="store_true", help="exit 0 even with rejected lines")

    p = sub.add_parser("make-corpus", help="write a seeded random molecule corpus (SMILES lines)")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--min-atoms", type=int, default=3)
    p.add_argument("--max-tokens", type=int, default=40)

    p = sub.add_parser("train", help="build vocabulary and run denoising training")
    p.add_argument("--corpus", required=True, help="SELFIES file, one molecule per line")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--f64", action="store_true", help="train in float64 (gradient-check precision)")

    p = sub.add_parser("generate", help="sample molecules from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-len", type=int, default=None)

    p = sub.add_parser("eval-gen", help="generation metrics for a SELFIES file")
    p.add_argument("--generated", required=True, help="SELFIES file, one per line")
    p.add_argument("--training-canon", required=True, help="SMILES file with the training set")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k", type=int, default=None, help="unique@k window (default: set size)")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--width", type=int, default=1024)

    p = sub.add_parser("embed", help="write one embedding row per input SMILES line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lenient", action="store_true")

    p = sub.add_parser("eval-prop", help="property-prediction probe over frozen embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--dataset", required=True, help="CSV with smiles + label columns")
    p.add_argument("--manifest", required=True, help="task manifest (key=value)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    return parser


def cmd_convert(args) -> int:
    from .canon import write_smiles
    from .graph import GraphError
    from . import selfies
    from .smiles import SmilesParseError, parse_smiles

    out_path = Path(args.output)
    rejects: list[str] = []
    try:
        lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    out_lines: list[str] = []
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text:
            out_lines.append("")
            continue
        try:
            if args.direction == "smiles-to-selfies":
                out_lines.append(selfies.join_tokens(selfies.encode(parse_smiles(text))))
            else:
                graph = selfies.decode(selfies.split_selfies(text))
                if not len(graph):
                    raise GraphError("decodes to the empty molecule")
                out_lines.append(write_smiles(graph))
        except (SmilesParseError, GraphError, selfies.SelfiesError, selfies.EncodeError) as exc:
            rejects.append(f"{lineno}\t{exc}")
            out_lines.append("")
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text("\n".join(out_lines) + ("\n" if out_lines else ""), encoding="utf-8")
        Path(str(out_path) + ".rejects").write_text(
            "\n".join(rejects) + ("\n" if rejects else ""), encoding="utf-8")
        echo_config(
            {"command": "convert", "input": args.input, "output": args.output,
             "direction": args.direction, "lenient": str(args.lenient).lower()},
            Path(str(out_path) + ".config.txt"))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"converted {len(lines) - len(rejects)}/{len(lines)} lines, {len(rejects)} rejected")
    return EXIT_OK if (not rejects or args.lenient) else EXIT_DOMAIN


def cmd_make_corpus(args) -> int:
    from .corpus import sample_corpus

    molecules = sample_corpus(args.n, args.seed, args.min_atoms, args.max_tokens)
    try:
        path = Path(args.output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(molecules) + "\n", encoding="utf-8")
        echo_config(
            {"command": "make-corpus", "n": str(args.n), "seed": str(args.seed),
             "min_atoms": str(args.min_atoms), "max_tokens": str(args.max_tokens)},
            Path(str(path) + ".config.txt"))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(molecules)} molecules to {args.output}")
    return EXIT_OK


def _resolved_model_config(config: dict[str, str], vocab_size: int):
    from .model import ModelConfig

    return ModelConfig(
        vocab_size=vocab_size,
        d_model=_coerce(config, "d_model", 128, int),
        n_heads=_coerce(config, "n_heads", 4, int),
        encoder_layers=_coerce(config, "encoder_layers", 2, int),
        decoder_layers=_coerce(config, "decoder_layers", 2, int),
        ff_width=_coerce(config, "ff_width", 512, int),
        max_len=_coerce(config, "max_len", 128, int),
        dropout=_coerce(config, "dropout", 0.0, float),
    ).validate()


def cmd_train(args) -> int:
    from .model import ModelConfigError
    from .selfies import SelfiesError, split_selfies
    from .tokenizer import build_vocab, save_vocab
    from .training import TrainSettings, TrainingDivergedError, train

    config = load_config(args.config, args.set)
    if args.f64:
        config["dtype"] = "float64"
    unknown = set(config) - set(_MODEL_KEYS) - set(_TRAIN_KEYS)
    if unknown:
        print(f"error: unknown config keys {sorted(unknown)}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out_dir)
    try:
        lines = [ln.strip() for ln in Path(args.corpus).read_text(encoding="utf-8").splitlines()]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        token_stream = [split_selfies(ln) for ln in lines if ln]
        vocab = build_vocab(token_stream)
        model_config = _resolved_model_config(config, len(vocab))
        settings = TrainSettings(
            steps=_coerce(config, "steps", 1000, int),
            batch_size=_coerce(config, "batch_size", 32, int),
            peak_lr=_coerce(config, "peak_lr", 3e-4, float),
            warmup_frac=_coerce(config, "warmup_frac", 0.05, float),
            beta1=_coerce(config, "beta1", 0.9, float),
            beta2=_coerce(config, "beta2", 0.999, float),
            eps=_coerce(config, "eps", 1e-8, float),
            mask_rate=_coerce(config, "mask_rate", 0.15, float),
            checkpoint_interval=_coerce(config, "checkpoint_interval", 0, int),
            seed=_coerce(config, "seed", 0, int),
            dtype=_coerce(config, "dtype", "float32", str),
        )
    except (ModelConfigError, ConfigError, SelfiesError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir.mkdir(parents=True, exist_ok=True)
    save_vocab(vocab, out_dir / "vocab.txt")
    resolved = {k: str(v) for k, v in {
        **{key: getattr(model_config, key) for key in _MODEL_KEYS},
        **{key: getattr(settings, key) for key in _TRAIN_KEYS},
        "vocab_size": len(vocab), "corpus": args.corpus,
    }.items()}
    echo_config(resolved, out_dir / "config_resolved.txt")
    try:
        _, log = train(args.corpus, vocab, model_config, settings,
                       out_dir=out_dir, resume_from=args.resume)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    last = log.steps[-1] if log.steps else None
    if last is not None:
        print(f"trained {len(log.steps)} steps; final loss {last.loss:.4f}, "
              f"masked accuracy {last.masked_acc:.3f}; skipped {log.skipped_too_long} over-length")
    return EXIT_OK


def cmd_generate(args) -> int:
    from .genmetrics import generate_set
    from .tokenizer import load_vocab
    from .training import load_meta, load_params

    try:
        config, params = load_params(args.checkpoint)
        meta = load_meta(args.checkpoint)
        vocab = load_vocab(args.vocab)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    generated = generate_set(params, config, vocab, args.n, args.seed,
                             temperature=args.temperature, max_len=args.max_len,
                             checkpoint_id=Path(args.checkpoint).name,
                             length_hist=meta.get("meta.length_hist"))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "generated.selfies").write_text("\n".join(generated.raw) + "\n", encoding="utf-8")
    (out_dir / "generated.smiles").write_text(
        "\n".join(c or "" for c in generated.canonical) + "\n", encoding="utf-8")
    echo_config({"command": "generate", "checkpoint": args.checkpoint, "vocab": args.vocab,
                 "n": str(args.n), "seed": str(args.seed), "temperature": str(args.temperature),
                 "max_len": str(args.max_len)}, out_dir / "config_resolved.txt")
    n_valid = len(generated.valid())
    print(f"generated {args.n} sequences; {n_valid} non-empty molecules")
    return EXIT_OK


def cmd_eval_gen(args) -> int:
    from .genmetrics import GeneratedSet, MetricsError, build_report
    from .graph import GraphError
    from . import selfies
    from .canon import canonicalize
    from .smiles import SmilesParseError, parse_smiles

    try:
        gen_lines = Path(args.generated).read_text(encoding="utf-8").splitlines()
        train_lines = Path(args.training_canon).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    raw: list[str] = []
    canon: list[str | None] = []
    for line in gen_lines:
        text = line.strip()
        raw.append(text)
        if not text:
            canon.append(None)
            continue
        try:
            graph = selfies.decode(selfies.split_selfies(text))
            canon.append(canonicalize(graph) if len(graph) else None)
        except selfies.SelfiesError:
            canon.append(None)
    training_canon: set[str] = set()
    for line in train_lines:
        text = line.strip()
        if not text:
            continue
        try:
            training_canon.add(canonicalize(parse_smiles(text)))
        except (SmilesParseError, GraphError) as exc:
            print(f"error: training-canon line {text!r}: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
    try:
        report = build_report(GeneratedSet(tuple(raw), tuple(canon)), training_canon,
                              k=args.k, radius=args.radius, width=args.width)
    except MetricsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "generation_report.json").write_text(report.to_json(), encoding="utf-8")
    echo_config({"command": "eval-gen", "generated": args.generated,
                 "training_canon": args.training_canon, "k": str(report.k),
                 "radius": str(args.radius), "width": str(args.width)},
                out_dir / "config_resolved.txt")
    print(report.to_table())
    return EXIT_OK


def cmd_embed(args) -> int:
    from .graph import GraphError
    from .model import embed
    from . import selfies
    from .smiles import SmilesParseError, parse_smiles
    from .tokenizer import encode_ids, load_vocab
    from .training import load_params

    try:
        config, params = load_params(args.checkpoint)
        vocab = load_vocab(args.vocab)
        in_fh = open(args.input, encoding="utf-8")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    rejects: list[str] = []
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with in_fh, open(out_path, "w", encoding="utf-8") as out_fh:
        for lineno, line in enumerate(in_fh, 1):
            text = line.strip()
            if not text:
                out_fh.write("\n")
                continue
            try:
                ids = encode_ids(selfies.encode(parse_smiles(text)), vocab)
                vector = embed(params, config, ids)
                out_fh.write(",".join(f"{x:.8g}" for x in vector) + "\n")
            except (SmilesParseError, GraphError, selfies.EncodeError, ValueError) as exc:
                rejects.append(f"{lineno}\t{exc}")
                out_fh.write("\n")
    Path(str(out_path) + ".rejects").write_text(
        "\n".join(rejects) + ("\n" if rejects else ""), encoding="utf-8")
    echo_config({"command": "embed", "checkpoint": args.checkpoint, "vocab": args.vocab,
                 "input": args.input, "output": args.output,
                 "lenient": str(args.lenient).lower()}, Path(str(out_path) + ".config.txt"))
    print(f"embedded with {len(rejects)} rejects")
    return EXIT_OK if (not rejects or args.lenient) else EXIT_DOMAIN


def cmd_eval_prop(args) -> int:
    from .propeval import DatasetError, TaskManifest, evaluate_dataset, load_dataset
    from .tokenizer import load_vocab
    from .training import load_params

    try:
        config, params = load_params(args.checkpoint)
        vocab = load_vocab(args.vocab)
        manifest = TaskManifest.load(args.manifest)
        dataset = load_dataset(args.dataset, manifest)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = evaluate_dataset(dataset, params, config, vocab, seed=args.seed,
                                  checkpoint_id=Path(args.checkpoint).name)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "property_result.json").write_text(result.to_json(), encoding="utf-8")
    echo_config({"command": "eval-prop", "checkpoint": args.checkpoint, "vocab": args.vocab,
                 "dataset": args.dataset, "manifest": args.manifest, "seed": str(args.seed)},
                out_dir / "config_resolved.txt")
    print(f"{result.dataset}: {result.metric_name}={result.metric:.4f} (lambda={result.lam})")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = str(max(1, args.threads))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(var, threads)
    handlers = {
        "convert": cmd_convert,
        "make-corpus": cmd_make_corpus,
        "train": cmd_train,
        "generate": cmd_generate,
        "eval-gen": cmd_eval_gen,
        "embed": cmd_embed,
        "eval-prop": cmd_eval_prop,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
