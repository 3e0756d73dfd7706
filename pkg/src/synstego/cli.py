"""synstego: color-code text steganography and its steganalysis.

Exit codes: 0 success, 1 validation error, 2 provider or runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .channel import capacity_report, effective_capacity_detail, paired_t_test
from .codec import (
    LexiconDecoder,
    LexiconEncoder,
    LLMAttacker,
    LLMDecoder,
    LLMEncoder,
    RuleAttacker,
    StegoEntry,
    accuracy,
    decode_entry,
    encode_entry,
    paraphrase_entry,
)
from .corpus import DatasetEntry, build_dataset, load_corpus
from .errors import RuntimeFailure, SynstegoError, ValidationError
from .harness import format_table1, load_config, run_experiment, table1
from .jsonl import dumps, read_jsonl, write_jsonl
from .metrics import (
    COMPRESSION_COLUMNS,
    COMPRESSORS,
    DEFAULT_COMPRESSOR,
    QUAD_COLUMNS,
    SCORE_COLUMNS,
    ScoreRecord,
    binoculars,
    compressed_length,
    ncd,
    quadroculars,
)
from .providers import PROVIDER_KINDS, ProviderConfig, make_provider
from .render import FORMATS, render_report, write_csv

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("synstego")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=d, help="TOML config file")
    parser.add_argument("--seed", type=int, default=d, help="RNG seed")
    parser.add_argument("--out", type=Path, default=d, help="output directory")
    parser.add_argument("--parallel", type=int, default=d, help="parallel workers")
    parser.add_argument("--provider", choices=PROVIDER_KINDS, default=d, help="provider kind for model-backed roles")
    parser.add_argument("--endpoint", default=d, help="remote endpoint base URL")
    parser.add_argument("--model", default=d, help="remote model id")
    parser.add_argument("-v", "--verbose", action="store_true", default=d)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _global_options(common, suppress=True)

    parser = _Parser(prog="synstego", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(subparsers, name, help, func):
        p = subparsers.add_parser(name, help=help, parents=[common])
        p.set_defaults(func=func)
        return p

    ds = sub.add_parser("dataset", help="dataset construction").add_subparsers(dest="action", required=True,
                                                                              parser_class=_Parser)
    p = add(ds, "build", "build a seeded dataset from a corpus", cmd_dataset_build)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--format", choices=("text", "jsonl"))
    p.add_argument("--n-entries", type=int, default=300)
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=6)

    p = add(sub, "encode", "embed each entry's colors into its sentences", cmd_encode)
    p.add_argument("--input", type=Path, required=True, help="dataset JSONL")
    p.add_argument("--encoder", choices=("lexicon", "llm"), default="lexicon")

    p = add(sub, "decode", "recover colors and bits from stego entries", cmd_decode)
    p.add_argument("--input", type=Path, required=True, help="stego JSONL")
    p.add_argument("--decoder", choices=("lexicon", "llm"), default="lexicon")

    p = add(sub, "attack", "paraphrase stego entries", cmd_attack)
    p.add_argument("--input", type=Path, required=True, help="stego JSONL")
    p.add_argument("--mode", choices=("rule", "llm"), default="rule")
    p.add_argument("--q", type=float, default=0.5, help="per-noun strip probability (rule mode)")

    sc = sub.add_parser("score", help="complexity proxies").add_subparsers(dest="metric", required=True,
                                                                        parser_class=_Parser)
    for name, func in (("binoculars", cmd_score_binoculars), ("compress", cmd_score_compress)):
        p = add(sc, name, f"{name} scores", func)
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--text")
        g.add_argument("--input", type=Path, help="JSONL with text, sentences or stego_sentences")
        if name == "binoculars":
            p.add_argument("--xppl-mode", choices=("exact", "top-k"))
            p.add_argument("--top-k", type=int)
        else:
            p.add_argument("--compressor", choices=sorted(COMPRESSORS), default=DEFAULT_COMPRESSOR)
    p = add(sc, "quadroculars", "Binoculars difference per stego/cover pair", cmd_score_quadroculars)
    p.add_argument("--scores", type=Path, required=True, help="scores JSONL from `score binoculars`")
    p.add_argument("--stego-condition", default="encoded")
    p.add_argument("--cover-condition", default="cover")
    p = add(sc, "ncd", "normalized compression distance", cmd_score_ncd)
    p.add_argument("--x", required=True, help="text, or @path to read a file")
    p.add_argument("--y", required=True, help="text, or @path to read a file")
    p.add_argument("--compressor", choices=sorted(COMPRESSORS), default=DEFAULT_COMPRESSOR)

    p = add(sub, "capacity", "effective channel capacity", cmd_capacity)
    p.add_argument("--nb", type=float, default=3.0, help="attempted bits per sentence")
    p.add_argument("--f", type=float, required=True, help="per-sentence perfect-decoding frequency")
    p.add_argument("--samples", type=Path, help="stego JSONL or text file for sentences-per-kB")

    p = add(sub, "stats", "paired t-test between two score columns", cmd_stats)
    p.add_argument("--input", type=Path, required=True, help="JSONL or CSV with two numeric columns")
    p.add_argument("--a-field", default="encoded")
    p.add_argument("--b-field", default="paraphrased")

    ex = sub.add_parser("experiment", help="full pipeline").add_subparsers(dest="action", required=True,
                                                                         parser_class=_Parser)
    add(ex, "run", "run the experiment described by --config", cmd_experiment_run)

    rp = sub.add_parser("report", help="report rendering").add_subparsers(dest="action", required=True,
                                                                        parser_class=_Parser)
    p = add(rp, "render", "render report.json to JSON/CSV/SVG", cmd_report_render)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--formats", default=",".join(FORMATS))
    return parser


# helpers ------------------------------------------------------------------------

def _out(args) -> Path:
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _raw_config(args) -> dict:
    if not args.config:
        return {}
    try:
        return tomllib.loads(Path(args.config).read_text("utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{args.config}: {exc}") from exc


def _provider_config(args, section: dict | None, default: ProviderConfig | None = None) -> ProviderConfig:
    cfg = ProviderConfig.from_dict(section) if section else (default or ProviderConfig())
    changes = {}
    if args.provider:
        changes["provider_kind"] = args.provider
    if args.endpoint:
        changes["endpoint"] = args.endpoint
    if args.model:
        changes["model_id"] = args.model
    return replace(cfg, **changes) if changes else cfg


def _role_provider(args, role: str):
    section = _raw_config(args).get(role, {}).get("provider")
    return make_provider(_provider_config(args, section))


def _metric_providers(args):
    metrics = _raw_config(args).get("metrics", {})
    base = _provider_config(args, metrics.get("base"), ProviderConfig("mock-lexicon", temperature=1.0))
    ref = _provider_config(args, metrics.get("ref"), ProviderConfig("mock-lexicon", temperature=1.5))
    return make_provider(base), make_provider(ref), metrics


def _row_text(row: dict) -> str:
    if "text" in row:
        return row["text"]
    if "stego_sentences" in row:
        return " ".join(row["stego_sentences"])
    if "sentences" in row:
        return " ".join(s["text"] if isinstance(s, dict) else s for s in row["sentences"])
    raise ValidationError("row has no text, sentences or stego_sentences field")


def _row_condition(row: dict) -> str:
    if "stego_sentences" in row:
        return "attacked" if any(h.startswith("paraphrase") for h in row.get("history", ())) else "encoded"
    if "sentences" in row:
        return "cover"
    return row.get("condition", "text")


def _read_text_arg(value: str) -> str:
    if value.startswith("@"):
        try:
            return Path(value[1:]).read_text("utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read {value[1:]}: {exc}") from exc
    return value


def _seed(args, default: int | None = 0) -> int:
    if args.seed is not None:
        return args.seed
    seed = _raw_config(args).get("dataset", {}).get("seed", default)
    if seed is None:
        raise ValidationError("a --seed (or [dataset] seed in --config) is required")
    return int(seed)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# commands ---------------------------------------------------------------------------

def cmd_dataset_build(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    entries = build_dataset(corpus, args.n_entries, (args.n_min, args.n_max), _seed(args, None))
    path = write_jsonl(_out(args) / "dataset.jsonl", entries)
    print(f"wrote {len(entries)} entries to {path}")
    return 0


def cmd_encode(args) -> int:
    entries = [DatasetEntry.from_dict(r) for r in read_jsonl(args.input)]
    encoder = LexiconEncoder(seed=_seed(args)) if args.encoder == "lexicon" else LLMEncoder(_role_provider(args, "encoder"))
    stego = [encode_entry(e, encoder) for e in entries]
    path = write_jsonl(_out(args) / "encoded.jsonl", stego)
    print(f"wrote {len(stego)} stego entries to {path}")
    return 0


def cmd_decode(args) -> int:
    stego = [StegoEntry.from_dict(r) for r in read_jsonl(args.input)]
    decoder = LexiconDecoder() if args.decoder == "lexicon" else LLMDecoder(_role_provider(args, "decoder"))
    results = [decode_entry(s, decoder) for s in stego]
    path = write_jsonl(_out(args) / "decoded.jsonl", results)
    print(f"wrote {len(results)} decode results to {path}; per-sentence accuracy {accuracy(results):.4f}")
    return 0


def cmd_attack(args) -> int:
    stego = [StegoEntry.from_dict(r) for r in read_jsonl(args.input)]
    if args.mode == "rule":
        attacker = RuleAttacker(args.q, _seed(args))
    else:
        attacker = LLMAttacker(_role_provider(args, "attack"))
    out = [paraphrase_entry(s, attacker) for s in stego]
    path = write_jsonl(_out(args) / "attacked.jsonl", out)
    print(f"wrote {len(out)} paraphrased entries to {path}")
    return 0


def cmd_score_binoculars(args) -> int:
    base, ref, metrics = _metric_providers(args)
    mode = args.xppl_mode or metrics.get("xppl_mode", "exact")
    top_k = args.top_k or metrics.get("top_k", 20)
    if args.text is not None:
        _emit(binoculars(args.text, base, ref, mode, top_k, "text").to_dict())
        return 0
    rows = []
    for i, row in enumerate(read_jsonl(args.input)):
        entry_id = row.get("entry_id", f"row{i:05d}")
        cond = _row_condition(row)
        rec = binoculars(_row_text(row), base, ref, mode, top_k, f"{entry_id}:{cond}")
        rows.append({"entry_id": entry_id, "condition": cond, **rec.to_dict()})
    out = _out(args)
    write_jsonl(out / "scores.jsonl", rows)
    write_csv(out / "scores.csv", rows, ("entry_id", "condition") + SCORE_COLUMNS)
    print(f"wrote {len(rows)} score records to {out / 'scores.jsonl'}")
    return 0


def cmd_score_quadroculars(args) -> int:
    rows = read_jsonl(args.scores)
    by = {}
    for r in rows:
        by.setdefault(r["condition"], {})[r["entry_id"]] = ScoreRecord.from_dict(r)
    stego, cover = by.get(args.stego_condition, {}), by.get(args.cover_condition, {})
    ids = [i for i in stego if i in cover]
    if not ids:
        raise ValidationError("no entry has both stego and cover scores")
    out_rows = [{"entry_id": i, **quadroculars(stego[i], cover[i], i).row()} for i in ids]
    out = _out(args)
    write_jsonl(out / "quad.jsonl", out_rows)
    write_csv(out / "quad.csv", out_rows, ("entry_id",) + QUAD_COLUMNS)
    print(f"wrote {len(out_rows)} Quadroculars scores to {out / 'quad.jsonl'}")
    return 0


def cmd_score_compress(args) -> int:
    if args.text is not None:
        _emit(compressed_length(args.text, args.compressor, "text").to_dict())
        return 0
    rows = []
    for i, row in enumerate(read_jsonl(args.input)):
        entry_id = row.get("entry_id", f"row{i:05d}")
        est = compressed_length(_row_text(row), args.compressor, f"{entry_id}:{_row_condition(row)}")
        rows.append(est.to_dict())
    out = _out(args)
    write_jsonl(out / "compression.jsonl", rows)
    write_csv(out / "compression.csv", rows, COMPRESSION_COLUMNS)
    print(f"wrote {len(rows)} compression estimates to {out / 'compression.jsonl'}")
    return 0


def cmd_score_ncd(args) -> int:
    print(f"{ncd(_read_text_arg(args.x), _read_text_arg(args.y), args.compressor):.6f}")
    return 0


def cmd_capacity(args) -> int:
    detail = effective_capacity_detail(args.nb, args.f)
    if args.samples is None:
        print(round(detail.bits, 6))
        if detail.clamped:
            print(f"warning: raw value {detail.raw:.6g} clamped to 0", file=sys.stderr)
        return 0
    if args.samples.suffix == ".jsonl":
        entries = [StegoEntry.from_dict(r) for r in read_jsonl(args.samples)]
        report = capacity_report(args.nb, args.f, [e.text for e in entries], [len(e.stego_sentences) for e in entries])
    else:
        report = capacity_report(args.nb, args.f, [_read_text_arg("@" + str(args.samples))])
    _emit(report.to_dict())
    return 0


def _load_columns(path: Path, a: str, b: str) -> tuple[list[float], list[float]]:
    if path.suffix == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    else:
        rows = read_jsonl(path)
    try:
        return [float(r[a]) for r in rows], [float(r[b]) for r in rows]
    except KeyError as exc:
        raise ValidationError(f"missing column {exc} in {path}") from None


def cmd_stats(args) -> int:
    a, b = _load_columns(args.input, args.a_field, args.b_field)
    stats = paired_t_test(a, b)
    print(format_table1(table1(stats, (args.a_field, args.b_field))))
    path = _out(args) / "paired_stats.json"
    path.write_text(dumps(stats.to_dict()) + "\n", encoding="utf-8")
    return 0


def cmd_experiment_run(args) -> int:
    if not args.config:
        raise ValidationError("experiment run needs --config")
    overrides = {"seed": args.seed, "out": args.out, "parallel": args.parallel, "provider": args.provider}
    cfg = load_config(args.config, overrides)
    report = run_experiment(cfg)
    print(f"report written to {cfg.out_dir / 'report.json'}")
    det = report["detection"]
    print(f"direct accuracy {report['accuracy']['direct']['overall']:.4f}; "
          f"attacked accuracy {report['accuracy']['attack']['overall']:.4f}")
    if "table1" in det:
        print(format_table1(det["table1"]))
    return 0


def cmd_report_render(args) -> int:
    try:
        report = json.loads(args.input.read_text("utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read {args.input}: {exc}") from exc
    formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    files, warnings = render_report(report, args.out or args.input.parent, formats)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {len(files)} files")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeFailure, SynstegoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
