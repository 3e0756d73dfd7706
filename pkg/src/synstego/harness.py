"""End-to-end experiment pipeline.

Stages (each persisted as ``<out>/<stage>.jsonl``)::

    dataset -> encoded -> decoded_direct -> attacked -> decoded_attack
            -> scores -> quad -> compression -> report.json

Every stage has a key derived from the config fields it depends on and the
keys of its inputs. ``stages.json`` records the key of each file on disk; a
stage whose file exists with a matching key is loaded instead of recomputed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .channel import PairedStats, bound_audit, capacity_report, confusion, paired_t_test
from .codec import (
    DecodeResult,
    LexiconDecoder,
    LexiconEncoder,
    LLMAttacker,
    LLMDecoder,
    LLMEncoder,
    RuleAttacker,
    StegoEntry,
    decode_entry,
    encode_entry,
    load_template,
    paraphrase_entry,
    template_version,
)
from .corpus import DEFAULT_N_RANGE, SAMPLING_NOTE, DatasetEntry, build_dataset, load_corpus, sample_corpus_path
from .errors import ConfigError, StageFailure, SynstegoError
from .jsonl import dumps, read_jsonl, write_jsonl
from .lexicon import Lexicon, color_name_leaks
from .metrics import DEFAULT_COMPRESSOR, XPPL_MODES, ScoreRecord, binoculars, compressed_length, quadroculars
from .payload import COLOR_NAMES
from .providers import ProviderConfig, make_provider

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

GRANULARITY_NOTE = "binoculars scored per entry on the space-joined sentences"
CONDITIONS = ("cover", "encoded", "attacked")


@dataclass
class ExperimentConfig:
    corpus_path: Path
    seed: int
    corpus_format: str | None = None
    n_entries: int = 300
    n_range: tuple[int, int] = DEFAULT_N_RANGE
    encoder_kind: str = "lexicon"
    decoder_kind: str = "lexicon"
    attacker_kind: str = "rule"
    encoder_provider: ProviderConfig | None = None
    decoder_provider: ProviderConfig | None = None
    attacker_provider: ProviderConfig | None = None
    attack_q: float = 0.5
    attack_seed: int | None = None
    base_model: ProviderConfig = field(default_factory=lambda: ProviderConfig("mock-lexicon", temperature=1.0))
    ref_model: ProviderConfig = field(default_factory=lambda: ProviderConfig("mock-lexicon", temperature=1.5))
    xppl_mode: str = "exact"
    top_k: int = 20
    compressor_id: str = DEFAULT_COMPRESSOR
    bound_slack: float = 1.0
    lexicon_path: Path | None = None
    out_dir: Path = Path("runs/experiment")
    parallel: int = 1

    def validate(self) -> "ExperimentConfig":
        if not Path(self.corpus_path).is_file():
            raise ConfigError(f"corpus path does not exist: {self.corpus_path}")
        if self.lexicon_path is not None and not Path(self.lexicon_path).is_file():
            raise ConfigError(f"lexicon path does not exist: {self.lexicon_path}")
        if not isinstance(self.seed, int):
            raise ConfigError("an integer seed is required")
        if self.n_entries < 1:
            raise ConfigError("n_entries must be >= 1")
        lo, hi = self.n_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"invalid n_range {self.n_range}")
        for role in ("encoder", "decoder"):
            kind = getattr(self, f"{role}_kind")
            if kind not in ("lexicon", "llm"):
                raise ConfigError(f"{role} kind must be 'lexicon' or 'llm'")
            if kind == "llm" and getattr(self, f"{role}_provider") is None:
                raise ConfigError(f"{role} kind 'llm' needs a [{role}.provider] section")
        if self.attacker_kind not in ("rule", "llm"):
            raise ConfigError("attack kind must be 'rule' or 'llm'")
        if self.attacker_kind == "llm" and self.attacker_provider is None:
            raise ConfigError("attack kind 'llm' needs an [attack.provider] section")
        if not 0.0 <= self.attack_q <= 1.0:
            raise ConfigError("attack q must lie in [0, 1]")
        if self.xppl_mode not in XPPL_MODES:
            raise ConfigError(f"xppl_mode must be one of {XPPL_MODES}")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")
        return self

    def identity(self) -> dict:
        """Everything that influences results; excludes output location and parallelism."""
        def pc(c):
            return None if c is None else c.to_dict()

        return {
            "corpus_sha256": _file_digest(self.corpus_path),
            "corpus_format": self.corpus_format,
            "seed": self.seed,
            "n_entries": self.n_entries,
            "n_range": list(self.n_range),
            "encoder": {"kind": self.encoder_kind, "provider": pc(self.encoder_provider)},
            "decoder": {"kind": self.decoder_kind, "provider": pc(self.decoder_provider)},
            "attack": {"kind": self.attacker_kind, "q": self.attack_q, "seed": self.effective_attack_seed,
                       "provider": pc(self.attacker_provider)},
            "metrics": {"base": pc(self.base_model), "ref": pc(self.ref_model), "xppl_mode": self.xppl_mode,
                        "top_k": self.top_k, "compressor": self.compressor_id, "bound_slack": self.bound_slack},
            "lexicon_sha256": None if self.lexicon_path is None else _file_digest(self.lexicon_path),
        }

    @property
    def effective_attack_seed(self) -> int:
        return self.seed if self.attack_seed is None else self.attack_seed

    def config_hash(self) -> str:
        return _digest(self.identity())


def _digest(obj: Any) -> str:
    return hashlib.sha256(dumps(obj).encode("utf-8")).hexdigest()[:16]


def _file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provider_section(d: dict | None) -> ProviderConfig | None:
    return None if d is None else ProviderConfig.from_dict(d)


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a TOML experiment config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, base_dir=path.parent, overrides=overrides)


def config_from_dict(raw: dict, base_dir: Path = Path("."), overrides: dict | None = None) -> ExperimentConfig:
    raw = json.loads(json.dumps(raw))
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    def resolve(p):
        if p is None:
            return None
        if p == "sample":
            return sample_corpus_path()
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    corpus = raw.get("corpus", {})
    dataset = raw.get("dataset", {})
    enc, dec, att = raw.get("encoder", {}), raw.get("decoder", {}), raw.get("attack", {})
    metrics = raw.get("metrics", {})
    run = raw.get("run", {})
    seed = overrides.get("seed", dataset.get("seed"))
    if seed is None:
        raise ConfigError("config must set [dataset] seed (no implicit entropy)")
    if "path" not in corpus:
        raise ConfigError("config must set [corpus] path")
    try:
        cfg = ExperimentConfig(
            corpus_path=resolve(corpus["path"]),
            corpus_format=corpus.get("format"),
            seed=int(seed),
            n_entries=int(dataset.get("n_entries", 300)),
            n_range=(int(dataset.get("n_min", DEFAULT_N_RANGE[0])), int(dataset.get("n_max", DEFAULT_N_RANGE[1]))),
            encoder_kind=enc.get("kind", "lexicon"),
            encoder_provider=_provider_section(enc.get("provider")),
            decoder_kind=dec.get("kind", "lexicon"),
            decoder_provider=_provider_section(dec.get("provider")),
            attacker_kind=att.get("kind", "rule"),
            attacker_provider=_provider_section(att.get("provider")),
            attack_q=float(att.get("q", 0.5)),
            attack_seed=att.get("seed"),
            xppl_mode=metrics.get("xppl_mode", "exact"),
            top_k=int(metrics.get("top_k", 20)),
            compressor_id=metrics.get("compressor", DEFAULT_COMPRESSOR),
            bound_slack=float(metrics.get("bound_slack", 1.0)),
            lexicon_path=resolve(raw.get("lexicon", {}).get("path")),
            out_dir=Path(overrides.get("out") or resolve(run.get("out", "runs/experiment"))),
            parallel=int(overrides.get("parallel") or run.get("parallel", 1)),
        )
        if "base" in metrics:
            cfg.base_model = ProviderConfig.from_dict(metrics["base"])
        if "ref" in metrics:
            cfg.ref_model = ProviderConfig.from_dict(metrics["ref"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SynstegoError):
            raise
        raise ConfigError(f"invalid config value: {exc}") from exc
    provider_kind = overrides.get("provider")
    if provider_kind:
        _apply_provider_override(cfg, provider_kind)
    return cfg.validate()


def _apply_provider_override(cfg: ExperimentConfig, kind: str) -> None:
    """``--provider`` swaps the kind of every provider-backed role."""
    from dataclasses import replace

    for attr in ("encoder_provider", "decoder_provider", "attacker_provider", "base_model", "ref_model"):
        current = getattr(cfg, attr)
        if current is not None and current.provider_kind != kind:
            setattr(cfg, attr, replace(current, provider_kind=kind))


# Pipeline ---------------------------------------------------------------------

class _Stages:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.manifest_path = out_dir / "stages.json"
        self.manifest = json.loads(self.manifest_path.read_text()) if self.manifest_path.exists() else {}
        self.reused: list[str] = []

    def path(self, name: str) -> Path:
        return self.out_dir / f"{name}.jsonl"

    def run(self, name: str, key: str, compute: Callable[[], list], load: Callable[[dict], Any]) -> list:
        path = self.path(name)
        if path.exists() and self.manifest.get(name) == key:
            log.info("stage %s: reusing %s", name, path)
            self.reused.append(name)
            return [load(r) for r in read_jsonl(path)]
        rows = compute()
        write_jsonl(path, rows)
        self.manifest[name] = key
        self.manifest_path.write_text(dumps(self.manifest) + "\n")
        return rows


def _parallel_map(stage: str, fn: Callable, items: Sequence, parallel: int, out_dir: Path, ident=None):
    ident = ident or (lambda x: getattr(x, "entry_id", "?"))

    def guarded(item):
        try:
            return fn(item), None
        except Exception as exc:  # noqa: BLE001 - re-raised below with stage context
            return None, exc

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(guarded, items))
    else:
        outcomes = [guarded(i) for i in items]

    failures = [(item, exc) for item, (_, exc) in zip(items, outcomes) if exc is not None]
    if failures:
        done = [r for r, exc in outcomes if exc is None]
        write_jsonl(out_dir / f"{stage}.partial.jsonl", done)
        item, exc = failures[0]
        raise StageFailure(stage, ident(item), exc) from exc
    return [r for r, _ in outcomes]


def _score_row(entry_id: str, condition: str, rec: ScoreRecord) -> dict:
    return {"entry_id": entry_id, "condition": condition, **rec.to_dict()}


def _mean(xs):
    return statistics.fmean(xs) if xs else None


def run_experiment(config: ExperimentConfig, render: bool = True) -> dict:
    """Run every stage, write ``report.json`` and, with ``render``, the CSV and SVG figures."""
    config.validate()
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stages = _Stages(out)
    lexicon = Lexicon.load(config.lexicon_path)
    ident = config.identity()
    par = config.parallel

    def key(name, *parts):
        return _digest({"stage": name, "parts": parts})

    providers = {}

    def provider(pc: ProviderConfig):
        k = dumps(pc.to_dict())
        if k not in providers:
            providers[k] = make_provider(pc, lexicon)
        return providers[k]

    try:
        # dataset ---------------------------------------------------------
        corpus = load_corpus(config.corpus_path, config.corpus_format)
        clean = [u for u in corpus if not color_name_leaks(u.text)]
        dropped = len(corpus) - len(clean)
        k_data = key("dataset", ident["corpus_sha256"], ident["corpus_format"], config.seed,
                     config.n_entries, list(config.n_range))
        dataset = stages.run(
            "dataset", k_data,
            lambda: build_dataset(clean, config.n_entries, config.n_range, config.seed),
            DatasetEntry.from_dict,
        )

        # encode / decode -------------------------------------------------
        if config.encoder_kind == "lexicon":
            encoder = LexiconEncoder(lexicon, config.seed)
        else:
            encoder = LLMEncoder(provider(config.encoder_provider))
        if config.decoder_kind == "lexicon":
            decoder = LexiconDecoder(lexicon)
        else:
            decoder = LLMDecoder(provider(config.decoder_provider))
        if config.attacker_kind == "rule":
            attacker = RuleAttacker(config.attack_q, config.effective_attack_seed, lexicon)
        else:
            attacker = LLMAttacker(provider(config.attacker_provider))

        k_enc = key("encoded", k_data, ident["encoder"], ident["lexicon_sha256"])
        encoded = stages.run("encoded", k_enc,
                             lambda: _parallel_map("encoded", lambda e: encode_entry(e, encoder), dataset, par, out),
                             StegoEntry.from_dict)
        k_dd = key("decoded_direct", k_enc, ident["decoder"], ident["lexicon_sha256"])
        decoded_direct = stages.run("decoded_direct", k_dd,
                                    lambda: _parallel_map("decoded_direct", lambda s: decode_entry(s, decoder),
                                                          encoded, par, out),
                                    DecodeResult.from_dict)
        k_att = key("attacked", k_enc, ident["attack"], ident["lexicon_sha256"])
        attacked = stages.run("attacked", k_att,
                              lambda: _parallel_map("attacked", lambda s: paraphrase_entry(s, attacker),
                                                    encoded, par, out),
                              StegoEntry.from_dict)
        k_da = key("decoded_attack", k_att, ident["decoder"], ident["lexicon_sha256"])
        decoded_attack = stages.run("decoded_attack", k_da,
                                    lambda: _parallel_map("decoded_attack", lambda s: decode_entry(s, decoder),
                                                          attacked, par, out),
                                    DecodeResult.from_dict)

        # scores ----------------------------------------------------------
        base, ref = provider(config.base_model), provider(config.ref_model)
        mode, top_k = config.xppl_mode, config.top_k
        texts = {
            e.entry_id: {
                "cover": " ".join(u.text for u in e.sentences),
                "encoded": enc.text,
                "attacked": att.text,
            }
            for e, enc, att in zip(dataset, encoded, attacked)
        }

        def score(entry_id):
            return [
                _score_row(entry_id, cond,
                           binoculars(texts[entry_id][cond], base, ref, mode, top_k, f"{entry_id}:{cond}"))
                for cond in CONDITIONS
            ]

        k_scores = key("scores", k_data, k_enc, k_att, ident["metrics"], ident["lexicon_sha256"])
        score_rows = stages.run(
            "scores", k_scores,
            lambda: [row for rows in _parallel_map("scores", score, list(texts), par, out, ident=str)
                     for row in rows],
            dict,
        )
        by_cond = {c: {} for c in CONDITIONS}
        for row in score_rows:
            by_cond[row["condition"]][row["entry_id"]] = ScoreRecord.from_dict(row)
        ids = [e.entry_id for e in dataset]

        k_quad = key("quad", k_scores)
        quad_rows = stages.run(
            "quad", k_quad,
            lambda: [{"entry_id": i, **quadroculars(by_cond["encoded"][i], by_cond["cover"][i], i).row()}
                     for i in ids],
            dict,
        )

        # compression -----------------------------------------------------
        def compress_entry(e: DatasetEntry):
            t = texts[e.entry_id]
            cover = compressed_length(t["cover"], config.compressor_id, f"{e.entry_id}:cover")
            stego = compressed_length(t["encoded"], config.compressor_id, f"{e.entry_id}:encoded")
            audit = bound_audit(cover, stego, len(e.payload_bits), config.bound_slack)
            return {"entry_id": e.entry_id, "cover": cover.to_dict(), "stego": stego.to_dict(),
                    "audit": audit.to_dict()}

        k_comp = key("compression", k_data, k_enc, config.compressor_id, config.bound_slack)
        compression = stages.run("compression", k_comp,
                                 lambda: _parallel_map("compression", compress_entry, dataset, par, out),
                                 dict)
    finally:
        for p in providers.values():
            p.close()

    report = build_report(config, dataset, encoded, attacked, decoded_direct, decoded_attack,
                          by_cond, quad_rows, compression)
    report["provenance"].update({
        "corpus_sentences": len(corpus),
        "corpus_sentences_dropped_for_color_names": dropped,
        "stage_keys": dict(stages.manifest),
        "stages_reused": sorted(stages.reused),
        "encoder": encoder.describe() if hasattr(encoder, "describe") else encoder.kind,
        "attacker": attacker.describe(),
        "lexicon_version": lexicon.version,
        "timestamps": {"started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())},
    })
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if render:
        from .render import render_report

        render_report(report, out, formats=("csv", "svg"))
    return report


def _accuracy_section(results: Sequence[DecodeResult], stego: Sequence[StegoEntry]) -> dict:
    assigned = [c for s in stego for c in s.assigned_colors]
    decoded = [c for r in results for c in r.decoded_colors]
    cm = confusion(assigned, decoded)
    flags = [f for r in results for f in (r.per_sentence_correct or ())]
    entry_exact = sum(all(r.per_sentence_correct or ()) for r in results) / len(results)
    return {
        "overall": cm.overall_accuracy,
        "per_color": dict(zip(COLOR_NAMES, cm.per_color_accuracy)),
        "confusion": cm.to_dict(),
        "sentences": len(flags),
        "entries_fully_recovered": entry_exact,
    }


def table1(stats: PairedStats, labels: tuple[str, str] = ("Encoded", "Paraphrased")) -> dict:
    """Two-condition score summary (mean, std, min, max) with the paired test underneath."""
    return {
        "rows": [
            {"condition": labels[0], "mean": stats.mean_a, "std": stats.std_a, "min": stats.min_a, "max": stats.max_a},
            {"condition": labels[1], "mean": stats.mean_b, "std": stats.std_b, "min": stats.min_b, "max": stats.max_b},
        ],
        "n": stats.n,
        "t": stats.t_stat,
        "df": stats.df,
        "p": stats.p_value,
        "mean_shift": stats.mean_shift,
        "frac_decrease": stats.frac_decrease,
        "cohens_d": stats.cohens_d,
    }


def format_table1(t1: dict) -> str:
    lines = [f"{'Condition':<12} {'Mean':>8} {'Std':>8} {'Min':>8} {'Max':>8}"]
    for r in t1["rows"]:
        lines.append(f"{r['condition']:<12} {r['mean']:>8.3f} {r['std']:>8.3f} {r['min']:>8.3f} {r['max']:>8.3f}")
    lines.append(
        f"Paired t: t={t1['t']:.2f}, p={t1['p']:.3g}; mean shift {t1['mean_shift']:+.3f}; "
        f"{100 * t1['frac_decrease']:.1f}% pairs decrease."
    )
    return "\n".join(lines)


def detection_section(a: Sequence[float], b: Sequence[float], ids: Sequence[str]) -> dict:
    """Paired statistics of scores ``a`` (encoded) vs ``b`` (paraphrased)."""
    section = {"pairs": [{"entry_id": i, "encoded": x, "paraphrased": y} for i, x, y in zip(ids, a, b)]}
    try:
        stats = paired_t_test(a, b)
    except SynstegoError as exc:
        section["error"] = str(exc)
        return section
    section["paired"] = stats.to_dict()
    section["table1"] = table1(stats)
    return section


def build_report(config, dataset, encoded, attacked, decoded_direct, decoded_attack,
                 by_cond, quad_rows, compression) -> dict:
    ids = [e.entry_id for e in dataset]
    direct = _accuracy_section(decoded_direct, encoded)
    attack = _accuracy_section(decoded_attack, attacked)

    capacity = {}
    for name, entries, acc in (("encoded", encoded, direct), ("paraphrased", attacked, attack)):
        rep = capacity_report(3, acc["overall"], [s.text for s in entries],
                              [len(s.stego_sentences) for s in entries], condition=name)
        capacity[name] = rep.to_dict()

    enc_b = [by_cond["encoded"][i].binoculars for i in ids]
    att_b = [by_cond["attacked"][i].binoculars for i in ids]
    detection = detection_section(enc_b, att_b, ids)
    qs = [r["Q"] for r in quad_rows]
    detection["quadroculars"] = {
        "mean_Q": _mean(qs),
        "frac_positive": sum(q > 0 for q in qs) / len(qs) if qs else None,
        "frac_equal_length": sum(bool(r["equal_length_flag"]) for r in quad_rows) / len(qs) if qs else None,
    }
    detection["cross_entropy_means"] = {
        c: _mean([by_cond[c][i].cross_entropy for i in ids]) for c in CONDITIONS
    }

    gaps = [r["stego"]["compressed_bits"] - r["cover"]["compressed_bits"] for r in compression]
    complexity = {
        "compressor_id": config.compressor_id,
        "frac_stego_longer": sum(g > 0 for g in gaps) / len(gaps),
        "mean_gap_bits": _mean(gaps),
        "bound_audit": {
            "label": "HEURISTIC",
            "slack": config.bound_slack,
            "frac_gap_positive": sum(r["audit"]["gap"] > 0 for r in compression) / len(compression),
            "frac_passed": sum(r["audit"]["passed"] for r in compression) / len(compression),
        },
    }

    return {
        "accuracy": {"direct": direct, "attack": attack},
        "capacity": capacity,
        "detection": detection,
        "complexity": complexity,
        "provenance": {
            "config_hash": config.config_hash(),
            "config": config.identity(),
            "seeds": {"dataset": config.seed, "attack": config.effective_attack_seed},
            "providers": {"base": config.base_model.to_dict(), "ref": config.ref_model.to_dict()},
            "templates": {n: template_version(load_template(n)) for n in ("encode", "decode", "paraphrase")},
            "granularity": GRANULARITY_NOTE,
            "sampling": SAMPLING_NOTE,
            "entries": len(dataset),
            "package_version": __version__,
        },
    }


def strip_timestamps(report: dict) -> dict:
    """Copy of ``report`` without wall-clock fields, for reproducibility comparisons."""
    clone = json.loads(json.dumps(report))
    clone.get("provenance", {}).pop("timestamps", None)
    clone.get("provenance", {}).pop("stages_reused", None)
    return clone
