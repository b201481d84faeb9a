"""Command-line interface.

Every subcommand reads only its flags and the files they name, draws all
randomness from ``--seed`` and, when ``--output`` is given, writes a
``run.json`` manifest (command, inputs with checksums, versions, seed,
timings) next to its outputs.

Exit codes: 0 success, 2 usage or invalid config, 3 I/O, 4 data
validation, 5 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import AnalysisError, Phenomenon, count_phenomenon, family_rate_table, rate_table_csv
from .classify import ClassifyError
from .corpus import (MAX_COMMON, CorpusError, CorpusMeta, ManifestEntry, Status, chunk, corpus_stats,
                     load_manifest, read_corpus, read_manifest, sample_equal, write_manifest)
from .experiments import (FEATURE_SETS, ConfigError, ExperimentConfig, OTConfig, SourceIDConfig,
                          build_spec, default_families, load_config, read_families,
                          reconstruct_tree, run_experiments, run_ot_classification, run_source_id, stage_rng)
from .features import FeatureError, extract_matrix
from .phylo import NewickError, PhyloTree, TreeError, read_newick
from .render import render_ascii, render_svg
from .synthetic import SyntheticConfig, SyntheticError, generate_synthetic
from .treedist import DEFAULT_NORM_SAMPLES, NORM_SEED, Mode, TreeDistanceError, evaluate

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4, 5

DATA_ERRORS = (CorpusError, FeatureError, TreeError, TreeDistanceError, ClassifyError, AnalysisError,
               SyntheticError)


class UsageError(Exception):
    pass


# --- helpers -----------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Collects inputs and timings for the run manifest."""

    def __init__(self, args):
        self.args = args
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def input(self, path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"no such file: {p}")
        self.inputs.append(p)
        return p

    def lap(self, name: str):
        now = time.perf_counter()
        self.timings[name] = round(now - self._t0, 6)
        self._t0 = now

    @property
    def outdir(self) -> Optional[Path]:
        return Path(self.args.output) if self.args.output else None

    def write(self, name: str, text: str) -> Path:
        """Write to the output directory, or stdout when there is none."""
        if self.outdir is None:
            sys.stdout.write(text)
            return Path("-")
        self.outdir.mkdir(parents=True, exist_ok=True)
        p = self.outdir / name
        p.write_text(text, encoding="utf-8")
        self.outputs.append(p)
        return p

    def manifest(self) -> dict:
        argv = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(self.args).items() if k != "func"}
        return {
            "command": self.args.command,
            "arguments": argv,
            "seed": getattr(self.args, "seed", None),
            "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in self.inputs],
            "outputs": sorted(str(p.name) for p in self.outputs),
            "versions": {"transphylo": __version__, "numpy": np.__version__,
                         "python": platform.python_version()},
            "timings_seconds": self.timings,
        }

    def finish(self):
        if self.outdir is not None:
            self.outdir.mkdir(parents=True, exist_ok=True)
            (self.outdir / "run.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n",
                                                  encoding="utf-8")


def _load_corpora(run: Run, manifest: str, target: Optional[str] = None, translated_only: bool = False):
    path = run.input(manifest)
    for e in read_manifest(path):
        run.input(e.path)
    corpora = load_manifest(path)
    out = {}
    for c in corpora:
        if target and c.meta.target_language != target:
            continue
        if translated_only and not c.meta.status.translated:
            continue
        key = c.meta.source_language
        if key in out:
            raise CorpusError(f"several corpora for source language {key!r}; merge them or use 'experiment'")
        out[key] = c
    if not out:
        raise CorpusError("no matching corpora in manifest")
    return out


def _lexicons(args) -> dict:
    from .features import FeatureKind, default_lexicon, read_lexicon
    lang = args.target
    return {
        FeatureKind.FUNCTION_WORDS: read_lexicon(args.function_words) if args.function_words
        else default_lexicon(FeatureKind.FUNCTION_WORDS, lang),
        FeatureKind.COHESIVE_MARKERS: read_lexicon(args.cohesive_markers) if args.cohesive_markers
        else default_lexicon(FeatureKind.COHESIVE_MARKERS, lang),
    }


def _emit_tree(run: Run, tree: PhyloTree, fmt: str, stem: str):
    if fmt == "ascii":
        run.write(f"{stem}.txt", render_ascii(tree))
    elif fmt == "svg":
        run.write(f"{stem}.svg", render_svg(tree))
    elif fmt == "json":
        run.write(f"{stem}.json", json.dumps({"newick": tree.to_newick()}) + "\n")
    elif fmt == "newick":
        run.write(f"{stem}.nwk", tree.to_newick() + "\n")
    else:
        raise UsageError(f"format {fmt!r} is not available for trees")


def _budget(value: str):
    if value == MAX_COMMON:
        return value
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or {MAX_COMMON!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


# --- subcommands -------------------------------------------------------------

def cmd_ingest(args, run: Run):
    """Validate corpora and report their sizes; optionally register a single corpus into a manifest."""
    if args.corpus:
        meta = CorpusMeta(args.source, args.target, Status.parse(args.status))
        read_corpus(run.input(args.corpus), meta)
        run.lap("validate")
        if not args.manifest:
            raise UsageError("--corpus needs --manifest to register into")
        mpath = Path(args.manifest)
        entries = read_manifest(mpath) if mpath.is_file() else []
        entries = [e for e in entries if Path(e.path).resolve() != Path(args.corpus).resolve()]
        entries.append(ManifestEntry(Path(args.corpus).resolve(), meta))
        write_manifest(mpath, entries)
    if not args.manifest:
        raise UsageError("ingest needs --manifest")
    path = run.input(args.manifest)
    rows = []
    for e, c in zip(read_manifest(path), load_manifest(path)):
        run.input(e.path)
        st = corpus_stats(c)
        rows.append({"path": str(e.path), "source_language": c.meta.source_language,
                     "target_language": c.meta.target_language, "status": c.meta.status.value, **st})
    run.lap("load")
    if args.format == "json":
        run.write("corpora.json", json.dumps(rows, indent=2, sort_keys=True) + "\n")
    else:
        keys = list(rows[0])
        lines = [",".join(keys)] + [",".join(str(r[k]) for k in keys) for r in rows]
        run.write("corpora.csv", "\n".join(lines) + "\n")


def cmd_features(args, run: Run):
    """Feature matrix of fixed-size chunks, one row per chunk."""
    corpora = _load_corpora(run, args.manifest, args.target)
    chunks, labels = [], []
    for lang in sorted(corpora):
        cs = chunk(corpora[lang], args.chunk_tokens)
        chunks.extend(cs)
        labels.extend([f"{lang}:{corpora[lang].meta.status.value}"] * len(cs))
    if not chunks:
        raise CorpusError(f"no chunk of {args.chunk_tokens} tokens fits in the corpora")
    spec = build_spec(args.features, chunks, _lexicons(args), args.top_k)
    X = extract_matrix(chunks, spec)
    run.lap("extract")
    if args.format == "json":
        run.write("features.json", json.dumps({"spec_id": spec.spec_id, "dimensions": list(spec.dimensions),
                                               "labels": labels, "values": X.tolist()}) + "\n")
    else:
        import csv
        import io
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", *spec.dimensions])
        for lab, row in zip(labels, X):
            w.writerow([lab, *(repr(float(v)) for v in row)])
        run.write("features.csv", buf.getvalue())


def _classify_config(args) -> ExperimentConfig:
    fs = tuple(args.features)
    cfg = ExperimentConfig(seed=args.seed, experiments=(args.task,), target_language=args.target,
                           manifest=args.manifest, families=args.families,
                           function_words=args.function_words, cohesive_markers=args.cohesive_markers)
    if args.task == "ot":
        cfg = replace(cfg, ot=OTConfig(feature_sets=fs, chunks=args.chunks or 200,
                                       chunk_tokens=args.chunk_tokens or 2000, folds=args.folds,
                                       top_k=args.top_k, C=args.C, shuffle_labels=args.shuffle_labels))
    else:
        cfg = replace(cfg, source_id=SourceIDConfig(feature_sets=fs, chunks=args.chunks or 100,
                                                    chunk_tokens=args.chunk_tokens or 1000, folds=args.folds,
                                                    top_k=args.top_k, C=args.C))
    return cfg.validate()


def cmd_classify(args, run: Run):
    """O-vs-T or source-language classification with k-fold cross-validation."""
    cfg = _classify_config(args)
    run.input(args.manifest)
    if args.families:
        run.input(args.families)
    result = (run_ot_classification if args.task == "ot" else run_source_id)(cfg)
    run.lap("classify")
    from .experiments import ExperimentReport
    report = ExperimentReport(cfg.to_dict(), {args.task: result})
    if args.format == "json":
        run.write("report.json", report.to_json())
        return
    tables = report.tables()
    if run.outdir is None:
        key = "ot_accuracy.csv" if args.task == "ot" else "source_id_accuracy.csv"
        sys.stdout.write(tables[key])
        return
    run.write("report.json", report.to_json())
    for name, text in tables.items():
        run.write(name, text)


def cmd_cluster(args, run: Run):
    """One equal-size sample per language, then a Ward tree over their feature vectors."""
    corpora = _load_corpora(run, args.manifest, args.target, translated_only=not args.include_originals)
    chunks = sample_equal(corpora, args.tokens, stage_rng(args.seed, 3, 0))
    tree = reconstruct_tree(chunks, args.features, _lexicons(args), args.top_k)
    run.lap("cluster")
    _emit_tree(run, tree, args.format, "tree")


def cmd_evaluate(args, run: Run):
    """Normalized leaf-pair distance between a tree and the gold tree."""
    tree = read_newick(run.input(args.tree))
    gold = read_newick(run.input(args.gold))
    modes = list(Mode) if args.mode == "both" else [Mode(args.mode)]
    reports = [evaluate(tree, gold, m, samples=args.samples, seed=args.norm_seed) for m in modes]
    run.lap("evaluate")
    if args.format == "json":
        payload = [json.loads(r.to_json()) for r in reports]
        run.write("distance.json", json.dumps(payload if len(payload) > 1 else payload[0], sort_keys=True) + "\n")
    elif args.format == "csv":
        lines = ["mode,raw,normalized,norm_constant"]
        lines += [f"{r.mode},{r.raw!r},{r.normalized!r},{r.norm_constant!r}" for r in reports]
        run.write("distance.csv", "\n".join(lines) + "\n")
    else:
        run.write("distance.txt", "".join(f"{r.mode}\t{r.normalized:.6g}\n" for r in reports))


def cmd_analyze(args, run: Run):
    """Per-family rates of the five interference phenomena."""
    if args.corpus:
        meta = CorpusMeta(args.source or "unknown", args.target, Status.parse(args.status))
        corpus = read_corpus(run.input(args.corpus), meta)
        rows = [count_phenomenon(corpus, p, args.window) for p in Phenomenon]
        if args.format == "json":
            run.write("counts.json", json.dumps({r.phenomenon.value: {"count": r.count, "tokens": r.tokens,
                                                                      "rate": r.rate} for r in rows},
                                                sort_keys=True) + "\n")
        else:
            lines = ["phenomenon,count,tokens,unit,rate"]
            lines += [f"{r.phenomenon.value},{r.count},{r.tokens},{r.phenomenon.unit},{r.rate:.6g}" for r in rows]
            run.write("counts.csv", "\n".join(lines) + "\n")
        return
    if not args.manifest:
        raise UsageError("analyze needs --manifest or --corpus")
    corpora = _load_corpora(run, args.manifest, args.target, translated_only=True)
    families = read_families(run.input(args.families)) if args.families else default_families()
    table = family_rate_table(corpora, families, window=args.window)
    run.lap("count")
    if args.format == "json":
        run.write("phenomena.json", json.dumps(table, indent=2, sort_keys=True) + "\n")
    else:
        run.write("phenomena.csv", rate_table_csv(table))


def cmd_experiment(args, run: Run):
    """Run the experiments described by a config file."""
    cfg = load_config(run.input(args.config), seed=args.seed)
    cfg = replace(cfg, jobs=args.jobs or os.cpu_count() or 1)
    for p in (cfg.manifest, cfg.gold, cfg.families, cfg.function_words, cfg.cohesive_markers):
        if p:
            run.input(p)
    report = run_experiments(cfg)
    run.lap("experiments")
    if run.outdir is None:
        sys.stdout.write(report.to_json())
        return
    for p in report.write(run.outdir):
        run.outputs.append(p)
    trees = report.results.get("trees")
    if trees and args.format in ("ascii", "svg"):
        from .phylo import parse_newick
        for fs, row in trees["feature_sets"].items():
            _emit_tree(run, parse_newick(row["example_tree"]), args.format, f"tree_{fs.replace('+', '_')}")


def cmd_synth(args, run: Run):
    """Write synthetic corpora with a planted tree, plus a manifest and family map."""
    if not args.output:
        raise UsageError("synth needs --output")
    cfg = SyntheticConfig(families=args.families, languages_per_family=args.languages_per_family,
                          tokens_per_language=args.tokens, inter_divergence=args.inter,
                          intra_divergence=args.intra, target_language=args.target)
    if args.config:
        cfg = load_config(run.input(args.config)).synthetic or cfg
    data = generate_synthetic(cfg, stage_rng(args.seed, 0))
    run.lap("generate")
    out = Path(args.output)
    entries = []
    for lang in data.languages:
        name = f"{lang}.tsv"
        run.write(name, data.corpora[lang].to_text())
        entries.append(ManifestEntry(out / name, data.corpora[lang].meta))
    write_manifest(out / "manifest.tsv", entries)
    run.outputs.append(out / "manifest.tsv")
    run.write("gold.nwk", data.tree.to_newick() + "\n")
    run.write("families.tsv", "language\tfamily\n" + "".join(f"{k}\t{v}\n" for k, v in sorted(data.families.items())))


# --- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _report_error("usage", message)
        sys.exit(EXIT_USAGE)


def _common(p: argparse.ArgumentParser, formats: Sequence[str], default: str):
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--output", "-o", help="output directory; without it results go to stdout")
    p.add_argument("--format", choices=formats, default=default,
                   help=f"output format (default: {default or 'plain text'})")


def _feature_flags(p, many: bool = False):
    if many:
        p.add_argument("--features", nargs="+", choices=list(FEATURE_SETS), default=["pos_trigrams"])
    else:
        p.add_argument("--features", choices=list(FEATURE_SETS), default="pos_trigrams+function_words")
    p.add_argument("--top-k", type=int, default=1000, help="number of POS trigrams kept")
    p.add_argument("--target", default="en", help="target (translation) language")
    p.add_argument("--function-words", help="lexicon file overriding the shipped list")
    p.add_argument("--cohesive-markers", help="lexicon file overriding the shipped list")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="transphylo", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate corpora listed in a manifest")
    p.add_argument("--manifest", help="manifest TSV (path, source_language, target_language, status)")
    p.add_argument("--corpus", help="register this tagged file into --manifest")
    p.add_argument("--source", help="source language of --corpus")
    p.add_argument("--target", default="en")
    p.add_argument("--status", default="translated-direct")
    _common(p, ["csv", "json"], "csv")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="feature matrix over fixed-size chunks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--chunk-tokens", type=int, default=2000)
    _feature_flags(p)
    _common(p, ["csv", "json"], "csv")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("classify", help="cross-validated O-vs-T or source-language classification")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=["ot", "source_id"], default="ot")
    p.add_argument("--chunks", type=int, help="chunks per class (default 200 for ot, 100 for source_id)")
    p.add_argument("--chunk-tokens", type=int, help="tokens per chunk (default 2000 for ot, 1000 for source_id)")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--C", type=float, default=1.0, help="SVM box constraint")
    p.add_argument("--families", help="language-to-family TSV for the collapsed view")
    p.add_argument("--shuffle-labels", action="store_true", help="permute labels (chance-level control)")
    _feature_flags(p, many=True)
    _common(p, ["csv", "json"], "csv")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("cluster", help="Ward tree over languages")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tokens", type=_budget, default=MAX_COMMON, help=f"tokens per language or {MAX_COMMON}")
    p.add_argument("--include-originals", action="store_true")
    _feature_flags(p)
    _common(p, ["newick", "ascii", "svg", "json"], "newick")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("evaluate", help="normalized distance between a tree and the gold tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--mode", choices=["unweighted", "weighted", "both"], default="unweighted")
    p.add_argument("--samples", type=int, default=DEFAULT_NORM_SAMPLES,
                   help="random trees used for the normalization constant")
    p.add_argument("--norm-seed", type=int, default=NORM_SEED)
    _common(p, ["csv", "json"], None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="interference phenomenon rates")
    p.add_argument("--manifest")
    p.add_argument("--families", help="language-to-family TSV (default: shipped 17-language map)")
    p.add_argument("--corpus", help="count a single tagged file instead")
    p.add_argument("--source")
    p.add_argument("--target", default="en")
    p.add_argument("--status", default="translated-direct")
    p.add_argument("--window", type=int, default=2, help="auxiliary-to-participle window")
    _common(p, ["csv", "json"], "csv")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("experiment", help="run experiments from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
    p.add_argument("--seed", type=int, default=None, help="override the config's seed")
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=["json", "csv", "ascii", "svg"], default="json")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("synth", help="generate synthetic corpora with a planted tree")
    p.add_argument("--config", help="take the [synthetic] section of this config")
    p.add_argument("--families", type=int, default=3)
    p.add_argument("--languages-per-family", type=int, default=4)
    p.add_argument("--tokens", type=int, default=30_000)
    p.add_argument("--inter", type=float, default=1.0, help="inter-family branch length")
    p.add_argument("--intra", type=float, default=0.35, help="intra-family branch length")
    p.add_argument("--target", default="en")
    _common(p, ["csv"], "csv")
    p.set_defaults(func=cmd_synth)
    return parser


def _report_error(kind: str, message: str):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    run = Run(args)
    try:
        args.func(args, run)
        run.finish()
    except (UsageError, ConfigError) as exc:
        _report_error("usage", str(exc))
        return EXIT_USAGE
    except NewickError as exc:
        _report_error("data", str(exc))
        return EXIT_DATA
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        _report_error("io", str(exc))
        return EXIT_IO
    except DATA_ERRORS as exc:
        _report_error("data", str(exc))
        return EXIT_DATA
    except OSError as exc:
        _report_error("io", str(exc))
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        _report_error("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
