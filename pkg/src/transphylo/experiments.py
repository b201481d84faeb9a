"""End-to-end experiment drivers: O-vs-T detection, source-language
identification and phylogenetic tree reconstruction.

Every random choice is drawn from a generator derived from the master seed
and a fixed stage key, so each stage is reproducible on its own and
reports can be regenerated exactly from their embedded config.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import __version__
from .classify import collapse_families, cross_validate
from .corpus import (MAX_COMMON, Chunk, CorpusError, TaggedCorpus, chunk, load_manifest,
                     sample_chunks, sample_equal)
from .features import (FeatureKind, FeatureSpec, apply_minmax, build_lexicon_spec, build_trigram_spec,
                       combine_specs, default_lexicon, extract, extract_matrix, fit_minmax, minmax_scale,
                       read_lexicon)
from .phylo import PhyloTree, euclidean_distances, parse_newick, project_gold, read_newick, ward_cluster
from .synthetic import SyntheticConfig, generate_ot_pair, generate_synthetic
from .treedist import Mode, dist, estimate_norm_constant, normalize, random_baseline


class ConfigError(ValueError):
    pass


# stage keys for seed derivation
_DATA, _OT, _SOURCE, _TREES, _BASELINE = range(5)

FEATURE_SETS = {
    "pos_trigrams": (FeatureKind.POS_TRIGRAMS,),
    "function_words": (FeatureKind.FUNCTION_WORDS,),
    "cohesive_markers": (FeatureKind.COHESIVE_MARKERS,),
    "pos_trigrams+function_words": (FeatureKind.POS_TRIGRAMS, FeatureKind.FUNCTION_WORDS),
}


def stage_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *key]))


@dataclass(frozen=True)
class OTConfig:
    feature_sets: tuple = ("pos_trigrams", "function_words", "cohesive_markers")
    chunks: int = 200
    chunk_tokens: int = 2000
    folds: int = 10
    top_k: int = 1000
    C: float = 1.0
    shuffle_labels: bool = False


@dataclass(frozen=True)
class SourceIDConfig:
    feature_sets: tuple = ("pos_trigrams",)
    chunks: int = 100
    chunk_tokens: int = 1000
    folds: int = 10
    top_k: int = 1000
    C: float = 1.0


@dataclass(frozen=True)
class TreeConfig:
    feature_sets: tuple = ("pos_trigrams+function_words", "pos_trigrams", "function_words", "cohesive_markers")
    repetitions: int = 50
    tokens_per_language: Union[int, str] = MAX_COMMON
    top_k: int = 1000
    baseline_draws: int = 1000
    norm_samples: int = 10_000
    norm_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a report.

    Data come either from a corpus ``manifest`` or, when ``synthetic`` is
    set, from the planted-tree generator (``ot_divergence`` controls how far
    the synthetic translated corpus drifts from the original).
    """

    seed: int = 0
    experiments: tuple = ("ot", "source_id", "trees")
    target_language: str = "en"
    manifest: Optional[str] = None
    gold: Optional[str] = None
    families: Optional[str] = None
    function_words: Optional[str] = None
    cohesive_markers: Optional[str] = None
    synthetic: Optional[SyntheticConfig] = None
    ot_divergence: float = 1.5
    jobs: int = 1
    ot: OTConfig = field(default_factory=OTConfig)
    source_id: SourceIDConfig = field(default_factory=SourceIDConfig)
    trees: TreeConfig = field(default_factory=TreeConfig)

    def validate(self):
        unknown = set(self.experiments) - {"ot", "source_id", "trees"}
        if unknown:
            raise ConfigError(f"unknown experiments: {', '.join(sorted(unknown))}")
        if self.manifest is None and self.synthetic is None:
            raise ConfigError("config needs either data.manifest or a [synthetic] section")
        for sub in (self.ot, self.source_id, self.trees):
            for fs in sub.feature_sets:
                if fs not in FEATURE_SETS:
                    raise ConfigError(f"unknown feature set {fs!r}; choose from {', '.join(FEATURE_SETS)}")
        counts = [self.ot.chunks, self.ot.chunk_tokens, self.ot.top_k, self.source_id.chunks,
                  self.source_id.chunk_tokens, self.source_id.top_k, self.trees.repetitions,
                  self.trees.top_k, self.trees.norm_samples, self.jobs]
        if any(c < 1 for c in counts):
            raise ConfigError("all counts must be >= 1")
        if self.ot.folds < 2 or self.source_id.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.trees.baseline_draws < 2:
            raise ConfigError("baseline_draws must be >= 2")
        tpl = self.trees.tokens_per_language
        if tpl != MAX_COMMON and (not isinstance(tpl, int) or tpl < 1):
            raise ConfigError("trees.tokens_per_language must be a positive integer or 'max-common'")
        if self.synthetic is not None:
            self.synthetic.validate()
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        del d["jobs"]  # execution detail; results do not depend on it
        d["experiments"] = list(self.experiments)
        for sub in ("ot", "source_id", "trees"):
            d[sub]["feature_sets"] = list(d[sub]["feature_sets"])
        return d


# --- config file --------------------------------------------------------

def _coerce(value: str, like):
    if isinstance(like, bool):
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(like, tuple):
        return tuple(x.strip() for x in value.split(",") if x.strip())
    if isinstance(like, int) and not isinstance(like, bool):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value.strip()


def _section(parser: configparser.ConfigParser, name: str, cls, base):
    if not parser.has_section(name):
        return base
    known = {f.name: getattr(base, f.name) for f in fields(cls)}
    updates = {}
    for key, value in parser.items(name):
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        like = known[key]
        if key == "tokens_per_language" and cls is TreeConfig:
            try:
                updates[key] = MAX_COMMON if value.strip() == MAX_COMMON else int(value)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from None
        else:
            try:
                updates[key] = _coerce(value, like)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from None
    return replace(base, **updates)


def load_config(path: Union[str, Path], seed: Optional[int] = None) -> ExperimentConfig:
    """Read an INI-style experiment config.

    Sections: ``[experiment]`` (seed, experiments, target_language, jobs,
    ot_divergence), ``[data]`` (manifest, gold, families, function_words,
    cohesive_markers; paths relative to the config file), ``[synthetic]``,
    ``[ot]``, ``[source_id]`` and ``[trees]``.  ``seed`` overrides the file.
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    extra = set(parser.sections()) - {"experiment", "data", "synthetic", "ot", "source_id", "trees"}
    if extra:
        raise ConfigError(f"{path}: unknown sections {', '.join(sorted(extra))}")
    cfg = ExperimentConfig()
    top = {}
    if parser.has_section("experiment"):
        for key, value in parser.items("experiment"):
            if key not in ("seed", "experiments", "target_language", "jobs", "ot_divergence"):
                raise ConfigError(f"[experiment] unknown key {key!r}")
            try:
                top[key] = _coerce(value, getattr(cfg, key))
            except ValueError as exc:
                raise ConfigError(f"[experiment] {key}: {exc}") from None
    if parser.has_section("data"):
        for key, value in parser.items("data"):
            if key not in ("manifest", "gold", "families", "function_words", "cohesive_markers"):
                raise ConfigError(f"[data] unknown key {key!r}")
            p = Path(value.strip())
            top[key] = str(p if p.is_absolute() else (path.parent / p))
    if parser.has_section("synthetic"):
        top["synthetic"] = _section(parser, "synthetic", SyntheticConfig, SyntheticConfig())
    top["ot"] = _section(parser, "ot", OTConfig, cfg.ot)
    top["source_id"] = _section(parser, "source_id", SourceIDConfig, cfg.source_id)
    top["trees"] = _section(parser, "trees", TreeConfig, cfg.trees)
    if seed is not None:
        top["seed"] = seed
    return replace(cfg, **top).validate()


# --- data -----------------------------------------------------------------

@dataclass
class ExperimentData:
    originals: dict[str, TaggedCorpus]     # source language -> original-language corpus in the target
    translations: dict[str, TaggedCorpus]  # source language -> translated corpus in the target
    gold: Optional[PhyloTree]
    families: dict[str, str]
    lexicons: dict[FeatureKind, list[str]]


def read_families(path: Union[str, Path]) -> dict[str, str]:
    """Two-column TSV ``language<TAB>family`` with a header row."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r and not r[0].startswith("#")]
    return {r[0].strip(): r[1].strip() for r in rows[1:]}


def default_families() -> dict[str, str]:
    text = (resources.files("transphylo") / "data" / "families_ie17.tsv").read_text(encoding="utf-8")
    rows = [line.split("\t") for line in text.splitlines()[1:] if line.strip()]
    return {a: b for a, b in rows}


def default_gold() -> PhyloTree:
    return parse_newick((resources.files("transphylo") / "data" / "gold_ie17.nwk").read_text(encoding="utf-8"))


def _lexicons(cfg: ExperimentConfig) -> dict[FeatureKind, list[str]]:
    out = {}
    for kind, override in ((FeatureKind.FUNCTION_WORDS, cfg.function_words),
                           (FeatureKind.COHESIVE_MARKERS, cfg.cohesive_markers)):
        out[kind] = read_lexicon(override) if override else default_lexicon(kind, cfg.target_language)
    return out


def _synthetic_data(cfg: ExperimentConfig, tokens: int) -> tuple:
    scfg = replace(cfg.synthetic, tokens_per_language=max(tokens, cfg.synthetic.tokens_per_language),
                   target_language=cfg.target_language)
    return generate_synthetic(scfg, stage_rng(cfg.seed, _DATA, tokens))


def load_data(cfg: ExperimentConfig, experiment: str) -> ExperimentData:
    """Corpora and reference data for one experiment."""
    lex = _lexicons(cfg)
    if cfg.synthetic is not None:
        if experiment == "ot":
            n = int(cfg.ot.chunks * cfg.ot.chunk_tokens * 1.1) + 10 * cfg.ot.chunk_tokens
            scfg = replace(cfg.synthetic, tokens_per_language=n, target_language=cfg.target_language)
            pair = generate_ot_pair(scfg, cfg.ot_divergence, stage_rng(cfg.seed, _DATA, _OT))
            return ExperimentData({"o": pair["o"]}, {"t": pair["t"]}, None, {}, lex)
        tokens = 0
        if experiment == "source_id":
            tokens = int(cfg.source_id.chunks * cfg.source_id.chunk_tokens * 1.1) + 10 * cfg.source_id.chunk_tokens
        data = _synthetic_data(cfg, tokens)
        return ExperimentData({}, data.corpora, data.tree, data.families, lex)
    corpora = load_manifest(cfg.manifest)
    originals, translations = {}, {}
    for c in corpora:
        if c.meta.target_language != cfg.target_language:
            continue
        bucket = translations if c.meta.status.translated else originals
        lang = c.meta.source_language
        if lang in bucket:
            # several files for one language: concatenate
            bucket[lang] = TaggedCorpus(bucket[lang].sentences + c.sentences, bucket[lang].meta)
        else:
            bucket[lang] = c
    gold = read_newick(cfg.gold) if cfg.gold else default_gold()
    families = read_families(cfg.families) if cfg.families else default_families()
    return ExperimentData(originals, translations, gold, families, lex)


# --- features ---------------------------------------------------------------

def build_spec(feature_set: str, chunks: Sequence[Chunk], lexicons: Mapping[FeatureKind, Sequence[str]],
               top_k: int) -> FeatureSpec:
    parts = []
    for kind in FEATURE_SETS[feature_set]:
        if kind is FeatureKind.POS_TRIGRAMS:
            parts.append(build_trigram_spec(chunks, top_k))
        else:
            parts.append(build_lexicon_spec(kind, lexicons[kind]))
    return parts[0] if len(parts) == 1 else combine_specs(*parts)


class ChunkFeaturizer:
    """Per-fold preprocessing: fit the feature spec and the min-max scaler on training chunks only."""

    def __init__(self, feature_set: str, lexicons, top_k: int):
        self.feature_set = feature_set
        self.lexicons = lexicons
        self.top_k = top_k

    def __call__(self, train, train_labels, test):
        spec = build_spec(self.feature_set, train, self.lexicons, self.top_k)
        Xtr = extract_matrix(train, spec)
        Xte = extract_matrix(test, spec)
        lo, span = fit_minmax(Xtr)
        return apply_minmax(Xtr, lo, span), apply_minmax(Xte, lo, span)


def _chunk_key(ch: Chunk) -> bytes:
    return repr(ch.sentences).encode("utf-8")


# --- reports ----------------------------------------------------------------

def _stats(values: Sequence[float]) -> dict:
    a = np.asarray(values, dtype=float)
    return {"mean": float(a.mean()), "std": float(a.std(ddof=1)) if len(a) > 1 else 0.0, "n": int(len(a))}


def _cm_dict(cm) -> dict:
    return {"labels": list(cm.labels), "counts": cm.counts.tolist(), "accuracy": cm.accuracy}


@dataclass
class ExperimentReport:
    config: dict
    results: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"version": __version__, "seed": self.config["seed"], "config": self.config, "results": self.results}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def tables(self) -> dict[str, str]:
        """CSV tables keyed by file name."""
        out = {}
        ot = self.results.get("ot")
        if ot:
            rows = [[fs, f"{100 * r['accuracy']:.2f}"] for fs, r in ot["feature_sets"].items()]
            out["ot_accuracy.csv"] = _csv(["feature_set", f"accuracy_{ot['target_language']}"], rows)
        sid = self.results.get("source_id")
        if sid:
            for fs, r in sid["feature_sets"].items():
                out[f"source_id_{fs}_confusion.csv"] = _cm_csv(r["confusion"])
                if r.get("family_confusion"):
                    out[f"source_id_{fs}_family_confusion.csv"] = _cm_csv(r["family_confusion"])
            rows = [[fs, f"{100 * r['accuracy']:.2f}",
                     "" if r.get("family_accuracy") is None else f"{100 * r['family_accuracy']:.2f}",
                     f"{100 * r['baseline']:.2f}"] for fs, r in sid["feature_sets"].items()]
            out["source_id_accuracy.csv"] = _csv(["feature_set", "accuracy", "family_accuracy", "baseline"], rows)
        trees = self.results.get("trees")
        if trees:
            for mode in (Mode.UNWEIGHTED.value, Mode.WEIGHTED.value):
                rows = [[fs, f"{r[mode]['mean']:.3f}", f"{r[mode]['std']:.3f}"]
                        for fs, r in trees["feature_sets"].items()]
                base = trees["random_tree"][mode]
                rows.append(["random_tree", f"{base['mean']:.3f}", f"{base['std']:.3f}"])
                out[f"trees_{mode}.csv"] = _csv(["feature_set", "avg", "std"], rows)
        return out

    def write(self, outdir: Union[str, Path]) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = [outdir / "report.json"]
        written[0].write_text(self.to_json(), encoding="utf-8")
        for name, text in self.tables().items():
            p = outdir / name
            p.write_text(text, encoding="utf-8")
            written.append(p)
        trees = self.results.get("trees")
        if trees:
            for fs, r in trees["feature_sets"].items():
                p = outdir / f"tree_{fs.replace('+', '_')}.nwk"
                p.write_text(r["example_tree"] + "\n", encoding="utf-8")
                written.append(p)
            p = outdir / "gold.nwk"
            p.write_text(trees["gold"] + "\n", encoding="utf-8")
            written.append(p)
        return written


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cm_csv(cm: dict) -> str:
    rows = [[lab, *row] for lab, row in zip(cm["labels"], cm["counts"])]
    return _csv(["actual\\predicted", *cm["labels"]], rows)


# --- experiments ----------------------------------------------------------

def run_ot_classification(cfg: ExperimentConfig, data: Optional[ExperimentData] = None) -> dict:
    """Original vs. translated classification with stratified k-fold CV per feature set."""
    data = data or load_data(cfg, "ot")
    oc = cfg.ot
    if not data.originals:
        raise CorpusError(f"no original ({cfg.target_language}) corpus")
    if not data.translations:
        raise CorpusError(f"no translated corpora into {cfg.target_language}")
    rng = stage_rng(cfg.seed, _OT)
    o_chunks = [c for lang in sorted(data.originals) for c in chunk(data.originals[lang], oc.chunk_tokens)]
    t_chunks = [c for lang in sorted(data.translations) for c in chunk(data.translations[lang], oc.chunk_tokens)]
    o_chunks = sample_chunks(o_chunks, oc.chunks, rng, "original")
    t_chunks = sample_chunks(t_chunks, oc.chunks, rng, "translated")
    items = o_chunks + t_chunks
    labels = ["O"] * len(o_chunks) + ["T"] * len(t_chunks)
    if oc.shuffle_labels:
        labels = [labels[i] for i in rng.permutation(len(labels))]
    keys = [_chunk_key(c) for c in items]
    out = {}
    for fs in oc.feature_sets:
        res = cross_validate(items, labels, oc.folds, oc.C, stage_rng(cfg.seed, _OT, len(out) + 1),
                             fit_transform=ChunkFeaturizer(fs, data.lexicons, oc.top_k),
                             labels=["O", "T"], keys=keys)
        out[fs] = {"accuracy": res.accuracy, "confusion": _cm_dict(res.confusion),
                   "fold_accuracies": list(res.fold_accuracies)}
    return {"target_language": cfg.target_language, "chunks_per_class": oc.chunks,
            "chunk_tokens": oc.chunk_tokens, "folds": oc.folds, "feature_sets": out}


def run_source_id(cfg: ExperimentConfig, data: Optional[ExperimentData] = None) -> dict:
    """k-way source-language classification, plus the family-collapsed view."""
    data = data or load_data(cfg, "source_id")
    sc = cfg.source_id
    langs = sorted(data.translations)
    if len(langs) < 2:
        raise CorpusError("source identification needs at least two source languages")
    rng = stage_rng(cfg.seed, _SOURCE)
    items, labels = [], []
    for lang in langs:
        picked = sample_chunks(chunk(data.translations[lang], sc.chunk_tokens), sc.chunks, rng, lang)
        items.extend(picked)
        labels.extend([lang] * len(picked))
    keys = [_chunk_key(c) for c in items]
    has_families = all(lang in data.families for lang in langs)
    out = {}
    for fs in sc.feature_sets:
        res = cross_validate(items, labels, sc.folds, sc.C, stage_rng(cfg.seed, _SOURCE, len(out) + 1),
                             fit_transform=ChunkFeaturizer(fs, data.lexicons, sc.top_k),
                             labels=langs, keys=keys)
        row = {"accuracy": res.accuracy, "baseline": 1.0 / len(langs), "confusion": _cm_dict(res.confusion),
               "family_accuracy": None, "family_confusion": None}
        if has_families:
            fam = collapse_families(res.confusion, data.families)
            row["family_accuracy"] = fam.accuracy
            row["family_confusion"] = _cm_dict(fam)
        out[fs] = row
    return {"target_language": cfg.target_language, "languages": langs, "chunks_per_language": sc.chunks,
            "chunk_tokens": sc.chunk_tokens, "folds": sc.folds, "feature_sets": out}


def reconstruct_tree(chunks: Mapping[str, Chunk], feature_set: str, lexicons, top_k: int) -> PhyloTree:
    """Feature vectors per language -> min-max scaling -> Euclidean distances -> Ward tree."""
    langs = sorted(chunks)
    spec = build_spec(feature_set, [chunks[lang] for lang in langs], lexicons, top_k)
    vecs = minmax_scale([extract(chunks[lang], spec, lang) for lang in langs])
    return ward_cluster(euclidean_distances(vecs))


_worker_state: dict = {}


def _init_worker(corpora, lexicons):
    _worker_state["corpora"] = corpora
    _worker_state["lexicons"] = lexicons


def _tree_repetition(args) -> list[str]:
    seed, rep, feature_sets, budget, top_k = args
    corpora = _worker_state["corpora"]
    lexicons = _worker_state["lexicons"]
    chunks = sample_equal(corpora, budget, stage_rng(seed, _TREES, rep))
    return [reconstruct_tree(chunks, fs, lexicons, top_k).to_newick() for fs in feature_sets]


def run_tree_experiment(cfg: ExperimentConfig, data: Optional[ExperimentData] = None) -> dict:
    """Repeated tree reconstruction scored against the gold tree, plus a random-tree baseline.

    Each repetition draws one equal-size sample per language and reuses it
    for every feature set, so rows are paired.
    """
    data = data or load_data(cfg, "trees")
    tc = cfg.trees
    corpora = data.translations
    if len(corpora) < 2:
        raise CorpusError("tree reconstruction needs at least two source languages")
    if data.gold is None:
        raise CorpusError("tree reconstruction needs a gold tree")
    missing = sorted(set(corpora) - set(data.gold.leaf_labels))
    if missing:
        raise CorpusError(f"languages absent from the gold tree: {', '.join(missing)}")
    gold = project_gold(data.gold, corpora)
    norms = {m: estimate_norm_constant(gold, m, tc.norm_samples, tc.norm_seed) for m in Mode}
    jobs = [(cfg.seed, rep, tuple(tc.feature_sets), tc.tokens_per_language, tc.top_k)
            for rep in range(tc.repetitions)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs, initializer=_init_worker, initargs=(corpora, data.lexicons)) as ex:
            per_rep = list(ex.map(_tree_repetition, jobs))
    else:
        _init_worker(corpora, data.lexicons)
        per_rep = [_tree_repetition(j) for j in jobs]
    rows = {}
    for k, fs in enumerate(tc.feature_sets):
        trees = [parse_newick(r[k]) for r in per_rep]
        row = {}
        for m in Mode:
            scores = [normalize(dist(t, gold, m), norms[m]) for t in trees]
            row[m.value] = _stats(scores)
        row["example_tree"] = per_rep[0][k]
        rows[fs] = row
    baseline = {}
    for i, m in enumerate(Mode):
        mean, std = random_baseline(gold, m, tc.baseline_draws, stage_rng(cfg.seed, _BASELINE, i), norms[m])
        baseline[m.value] = {"mean": mean, "std": std, "n": tc.baseline_draws}
    budget = tc.tokens_per_language
    return {"target_language": cfg.target_language, "languages": sorted(corpora), "gold": gold.to_newick(),
            "norm_constants": {m.value: norms[m] for m in Mode}, "repetitions": tc.repetitions,
            "tokens_per_language": budget, "feature_sets": rows, "random_tree": baseline}


RUNNERS = {"ot": run_ot_classification, "source_id": run_source_id, "trees": run_tree_experiment}


def run_experiments(cfg: ExperimentConfig) -> ExperimentReport:
    cfg.validate()
    report = ExperimentReport(cfg.to_dict())
    for name in cfg.experiments:
        report.results[name] = RUNNERS[name](cfg)
    return report
