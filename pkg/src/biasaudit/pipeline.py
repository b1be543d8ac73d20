"""The five pipeline stages and their on-disk layout.

Every stage records a fingerprint of its inputs and settings plus the hashes
of the files it wrote under ``<out>/.stages/``.  ``run_pipeline`` skips a
stage whose fingerprint matches and whose outputs are intact.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .config import RunConfig
from .corpus import CorpusError, CorpusRecord, dump_jsonl, parse_jsonl, read_corpus
from .extract import FEATURES, dump_feature_table, extract_corpus, format_value, load_composites, \
    load_feature_table, validate_composites
from .fsutil import atomic_write_text, sha256_bytes, sha256_file
from .genderid import Gender, label_authors, load_name_lexicon, summarize_gender_distribution
from .lexicon import DictionaryError, compile_matcher, load_dictionary
from .providers import Client, check_credentials
from .report import build_manifest, emit_correlation_table, emit_heatmap, emit_significant_t_barchart, \
    emit_ttest_table
from .rewrite import FAILED, OK, ResponseCache, RewriteResult, dump_variants, load_variants, rewrite_corpus
from .rewrite import run_report as rewrite_run_report
from .stats import CorrelationResult, TTestResult, correlation_matrix, gender_gap_tests

logger = logging.getLogger(__name__)

HUMAN = "Human"
STAGES = ("gender", "rewrite", "extract", "compare", "report")


class StageError(Exception):
    exit_code = 1


class InputError(StageError):
    exit_code = 2


class CredentialError(StageError):
    exit_code = 3


class MissingIntermediate(StageError):
    exit_code = 4


@dataclass
class StageResult:
    name: str
    skipped: bool
    outputs: list[Path]
    summary: dict = field(default_factory=dict)


class Layout:
    def __init__(self, out_dir: Path):
        self.out = Path(out_dir)

    @property
    def corpus(self) -> Path:
        return self.out / "gender" / "corpus.jsonl"

    @property
    def distribution(self) -> Path:
        return self.out / "gender" / "distribution.json"

    def variants(self, provider: str) -> Path:
        return self.out / "rewrite" / f"{provider}.jsonl"

    @property
    def rewrite_report(self) -> Path:
        return self.out / "rewrite" / "report.json"

    def features(self, variant: str) -> Path:
        return self.out / "features" / f"{variant}.csv"

    def matrix(self, provider: str) -> Path:
        return self.out / "compare" / f"matrix_{provider}.csv"

    def diagonal(self, provider: str) -> Path:
        return self.out / "compare" / f"diagonal_{provider}.csv"

    @property
    def ttests(self) -> Path:
        return self.out / "compare" / "ttests.csv"

    def report(self, name: str) -> Path:
        return self.out / "report" / name

    def state(self, stage: str) -> Path:
        return self.out / ".stages" / f"{stage}.json"


def _rel(layout: Layout, path: Path) -> str:
    try:
        return str(path.relative_to(layout.out))
    except ValueError:
        return str(path)


def _require(paths: Mapping[str, Path]) -> dict[str, str]:
    hashes = {}
    for role, path in paths.items():
        if not path.is_file():
            raise MissingIntermediate(f"missing intermediate {path}; run the upstream stage first")
        hashes[role] = sha256_file(path)
    return hashes


def _run_stage(
    cfg: RunConfig,
    name: str,
    inputs: Mapping[str, Path],
    params: dict,
    body: Callable[[], tuple[list[Path], dict]],
    force: bool,
) -> StageResult:
    layout = Layout(cfg.out_dir)
    fp = sha256_bytes(json.dumps({"stage": name, "params": params, "inputs": _require(inputs)},
                                 sort_keys=True).encode())
    state_path = layout.state(name)
    if not force and state_path.is_file():
        state = json.loads(state_path.read_text(encoding="utf-8"))
        outputs = [layout.out / rel for rel in state["outputs"]]
        if state.get("fingerprint") == fp and all(
            p.is_file() and sha256_file(p) == digest for p, digest in zip(outputs, state["outputs"].values())
        ):
            logger.info("stage %s up to date", name)
            return StageResult(name, True, outputs, state.get("summary", {}))
    outputs, summary = body()
    state = {"fingerprint": fp, "outputs": {_rel(layout, p): sha256_file(p) for p in outputs}, "summary": summary}
    atomic_write_text(state_path, json.dumps(state, indent=1, sort_keys=True) + "\n")
    return StageResult(name, False, outputs, summary)


def _input_files(cfg: RunConfig) -> dict[str, Path]:
    return {"corpus": cfg.corpus, "dictionary": cfg.dictionary, "composites": cfg.composites, "names": cfg.names}


# ---------------------------------------------------------------------------
# stages


def run_gender(cfg: RunConfig, force: bool = True) -> StageResult:
    layout = Layout(cfg.out_dir)

    def body():
        try:
            records = read_corpus(cfg.corpus)
            lexicon = load_name_lexicon(cfg.names)
        except (OSError, CorpusError, ValueError, KeyError) as exc:
            raise InputError(str(exc)) from exc
        labelled = [
            CorpusRecord(r.id, r.title, r.abstract, r.authors, label_authors(r.authors, lexicon, cfg.threshold))
            for r in records
        ]
        dist = {g.value: n for g, n in summarize_gender_distribution(labelled).items()}
        dist["total"] = len(labelled)
        atomic_write_text(layout.corpus, dump_jsonl(labelled))
        atomic_write_text(layout.distribution, json.dumps(dist, indent=1) + "\n")
        return [layout.corpus, layout.distribution], dist

    for p in (cfg.corpus, cfg.names):
        if not Path(p).is_file():
            raise InputError(f"cannot read {p}")
    return _run_stage(cfg, "gender", {"corpus": cfg.corpus, "names": cfg.names},
                      {"threshold": cfg.threshold}, body, force)


def _load_annotated(layout: Layout) -> list[CorpusRecord]:
    if not layout.corpus.is_file():
        raise MissingIntermediate(f"missing intermediate {layout.corpus}; run 'gender' first")
    return parse_jsonl(layout.corpus.read_text(encoding="utf-8"), str(layout.corpus))


def run_rewrite(cfg: RunConfig, force: bool = True, clients: Mapping[str, Client] | None = None) -> StageResult:
    layout = Layout(cfg.out_dir)
    providers = cfg.active_providers
    try:
        check_credentials(providers)
    except RuntimeError as exc:
        raise CredentialError(str(exc)) from exc

    def body():
        records = _load_annotated(layout)
        todo = [(r.id, r.abstract) for r in records if r.abstract.strip()]
        skipped = [r.id for r in records if not r.abstract.strip()]
        results = rewrite_corpus(providers, todo, ResponseCache(cfg.cache), cfg.max_in_flight, clients,
                                 max_attempts=cfg.max_attempts, backoff=cfg.backoff)
        for p in providers:
            results += [RewriteResult(rid, p.name, "", FAILED, "", 0, False, "empty abstract") for rid in skipped]
        order = {r.id: i for i, r in enumerate(records)}
        outputs = []
        for p in providers:
            rows = sorted((r for r in results if r.provider == p.name), key=lambda r: order[r.record_id])
            atomic_write_text(layout.variants(p.name), dump_variants(rows))
            outputs.append(layout.variants(p.name))
        report = rewrite_run_report(results, providers)
        atomic_write_text(layout.rewrite_report, json.dumps(report, indent=1, sort_keys=True) + "\n")
        summary = {name: {k: v[k] for k in ("ok", "refused", "failed", "requests")} for name, v in report.items()}
        return outputs + [layout.rewrite_report], summary

    params = {"providers": cfg.identity()["providers"]}
    return _run_stage(cfg, "rewrite", {"corpus": layout.corpus}, params, body, force)


def run_extract(cfg: RunConfig, force: bool = True) -> StageResult:
    layout = Layout(cfg.out_dir)
    providers = cfg.active_providers

    def body():
        try:
            lexicon = load_dictionary(cfg.dictionary)
            composites = load_composites(cfg.composites)
            validate_composites(composites, lexicon.names.values())
        except DictionaryError as exc:
            raise InputError(f"{cfg.dictionary}: {exc}") from exc
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise InputError(str(exc)) from exc
        matcher = compile_matcher(lexicon)
        records = _load_annotated(layout)
        docs: list[tuple[str, str, str]] = [(r.id, HUMAN, r.abstract) for r in records]
        for p in providers:
            rows = load_variants(layout.variants(p.name).read_text(encoding="utf-8"))
            docs += [(row["id"], p.name, row["text"]) for row in rows if row["status"] == OK]
        try:
            vectors = extract_corpus(matcher, composites, docs, workers=cfg.workers)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        outputs, summary = [], {}
        for variant in [HUMAN] + [p.name for p in providers]:
            rows = [v for v in vectors if v.variant == variant]
            atomic_write_text(layout.features(variant), dump_feature_table(rows))
            outputs.append(layout.features(variant))
            summary[variant] = {"rows": len(rows), "degenerate": sum(v.degenerate for v in rows)}
        return outputs, summary

    inputs = {"dictionary": cfg.dictionary, "composites": cfg.composites, "corpus": layout.corpus}
    inputs.update({f"variants:{p.name}": layout.variants(p.name) for p in providers})
    return _run_stage(cfg, "extract", inputs, {"models": [p.name for p in providers]}, body, force)


CORR_HEADER = ("feature_a", "feature_b", "r", "p", "n")
TTEST_HEADER = ("variant", "feature", "t", "df", "p", "mean_female", "mean_male", "n_female", "n_male", "significant")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _read_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def run_compare(cfg: RunConfig, force: bool = True) -> StageResult:
    layout = Layout(cfg.out_dir)
    providers = cfg.active_providers

    def body():
        tables = {}
        for variant in [HUMAN] + [p.name for p in providers]:
            tables[variant] = load_feature_table(layout.features(variant).read_text(encoding="utf-8"))
        genders = {r.id: r.gender.value if r.gender else Gender.UNKNOWN.value for r in _load_annotated(layout)}
        outputs, summary = [], {"correlation_n": {}, "ttest_n": {}}
        for p in providers:
            try:
                matrix = correlation_matrix(tables[HUMAN], tables[p.name])
            except ValueError as exc:
                raise StageError(f"{p.name}: {exc}") from exc
            rows = [
                (c.feature_a, c.feature_b, format_value(c.r), format_value(c.p), c.n)
                for row in matrix.cells for c in row
            ]
            atomic_write_text(layout.matrix(p.name), _csv_text(CORR_HEADER, rows))
            diag = [(c.feature_a, c.feature_b, format_value(c.r), format_value(c.p), c.n) for c in matrix.diagonal()]
            atomic_write_text(layout.diagonal(p.name), _csv_text(CORR_HEADER, diag))
            outputs += [layout.matrix(p.name), layout.diagonal(p.name)]
            summary["correlation_n"][p.name] = {c.feature_a: c.n for c in matrix.diagonal()}
        tests = gender_gap_tests(tables, genders, alpha=cfg.alpha, equal_var=cfg.equal_var, bonferroni=cfg.bonferroni)
        rows = []
        for variant, results in tests.items():
            for r in results:
                rows.append((variant, r.feature, format_value(r.t), format_value(r.df), format_value(r.p),
                             format_value(r.mean_female), format_value(r.mean_male), r.n_female, r.n_male,
                             int(r.significant)))
            summary["ttest_n"][variant] = {"female": results[0].n_female, "male": results[0].n_male,
                                           "significant": sum(r.significant for r in results)}
        atomic_write_text(layout.ttests, _csv_text(TTEST_HEADER, rows))
        outputs.append(layout.ttests)
        return outputs, summary

    inputs = {"corpus": layout.corpus}
    inputs.update({f"features:{v}": layout.features(v) for v in [HUMAN] + [p.name for p in providers]})
    params = {"alpha": cfg.alpha, "equal_var": cfg.equal_var, "bonferroni": cfg.bonferroni}
    return _run_stage(cfg, "compare", inputs, params, body, force)


def _float(s: str) -> float:
    return math.nan if s == "NaN" else float(s)


def load_matrix(path: Path) -> list[list[CorrelationResult]]:
    cells = [CorrelationResult(r["feature_a"], r["feature_b"], _float(r["r"]), _float(r["p"]), int(r["n"]))
             for r in _read_csv(path)]
    k = len(FEATURES)
    return [cells[i * k:(i + 1) * k] for i in range(k)]


def load_ttests(path: Path) -> dict[str, list[TTestResult]]:
    out: dict[str, list[TTestResult]] = {}
    for r in _read_csv(path):
        out.setdefault(r["variant"], []).append(TTestResult(
            r["feature"], _float(r["t"]), _float(r["df"]), _float(r["p"]), _float(r["mean_female"]),
            _float(r["mean_male"]), int(r["n_female"]), int(r["n_male"]), r["significant"] == "1"))
    return out


def run_report(cfg: RunConfig, force: bool = True) -> StageResult:
    layout = Layout(cfg.out_dir)
    providers = cfg.active_providers
    names = [p.name for p in providers]

    def body():
        diagonals, outputs = {}, []
        for name in names:
            matrix = load_matrix(layout.matrix(name))
            diagonals[name] = [matrix[i][i] for i in range(len(FEATURES))]
            r_path = layout.report(f"heatmap_r_{name}.svg")
            p_path = layout.report(f"heatmap_p_{name}.svg")
            emit_heatmap([[c.r for c in row] for row in matrix], FEATURES, FEATURES, "diverging", r_path,
                         title=f"Pearson r: {HUMAN} (rows) vs {name} (columns)")
            emit_heatmap([[c.p for c in row] for row in matrix], FEATURES, FEATURES, "sequential", p_path,
                         title=f"p-value of Pearson r: {HUMAN} vs {name}", alpha=cfg.alpha)
            outputs += [r_path, p_path]
        corr_path = layout.report("correlation_table.csv")
        atomic_write_text(corr_path, emit_correlation_table(diagonals))
        tests = load_ttests(layout.ttests)
        tt_path = layout.report("ttest_table.csv")
        atomic_write_text(tt_path, emit_ttest_table(tests))
        bar_path = layout.report("significant_t.svg")
        emit_significant_t_barchart(tests, cfg.alpha, bar_path)
        outputs = [corr_path, tt_path] + outputs + [bar_path]

        emitted = sorted(
            (p for p in layout.out.rglob("*") if p.is_file() and _is_artifact(layout, p)),
            key=lambda p: _rel(layout, p),
        )
        emitted = sorted(set(emitted) | set(outputs), key=lambda p: _rel(layout, p))
        stage_summaries = {}
        for stage in STAGES[:-1]:
            sp = layout.state(stage)
            if sp.is_file():
                stage_summaries[stage] = json.loads(sp.read_text(encoding="utf-8")).get("summary", {})
        n_per_cell = {
            "correlation": {m: {c.feature_a: c.n for c in d} for m, d in diagonals.items()},
            "ttest": {v: {r.feature: [r.n_female, r.n_male] for r in rows} for v, rows in tests.items()},
        }
        manifest = build_manifest(
            layout.out, emitted, _input_files(cfg), cfg.hash(), sha256_file(cfg.dictionary),
            stage_summaries, n_per_cell,
        )
        manifest_path = layout.report("manifest.json")
        atomic_write_text(manifest_path, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        return outputs + [manifest_path], {"significant_features": len({r.feature for rows in tests.values()
                                                                         for r in rows if r.significant})}

    inputs: dict[str, Path] = {"ttests": layout.ttests}
    inputs.update({f"matrix:{n}": layout.matrix(n) for n in names})
    inputs.update(_input_files(cfg))
    return _run_stage(cfg, "report", inputs, {"alpha": cfg.alpha, "config": cfg.hash()}, body, force)


def _is_artifact(layout: Layout, path: Path) -> bool:
    rel = path.relative_to(layout.out).parts
    return rel[0] in ("gender", "rewrite", "features", "compare", "report") and not path.name.startswith(".") \
        and path.name != "manifest.json"


STAGE_FUNCS = {
    "gender": run_gender,
    "rewrite": run_rewrite,
    "extract": run_extract,
    "compare": run_compare,
    "report": run_report,
}


def run_pipeline(cfg: RunConfig, clients: Mapping[str, Client] | None = None,
                 on_stage: Callable[[StageResult], None] | None = None) -> list[StageResult]:
    results = []
    for name in STAGES:
        if name == "rewrite":
            res = run_rewrite(cfg, force=False, clients=clients)
        else:
            res = STAGE_FUNCS[name](cfg, force=False)
        results.append(res)
        if on_stage:
            on_stage(res)
    return results
