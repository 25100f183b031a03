"""Audit orchestration: sample every covering-array subgroup, score the
classifier's answers, rank subgroups by risk, and assemble a reproducible
report.

Risk here is the configured aggregate (median by default) of per-sample
losses; the baseline risk of the deployed model is assumed to be zero and
recorded as such in the report metadata.  All randomness is derived from
content hashes, so reports are byte-identical across worker counts.
"""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backends.base import (
    BackendError,
    ClassDistribution,
    ClassifierBackend,
    GenerationSettings,
    GeneratorBackend,
    PosteriorBackend,
    Sample,
)
from .config import AuditConfig, build_backends
from .covering import CoveringArray, generate_covering_array
from .hashing import canonical_json, derive_seed, fingerprint
from .odd import (
    OperationalDesignDomain,
    PromptTemplate,
    Subgroup,
    enumerate_subgroups,
    instantiate_prompt,
)
from .stats import BinomialCI, clopper_pearson, median

SCHEMA_VERSION = "audit-report/1"
BASELINE_RISK_NOTE = "assumed-zero"


class AuditError(RuntimeError):
    """The audit as a whole could not produce a report."""


# ---------------------------------------------------------------------------
# scoring


def score_error(dist: ClassDistribution, source_class: str) -> float:
    """Loss for 'the model stopped seeing the source class': 1 - f(source|x)."""
    return 1.0 - dist.prob(source_class)


def score_misclassification(
    dist: ClassDistribution, target_class: str, source_class: str
) -> float:
    """Loss for 'the model sees the target class instead': f(target|x)."""
    if target_class == source_class:
        raise ValueError("target class must differ from the source class")
    return dist.prob(target_class)


def score_error_01(dist: ClassDistribution, source_class: str) -> float:
    return 0.0 if dist.argmax_class() == source_class else 1.0


def score_misclassification_01(
    dist: ClassDistribution, target_class: str, source_class: str
) -> float:
    if target_class == source_class:
        raise ValueError("target class must differ from the source class")
    return 1.0 if dist.argmax_class() == target_class else 0.0


def subgroup_risk(scores: list[float], aggregator: str = "median") -> float:
    if not scores:
        raise ValueError("no scores to aggregate")
    if aggregator == "median":
        return median(scores)
    if aggregator == "mean":
        return float(np.mean(scores))
    raise ValueError(f"unknown aggregator {aggregator!r}")


@dataclass(frozen=True)
class RiskRecord:
    subgroup: Subgroup
    source_class: str
    target_class: str | None  # None for the error objective
    risk: float
    n_samples: int
    per_sample_scores: tuple[float, ...]


def rank_subgroups(records: list[RiskRecord]) -> list[RiskRecord]:
    """Descending risk; exact ties fall back to lexicographic subgroup order."""
    if not records:
        return []
    objectives = {(r.source_class, r.target_class) for r in records}
    if len(objectives) != 1:
        raise ValueError(f"cannot rank mixed objectives: {sorted(map(str, objectives))}")
    return sorted(records, key=lambda r: (-r.risk, r.subgroup))


def subgroup_rank(ranked: list[RiskRecord], z: Subgroup) -> int:
    """1-based position of a subgroup in an already-ranked record list."""
    for i, r in enumerate(ranked, start=1):
        if r.subgroup == z:
            return i
    raise KeyError(f"subgroup {z} not present in the ranking")


def prediction_histogram(dists: list[ClassDistribution]) -> dict[str, int]:
    """Counts of argmax predictions; ties already resolve to the first name."""
    if not dists:
        raise ValueError("no distributions to histogram")
    out: dict[str, int] = {}
    for d in dists:
        c = d.argmax_class()
        out[c] = out.get(c, 0) + 1
    return out


# ---------------------------------------------------------------------------
# report


@dataclass
class SubgroupFailure:
    subgroup: Subgroup
    prompt: str
    reason: str


@dataclass
class AuditReport:
    config_fingerprint: str
    seed: int
    aggregator: str
    loss: str
    odd: OperationalDesignDomain
    covering_strength: int
    covering_fingerprint: str
    n_rows: int
    rows: list[dict]  # per covering row: subgroup, prompt, histogram
    objectives: list[dict]  # kind/target, records, ranking
    failures: list[SubgroupFailure]
    recheck: list[dict] = field(default_factory=list)
    baseline_risk: str = BASELINE_RISK_NOTE
    schema: str = SCHEMA_VERSION
    timing_seconds: float | None = None  # volatile; kept out of the JSON form

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "config_fingerprint": self.config_fingerprint,
            "seed": self.seed,
            "aggregator": self.aggregator,
            "loss": self.loss,
            "baseline_risk": self.baseline_risk,
            "odd": self.odd.to_dict(),
            "covering": {
                "strength": self.covering_strength,
                "fingerprint": self.covering_fingerprint,
                "n_rows": self.n_rows,
            },
            "rows": self.rows,
            "objectives": self.objectives,
            "failures": [
                {"subgroup": list(f.subgroup), "prompt": f.prompt, "reason": f.reason}
                for f in self.failures
            ],
            "recheck": self.recheck,
        }

    def to_json(self) -> str:
        """Canonical, byte-stable JSON (volatile timing excluded)."""
        return json.dumps(
            self.to_dict(), sort_keys=True, separators=(",", ": "), indent=1
        )

    def risk_table(self, objective_index: int) -> dict[Subgroup, float]:
        table = {}
        for rec in self.objectives[objective_index]["records"]:
            table[tuple(rec["subgroup"])] = rec["risk"]
        return table


def _objective_key(target: str | None) -> str:
    return "error" if target is None else f"misclassification:{target}"


def _score_fn(loss: str, target: str | None, source: str):
    if target is None:
        base = score_error if loss == "confidence" else score_error_01
        return lambda d: base(d, source)
    base = score_misclassification if loss == "confidence" else score_misclassification_01
    return lambda d: base(d, target, source)


# ---------------------------------------------------------------------------
# the run itself


def run_audit(
    cfg: AuditConfig,
    generator: GeneratorBackend | None = None,
    classifier: ClassifierBackend | None = None,
) -> AuditReport:
    """Execute the full audit described by a config.

    Backends default to whatever the config selects; pass explicit ones to
    audit a different serving stack through the same engine.
    """
    if generator is None or classifier is None:
        g, c, _ = build_backends(cfg)
        generator = generator or g
        classifier = classifier or c

    odd = cfg.odd
    array = generate_covering_array(odd, cfg.strength, cfg.seed)
    classes = [odd.source_class, *odd.target_classes]
    targets: list[str | None] = [None, *odd.target_classes]

    def work(item: tuple[int, Subgroup]):
        idx, z = item
        prompt = instantiate_prompt(cfg.template, odd, z)
        settings = GenerationSettings(
            n_samples=cfg.n_samples,
            steps=cfg.steps,
            resolution=cfg.resolution,
            seed=derive_seed(cfg.seed, prompt, 0),
        )
        try:
            samples = generator.generate(prompt, settings)
            dists = classifier.classify(samples, classes)
        except BackendError as exc:
            return idx, z, prompt, None, str(exc)
        return idx, z, prompt, dists, None

    items = list(enumerate(array.rows))
    if cfg.parallelism > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(item) for item in items]
    results.sort(key=lambda r: r[0])

    rows: list[dict] = []
    failures: list[SubgroupFailure] = []
    per_target_records: dict[str | None, list[RiskRecord]] = {t: [] for t in targets}
    for idx, z, prompt, dists, err in results:
        if err is not None:
            failures.append(SubgroupFailure(subgroup=z, prompt=prompt, reason=err))
            continue
        rows.append(
            {
                "subgroup": list(z),
                "prompt": prompt,
                "histogram": prediction_histogram(dists),
            }
        )
        for t in targets:
            fn = _score_fn(cfg.loss, t, odd.source_class)
            scores = [fn(d) for d in dists]
            per_target_records[t].append(
                RiskRecord(
                    subgroup=z,
                    source_class=odd.source_class,
                    target_class=t,
                    risk=subgroup_risk(scores, cfg.aggregator),
                    n_samples=len(scores),
                    per_sample_scores=tuple(scores),
                )
            )

    if not rows:
        raise AuditError(
            f"every subgroup failed ({len(failures)} failures); no report to write"
        )

    objectives = []
    for t in targets:
        records = per_target_records[t]
        ranked = rank_subgroups(records)
        objectives.append(
            {
                "kind": _objective_key(t),
                "target_class": t,
                "records": [
                    {
                        "subgroup": list(r.subgroup),
                        "risk": r.risk,
                        "n_samples": r.n_samples,
                        "scores": list(r.per_sample_scores),
                    }
                    for r in records
                ],
                "ranking": [list(r.subgroup) for r in ranked],
            }
        )

    recheck = []
    if cfg.recheck_samples > 0:
        seen: set[Subgroup] = set()
        for obj in objectives:
            top = tuple(obj["ranking"][0])
            if top in seen:
                continue
            seen.add(top)
            prompt = instantiate_prompt(cfg.template, odd, top)
            settings = GenerationSettings(
                n_samples=cfg.recheck_samples,
                steps=cfg.steps,
                resolution=cfg.resolution,
                seed=derive_seed(cfg.seed, prompt, 1),
            )
            try:
                samples = generator.generate(prompt, settings)
                dists = classifier.classify(samples, classes)
            except BackendError as exc:
                recheck.append(
                    {"subgroup": list(top), "prompt": prompt, "error": str(exc)}
                )
                continue
            recheck.append(
                {
                    "subgroup": list(top),
                    "prompt": prompt,
                    "n_samples": cfg.recheck_samples,
                    "histogram": prediction_histogram(dists),
                }
            )

    return AuditReport(
        config_fingerprint=cfg.fingerprint(),
        seed=cfg.seed,
        aggregator=cfg.aggregator,
        loss=cfg.loss,
        odd=odd,
        covering_strength=array.strength,
        covering_fingerprint=fingerprint([list(r) for r in array.rows]),
        n_rows=len(array.rows),
        rows=rows,
        objectives=objectives,
        failures=failures,
        recheck=recheck,
    )


# ---------------------------------------------------------------------------
# coverage estimation


@dataclass
class CoverageEntry:
    subgroup: Subgroup
    p_soft: float  # mean joint posterior mass
    count: int  # argmax hits
    ci: BinomialCI
    fidelity: float | None  # conditional mode only


@dataclass
class CoverageResult:
    mode: str
    n_total: int
    samples_per_subgroup: int
    entries: list[CoverageEntry]
    mean_fidelity: float | None


def estimate_coverage(
    odd: OperationalDesignDomain,
    template: PromptTemplate,
    generator: GeneratorBackend,
    posterior: PosteriorBackend,
    mode: str = "conditional",
    samples_per_subgroup: int = 400,
    seed: int = 0,
    alpha: float = 0.05,
    unconditional_prompt: str | None = None,
) -> CoverageResult:
    """Estimate how much probability mass the generator puts on each subgroup.

    Conditional mode prompts for every subgroup in a round robin and reads
    each sample's most likely subgroup back through the posterior; fidelity is
    the fraction that land on the subgroup they were asked for.  Unconditional
    mode draws everything from a single class-only prompt.
    """
    if mode not in ("conditional", "unconditional"):
        raise ValueError(f"unknown coverage mode {mode!r}")
    if samples_per_subgroup < 1:
        raise ValueError("samples_per_subgroup must be >= 1")

    subgroups = enumerate_subgroups(odd)
    shape = odd.shape
    n_total = samples_per_subgroup * len(subgroups)

    counts: dict[Subgroup, int] = {z: 0 for z in subgroups}
    soft_sum = np.zeros(shape)
    fidelity_hits: dict[Subgroup, int] = {z: 0 for z in subgroups}

    def read_back(sample: Sample) -> Subgroup:
        factors = posterior.subgroup_posterior(sample, odd)
        joint = factors[0]
        for f in factors[1:]:
            joint = np.multiply.outer(joint, f)
        nonlocal soft_sum
        soft_sum += joint
        # The joint factorizes, so the argmax is the per-dimension argmax.
        return tuple(int(np.argmax(f)) for f in factors)

    if mode == "conditional":
        for z_bar in subgroups:
            prompt = instantiate_prompt(template, odd, z_bar)
            settings = GenerationSettings(
                n_samples=samples_per_subgroup, seed=derive_seed(seed, prompt, 0)
            )
            for sample in generator.generate(prompt, settings):
                z_hat = read_back(sample)
                counts[z_hat] += 1
                if z_hat == z_bar:
                    fidelity_hits[z_bar] += 1
    else:
        prompt = unconditional_prompt
        if prompt is None:
            prompt = PromptTemplate("{class}").class_token(odd.source_class)
        settings = GenerationSettings(n_samples=n_total, seed=derive_seed(seed, prompt, 0))
        for sample in generator.generate(prompt, settings):
            counts[read_back(sample)] += 1

    entries = []
    fid_values = []
    for z in subgroups:
        fid = None
        if mode == "conditional":
            fid = fidelity_hits[z] / samples_per_subgroup
            fid_values.append(fid)
        entries.append(
            CoverageEntry(
                subgroup=z,
                p_soft=float(soft_sum[z]) / n_total,
                count=counts[z],
                ci=clopper_pearson(counts[z], n_total, alpha),
                fidelity=fid,
            )
        )
    return CoverageResult(
        mode=mode,
        n_total=n_total,
        samples_per_subgroup=samples_per_subgroup,
        entries=entries,
        mean_fidelity=float(np.mean(fid_values)) if fid_values else None,
    )


# ---------------------------------------------------------------------------
# zero-shot recovery benchmark


@dataclass
class BenchmarkRow:
    injection: int
    ground_truth: Subgroup
    n_samples: int
    rank: int


def benchmark_recovery(
    world,
    odd: OperationalDesignDomain,
    template: PromptTemplate,
    n_samples_sweep: tuple[int, ...] = (16,),
    n_injections: int = 20,
    seed: int = 0,
    aggregator: str = "median",
    class_b: str | None = None,
    temperature: float = 100.0,
    value_weight: float = 1.0,
) -> list[BenchmarkRow]:
    """Rank recovery of poisoned subgroups across a sample-count sweep.

    Samples are generated once at the largest sweep value; smaller values
    reuse the leading slice, which is exactly what a backend keyed on
    (prompt, seed, index) would have returned anyway.
    """
    from .backends.synthetic import SyntheticGenerator
    from .synthworld import build_benchmark, poisoned_classify

    if not n_samples_sweep:
        raise ValueError("n_samples_sweep must be nonempty")
    max_n = max(n_samples_sweep)

    generator = SyntheticGenerator(world, odd, template=template)
    subgroups = enumerate_subgroups(odd)
    batches: list[list[Sample]] = []
    for z in subgroups:
        prompt = instantiate_prompt(template, odd, z)
        settings = GenerationSettings(n_samples=max_n, seed=derive_seed(seed, prompt, 0))
        batches.append(generator.generate(prompt, settings))

    injections = build_benchmark(
        world,
        odd,
        n_injections=n_injections,
        seed=seed,
        class_b=class_b,
        temperature=temperature,
        value_weight=value_weight,
    )

    rows: list[BenchmarkRow] = []
    for inj_idx, (pz, gt) in enumerate(injections):
        all_scores = []
        for batch in batches:
            dists = [poisoned_classify(pz, world, s) for s in batch]
            all_scores.append([score_error(d, pz.class_a) for d in dists])
        for n_s in n_samples_sweep:
            records = [
                RiskRecord(
                    subgroup=z,
                    source_class=pz.class_a,
                    target_class=None,
                    risk=subgroup_risk(scores[:n_s], aggregator),
                    n_samples=n_s,
                    per_sample_scores=tuple(scores[:n_s]),
                )
                for z, scores in zip(subgroups, all_scores)
            ]
            ranked = rank_subgroups(records)
            rows.append(
                BenchmarkRow(
                    injection=inj_idx,
                    ground_truth=gt,
                    n_samples=n_s,
                    rank=subgroup_rank(ranked, gt),
                )
            )
    return rows


def benchmark_summary(rows: list[BenchmarkRow]) -> dict[int, dict]:
    """Per sweep value: median rank and the count of rank-1 recoveries."""
    out: dict[int, dict] = {}
    for n_s in sorted({r.n_samples for r in rows}):
        ranks = [r.rank for r in rows if r.n_samples == n_s]
        out[n_s] = {
            "median_rank": median([float(r) for r in ranks]),
            "rank1": sum(1 for r in ranks if r == 1),
            "n_injections": len(ranks),
        }
    return out
