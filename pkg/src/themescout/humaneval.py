"""Best-Worst scoring of competing summaries and inter-annotator agreement.

Each annotation tuple holds one candidate summary per model for one
article, in a seeded-shuffled slot order so annotators cannot learn slot
positions. A judgement names the best and second-best slot; scoring
resolves slots back to models and awards 1 and 0.5 points.

Agreement is Krippendorff's alpha over (tuple, slot) units labelled
2 = best, 1 = second, 0 = neither, computed with the coincidence-matrix
formulation; `nominal` and `ordinal` difference functions are available,
ordinal being the default since the labels are ranked.
"""

import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .errors import DataError


@dataclass(frozen=True)
class Candidate:
    slot: int
    model_id: str
    summary_text: str


@dataclass(frozen=True)
class BwsTuple:
    tuple_id: str
    article_id: str
    candidates: tuple[Candidate, ...]
    shuffle_seed: int

    def slots(self) -> set[int]:
        return {c.slot for c in self.candidates}

    def model_of(self, slot: int) -> str:
        for c in self.candidates:
            if c.slot == slot:
                return c.model_id
        raise DataError(f"tuple {self.tuple_id!r} has no slot {slot}")


@dataclass(frozen=True)
class Judgement:
    annotator_id: str
    tuple_id: str
    best_slot: int
    second_slot: int

    def __post_init__(self):
        if self.best_slot == self.second_slot:
            raise DataError(
                f"judgement by {self.annotator_id!r} on {self.tuple_id!r} "
                "names the same slot as best and second")


@dataclass
class BwsScores:
    scores: dict[str, float]
    aggregation: str  # "sum" | "mean_over_annotators"


@dataclass(frozen=True)
class AgreementReport:
    alpha: float
    metric: str
    n_annotators: int
    n_items: int


def build_tuples(summaries: Mapping[tuple[str, str], str], seed: int) -> list[BwsTuple]:
    """One blind tuple per article, slot order a per-article seeded shuffle.

    `summaries` maps (article_id, model_id) to summary text and must be
    complete: every article crossed with every model.
    """
    articles = sorted({a for a, _ in summaries})
    models = sorted({m for _, m in summaries})
    if not articles or len(models) < 2:
        raise DataError("need at least one article and two models")
    missing = [(a, m) for a in articles for m in models if (a, m) not in summaries]
    if missing:
        raise DataError("missing summaries for: " + ", ".join(f"({a}, {m})" for a, m in missing))
    tuples = []
    for article in articles:
        order = models[:]
        # Seeding from a string keeps the shuffle stable across processes.
        random.Random(f"{seed}:{article}").shuffle(order)
        candidates = tuple(
            Candidate(slot=i + 1, model_id=m, summary_text=summaries[(article, m)])
            for i, m in enumerate(order))
        tuples.append(BwsTuple(tuple_id=f"t-{article}", article_id=article,
                               candidates=candidates, shuffle_seed=seed))
    return tuples


def _validate(tuples: Sequence[BwsTuple], judgements: Sequence[Judgement]) -> dict[str, BwsTuple]:
    by_id = {t.tuple_id: t for t in tuples}
    for j in judgements:
        t = by_id.get(j.tuple_id)
        if t is None:
            raise DataError(f"judgement references unknown tuple {j.tuple_id!r}")
        slots = t.slots()
        for slot in (j.best_slot, j.second_slot):
            if slot not in slots:
                raise DataError(f"judgement on {j.tuple_id!r} names missing slot {slot}")
    return by_id


BEST_POINTS = 1.0
SECOND_POINTS = 0.5


def score_bws(tuples: Sequence[BwsTuple], judgements: Sequence[Judgement],
              aggregation: str = "mean_over_annotators") -> BwsScores:
    """Award 1 / 0.5 points per judgement and aggregate per model."""
    if aggregation not in ("sum", "mean_over_annotators"):
        raise DataError(f"unknown aggregation {aggregation!r}")
    by_id = _validate(tuples, judgements)
    totals = {c.model_id: 0.0 for t in tuples for c in t.candidates}
    for j in judgements:
        t = by_id[j.tuple_id]
        totals[t.model_of(j.best_slot)] += BEST_POINTS
        totals[t.model_of(j.second_slot)] += SECOND_POINTS
    if aggregation == "mean_over_annotators":
        annotators = {j.annotator_id for j in judgements}
        if annotators:
            totals = {m: s / len(annotators) for m, s in totals.items()}
    return BwsScores(scores=totals, aggregation=aggregation)


LABEL_BEST = 2
LABEL_SECOND = 1
LABEL_NEITHER = 0


def _unit_labels(tuples: Sequence[BwsTuple], judgements: Sequence[Judgement]) -> dict[tuple[str, int], list[int]]:
    by_id = _validate(tuples, judgements)
    units: dict[tuple[str, int], list[int]] = defaultdict(list)
    for j in judgements:
        t = by_id[j.tuple_id]
        for c in t.candidates:
            if c.slot == j.best_slot:
                label = LABEL_BEST
            elif c.slot == j.second_slot:
                label = LABEL_SECOND
            else:
                label = LABEL_NEITHER
            units[(j.tuple_id, c.slot)].append(label)
    return dict(units)


def _alpha_from_units(units: Mapping[tuple, list[int]], metric: str) -> tuple[float, int]:
    """Coincidence-matrix alpha over multi-labelled units.

    Returns (alpha, pairable unit count). Raises when expected disagreement
    is zero (every pairable value identical), where alpha is undefined.
    """
    pairable = {u: vals for u, vals in units.items() if len(vals) > 1}
    if not pairable:
        raise DataError("no unit was labelled by two or more annotators")
    coincidence: Counter = Counter()
    for vals in pairable.values():
        m = len(vals)
        for i, a in enumerate(vals):
            for k, b in enumerate(vals):
                if i != k:
                    coincidence[(a, b)] += 1.0 / (m - 1)
    values = sorted({v for a, b in coincidence for v in (a, b)})
    marginals = {c: sum(coincidence[(c, k)] for k in values) for c in values}
    n = sum(marginals.values())

    if metric == "nominal":
        def delta(c, k):
            return 0.0 if c == k else 1.0
    elif metric == "ordinal":
        def delta(c, k):
            lo, hi = min(c, k), max(c, k)
            between = sum(marginals[g] for g in values if lo <= g <= hi)
            return (between - (marginals[c] + marginals[k]) / 2.0) ** 2
    else:
        raise DataError(f"unknown agreement metric {metric!r}")

    d_o = sum(coincidence[(c, k)] * delta(c, k) for c in values for k in values) / n
    d_e = sum(marginals[c] * marginals[k] * delta(c, k) for c in values for k in values) / (n * (n - 1))
    if d_e == 0.0:
        raise DataError("expected disagreement is zero (all labels identical); alpha undefined")
    if d_o == 0.0:
        return 1.0, len(pairable)
    return 1.0 - d_o / d_e, len(pairable)


def krippendorff_alpha(tuples: Sequence[BwsTuple], judgements: Sequence[Judgement],
                       metric: str = "ordinal") -> AgreementReport:
    """Corpus-level alpha over best/second/neither labels per (tuple, slot)."""
    annotators = {j.annotator_id for j in judgements}
    if len(annotators) < 2:
        raise DataError(f"alpha needs >= 2 annotators, got {len(annotators)}")
    units = _unit_labels(tuples, judgements)
    alpha, n_items = _alpha_from_units(units, metric)
    return AgreementReport(alpha=alpha, metric=metric,
                           n_annotators=len(annotators), n_items=n_items)


def per_tuple_alpha_mean(tuples: Sequence[BwsTuple], judgements: Sequence[Judgement],
                         metric: str = "ordinal") -> float:
    """Mean of per-tuple alphas; a distinct statistic from the corpus-level
    alpha, exposed separately because "average alpha" is ambiguous."""
    annotators = {j.annotator_id for j in judgements}
    if len(annotators) < 2:
        raise DataError(f"alpha needs >= 2 annotators, got {len(annotators)}")
    units = _unit_labels(tuples, judgements)
    per_tuple: dict[str, dict] = defaultdict(dict)
    for (tuple_id, slot), vals in units.items():
        per_tuple[tuple_id][(tuple_id, slot)] = vals
    alphas = []
    for tuple_id, tuple_units in sorted(per_tuple.items()):
        try:
            alpha, _ = _alpha_from_units(tuple_units, metric)
        except DataError:
            continue  # undefined for this tuple; skip rather than fabricate
        alphas.append(alpha)
    if not alphas:
        raise DataError("alpha undefined for every tuple")
    return sum(alphas) / len(alphas)


# -- annotation round-trip files --------------------------------------------


def write_annotation_form(tuples: Sequence[BwsTuple], path: Path) -> None:
    """Model-blind annotation form: tuple_id, slot, summary text."""
    with Path(path).open("w", encoding="utf-8") as f:
        f.write("tuple_id\tslot\tsummary\n")
        for t in tuples:
            for c in t.candidates:
                flat = " ".join(c.summary_text.split())
                f.write(f"{t.tuple_id}\t{c.slot}\t{flat}\n")


def read_judgements(path: Path) -> list[Judgement]:
    """One judgement per line: annotator_id, tuple_id, best_slot, second_slot."""
    out = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for i, line in enumerate(lines):
        if not line.strip() or line.startswith("annotator_id"):
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise DataError(f"judgement line {i + 1} has {len(cols)} columns, expected 4")
        out.append(Judgement(annotator_id=cols[0], tuple_id=cols[1],
                             best_slot=int(cols[2]), second_slot=int(cols[3])))
    return out


def render_scores(scores: BwsScores, alpha: Optional[AgreementReport] = None) -> str:
    lines = ["model\tscore"]
    for model in sorted(scores.scores, key=lambda m: (-scores.scores[m], m)):
        lines.append(f"{model}\t{scores.scores[model]:.4f}")
    lines.append(f"# aggregation: {scores.aggregation}")
    if alpha is not None:
        lines.append(f"# krippendorff_alpha ({alpha.metric}): {alpha.alpha:.4f} "
                     f"over {alpha.n_items} items, {alpha.n_annotators} annotators")
    return "\n".join(lines) + "\n"
