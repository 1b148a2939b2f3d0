"""Hypothesis families over a modality/region column layout.

The observation vector stacks J modality images: the column of voxel v
(0-based) in modality j (1-based) is (j−1)·V + v, and a Layout records
which columns belong to block Y_{j,g} (modality j restricted to region
g).  Three standard families of independence hypotheses are built from
a layout:

- problem (a): per region g, are the J modality blocks within g
  mutually independent?  K_g pairs each Y_{j,g} against the union of
  the other modalities in g — both orderings per the construction, one
  pair per j, so |K_g| = J.
- problem (b): per region pair g < g′, is Y_{j,g} independent of
  Y_{j,g′} within each modality j?  |K_q| = J.
- problem (c): per region pair g ≤ g′, are blocks independent across
  modalities?  For g < g′ all ordered modality pairs j ≠ j′ appear
  (J(J−1) of them); for g = g′ the unordered pairs j < j′ (J(J−1)/2).

Pairs-of-regions enumerations are lexicographic so that hypothesis
indices and labels are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError
from .estimator import IndexSetPair


@dataclass(frozen=True)
class Layout:
    """Column layout of the stacked vector: columns[(j, g)] for j in 1..J, g in 1..G."""

    J: int
    G: int
    columns: dict

    def __post_init__(self):
        if self.J < 1 or self.G < 1:
            raise ValidationError("layout needs J >= 1 and G >= 1")
        cols = {}
        for j in range(1, self.J + 1):
            for g in range(1, self.G + 1):
                if (j, g) not in self.columns:
                    raise ValidationError(f"layout is missing columns for (j={j}, g={g})")
                c = tuple(sorted(int(v) for v in self.columns[(j, g)]))
                if not c:
                    raise ValidationError(f"layout block (j={j}, g={g}) is empty")
                if c[0] < 0:
                    raise ValidationError(f"layout block (j={j}, g={g}) has negative columns")
                cols[(j, g)] = c
        seen = {}
        for key, c in cols.items():
            for v in c:
                if v in seen:
                    raise ValidationError(
                        f"layout blocks (j={seen[v][0]}, g={seen[v][1]}) and "
                        f"(j={key[0]}, g={key[1]}) overlap in column {v}"
                    )
                seen[v] = key
        object.__setattr__(self, "columns", cols)

    @property
    def p(self) -> int:
        """Smallest column count consistent with the layout."""
        return 1 + max(c[-1] for c in self.columns.values())

    @classmethod
    def from_region_labels(cls, labels: Sequence[int], J: int) -> "Layout":
        """Layout for J stacked modality images sharing one region map.

        labels[v] in 1..G gives the region of voxel v; modality j places
        voxel v at column (j−1)·V + v.
        """
        labels = [int(x) for x in labels]
        V = len(labels)
        G = max(labels) if labels else 0
        if sorted(set(labels)) != list(range(1, G + 1)):
            raise ValidationError("region labels must cover 1..G with every region nonempty")
        per_region = {g: [v for v, lab in enumerate(labels) if lab == g]
                      for g in range(1, G + 1)}
        columns = {(j, g): [(j - 1) * V + v for v in vs]
                   for j in range(1, J + 1) for g, vs in per_region.items()}
        return cls(J=J, G=G, columns=columns)


@dataclass(frozen=True)
class HypothesisFamily:
    """Q hypotheses, each a list K_q of index-set pairs; d = Σ_q |K_q|."""

    problem: str
    pairs: tuple          # pairs[q] = tuple of IndexSetPair
    labels: tuple         # human-readable tag per hypothesis

    def __post_init__(self):
        if len(self.pairs) < 1:
            raise ValidationError("a hypothesis family needs Q >= 1 hypotheses")
        if len(self.labels) != len(self.pairs):
            raise ValidationError("labels and pairs must have equal length")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("hypothesis labels must be distinct")
        for label, kq in zip(self.labels, self.pairs):
            if not kq:
                raise ValidationError(f"hypothesis {label} has an empty pair list")
            if len(set(kq)) != len(kq):
                raise ValidationError(f"hypothesis {label} repeats an index-set pair")

    @property
    def Q(self) -> int:
        return len(self.pairs)

    @property
    def d(self) -> int:
        return sum(len(kq) for kq in self.pairs)

    @property
    def flat_pairs(self) -> list:
        """All pairs in flattening order (q-major, K_q order within q)."""
        return [pr for kq in self.pairs for pr in kq]

    @property
    def slices(self) -> list:
        """slices[q] selects hypothesis q's columns of the flattened d-vector."""
        out, lo = [], 0
        for kq in self.pairs:
            out.append(slice(lo, lo + len(kq)))
            lo += len(kq)
        return out

    def sizes(self) -> list:
        return [len(kq) for kq in self.pairs]


def _union(layout: Layout, j_excluded: int, g: int) -> list:
    cols = []
    for j in range(1, layout.J + 1):
        if j != j_excluded:
            cols.extend(layout.columns[(j, g)])
    return cols


def build_family_a(layout: Layout) -> HypothesisFamily:
    """Within-region independence across modalities; Q = G, |K_q| = J."""
    if layout.J < 2:
        raise ValidationError("problem (a) needs at least two modalities")
    pairs, labels = [], []
    for g in range(1, layout.G + 1):
        kq = tuple(
            IndexSetPair(layout.columns[(j, g)], _union(layout, j, g))
            for j in range(1, layout.J + 1)
        )
        pairs.append(kq)
        labels.append(f"({g})")
    return HypothesisFamily(problem="a", pairs=tuple(pairs), labels=tuple(labels))


def build_family_b(layout: Layout) -> HypothesisFamily:
    """Between-region independence within modalities; Q = G(G−1)/2."""
    if layout.G < 2:
        raise ValidationError("problem (b) needs at least two regions")
    pairs, labels = [], []
    for g in range(1, layout.G + 1):
        for g2 in range(g + 1, layout.G + 1):
            kq = tuple(
                IndexSetPair(layout.columns[(j, g)], layout.columns[(j, g2)])
                for j in range(1, layout.J + 1)
            )
            pairs.append(kq)
            labels.append(f"({g},{g2})")
    return HypothesisFamily(problem="b", pairs=tuple(pairs), labels=tuple(labels))


def build_family_c(layout: Layout) -> HypothesisFamily:
    """Cross-modality independence between (and within) regions; Q = G(G+1)/2."""
    if layout.J < 2:
        raise ValidationError("problem (c) needs at least two modalities")
    pairs, labels = [], []
    for g in range(1, layout.G + 1):
        for g2 in range(g, layout.G + 1):
            if g == g2:
                kq = tuple(
                    IndexSetPair(layout.columns[(j, g)], layout.columns[(j2, g)])
                    for j in range(1, layout.J + 1)
                    for j2 in range(j + 1, layout.J + 1)
                )
            else:
                kq = tuple(
                    IndexSetPair(layout.columns[(j, g)], layout.columns[(j2, g2)])
                    for j in range(1, layout.J + 1)
                    for j2 in range(1, layout.J + 1)
                    if j2 != j
                )
            pairs.append(kq)
            labels.append(f"({g},{g2})")
    return HypothesisFamily(problem="c", pairs=tuple(pairs), labels=tuple(labels))


def build_family_custom(pair_lists, labels=None) -> HypothesisFamily:
    """Family from explicit per-hypothesis pair lists.

    pair_lists[q] is a sequence of IndexSetPair (or (s1, s2) column-list
    tuples, which are validated and coerced).
    """
    built = []
    for q, kq in enumerate(pair_lists):
        row = []
        for pr in kq:
            if not isinstance(pr, IndexSetPair):
                pr = IndexSetPair(*pr)
            row.append(pr)
        if not row:
            raise ValidationError(f"hypothesis {q} has no pairs")
        built.append(tuple(row))
    if labels is None:
        labels = tuple(f"q={q + 1}" for q in range(len(built)))
    return HypothesisFamily(problem="custom", pairs=tuple(built), labels=tuple(labels))
