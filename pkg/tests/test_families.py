"""Column layouts and the three standard hypothesis families."""
import numpy as np
import pytest

from pcovtest.errors import ValidationError
from pcovtest.estimator import IndexSetPair
from pcovtest.families import (HypothesisFamily, Layout, build_family_a,
                               build_family_b, build_family_c,
                               build_family_custom)

from conftest import make_layout


def test_layout_accepts_contiguous_blocks():
    lay = make_layout(J=2, G=3, width=2)
    assert lay.p == 12
    assert lay.columns[(1, 1)] == (0, 1)
    assert lay.columns[(2, 3)] == (10, 11)


def test_layout_rejects_missing_block():
    cols = {(1, 1): [0], (1, 2): [1], (2, 1): [2]}
    with pytest.raises(ValidationError, match=r"\(j=2, g=2\)"):
        Layout(J=2, G=2, columns=cols)


def test_layout_rejects_empty_block():
    cols = {(1, 1): [0], (1, 2): []}
    with pytest.raises(ValidationError, match="empty"):
        Layout(J=1, G=2, columns=cols)


def test_layout_rejects_negative_columns():
    cols = {(1, 1): [-1], (1, 2): [1]}
    with pytest.raises(ValidationError, match="negative"):
        Layout(J=1, G=2, columns=cols)


def test_layout_overlap_error_names_both_blocks():
    cols = {(1, 1): [0, 1], (1, 2): [1, 2]}
    with pytest.raises(ValidationError,
                       match=r"\(j=1, g=1\).*\(j=1, g=2\).*column 1"):
        Layout(J=1, G=2, columns=cols)


def test_layout_sorts_columns_within_blocks():
    lay = Layout(J=1, G=1, columns={(1, 1): [3, 1, 2]})
    assert lay.columns[(1, 1)] == (1, 2, 3)


def test_from_region_labels_stacks_modalities():
    lay = Layout.from_region_labels([1, 2, 1, 2], J=2)
    assert lay.J == 2 and lay.G == 2
    assert lay.columns[(1, 1)] == (0, 2)
    assert lay.columns[(1, 2)] == (1, 3)
    assert lay.columns[(2, 1)] == (4, 6)
    assert lay.columns[(2, 2)] == (5, 7)
    assert lay.p == 8


def test_from_region_labels_rejects_gaps():
    with pytest.raises(ValidationError, match="nonempty"):
        Layout.from_region_labels([1, 3, 1], J=2)


def test_family_a_counts_and_labels():
    fam = build_family_a(make_layout(J=3, G=16, width=1))
    assert fam.problem == "a"
    assert fam.Q == 16
    assert fam.d == 48
    assert fam.sizes() == [3] * 16
    assert fam.labels[0] == "(1)" and fam.labels[-1] == "(16)"


def test_family_a_pairs_each_modality_against_the_rest():
    lay = make_layout(J=3, G=2, width=2)
    fam = build_family_a(lay)
    first = fam.pairs[0][0]
    assert first.s1 == lay.columns[(1, 1)]
    assert first.s2 == tuple(sorted(lay.columns[(2, 1)] + lay.columns[(3, 1)]))


def test_family_a_two_modalities_uses_both_orderings():
    fam = build_family_a(make_layout(J=2, G=1, width=2))
    assert fam.sizes() == [2]
    a, b = fam.pairs[0]
    assert a.s1 == b.s2 and a.s2 == b.s1


def test_family_a_needs_two_modalities():
    with pytest.raises(ValidationError, match="two modalities"):
        build_family_a(make_layout(J=1, G=3, width=2))


def test_family_b_counts_and_pairing():
    lay = make_layout(J=3, G=16, width=1)
    fam = build_family_b(lay)
    assert fam.problem == "b"
    assert fam.Q == 120
    assert fam.d == 360
    assert fam.sizes() == [3] * 120
    assert fam.labels[0] == "(1,2)" and fam.labels[-1] == "(15,16)"
    first = fam.pairs[0][0]
    assert first.s1 == lay.columns[(1, 1)]
    assert first.s2 == lay.columns[(1, 2)]


def test_family_b_needs_two_regions():
    with pytest.raises(ValidationError, match="two regions"):
        build_family_b(make_layout(J=3, G=1, width=2))


def test_family_c_counts_at_desk_and_paper_scale():
    fam4 = build_family_c(make_layout(J=3, G=4, width=1))
    assert fam4.Q == 4 * 5 // 2
    assert fam4.d == 4 * 3 + 6 * 6
    fam16 = build_family_c(make_layout(J=3, G=16, width=1))
    assert fam16.Q == 136
    assert fam16.d == 16 * 3 + 120 * 6 == 768
    fam25 = build_family_c(make_layout(J=3, G=25, width=1))
    assert fam25.Q == 325
    assert fam25.d == 25 * 3 + 300 * 6 == 1875


def test_family_c_same_region_uses_unordered_modalities():
    lay = make_layout(J=3, G=2, width=1)
    fam = build_family_c(lay)
    by_label = dict(zip(fam.labels, fam.pairs))
    diag = by_label["(1,1)"]
    assert len(diag) == 3
    assert diag[0].s1 == lay.columns[(1, 1)]
    assert diag[0].s2 == lay.columns[(2, 1)]
    off = by_label["(1,2)"]
    assert len(off) == 6
    assert {(pr.s1, pr.s2) for pr in off} == {
        (lay.columns[(j, 1)], lay.columns[(j2, 2)])
        for j in (1, 2, 3) for j2 in (1, 2, 3) if j != j2
    }


def test_family_c_needs_two_modalities():
    with pytest.raises(ValidationError, match="two modalities"):
        build_family_c(make_layout(J=1, G=3, width=2))


def test_slices_partition_flat_order():
    fam = build_family_c(make_layout(J=2, G=3, width=1))
    assert fam.slices[0] == slice(0, fam.sizes()[0])
    total = 0
    for sl, size in zip(fam.slices, fam.sizes()):
        assert sl.start == total and sl.stop == total + size
        total += size
    assert total == fam.d == len(fam.flat_pairs)


def test_labels_are_unique_across_all_builders():
    lay = make_layout(J=3, G=5, width=1)
    for build in (build_family_a, build_family_b, build_family_c):
        fam = build(lay)
        assert len(set(fam.labels)) == fam.Q


def test_custom_family_coerces_tuples_and_defaults_labels():
    fam = build_family_custom([
        [([0], [1]), ([2, 3], [4])],
        [IndexSetPair([5], [6])],
    ])
    assert fam.Q == 2 and fam.d == 3
    assert fam.labels == ("q=1", "q=2")
    assert isinstance(fam.pairs[0][0], IndexSetPair)
    assert fam.pairs[0][1].s1 == (2, 3)


def test_custom_family_rejects_empty_hypothesis():
    with pytest.raises(ValidationError, match="no pairs"):
        build_family_custom([[([0], [1])], []])


def test_family_rejects_duplicate_labels():
    with pytest.raises(ValidationError, match="distinct"):
        build_family_custom([[([0], [1])], [([2], [3])]],
                            labels=("same", "same"))


def test_family_rejects_repeated_pair_within_hypothesis():
    with pytest.raises(ValidationError, match="repeats"):
        build_family_custom([[([0], [1]), ([0], [1])]])


def test_family_rejects_empty_family():
    with pytest.raises(ValidationError, match="Q >= 1"):
        HypothesisFamily(problem="custom", pairs=(), labels=())
