import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsccs.data import (Dataset, DrugDictionary, Era, SubjectRecord, build_dataset,
                        format_long_format, read_long_format, subset_dataset, write_long_format)
from bsccs.errors import DatasetError


def _records():
    return [
        SubjectRecord("a", (Era(3, 1, (0, 2)), Era(4, 0, ()), Era(2, 2, (2,)))),
        SubjectRecord("b", (Era(5, 0, (1,)),)),  # no events
        SubjectRecord("c", (Era(1, 1, (0,)), Era(6, 0, (0, 1)))),
    ]


def test_toy_dataset(toy):
    assert (toy.N, toy.K, toy.J) == (1, 2, 1)
    np.testing.assert_array_equal(toy.y_dot_x, [1])
    assert toy.x_max == 1
    np.testing.assert_array_equal(toy.subject_offsets, [0, 2])
    np.testing.assert_array_equal(toy.n, [1])


def test_zero_event_subject_excluded():
    ds = build_dataset(_records(), 3)
    assert ds.N == 2
    assert ds.subject_ids == ("a", "c")
    np.testing.assert_array_equal(ds.n, [3, 1])


def test_empty_column():
    ds = build_dataset(_records(), 4)
    assert ds.column(3).size == 0
    assert ds.y_dot_x[3] == 0


def test_layout_and_precomputations():
    ds = build_dataset(_records(), 3)
    ds.validate()
    np.testing.assert_array_equal(ds.Y, [1, 0, 2, 1, 0])
    np.testing.assert_array_equal(ds.L, [3, 4, 2, 1, 6])
    np.testing.assert_array_equal(ds.column(0), [0, 3, 4])
    np.testing.assert_array_equal(ds.column(1), [4])
    np.testing.assert_array_equal(ds.column(2), [0, 2])
    subj, rows = ds.column_subject_pairs(0)
    np.testing.assert_array_equal(subj, [0, 1, 1])
    np.testing.assert_array_equal(rows, [0, 3, 4])
    np.testing.assert_array_equal(ds.y_dot_x, [2, 0, 3])
    assert ds.x_max == 3
    assert int(np.diff(ds.subject_offsets).sum()) == ds.K


def test_y_dot_x_rebuild(small_suite):
    for ds in small_suite[:20]:
        for j in range(ds.J):
            assert ds.Y[ds.column(j)].sum() == ds.y_dot_x[j]


@pytest.mark.parametrize("era, message", [
    (Era(0, 1, ()), "length"),
    (Era(2, -1, ()), "negative"),
    (Era(2, 1, (1, 0)), "ascending"),
    (Era(2, 1, (5,)), "J"),
])
def test_invalid_era_names_subject(era, message):
    with pytest.raises(DatasetError, match="bad") as info:
        build_dataset([SubjectRecord("bad", (era,))], 2)
    assert message.lower() in str(info.value).lower()


def test_no_eras_rejected():
    with pytest.raises(DatasetError):
        build_dataset([SubjectRecord("x", ())], 1)


def test_all_excluded_is_error():
    with pytest.raises(DatasetError, match="empty"):
        build_dataset([SubjectRecord("b", (Era(5, 0, (0,)),))], 1)


def test_build_deterministic():
    a, b = build_dataset(_records(), 3), build_dataset(_records(), 3)
    assert a.equals(b)


def test_arrays_read_only(toy):
    with pytest.raises(ValueError):
        toy.Y[0] = 5


def test_subset_identity(small_suite):
    ds = small_suite[3]
    assert subset_dataset(ds, np.arange(ds.N)).equals(ds)


def test_subset_duplicate(toy):
    twice = subset_dataset(toy, [0, 0])
    assert (twice.N, twice.K) == (2, 2 * toy.K)
    np.testing.assert_array_equal(twice.y_dot_x, 2 * toy.y_dot_x)
    twice.validate()


def test_subset_errors(toy):
    with pytest.raises(DatasetError):
        subset_dataset(toy, [])
    with pytest.raises(DatasetError):
        subset_dataset(toy, [1])


def test_subset_matches_rebuild(small_suite):
    ds = small_suite[7]
    idx = np.random.default_rng(0).integers(0, ds.N, size=ds.N)
    recs = ds.to_records()
    rebuilt = build_dataset([recs[i] for i in idx], ds.J, ds.drug_ids)
    sub = subset_dataset(ds, idx)
    for name in ("Y", "L", "subject_offsets", "n", "col_ptr", "col_rows", "col_subjects",
                 "y_dot_x", "row_ptr", "row_drugs"):
        np.testing.assert_array_equal(getattr(sub, name), getattr(rebuilt, name), err_msg=name)


def test_long_format_round_trip(tmp_path):
    path = tmp_path / "eras.tsv"
    write_long_format(path, _records(), ("x", "y", "z"))
    ds = read_long_format(path, DrugDictionary(("x", "y", "z"), frozen=True))
    assert ds.equals(build_dataset(_records(), 3, ("x", "y", "z")))


def test_long_format_first_appearance_order(tmp_path):
    path = tmp_path / "eras.tsv"
    path.write_text("s1\t2\t1\tzeta alpha\ns1\t3\t0\ns2\t1\t1\talpha\n")
    ds = read_long_format(path)
    assert ds.drug_ids == ("zeta", "alpha")
    np.testing.assert_array_equal(ds.era_exposures(0), [0, 1])


def test_long_format_errors(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("s1\tx\t1\tA\n")
    with pytest.raises(DatasetError, match="bad.tsv:1"):
        read_long_format(bad)
    unknown = tmp_path / "unknown.tsv"
    unknown.write_text("s1\t2\t1\tB\n")
    with pytest.raises(DatasetError, match="not in the drug dictionary"):
        read_long_format(unknown, DrugDictionary(("A",), frozen=True))


def test_drug_dictionary_file(tmp_path):
    d = DrugDictionary(("a", "b"))
    d.to_file(tmp_path / "d.txt")
    loaded = DrugDictionary.from_file(tmp_path / "d.txt")
    assert loaded.labels == ("a", "b") and loaded.frozen
    assert loaded.index("b") == 1


_era = st.builds(Era, st.integers(1, 30), st.integers(0, 3),
                 st.sets(st.integers(0, 3), max_size=4).map(lambda s: tuple(sorted(s))))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(_era, min_size=1, max_size=5), min_size=1, max_size=8))
def test_invariants_hold_for_random_records(subjects):
    records = [SubjectRecord(f"s{i}", tuple(eras)) for i, eras in enumerate(subjects)]
    if all(r.n_events == 0 for r in records):
        with pytest.raises(DatasetError):
            build_dataset(records, 4)
        return
    ds = build_dataset(records, 4)
    ds.validate()
    assert isinstance(ds, Dataset)
    assert ds.N == sum(r.n_events > 0 for r in records)
    assert np.all(ds.n >= 1)
    text = format_long_format(ds.to_records(), ds.drug_ids)
    assert text.count("\n") == ds.K + 1
