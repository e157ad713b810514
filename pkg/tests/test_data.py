import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trackattn.data import (Dataset, GeneSample, SignalMatrix, SynthSpec, binarize_labels,
                            dataset_to_csv, load_dataset, load_relevance, restrict_marks,
                            save_dataset, save_relevance, split, synth_generate)
from trackattn.errors import ContractError, IngestionError

FIXTURE = """\
gene_id,bin,h_one,h_two,expression
gA,0,1.0,4.0,7.5
gA,1,2.0,5.0,7.5
gB,0,0.5,0.25,2.0
gA,2,3.0,6.0,7.5
gB,2,0.125,0.0,2.0
gB,1,0.75,1.5,2.0
"""


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_load_places_values_by_mark_row_and_bin_column(tmp_path):
    ds = load_dataset(write(tmp_path, FIXTURE), n_bins=3)
    assert ds.mark_names == ["h_one", "h_two"]
    assert len(ds) == 2
    ga, gb = ds.samples
    assert ga.gene_id == "gA" and gb.gene_id == "gB"
    np.testing.assert_array_equal(ga.x.values, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    np.testing.assert_array_equal(gb.x.values, [[0.5, 0.75, 0.125], [0.25, 1.5, 0.0]])
    assert ga.expression_raw == 7.5 and gb.expression_raw == 2.0
    assert ga.label is None and gb.label is None


def test_load_arcsinh_flag(tmp_path):
    ds = load_dataset(write(tmp_path, FIXTURE), n_bins=3, arcsinh=True)
    np.testing.assert_allclose(ds.samples[0].x.values[0], np.arcsinh([1.0, 2.0, 3.0]))


@pytest.mark.parametrize("mutation,expected_line,fragment", [
    ("gA,9,1.0,1.0,7.5", 8, "bin 9"),
    ("gA,1,1.0,1.0,7.5", 8, "duplicate"),
    ("gB,1,-0.5,1.0,2.0", 8, "negative"),
    ("gA,0,oops,1.0,7.5", 8, "non-numeric"),
])
def test_load_errors_cite_offending_line(tmp_path, mutation, expected_line, fragment):
    text = FIXTURE + mutation + "\n"
    with pytest.raises(IngestionError) as err:
        load_dataset(write(tmp_path, text), n_bins=3)
    assert f"line {expected_line}" in str(err.value)
    assert fragment in str(err.value)


def test_load_inconsistent_expression_cites_line(tmp_path):
    text = "gene_id,bin,m,expression\ngC,0,1.0,5.0\ngC,1,1.0,6.0\ngC,2,1.0,5.0\n"
    with pytest.raises(IngestionError) as err:
        load_dataset(write(tmp_path, text), n_bins=3)
    assert "line 3" in str(err.value)
    assert "inconsistent expression" in str(err.value)


def test_load_missing_bins_names_gene(tmp_path):
    text = FIXTURE.replace("gB,1,0.75,1.5,2.0\n", "")
    with pytest.raises(IngestionError) as err:
        load_dataset(write(tmp_path, text), n_bins=3)
    assert "gB" in str(err.value) and "missing bins" in str(err.value)


def test_load_empty_file(tmp_path):
    with pytest.raises(IngestionError) as err:
        load_dataset(write(tmp_path, ""), n_bins=3)
    assert "no samples" in str(err.value)
    with pytest.raises(IngestionError) as err:
        load_dataset(write(tmp_path, "gene_id,bin,m,expression\n"), n_bins=3)
    assert "no samples" in str(err.value)


def test_load_rejects_bad_header(tmp_path):
    with pytest.raises(IngestionError):
        load_dataset(write(tmp_path, "gene,bin,m,expression\nx,0,1,2\n"), n_bins=1)


def test_round_trip_is_lossless(tmp_path):
    ds, _ = synth_generate(SynthSpec(n_genes=7, n_marks=3, n_bins=11, informative_lo=2,
                                     informative_hi=5, seed=5))
    path = str(tmp_path / "synth.csv")
    save_dataset(path, ds)
    back = load_dataset(path, n_bins=11)
    assert back.mark_names == ds.mark_names
    for a, b in zip(ds.samples, back.samples):
        assert a.gene_id == b.gene_id
        assert np.array_equal(a.x.values, b.x.values)
        assert a.expression_raw == b.expression_raw
    assert dataset_to_csv(back) == dataset_to_csv(ds)


def make_expr_dataset(exprs):
    samples = [GeneSample(f"g{i}", SignalMatrix(np.zeros((1, 2))), expression_raw=float(e))
               for i, e in enumerate(exprs)]
    return Dataset(samples, ["m"], 2)


def test_binarize_odd_count():
    ds = binarize_labels(make_expr_dataset([1, 2, 3, 4, 5]))
    assert [s.label for s in ds.samples] == [-1, -1, -1, 1, 1]


def test_binarize_all_equal():
    ds = binarize_labels(make_expr_dataset([4, 4, 4]))
    assert [s.label for s in ds.samples] == [-1, -1, -1]


def test_binarize_even_count_uses_lower_middle():
    ds = binarize_labels(make_expr_dataset([10, 20]))
    assert [s.label for s in ds.samples] == [-1, 1]


def test_binarize_requires_expression():
    ds = make_expr_dataset([1, 2])
    ds.samples[1].expression_raw = None
    with pytest.raises(ContractError):
        binarize_labels(ds)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=10**6), min_size=2, max_size=60, unique=True))
def test_binarize_balance_with_distinct_expressions(exprs):
    ds = binarize_labels(make_expr_dataset(exprs))
    labels = [s.label for s in ds.samples]
    assert abs(labels.count(1) - labels.count(-1)) <= 1


def dummy_dataset(n):
    samples = [GeneSample(f"g{i}", SignalMatrix(np.zeros((1, 1))), label=1, expression_raw=0.0)
               for i in range(n)]
    return Dataset(samples, ["m"], 1)


def test_split_matches_published_sizes():
    train, val, test = split(dummy_dataset(19802), (1 / 3, 1 / 3, 1 / 3), seed=0)
    assert (len(train), len(val), len(test)) == (6601, 6601, 6600)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=3, max_value=400), st.integers(min_value=0, max_value=2**32 - 1))
def test_split_partitions_cover_and_are_disjoint(n, seed):
    parts = split(dummy_dataset(n), (0.5, 0.25, 0.25), seed=seed)
    ids = [s.gene_id for p in parts for s in p.samples]
    assert len(ids) == n
    assert len(set(ids)) == n


def test_split_is_deterministic():
    ds = dummy_dataset(50)
    a = split(ds, (0.6, 0.4), seed=9)
    b = split(ds, (0.6, 0.4), seed=9)
    assert [[s.gene_id for s in p.samples] for p in a] == [[s.gene_id for s in p.samples] for p in b]
    c = split(ds, (0.6, 0.4), seed=10)
    assert [[s.gene_id for s in p.samples] for p in a] != [[s.gene_id for s in p.samples] for p in c]


def test_split_validates_fractions():
    with pytest.raises(ContractError):
        split(dummy_dataset(10), (0.5, -0.5, 1.0), seed=0)
    with pytest.raises(ContractError):
        split(dummy_dataset(10), (0.5, 0.2), seed=0)


def test_synth_is_deterministic():
    spec = SynthSpec(n_genes=20, seed=42)
    a, rel_a = synth_generate(spec)
    b, rel_b = synth_generate(spec)
    assert np.array_equal(rel_a, rel_b)
    for sa, sb in zip(a.samples, b.samples):
        assert sa.gene_id == sb.gene_id and sa.label == sb.label
        assert np.array_equal(sa.x.values, sb.x.values)


def test_synth_effect_raises_window_mean_by_effect():
    spec = SynthSpec(n_genes=2000, n_marks=5, n_bins=100, informative_mark=0,
                     informative_lo=45, informative_hi=55, effect=3.0, noise_scale=1.0, seed=7)
    ds, rel = synth_generate(spec)
    x = ds.signals()
    y = ds.labels()
    window = x[:, 0, 45:56].mean(axis=1)
    gap = window[y == 1].mean() - window[y == -1].mean()
    assert gap == pytest.approx(3.0, abs=0.1)
    assert rel[0, 45:56].sum() == 11 and rel.sum() == 11


def test_synth_null_effect_is_label_independent():
    ds, _ = synth_generate(SynthSpec(n_genes=2000, effect=0.0, seed=8))
    x, y = ds.signals(), ds.labels()
    window = x[:, 0, 45:56].mean(axis=1)
    assert abs(window[y == 1].mean() - window[y == -1].mean()) < 0.1


def _pair_count_auc(scores, labels):
    pos = scores[labels == 1][:, None]
    neg = scores[labels == -1][None, :]
    return float(((pos > neg).sum() + 0.5 * (pos == neg).sum()) / (pos.size * neg.size / 1))


def test_synth_window_mean_is_highly_predictive():
    # a monotone model over the window mean (equivalent in AUC terms to a
    # fitted logistic regression on that single feature) must separate well
    ds, _ = synth_generate(SynthSpec(n_genes=2000, effect=3.0, seed=9))
    x, y = ds.signals(), ds.labels()
    scores = x[:, 0, 45:56].mean(axis=1)
    pos = scores[y == 1][:, None]
    neg = scores[y == -1][None, :]
    auc = ((pos > neg).sum() + 0.5 * (pos == neg).sum()) / (pos.shape[0] * neg.shape[1])
    assert auc > 0.9


def test_synth_spec_validation():
    with pytest.raises(ContractError):
        SynthSpec(n_genes=0)
    with pytest.raises(ContractError):
        SynthSpec(n_genes=5, informative_mark=9)
    with pytest.raises(ContractError):
        SynthSpec(n_genes=5, informative_lo=90, informative_hi=100)


def test_restrict_marks():
    ds, _ = synth_generate(SynthSpec(n_genes=4, n_marks=5, n_bins=6, informative_lo=1,
                                     informative_hi=2, seed=1))
    same = restrict_marks(ds, range(5))
    assert same.mark_names == ds.mark_names
    np.testing.assert_array_equal(same.signals(), ds.signals())

    one = restrict_marks(ds, [3])
    assert one.n_marks == 1 and one.mark_names == ["mark_3"]
    np.testing.assert_array_equal(one.signals()[:, 0], ds.signals()[:, 3])

    swapped = restrict_marks(ds, (2, 0))
    assert swapped.mark_names == ["mark_2", "mark_0"]
    np.testing.assert_array_equal(swapped.signals()[:, 1], ds.signals()[:, 0])

    with pytest.raises(ContractError):
        restrict_marks(ds, [])
    with pytest.raises(ContractError):
        restrict_marks(ds, [0, 5])
    with pytest.raises(ContractError):
        restrict_marks(ds, [1, 1])


def test_gene_sample_label_contract():
    with pytest.raises(ContractError):
        GeneSample("g", SignalMatrix(np.zeros((1, 1))), label=2)
    with pytest.raises(ContractError):
        SignalMatrix(np.array([[-0.5]]))
    with pytest.raises(ContractError):
        SignalMatrix(np.array([[np.nan]]))


def test_dataset_rejects_duplicate_gene_ids():
    sample = GeneSample("gX", SignalMatrix(np.zeros((1, 2))), expression_raw=0.0)
    clone = GeneSample("gX", SignalMatrix(np.ones((1, 2))), expression_raw=1.0)
    with pytest.raises(ContractError):
        Dataset([sample, clone], ["m"], 2)


def test_dataset_rejects_inconsistent_shapes():
    good = GeneSample("g1", SignalMatrix(np.zeros((2, 3))), expression_raw=0.0)
    bad = GeneSample("g2", SignalMatrix(np.zeros((2, 4))), expression_raw=0.0)
    with pytest.raises(ContractError):
        Dataset([good, bad], ["a", "b"], 3)


def test_relevance_round_trip(tmp_path):
    _, rel = synth_generate(SynthSpec(n_genes=2, n_marks=3, n_bins=7, informative_mark=1,
                                      informative_lo=2, informative_hi=4, seed=0))
    path = str(tmp_path / "rel.csv")
    save_relevance(path, rel)
    np.testing.assert_array_equal(load_relevance(path), rel)
