import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelattn.config import MULTI_CLASS, MULTI_LABEL
from labelattn.data import (
    FORMAT_MULTI_CLASS,
    FORMAT_MULTI_LABEL,
    accuracy,
    keyword_match_gold,
    load_corpus,
    load_descriptions,
    make_synthetic_corpus,
    micro_prf,
    save_corpus,
    split,
)
from labelattn.errors import ContractError, InputError

HOC_DESCRIPTIONS = "\n".join(
    f"H{i}\thallmark{i}\tdescription of hallmark {i}" for i in range(10)
)

DISEASE_DESCRIPTIONS = "\n".join(
    f"{i}\tdisease{i}\tdescription of disease group {i}" for i in range(5)
)


def write(tmp_path, name, content):
    p = tmp_path / name
    p.write_text(content, encoding="utf-8")
    return p


class TestLoadCorpus:
    def test_multilabel_corpus(self, tmp_path):
        descs = write(tmp_path, "labels.tsv", HOC_DESCRIPTIONS)
        corpus_file = write(
            tmp_path,
            "corpus.tsv",
            "# comment line\n"
            "a1\tfirst abstract text\tH0,H3\n"
            "a2\tsecond abstract\t\n"
            "a3\tthird abstract\tH9\n",
        )
        corpus = load_corpus(corpus_file, FORMAT_MULTI_LABEL, descs)
        assert corpus.num_labels == 10
        assert corpus.task_mode == MULTI_LABEL
        assert corpus.instances[0].gold == (1, 0, 0, 1, 0, 0, 0, 0, 0, 0)
        assert corpus.instances[1].gold == (0,) * 10
        assert corpus.instances[2].gold[9] == 1

    def test_multiclass_corpus(self, tmp_path):
        descs = write(tmp_path, "labels.tsv", DISEASE_DESCRIPTIONS)
        corpus_file = write(tmp_path, "corpus.tsv", "0\tabstract one\n4\tabstract two\n")
        corpus = load_corpus(corpus_file, FORMAT_MULTI_CLASS, descs)
        assert corpus.num_labels == 5
        assert corpus.task_mode == MULTI_CLASS
        assert [i.gold for i in corpus.instances] == [0, 4]

    def test_unknown_label_names_line(self, tmp_path):
        descs = write(tmp_path, "labels.tsv", HOC_DESCRIPTIONS)
        corpus_file = write(tmp_path, "corpus.tsv", "a1\ttext\tH0\na2\ttext\tH42\n")
        with pytest.raises(InputError, match=":2"):
            load_corpus(corpus_file, FORMAT_MULTI_LABEL, descs)

    def test_duplicate_instance_id(self, tmp_path):
        descs = write(tmp_path, "labels.tsv", HOC_DESCRIPTIONS)
        corpus_file = write(tmp_path, "corpus.tsv", "a1\ttext\tH0\na1\ttext\tH1\n")
        with pytest.raises(InputError, match="duplicate"):
            load_corpus(corpus_file, FORMAT_MULTI_LABEL, descs)

    def test_class_index_out_of_range(self, tmp_path):
        descs = write(tmp_path, "labels.tsv", DISEASE_DESCRIPTIONS)
        corpus_file = write(tmp_path, "corpus.tsv", "5\ttext\n")
        with pytest.raises(InputError):
            load_corpus(corpus_file, FORMAT_MULTI_CLASS, descs)

    def test_empty_description_rejected(self, tmp_path):
        descs = write(tmp_path, "labels.tsv", "H0\tname\t\n")
        with pytest.raises(InputError):
            load_descriptions(descs)

    def test_roundtrip_identity(self, tmp_path):
        corpus = make_synthetic_corpus(4, 3, multi_label=True, seed=5)
        cp, dp = tmp_path / "c.tsv", tmp_path / "d.tsv"
        save_corpus(corpus, cp, dp)
        loaded = load_corpus(cp, FORMAT_MULTI_LABEL, dp)
        assert loaded.labels == corpus.labels
        assert loaded.instances == corpus.instances
        assert loaded.task_mode == corpus.task_mode

    def test_roundtrip_identity_multiclass(self, tmp_path):
        corpus = make_synthetic_corpus(3, 4, multi_label=False, seed=6)
        cp, dp = tmp_path / "c.tsv", tmp_path / "d.tsv"
        save_corpus(corpus, cp, dp)
        loaded = load_corpus(cp, FORMAT_MULTI_CLASS, dp)
        assert loaded.labels == corpus.labels
        assert [i.text for i in loaded.instances] == [i.text for i in corpus.instances]
        assert [i.gold for i in loaded.instances] == [i.gold for i in corpus.instances]


class TestSplit:
    def corpus(self, n):
        corpus = make_synthetic_corpus(1, n, seed=0)
        return corpus

    def test_hoc_ratio(self):
        s = split(self.corpus(100), (7, 1, 2), seed=0)
        assert (len(s.train), len(s.dev), len(s.test)) == (70, 10, 20)

    def test_disease_ratio(self):
        s = split(self.corpus(10), (8, 1, 1), seed=0)
        assert (len(s.train), len(s.dev), len(s.test)) == (8, 1, 1)

    def test_same_seed_same_split(self):
        c = self.corpus(37)
        assert split(c, (7, 1, 2), seed=4) == split(c, (7, 1, 2), seed=4)
        assert split(c, (7, 1, 2), seed=4) != split(c, (7, 1, 2), seed=5)

    def test_too_small(self):
        with pytest.raises(InputError):
            split(self.corpus(2), (1, 1, 1), seed=0)

    @given(st.integers(3, 200), st.integers(0, 10 ** 6))
    @settings(max_examples=50, deadline=None)
    def test_partition_disjoint_and_exhaustive(self, n, seed):
        s = split(self.corpus(n), (7, 1, 2), seed=seed)
        everything = sorted(s.train + s.dev + s.test)
        assert everything == list(range(n))


class TestMetrics:
    def test_perfect(self):
        golds = [[1, 0], [0, 1]]
        assert micro_prf(golds, golds) == (1.0, 1.0, 1.0)

    def test_counted_example(self):
        golds = [[1, 0], [1, 1]]
        preds = [[1, 1], [0, 1]]
        p, r, f1 = micro_prf(preds, golds)
        assert (p, r, f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3))

    def test_no_predictions_zero_rule(self):
        assert micro_prf([[0, 0]], [[1, 0]]) == (0.0, 0.0, 0.0)

    @given(st.integers(1, 8), st.integers(1, 6), st.integers(0, 10 ** 6))
    @settings(max_examples=50, deadline=None)
    def test_matches_bruteforce_enumeration(self, b, k, seed):
        rng = np.random.default_rng(seed)
        preds = rng.integers(0, 2, (b, k))
        golds = rng.integers(0, 2, (b, k))
        tp = fp = fn = 0
        for i in range(b):
            for j in range(k):
                tp += int(preds[i, j] == 1 and golds[i, j] == 1)
                fp += int(preds[i, j] == 1 and golds[i, j] == 0)
                fn += int(preds[i, j] == 0 and golds[i, j] == 1)
        P = tp / (tp + fp) if tp + fp else 0.0
        R = tp / (tp + fn) if tp + fn else 0.0
        F = 2 * P * R / (P + R) if P + R else 0.0
        assert micro_prf(preds, golds) == (P, R, F)

    def test_accuracy(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
        assert accuracy([1, 2, 3], [0, 0, 0]) == 0.0
        assert accuracy([1, 2, 3, 4], [1, 2, 3, 0]) == 0.75
        with pytest.raises(ContractError):
            accuracy([], [])


class TestSyntheticCorpus:
    def test_document_count(self):
        corpus = make_synthetic_corpus(5, 40, seed=1)
        assert len(corpus.instances) == 200
        assert corpus.task_mode == MULTI_CLASS

    def test_every_gold_label_has_a_keyword_in_doc(self):
        corpus = make_synthetic_corpus(6, 5, multi_label=True, seed=2)
        kw_by_label = [
            set(l.description.split()) for l in corpus.labels
        ]
        for inst in corpus.instances:
            words = set(inst.text.split())
            for j, y in enumerate(inst.gold):
                if y:
                    assert words & kw_by_label[j]

    def test_multilabel_cardinality_one_to_three(self):
        corpus = make_synthetic_corpus(10, 40, multi_label=True, seed=3)
        sizes = {sum(i.gold) for i in corpus.instances}
        assert sizes <= {1, 2, 3}
        assert len(corpus.instances) == 400

    def test_deterministic_by_seed(self):
        a = make_synthetic_corpus(3, 4, seed=9)
        b = make_synthetic_corpus(3, 4, seed=9)
        assert a.instances == b.instances and a.labels == b.labels

    def test_keyword_matcher_is_perfect_multiclass(self):
        corpus = make_synthetic_corpus(5, 20, seed=4)
        preds = keyword_match_gold(corpus)
        assert accuracy(preds, [i.gold for i in corpus.instances]) == 1.0

    def test_keyword_matcher_is_perfect_multilabel(self):
        corpus = make_synthetic_corpus(7, 10, multi_label=True, seed=5)
        preds = keyword_match_gold(corpus)
        golds = np.array([i.gold for i in corpus.instances])
        assert micro_prf(preds, golds) == (1.0, 1.0, 1.0)
