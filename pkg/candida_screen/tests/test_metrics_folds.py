import numpy as np
import pytest
from sklearn.model_selection import StratifiedKFold

from candida_screen.core.exceptions import DatasetError, MetricError, ParameterError, ShapeError
from candida_screen.schemas.metrics_schema import FoldSplit, Metrics, MetricsReport
from candida_screen.services.folds import make_folds, split_detection_pool, with_training_extra
from candida_screen.services.metrics import evaluate


def _brute_force(scores, labels):
    """Oráculo: concordância par a par para AUC e recontagem da matriz de confusão"""
    positives = [s for s, l in zip(scores, labels) if l == 1]
    negatives = [s for s, l in zip(scores, labels) if l == 0]
    concordance = 0.0
    for p in positives:
        for n in negatives:
            concordance += 1.0 if p > n else 0.5 if p == n else 0.0
    tp = tn = fp = fn = 0
    for s, l in zip(scores, labels):
        pred = 1 if s >= 0.5 else 0
        tp += pred == 1 and l == 1
        tn += pred == 0 and l == 0
        fp += pred == 1 and l == 0
        fn += pred == 0 and l == 1
    return {
        "auc": concordance / (len(positives) * len(negatives)),
        "acc": (tp + tn) / len(labels),
        "sen": tp / (tp + fn) if tp + fn else 0.0,
        "spe": tn / (tn + fp) if tn + fp else 0.0,
        "f1": 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0,
        "tp": tp, "tn": tn, "fp": fp, "fn": fn,
    }


class TestEvaluate:
    """
    Testes das métricas de classificação binária.
    """

    def test_perfect_separation(self):
        metrics = evaluate([0.9, 0.1], [1, 0])

        assert (metrics.auc, metrics.acc, metrics.sen, metrics.spe, metrics.f1) == (1.0, 1.0, 1.0, 1.0, 1.0)

    def test_all_ties_give_half_auc(self):
        assert evaluate([0.3] * 6, [1, 0, 1, 0, 0, 1]).auc == 0.5

    def test_pairwise_concordance(self):
        """Rótulos [1,1,0,0] com scores [0.8,0.4,0.6,0.2]: 3 de 4 pares concordantes"""
        metrics = evaluate([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0])

        assert metrics.auc == 0.75
        assert (metrics.tp, metrics.tn, metrics.fp, metrics.fn) == (1, 1, 1, 1)

    def test_threshold_is_inclusive(self):
        metrics = evaluate([0.5, 0.49], [1, 0])

        assert metrics.tp == 1 and metrics.tn == 1

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = int(rng.integers(2, 30))
            labels = rng.integers(0, 2, size=n)
            labels[0], labels[1] = 0, 1
            # scores em grade grossa para forçar empates
            scores = np.round(rng.uniform(0, 1, size=n), 1)

            metrics = evaluate(scores, labels)
            expected = _brute_force(scores.tolist(), labels.tolist())

            for name, value in expected.items():
                assert getattr(metrics, name) == pytest.approx(value, abs=1e-12), name

    def test_single_class_raises(self):
        with pytest.raises(MetricError):
            evaluate([0.2, 0.9], [1, 1])

    def test_non_binary_labels_raise(self):
        with pytest.raises(MetricError):
            evaluate([0.2, 0.9], [0, 2])

    def test_length_mismatch_raises(self):
        with pytest.raises(ShapeError):
            evaluate([0.2, 0.9, 0.4], [0, 1])


class TestMetricsReport:
    """
    Testes da agregação por dobra (média e desvio populacional).
    """

    def test_mean_and_std(self):
        folds = [evaluate([0.9, 0.1], [1, 0]), evaluate([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0])]

        report = MetricsReport.from_folds(folds)

        assert report.mean["auc"] == pytest.approx(0.875)
        assert report.std["auc"] == pytest.approx(0.125)
        assert report.formatted("auc") == "87.50±12.50"

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            MetricsReport.from_folds([])

    def test_metrics_schema_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Metrics(auc=1.2, acc=1, sen=1, spe=1, f1=1, tp=1, tn=1, fp=0, fn=0)


class TestFolds:
    """
    Testes das divisões estratificadas da validação cruzada.
    """

    @pytest.fixture
    def pool(self):
        ids = [f"t{i:03d}" for i in range(50)]
        labels = [1 if i % 5 < 2 else 0 for i in range(50)]
        return ids, labels

    def test_partitions_are_disjoint_and_complete(self, pool):
        ids, labels = pool
        for fold in make_folds(ids, labels, n_folds=5, seed=0):
            assert sorted(fold.train + fold.val + fold.test) == sorted(ids)
            assert len(fold.train) == 30 and len(fold.val) == 10 and len(fold.test) == 10

    def test_each_id_tested_once(self, pool):
        ids, labels = pool
        tested = [t for fold in make_folds(ids, labels, 5) for t in fold.test]

        assert sorted(tested) == sorted(ids)

    def test_stratified(self, pool):
        ids, labels = pool
        label_of = dict(zip(ids, labels))
        for fold in make_folds(ids, labels, 5, seed=3):
            assert sum(label_of[t] for t in fold.test) == 4
            assert sum(label_of[t] for t in fold.val) == 4

    def test_validation_is_next_chunk(self, pool):
        ids, labels = pool
        folds = make_folds(ids, labels, 5)

        for index, fold in enumerate(folds):
            assert fold.val == folds[(index + 1) % 5].test

    def test_test_blocks_follow_stratified_kfold(self, pool):
        """Blocos de teste iguais aos do StratifiedKFold(shuffle=True, random_state=seed)"""
        ids, labels = pool
        splitter = StratifiedKFold(n_splits=5, shuffle=True, random_state=7)
        expected = [[ids[j] for j in test] for _, test in splitter.split(np.zeros(50), np.asarray(labels))]

        folds = make_folds(ids, labels, 5, seed=7)

        assert [fold.test for fold in folds] == expected

    def test_seed_determinism(self, pool):
        ids, labels = pool

        assert make_folds(ids, labels, 5, seed=1) == make_folds(ids, labels, 5, seed=1)
        assert make_folds(ids, labels, 5, seed=1) != make_folds(ids, labels, 5, seed=2)

    def test_invalid_inputs_raise(self, pool):
        ids, labels = pool
        with pytest.raises(ParameterError):
            make_folds(ids, labels, n_folds=1)
        with pytest.raises(DatasetError):
            make_folds(ids[:3], labels[:3], n_folds=5)
        with pytest.raises(DatasetError):
            make_folds(["a", "a", "b"], [0, 1, 0], n_folds=2)

    def test_overlapping_split_rejected(self):
        with pytest.raises(ValueError):
            FoldSplit(fold_id=0, train=["a"], val=["a"], test=["b"])

    def test_detection_pool_only_positives(self, pool):
        ids, labels = pool
        detection, remaining = split_detection_pool(ids, labels, fraction=0.5, seed=0)
        label_of = dict(zip(ids, labels))

        assert len(detection) == 10
        assert all(label_of[t] == 1 for t in detection)
        assert sorted(detection + remaining) == sorted(ids)

    def test_training_extra_added_to_every_fold(self, pool):
        ids, labels = pool
        folds = with_training_extra(make_folds(ids[:40], labels[:40], 4), ids[40:])

        for fold in folds:
            assert set(ids[40:]) <= set(fold.train)
