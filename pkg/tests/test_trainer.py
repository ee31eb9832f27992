import dataclasses
import math

import numpy as np
import pytest

from hops import (
    LdfConfig,
    PromptParams,
    SinkhornConfig,
    TrainConfig,
    corrupt_rand,
    evaluate,
    identification_metrics,
    run_repeated,
    synth_gaussian_mixture,
    train,
)
from hops.errors import ConfigInvalid, LengthMismatch, MissingLabels
from hops.train import learning_rate


def make_data(seed=0, num_classes=6, dim=16, shots=8, noise=0.1, L=3, test_per_class=10):
    """One mixture split per class into train and test halves."""
    pool = synth_gaussian_mixture(
        num_classes, dim, shots + test_per_class, noise=noise, seed=seed
    )
    train_idx, test_idx = [], []
    for cls in range(num_classes):
        members = np.flatnonzero(pool.labels == cls)
        train_idx.append(members[:shots])
        test_idx.append(members[shots:])
    bundle = pool.subset(np.concatenate(train_idx))
    bundle = bundle.with_candidates(
        corrupt_rand(bundle.labels, num_classes, L, seed=seed)
    )
    return bundle, pool.subset(np.concatenate(test_idx))


FAST = dict(
    epochs=3,
    batch_size=8,
    ldf=LdfConfig(k=5, tau=0.4),
    sinkhorn=SinkhornConfig(iterations=50),
)


class TestDefaults:
    def test_pinned_hyperparameters(self):
        # regression guard: these defaults are part of the product contract
        cfg = TrainConfig()
        assert cfg.epochs == 200
        assert cfg.batch_size == 32
        assert cfg.lr == 0.002
        assert cfg.warmup_lr == 1e-5
        assert cfg.lam == 1.0
        assert cfg.ldf.k == 20
        assert cfg.ldf.tau == 0.4
        assert cfg.ldf.voting == "hard"
        assert cfg.sinkhorn.epsilon == 0.05
        assert cfg.sinkhorn.iterations == 50
        assert cfg.sinkhorn.log_domain is True


class TestLearningRate:
    def test_schedule_values(self):
        cfg = TrainConfig(epochs=11, lr=0.002, warmup_lr=1e-5)
        assert learning_rate(cfg, 0) == 1e-5
        assert learning_rate(cfg, 1) == pytest.approx(0.002, rel=1e-12)
        e = 5
        expected = 0.002 * 0.5 * (1 + math.cos(math.pi * (e - 1) / 10))
        assert learning_rate(cfg, e) == pytest.approx(expected, rel=1e-12)

    def test_single_epoch_is_warmup_only(self):
        cfg = TrainConfig(epochs=1)
        assert learning_rate(cfg, 0) == cfg.warmup_lr


class TestIdentificationMetrics:
    def test_all_equal(self):
        y = np.array([1, 2, 3])
        m = identification_metrics(y, y, y)
        assert m["acc_joint"] == 1.0 and m["venn_both"] == 1.0

    def test_local_only_correct(self):
        gt = np.array([0, 1, 2])
        m = identification_metrics(gt, (gt + 1) % 3, gt)
        assert m["acc_local"] == 1.0
        assert m["acc_global"] == 0.0
        assert m["acc_joint"] == 0.0
        assert m["venn_local_only"] == 1.0

    def test_fractions_partition(self):
        rng = np.random.default_rng(0)
        gt = rng.integers(0, 4, 50)
        yl = rng.integers(0, 4, 50)
        yg = rng.integers(0, 4, 50)
        m = identification_metrics(yl, yg, gt)
        total = (
            m["venn_local_only"] + m["venn_global_only"] + m["venn_both"] + m["venn_neither"]
        )
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            identification_metrics(np.zeros(3), np.zeros(4), np.zeros(3))


class TestEvaluate:
    def test_untrained_params_on_clean_mixture(self):
        bundle = synth_gaussian_mixture(5, 12, 6, noise=0.0, seed=3)
        params = PromptParams.zeros("uni", bundle.class_anchors.astype(np.float64))
        assert evaluate(params, bundle) == 1.0

    def test_order_invariance(self):
        bundle = synth_gaussian_mixture(4, 10, 5, noise=0.3, seed=4)
        params = PromptParams.zeros("uni", bundle.class_anchors.astype(np.float64))
        base = evaluate(params, bundle)
        perm = np.random.default_rng(0).permutation(bundle.n)
        assert evaluate(params, bundle.subset(perm)) == base

    def test_random_params_nondegenerate_two_class(self):
        # Monte Carlo: mean accuracy of random class-wise contexts stays away
        # from both 0 and 1 on balanced two-class data
        bundle = synth_gaussian_mixture(2, 8, 50, noise=0.2, seed=5)
        anchors = bundle.class_anchors.astype(np.float64)
        rng = np.random.default_rng(6)
        accs = []
        for _ in range(20):
            params = PromptParams(
                mode="cls", context=3.0 * rng.standard_normal(anchors.shape),
                anchors=anchors,
            )
            accs.append(evaluate(params, bundle))
        assert 0.2 <= np.mean(accs) <= 0.8

    def test_missing_labels(self):
        bundle = synth_gaussian_mixture(3, 8, 4, noise=0.1, seed=7)
        stripped = dataclasses.replace(bundle, labels=None)
        params = PromptParams.zeros("uni", bundle.class_anchors.astype(np.float64))
        with pytest.raises(MissingLabels):
            evaluate(params, stripped)


class TestTrain:
    def test_smoke_baseline_cc(self):
        bundle, test = make_data()
        cfg = TrainConfig(method="baseline", loss_name="cc", seed=1, **FAST)
        params, log = train(bundle, test, cfg)
        assert len(log.records) == cfg.epochs
        assert all(np.isfinite(r.loss) for r in log.records)
        assert math.isnan(log.final.acc_local)

    def test_zero_noise_hops_identifies_everything(self):
        # full-batch marginals: subsampled batches leave 1-2 spillover flips
        # in the global selector even on perfectly separated clusters
        bundle, test = make_data(seed=2, num_classes=10, dim=32, shots=16, noise=0.0)
        cfg = TrainConfig(
            method="hops",
            seed=2,
            epochs=3,
            batch_size=bundle.n,
            ldf=LdfConfig(k=10, tau=0.4),
            sinkhorn=SinkhornConfig(),
        )
        params, log = train(bundle, test, cfg)
        assert log.final.acc_joint == 1.0
        assert log.final.test_acc == 1.0

    def test_deterministic_metrics(self):
        bundle, test = make_data(seed=3)
        cfg = TrainConfig(method="hops", seed=9, **FAST)
        _, log_a = train(bundle, test, cfg)
        _, log_b = train(bundle, test, cfg)
        assert log_a.to_csv() == log_b.to_csv()

    def test_partial_final_batch(self):
        bundle, test = make_data(seed=4, num_classes=5, shots=5)  # n=25, B=8
        cfg = TrainConfig(method="hops", seed=1, **FAST)
        _, log = train(bundle, test, cfg)
        assert len(log.records) == 3

    def test_ablation_methods_record_their_selector_only(self):
        bundle, test = make_data(seed=5)
        cfg = TrainConfig(method="ldf_only", seed=1, **FAST)
        _, log = train(bundle, test, cfg)
        assert not math.isnan(log.final.acc_local)
        assert math.isnan(log.final.acc_global)
        cfg = TrainConfig(method="gop_only", seed=1, **FAST)
        _, log = train(bundle, test, cfg)
        assert not math.isnan(log.final.acc_global)
        assert math.isnan(log.final.acc_local)

    def test_monotone_on_separable_data(self):
        for seed in range(5):
            bundle, test = make_data(
                seed=seed, num_classes=10, dim=32, shots=16, noise=0.1
            )
            cfg = TrainConfig(
                method="hops", seed=seed, epochs=10, batch_size=bundle.n,
                ldf=LdfConfig(k=10, tau=0.4),
            )
            _, log = train(bundle, test, cfg)
            assert log.records[-1].acc_joint >= log.records[0].acc_joint

    def test_long_tail_bundle_trains(self):
        from hops import CorruptionConfig, corrupt_bundle

        bundle, test = make_data(seed=14, num_classes=6, dim=16, shots=12)
        plain = dataclasses.replace(bundle, candidates=None)
        tail = corrupt_bundle(
            plain, CorruptionConfig(kind="rand", L=3, seed=3, tail_pattern="two_level")
        )
        assert np.bincount(tail.labels, minlength=6).tolist() == [12, 12, 12, 3, 3, 3]
        cfg = TrainConfig(method="hops", seed=1, **FAST)
        _, log = train(tail, test, cfg)
        assert np.isfinite(log.final.loss)
        assert 0.0 <= log.final.acc_joint <= 1.0

    def test_missing_gt_bundle_trains(self):
        from hops import apply_missing_gt

        bundle, test = make_data(seed=15, num_classes=5, dim=16, shots=16)
        cands = apply_missing_gt(
            bundle.candidates, bundle.labels, 0.25, "rand", bundle.embeddings, 2
        )
        noisy = bundle.with_candidates(cands)
        cfg = TrainConfig(method="hops", seed=1, **FAST)
        _, log = train(noisy, test, cfg)
        assert np.isfinite(log.final.loss)
        # a quarter of each class cannot be identified: joint tops out at 0.75
        assert log.final.acc_joint <= 0.75 + 1e-9

    def test_method_validation(self):
        with pytest.raises(ConfigInvalid):
            TrainConfig(method="baseline")
        with pytest.raises(ConfigInvalid):
            TrainConfig(method="nope")

    def test_cls_prompt_mode(self):
        bundle, test = make_data(seed=16)
        cfg = TrainConfig(method="hops", seed=1, prompt_mode="cls", **FAST)
        params, log = train(bundle, test, cfg)
        assert params.context.shape == (6, 16)
        assert np.isfinite(log.final.loss)

    def test_soft_voting_variant(self):
        bundle, test = make_data(seed=12, noise=0.0, num_classes=8, dim=16, L=2)
        cfg = TrainConfig(
            method="ldf_only", seed=1, epochs=2, batch_size=bundle.n,
            ldf=LdfConfig(k=5, tau=0.4, voting="soft"),
        )
        _, log = train(bundle, test, cfg)
        # similarity-weighted votes still recover everything on clean clusters
        assert log.final.acc_local == 1.0

    def test_parallel_local_selection_mode(self, monkeypatch):
        # opt-in thread fan-out must preserve the selections themselves
        # (thread scheduling cannot change a pure per-instance computation)
        bundle, test = make_data(seed=7)
        cfg = TrainConfig(method="ldf_only", seed=2, **FAST)
        _, serial = train(bundle, test, cfg)
        monkeypatch.setenv("HOPS_THREADS", "4")
        _, threaded = train(bundle, test, cfg)
        assert [r.acc_local for r in threaded.records] == [
            r.acc_local for r in serial.records
        ]

    def test_csv_header_and_shape(self):
        bundle, test = make_data(seed=6)
        cfg = TrainConfig(method="baseline", loss_name="mse", seed=1, **FAST)
        _, log = train(bundle, test, cfg)
        lines = log.to_csv().strip().split("\n")
        assert lines[0] == (
            "epoch,loss,acc_local,acc_global,acc_joint,venn_local_only,"
            "venn_global_only,venn_both,venn_neither,test_acc,lr"
        )
        assert len(lines) == 1 + cfg.epochs
        assert all(len(line.split(",")) == 11 for line in lines[1:])


class TestRunRepeated:
    def test_single_seed(self):
        bundle, test = make_data(seed=8, num_classes=4, shots=4)
        cfg = TrainConfig(
            method="baseline", loss_name="cc", epochs=2, batch_size=8,
            ldf=LdfConfig(k=3),
        )
        out = run_repeated(bundle, test, cfg, [5])
        assert out["std"] == 0.0
        assert out["mean"] == out["final_test_acc"][0]

    def test_three_seeds_low_variance_on_separable_data(self):
        bundle, test = make_data(seed=9, noise=0.05)
        cfg = TrainConfig(method="hops", epochs=3, batch_size=8, ldf=LdfConfig(k=5))
        out = run_repeated(bundle, test, cfg, [1, 2, 3])
        for acc in out["final_test_acc"]:
            assert abs(acc - out["mean"]) <= 0.02 + 1e-9
