import numpy as np
import pytest

from gatefuse.encoders import pool_word_vectors
from gatefuse.synthetic import (
    SynthConfig,
    bayes_oracle_accuracy,
    generate_synthetic,
    signature_share,
    synthetic_word_vectors,
    text_oracle_predictions,
)
from gatefuse.training import TrainConfig, evaluate, make_split, prepare_inputs, train


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(rho_graph=1.5)
    with pytest.raises(ValueError):
        SynthConfig(n=10)
    with pytest.raises(ValueError):
        SynthConfig(n=30, classes=40)


def test_signature_share_calibration():
    assert signature_share(0.0) == 0.0
    assert signature_share(0.5) == 0.0
    assert signature_share(0.75) == pytest.approx(0.5)
    assert signature_share(1.0) == 1.0


def test_generator_deterministic_per_seed():
    cfg = SynthConfig(n=100, relations=2, seed=5)
    a, ta = generate_synthetic(cfg)
    b, tb = generate_synthetic(cfg)
    assert np.array_equal(ta.labels, tb.labels)
    assert a.texts == b.texts
    for (_, x), (_, y) in zip(a.graph.relations, b.graph.relations):
        assert (x != y).nnz == 0


def test_distinct_seeds_distinct_edge_sets():
    a, _ = generate_synthetic(SynthConfig(n=100, relations=1, seed=0))
    b, _ = generate_synthetic(SynthConfig(n=100, relations=1, seed=1))
    diff = (a.graph.relations[0][1] != b.graph.relations[0][1]).nnz
    assert diff > 0


def test_labels_balanced_and_label_fraction_respected():
    cfg = SynthConfig(n=500, classes=2, label_fraction=0.4, seed=2)
    bundle, truth = generate_synthetic(cfg)
    counts = np.bincount(truth.labels)
    assert abs(counts[0] - counts[1]) <= 1
    assert np.sum(bundle.labels != -1) == 200
    shown = bundle.labels != -1
    assert np.array_equal(bundle.labels[shown], truth.labels[shown])


def test_intra_community_edge_fraction_tracks_rho():
    for rho in (0.5, 0.8, 0.95):
        cfg = SynthConfig(n=2000, relations=2, rho_graph=rho, seed=3)
        bundle, truth = generate_synthetic(cfg)
        same = total = 0
        for kind, adj in bundle.graph.relations:
            if kind.direction != "forward":
                continue
            coo = adj.tocoo()
            same += np.sum(truth.labels[coo.row] == truth.labels[coo.col])
            total += coo.nnz
        assert abs(same / total - rho) < 0.02


def test_conflict_users_sample_opposite_signature():
    cfg = SynthConfig(n=200, rho_text=1.0, conflict_fraction=0.25, seed=4)
    bundle, truth = generate_synthetic(cfg)
    assert truth.conflict.sum() == 50
    assert np.array_equal(truth.text_class[truth.conflict],
                          (truth.labels[truth.conflict] + 1) % 2)
    assert np.array_equal(truth.text_class[~truth.conflict],
                          truth.labels[~truth.conflict])
    # all their tokens come from the wrong class's vocabulary
    for u in np.flatnonzero(truth.conflict)[:10]:
        for tok in bundle.texts[u]:
            assert tok.startswith(f"c{truth.text_class[u]}")


def test_graph_oracle_monotone_in_rho():
    accs = []
    for rho in (0.5, 0.7, 0.9, 1.0):
        cfg = SynthConfig(n=1000, relations=2, rho_graph=rho, seed=6)
        bundle, truth = generate_synthetic(cfg)
        accs.append(bayes_oracle_accuracy(bundle, truth, cfg)["graph"])
    assert all(a <= b + 1e-12 for a, b in zip(accs, accs[1:]))
    assert accs[-1] > 0.99


def test_text_oracle_noise_only_is_chance():
    cfg = SynthConfig(n=1000, rho_text=0.0, seed=7)
    bundle, truth = generate_synthetic(cfg)
    acc = bayes_oracle_accuracy(bundle, truth, cfg)["text"]
    assert abs(acc - 0.5) < 0.03


def test_text_oracle_disjoint_vocabularies_near_perfect():
    cfg = SynthConfig(n=500, rho_text=1.0, seed=8)
    bundle, truth = generate_synthetic(cfg)
    acc = bayes_oracle_accuracy(bundle, truth, cfg)["text"]
    assert acc >= 0.99


def test_conflict_users_land_on_wrong_side_of_text_oracle():
    cfg = SynthConfig(n=400, rho_text=1.0, conflict_fraction=0.3, seed=9)
    bundle, truth = generate_synthetic(cfg)
    pred = text_oracle_predictions(bundle, cfg)
    conflict = truth.conflict
    wrong = np.mean(pred[conflict] != truth.labels[conflict])
    assert wrong >= 0.9


def test_fully_informative_graph_supports_near_perfect_link_model():
    cfg = SynthConfig(n=400, relations=2, rho_graph=1.0, rho_text=0.0,
                      label_fraction=1.0, seed=10)
    bundle, truth = generate_synthetic(cfg)
    # degree-count oracle first
    assert bayes_oracle_accuracy(bundle, truth, cfg)["graph"] >= 0.99
    index, table = synthetic_word_vectors(cfg)
    feats = pool_word_vectors(bundle.texts, index, table)
    split = make_split(bundle.labels, seed=0)
    res = train(bundle.graph, feats, split,
                TrainConfig(mode="link", seed=0, epochs=150, patience=40))
    inputs = prepare_inputs(bundle.graph, feats)
    assert evaluate(res.model, inputs, split, "test").accuracy >= 0.95


def test_uninformative_graph_keeps_link_model_at_chance():
    cfg = SynthConfig(n=2000, relations=2, rho_graph=0.5, rho_text=0.0,
                      label_fraction=1.0, seed=1)
    bundle, truth = generate_synthetic(cfg)
    index, table = synthetic_word_vectors(cfg)
    feats = pool_word_vectors(bundle.texts, index, table)
    split = make_split(bundle.labels, seed=0)
    res = train(bundle.graph, feats, split,
                TrainConfig(mode="link", seed=0, epochs=60, patience=20))
    inputs = prepare_inputs(bundle.graph, feats)
    acc = evaluate(res.model, inputs, split, "test").accuracy
    assert abs(acc - 0.5) <= 0.05


def test_synthetic_vectors_cover_vocabulary():
    cfg = SynthConfig(n=50, seed=12)
    bundle, _ = generate_synthetic(cfg)
    index, vectors = synthetic_word_vectors(cfg)
    assert vectors.shape[1] == cfg.vector_dim
    for tokens in bundle.texts:
        for tok in tokens:
            assert tok in index
