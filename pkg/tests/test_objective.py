import math

import numpy as np
import pytest

import sgmi.autodiff as ad
from sgmi.autodiff import ContractError, ShapeMismatch, Tape, Tensor, backward
from sgmi.data import make_batch, synthetic_dataset, synthetic_regression, with_degree_features
from sgmi.encoder import EncoderConfig
from sgmi.model import GeneratorConfig, Model
from sgmi.objective import (
    cross_entropy,
    dv_loss,
    jsd_loss,
    mean_squared_error,
    permute_nodes,
    score,
    semi_supervised_loss,
    unsupervised_loss,
)

LN2 = math.log(2.0)


def _sp(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def tiny_model(graphs, hidden=5, layers=2, depth=1, seed=0, task=None, num_classes=None):
    node_dim = graphs[0].node_attrs.shape[1]
    edge_dim = graphs[0].edge_attrs.shape[1] if graphs[0].edge_attrs is not None else None
    return Model.build(
        node_dim=node_dim,
        edge_dim=edge_dim,
        encoder_config=EncoderConfig(num_layers=layers, hidden_dim=hidden),
        generator_config=GeneratorConfig("tree", depth=depth),
        rng=np.random.default_rng(seed),
        num_classes=num_classes,
        task=task,
    )


def toy_graphs(seed=0, count=3):
    return with_degree_features(synthetic_dataset(seed, count, 2))


# ---------------------------------------------------------------------------
# Discriminator
# ---------------------------------------------------------------------------

def test_score_zero_vector():
    assert score(Tensor(np.zeros(4)), Tensor(np.ones(4))).item() == 0.0


def test_score_basis_vectors():
    e1 = np.array([1.0, 0.0, 0.0])
    assert score(Tensor(e1), Tensor(e1)).item() == 1.0


def test_score_matches_dot_oracle():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=5), rng.normal(size=5)
    assert score(Tensor(a), Tensor(b)).item() == pytest.approx(float(a @ b), abs=1e-12)


def test_score_symmetric():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=6), rng.normal(size=6)
    assert score(Tensor(a), Tensor(b)).item() == score(Tensor(b), Tensor(a)).item()


def test_score_length_mismatch():
    with pytest.raises(ShapeMismatch):
        score(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


# ---------------------------------------------------------------------------
# Node permutation (corruption)
# ---------------------------------------------------------------------------

def test_permute_single_node_graph_is_identity():
    graphs = toy_graphs(count=1)
    single = graphs[0]
    single_node = make_batch([type(single)(1, np.zeros((0, 2)),
                                           node_attrs=np.array([[1.0, 2.0]]))])
    x = Tensor(single_node.node_attrs)
    out = permute_nodes(x, single_node, seed=5)
    np.testing.assert_array_equal(out.data, x.data)


def test_permute_preserves_per_graph_row_multisets():
    graphs = toy_graphs(count=3)
    batch = make_batch(graphs)
    x = Tensor(np.random.default_rng(0).normal(size=(batch.num_nodes, 3)))
    for seed in range(5):
        out = permute_nodes(x, batch, seed=seed).data
        for g in range(batch.num_graphs):
            sl = batch.node_slice(g)
            orig = sorted(map(tuple, x.data[sl]))
            perm = sorted(map(tuple, out[sl]))
            assert orig == perm


def test_permute_seed_reproducible():
    batch = make_batch(toy_graphs(count=2))
    x = Tensor(np.random.default_rng(1).normal(size=(batch.num_nodes, 4)))
    a = permute_nodes(x, batch, seed=99).data
    b = permute_nodes(x, batch, seed=99).data
    np.testing.assert_array_equal(a, b)
    c = permute_nodes(x, batch, seed=100).data
    assert not np.array_equal(a, c)


# ---------------------------------------------------------------------------
# Estimators on raw scores
# ---------------------------------------------------------------------------

def test_jsd_all_zero_scores():
    zeros = lambda n: Tensor(np.zeros((n, 1)))
    value = jsd_loss(zeros(3), zeros(3), zeros(6)).item()
    assert value == pytest.approx(-3 * LN2, abs=1e-12)


def test_jsd_supremum_limit():
    big = Tensor(np.full((3, 1), 60.0))
    low = Tensor(np.full((3, 1), -60.0))
    value = jsd_loss(big, low, low).item()
    assert -1e-20 < value < 0.0  # approaches 0 from below


def test_jsd_always_negative():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pos = Tensor(rng.normal(size=(4, 1)) * 5)
        head = Tensor(rng.normal(size=(4, 1)) * 5)
        tail = Tensor(rng.normal(size=(12, 1)) * 5)
        assert jsd_loss(pos, head, tail).item() < 0.0


def test_jsd_empty_negatives_rejected():
    with pytest.raises(ContractError, match="at least 2"):
        jsd_loss(Tensor(np.zeros((1, 1))), Tensor(np.zeros((1, 1))), Tensor(np.zeros((0, 1))))


def test_jsd_batch_of_two_matches_term_by_term_script():
    """Hand-set scores, expected value assembled term by term."""
    pos = np.array([[0.7], [-0.2]])
    head = np.array([[0.1], [0.4]])
    tail = np.array([[-0.3], [0.8]])
    expected = (
        np.mean(-_sp(-pos)) - np.mean(_sp(tail)) - np.mean(_sp(head))
    )
    value = jsd_loss(Tensor(pos), Tensor(head), Tensor(tail)).item()
    assert value == pytest.approx(float(expected), abs=1e-12)


def test_jsd_monotonicity_under_perturbation():
    rng = np.random.default_rng(3)
    pos = rng.normal(size=(3, 1))
    head = rng.normal(size=(3, 1))
    tail = rng.normal(size=(6, 1))
    base = jsd_loss(Tensor(pos), Tensor(head), Tensor(tail)).item()
    up_pos = jsd_loss(Tensor(pos + 0.1), Tensor(head), Tensor(tail)).item()
    assert up_pos > base
    up_head = jsd_loss(Tensor(pos), Tensor(head + 0.1), Tensor(tail)).item()
    assert up_head < base
    up_tail = jsd_loss(Tensor(pos), Tensor(head), Tensor(tail + 0.1)).item()
    assert up_tail < base


def test_dv_all_zero_scores():
    zeros = lambda n: Tensor(np.zeros((n, 1)))
    assert dv_loss(zeros(3), zeros(9)).item() == pytest.approx(0.0, abs=1e-12)


def test_dv_matched_scores_carry_no_information():
    ones = lambda n: Tensor(np.ones((n, 1)))
    assert dv_loss(ones(3), ones(9)).item() == pytest.approx(0.0, abs=1e-12)


def test_dv_matches_direct_formula():
    rng = np.random.default_rng(7)
    pos = rng.normal(size=(4, 1))
    neg = rng.normal(size=(12, 1))
    expected = float(pos.mean() - np.log(np.exp(neg).mean()))
    assert dv_loss(Tensor(pos), Tensor(neg)).item() == pytest.approx(expected, abs=1e-10)


def test_dv_stable_for_large_scores():
    pos = Tensor(np.full((2, 1), 500.0))
    neg = Tensor(np.full((4, 1), 800.0))
    value = dv_loss(pos, neg).item()
    assert np.isfinite(value)
    assert value == pytest.approx(500.0 - 800.0, abs=1e-9)


def test_estimator_gradients_match_finite_differences():
    from helpers import assert_gradients_match

    rng = np.random.default_rng(11)
    pos, head, tail = rng.normal(size=(3, 1)), rng.normal(size=(3, 1)), rng.normal(size=(6, 1))
    assert_gradients_match(lambda ts: jsd_loss(ts[0], ts[1], ts[2]), [pos, head, tail])
    assert_gradients_match(
        lambda ts: dv_loss(ts[0], ad.concat_rows([ts[1], ts[2]])), [pos, head, tail]
    )


# ---------------------------------------------------------------------------
# Full unsupervised objective
# ---------------------------------------------------------------------------

def test_batch_of_one_rejected():
    graphs = toy_graphs(count=1)
    model = tiny_model(graphs)
    with pytest.raises(ContractError, match="at least 2"):
        unsupervised_loss(make_batch(graphs), model)


def test_unsupervised_deterministic_bitwise():
    graphs = toy_graphs(count=4)
    model = tiny_model(graphs, seed=3)
    batch = make_batch(graphs)
    a, _ = unsupervised_loss(batch, model, "jsd", seed=5)
    b, _ = unsupervised_loss(batch, model, "jsd", seed=5)
    assert a.item() == b.item()


def test_zero_parameters_give_closed_form_losses():
    graphs = toy_graphs(count=3)
    model = tiny_model(graphs)
    for p in model.store:
        p.value.data[...] = 0.0
    batch = make_batch(graphs)
    jsd_total, report = unsupervised_loss(batch, model, "jsd")
    assert jsd_total.item() == pytest.approx(-3 * LN2, abs=1e-9)
    assert report.total == pytest.approx(-3 * LN2, abs=1e-9)
    dv_total, _ = unsupervised_loss(batch, model, "dv")
    assert dv_total.item() == pytest.approx(0.0, abs=1e-9)


def test_negative_pair_counts():
    graphs = toy_graphs(count=5)
    model = tiny_model(graphs)
    batch = make_batch(graphs)
    from sgmi.objective import _pair_scores
    from sgmi.subgraphs import reconstruct

    x0, node_embed, h = model.encoder.encode(batch)
    corrupted = permute_nodes(x0, batch, 0)
    _, h_hat = model.encoder.propagate(corrupted, batch)
    h_rec, _ = reconstruct(node_embed, batch, model.generator, model.subgraph_conv)
    pos, head, tail = _pair_scores(h, h_rec, h_hat)
    n = batch.num_graphs
    assert pos.shape == (n, 1)
    assert head.shape == (n, 1)
    assert tail.shape == (n * (n - 1), 1)


def test_three_graph_batch_matches_pair_enumeration_oracle():
    """Enumerate all 3 positive, 3 head, 6 tail pairs with plain numpy dots."""
    graphs = toy_graphs(seed=5, count=3)
    model = tiny_model(graphs, seed=7)
    batch = make_batch(graphs)
    seed = 13
    total, report = unsupervised_loss(batch, model, "jsd", seed=seed)

    x0, node_embed, h_t = model.encoder.encode(batch)
    corrupted = permute_nodes(x0, batch, seed)
    _, h_hat_t = model.encoder.propagate(corrupted, batch)
    from sgmi.subgraphs import reconstruct

    h_rec_t, _ = reconstruct(node_embed, batch, model.generator, model.subgraph_conv)
    h, h_hat, h_rec = h_t.data, h_hat_t.data, h_rec_t.data

    pos_terms = [-_sp(-float(h[i] @ h_rec[i])) for i in range(3)]
    head_terms = [_sp(float(h_hat[i] @ h_rec[i])) for i in range(3)]
    tail_terms = [
        _sp(float(h[j] @ h_rec[i])) for i in range(3) for j in range(3) if i != j
    ]
    expected = np.mean(pos_terms) - np.mean(tail_terms) - np.mean(head_terms)
    assert total.item() == pytest.approx(float(expected), abs=1e-10)
    assert report.positive == pytest.approx(float(np.mean(pos_terms)), abs=1e-10)
    assert report.head_negative == pytest.approx(float(-np.mean(head_terms)), abs=1e-10)
    assert report.tail_negative == pytest.approx(float(-np.mean(tail_terms)), abs=1e-10)


def _model_loss_gradcheck(loss_fn, model, rtol=1e-4, h=1e-5):
    """FD check of d(loss)/d(theta) for every parameter in the store."""
    with Tape() as tape:
        loss = loss_fn()
        backward(tape, loss)
    failures = []
    for p in model.store:
        analytic = p.grad.data.copy()
        numeric = np.zeros_like(analytic)
        flat = p.value.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_fn().item()
            flat[i] = keep - h
            down = loss_fn().item()
            flat[i] = keep
            nflat[i] = (up - down) / (2 * h)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1.0)
        if rel.size and rel.max() > rtol:
            failures.append((p.name, float(rel.max())))
        p.zero_grad()
    assert not failures, f"gradient mismatches: {failures}"


def test_unsupervised_loss_gradients_match_finite_differences():
    graphs = toy_graphs(seed=1, count=3)
    model = tiny_model(graphs, hidden=4, layers=2, depth=1, seed=2)
    batch = make_batch(graphs)
    _model_loss_gradcheck(lambda: unsupervised_loss(batch, model, "jsd", seed=3)[0], model)


def test_dv_loss_gradients_match_finite_differences():
    graphs = toy_graphs(seed=2, count=3)
    model = tiny_model(graphs, hidden=4, layers=1, depth=1, seed=4)
    batch = make_batch(graphs)
    _model_loss_gradcheck(lambda: unsupervised_loss(batch, model, "dv", seed=5)[0], model)


def test_edge_attribute_path_gradients_match_finite_differences():
    """Edge MLP and the two-view attribute kernel also pass the FD oracle."""
    rng = np.random.default_rng(6)
    graphs = toy_graphs(seed=4, count=3)
    for g in graphs:
        g.edge_attrs = rng.uniform(size=(g.edges.shape[0], 2))
    model = tiny_model(graphs, hidden=4, layers=1, depth=1, seed=5)
    assert model.encoder.edge_mlp is not None
    batch = make_batch(graphs)
    _model_loss_gradcheck(lambda: unsupervised_loss(batch, model, "jsd", seed=8)[0], model)


# ---------------------------------------------------------------------------
# Supervised pieces and the combined loss
# ---------------------------------------------------------------------------

def test_cross_entropy_perfect_predictions_near_zero():
    logits = Tensor(np.array([[60.0, 0.0], [0.0, 60.0]]))
    value = cross_entropy(logits, np.array([0, 1])).item()
    assert value == pytest.approx(0.0, abs=1e-9)


def test_cross_entropy_uniform_is_log_k():
    logits = Tensor(np.zeros((4, 3)))
    value = cross_entropy(logits, np.array([0, 1, 2, 0])).item()
    assert value == pytest.approx(math.log(3.0), abs=1e-12)


def test_mse_matches_numpy():
    rng = np.random.default_rng(0)
    pred = rng.normal(size=(5, 1))
    target = rng.normal(size=(5, 1))
    value = mean_squared_error(Tensor(pred), target).item()
    assert value == pytest.approx(float(np.mean((pred - target) ** 2)), abs=1e-12)


def test_semi_lambda_zero_equals_pure_supervised():
    graphs = toy_graphs(seed=3, count=4)
    model = tiny_model(graphs, task="classification", num_classes=2, seed=1)
    labeled = make_batch(graphs)
    total, report = semi_supervised_loss(labeled, None, model, lam=0.0)
    _, _, h = model.encoder.encode(labeled)
    expected = cross_entropy(model.classifier(h), labeled.labels).item()
    assert total.item() == expected
    assert report.supervised == expected
    assert report.total == expected


def test_semi_negative_lambda_rejected():
    graphs = toy_graphs(count=2)
    model = tiny_model(graphs, task="classification", num_classes=2)
    with pytest.raises(ValueError, match="lambda"):
        semi_supervised_loss(make_batch(graphs), None, model, lam=-0.1)


def test_semi_component_sum_oracle():
    """total == supervised + lam * (negated estimator), recomputed independently."""
    graphs = toy_graphs(seed=9, count=4)
    model = tiny_model(graphs, task="classification", num_classes=2, seed=6)
    labeled = make_batch(graphs[:2])
    unlabeled = make_batch(graphs[2:])
    lam = 1e-3
    total, report = semi_supervised_loss(labeled, unlabeled, model, lam, "jsd", seed=21)

    _, _, h = model.encoder.encode(labeled)
    sup = cross_entropy(model.classifier(h), labeled.labels).item()
    from sgmi.data import concat_batches

    uns, _ = unsupervised_loss(concat_batches(labeled, unlabeled), model, "jsd", seed=21)
    assert total.item() == pytest.approx(sup + lam * (-uns.item()), abs=1e-12)
    assert report.supervised == pytest.approx(sup, abs=1e-12)


def test_semi_regression_uses_mse():
    graphs = with_degree_features(synthetic_regression(4, 6))
    model = tiny_model(graphs, task="regression", seed=2)
    labeled = make_batch(graphs[:3])
    total, report = semi_supervised_loss(labeled, None, model, lam=0.0)
    _, _, h = model.encoder.encode(labeled)
    pred = model.classifier(h)
    expected = mean_squared_error(pred, labeled.labels.reshape(-1, 1)).item()
    assert total.item() == pytest.approx(expected, abs=1e-12)


def test_semi_loss_gradients_match_finite_differences():
    graphs = toy_graphs(seed=8, count=4)
    model = tiny_model(graphs, hidden=4, layers=1, depth=1, seed=3,
                       task="classification", num_classes=2)
    labeled = make_batch(graphs[:2])
    unlabeled = make_batch(graphs[2:])
    _model_loss_gradcheck(
        lambda: semi_supervised_loss(labeled, unlabeled, model, 1e-2, "jsd", seed=4)[0],
        model,
    )


def test_loss_report_csv_row():
    from sgmi.objective import LossReport

    row = LossReport(-1.5, -0.5, -0.25, -0.75).csv_row(3)
    assert row == "3,-1.5,-0.5,-0.25,-0.75"
    row = LossReport(-1.5, -0.5, -0.25, -0.75, supervised=0.125).csv_row(0)
    assert row.endswith(",0.125")
