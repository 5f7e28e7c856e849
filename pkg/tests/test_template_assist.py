import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tacorr.diffcore import (
    ContractError,
    Parameter,
    Tensor,
    finite_diff_check,
    gumbel_softmax,
    softmax_rows,
)
from tacorr.template_assist import (
    CorrelationFusion,
    correlation_fusion,
    direct_similarity,
    mix_pool,
    mix_templates,
    select_template,
    selector_scores,
    transitive_loss,
    transitive_similarity,
)
from tacorr.template_gen import SelectedTemplate, Template, TemplateBank


def test_mix_pool_examples(rng):
    v = rng.normal(size=5)
    np.testing.assert_allclose(mix_pool(np.tile(v, (4, 1))).data, v)
    np.testing.assert_allclose(mix_pool(np.array([[0.0, 2], [2, 0]])).data, [1.5, 1.5])
    f = rng.normal(size=(7, 3))
    np.testing.assert_allclose(mix_pool(f[rng.permutation(7)]).data, mix_pool(f).data)
    with pytest.raises(ValueError):
        mix_pool(np.zeros((0, 3)))


def _selection_case(rng):
    x = rng.normal(size=(12, 3))
    fx = rng.normal(size=(12, 6))
    good = Template(x.copy(), np.tile(mix_pool(fx).data, (12, 1)))
    far = Template(x + 50.0, rng.normal(size=(12, 6)))
    return x, fx, good, far


def test_selector_prefers_matching_template(rng):
    x, fx, good, far = _selection_case(rng)
    idx, w = select_template(TemplateBank([good, far]), x, x, fx, fx, mode="eval")
    assert idx == 0 and w.data.tolist() == [1.0, 0.0]
    total, sem, geo = selector_scores(TemplateBank([good, far]), x, x, fx, fx)
    assert sem.data[0] == pytest.approx(2.0) and geo.data[0] == 0.0
    np.testing.assert_allclose(total.data, sem.data + geo.data)
    # relabelling the bank relabels the choice
    idx, _ = select_template(TemplateBank([far, good]), x, x, fx, fx, mode="eval")
    assert idx == 1


def test_selector_single_template_and_errors(rng):
    x, fx, good, _ = _selection_case(rng)
    idx, w = select_template(TemplateBank([good]), x, x, fx, fx, mode="train",
                             rng=np.random.default_rng(0))
    assert idx == 0 and w.data.tolist() == [1.0]
    with pytest.raises(ValueError):
        select_template(TemplateBank([good, good]), x, x, fx, fx, mode="bogus")


def test_selector_eval_is_rng_free_and_train_is_one_hot(rng):
    x, fx, good, far = _selection_case(rng)
    bank = TemplateBank([far, good, far])
    picks = {select_template(bank, x, x, fx, fx, mode="eval")[0] for _ in range(5)}
    assert picks == {1}
    for seed in range(10):
        idx, w = select_template(bank, x, x, fx, fx, mode="train", rng=np.random.default_rng(seed))
        assert np.count_nonzero(w.data) == 1 and w.data[idx] == 1.0


def test_mix_templates_forward_equals_selected(rng):
    bank = TemplateBank([Template(rng.normal(size=(4, 3)), rng.normal(size=(4, 2)))
                         for _ in range(3)])
    logits = Parameter(rng.normal(size=3))
    w = gumbel_softmax(logits, 1.0, hard=True, rng=np.random.default_rng(1))
    idx = int(np.argmax(w.data))
    t = mix_templates(bank, w, idx)
    np.testing.assert_array_equal(t.positions.data, bank[idx].positions.data)
    (t.embeddings.sum() + t.positions.sum()).backward()
    assert logits.grad is not None and np.abs(logits.grad).sum() > 0


def test_fusion_shape_equivariance_gradient(rng):
    fus = CorrelationFusion(8, 5, rng)
    f, emb = rng.normal(size=(6, 8)), rng.normal(size=(5, 8))
    out = correlation_fusion(f, SelectedTemplate(None, emb), fus)
    assert out.shape == (6, 8)
    perm = rng.permutation(6)
    np.testing.assert_allclose(fus(f[perm], emb).data, out.data[perm], atol=1e-5)
    fp, ep = Parameter(f), Parameter(emb)
    w = rng.normal(size=(6, 8))
    assert finite_diff_check(lambda *_: (fus(fp, ep) * w).sum(), [fp, ep] + fus.parameters()) < 1e-4
    with pytest.raises(ValueError):
        fus(rng.normal(size=(6, 7)), emb)


def test_direct_similarity_examples(rng):
    e = np.eye(2)
    np.testing.assert_array_equal(direct_similarity(e, e[::-1]).data, [[0, 1], [1, 0]])
    f = rng.normal(size=(4, 3))
    s = direct_similarity(f, f).data
    np.testing.assert_allclose(s, s.T)
    np.testing.assert_allclose(np.diag(s), (f ** 2).sum(axis=1))
    g = rng.normal(size=(5, 3))
    expected = [[sum(a * b for a, b in zip(r, c)) for c in g] for r in f]
    np.testing.assert_allclose(direct_similarity(f, g).data, expected, atol=1e-12)


def test_similarities_are_permutation_equivariant(rng):
    fx, fy, emb = rng.normal(size=(6, 4)), rng.normal(size=(6, 4)), rng.normal(size=(5, 4))
    p, q = rng.permutation(6), rng.permutation(6)
    t = SelectedTemplate(None, emb)
    np.testing.assert_allclose(direct_similarity(fx[p], fy[q]).data,
                               direct_similarity(fx, fy).data[p][:, q], atol=1e-5)
    np.testing.assert_allclose(transitive_similarity(fx[p], t, fy[q]).data,
                               transitive_similarity(fx, t, fy).data[p][:, q], atol=1e-5)


def test_transitive_hand_case():
    t = SelectedTemplate(None, np.eye(2))
    fx = np.eye(2) * math.log(3)  # softmax rows [.75, .25]
    fy = np.eye(2) * 60.0         # softmax rows ~ identity
    np.testing.assert_allclose(transitive_similarity(fx, t, fy).data,
                               [[0.75, 0.25], [0.25, 0.75]], atol=1e-9)


def test_transitive_permutation_composition():
    perm = np.array([2, 0, 1])
    t = SelectedTemplate(None, np.eye(3) * 40)
    fx = np.eye(3)[perm] * 40
    s = transitive_similarity(fx, t, np.eye(3) * 40).data
    np.testing.assert_allclose(s, np.eye(3)[perm], atol=1e-9)


@given(arrays(np.float64, (4, 3), elements=st.floats(-30, 30)),
       arrays(np.float64, (5, 3), elements=st.floats(-30, 30)),
       arrays(np.float64, (6, 3), elements=st.floats(-30, 30)))
def test_transitive_rows_are_stochastic(fx, emb, fy):
    s = transitive_similarity(fx, SelectedTemplate(None, emb), fy).data
    assert (s >= 0).all()
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-6)


def test_transitive_loss_minimum_is_entropy(rng):
    s_xy = rng.normal(size=(5, 5))
    target = softmax_rows(Tensor(s_xy)).data
    entropy = -(target * np.log(target)).sum(axis=1).mean()
    assert float(transitive_loss(target, Tensor(s_xy)).data) == pytest.approx(entropy, abs=1e-12)


def test_transitive_loss_gradient_routing(rng):
    t = rng.random((4, 4)) + 0.1
    target = Parameter(t / t.sum(axis=1, keepdims=True))
    s_xy = Parameter(rng.normal(size=(4, 4)))
    transitive_loss(target, s_xy).backward()
    assert target.grad is None and s_xy.grad is not None
    assert finite_diff_check(lambda s: transitive_loss(target.data, s), s_xy) < 1e-5
    with pytest.raises(ContractError):
        transitive_loss(np.ones((4, 4)), s_xy)
