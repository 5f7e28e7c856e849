"""Finite-difference check of every registered differentiable op.

Each registry entry builds a small f64 instance from a seed and returns
``(scalar_fn, inputs)`` for :func:`finite_diff_check`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Parameter, cosine_similarity, finite_diff_check
from .encoder import PointEncoder
from .geometry import chamfer_distance
from .pipeline.config import TrainConfig
from .pipeline.data import ShapePair
from .pipeline.model import CorrespondenceModel, construction_loss, total_loss
from .template_assist import (
    CorrelationFusion,
    direct_similarity,
    mix_pool,
    transitive_loss,
    transitive_similarity,
)
from .template_gen import SpaceAligner, Template, align_loss, cross_construct, template_construction_loss

TOLERANCE = 1e-4
STEP = 1e-5
REGISTRY = {}
OPTIONS = {}


def register(name, max_coords=None, freeze_detached=False):
    """Add a builder ``rng -> (scalar_fn, inputs)``.

    ``max_coords`` caps the numerically checked coordinates per input tensor
    (drawn at random per seed) for the larger composite entries.
    """
    def deco(fn):
        if name in REGISTRY:
            raise ValueError(f"duplicate gradcheck entry {name!r}")
        REGISTRY[name] = fn
        OPTIONS[name] = {"max_coords": max_coords, "freeze_detached": freeze_detached}
        return fn
    return deco


def _p(rng, *shape, scale=1.0):
    return Parameter(rng.normal(0.0, scale, size=shape))


def _cloud(rng, n):
    return rng.normal(size=(n, 3))


def _stochastic(rng, n, m):
    t = rng.random((n, m)) + 0.1
    return t / t.sum(axis=1, keepdims=True)


@register("add")
def _add(rng):
    a, b = _p(rng, 3, 4), _p(rng, 1, 4)
    w = rng.normal(size=(3, 4))
    return lambda a, b: ((a + b) * w).sum(), [a, b]


@register("sub")
def _sub(rng):
    a, b = _p(rng, 3, 4), _p(rng, 4)
    w = rng.normal(size=(3, 4))
    return lambda a, b: ((a - b) * w).sum(), [a, b]


@register("mul")
def _mul(rng):
    a, b = _p(rng, 3, 4), _p(rng, 3, 1)
    return lambda a, b: (a * b).sum(), [a, b]


@register("div")
def _div(rng):
    a = _p(rng, 3, 4)
    b = Parameter(rng.uniform(0.5, 2.0, size=(3, 4)))
    return lambda a, b: (a / b).sum(), [a, b]


@register("pow")
def _pow(rng):
    a = Parameter(rng.uniform(0.5, 2.0, size=(5,)))
    return lambda a: (a ** 3).sum() + (a ** 0.5).sum(), [a]


@register("exp_log_sqrt")
def _elementwise(rng):
    a = Parameter(rng.uniform(0.5, 2.0, size=(4, 3)))
    return lambda a: (a.exp() * 0.1).sum() + a.log().sum() + a.sqrt().sum(), [a]


@register("relu")
def _relu(rng):
    a = Parameter(rng.normal(size=(4, 5)) + np.sign(rng.normal(size=(4, 5))) * 0.1)
    w = rng.normal(size=(4, 5))
    return lambda a: (a.relu() * w).sum(), [a]


@register("matmul")
def _matmul(rng):
    a, b = _p(rng, 3, 4), _p(rng, 4, 2)
    w = rng.normal(size=(3, 2))
    return lambda a, b: ((a @ b) * w).sum(), [a, b]


@register("transpose_reshape")
def _shape_ops(rng):
    a = _p(rng, 3, 4)
    w = rng.normal(size=(4, 3))
    return lambda a: (a.T * w).sum() + (a.reshape(2, 6) * w.reshape(2, 6)).sum(), [a]


@register("sum_mean")
def _reductions(rng):
    a = _p(rng, 3, 4)
    w = rng.normal(size=4)
    return lambda a: (a.sum(axis=0) * w).sum() + (a.mean(axis=1) ** 2).sum(), [a]


@register("max")
def _max(rng):
    a = _p(rng, 5, 4)
    w = rng.normal(size=4)
    return lambda a: (a.max(axis=0) * w).sum() + a.max(), [a]


@register("index_gather")
def _index(rng):
    a = _p(rng, 5, 3)
    idx = rng.integers(0, 5, size=(4, 2))
    w = rng.normal(size=(4, 2, 3))
    return lambda a: (a[idx] * w).sum(), [a]


@register("take_along_rows")
def _take(rng):
    a = _p(rng, 4, 6)
    idx = np.argsort(rng.random((4, 6)), axis=1)[:, :3]
    w = rng.normal(size=(4, 3))
    return lambda a: (dc.take_along_rows(a, idx) * w).sum(), [a]


@register("concat_stack")
def _concat(rng):
    a, b = _p(rng, 2, 3), _p(rng, 4, 3)
    w = rng.normal(size=(6, 3))
    return lambda a, b: (dc.concat([a, b]) * w).sum() + (dc.stack([a[0], b[1]]) ** 2).sum(), [a, b]


@register("softmax_rows")
def _softmax(rng):
    a = _p(rng, 4, 5)
    w = rng.normal(size=(4, 5))
    return lambda a: (dc.softmax_rows(a) * w).sum(), [a]


@register("log_softmax_rows")
def _log_softmax(rng):
    a = _p(rng, 4, 5)
    w = rng.normal(size=(4, 5))
    return lambda a: (dc.log_softmax_rows(a) * w).sum(), [a]


@register("smooth_l1")
def _smooth_l1(rng):
    # keep |e| away from the beta=1 kink
    e = rng.uniform(0.1, 0.8, size=(4, 3)) * np.where(rng.random((4, 3)) < 0.5, 1, 3)
    e *= np.sign(rng.normal(size=(4, 3)))
    t = rng.normal(size=(4, 3))
    pred, target = Parameter(t + e), Parameter(t)
    return lambda p, q: dc.smooth_l1(p, q), [pred, target]


@register("cross_entropy_rows")
def _ce(rng):
    logits = _p(rng, 4, 5)
    target = _stochastic(rng, 4, 5)
    return lambda z: dc.cross_entropy_rows(target, z), [logits]


@register("gumbel_softmax")
def _gumbel(rng):
    logits = _p(rng, 4)
    w = rng.normal(size=4)
    seed = int(rng.integers(1 << 30))
    return (lambda z: (dc.gumbel_softmax(z, 0.7, rng=np.random.default_rng(seed)) * w).sum(),
            [logits])


@register("cosine_similarity")
def _cos(rng):
    a, b = _p(rng, 6), _p(rng, 6)
    return lambda a, b: cosine_similarity(a, b), [a, b]


@register("attention_block", max_coords=24)
def _attention(rng):
    block = dc.AttentionBlock(6, rng)
    q, kv = _p(rng, 4, 6), _p(rng, 5, 6)
    w = rng.normal(size=(4, 6))
    return lambda *_: (block(q, kv) * w).sum(), [q, kv] + block.parameters()


@register("chamfer_distance")
def _chamfer(rng):
    x, y = Parameter(_cloud(rng, 6)), Parameter(_cloud(rng, 5))
    return lambda x, y: chamfer_distance(x, y), [x, y]


@register("encode", max_coords=12)
def _encode(rng):
    enc = PointEncoder(8, 2, rng, k=4)
    pts = _cloud(rng, 8)
    w = rng.normal(size=(8, 8))
    return lambda *_: (enc(pts) * w).sum(), enc.parameters()


@register("mix_pool")
def _mix_pool(rng):
    f = _p(rng, 6, 4)
    w = rng.normal(size=4)
    return lambda f: (mix_pool(f) * w).sum(), [f]


@register("space_aligner", max_coords=12)
def _aligner(rng):
    al = SpaceAligner(8, rng)
    f = _p(rng, 6, 8)
    w = rng.normal(size=(6, 3))
    return lambda *_: (al(f) * w).sum(), [f] + al.parameters()


@register("align_loss", max_coords=12)
def _align(rng):
    al = SpaceAligner(8, rng)
    # odd row count: an all-L1 column cannot sum its signs to an exact zero
    f = _p(rng, 5, 8)
    pos = Parameter(_cloud(rng, 5) * 3)
    return lambda *_: align_loss(pos, f, al), [f, pos] + al.parameters()


@register("cross_construct")
def _cross(rng):
    t = Template(_cloud(rng, 5), rng.normal(size=(5, 8)))
    f = _p(rng, 6, 8)
    w = rng.normal(size=(6, 3))
    return lambda *_: (cross_construct(f, t, 3) * w).sum(), [f, t.positions, t.embeddings]


@register("template_construction_loss")
def _tc(rng):
    t = Template(_cloud(rng, 5), rng.normal(size=(5, 8)))
    fx, fy = _p(rng, 6, 8), _p(rng, 6, 8)
    return lambda *_: template_construction_loss(t, fx, fy, 3), [t.positions, t.embeddings]


@register("correlation_fusion", max_coords=24)
def _fusion(rng):
    fus = CorrelationFusion(8, 5, rng)
    f, emb = _p(rng, 6, 8), _p(rng, 5, 8)
    w = rng.normal(size=(6, 8))
    return lambda *_: (fus(f, emb) * w).sum(), [f, emb] + fus.parameters()


@register("direct_similarity")
def _direct(rng):
    fx, fy = _p(rng, 5, 4), _p(rng, 6, 4)
    w = rng.normal(size=(5, 6))
    return lambda a, b: (direct_similarity(a, b) * w).sum(), [fx, fy]


@register("transitive_similarity")
def _transitive(rng):
    fx, fy = _p(rng, 5, 4), _p(rng, 6, 4)
    t = Template(_cloud(rng, 3), rng.normal(size=(3, 4)))
    w = rng.normal(size=(5, 6))
    return (lambda *_: (transitive_similarity(fx, t, fy) * w).sum(), [fx, fy, t.embeddings])


@register("transitive_loss")
def _trans_loss(rng):
    s_xy = _p(rng, 5, 5)
    target = _stochastic(rng, 5, 5)
    return lambda s: transitive_loss(target, s), [s_xy]


@register("construction_loss")
def _constr(rng):
    x, y = _cloud(rng, 6), _cloud(rng, 6)
    fx, fy = _p(rng, 6, 8), _p(rng, 6, 8)
    return lambda a, b: construction_loss(x, y, a, b, 3), [fx, fy]


def micro_model(seed):
    """Micro instance of the full objective: N = N_T = 6, d = 8, K = 2.

    Selection uses soft Gumbel weights with fixed noise so the objective is a
    smooth function of every parameter. Stop-gradient operands are frozen
    during the numeric sweep (see ``finite_diff_check``).
    """
    rng = np.random.default_rng(seed)
    cfg = TrainConfig(n_points=6, feature_dim=8, n_layers=1, n_templates=2, k=3, encoder_k=3,
                      hard_selection=False, template_init_std=0.5, seed=seed)
    pair = ShapePair(rng.normal(size=(6, 3)), rng.normal(size=(6, 3)))
    model = CorrespondenceModel(cfg, [rng.normal(size=(6, 3)), rng.normal(size=(6, 3))], rng)
    return model, pair


@register("total_loss", max_coords=2, freeze_detached=True)
def _total(rng):
    seed = int(rng.integers(1 << 30))
    model, pair = micro_model(seed)

    def fn(*_):
        loss, _ = total_loss(model, pair, rng=np.random.default_rng(seed), mode="train")
        return loss
    return fn, model.parameters()


@dataclass
class Row:
    name: str
    max_rel_err: float
    seeds: int

    @property
    def passed(self):
        return self.max_rel_err < TOLERANCE


def run_suite(seed=0, n_seeds=20, names=None, corrupt=()):
    """Check each registered op over ``n_seeds`` seeds; one :class:`Row` per op.

    ``corrupt`` names ops whose analytic gradient is deliberately perturbed.
    """
    rows = []
    for name in names or REGISTRY:
        worst = 0.0
        hook = (lambda gs: [g * 1.01 + 1e-3 for g in gs]) if name in corrupt else None
        for s in range(n_seeds):
            rng = np.random.default_rng([seed, s, len(name)])
            fn, inputs = REGISTRY[name](rng)
            opts = OPTIONS[name]
            coords = None
            if opts["max_coords"] is not None:
                coords = {i: rng.choice(t.data.size, min(t.data.size, opts["max_coords"]),
                                        replace=False)
                          for i, t in enumerate(inputs)}
            worst = max(worst, finite_diff_check(fn, inputs, h=STEP, coords=coords,
                                                 grad_hook=hook,
                                                 freeze_detached=opts["freeze_detached"]))
        rows.append(Row(name, worst, n_seeds))
    return rows


def format_table(rows):
    width = max(len(r.name) for r in rows)
    lines = [f"{'op':<{width}}  {'max rel err':>12}  result"]
    for r in rows:
        lines.append(f"{r.name:<{width}}  {r.max_rel_err:12.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
