"""The full correspondence model, its losses, inference, and checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..diffcore import Module, Tensor, no_grad, one_hot
from ..encoder import PointEncoder
from ..geometry import chamfer_distance
from ..template_assist import (
    CorrelationFusion,
    direct_similarity,
    mix_templates,
    select_template,
    transitive_loss,
    transitive_similarity,
)
from ..template_gen import (
    SpaceAligner,
    align_loss,
    construct,
    init_bank,
    template_construction_loss,
)
from .config import TrainConfig

CHECKPOINT_FORMAT = "tacorr-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CorrespondenceModel(Module):
    """Encoder, template bank, space aligner and correlation fusion."""

    def __init__(self, config: TrainConfig, seed_clouds=None, rng=None):
        rng = np.random.default_rng(config.seed) if rng is None else rng
        if seed_clouds is None:
            seed_clouds = [np.zeros((config.n_points, 3))]
        d = config.feature_dim
        self.config = config
        self.encoder = PointEncoder(d, config.n_layers, rng, k=config.encoder_k,
                                    use_coords=config.encoder_coords)
        self.bank = init_bank(config.n_templates, config.n_points, d, seed_clouds, rng,
                              std=config.template_init_std)
        self.aligner = SpaceAligner(d, rng)
        self.fusion = CorrelationFusion(d, config.n_points, rng)


def construction_loss(x, y, fx, fy, k, mode="reference"):
    """Cross- plus self-construction chamfer terms between the two clouds.

    ``reference`` mode compares each construction with the cloud whose points
    it combines (the template-construction pattern); ``source`` mode compares
    the cross constructions with the querying cloud instead. Self
    construction excludes each point from its own neighbor set.
    """
    y_from_x, _, _ = construct(fx, fy, y, k)
    x_from_y, _, _ = construct(fy, fx, x, k)
    if mode == "reference":
        cross = chamfer_distance(y, y_from_x) + chamfer_distance(x, x_from_y)
    elif mode == "source":
        cross = chamfer_distance(x, y_from_x) + chamfer_distance(y, x_from_y)
    else:
        raise ValueError(f"unknown construction mode {mode!r}")
    x_self, _, _ = construct(fx, fx, x, k, exclude_self=True)
    y_self, _, _ = construct(fy, fy, y, k, exclude_self=True)
    return cross + chamfer_distance(x, x_self) + chamfer_distance(y, y_self)


@dataclass
class ForwardState:
    fx: Tensor
    fy: Tensor
    fused_x: Tensor
    fused_y: Tensor
    template: object = None
    template_index: int | None = None
    weights: Tensor | None = None


def forward_features(model, pair, mode="eval", rng=None):
    """Encode both clouds, select a template and fuse (as configured)."""
    cfg = model.config
    x, y = pair.source.positions, pair.target.positions
    fx, fy = model.encoder(x), model.encoder(y)
    state = ForwardState(fx, fy, fx, fy)
    if not cfg.use_templates:
        return state
    bank = model.bank
    if cfg.use_selector:
        idx, weights = select_template(bank, x, y, fx.detach(), fy.detach(), mode=mode, rng=rng,
                                       temperature=cfg.gumbel_temperature,
                                       hard=cfg.hard_selection)
    else:
        idx, weights = 0, Tensor(one_hot(0, len(bank)))
    template = mix_templates(bank, weights, idx)
    state.template, state.template_index, state.weights = template, idx, weights
    if cfg.use_fusion:
        state.fused_x = model.fusion(fx, template.embeddings)
        state.fused_y = model.fusion(fy, template.embeddings)
    return state


TERMS = ("trans", "align", "tc", "constr")


def total_loss(model, pair, rng=None, mode="train"):
    """Weighted sum of the four loss terms and a per-term breakdown (floats).

    Terms whose module is disabled or whose weight is zero are skipped
    entirely (not built into the graph) and reported as 0.
    """
    cfg = model.config
    lam = cfg.loss_weights
    st = forward_features(model, pair, mode=mode, rng=rng)
    x, y = pair.source.positions, pair.target.positions
    terms = {}
    tmpl = st.template
    if cfg.use_templates and cfg.use_trans and lam.trans > 0:
        with no_grad():
            s_xty = transitive_similarity(st.fused_x, tmpl, st.fused_y).detach()
        terms["trans"] = transitive_loss(s_xty, direct_similarity(st.fused_x, st.fused_y))
    if cfg.use_templates and lam.align > 0:
        a = (align_loss(x, st.fx.detach(), model.aligner)
             + align_loss(y, st.fy.detach(), model.aligner))
        if cfg.align_templates:
            a = a + align_loss(tmpl.positions, tmpl.embeddings, model.aligner)
        terms["align"] = a
    if cfg.use_templates and cfg.use_tc and lam.tc > 0:
        terms["tc"] = template_construction_loss(tmpl, st.fx.detach(), st.fy.detach(), cfg.k)
    if lam.constr > 0:
        terms["constr"] = construction_loss(x, y, st.fused_x, st.fused_y, cfg.k,
                                            cfg.construction)
    weights = {"trans": lam.trans, "align": lam.align, "tc": lam.tc, "constr": lam.constr}
    total = None
    for name, t in terms.items():
        part = t * weights[name]
        total = part if total is None else total + part
    if total is None:
        total = Tensor(0.0)
    breakdown = {name: float(terms[name].data) if name in terms else 0.0 for name in TERMS}
    breakdown["total"] = float(total.data)
    return total, breakdown


def similarity(model, pair, transitive=False):
    with no_grad():
        st = forward_features(model, pair, mode="eval")
        if transitive:
            if st.template is None:
                raise ValueError("transitive inference needs a model with templates enabled")
            return transitive_similarity(st.fused_x, st.template, st.fused_y).data
        return direct_similarity(st.fused_x, st.fused_y).data


def infer(model, pair):
    """Per source point, the target index with the highest direct similarity."""
    return np.argmax(similarity(model, pair), axis=1)


def infer_transitive(model, pair):
    """Argmax over the template-routed similarity (roughly 4x the direct cost)."""
    return np.argmax(similarity(model, pair, transitive=True), axis=1)


def save_checkpoint(model, path):
    meta = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
            "config": model.config.to_dict()}
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path, expected: TrainConfig | None = None):
    """Rebuild a model from ``path``; a dim mismatch with ``expected`` is an error."""
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z:
            raise CheckpointError(f"{path}: not a checkpoint (no metadata)")
        meta = json.loads(str(z["__meta__"]))
        state = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unknown format {meta.get('format')!r}")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {meta.get('version')!r}")
    cfg = TrainConfig(**meta["config"])
    if expected is not None:
        want, have = expected.dims(), cfg.dims()
        diff = [f"{k}: checkpoint {have[k]} vs config {want[k]}" for k in want if want[k] != have[k]]
        if diff:
            raise CheckpointError(f"{path}: dimension mismatch ({'; '.join(diff)})")
    model = CorrespondenceModel(cfg)
    model.load_state_dict(state)
    return model
