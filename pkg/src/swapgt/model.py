"""The SwapGT network and its losses.

Each view's sequences go through a projection, ``L`` pre-LayerNorm
transformer blocks and first-token extraction. The original sequence's
representation is concatenated with the mean of the augmented ones, the two
views are blended with ``alpha``, and a two-layer MLP produces logits. The
training objective is cross-entropy plus ``lam`` times the center-alignment
loss summed over both views.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .engine import ParamStore, Tensor

# parameter-name prefixes
SHARED = "enc"
PER_VIEW = {"attribute": "enc_attribute", "topology": "enc_topology"}


def _glorot(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _init_encoder(params, prefix, rng, d_in, d0, ffn_dim, layers, heads):
    dk = d0 // heads
    params.add(f"{prefix}.proj.w", _glorot(rng, d_in, d0))
    params.add(f"{prefix}.proj.b", np.zeros(d0))
    for layer in range(layers):
        p = f"{prefix}.layer{layer}"
        params.add(f"{p}.ln1.gamma", np.ones(d0))
        params.add(f"{p}.ln1.beta", np.zeros(d0))
        for h in range(heads):
            for mat in ("wq", "wk", "wv"):
                params.add(f"{p}.head{h}.{mat}", _glorot(rng, d0, dk))
        params.add(f"{p}.wo", _glorot(rng, d0, d0))
        params.add(f"{p}.ln2.gamma", np.ones(d0))
        params.add(f"{p}.ln2.beta", np.zeros(d0))
        params.add(f"{p}.w1", _glorot(rng, d0, ffn_dim))
        params.add(f"{p}.w2", _glorot(rng, ffn_dim, d0))


def init_params(d_in, n_classes, hidden_dim=256, ffn_dim=512, layers=1, heads=8,
                share_encoder=True, predictor_hidden=None, seed=0) -> ParamStore:
    """Glorot-uniform weights, zero biases, LayerNorm scale 1 / shift 0."""
    if hidden_dim % heads:
        raise ValueError("hidden_dim must be divisible by heads")
    predictor_hidden = predictor_hidden or hidden_dim
    rng = np.random.default_rng(seed)
    params = ParamStore(
        meta=dict(d_in=d_in, n_classes=n_classes, hidden_dim=hidden_dim, ffn_dim=ffn_dim,
                  layers=layers, heads=heads, share_encoder=share_encoder,
                  predictor_hidden=predictor_hidden)
    )
    prefixes = [SHARED] if share_encoder else [PER_VIEW["attribute"], PER_VIEW["topology"]]
    for prefix in prefixes:
        _init_encoder(params, prefix, rng, d_in, hidden_dim, ffn_dim, layers, heads)
    params.add("pred.w1", _glorot(rng, 2 * hidden_dim, predictor_hidden))
    params.add("pred.b1", np.zeros(predictor_hidden))
    params.add("pred.w2", _glorot(rng, predictor_hidden, n_classes))
    params.add("pred.b2", np.zeros(n_classes))
    return params


def encoder_prefix(params, view):
    return SHARED if params.meta["share_encoder"] else PER_VIEW[view]


# ---------------------------------------------------------------------------
# encoder

@dataclass
class ViewRepresentations:
    """First-token outputs, shape ``(nodes, 1 + s, d0)``."""

    view: str
    Z: Tensor

    @property
    def s(self) -> int:
        return self.Z.shape[1] - 1


def attention(H, params, prefix, heads, query_first_only=False):
    """Multi-head self-attention over axis 1 of ``H`` (B, T, d0); no biases."""
    d0 = H.shape[-1]
    dk = d0 // heads
    Hq = H[:, :1, :] if query_first_only else H
    outs = []
    for h in range(heads):
        q = Hq @ params[f"{prefix}.head{h}.wq"]
        k = H @ params[f"{prefix}.head{h}.wk"]
        v = H @ params[f"{prefix}.head{h}.wv"]
        scores = E.scale(E.matmul(q, E.transpose(k)), 1.0 / math.sqrt(dk))
        outs.append(E.matmul(E.row_softmax(scores), v))
    cat = outs[0] if heads == 1 else E.concat(outs)
    return cat @ params[f"{prefix}.wo"]


def transformer_block(H, params, prefix, heads, dropout=0.0, rng=None, training=False, last=False):
    """Pre-LN block. With ``last`` only position 0 is carried forward."""
    ln1 = E.layer_norm(H, params[f"{prefix}.ln1.gamma"], params[f"{prefix}.ln1.beta"])
    att = attention(ln1, params, prefix, heads, query_first_only=last)
    H = (H[:, :1, :] if last else H) + att
    ln2 = E.layer_norm(H, params[f"{prefix}.ln2.gamma"], params[f"{prefix}.ln2.beta"])
    hidden = E.gelu(ln2 @ params[f"{prefix}.w1"])
    hidden = E.dropout(hidden, dropout, rng, training)
    return H + hidden @ params[f"{prefix}.w2"]


def encode_view(batch, params: ParamStore, mode="eval", nodes=None, dropout=0.0, rng=None,
                projected=None) -> ViewRepresentations:
    """Encode every sequence of the selected nodes and keep position 0.

    Projection is linear, so it is applied to ``X`` once and token rows are
    gathered afterwards; this equals projecting the materialized token
    tensor. ``projected`` lets callers reuse that product across views.
    """
    training = mode == "train"
    meta = params.meta
    prefix = encoder_prefix(params, batch.view)
    if batch.X.shape[1] != params[f"{prefix}.proj.w"].shape[0]:
        raise ValueError(f"feature width {batch.X.shape[1]} does not match the projection input")
    ids = batch.ids if nodes is None else batch.ids[nodes]
    n_sel, S, T = ids.shape
    d0 = meta["hidden_dim"]

    if projected is None:
        projected = project(batch.X, params, prefix)
    H = E.reshape(E.take_rows(projected, ids.reshape(-1)), (n_sel * S, T, d0))
    H = E.dropout(H, dropout, rng, training)
    layers = meta["layers"]
    for layer in range(layers):
        H = transformer_block(H, params, f"{prefix}.layer{layer}", meta["heads"],
                              dropout, rng, training, last=layer == layers - 1)
    first = H[:, 0, :]
    return ViewRepresentations(batch.view, E.reshape(first, (n_sel, S, d0)))


def project(X, params, prefix):
    X = Tensor(np.asarray(X, dtype=np.float64))
    return X @ params[f"{prefix}.proj.w"] + params[f"{prefix}.proj.b"]


# ---------------------------------------------------------------------------
# readout, fusion, prediction

def readout(v: ViewRepresentations, allow_single=False) -> Tensor:
    """``row_0 || mean(rows 1..s)``; with ``allow_single`` a lone row fills both halves."""
    Z = v.Z
    if v.s == 0:
        if not allow_single:
            raise ValueError("readout needs at least one augmented sequence (s >= 1)")
        row0 = Z[:, 0, :]
        return E.concat([row0, row0])
    return E.concat([Z[:, 0, :], E.mean(Z[:, 1:, :], axis=1)])


def fuse(zA, zT, alpha: float) -> Tensor:
    zA, zT = E.as_tensor(zA), E.as_tensor(zT)
    if zA.shape != zT.shape:
        raise ValueError(f"fuse: width mismatch {zA.shape} vs {zT.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    return E.scale(zA, alpha) + E.scale(zT, 1.0 - alpha)


def predict(zF, params: ParamStore) -> Tensor:
    hidden = E.gelu(E.as_tensor(zF) @ params["pred.w1"] + params["pred.b1"])
    return hidden @ params["pred.w2"] + params["pred.b2"]


# ---------------------------------------------------------------------------
# losses

def cross_entropy(logits, labels, mask=None) -> Tensor:
    """Mean negative log-likelihood over the masked rows."""
    labels = np.asarray(labels)
    if mask is None:
        return E.softmax_cross_entropy(logits, labels)
    mask = np.asarray(mask)
    rows = np.flatnonzero(mask) if mask.dtype == bool else mask
    if rows.size == 0:
        raise ValueError("cross_entropy: empty mask")
    return E.softmax_cross_entropy(E.take_rows(logits, rows), labels[rows])


def center_alignment(v: ViewRepresentations) -> Tensor:
    """``1 - mean_j cos(row_j, centroid)``, averaged over nodes."""
    if v.s < 1:
        raise ValueError("center alignment needs s >= 1")
    Z = v.Z
    center = E.mean(Z, axis=1, keepdims=True)
    cos = E.sum(E.l2_normalize(Z) * E.l2_normalize(center), axis=-1)  # (nodes, 1+s)
    return E.scale(E.mean(cos), -1.0) + 1.0


@dataclass
class LossBreakdown:
    ce: float
    ca: float
    total: float
    lam: float
    objective: Tensor = field(repr=False, default=None)


def total_loss(logits, labels, mask, repA: ViewRepresentations, repT: ViewRepresentations, lam: float):
    """Cross-entropy on fused logits plus ``lam`` times both views' alignment losses.

    The alignment term is skipped (and reported as 0) for single-sequence
    inputs and for ``lam == 0``.
    """
    ce = cross_entropy(logits, labels, mask)
    if repA.s == 0 or lam == 0:
        return LossBreakdown(ce=ce.item(), ca=0.0, total=ce.item(), lam=lam, objective=ce)
    ca = center_alignment(repA) + center_alignment(repT)
    objective = ce + E.scale(ca, lam)
    return LossBreakdown(ce=ce.item(), ca=ca.item(), total=objective.item(), lam=lam, objective=objective)


def forward_full(batchA, batchT, params: ParamStore, alpha: float, lam: float, labels, mask=None,
                 mode="eval", nodes=None, dropout=0.0, rng=None):
    """encode -> readout -> fuse -> predict -> losses.

    ``nodes`` selects which nodes are forwarded (default all); ``labels`` and
    ``mask`` are indexed relative to that selection. Returns
    ``(logits, LossBreakdown)``; the breakdown is ``None`` if ``labels`` is.
    """
    kwargs = dict(mode=mode, nodes=nodes, dropout=dropout, rng=rng)
    if params.meta["share_encoder"]:
        proj = project(batchA.X, params, SHARED)
        kwargs["projected"] = proj
    repA = encode_view(batchA, params, **kwargs)
    repT = encode_view(batchT, params, **kwargs)
    single = repA.s == 0
    zF = fuse(readout(repA, allow_single=single), readout(repT, allow_single=single), alpha)
    logits = predict(zF, params)
    if labels is None:
        return logits, None
    return logits, total_loss(logits, labels, mask, repA, repT, lam)
