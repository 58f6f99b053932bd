"""Numerical core of the tagger.

Parameter containers, forward passes (GRU/LSTM steps, bidirectional
encoding, linear emissions), losses (softmax cross-entropy, linear-chain
CRF negative log-likelihood), decoders (argmax, Viterbi), exact analytic
gradients via backpropagation through time, and the Adam optimizer.

Everything is plain float64 numpy: deterministic given (params, input), no
framework runtime. Embeddings are frozen inputs; gradients stop at the
encoder input.

Parameter blocks (dict keys, shapes for hidden size h, input dim d,
g = 3 gates for GRU / 4 for LSTM):

    fwd_w_ih  (g*h, d)    bwd_w_ih  (g*h, d)    w_out  (2h, 3)
    fwd_w_hh  (g*h, h)    bwd_w_hh  (g*h, h)    b_out  (3,)
    fwd_b     (g*h,)      bwd_b     (g*h,)

and, for the CRF decoder, crf_trans (3, 3) with crf_start / crf_stop (3,).
GRU gate order along the stacked axis is update, reset, candidate; LSTM
order is input, forget, cell, output.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

RNN_KINDS = ("GRU", "LSTM")
DECODER_KINDS = ("LINEAR", "CRF")
N_LABELS = 3

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"CCKP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TaggerConfig:
    """Hyperparameters of one tagger: architecture plus training knobs."""

    input_dim: int
    hidden_size: int = 256
    rnn_kind: str = "GRU"
    decoder_kind: str = "LINEAR"
    n_labels: int = N_LABELS
    learning_rate: float = 0.001
    batch_size: int = 16
    max_epochs: int = 12
    min_epochs: int = 10
    patience: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.hidden_size < 1:
            raise ValueError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.rnn_kind not in RNN_KINDS:
            raise ValueError(f"rnn_kind must be one of {RNN_KINDS}, got {self.rnn_kind!r}")
        if self.decoder_kind not in DECODER_KINDS:
            raise ValueError(
                f"decoder_kind must be one of {DECODER_KINDS}, got {self.decoder_kind!r}"
            )
        if self.n_labels != N_LABELS:
            raise ValueError(f"n_labels is fixed at {N_LABELS} (C/E/O)")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.min_epochs > self.max_epochs:
            raise ValueError(
                f"min_epochs {self.min_epochs} > max_epochs {self.max_epochs}"
            )
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")

    @property
    def n_gates(self) -> int:
        return 3 if self.rnn_kind == "GRU" else 4


class CrfTransitions(NamedTuple):
    """Label-transition scores: matrix[i, j] scores label i followed by j."""

    matrix: np.ndarray  # (3, 3)
    start: np.ndarray  # (3,)
    stop: np.ndarray  # (3,)


def crf_transitions(params: dict) -> CrfTransitions:
    return CrfTransitions(params["crf_trans"], params["crf_start"], params["crf_stop"])


def init_params(config: TaggerConfig, seed: int) -> dict[str, np.ndarray]:
    """Deterministic init: weights ~ U(-k, k) with k = 1/sqrt(fan_in),
    biases and CRF transitions zero. Draw order is fixed and documented by
    the code below; same (config, seed) gives bit-identical params."""
    rng = np.random.default_rng(seed)
    g, h, d = config.n_gates, config.hidden_size, config.input_dim
    k_ih = 1.0 / np.sqrt(d)
    k_hh = 1.0 / np.sqrt(h)
    k_out = 1.0 / np.sqrt(2 * h)
    params = {}
    for direction in ("fwd", "bwd"):
        params[f"{direction}_w_ih"] = rng.uniform(-k_ih, k_ih, size=(g * h, d))
        params[f"{direction}_w_hh"] = rng.uniform(-k_hh, k_hh, size=(g * h, h))
        params[f"{direction}_b"] = np.zeros(g * h)
    params["w_out"] = rng.uniform(-k_out, k_out, size=(2 * h, N_LABELS))
    params["b_out"] = np.zeros(N_LABELS)
    if config.decoder_kind == "CRF":
        params["crf_trans"] = np.zeros((N_LABELS, N_LABELS))
        params["crf_start"] = np.zeros(N_LABELS)
        params["crf_stop"] = np.zeros(N_LABELS)
    return params


def zero_gradients(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(block) for name, block in params.items()}


def direction_params(params: dict, direction: str) -> dict[str, np.ndarray]:
    """Slice one direction's RNN blocks out of the full parameter dict."""
    return {
        "w_ih": params[f"{direction}_w_ih"],
        "w_hh": params[f"{direction}_w_hh"],
        "b": params[f"{direction}_b"],
    }


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_step(params_dir: dict, x_t: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """One GRU step: h_t = (1-z) * h_prev + z * c with

        z = sigmoid(W_z x + U_z h_prev + b_z)        (update gate)
        r = sigmoid(W_r x + U_r h_prev + b_r)        (reset gate)
        c = tanh(W_c x + U_c (r * h_prev) + b_c)     (candidate)
    """
    w_ih, w_hh, b = params_dir["w_ih"], params_dir["w_hh"], params_dir["b"]
    h = w_hh.shape[1]
    if x_t.shape[-1] != w_ih.shape[1] or h_prev.shape[-1] != h:
        raise ValueError(
            f"gru_step: got x dim {x_t.shape[-1]} / h dim {h_prev.shape[-1]}, "
            f"expected {w_ih.shape[1]} / {h}"
        )
    gx = x_t @ w_ih.T + b
    gh = h_prev @ w_hh[: 2 * h].T
    z = sigmoid(gx[..., :h] + gh[..., :h])
    r = sigmoid(gx[..., h : 2 * h] + gh[..., h:])
    c = np.tanh(gx[..., 2 * h :] + (r * h_prev) @ w_hh[2 * h :].T)
    return (1.0 - z) * h_prev + z * c


def lstm_step(params_dir: dict, x_t: np.ndarray, state: tuple) -> tuple:
    """One LSTM step returning (h_t, c_t):

        i, f, o = sigmoid gates, g = tanh(W_g x + U_g h_prev + b_g)
        c_t = f * c_prev + i * g
        h_t = o * tanh(c_t)
    """
    h_prev, c_prev = state
    w_ih, w_hh, b = params_dir["w_ih"], params_dir["w_hh"], params_dir["b"]
    h = w_hh.shape[1]
    if x_t.shape[-1] != w_ih.shape[1] or h_prev.shape[-1] != h:
        raise ValueError(
            f"lstm_step: got x dim {x_t.shape[-1]} / h dim {h_prev.shape[-1]}, "
            f"expected {w_ih.shape[1]} / {h}"
        )
    a = x_t @ w_ih.T + h_prev @ w_hh.T + b
    i = sigmoid(a[..., :h])
    f = sigmoid(a[..., h : 2 * h])
    g = np.tanh(a[..., 2 * h : 3 * h])
    o = sigmoid(a[..., 3 * h :])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def _gru_forward(dirp: dict, xs: np.ndarray):
    """Run a GRU over xs (T, d); returns states (T, h) and the backward cache."""
    w_ih, w_hh, b = dirp["w_ih"], dirp["w_hh"], dirp["b"]
    t_len, h = xs.shape[0], w_hh.shape[1]
    gx_all = xs @ w_ih.T + b  # (T, 3h), input contributions precomputed
    zs = np.empty((t_len, h))
    rs = np.empty((t_len, h))
    cs = np.empty((t_len, h))
    hs = np.empty((t_len, h))
    h_prev = np.zeros(h)
    for t in range(t_len):
        gh = h_prev @ w_hh[: 2 * h].T
        z = sigmoid(gx_all[t, :h] + gh[:h])
        r = sigmoid(gx_all[t, h : 2 * h] + gh[h:])
        c = np.tanh(gx_all[t, 2 * h :] + (r * h_prev) @ w_hh[2 * h :].T)
        h_prev = (1.0 - z) * h_prev + z * c
        zs[t], rs[t], cs[t], hs[t] = z, r, c, h_prev
    cache = (xs, zs, rs, cs, hs)
    return hs, cache


def _gru_backward(dirp: dict, cache, d_hs: np.ndarray, grads: dict, prefix: str):
    """BPTT for one GRU direction; accumulates into grads[prefix + ...]."""
    w_hh = dirp["w_hh"]
    xs, zs, rs, cs, hs = cache
    t_len, h = d_hs.shape
    da_all = np.empty((t_len, 3 * h))  # per-step pre-activation grads [z, r, c]
    h_prevs = np.vstack([np.zeros((1, h)), hs[:-1]])
    d_carry = np.zeros(h)
    for t in range(t_len - 1, -1, -1):
        dh = d_hs[t] + d_carry
        z, r, c, h_prev = zs[t], rs[t], cs[t], h_prevs[t]
        da_c = dh * z * (1.0 - c * c)
        da_z = dh * (c - h_prev) * z * (1.0 - z)
        d_rh = da_c @ w_hh[2 * h :]
        da_r = d_rh * h_prev * r * (1.0 - r)
        d_carry = (
            dh * (1.0 - z)
            + d_rh * r
            + da_z @ w_hh[:h]
            + da_r @ w_hh[h : 2 * h]
        )
        da_all[t, :h] = da_z
        da_all[t, h : 2 * h] = da_r
        da_all[t, 2 * h :] = da_c
    grads[prefix + "_w_ih"] += da_all.T @ xs
    grads[prefix + "_b"] += da_all.sum(axis=0)
    grads[prefix + "_w_hh"][: 2 * h] += da_all[:, : 2 * h].T @ h_prevs
    grads[prefix + "_w_hh"][2 * h :] += da_all[:, 2 * h :].T @ (rs * h_prevs)


def _lstm_forward(dirp: dict, xs: np.ndarray):
    w_ih, w_hh, b = dirp["w_ih"], dirp["w_hh"], dirp["b"]
    t_len, h = xs.shape[0], w_hh.shape[1]
    a_x = xs @ w_ih.T + b  # (T, 4h)
    gates = np.empty((t_len, 4 * h))  # i, f, g, o after nonlinearity
    cells = np.empty((t_len, h))
    hs = np.empty((t_len, h))
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for t in range(t_len):
        a = a_x[t] + h_prev @ w_hh.T
        i = sigmoid(a[:h])
        f = sigmoid(a[h : 2 * h])
        g = np.tanh(a[2 * h : 3 * h])
        o = sigmoid(a[3 * h :])
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        gates[t, :h], gates[t, h : 2 * h] = i, f
        gates[t, 2 * h : 3 * h], gates[t, 3 * h :] = g, o
        cells[t], hs[t] = c_prev, h_prev
    cache = (xs, gates, cells, hs)
    return hs, cache


def _lstm_backward(dirp: dict, cache, d_hs: np.ndarray, grads: dict, prefix: str):
    w_hh = dirp["w_hh"]
    xs, gates, cells, hs = cache
    t_len, h = d_hs.shape
    da_all = np.empty((t_len, 4 * h))
    h_prevs = np.vstack([np.zeros((1, h)), hs[:-1]])
    c_prevs = np.vstack([np.zeros((1, h)), cells[:-1]])
    dh_carry = np.zeros(h)
    dc_carry = np.zeros(h)
    for t in range(t_len - 1, -1, -1):
        dh = d_hs[t] + dh_carry
        i, f = gates[t, :h], gates[t, h : 2 * h]
        g, o = gates[t, 2 * h : 3 * h], gates[t, 3 * h :]
        tc = np.tanh(cells[t])
        dc = dc_carry + dh * o * (1.0 - tc * tc)
        da_all[t, :h] = dc * g * i * (1.0 - i)
        da_all[t, h : 2 * h] = dc * c_prevs[t] * f * (1.0 - f)
        da_all[t, 2 * h : 3 * h] = dc * i * (1.0 - g * g)
        da_all[t, 3 * h :] = dh * tc * o * (1.0 - o)
        dc_carry = dc * f
        dh_carry = da_all[t] @ w_hh
    grads[prefix + "_w_ih"] += da_all.T @ xs
    grads[prefix + "_w_hh"] += da_all.T @ h_prevs
    grads[prefix + "_b"] += da_all.sum(axis=0)


_FORWARD = {"GRU": _gru_forward, "LSTM": _lstm_forward}
_BACKWARD = {"GRU": _gru_backward, "LSTM": _lstm_backward}


def _bidir_forward(params: dict, config: TaggerConfig, xs: np.ndarray):
    forward = _FORWARD[config.rnn_kind]
    h_fwd, cache_fwd = forward(direction_params(params, "fwd"), xs)
    h_bwd_rev, cache_bwd = forward(direction_params(params, "bwd"), xs[::-1])
    ctx = np.concatenate([h_fwd, h_bwd_rev[::-1]], axis=1)
    return ctx, (cache_fwd, cache_bwd)


def _bidir_backward(params: dict, config: TaggerConfig, caches, d_ctx: np.ndarray, grads: dict):
    h = config.hidden_size
    backward = _BACKWARD[config.rnn_kind]
    cache_fwd, cache_bwd = caches
    backward(direction_params(params, "fwd"), cache_fwd, d_ctx[:, :h], grads, "fwd")
    backward(direction_params(params, "bwd"), cache_bwd, d_ctx[:, h:][::-1], grads, "bwd")


def bidir_encode(params: dict, config: TaggerConfig, embedding_matrix: np.ndarray) -> np.ndarray:
    """Encode a (T, d) matrix into (T, 2h) context rows.

    Row t concatenates the forward state after reading tokens 0..t with the
    backward state after reading tokens T-1..t; initial states are zero.
    """
    xs = np.asarray(embedding_matrix, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] < 1:
        raise ValueError(f"bidir_encode: need a (T, d) matrix with T >= 1, got {xs.shape}")
    if xs.shape[1] != config.input_dim:
        raise ValueError(
            f"bidir_encode: input dim {xs.shape[1]} != config.input_dim {config.input_dim}"
        )
    ctx, _ = _bidir_forward(params, config, xs)
    return ctx


def emissions(params: dict, context: np.ndarray) -> np.ndarray:
    """Per-token label scores: row t = context_t @ w_out + b_out, shape (T, 3)."""
    w_out = params["w_out"]
    if context.shape[-1] != w_out.shape[0]:
        raise ValueError(
            f"emissions: context width {context.shape[-1]} != w_out rows {w_out.shape[0]}"
        )
    return context @ w_out + params["b_out"]


def xent_loss(emission_scores: np.ndarray, gold_labels: np.ndarray, mask: np.ndarray | None = None):
    """Mean token-level softmax cross-entropy over unmasked positions.

    Returns (loss, gradient w.r.t. the emission scores); the gradient is
    (softmax - onehot) / n_unmasked, zero at masked positions.
    """
    em = np.asarray(emission_scores, dtype=np.float64)
    gold = np.asarray(gold_labels)
    flat_em = em.reshape(-1, em.shape[-1])
    flat_gold = gold.reshape(-1)
    if mask is None:
        flat_mask = np.ones(flat_gold.shape[0], dtype=bool)
    else:
        flat_mask = np.asarray(mask, dtype=bool).reshape(-1)
    n = int(flat_mask.sum())
    if n == 0:
        raise ValueError("xent_loss: all positions are masked")
    shifted = flat_em - flat_em.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    idx = np.arange(flat_gold.shape[0])
    loss = -log_probs[idx[flat_mask], flat_gold[flat_mask]].sum() / n
    grad = np.exp(log_probs)
    grad[idx, flat_gold] -= 1.0
    grad[~flat_mask] = 0.0
    grad /= n
    return float(loss), grad.reshape(em.shape)


def _mask_length(emission_scores: np.ndarray, mask: np.ndarray | None) -> int:
    if mask is None:
        return emission_scores.shape[0]
    m = np.asarray(mask, dtype=bool)
    t_len = int(m.sum())
    if t_len and not m[:t_len].all():
        raise ValueError("CRF mask must be a contiguous prefix")
    return t_len


def crf_nll(emission_scores: np.ndarray, transitions: CrfTransitions, gold_labels, mask=None):
    """Sequence negative log-likelihood of a linear-chain CRF.

    loss = logZ - score(gold) with score summing emissions, pairwise
    transition scores, and start/stop terms; logZ comes from the forward
    recursion in log space. Returns (loss, d_emissions, CrfTransitions
    gradients). Gradients are exact marginals minus gold indicators.
    """
    t_len = _mask_length(emission_scores, mask)
    if t_len == 0:
        raise ValueError("crf_nll: empty sequence")
    em = np.asarray(emission_scores, dtype=np.float64)[:t_len]
    gold = np.asarray(gold_labels)[:t_len]
    a_mat, start, stop = transitions

    alpha = np.empty((t_len, N_LABELS))
    alpha[0] = start + em[0]
    for t in range(1, t_len):
        alpha[t] = em[t] + logsumexp(alpha[t - 1][:, None] + a_mat, axis=0)
    log_z = float(logsumexp(alpha[t_len - 1] + stop))

    beta = np.empty((t_len, N_LABELS))
    beta[t_len - 1] = stop
    for t in range(t_len - 2, -1, -1):
        beta[t] = logsumexp(a_mat + (em[t + 1] + beta[t + 1])[None, :], axis=1)

    marginals = np.exp(alpha + beta - log_z)  # (T, 3): P(y_t = j)

    gold_score = float(start[gold[0]] + em[np.arange(t_len), gold].sum() + stop[gold[-1]])
    if t_len > 1:
        gold_score += float(a_mat[gold[:-1], gold[1:]].sum())
    loss = log_z - gold_score

    d_em = np.zeros_like(np.asarray(emission_scores, dtype=np.float64))
    d_em[:t_len] = marginals
    d_em[np.arange(t_len), gold] -= 1.0

    d_mat = np.zeros((N_LABELS, N_LABELS))
    for t in range(1, t_len):
        d_mat += np.exp(
            alpha[t - 1][:, None] + a_mat + (em[t] + beta[t])[None, :] - log_z
        )
        d_mat[gold[t - 1], gold[t]] -= 1.0
    d_start = marginals[0].copy()
    d_start[gold[0]] -= 1.0
    d_stop = marginals[t_len - 1].copy()
    d_stop[gold[-1]] -= 1.0
    return float(loss), d_em, CrfTransitions(d_mat, d_start, d_stop)


def crf_viterbi(emission_scores: np.ndarray, transitions: CrfTransitions, mask=None) -> np.ndarray:
    """Best-scoring label path; ties break toward the lower label index."""
    t_len = _mask_length(emission_scores, mask)
    if t_len == 0:
        raise ValueError("crf_viterbi: empty sequence")
    em = np.asarray(emission_scores, dtype=np.float64)[:t_len]
    a_mat, start, stop = transitions
    delta = start + em[0]
    backptr = np.empty((t_len, N_LABELS), dtype=np.int64)
    for t in range(1, t_len):
        scores = delta[:, None] + a_mat  # (from, to)
        backptr[t] = scores.argmax(axis=0)  # argmax picks the lowest index on ties
        delta = em[t] + scores.max(axis=0)
    path = np.empty(t_len, dtype=np.int64)
    path[t_len - 1] = int((delta + stop).argmax())
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = backptr[t, path[t]]
    return path


def crf_path_score(emission_scores: np.ndarray, transitions: CrfTransitions, path) -> float:
    """Unnormalized score of one label path (shared by tests and decoding)."""
    em = np.asarray(emission_scores, dtype=np.float64)
    path = np.asarray(path)
    a_mat, start, stop = transitions
    score = start[path[0]] + em[np.arange(len(path)), path].sum() + stop[path[-1]]
    if len(path) > 1:
        score += a_mat[path[:-1], path[1:]].sum()
    return float(score)


def loss_and_gradients(params: dict, config: TaggerConfig, xs_batch: np.ndarray,
                       labels_batch: np.ndarray, mask: np.ndarray):
    """Loss and exact gradients for a padded batch.

    xs_batch (B, T, d) float embeddings, labels_batch (B, T) int label
    indices, mask (B, T) bool with a contiguous True prefix per row. The
    loss is averaged per token across the whole batch so batch composition
    does not rescale gradients; sentences are reduced in index order.
    """
    xs_batch = np.asarray(xs_batch, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    lengths = mask.sum(axis=1)
    n_tokens = int(lengths.sum())
    if n_tokens == 0:
        raise ValueError("loss_and_gradients: empty batch")
    batch_size, t_max = mask.shape
    grads = zero_gradients(params)

    ctxs, caches = [], []
    em_pad = np.zeros((batch_size, t_max, N_LABELS))
    for i in range(batch_size):
        t_len = int(lengths[i])
        ctx, cache = _bidir_forward(params, config, xs_batch[i, :t_len])
        ctxs.append(ctx)
        caches.append(cache)
        em_pad[i, :t_len] = emissions(params, ctx)

    if config.decoder_kind == "LINEAR":
        loss, d_em_pad = xent_loss(em_pad, labels_batch, mask)
    else:
        trans = crf_transitions(params)
        total = 0.0
        d_em_pad = np.zeros_like(em_pad)
        for i in range(batch_size):
            t_len = int(lengths[i])
            nll, d_em, d_trans = crf_nll(em_pad[i, :t_len], trans, labels_batch[i, :t_len])
            total += nll
            d_em_pad[i, :t_len] = d_em
            grads["crf_trans"] += d_trans.matrix
            grads["crf_start"] += d_trans.start
            grads["crf_stop"] += d_trans.stop
        loss = total / n_tokens
        d_em_pad /= n_tokens
        grads["crf_trans"] /= n_tokens
        grads["crf_start"] /= n_tokens
        grads["crf_stop"] /= n_tokens

    w_out = params["w_out"]
    for i in range(batch_size):
        t_len = int(lengths[i])
        d_em = d_em_pad[i, :t_len]
        grads["w_out"] += ctxs[i].T @ d_em
        grads["b_out"] += d_em.sum(axis=0)
        _bidir_backward(params, config, caches[i], d_em @ w_out.T, grads)
    return float(loss), grads


def predict_labels(params: dict, config: TaggerConfig, embedding_matrix: np.ndarray) -> np.ndarray:
    """Decode one sentence to label indices: per-token argmax for the linear
    decoder (ties to the lower index), Viterbi for the CRF."""
    ctx = bidir_encode(params, config, embedding_matrix)
    em = emissions(params, ctx)
    if config.decoder_kind == "LINEAR":
        return em.argmax(axis=1)
    return crf_viterbi(em, crf_transitions(params))


@dataclass
class AdamState:
    """Adam accumulators; beta1/beta2/eps are fixed module constants."""

    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(t=0, m=zero_gradients(params), v=zero_gradients(params))


def adam_step(params: dict, grads: dict, state: AdamState, learning_rate: float):
    """One bias-corrected Adam update; returns (new params, new state)."""
    t = state.t + 1
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    new_params, new_m, new_v = {}, {}, {}
    for name in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in parameter block {name!r}")
        m = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * (g * g)
        new_params[name] = params[name] - learning_rate * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(t=t, m=new_m, v=new_v)


def config_to_dict(config: TaggerConfig) -> dict:
    return asdict(config)


def config_from_dict(data: dict) -> TaggerConfig:
    return TaggerConfig(**data)


def save_checkpoint(path, config: TaggerConfig, params: dict[str, np.ndarray]) -> None:
    """Versioned binary checkpoint: config echo plus shape-tagged f64 blocks.

    Layout: magic "CCKP", u32 version, u32 config-JSON length, config JSON
    (sorted keys), u32 block count, then per block (sorted by name):
    u16 name length, name UTF-8, u8 ndim, u32 per axis, f64 LE values.
    """
    config_bytes = json.dumps(config_to_dict(config), sort_keys=True).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(config_bytes)),
        config_bytes,
        struct.pack("<I", len(params)),
    ]
    for name in sorted(params):
        block = np.ascontiguousarray(params[name], dtype="<f8")
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", block.ndim))
        parts.append(struct.pack(f"<{block.ndim}I", *block.shape))
        parts.append(block.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> tuple[TaggerConfig, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {data[:4]!r}")
    version, config_len = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 12
    config = config_from_dict(json.loads(data[offset : offset + config_len]))
    offset += config_len
    (n_blocks,) = struct.unpack_from("<I", data, offset)
    offset += 4
    params = {}
    for _ in range(n_blocks):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", data, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        block = np.frombuffer(data, dtype="<f8", count=size, offset=offset).reshape(shape)
        params[name] = block.copy()
        offset += 8 * size
    if offset != len(data):
        raise ValueError("trailing bytes in checkpoint")
    return config, params
