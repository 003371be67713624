"""The forecasting network: patch tokens, text prototypes, top-K retrieval,
the two-mixer manifold enhancer, a small pre-norm transformer backbone, and a
flatten-linear forecast head.

The backbone follows the GPT-2 block layout (x += MHA(LN(x)); x += FFN(LN(x)))
with full bidirectional attention: inputs are patch tokens, not autoregressive
text, so no causal mask is applied.  Each of {LN, MHA, FFN, token embedding}
can independently be initialized pretrained-or-random and kept frozen-or-
trainable, which is the ablation grid the CLI exposes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grad import Param
from .layers import (FeatureMixer, FeedForward, FlattenLinear, LayerNorm, Linear,
                     MultiHeadAttention, PrototypeCombine, SelectionAttention,
                     TokenMixer, dropout_mask)
from .linalg import Mat, ShapeMismatchError
from .rng import Rng, derive_stream

INIT_STD = 0.02
COMPONENTS = ("ln", "mha", "ffn", "emb")


@dataclass(frozen=True)
class ComponentSetting:
    init: str = "random"      # "pretrained" | "random"
    mode: str = "frozen"      # "frozen" | "trainable"

    def __post_init__(self):
        if self.init not in ("pretrained", "random"):
            raise ValueError(f"init must be pretrained|random, got {self.init!r}")
        if self.mode not in ("frozen", "trainable"):
            raise ValueError(f"mode must be frozen|trainable, got {self.mode!r}")


def default_components() -> dict[str, ComponentSetting]:
    """LayerNorm fine-tuned, everything else frozen (the usual adaptation recipe)."""
    return {
        "ln": ComponentSetting("random", "trainable"),
        "mha": ComponentSetting("random", "frozen"),
        "ffn": ComponentSetting("random", "frozen"),
        "emb": ComponentSetting("random", "frozen"),
    }


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    layers: int = 3
    heads: int = 4
    vocab: int = 256
    n_prototypes: int = 100
    top_k: int = 4
    compressed_tokens: int = 8
    dropout: float = 0.1
    ffn_mult: int = 4
    horizon: int = 96
    enhancer: bool = True
    patch_size: int = 16
    stride: int = 8
    n_patches: int = 11
    components: dict[str, ComponentSetting] = field(default_factory=default_components)

    def __post_init__(self):
        if self.d % self.heads != 0:
            raise ValueError(f"d={self.d} must be divisible by heads={self.heads}")
        if self.top_k < 1 or self.top_k > self.n_prototypes:
            raise ValueError(
                f"top_k={self.top_k} outside [1, n_prototypes={self.n_prototypes}]"
            )
        if self.compressed_tokens < 1:
            raise ValueError("compressed_tokens must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        missing = [c for c in COMPONENTS if c not in self.components]
        if missing:
            raise ValueError(f"missing component settings: {missing}")

    @property
    def seq_len(self) -> int:
        """Token count entering the backbone."""
        return self.compressed_tokens if self.enhancer else self.n_patches

    @property
    def stack_len(self) -> int:
        """Rows of the time-text concat feeding the token mixer."""
        return (self.top_k + 1) * self.n_patches


@dataclass
class TokenBatch:
    tokens: np.ndarray  # (N, d) or (B, N, d)
    origin: str         # "time" | "language" | "fused"

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.origin not in ("time", "language", "fused"):
            raise ValueError(f"unknown origin tag {self.origin!r}")


@dataclass
class TraceEntry:
    time: np.ndarray | None = None
    language: np.ndarray | None = None


@dataclass
class LayerTrace:
    """Pre-backbone entry plus one entry per block, per modality."""
    entries: list[TraceEntry]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class PrototypeBank:
    vocab_embedding: Mat    # (V, d)
    combination: Mat        # (n_prototypes, V)


# ---------------------------------------------------------------------------
# parameter construction
# ---------------------------------------------------------------------------

def backbone_tensor_names(layers: int) -> list[str]:
    names = ["wte"]
    for i in range(layers):
        names += [
            f"h.{i}.ln_1.g", f"h.{i}.ln_1.b",
            f"h.{i}.attn.w_qkv", f"h.{i}.attn.b_qkv",
            f"h.{i}.attn.w_o", f"h.{i}.attn.b_o",
            f"h.{i}.ln_2.g", f"h.{i}.ln_2.b",
            f"h.{i}.ffn.w_in", f"h.{i}.ffn.b_in",
            f"h.{i}.ffn.w_out", f"h.{i}.ffn.b_out",
        ]
    names += ["ln_f.g", "ln_f.b"]
    return names


def component_of(name: str) -> str | None:
    """Which init/freeze component a backbone tensor belongs to."""
    if name == "wte":
        return "emb"
    if ".attn." in name:
        return "mha"
    if ".ffn." in name:
        return "ffn"
    if ".ln_1." in name or ".ln_2." in name or name.startswith("ln_f."):
        return "ln"
    return None


def _tensor_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, f = config.d, config.ffn_mult * config.d
    shapes: dict[str, tuple[int, ...]] = {}
    shapes["patch.w_e"] = (config.patch_size, d)
    shapes["patch.b_e"] = (d,)
    if config.enhancer:
        shapes["proto.w_c"] = (config.n_prototypes, config.vocab)
        shapes["select.w_q"] = (d, d)
        shapes["select.w_k"] = (d, d)
        shapes["mix.m_c"] = (config.stack_len, config.compressed_tokens)
        shapes["mix.m_f"] = (d, d)
    shapes["wte"] = (config.vocab, d)
    for i in range(config.layers):
        shapes[f"h.{i}.ln_1.g"] = (d,)
        shapes[f"h.{i}.ln_1.b"] = (d,)
        shapes[f"h.{i}.attn.w_qkv"] = (d, 3 * d)
        shapes[f"h.{i}.attn.b_qkv"] = (3 * d,)
        shapes[f"h.{i}.attn.w_o"] = (d, d)
        shapes[f"h.{i}.attn.b_o"] = (d,)
        shapes[f"h.{i}.ln_2.g"] = (d,)
        shapes[f"h.{i}.ln_2.b"] = (d,)
        shapes[f"h.{i}.ffn.w_in"] = (d, f)
        shapes[f"h.{i}.ffn.b_in"] = (f,)
        shapes[f"h.{i}.ffn.w_out"] = (f, d)
        shapes[f"h.{i}.ffn.b_out"] = (d,)
    shapes["ln_f.g"] = (d,)
    shapes["ln_f.b"] = (d,)
    shapes["head.w_h"] = (config.seq_len * d, config.horizon)
    shapes["head.b_h"] = (config.horizon,)
    return shapes


def init_model(config: ModelConfig, rng: Rng,
               weight_file: dict[str, np.ndarray] | None = None) -> dict[str, Param]:
    """Build the parameter set: random init everywhere, then overwrite any
    pretrained component from the weight tensors and apply the freeze matrix.

    Each tensor draws from its own name-derived stream, so a given tensor's
    random init depends only on (seed, stream, name): shared tensors are
    bit-identical across ablation cells and across enhancer on/off variants.
    """
    pretrained = [c for c in COMPONENTS if config.components[c].init == "pretrained"]
    if pretrained and weight_file is None:
        raise ValueError(
            f"components {pretrained} are pretrained but no weight file was given"
        )
    params: dict[str, Param] = {}
    for name, shape in _tensor_shapes(config).items():
        if name.endswith(".g"):
            value = np.ones(shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
        else:
            tensor_rng = Rng(rng.seed, derive_stream(rng.stream, name))
            value = INIT_STD * tensor_rng.normal_matrix(shape)
        params[name] = Param(name=name, value=value)

    for name, p in params.items():
        comp = component_of(name)
        if comp is None:
            continue
        setting = config.components[comp]
        if setting.init == "pretrained":
            if name not in weight_file:
                raise KeyError(f"weight file missing tensor {name!r}")
            loaded = np.asarray(weight_file[name], dtype=np.float64)
            if loaded.shape != p.value.shape:
                raise ShapeMismatchError(
                    f"tensor {name!r}: file shape {loaded.shape} != expected {p.value.shape}"
                )
            p.value = loaded.copy()
            p.grad = np.zeros_like(p.value)
        if setting.mode == "frozen":
            p.trainable = False
    return params


def param_values(params: dict[str, Param], mapping: dict[str, str]) -> dict[str, np.ndarray]:
    """Pick layer-local views {local_name: value} out of the global param set."""
    return {local: params[name].value for local, name in mapping.items()}


# ---------------------------------------------------------------------------
# public single-batch operations
# ---------------------------------------------------------------------------

def embed_patches(patches, w_e: Mat, b_e: np.ndarray) -> TokenBatch:
    """Project raw patches into the shared embedding space."""
    mat = patches.patches if hasattr(patches, "patches") else np.asarray(patches, float)
    if mat.shape[-1] != w_e.shape[0]:
        raise ShapeMismatchError(
            f"patch size {mat.shape[-1]} does not match projection rows {w_e.shape[0]}"
        )
    return TokenBatch(tokens=mat @ w_e + b_e, origin="time")


def make_prototypes(bank: PrototypeBank) -> Mat:
    """Prototype rows as linear combinations of the whole vocabulary table."""
    w_c = np.asarray(bank.combination, dtype=np.float64)
    e = np.asarray(bank.vocab_embedding, dtype=np.float64)
    if w_c.shape[1] != e.shape[0]:
        raise ShapeMismatchError(
            f"combination cols {w_c.shape[1]} != vocab rows {e.shape[0]}"
        )
    return w_c @ e


def selection_weights(tokens: np.ndarray, prototypes: Mat, w_q: Mat, w_k: Mat) -> np.ndarray:
    """Softmax attention weights of every token over every prototype."""
    layer = SelectionAttention()
    weights, _ = layer.forward({"tokens": tokens, "prototypes": prototypes},
                               {"w_q": w_q, "w_k": w_k})
    return weights


def topk_select(tokens, prototypes: Mat, w_q: Mat, w_k: Mat,
                k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices (K, N) and weights (K, N) of the K best prototypes per token,
    ranked by descending attention weight with ties broken by lower index."""
    toks = tokens.tokens if isinstance(tokens, TokenBatch) else np.asarray(tokens, float)
    if k > prototypes.shape[0]:
        raise ValueError(f"top_k={k} exceeds prototype count {prototypes.shape[0]}")
    weights = selection_weights(toks, prototypes, w_q, w_k)
    idx, vals = _rank_topk(weights, k)
    return idx.T.copy(), vals.T.copy()


def _rank_topk(weights: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row top-k of the trailing axis; stable sort gives index tie-break."""
    order = np.argsort(-weights, axis=-1, kind="stable")[..., :k]
    vals = np.take_along_axis(weights, order, axis=-1)
    return order, vals


def build_stack(tokens: np.ndarray, selected: np.ndarray) -> np.ndarray:
    """Interleave each token with its K prototypes: (..., N, d) + (..., N, K, d)
    -> (..., N*(K+1), d) ordered [t_i, p_i1, ..., p_iK]."""
    stacked = np.concatenate([tokens[..., :, None, :], selected], axis=-2)
    return stacked.reshape(*stacked.shape[:-3], -1, stacked.shape[-1])


def enhance(tokens: TokenBatch, selected: np.ndarray, m_c: Mat, m_f: Mat,
            activation: bool = True) -> TokenBatch:
    """Fuse each time token with its prototype stack and compress to n tokens.

    `selected` is the (K, N, d) prototype stack ranked by descending weight.
    Token mixing contracts the (K+1)*N rows down to n, GELU sits between the
    two mixes (skippable for linear-path tests), then feature mixing maps the
    width.  Dropout is a training-pipeline concern and is not applied here.
    """
    sel = np.asarray(selected, dtype=np.float64)
    stack = build_stack(tokens.tokens, np.moveaxis(sel, 0, 1))
    if stack.shape[0] != m_c.shape[0]:
        raise ShapeMismatchError(
            f"stack rows {stack.shape[0]} != token-mixer rows {m_c.shape[0]}"
        )
    mixed, _ = TokenMixer(activation=activation).forward({"stack": stack}, {"m_c": m_c})
    fused, _ = FeatureMixer().forward({"x": mixed}, {"m_f": m_f})
    return TokenBatch(tokens=fused, origin="fused")


def forecast_head(hidden: Mat, w_h: Mat, b_h: np.ndarray) -> np.ndarray:
    """Flatten the (n, d) grid row-major and affine-map to the horizon."""
    hidden = np.asarray(hidden, dtype=np.float64)
    flat = hidden.reshape(*hidden.shape[:-2], -1)
    if flat.shape[-1] != w_h.shape[0]:
        raise ShapeMismatchError(
            f"flattened width {flat.shape[-1]} != head rows {w_h.shape[0]}"
        )
    return flat @ w_h + b_h


# ---------------------------------------------------------------------------
# backbone
# ---------------------------------------------------------------------------

def _block_mapping(i: int) -> dict[str, dict[str, str]]:
    return {
        "ln_1": {"g": f"h.{i}.ln_1.g", "b": f"h.{i}.ln_1.b"},
        "attn": {"w_qkv": f"h.{i}.attn.w_qkv", "b_qkv": f"h.{i}.attn.b_qkv",
                 "w_o": f"h.{i}.attn.w_o", "b_o": f"h.{i}.attn.b_o"},
        "ln_2": {"g": f"h.{i}.ln_2.g", "b": f"h.{i}.ln_2.b"},
        "ffn": {"w_in": f"h.{i}.ffn.w_in", "b_in": f"h.{i}.ffn.b_in",
                "w_out": f"h.{i}.ffn.w_out", "b_out": f"h.{i}.ffn.b_out"},
    }


def run_backbone(x: np.ndarray, params: dict[str, Param], config: ModelConfig,
                 keep_caches: bool = False):
    """Pre-norm blocks over (..., N, d) tokens; returns the pre-final-norm
    activations, the per-block trace (input + each block output), and caches.
    """
    ln = LayerNorm()
    attn = MultiHeadAttention(config.heads)
    ffn = FeedForward()
    trace = [x.copy()]
    caches = []
    for i in range(config.layers):
        names = _block_mapping(i)
        n1, c_ln1 = ln.forward({"x": x}, param_values(params, names["ln_1"]))
        a, c_att = attn.forward({"x": n1}, param_values(params, names["attn"]))
        x = x + a
        n2, c_ln2 = ln.forward({"x": x}, param_values(params, names["ln_2"]))
        f, c_ffn = ffn.forward({"x": n2}, param_values(params, names["ffn"]))
        x = x + f
        if not np.isfinite(x).all():
            raise RuntimeError(f"non-finite activations after backbone layer {i}")
        trace.append(x.copy())
        if keep_caches:
            caches.append((c_ln1, c_att, c_ln2, c_ffn))
    return x, trace, caches


def backbone_forward(tokens: TokenBatch, params: dict[str, Param],
                     config: ModelConfig) -> tuple[TokenBatch, LayerTrace]:
    """Forward the backbone blocks with trace capture.

    The final layer norm is applied by the forecasting pipeline before the
    head, not here, so zeroed output projections make this an exact identity.
    """
    x, raw_trace, _ = run_backbone(tokens.tokens, params, config)
    slot = "language" if tokens.origin == "language" else "time"
    entries = [TraceEntry(**{slot: t}) for t in raw_trace]
    return TokenBatch(tokens=x, origin=tokens.origin), LayerTrace(entries=entries)


# ---------------------------------------------------------------------------
# end-to-end pipeline
# ---------------------------------------------------------------------------

_EMBED_MAP = {"w": "patch.w_e", "b": "patch.b_e"}
_PROTO_MAP = {"w_c": "proto.w_c", "e": "wte"}
_HEAD_MAP = {"w": "head.w_h", "b": "head.b_h"}


class Forecaster:
    """Batched differentiable pipeline from normalized windows to forecasts.

    forward() keeps every layer cache; backward() walks them in reverse and
    accumulates gradients into the shared Param set (frozen params included --
    the optimizer is what enforces the freeze matrix).
    """

    def __init__(self, config: ModelConfig, params: dict[str, Param]):
        self.config = config
        self.params = params
        self.embed = Linear()
        self.proto = PrototypeCombine()
        self.token_mixer = TokenMixer(activation=True)
        self.feature_mixer = FeatureMixer()
        self.ln = LayerNorm()
        self.head = FlattenLinear()

    def _patch_batch(self, X: np.ndarray) -> np.ndarray:
        """(B, L) windows -> (B, N, P) patches with replicate end-padding."""
        cfg = self.config
        L = X.shape[-1]
        starts = np.arange(cfg.n_patches) * cfg.stride
        pad_to = int(starts[-1]) + cfg.patch_size
        if not starts[-1] < L <= pad_to:
            raise ShapeMismatchError(
                f"window length {L} inconsistent with patch grid "
                f"(n={cfg.n_patches}, P={cfg.patch_size}, S={cfg.stride})"
            )
        if pad_to > L:
            X = np.concatenate([X, np.repeat(X[:, -1:], pad_to - L, axis=1)], axis=1)
        return X[:, starts[:, None] + np.arange(cfg.patch_size)]

    def forward(self, X: np.ndarray, train: bool = False, rng: Rng | None = None,
                keep_caches: bool = True):
        """Returns (yhat (B, H), cache).  Dropout only when train=True."""
        cfg = self.config
        p = cfg.dropout if train else 0.0
        if train and p > 0.0 and rng is None:
            raise ValueError("training forward with dropout needs an rng")
        patches = self._patch_batch(np.asarray(X, dtype=np.float64))
        T, c_embed = self.embed.forward({"x": patches},
                                        param_values(self.params, _EMBED_MAP))
        mask_embed = dropout_mask(rng, T.shape, p) if p > 0.0 else None
        if mask_embed is not None:
            T = T * mask_embed

        cache: dict = {"c_embed": c_embed, "mask_embed": mask_embed}
        if cfg.enhancer:
            protos, c_proto = self.proto.forward({}, param_values(self.params, _PROTO_MAP))
            weights = selection_weights(T, protos,
                                        self.params["select.w_q"].value,
                                        self.params["select.w_k"].value)
            idx, _ = _rank_topk(weights, cfg.top_k)       # (B, N, K), no grad path
            stack = build_stack(T, protos[idx])
            mixed, c_tm = self.token_mixer.forward({"stack": stack},
                                                   {"m_c": self.params["mix.m_c"].value})
            mask_tm = dropout_mask(rng, mixed.shape, p) if p > 0.0 else None
            if mask_tm is not None:
                mixed = mixed * mask_tm
            fused, c_fm = self.feature_mixer.forward({"x": mixed},
                                                     {"m_f": self.params["mix.m_f"].value})
            mask_fm = dropout_mask(rng, fused.shape, p) if p > 0.0 else None
            if mask_fm is not None:
                fused = fused * mask_fm
            h0 = fused
            cache.update(c_proto=c_proto, idx=idx, c_tm=c_tm, c_fm=c_fm,
                         mask_tm=mask_tm, mask_fm=mask_fm,
                         n_protos=protos.shape[0])
        else:
            h0 = T

        out, trace, block_caches = run_backbone(h0, self.params, cfg,
                                                keep_caches=keep_caches)
        final, c_lnf = self.ln.forward(
            {"x": out}, param_values(self.params, {"g": "ln_f.g", "b": "ln_f.b"}))
        yhat, c_head = self.head.forward({"x": final},
                                         param_values(self.params, _HEAD_MAP))
        cache.update(block_caches=block_caches, c_lnf=c_lnf, c_head=c_head,
                     trace=trace)
        return yhat, cache

    def backward(self, dy: np.ndarray, cache: dict) -> None:
        """Accumulate d(loss)/d(param) into param.grad for upstream dy."""
        cfg = self.config
        d_final, g_head = self.head.backward(dy, cache["c_head"])
        self._acc(_HEAD_MAP, g_head)
        dx, g_lnf = self.ln.backward(d_final["x"], cache["c_lnf"])
        self._acc({"g": "ln_f.g", "b": "ln_f.b"}, g_lnf)
        dx = dx["x"]

        attn = MultiHeadAttention(cfg.heads)
        ffn = FeedForward()
        for i in reversed(range(cfg.layers)):
            names = _block_mapping(i)
            c_ln1, c_att, c_ln2, c_ffn = cache["block_caches"][i]
            d_f, g_ffn = ffn.backward(dx, c_ffn)
            self._acc(names["ffn"], g_ffn)
            d_n2, g_ln2 = self.ln.backward(d_f["x"], c_ln2)
            self._acc(names["ln_2"], g_ln2)
            dx = dx + d_n2["x"]
            d_a, g_att = attn.backward(dx, c_att)
            self._acc(names["attn"], g_att)
            d_n1, g_ln1 = self.ln.backward(d_a["x"], c_ln1)
            self._acc(names["ln_1"], g_ln1)
            dx = dx + d_n1["x"]

        if cfg.enhancer:
            if cache["mask_fm"] is not None:
                dx = dx * cache["mask_fm"]
            d_mixed, g_fm = self.feature_mixer.backward(dx, cache["c_fm"])
            self._acc({"m_f": "mix.m_f"}, g_fm)
            d_mixed = d_mixed["x"]
            if cache["mask_tm"] is not None:
                d_mixed = d_mixed * cache["mask_tm"]
            d_stack, g_tm = self.token_mixer.backward(d_mixed, cache["c_tm"])
            self._acc({"m_c": "mix.m_c"}, g_tm)
            d_stack = d_stack["stack"]
            B = d_stack.shape[0]
            grid = d_stack.reshape(B, cfg.n_patches, cfg.top_k + 1, cfg.d)
            dT = grid[:, :, 0, :].copy()
            d_protos = np.zeros((cache["n_protos"], cfg.d))
            np.add.at(d_protos, cache["idx"], grid[:, :, 1:, :])
            _, g_proto = self.proto.backward(d_protos, cache["c_proto"])
            self._acc(_PROTO_MAP, g_proto)
            # selection is indices-only retrieval: no gradient reaches w_q/w_k
        else:
            dT = dx
        if cache["mask_embed"] is not None:
            dT = dT * cache["mask_embed"]
        _, g_embed = self.embed.backward(dT, cache["c_embed"])
        self._acc(_EMBED_MAP, g_embed)

    def _acc(self, mapping: dict[str, str], grads: dict[str, np.ndarray]) -> None:
        for local, name in mapping.items():
            self.params[name].grad += grads[local]

    # ------------------------------------------------------------------
    # diagnostics support
    # ------------------------------------------------------------------

    def patch_tokens(self, X: np.ndarray) -> np.ndarray:
        """Embedded patch tokens (B, N, d), eval mode."""
        patches = self._patch_batch(np.asarray(X, dtype=np.float64))
        T, _ = self.embed.forward({"x": patches}, param_values(self.params, _EMBED_MAP))
        return T

    def fused_tokens(self, X: np.ndarray) -> np.ndarray:
        """Enhancer outputs (B, n, d), eval mode."""
        cfg = self.config
        if not cfg.enhancer:
            raise ValueError("fused tokens require the enhancer")
        T = self.patch_tokens(X)
        protos, _ = self.proto.forward({}, param_values(self.params, _PROTO_MAP))
        weights = selection_weights(T, protos, self.params["select.w_q"].value,
                                    self.params["select.w_k"].value)
        idx, _ = _rank_topk(weights, cfg.top_k)
        stack = build_stack(T, protos[idx])
        mixed, _ = self.token_mixer.forward({"stack": stack},
                                            {"m_c": self.params["mix.m_c"].value})
        fused, _ = self.feature_mixer.forward({"x": mixed},
                                              {"m_f": self.params["mix.m_f"].value})
        return fused

    def tokens_at_stage(self, X: np.ndarray, stage: str) -> np.ndarray:
        """Pooled tokens at a pipeline stage: 'raw' patch tokens, 'fused'
        enhancer outputs, or 'language' prototype rows."""
        cfg = self.config
        if stage == "language":
            return self.language_reference(count=cfg.n_prototypes if cfg.enhancer
                                           else cfg.vocab)
        if stage == "raw":
            return self.patch_tokens(X).reshape(-1, cfg.d)
        if stage != "fused":
            raise ValueError(f"unknown stage {stage!r}")
        return self.fused_tokens(X).reshape(-1, cfg.d)

    def language_reference(self, count: int = 64, seed: int = 7,
                           source: str = "auto") -> np.ndarray:
        """Seeded sample of language-side vectors.

        `source` picks the pool: "prototypes" for prototype-bank rows (only
        meaningful once the bank has been trained), "vocab" for raw vocabulary
        embeddings, "auto" for prototypes when the enhancer is present and
        vocab otherwise.
        """
        cfg = self.config
        if source == "auto":
            source = "prototypes" if cfg.enhancer else "vocab"
        if source == "prototypes":
            if not cfg.enhancer:
                raise ValueError("prototype reference requires the enhancer")
            pool, _ = self.proto.forward({}, param_values(self.params, _PROTO_MAP))
        elif source == "vocab":
            pool = self.params["wte"].value
        else:
            raise ValueError(f"unknown language reference source {source!r}")
        count = min(count, pool.shape[0])
        rows = Rng(seed).choice(pool.shape[0], count)
        return pool[np.sort(rows)].copy()

    def paired_trace(self, X: np.ndarray, language: np.ndarray) -> LayerTrace:
        """Propagate time/fused tokens and the language reference through the
        backbone in one forward pass and pair them per layer.

        The language batch is appended to every window's token sequence, so
        attention couples the modalities exactly as the backbone would mix
        any other tokens; each trace entry splits at the sequence boundary
        and pools over windows.
        """
        cfg = self.config
        h0 = self.fused_tokens(X) if cfg.enhancer else self.patch_tokens(X)
        language = np.asarray(language, dtype=np.float64)
        joint = np.concatenate(
            [h0, np.repeat(language[None], h0.shape[0], axis=0)], axis=1)
        _, raw_trace, _ = run_backbone(joint, self.params, cfg)
        boundary = cfg.seq_len
        entries = [TraceEntry(time=t[:, :boundary].reshape(-1, cfg.d),
                              language=t[:, boundary:].reshape(-1, cfg.d))
                   for t in raw_trace]
        return LayerTrace(entries=entries)
