"""The trajectory predictor: encoders, social grid, recurrent decoder.

Forward pass over one batch:

1. A shared temporal encoder summarizes each neighbor history; summaries
   land in an ego-centered occupancy grid ``[B, C, rows, cols]`` (empty
   cells stay zero).
2. Two grid convolutions and a max-pool compress the grid into a flat
   social feature; a second encoder plus a dense remap summarizes the ego
   history to the same width.
3. Their concatenation seeds the LSTM decoder state through a two-layer
   MLP; the decoder unrolls ``horizon_steps`` times feeding on zeros (or on
   its own output when configured autoregressive), and one shared dense
   head maps each hidden state to an (x, y) offset.

All outputs are meters relative to the ego position at the anchor frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .atcn import AtcnEncoder
from .configio import ModelConfig, config_hash, default_model_config
from .ingest.windows import TrajectorySample
from .numcore import (
    ConfigurationError,
    LstmWeights,
    Tensor,
    concat,
    conv2d,
    dense,
    lstm_cell,
    max_pool2d,
    scatter_grid,
    stack,
)
from .numcore.functional import activation_fn

__all__ = ["Batch", "collate", "DeepTrack", "SocialGeometry", "social_geometry"]


@dataclass
class Batch:
    """Collated arrays for one forward pass; neighbor rows are flattened
    across the batch and indexed back by ``nbr_batch``."""
    ego: np.ndarray        # [B, 2, H]
    future: np.ndarray     # [B, F, 2]
    nbr_tracks: np.ndarray  # [K, 2, H] in-grid neighbors only
    nbr_batch: np.ndarray  # [K] owning sample index
    nbr_cells: np.ndarray  # [K, 2] grid (row, col)

    @property
    def size(self) -> int:
        return self.ego.shape[0]


def collate(samples: Sequence[TrajectorySample], config: ModelConfig) -> Batch:
    """Stack samples into batch arrays, dropping out-of-grid neighbors."""
    if not samples:
        raise ConfigurationError("cannot collate an empty batch")
    dtype = np.float64 if config.dtype == "float64" else np.float32
    h, f = config.history_steps, config.horizon_steps
    ego = np.zeros((len(samples), 2, h), dtype=dtype)
    future = np.zeros((len(samples), f, 2), dtype=dtype)
    tracks: List[np.ndarray] = []
    owners: List[int] = []
    cells: List[Tuple[int, int]] = []
    for i, s in enumerate(samples):
        if s.ego_history.shape != (h, 2) or s.future.shape != (f, 2):
            raise ConfigurationError(
                f"sample {s.sample_id} has shapes {s.ego_history.shape}/{s.future.shape}, "
                f"expected ({h}, 2)/({f}, 2)")
        ego[i] = s.ego_history.T
        future[i] = s.future
        for n in s.neighbors:
            if n.cell is None:
                continue
            assert 0 <= n.cell[0] < config.grid_rows \
                and 0 <= n.cell[1] < config.grid_cols, \
                f"sample {s.sample_id}: neighbor cell {n.cell} outside the grid"
            tracks.append(n.track.T.astype(dtype))
            owners.append(i)
            cells.append(n.cell)
    nbr_tracks = (np.stack(tracks) if tracks
                  else np.zeros((0, 2, h), dtype=dtype))
    return Batch(ego=ego, future=future, nbr_tracks=nbr_tracks,
                 nbr_batch=np.asarray(owners, dtype=np.int64),
                 nbr_cells=(np.asarray(cells, dtype=np.int64)
                            if cells else np.zeros((0, 2), dtype=np.int64)))


# ---------------------------------------------------------------------------
# derived geometry
# ---------------------------------------------------------------------------

def _conv_out(size: int, k: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - k) // stride + 1
    if out < 1:
        raise ConfigurationError(
            f"spatial size collapsed: in {size}, kernel {k}, stride {stride}, pad {pad}")
    return out


@dataclass
class SocialGeometry:
    """Spatial sizes along the grid compression chain."""
    conv1_hw: Tuple[int, int]
    conv2_hw: Tuple[int, int]
    pool_hw: Tuple[int, int]
    flat: int


def social_geometry(config: ModelConfig) -> SocialGeometry:
    c1, c2, pool = config.social_conv1, config.social_conv2, config.social_pool
    h1 = _conv_out(config.grid_rows, c1.kernel[0], c1.stride[0], c1.padding[0])
    w1 = _conv_out(config.grid_cols, c1.kernel[1], c1.stride[1], c1.padding[1])
    h2 = _conv_out(h1, c2.kernel[0], c2.stride[0], c2.padding[0])
    w2 = _conv_out(w1, c2.kernel[1], c2.stride[1], c2.padding[1])
    hp = _conv_out(h2, pool.window[0], pool.stride[0], pool.padding[0])
    wp = _conv_out(w2, pool.window[1], pool.stride[1], pool.padding[1])
    return SocialGeometry((h1, w1), (h2, w2), (hp, wp),
                          flat=c2.out_channels * hp * wp)


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------

def _uniform(rng, bound: float, shape, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class DeepTrack:
    """Interaction-aware trajectory predictor over occupancy grids."""

    def __init__(self, config: Optional[ModelConfig] = None, seed: int = 0):
        self.config = config or default_model_config()
        cfg = self.config
        self.dtype = np.float64 if cfg.dtype == "float64" else np.float32
        rng = np.random.default_rng(np.random.PCG64(seed))

        self.neighbor_encoder = AtcnEncoder(cfg.neighbor_atcn, rng, self.dtype)
        self.ego_encoder = AtcnEncoder(cfg.ego_atcn, rng, self.dtype)
        self.geometry = social_geometry(cfg)

        nbr_c = self.neighbor_encoder.out_channels
        ego_c = self.ego_encoder.out_channels
        ctx = self.geometry.flat + cfg.ego_dense_out
        hidden = cfg.decoder_hidden

        def conv_init(c_out, c_in, kh, kw):
            bound = 1.0 / math.sqrt(c_in * kh * kw)
            return (Tensor(_uniform(rng, bound, (c_out, c_in, kh, kw), self.dtype),
                           requires_grad=True),
                    Tensor(_uniform(rng, bound, (c_out,), self.dtype), requires_grad=True))

        def dense_init(out_w, in_w):
            bound = 1.0 / math.sqrt(in_w)
            return (Tensor(_uniform(rng, bound, (out_w, in_w), self.dtype),
                           requires_grad=True),
                    Tensor(_uniform(rng, bound, (out_w,), self.dtype), requires_grad=True))

        c1, c2 = cfg.social_conv1, cfg.social_conv2
        self.social_conv1_w, self.social_conv1_b = conv_init(
            c1.out_channels, nbr_c, *c1.kernel)
        self.social_conv2_w, self.social_conv2_b = conv_init(
            c2.out_channels, c1.out_channels, *c2.kernel)
        self.ego_remap_w, self.ego_remap_b = dense_init(cfg.ego_dense_out, ego_c)
        self.init_fc1_w, self.init_fc1_b = dense_init(cfg.decoder_init_hidden, ctx)
        self.init_fc2_w, self.init_fc2_b = dense_init(2 * hidden, cfg.decoder_init_hidden)

        bound = 1.0 / math.sqrt(hidden)
        w_ih = _uniform(rng, bound, (4 * hidden, cfg.output_dim), self.dtype)
        w_hh = _uniform(rng, bound, (4 * hidden, hidden), self.dtype)
        bias = _uniform(rng, bound, (4 * hidden,), self.dtype)
        bias[hidden:2 * hidden] += 1.0  # open the forget gate at the start
        self.decoder = LstmWeights(Tensor(w_ih, requires_grad=True),
                                   Tensor(w_hh, requires_grad=True),
                                   Tensor(bias, requires_grad=True))
        self.head_w, self.head_b = dense_init(cfg.output_dim, hidden)

        self._params: Dict[str, Tensor] = {}
        for prefix, enc in (("neighbor_encoder", self.neighbor_encoder),
                            ("ego_encoder", self.ego_encoder)):
            for name, t in enc.parameters().items():
                self._params[f"{prefix}.{name}"] = t
        self._params.update({
            "social.conv1.w": self.social_conv1_w, "social.conv1.b": self.social_conv1_b,
            "social.conv2.w": self.social_conv2_w, "social.conv2.b": self.social_conv2_b,
            "ego_remap.w": self.ego_remap_w, "ego_remap.b": self.ego_remap_b,
            "decoder_init.fc1.w": self.init_fc1_w, "decoder_init.fc1.b": self.init_fc1_b,
            "decoder_init.fc2.w": self.init_fc2_w, "decoder_init.fc2.b": self.init_fc2_b,
            "decoder.w_ih": self.decoder.w_ih, "decoder.w_hh": self.decoder.w_hh,
            "decoder.bias": self.decoder.bias,
            "head.w": self.head_w, "head.b": self.head_b,
        })

    # -- state ------------------------------------------------------------

    @property
    def config_digest(self) -> str:
        return config_hash(self.config)

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self._params)

    def buffers(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for prefix, enc in (("neighbor_encoder", self.neighbor_encoder),
                            ("ego_encoder", self.ego_encoder)):
            for name, arr in enc.buffers().items():
                out[f"{prefix}.{name}"] = arr
        return out

    def state_copy(self) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
        return ({k: t.data.copy() for k, t in self._params.items()},
                {k: v.copy() for k, v in self.buffers().items()})

    def load_state(self, params: Dict[str, np.ndarray],
                   buffers: Dict[str, np.ndarray]) -> None:
        own = self._params
        missing = sorted(set(own) - set(params))
        extra = sorted(set(params) - set(own))
        if missing or extra:
            raise ConfigurationError(
                f"weight names do not match the architecture: "
                f"missing {missing[:3]}, unexpected {extra[:3]}")
        for name, tensor in own.items():
            arr = np.asarray(params[name])
            if arr.shape != tensor.data.shape:
                raise ConfigurationError(
                    f"{name}: shape {arr.shape} does not fit {tensor.data.shape}")
            tensor.data = arr.astype(self.dtype)
        expected_buffers = set(self.buffers())
        if set(buffers) != expected_buffers:
            raise ConfigurationError("running statistics do not match the architecture")
        for prefix, enc in (("neighbor_encoder", self.neighbor_encoder),
                            ("ego_encoder", self.ego_encoder)):
            enc.load_buffers({name[len(prefix) + 1:]: np.asarray(arr)
                              for name, arr in buffers.items()
                              if name.startswith(prefix + ".")})

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    # -- forward ----------------------------------------------------------

    def forward_batch(self, batch: Batch, mode: str = "eval") -> Tensor:
        """Predict ``[B, horizon, 2]`` offsets for a collated batch."""
        cfg = self.config
        act = activation_fn(cfg.neighbor_atcn.activation)
        b = batch.size
        nbr_c = self.neighbor_encoder.out_channels

        if batch.nbr_tracks.shape[0]:
            summaries = self.neighbor_encoder.summary(Tensor(batch.nbr_tracks), mode)
            grid = scatter_grid(summaries, batch.nbr_batch, batch.nbr_cells,
                                (b, nbr_c, cfg.grid_rows, cfg.grid_cols))
        else:
            grid = Tensor(np.zeros((b, nbr_c, cfg.grid_rows, cfg.grid_cols),
                                   dtype=self.dtype))

        c1, c2, pool = cfg.social_conv1, cfg.social_conv2, cfg.social_pool
        v = act(conv2d(grid, self.social_conv1_w, self.social_conv1_b,
                       stride=c1.stride, padding=c1.padding))
        v = act(conv2d(v, self.social_conv2_w, self.social_conv2_b,
                       stride=c2.stride, padding=c2.padding))
        v = max_pool2d(v, pool.window, stride=pool.stride, padding=pool.padding)
        social = v.reshape(b, self.geometry.flat)

        ego_feat = self.ego_encoder.summary(Tensor(batch.ego), mode)
        ego_mapped = act(dense(ego_feat, self.ego_remap_w, self.ego_remap_b))

        context = concat([social, ego_mapped], axis=1)
        z = act(dense(context, self.init_fc1_w, self.init_fc1_b))
        z = dense(z, self.init_fc2_w, self.init_fc2_b)
        hidden = cfg.decoder_hidden
        h, c = z[:, :hidden], z[:, hidden:]

        if cfg.autoregressive:
            prev = Tensor(np.zeros((b, cfg.output_dim), dtype=self.dtype))
            steps: List[Tensor] = []
            for _ in range(cfg.horizon_steps):
                h, c = lstm_cell(prev, h, c, self.decoder)
                y = dense(h, self.head_w, self.head_b)
                steps.append(y)
                prev = y
            return stack(steps, axis=1)

        quiet = Tensor(np.zeros((b, cfg.output_dim), dtype=self.dtype))
        hs: List[Tensor] = []
        for _ in range(cfg.horizon_steps):
            h, c = lstm_cell(quiet, h, c, self.decoder)
            hs.append(h)
        flat_h = stack(hs, axis=1).reshape(b * cfg.horizon_steps, hidden)
        out = dense(flat_h, self.head_w, self.head_b)
        return out.reshape(b, cfg.horizon_steps, cfg.output_dim)

    def forward(self, sample: TrajectorySample, mode: str = "eval") -> Tensor:
        """Predict ``[horizon, 2]`` for one sample."""
        out = self.forward_batch(collate([sample], self.config), mode)
        return out.reshape(self.config.horizon_steps, self.config.output_dim)

    def predict(self, samples: Sequence[TrajectorySample],
                batch_size: int = 256) -> np.ndarray:
        """Eval-mode predictions as a plain ``[N, horizon, 2]`` array."""
        chunks = []
        for lo in range(0, len(samples), batch_size):
            batch = collate(samples[lo:lo + batch_size], self.config)
            chunks.append(self.forward_batch(batch, "eval").data)
        return np.concatenate(chunks, axis=0) if chunks else \
            np.zeros((0, self.config.horizon_steps, self.config.output_dim))
