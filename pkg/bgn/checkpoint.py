"""Binary checkpoint format for :class:`BgnModel`

Layout, all integers little-endian:

- magic ``BGNM``, version byte
- config block (fixed struct, see ``_CONFIG``) and the model seed
- parameter count, then per parameter: name, rows, cols, float64 data and an
  optional serialized BitMatrix view of the binarized weight

Loading re-binarizes every latent weight and requires the result to match
the stored view bit for bit.
"""

from __future__ import annotations

import logging
import math
import struct
from pathlib import Path

import numpy as np

from .bgat import BgnConfig, BgnModel, Estimator, Level, LogitScale, Scoring
from .binarize import sign_det
from .bitlinalg import BitMatrix, pack, read_bitmatrix
from .errors import BgnError, CheckpointFormatError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"BGNM"
CHECKPOINT_VERSION = 1

_PREFIX = struct.Struct("<4sB")
# in_dim, n_classes, n_layers, heads, d_head, output_heads,
# level, estimator, scoring, logit_scale, center, balance, real_output,
# weight_clip, activation_clip, reinforce_decay, seed
_CONFIG = struct.Struct("<6I7B3dQ")
_COUNT = struct.Struct("<I")
_NAME_LEN = struct.Struct("<H")
_DIMS = struct.Struct("<QQB")

_LEVELS = list(Level)
_ESTIMATORS = list(Estimator)
_SCORINGS = list(Scoring)
_SCALES = list(LogitScale)


def _clip_out(value: float | None) -> float:
    return math.nan if value is None else value


def _clip_in(value: float) -> float | None:
    return None if math.isnan(value) else value


def _encode_config(config: BgnConfig, seed: int) -> bytes:
    return _CONFIG.pack(
        config.in_dim,
        config.n_classes,
        config.n_layers,
        config.heads,
        config.d_head,
        config.output_heads,
        _LEVELS.index(config.level),
        _ESTIMATORS.index(config.estimator),
        _SCORINGS.index(config.scoring),
        _SCALES.index(config.logit_scale),
        config.center_coefficients,
        config.balance,
        config.real_output_layer,
        _clip_out(config.weight_clip),
        _clip_out(config.activation_clip),
        config.reinforce_decay,
        seed,
    )


def _decode_config(blob: bytes, offset: int) -> tuple[BgnConfig, int, int]:
    if len(blob) - offset < _CONFIG.size:
        raise CheckpointFormatError("truncated config block")
    fields = _CONFIG.unpack_from(blob, offset)
    (in_dim, n_classes, n_layers, heads, d_head, output_heads,
     level, estimator, scoring, scale, center, balance, real_out,
     weight_clip, activation_clip, decay, seed) = fields  # fmt: skip
    try:
        config = BgnConfig(
            in_dim=in_dim,
            n_classes=n_classes,
            n_layers=n_layers,
            heads=heads,
            d_head=d_head,
            output_heads=output_heads,
            level=_LEVELS[level],
            estimator=_ESTIMATORS[estimator],
            scoring=_SCORINGS[scoring],
            logit_scale=_SCALES[scale],
            center_coefficients=bool(center),
            balance=bool(balance),
            real_output_layer=bool(real_out),
            weight_clip=_clip_in(weight_clip),
            activation_clip=_clip_in(activation_clip),
            reinforce_decay=decay,
        )
    except (IndexError, BgnError) as e:
        raise CheckpointFormatError(f"invalid config block: {e}") from e
    return config, seed, offset + _CONFIG.size


def _binary_views(model: BgnModel) -> dict[str, BitMatrix]:
    views: dict[str, BitMatrix] = {}
    for layer in model.all_layers:
        if not layer.binarize_weights:
            continue
        for k, head in enumerate(layer.heads):
            views[f"{layer.prefix}.heads.{k}.W"] = pack(sign_det(head.W))
    return views


def checkpoint_bytes(model: BgnModel) -> bytes:
    params = model.parameters()
    views = _binary_views(model)
    parts = [_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION), _encode_config(model.config, model.seed)]
    parts.append(_COUNT.pack(len(params)))
    for name, value in params.items():
        encoded = name.encode("utf-8")
        matrix = value.reshape(1, -1) if value.ndim == 1 else value
        view = views.get(name)
        parts.append(_NAME_LEN.pack(len(encoded)) + encoded)
        parts.append(_DIMS.pack(matrix.shape[0], matrix.shape[1], view is not None))
        parts.append(matrix.astype("<f8").tobytes())
        if view is not None:
            parts.append(view.to_bytes())
    return b"".join(parts)


def model_from_bytes(blob: bytes) -> BgnModel:
    if len(blob) < _PREFIX.size:
        raise CheckpointFormatError("truncated checkpoint header")
    magic, version = _PREFIX.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    config, seed, offset = _decode_config(blob, _PREFIX.size)
    model = BgnModel(config, seed=seed)
    expected = model.parameters()

    if len(blob) - offset < _COUNT.size:
        raise CheckpointFormatError("truncated parameter count")
    (count,) = _COUNT.unpack_from(blob, offset)
    offset += _COUNT.size
    if count != len(expected):
        raise CheckpointFormatError(f"checkpoint holds {count} parameters, config implies {len(expected)}")

    values: dict[str, np.ndarray] = {}
    stored_views: dict[str, BitMatrix] = {}
    for _ in range(count):
        if len(blob) - offset < _NAME_LEN.size:
            raise CheckpointFormatError("truncated parameter name")
        (name_len,) = _NAME_LEN.unpack_from(blob, offset)
        offset += _NAME_LEN.size
        name = blob[offset : offset + name_len].decode("utf-8", errors="replace")
        offset += name_len
        if name not in expected:
            raise CheckpointFormatError(f"unexpected parameter {name!r}")
        if len(blob) - offset < _DIMS.size:
            raise CheckpointFormatError(f"truncated dimensions for {name}")
        rows, cols, has_view = _DIMS.unpack_from(blob, offset)
        offset += _DIMS.size
        if rows * cols != expected[name].size:
            raise CheckpointFormatError(f"{name}: stored {rows}x{cols}, model expects shape {expected[name].shape}")
        end = offset + rows * cols * 8
        if end > len(blob):
            raise CheckpointFormatError(f"truncated data for {name}")
        values[name] = np.frombuffer(blob[offset:end], dtype="<f8").astype(np.float64).reshape(expected[name].shape)
        offset = end
        if has_view:
            stored_views[name], offset = read_bitmatrix(blob, offset)
    if offset != len(blob):
        raise CheckpointFormatError(f"{len(blob) - offset} trailing bytes after the last parameter")

    model.set_parameters(values)
    rebuilt = _binary_views(model)
    if rebuilt.keys() != stored_views.keys():
        raise CheckpointFormatError("stored binary views do not match the binarized layers of the config")
    for name, view in rebuilt.items():
        if not np.array_equal(view.data, stored_views[name].data) or view.shape != stored_views[name].shape:
            raise CheckpointFormatError(f"binary view of {name} disagrees with its re-binarized latent weights")
    return model


def save_checkpoint(model: BgnModel, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(model))
    logger.info(f"Wrote checkpoint {path} ({model.config.level.value}, {len(model.parameters())} tensors)")


def load_checkpoint(path: Path) -> BgnModel:
    return model_from_bytes(Path(path).read_bytes())
