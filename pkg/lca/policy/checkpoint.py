"""Binary policy checkpoints.

Layout: 8-byte magic, then little-endian int64 header
``[feature_dim, goal_dim, hidden, head_dim, seed]``, then w1, b1, w2, b2, w3, b3
as row-major little-endian float64.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Union

import numpy as np

from lca.policy.network import FEATURE_DIM, PolicyParams


logger = logging.getLogger(__name__)

MAGIC = b"LCAPOL02"
_HEADER_LEN = 5


def encode_params(params: PolicyParams) -> bytes:
    header = np.array(
        [FEATURE_DIM, params.goal_dim, params.hidden, params.head_dim, params.seed], dtype="<i8"
    )
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes(order="C") for a in params.arrays())
    return MAGIC + header.tobytes() + body


def decode_params(blob: bytes) -> PolicyParams:
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError("not a policy checkpoint (bad magic)")
    offset = len(MAGIC)
    header = np.frombuffer(blob, dtype="<i8", count=_HEADER_LEN, offset=offset)
    offset += header.nbytes
    feature_dim, goal_dim, hidden, head_dim, seed = (int(v) for v in header)
    if feature_dim != FEATURE_DIM:
        raise ValueError(f"checkpoint has {feature_dim} state features, this build uses {FEATURE_DIM}")
    input_dim = feature_dim + goal_dim
    shapes = [(hidden, input_dim), (hidden,), (hidden, hidden), (hidden,), (head_dim, hidden), (head_dim,)]
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        if offset + 8 * count > len(blob):
            raise ValueError("truncated policy checkpoint")
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64))
        offset += 8 * count
    if offset != len(blob):
        raise ValueError(f"policy checkpoint has {len(blob) - offset} trailing bytes")
    return PolicyParams(*arrays, seed=seed)


def save_params(params: PolicyParams, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(params))
    logger.debug("wrote checkpoint %s", path)
    return path


def load_params(path: Union[str, Path]) -> PolicyParams:
    return decode_params(Path(path).read_bytes())
