"""Independent brute-force oracles. Everything here is written with naive
loops and no reuse of package internals, so it can arbitrate correctness."""

from __future__ import annotations

import math

import numpy as np


def matmul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, n = a.shape
    n2, p = b.shape
    assert n == n2
    out = np.zeros((m, p))
    for i in range(m):
        for j in range(p):
            acc = 0.0
            for k in range(n):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def trilinear(vol: np.ndarray, pos) -> np.ndarray:
    """8-corner weighted sum with zero outside the volume."""
    h, w, d, c = vol.shape
    x, y, z = float(pos[0]), float(pos[1]), float(pos[2])
    x0, y0, z0 = math.floor(x), math.floor(y), math.floor(z)
    fx, fy, fz = x - x0, y - y0, z - z0
    acc = np.zeros(c)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                wx = fx if dx else 1.0 - fx
                wy = fy if dy else 1.0 - fy
                wz = fz if dz else 1.0 - fz
                ix, iy, iz = x0 + dx, y0 + dy, z0 + dz
                if 0 <= ix < h and 0 <= iy < w and 0 <= iz < d:
                    acc += (wx * wy * wz) * vol[ix, iy, iz]
    return acc


def brute_force_view_conv(vol: np.ndarray, rotated_points: np.ndarray,
                          weights: np.ndarray) -> np.ndarray:
    """Per-voxel neighbor positions -> trilinear features -> contraction."""
    h, w, d, c_in = vol.shape
    c_out = weights.shape[2]
    out = np.zeros((h, w, d, c_out))
    for i in range(h):
        for j in range(w):
            for l in range(d):
                center = np.array([i, j, l], dtype=np.float64)
                for k in range(len(rotated_points)):
                    feat = trilinear(vol, center + rotated_points[k])
                    out[i, j, l] += feat @ weights[k]
    return out


def dense_conv3d_loops(vol: np.ndarray, offsets: np.ndarray,
                       weights: np.ndarray) -> np.ndarray:
    """Standard zero-padded stride-1 convolution over integer offsets."""
    h, w, d, c_in = vol.shape
    c_out = weights.shape[2]
    out = np.zeros((h, w, d, c_out))
    for i in range(h):
        for j in range(w):
            for l in range(d):
                for k in range(len(offsets)):
                    x = i + int(offsets[k, 0])
                    y = j + int(offsets[k, 1])
                    z = l + int(offsets[k, 2])
                    if 0 <= x < h and 0 <= y < w and 0 <= z < d:
                        out[i, j, l] += vol[x, y, z] @ weights[k]
    return out


def permuted_weight_tensor(lattice_points: np.ndarray, rotated_points: np.ndarray,
                           weights: np.ndarray) -> np.ndarray:
    """Reindex weights so a standard conv over the lattice reproduces a
    lattice-exact rotated conv: weight k moves to the slot of the lattice
    point its kernel point rotated onto."""
    out = np.zeros_like(weights)
    used = set()
    for k in range(len(rotated_points)):
        target = np.round(rotated_points[k]).astype(int)
        matches = np.where((lattice_points.astype(int) == target).all(axis=1))[0]
        assert len(matches) == 1, f"rotated point {k} has no unique lattice image"
        j = int(matches[0])
        assert j not in used
        used.add(j)
        out[j] = weights[k]
    return out


def attention_loops(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                    scale: bool = True) -> np.ndarray:
    """Single-head attention, one query at a time, softmax over keys."""
    lq, c = q.shape
    lk = k.shape[0]
    s = 1.0 / math.sqrt(c) if scale else 1.0
    out = np.zeros((lq, c))
    for i in range(lq):
        logits = np.array([s * float(np.dot(q[i], k[j])) for j in range(lk)])
        e = np.exp(logits - logits.max())
        p = e / e.sum()
        for j in range(lk):
            out[i] += p[j] * v[j]
    return out


def _affine(x, linear):
    out = x @ linear.weight.data
    if linear.bias is not None:
        out = out + linear.bias.data
    return out


def encoder_stages_oracle(vol: np.ndarray, encoder) -> np.ndarray:
    """Straight-line recomputation of the view-token encoder (1 layer,
    1 head): project+flatten, prepend the view embedding, add positions,
    self-attention and feed-forward with residuals, keep the first M rows."""
    assert len(encoder.blocks) == 1 and encoder.blocks[0].heads == 1
    flat = vol.reshape(-1, vol.shape[-1])
    projected = _affine(flat, encoder.input_proj)
    seq = np.concatenate([encoder.view_embed.data, projected], axis=0)
    seq = seq + encoder.pos_embed.data
    block = encoder.blocks[0]
    attn = attention_loops(_affine(seq, block.wq), _affine(seq, block.wk),
                           _affine(seq, block.wv), scale=block.scale)
    mid = seq + _affine(attn, block.wo)
    hidden = np.maximum(_affine(mid, block.ff1), 0.0)
    out = mid + _affine(hidden, block.ff2)
    return out[: encoder.token_size]


def fusion_oracle(feats: np.ndarray, context: np.ndarray, block) -> np.ndarray:
    """Explicit-loop cross attention with residual output projection."""
    assert block.heads == 1
    att = attention_loops(_affine(feats, block.query_proj),
                          _affine(context, block.key_proj),
                          _affine(context, block.value_proj),
                          scale=block.scale)
    return feats + _affine(att, block.out_proj)


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray,
                     num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p, g in zip(pred[mask].ravel(), gt[mask].ravel()):
        cm[int(g), int(p)] += 1
    return cm


def sc_from_confusion(cm: np.ndarray):
    tp = int(cm[1:, 1:].sum())
    fp = int(cm[0, 1:].sum())
    fn = int(cm[1:, 0].sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    iou = tp / (tp + fp + fn) if tp + fp + fn else 0.0
    return precision, recall, iou


def ssc_from_confusion(cm: np.ndarray):
    num_classes = cm.shape[0]
    class_iou = {}
    for cls in range(1, num_classes):
        inter = int(cm[cls, cls])
        union = int(cm[cls, :].sum() + cm[:, cls].sum() - cm[cls, cls])
        if union == 0:
            continue
        class_iou[cls] = inter / union
    mean = sum(class_iou.values()) / len(class_iou) if class_iou else 0.0
    return class_iou, mean
