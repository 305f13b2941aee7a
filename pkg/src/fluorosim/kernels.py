"""Hot numeric kernels.

Every kernel exists twice: a vectorised numpy implementation (``*_np``) and a
loop implementation compiled with numba (``*_nb``). The public name is bound to
one of them at import time according to :data:`fluorosim._accel.USE_NUMBA`.
Both paths consume identical inputs (random draws are always made by the
caller with a numpy ``Generator``), so they agree to floating-point rounding.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "BACKEND",
    "KERNELS",
    "rotate_vectors",
    "project_points",
    "cap_directions",
    "segment_distance_2d",
    "causal_max_product",
    "forward_log_likelihood",
]


# --------------------------------------------------------------------------
# Rodrigues rotation of many vectors about one axis


def _rotate_vectors_np(vecs, axis, angles):
    vecs = np.asarray(vecs, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)[:, None]
    k = np.asarray(axis, dtype=np.float64)
    cos, sin = np.cos(angles), np.sin(angles)
    cross = np.cross(k, vecs)
    dot = vecs @ k
    return vecs * cos + cross * sin + np.outer(dot, k) * (1.0 - cos)


def _rotate_vectors_loop(vecs, axis, angles):
    n = vecs.shape[0]
    out = np.empty((n, 3))
    kx, ky, kz = axis[0], axis[1], axis[2]
    for i in range(n):
        x, y, z = vecs[i, 0], vecs[i, 1], vecs[i, 2]
        c = math.cos(angles[i])
        s = math.sin(angles[i])
        d = (kx * x + ky * y + kz * z) * (1.0 - c)
        out[i, 0] = x * c + (ky * z - kz * y) * s + kx * d
        out[i, 1] = y * c + (kz * x - kx * z) * s + ky * d
        out[i, 2] = z * c + (kx * y - ky * x) * s + kz * d
    return out


_rotate_vectors_nb = njit(_rotate_vectors_loop)


# --------------------------------------------------------------------------
# pinhole projection: returns dehomogenised pixels and homogeneous depth


def _project_points_np(P, pts):
    pts = np.asarray(pts, dtype=np.float64)
    h = pts @ P[:, :3].T + P[:, 3]
    w = h[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = h[:, :2] / w[:, None]
    uv[w == 0.0] = np.nan
    return uv, w


def _project_points_loop(P, pts):
    n = pts.shape[0]
    uv = np.empty((n, 2))
    w = np.empty(n)
    for i in range(n):
        x, y, z = pts[i, 0], pts[i, 1], pts[i, 2]
        hu = P[0, 0] * x + P[0, 1] * y + P[0, 2] * z + P[0, 3]
        hv = P[1, 0] * x + P[1, 1] * y + P[1, 2] * z + P[1, 3]
        hw = P[2, 0] * x + P[2, 1] * y + P[2, 2] * z + P[2, 3]
        w[i] = hw
        if hw != 0.0:
            uv[i, 0] = hu / hw
            uv[i, 1] = hv / hw
        else:
            uv[i, 0] = np.nan
            uv[i, 1] = np.nan
    return uv, w


_project_points_nb = njit(_project_points_loop)


# --------------------------------------------------------------------------
# spherical-cap directions from uniform draws (inverse CDF on cos, uniform azimuth)


def _cap_directions_np(direction, cos_min, u_cos, u_phi):
    d = np.asarray(direction, dtype=np.float64)
    e1, e2 = _perp_basis(d)
    cos_t = 1.0 - np.asarray(u_cos) * (1.0 - cos_min)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * np.pi * np.asarray(u_phi)
    return (
        cos_t[:, None] * d
        + (sin_t * np.cos(phi))[:, None] * e1
        + (sin_t * np.sin(phi))[:, None] * e2
    )


def _perp_basis(d):
    # helper axis = coordinate axis least aligned with d
    ax = np.abs(d)
    helper = np.zeros(3)
    helper[int(np.argmin(ax))] = 1.0
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return e1, e2


def _cap_directions_loop(direction, cos_min, u_cos, u_phi):
    dx, dy, dz = direction[0], direction[1], direction[2]
    ax, ay, az = abs(dx), abs(dy), abs(dz)
    if ax <= ay and ax <= az:
        hx, hy, hz = 1.0, 0.0, 0.0
    elif ay <= az:
        hx, hy, hz = 0.0, 1.0, 0.0
    else:
        hx, hy, hz = 0.0, 0.0, 1.0
    e1x = dy * hz - dz * hy
    e1y = dz * hx - dx * hz
    e1z = dx * hy - dy * hx
    nrm = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
    e1x /= nrm
    e1y /= nrm
    e1z /= nrm
    e2x = dy * e1z - dz * e1y
    e2y = dz * e1x - dx * e1z
    e2z = dx * e1y - dy * e1x
    n = u_cos.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        c = 1.0 - u_cos[i] * (1.0 - cos_min)
        s = math.sqrt(max(0.0, 1.0 - c * c))
        phi = 2.0 * math.pi * u_phi[i]
        a = s * math.cos(phi)
        b = s * math.sin(phi)
        out[i, 0] = c * dx + a * e1x + b * e2x
        out[i, 1] = c * dy + a * e1y + b * e2y
        out[i, 2] = c * dz + a * e1z + b * e2z
    return out


_cap_directions_nb = njit(_cap_directions_loop)


# --------------------------------------------------------------------------
# distance from 2D points to a segment; also returns the clamped parameter t


def _segment_distance_2d_np(q, a, b):
    q = np.asarray(q, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        t = np.zeros(q.shape[0])
    else:
        t = np.clip((q - a) @ ab / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(q - closest, axis=1), t


def _segment_distance_2d_loop(q, a, b):
    n = q.shape[0]
    dist = np.empty(n)
    ts = np.empty(n)
    abx = b[0] - a[0]
    aby = b[1] - a[1]
    denom = abx * abx + aby * aby
    for i in range(n):
        if denom == 0.0:
            t = 0.0
        else:
            t = ((q[i, 0] - a[0]) * abx + (q[i, 1] - a[1]) * aby) / denom
            t = min(1.0, max(0.0, t))
        dx = q[i, 0] - (a[0] + t * abx)
        dy = q[i, 1] - (a[1] + t * aby)
        dist[i] = math.sqrt(dx * dx + dy * dy)
        ts[i] = t
    return dist, ts


_segment_distance_2d_nb = njit(_segment_distance_2d_loop)


# --------------------------------------------------------------------------
# causal max-product decoding: prediction at t uses frames <= t only


def _causal_max_product_np(log_init, log_trans, log_emit):
    n_t = log_emit.shape[0]
    out = np.empty(n_t, dtype=np.int64)
    if n_t == 0:
        return out
    delta = log_init + log_emit[0]
    out[0] = int(np.argmax(delta))
    for t in range(1, n_t):
        delta = np.max(delta[:, None] + log_trans, axis=0) + log_emit[t]
        out[t] = int(np.argmax(delta))
    return out


def _causal_max_product_loop(log_init, log_trans, log_emit):
    n_t, n_s = log_emit.shape
    out = np.empty(n_t, dtype=np.int64)
    if n_t == 0:
        return out
    delta = np.empty(n_s)
    nxt = np.empty(n_s)
    for s in range(n_s):
        delta[s] = log_init[s] + log_emit[0, s]
    out[0] = _argmax(delta)
    for t in range(1, n_t):
        for j in range(n_s):
            best = -np.inf
            for i in range(n_s):
                v = delta[i] + log_trans[i, j]
                if v > best:
                    best = v
            nxt[j] = best + log_emit[t, j]
        for j in range(n_s):
            delta[j] = nxt[j]
        out[t] = _argmax(delta)
    return out


def _argmax(x):
    # first maximum wins, matching np.argmax tie-breaking
    best = 0
    for i in range(1, x.shape[0]):
        if x[i] > x[best]:
            best = i
    return best


_argmax = njit(_argmax)
_causal_max_product_nb = njit(_causal_max_product_loop)


# --------------------------------------------------------------------------
# forward algorithm (sum-product) in log space


def _forward_log_likelihood_np(log_init, log_trans, log_emit):
    n_t = log_emit.shape[0]
    if n_t == 0:
        return 0.0
    alpha = log_init + log_emit[0]
    for t in range(1, n_t):
        m = alpha[:, None] + log_trans
        mx = np.max(m, axis=0)
        alpha = mx + np.log(np.sum(np.exp(m - mx), axis=0)) + log_emit[t]
    mx = np.max(alpha)
    return float(mx + np.log(np.sum(np.exp(alpha - mx))))


def _forward_log_likelihood_loop(log_init, log_trans, log_emit):
    n_t, n_s = log_emit.shape
    if n_t == 0:
        return 0.0
    alpha = np.empty(n_s)
    nxt = np.empty(n_s)
    for s in range(n_s):
        alpha[s] = log_init[s] + log_emit[0, s]
    for t in range(1, n_t):
        for j in range(n_s):
            mx = -np.inf
            for i in range(n_s):
                v = alpha[i] + log_trans[i, j]
                if v > mx:
                    mx = v
            acc = 0.0
            for i in range(n_s):
                acc += math.exp(alpha[i] + log_trans[i, j] - mx)
            nxt[j] = mx + math.log(acc) + log_emit[t, j]
        for j in range(n_s):
            alpha[j] = nxt[j]
    mx = -np.inf
    for s in range(n_s):
        if alpha[s] > mx:
            mx = alpha[s]
    acc = 0.0
    for s in range(n_s):
        acc += math.exp(alpha[s] - mx)
    return mx + math.log(acc)


_forward_log_likelihood_nb = njit(_forward_log_likelihood_loop)


KERNELS = {
    "rotate_vectors": (_rotate_vectors_np, _rotate_vectors_nb),
    "project_points": (_project_points_np, _project_points_nb),
    "cap_directions": (_cap_directions_np, _cap_directions_nb),
    "segment_distance_2d": (_segment_distance_2d_np, _segment_distance_2d_nb),
    "causal_max_product": (_causal_max_product_np, _causal_max_product_nb),
    "forward_log_likelihood": (_forward_log_likelihood_np, _forward_log_likelihood_nb),
}

BACKEND = "numba" if USE_NUMBA else "numpy"
_pick = 1 if USE_NUMBA else 0

rotate_vectors = KERNELS["rotate_vectors"][_pick]
project_points = KERNELS["project_points"][_pick]
cap_directions = KERNELS["cap_directions"][_pick]
segment_distance_2d = KERNELS["segment_distance_2d"][_pick]
causal_max_product = KERNELS["causal_max_product"][_pick]
forward_log_likelihood = KERNELS["forward_log_likelihood"][_pick]
