"""Pure numpy implementations of the message-passing kernels.

Index arrays are int64, value arrays float64 and C-contiguous. The compiled
module ``_kernels`` exposes the same functions with the same signatures.
"""
import numpy as np


def scatter_add_rows(values, index, n):
    out = np.zeros((n, values.shape[1]))
    np.add.at(out, index, values)
    return out


def segment_softmax(scores, index, n):
    """Softmax of ``scores`` (E, H) over the edges sharing the same ``index``."""
    peak = np.full((n, scores.shape[1]), -np.inf)
    np.maximum.at(peak, index, scores)
    ex = np.exp(scores - peak[index])
    denom = np.zeros((n, scores.shape[1]))
    np.add.at(denom, index, ex)
    return ex / denom[index]


def segment_softmax_backward(alpha, grad_alpha, index, n):
    weighted = alpha * grad_alpha
    total = np.zeros((n, alpha.shape[1]))
    np.add.at(total, index, weighted)
    return weighted - alpha * total[index]


def attend(alpha, z, src, dst, n):
    """out[dst, k, :] += alpha[e, k] * z[src, k, :] with z of shape (N, K*F)."""
    E, K = alpha.shape
    F = z.shape[1] // K
    msg = alpha[:, :, None] * z.reshape(-1, K, F)[src]
    return scatter_add_rows(msg.reshape(E, K * F), dst, n)


def attend_backward(grad_out, alpha, z, src, dst):
    E, K = alpha.shape
    F = z.shape[1] // K
    g = grad_out.reshape(-1, K, F)[dst]
    grad_alpha = np.einsum("ekf,ekf->ek", g, z.reshape(-1, K, F)[src])
    grad_z = scatter_add_rows((alpha[:, :, None] * g).reshape(E, K * F), src, z.shape[0])
    return grad_alpha, grad_z
