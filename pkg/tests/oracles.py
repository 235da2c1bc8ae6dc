"""Independent scalar-loop reference implementations used as test oracles.

Nothing here imports torch model code; inputs are plain nested lists / numpy arrays
and every sum is written out explicitly.
"""

import math

import numpy as np


def lrelu(v, slope=0.01):
    return v if v >= 0 else slope * v


def matvec(W, x):
    return [sum(W[r][c] * x[c] for c in range(len(x))) for r in range(len(W))]


def dot(a, b):
    return sum(p * q for p, q in zip(a, b))


def softmax_list(vals):
    m = max(vals)
    ex = [math.exp(v - m) for v in vals]
    s = sum(ex)
    return [e / s for e in ex]


def matmul_loops(A, B):
    m, k = len(A), len(A[0])
    n = len(B[0])
    return [[sum(A[i][t] * B[t][j] for t in range(k)) for j in range(n)] for i in range(m)]


def complex_matmul_loops(A, B):
    m, k = A.shape
    n = B.shape[1]
    out = np.zeros((m, n), dtype=complex)
    for i in range(m):
        for j in range(n):
            acc = 0j
            for t in range(k):
                acc += complex(A[i, t]) * complex(B[t, j])
            out[i, j] = acc
    return out


def edge_features(H):
    """Per-pair [Re(h_i^H h_i), Re(h_i^H h_j), Re(h_j^H h_j), Im(...), Im(...), Im(...)]."""
    n_t, K = H.shape
    out = np.zeros((K, K, 6))
    for i in range(K):
        for j in range(K):
            ii = sum(np.conj(H[t, i]) * H[t, i] for t in range(n_t))
            ij = sum(np.conj(H[t, i]) * H[t, j] for t in range(n_t))
            jj = sum(np.conj(H[t, j]) * H[t, j] for t in range(n_t))
            out[i, j] = [ii.real, ij.real, jj.real, ii.imag, ij.imag, jj.imag]
    return out


def node_update(x, e, p, slope=0.01):
    """x: K lists of F_in; e: K x K lists of D_in; p: dict of nested-list params."""
    K = len(x)
    M = len(p["theta"])
    fo = len(p["theta"][0])
    out = []
    for i in range(K):
        acc = [0.0] * fo
        for m in range(M):
            th = p["theta"][m]
            a = p["a"][m]
            ti = matvec(th, x[i])
            scores = []
            for j in range(K):
                tj = matvec(th, x[j])
                pe = matvec(p["phi"][m], e[i][j])
                scores.append(lrelu(dot(a, ti + tj + pe), slope))
            alpha = softmax_list(scores)
            for j in range(K):
                tj = matvec(th, x[j])
                for o in range(fo):
                    acc[o] += alpha[j] * tj[o] / M
        res = matvec(p["theta_r"], x[i])
        out.append([acc[o] + res[o] for o in range(fo)])
    return out


def edge_update(x, e, p, slope=0.01):
    K = len(x)
    M = len(p["phi_hat"])
    do = len(p["phi_hat"][0])
    out = [[None] * K for _ in range(K)]
    for i in range(K):
        for j in range(K):
            acc = [0.0] * do
            for m in range(M):
                ph = p["phi_hat"][m]
                b = p["b"][m]
                pij = matvec(ph, e[i][j])
                src = matvec(p["theta_hat"][m], x[i])
                scores = [lrelu(dot(b, pij + matvec(ph, e[i][n]) + src), slope) for n in range(K)]
                beta = softmax_list(scores)
                for n in range(K):
                    pin = matvec(ph, e[i][n])
                    for o in range(do):
                        acc[o] += beta[n] * pin[o] / M
            res = matvec(p["phi_hat_r"], e[i][j])
            nodes = matvec(p["theta_n"], list(x[i]) + list(x[j]))
            out[i][j] = [acc[o] + res[o] + nodes[o] for o in range(do)]
    return out


def layer_norm_row(v, eps=1e-5):
    mu = sum(v) / len(v)
    var = sum((t - mu) ** 2 for t in v) / len(v)
    return [(t - mu) / math.sqrt(var + eps) for t in v]


def gelu(v):
    return 0.5 * v * (1 + math.erf(v / math.sqrt(2)))


def vecmat(x, W):
    """Row vector times matrix W given as [in][out]."""
    return [sum(x[r] * W[r][c] for r in range(len(x))) for c in range(len(W[0]))]


def modulated_block(tokens, c, p, heads, eps=1e-5):
    """One conditioned encoder block; weights in p are [in][out] matrices."""
    K = len(tokens)
    D = len(tokens[0])
    dh = D // heads
    scale, shift, gate = vecmat(c, p["v_scale"]), vecmat(c, p["v_shift"]), vecmat(c, p["v_gate"])
    am = [[n * s + b for n, s, b in zip(layer_norm_row(t, eps), scale, shift)] for t in tokens]
    q = [vecmat(t, p["w_q"]) for t in am]
    k = [vecmat(t, p["w_k"]) for t in am]
    v = [vecmat(t, p["w_v"]) for t in am]
    concat = [[0.0] * D for _ in range(K)]
    for h in range(heads):
        sl = range(h * dh, (h + 1) * dh)
        for i in range(K):
            w = softmax_list([sum(q[i][d] * k[j][d] for d in sl) / math.sqrt(dh) for j in range(K)])
            for d in sl:
                concat[i][d] = sum(w[j] * v[j][d] for j in range(K))
    mha = [vecmat(row, p["w_o"]) for row in concat]
    tokens = [[t + o * g for t, o, g in zip(tokens[i], mha[i], gate)] for i in range(K)]
    scale2, shift2, gate2 = vecmat(c, p["v2_scale"]), vecmat(c, p["v2_shift"]), vecmat(c, p["v2_gate"])
    am2 = [[n * s + b for n, s, b in zip(layer_norm_row(t, eps), scale2, shift2)] for t in tokens]
    ffn = [vecmat([gelu(u) for u in vecmat(row, p["w_1"])], p["w_2"]) for row in am2]
    return [[t + f * g for t, f, g in zip(tokens[i], ffn[i], gate2)] for i in range(K)]


def ncsn_forward(H_bar, level, p, heads):
    """Score network output for one N_T x K complex matrix, written with explicit loops."""
    n_t, K = H_bar.shape
    tokens_in = [[H_bar[t, k].real for t in range(n_t)] + [H_bar[t, k].imag for t in range(n_t)] for k in range(K)]
    h = [vecmat(tok, p["w_ib"]) for tok in tokens_in]
    c = list(p["embed"][level - 1])
    for bp in p["blocks"]:
        h = modulated_block(h, c, bp, heads)
    out = np.zeros((n_t, K), dtype=complex)
    for k in range(K):
        o = vecmat(h[k], p["w_ob"])
        for t in range(n_t):
            out[t, k] = complex(o[t], o[n_t + t])
    return out


def rates(H, P_RF, P_BB, beta, sigma2):
    """Per-user rates from the SINR expression, with explicit sums."""
    n_t, K = H.shape
    out = []
    for k in range(K):
        gains = []
        for j in range(K):
            acc = 0j
            for t in range(n_t):
                inner = sum(P_RF[t, r] * P_BB[r, j] for r in range(K))
                acc += np.conj(H[t, k]) * inner
            gains.append(abs(acc) ** 2)
        interf = sum(beta[j] * gains[j] for j in range(K) if j != k)
        out.append(math.log2(1 + beta[k] * gains[k] / (interf + sigma2)))
    return out
