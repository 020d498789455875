"""Independent brute-force reference implementations used only by tests.

Everything here favors the most literal possible reading of the math over
speed: dicts, python loops, dense arrays. Tests compare the package's
vectorized implementations against these.
"""

import numpy as np


def adjacency_oracle(bucket, roster, context_roster):
    """Dense co-participation matrix via explicit set intersections."""
    threads = {}
    for post in bucket:
        threads.setdefault(post.user_id, set()).add(post.thread_id)
    m, n = len(roster), len(context_roster)
    dense = np.zeros((m, n))
    active = np.zeros(m, dtype=bool)
    for i, ui in enumerate(roster):
        theta_i = threads.get(ui, set())
        inter = {}
        for j, uj in enumerate(context_roster):
            if uj == ui:
                continue
            inter[j] = len(theta_i & threads.get(uj, set()))
        denom = sum(inter.values())
        if denom == 0:
            continue
        active[i] = True
        for j, cnt in inter.items():
            dense[i, j] = cnt / denom
    return dense, active


def ppmi_oracle(bucket, roster, vocab, bg):
    """Dense positive PMI matrix from raw token counts."""
    tokens = {}
    for post in bucket:
        tokens.setdefault(post.user_id, []).extend(post.tokens)
    m, d = len(roster), len(vocab)
    dense = np.zeros((m, d))
    active = np.zeros(m, dtype=bool)
    for i, user in enumerate(roster):
        toks = tokens.get(user, [])
        if not toks:
            continue
        active[i] = True
        total = len(toks)
        for z, word in enumerate(vocab):
            count = toks.count(word)
            if count == 0:
                continue
            pmi = np.log((count / total) / bg.prob(word))
            dense[i, z] = max(0.0, pmi)
    return dense, active


def weight_matrix(sparse, c0, mask_missing=True):
    """Training weight per cell: 1 where a nonzero value is stored, c0 on
    zero cells, 0 across masked (inactive) rows."""
    dense = sparse.to_dense()
    weights = np.where(dense != 0, 1.0, c0)
    if mask_missing:
        weights[~sparse.row_active, :] = 0.0
    return weights


def loss_oracle(A, C, WA, WC, U, V, W, biases, lam1, lam2, v_static=False, w_static=False):
    """Dense weighted objective. A/V may be None (content-only variants);
    C/W may be None (adjacency-only). Static factors are passed as the same
    array repeated per timestep; their smoothness terms are skipped."""
    T = len(U)
    recon_A = recon_C = 0.0
    for t in range(T):
        if A is not None:
            pred = U[t] @ V[t].T
            if biases is not None:
                pred = pred + biases["bA_row"][t][:, None] + biases["bA_col"][t][None, :]
            recon_A += float(np.sum(WA[t] * (A[t] - pred) ** 2))
        if C is not None:
            pred = U[t] @ W[t].T
            if biases is not None:
                pred = pred + biases["bC_row"][t][:, None] + biases["bC_col"][t][None, :]
            recon_C += float(np.sum(WC[t] * (C[t] - pred) ** 2))
    l2 = 0.0
    for t in range(T):
        l2 += float(np.sum(U[t] ** 2))
        if V is not None:
            l2 += float(np.sum(V[t] ** 2))
        if W is not None:
            l2 += float(np.sum(W[t] ** 2))
    l2 *= lam1
    smooth = 0.0
    for t in range(T - 1):
        smooth += float(np.sum((U[t + 1] - U[t]) ** 2))
        if V is not None and not v_static:
            smooth += float(np.sum((V[t + 1] - V[t]) ** 2))
        if W is not None and not w_static:
            smooth += float(np.sum((W[t + 1] - W[t]) ** 2))
    smooth *= lam2
    return recon_A, recon_C, l2, smooth, recon_A + recon_C + l2 + smooth


def purity_oracle(clusters, labels):
    """clusters: list of lists of row keys; labels: key -> set of classes.
    Returns (per-cluster purity list, unweighted mean); clusters with no
    labeled rows are skipped."""
    per_cluster = []
    for members in clusters:
        labeled = [key for key in members if labels.get(key)]
        if not labeled:
            per_cluster.append(None)
            continue
        class_counts = {}
        for key in labeled:
            for cls in labels[key]:
                class_counts[cls] = class_counts.get(cls, 0) + 1
        per_cluster.append(max(class_counts.values()) / len(labeled))
    scored = [p for p in per_cluster if p is not None]
    if not scored:
        raise ValueError("no labeled rows in any cluster")
    return per_cluster, sum(scored) / len(scored)


def ci_oracle(y_hat, y_true):
    """Concordance by O(n^2) pair enumeration; ties in y_hat get 0.5."""
    score = 0.0
    pairs = 0
    for i in range(len(y_true)):
        for j in range(i + 1, len(y_true)):
            if y_true[i] == y_true[j]:
                continue
            pairs += 1
            if y_hat[i] == y_hat[j]:
                score += 0.5
            elif (y_hat[i] < y_hat[j]) == (y_true[i] < y_true[j]):
                score += 1.0
    if pairs == 0:
        raise ValueError("no comparable pairs")
    return score / pairs
