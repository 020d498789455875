"""Joint temporal factorization of adjacency and content matrices.

Every timestep's adjacency A_t (m x n) and content C_t (m x d) are factored
as U_t V_t^T and U_t W_t^T with the user factor U_t shared between the two
reconstructions. The objective adds L2 suppression (lambda1), smoothing of
consecutive timesteps (lambda2), weight c0 on unobserved cells, optional
masking of inactive rows, and optional additive row/column biases.

Gradients are exact and full-batch. The c0-weighted sum over every cell of a
sparse matrix is computed through the Gram identity

    sum_ij w_ij (S - pred)^2
      = c0 * (sum_all pred^2 - sum_obs pred^2) + sum_obs (v - pred)^2

so nothing m x n is ever materialized; cost is O(nnz k + (m + n) k^2).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError, MissingArtifactError
from .matrices import MatrixBundle, SparseMatrix
from .util import canonical_json, derive_seed

VARIANTS = ("cerberus", "noadj", "statcont", "matfact", "sharedmf", "adjonly")

CERB_MAGIC = b"CERB"
CERB_VERSION = 1
_CERB_HEADER = struct.Struct("<4sIQQ")

EARLY_STOP_TOL = 1e-6
EARLY_STOP_PATIENCE = 10


@dataclass(frozen=True)
class VariantSpec:
    """Which factors exist, which are time-indexed, which sources enter the loss."""

    kind: str
    has_A: bool
    has_C: bool
    v_static: bool
    w_static: bool
    aggregate_time: bool


_VARIANT_TABLE = {
    "cerberus": VariantSpec("cerberus", True, True, False, False, False),
    "noadj": VariantSpec("noadj", False, True, False, False, False),
    "statcont": VariantSpec("statcont", True, True, True, True, False),
    "matfact": VariantSpec("matfact", False, True, False, False, True),
    "sharedmf": VariantSpec("sharedmf", True, True, False, False, True),
    "adjonly": VariantSpec("adjonly", True, False, False, False, False),
}


def make_variant(kind: str) -> VariantSpec:
    if kind not in _VARIANT_TABLE:
        raise ConfigError(f"unknown variant {kind!r}; valid variants: {', '.join(VARIANTS)}")
    return _VARIANT_TABLE[kind]


@dataclass
class ModelConfig:
    variant: str = "cerberus"
    k: int = 100
    lambda1: float = 0.1
    lambda2: float = 1.0
    c0: float = 0.01
    learning_rate: float = 0.01
    epochs: int = 200
    seed: int = 0
    use_biases: bool = True
    mask_missing: bool = True
    relax_nonneg: bool = True

    def validate(self) -> None:
        make_variant(self.variant)
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0")
        if not (0 < self.c0 <= 1):
            raise ConfigError(f"c0 must be in (0, 1], got {self.c0}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class LossBreakdown:
    recon_A: float
    recon_C: float
    l2: float
    smooth: float
    total: float


@dataclass(eq=False)
class EmbeddingSet:
    """Trained factors. V/W are lists of length T, or length 1 when the
    variant keeps them static; they are None when the variant lacks the
    corresponding source matrix. Biases are per-timestep vectors."""

    kind: str
    U: list
    V: list | None
    W: list | None
    biases: dict | None

    @property
    def spec(self) -> VariantSpec:
        return make_variant(self.kind)

    @property
    def T(self) -> int:
        return len(self.U)

    @property
    def m(self) -> int:
        return self.U[0].shape[0]

    @property
    def k(self) -> int:
        return self.U[0].shape[1]

    def V_at(self, t: int) -> np.ndarray:
        return self.V[0] if len(self.V) == 1 else self.V[t]

    def W_at(self, t: int) -> np.ndarray:
        return self.W[0] if len(self.W) == 1 else self.W[t]

    def params(self) -> dict:
        """Ordered mapping of parameter keys to their arrays (shared refs)."""
        out = {}
        for t, arr in enumerate(self.U):
            out[("U", t)] = arr
        for name, group in (("V", self.V), ("W", self.W)):
            if group is not None:
                for i, arr in enumerate(group):
                    out[(name, i)] = arr
        if self.biases is not None:
            for name in ("bA_row", "bA_col", "bC_row", "bC_col"):
                if name in self.biases:
                    for t, vec in enumerate(self.biases[name]):
                        out[(name, t)] = vec
        return out

    def set_param(self, key, arr) -> None:
        name, i = key
        if name == "U":
            self.U[i] = arr
        elif name == "V":
            self.V[i] = arr
        elif name == "W":
            self.W[i] = arr
        else:
            self.biases[name][i] = arr


def init_model(cfg: ModelConfig, bundle: MatrixBundle, seed: int | None = None) -> EmbeddingSet:
    """Factor entries ~ N(0, (0.1/sqrt(k))^2); biases start at zero."""
    cfg.validate()
    spec = make_variant(cfg.variant)
    if spec.aggregate_time and bundle.T != 1:
        raise ConfigError(
            f"variant {cfg.variant!r} consumes a time-aggregated bundle (T=1), got T={bundle.T}"
        )
    T, m, n, d = bundle.T, bundle.m, bundle.n, bundle.d_vocab
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    std = 0.1 / np.sqrt(cfg.k)
    U = [rng.normal(0.0, std, (m, cfg.k)) for _ in range(T)]
    V = W = None
    if spec.has_A:
        V = [rng.normal(0.0, std, (n, cfg.k)) for _ in range(1 if spec.v_static else T)]
    if spec.has_C:
        W = [rng.normal(0.0, std, (d, cfg.k)) for _ in range(1 if spec.w_static else T)]
    biases = None
    if cfg.use_biases:
        biases = {}
        if spec.has_A:
            biases["bA_row"] = [np.zeros(m) for _ in range(T)]
            biases["bA_col"] = [np.zeros(n) for _ in range(T)]
        if spec.has_C:
            biases["bC_row"] = [np.zeros(m) for _ in range(T)]
            biases["bC_col"] = [np.zeros(d) for _ in range(T)]
    return EmbeddingSet(cfg.variant, U, V, W, biases)


# -- training contexts --------------------------------------------------------


class _SourceContext:
    """Preprocessed view of one (timestep, source) matrix for the trainer.

    Keeps the stored nonzero cells of trainable rows, a weight-1 flag per cell
    (0 for held-out cells, which the loss must ignore entirely), and a CSR
    scaffold whose data slot is refilled with per-cell gradient coefficients.
    """

    def __init__(self, sm: SparseMatrix, source: str, t: int, mask_missing: bool, held=None):
        self.source = source
        self.t = t
        work = sm.drop_inactive_entries() if mask_missing else sm
        keep = work.values != 0.0  # explicit zeros weigh c0, same as implicit
        rows = work.row_idx[keep].astype(np.int64)
        cols = work.col_idx[keep].astype(np.int64)
        vals = work.values[keep]
        self.active = sm.row_active.copy() if mask_missing else np.ones(sm.rows, dtype=bool)
        w1 = np.ones(len(vals))
        if held is not None and len(held[0]):
            held_keys = set(zip(held[0].tolist(), held[1].tolist()))
            for e, (r, c) in enumerate(zip(rows.tolist(), cols.tolist())):
                if (r, c) in held_keys:
                    w1[e] = 0.0
        self.rows, self.cols, self.vals, self.w1 = rows, cols, vals, w1
        self.n_cols = sm.cols
        self._csr = None
        self._perm = None

    def coef_matrix(self, coef: np.ndarray) -> sp.csr_matrix:
        if self._csr is None:
            marker = sp.csr_matrix(
                (np.arange(len(self.vals), dtype=np.float64) + 1.0, (self.rows, self.cols)),
                shape=(len(self.active), self.n_cols),
            )
            self._perm = (marker.data - 1.0).astype(np.int64)
            self._csr = marker
        self._csr.data = coef[self._perm]
        return self._csr


def _build_contexts(bundle: MatrixBundle, cfg: ModelConfig, spec: VariantSpec, holdout) -> list:
    held_map = {}
    if holdout is not None:
        for key, cells in holdout["entries"].items():
            held_map[key] = (np.asarray(cells["obs_rows"]), np.asarray(cells["obs_cols"]))
    contexts = []
    for t in range(bundle.T):
        if spec.has_A:
            contexts.append(
                _SourceContext(bundle.A[t], "A", t, cfg.mask_missing, held_map.get((t + 1, "A")))
            )
        if spec.has_C:
            contexts.append(
                _SourceContext(bundle.C[t], "C", t, cfg.mask_missing, held_map.get((t + 1, "C")))
            )
    return contexts


def _recon_source(model, ctx, cfg, grads):
    """Weighted squared error of one source matrix; accumulates gradients
    into `grads` when it is not None. Returns the loss term."""
    t = ctx.t
    U = model.U[t]
    if ctx.source == "A":
        qi = 0 if model.spec.v_static else t
        Q = model.V[qi]
        q_key = ("V", qi)
        bias_names = ("bA_row", "bA_col")
    else:
        qi = 0 if model.spec.w_static else t
        Q = model.W[qi]
        q_key = ("W", qi)
        bias_names = ("bC_row", "bC_col")

    m, k = U.shape
    n = Q.shape[0]
    if model.biases is not None:
        p = model.biases[bias_names[0]][t]
        q = model.biases[bias_names[1]][t]
    else:
        p = np.zeros(m)
        q = np.zeros(n)

    active = ctx.active
    Pm = U[active]
    pm = p[active]
    n_active = Pm.shape[0]
    c0 = cfg.c0

    # dense c0 term over every cell of the active rows, via Gram matrices
    G = Q.T @ Q
    sQ = Q.sum(axis=0)
    sQq = Q.T @ q
    sq = q.sum()
    D = float(np.sum((Pm @ G) * Pm))
    D += n * float(pm @ pm) + 2.0 * float(pm.sum() * sq) + n_active * float(q @ q)
    D += 2.0 * (float(pm @ (Pm @ sQ)) + float((Pm @ sQq).sum()))

    # stored cells: unit-weight errors (w1=1) and the pred^2 correction
    pred = np.einsum("ij,ij->i", U[ctx.rows], Q[ctx.cols]) + p[ctx.rows] + q[ctx.cols]
    err = ctx.w1 * (ctx.vals - pred)
    F = float(pred @ pred)
    loss = c0 * (D - F) + float(err @ err)

    if grads is None:
        return loss

    coef = -2.0 * (err + c0 * pred)
    Coef = ctx.coef_matrix(coef)
    grads[("U", t)] += Coef @ Q
    grads[q_key] += Coef.T @ U
    gU = grads[("U", t)]
    gU[active] += 2.0 * c0 * (Pm @ G + np.outer(pm, sQ) + sQq[None, :])
    Gm = Pm.T @ Pm
    sP = Pm.sum(axis=0)
    sPp = Pm.T @ pm
    grads[q_key] += 2.0 * c0 * (Q @ Gm + np.outer(q, sP) + sPp[None, :])
    if model.biases is not None:
        gp = grads[(bias_names[0], t)]
        gq = grads[(bias_names[1], t)]
        gp += np.asarray(Coef.sum(axis=1)).ravel()
        gq += np.asarray(Coef.sum(axis=0)).ravel()
        gp[active] += 2.0 * c0 * (Pm @ sQ + n * pm + sq)
        gq += 2.0 * c0 * (Q @ sP + pm.sum() + n_active * q)
    return loss


def _loss_and_grads(model, contexts, cfg, want_grads: bool):
    spec = model.spec
    grads = None
    if want_grads:
        grads = {key: np.zeros_like(arr) for key, arr in model.params().items()}

    recon_A = recon_C = 0.0
    for ctx in contexts:
        term = _recon_source(model, ctx, cfg, grads)
        if ctx.source == "A":
            recon_A += term
        else:
            recon_C += term

    # lambda1: every referenced factor at every timestep, biases excluded;
    # a static factor is referenced at all T timesteps so it counts T times
    T = model.T
    l2 = 0.0
    for t in range(T):
        l2 += float(np.sum(model.U[t] ** 2))
        if want_grads:
            grads[("U", t)] += 2.0 * cfg.lambda1 * model.U[t]
    for name, group in (("V", model.V), ("W", model.W)):
        if group is None:
            continue
        reps = T // len(group)  # T for static (len 1), 1 for dynamic
        for i, arr in enumerate(group):
            l2 += reps * float(np.sum(arr**2))
            if want_grads:
                grads[(name, i)] += 2.0 * cfg.lambda1 * reps * arr
    l2 *= cfg.lambda1

    # lambda2: consecutive-timestep drift of every dynamic factor
    smooth = 0.0
    factor_lists = [("U", model.U)]
    if model.V is not None and not spec.v_static:
        factor_lists.append(("V", model.V))
    if model.W is not None and not spec.w_static:
        factor_lists.append(("W", model.W))
    for name, group in factor_lists:
        for t in range(len(group) - 1):
            diff = group[t + 1] - group[t]
            smooth += float(np.sum(diff**2))
            if want_grads:
                grads[(name, t + 1)] += 2.0 * cfg.lambda2 * diff
                grads[(name, t)] -= 2.0 * cfg.lambda2 * diff
    smooth *= cfg.lambda2

    total = recon_A + recon_C + l2 + smooth
    breakdown = LossBreakdown(recon_A, recon_C, l2, smooth, total)
    for term in ("recon_A", "recon_C", "l2", "smooth", "total"):
        if not np.isfinite(getattr(breakdown, term)):
            raise DataError(f"non-finite loss term {term}")
    return breakdown, grads


def loss(model: EmbeddingSet, bundle: MatrixBundle, cfg: ModelConfig, holdout=None) -> LossBreakdown:
    contexts = _build_contexts(bundle, cfg, model.spec, holdout)
    breakdown, _ = _loss_and_grads(model, contexts, cfg, want_grads=False)
    return breakdown


class _Adam:
    """Deterministic full-batch Adam over a fixed, ordered parameter dict."""

    def __init__(self, keys, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: None for k in keys}
        self.v = {k: None for k in keys}

    def step(self, model: EmbeddingSet, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for key, arr in model.params().items():
            g = grads[key]
            if self.m[key] is None:
                self.m[key] = np.zeros_like(arr)
                self.v[key] = np.zeros_like(arr)
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * g * g
            m_hat = self.m[key] / (1 - b1**self.t)
            v_hat = self.v[key] / (1 - b2**self.t)
            model.set_param(key, arr - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))


def train(bundle: MatrixBundle, cfg: ModelConfig, holdout=None):
    """Full-batch Adam on the exact gradients. Returns (model, loss trace);
    trace[e] is the loss at the start of epoch e. Stops early once the
    relative improvement stays below 1e-6 for 10 consecutive epochs."""
    cfg.validate()
    model = init_model(cfg, bundle)
    contexts = _build_contexts(bundle, cfg, model.spec, holdout)
    adam = _Adam(list(model.params().keys()), cfg.learning_rate)
    trace = []
    stall = 0
    for epoch in range(cfg.epochs):
        try:
            breakdown, grads = _loss_and_grads(model, contexts, cfg, want_grads=True)
        except DataError as exc:
            raise DataError(f"training diverged at epoch {epoch}: {exc}") from exc
        trace.append(breakdown)
        if epoch > 0:
            prev = trace[-2].total
            improvement = (prev - breakdown.total) / max(abs(prev), 1e-300)
            stall = stall + 1 if improvement < EARLY_STOP_TOL else 0
            if stall >= EARLY_STOP_PATIENCE:
                break
        adam.step(model, grads)
        if not cfg.relax_nonneg:
            for key, arr in model.params().items():
                if key[0] in ("U", "V", "W"):
                    np.maximum(arr, 0.0, out=arr)
    return model, trace


def gradient_check(model, bundle, cfg, n_probes: int = 25, h: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between analytic gradients and central differences
    at n_probes randomly chosen parameter coordinates."""
    contexts = _build_contexts(bundle, cfg, model.spec, None)
    _, grads = _loss_and_grads(model, contexts, cfg, want_grads=True)
    keys = list(model.params().keys())
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        key = keys[rng.integers(len(keys))]
        arr = model.params()[key]
        idx = rng.integers(arr.size)
        orig = arr.flat[idx]
        arr.flat[idx] = orig + h
        up = _loss_and_grads(model, contexts, cfg, want_grads=False)[0].total
        arr.flat[idx] = orig - h
        down = _loss_and_grads(model, contexts, cfg, want_grads=False)[0].total
        arr.flat[idx] = orig
        numeric = (up - down) / (2 * h)
        analytic = grads[key].flat[idx]
        rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        worst = max(worst, rel)
    return worst


def reconstruct(model: EmbeddingSet, t: int, which: str) -> np.ndarray:
    """Dense U_t V_t^T (or U_t W_t^T) plus biases; t is 1-based."""
    if not (1 <= t <= model.T):
        raise ConfigError(f"timestep {t} outside [1, {model.T}]")
    if which == "A":
        if model.V is None:
            raise ConfigError(f"variant {model.kind!r} has no adjacency factors")
        Q = model.V_at(t - 1)
        bias_names = ("bA_row", "bA_col")
    elif which == "C":
        if model.W is None:
            raise ConfigError(f"variant {model.kind!r} has no content factors")
        Q = model.W_at(t - 1)
        bias_names = ("bC_row", "bC_col")
    else:
        raise ConfigError(f"which must be 'A' or 'C', got {which!r}")
    out = model.U[t - 1] @ Q.T
    if model.biases is not None:
        out = out + model.biases[bias_names[0]][t - 1][:, None]
        out = out + model.biases[bias_names[1]][t - 1][None, :]
    return out


# -- holdout evaluation -------------------------------------------------------


def make_holdout(bundle: MatrixBundle, fraction: float = 0.1, seed: int = 0) -> dict:
    """Withhold ~fraction of each active row's nonzero cells (rounded, capped
    at nnz-1) and sample as many zero cells per row for the zero-error metric."""
    if not (0 < fraction < 1):
        raise ConfigError(f"holdout fraction must be in (0, 1), got {fraction}")
    entries = {}
    for source, mats in (("A", bundle.A), ("C", bundle.C)):
        for t, sm in enumerate(mats, start=1):
            rng = np.random.default_rng(derive_seed(seed, f"holdout/{source}/{t}"))
            obs_r, obs_c, obs_v, zero_r, zero_c = [], [], [], [], []
            csr = sm.to_csr()
            for i in range(sm.rows):
                if not sm.row_active[i]:
                    continue
                row = csr.getrow(i)
                nz_cols = row.indices[row.data != 0]
                nz_vals = row.data[row.data != 0]
                n_hold = min(int(fraction * len(nz_cols) + 0.5), len(nz_cols) - 1)
                if n_hold < 1:
                    continue
                picked = rng.choice(len(nz_cols), size=n_hold, replace=False)
                empty = np.setdiff1d(np.arange(sm.cols), row.indices, assume_unique=False)
                if len(empty) == 0:
                    continue
                zeros = rng.choice(empty, size=min(n_hold, len(empty)), replace=False)
                obs_r.extend([i] * n_hold)
                obs_c.extend(nz_cols[picked].tolist())
                obs_v.extend(nz_vals[picked].tolist())
                zero_r.extend([i] * len(zeros))
                zero_c.extend(zeros.tolist())
            entries[(t, source)] = {
                "obs_rows": obs_r,
                "obs_cols": obs_c,
                "obs_vals": obs_v,
                "zero_rows": zero_r,
                "zero_cols": zero_c,
            }
    return {"fraction": fraction, "seed": seed, "entries": entries}


def holdout_to_json(holdout: dict) -> dict:
    """JSON-ready copy ((t, source) keys become 't:source' strings)."""
    return {
        "fraction": holdout["fraction"],
        "seed": holdout["seed"],
        "entries": {f"{t}:{source}": cells for (t, source), cells in holdout["entries"].items()},
    }


def holdout_from_json(d: dict) -> dict:
    entries = {}
    for key, cells in d["entries"].items():
        t, source = key.split(":")
        entries[(int(t), source)] = cells
    return {"fraction": d["fraction"], "seed": d["seed"], "entries": entries}


def _predict_cells(model, t, which, rows, cols):
    U = model.U[t - 1]
    Q = model.V_at(t - 1) if which == "A" else model.W_at(t - 1)
    pred = np.einsum("ij,ij->i", U[rows], Q[cols])
    if model.biases is not None:
        names = ("bA_row", "bA_col") if which == "A" else ("bC_row", "bC_col")
        pred = pred + model.biases[names[0]][t - 1][rows] + model.biases[names[1]][t - 1][cols]
    return pred


def eval_reconstruction(model: EmbeddingSet, bundle: MatrixBundle, cfg: ModelConfig, holdout: dict) -> dict:
    """MAE over held-out nonzero cells, over sampled zero cells, and the
    c0-weighted combination of the two."""
    spec = model.spec
    abs_nz, abs_zero = [], []
    for (t, source), cells in holdout["entries"].items():
        if (source == "A" and not spec.has_A) or (source == "C" and not spec.has_C):
            continue
        if cells["obs_rows"]:
            rows = np.asarray(cells["obs_rows"])
            cols = np.asarray(cells["obs_cols"])
            vals = np.asarray(cells["obs_vals"])
            pred = _predict_cells(model, t, source, rows, cols)
            abs_nz.extend(np.abs(vals - pred).tolist())
        if cells["zero_rows"]:
            rows = np.asarray(cells["zero_rows"])
            cols = np.asarray(cells["zero_cols"])
            pred = _predict_cells(model, t, source, rows, cols)
            abs_zero.extend(np.abs(pred).tolist())
    if not abs_nz:
        raise DataError("empty holdout: no held-out nonzero cells for this variant")
    n_nz, n_zero = len(abs_nz), len(abs_zero)
    sum_nz, sum_zero = float(np.sum(abs_nz)), float(np.sum(abs_zero))
    return {
        "nz_mae": sum_nz / n_nz,
        "zero_mae": sum_zero / n_zero if n_zero else 0.0,
        "wmae": (sum_nz + cfg.c0 * sum_zero) / (n_nz + cfg.c0 * n_zero),
        "n_nz": n_nz,
        "n_zero": n_zero,
    }


# -- persistence --------------------------------------------------------------


def _write_cerb(path, arr: np.ndarray) -> None:
    arr = np.atleast_2d(np.asarray(arr))
    with open(path, "wb") as fh:
        fh.write(_CERB_HEADER.pack(CERB_MAGIC, CERB_VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def _read_cerb(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CERB_HEADER.size:
        raise DataError(f"truncated factor file {path}")
    magic, version, rows, cols = _CERB_HEADER.unpack_from(raw)
    if magic != CERB_MAGIC:
        raise DataError(f"bad magic in {path}: {magic!r}")
    if version != CERB_VERSION:
        raise DataError(f"unsupported factor format version {version}")
    body = raw[_CERB_HEADER.size:]
    if len(body) != rows * cols * 4:
        raise DataError(f"factor file {path} has wrong payload size")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)


def save_model(model: EmbeddingSet, cfg: ModelConfig, outdir, extra: dict | None = None) -> None:
    os.makedirs(outdir, exist_ok=True)
    files: dict = {"U": [], "V": [], "W": [], "biases": {}}
    for t, arr in enumerate(model.U, start=1):
        name = f"U_t{t}.cerb"
        _write_cerb(os.path.join(outdir, name), arr)
        files["U"].append(name)
    for label, group in (("V", model.V), ("W", model.W)):
        if group is None:
            files[label] = None
            continue
        for i, arr in enumerate(group, start=1):
            name = f"{label}_t{i}.cerb"
            _write_cerb(os.path.join(outdir, name), arr)
            files[label].append(name)
    if model.biases is not None:
        for bname, vecs in model.biases.items():
            files["biases"][bname] = []
            for t, vec in enumerate(vecs, start=1):
                name = f"{bname}_t{t}.cerb"
                _write_cerb(os.path.join(outdir, name), vec[:, None])
                files["biases"][bname].append(name)
    some_V = model.V[0] if model.V is not None else None
    some_W = model.W[0] if model.W is not None else None
    manifest = {
        "variant": model.kind,
        "k": model.k,
        "T": model.T,
        "m": model.m,
        "n": None if some_V is None else int(some_V.shape[0]),
        "d_vocab": None if some_W is None else int(some_W.shape[0]),
        "lambda1": cfg.lambda1,
        "lambda2": cfg.lambda2,
        "c0": cfg.c0,
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "use_biases": model.biases is not None,
        "files": files,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(canonical_json(manifest) + "\n")


def load_model(indir):
    manifest_path = os.path.join(indir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise MissingArtifactError(f"missing artifact {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    files = manifest["files"]
    U = [_read_cerb(os.path.join(indir, nm)) for nm in files["U"]]
    V = None if files["V"] is None else [_read_cerb(os.path.join(indir, nm)) for nm in files["V"]]
    W = None if files["W"] is None else [_read_cerb(os.path.join(indir, nm)) for nm in files["W"]]
    biases = None
    if manifest["use_biases"]:
        biases = {
            bname: [_read_cerb(os.path.join(indir, nm)).ravel() for nm in names]
            for bname, names in files["biases"].items()
        }
    model = EmbeddingSet(manifest["variant"], U, V, W, biases)
    if model.T != manifest["T"] or model.m != manifest["m"] or model.k != manifest["k"]:
        raise DataError("factor shapes disagree with manifest")
    if V is not None and V[0].shape[0] != manifest["n"]:
        raise DataError("context factor shape disagrees with manifest")
    if W is not None and W[0].shape[0] != manifest["d_vocab"]:
        raise DataError("word factor shape disagrees with manifest")
    return model, manifest
