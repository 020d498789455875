"""Per-timestep social adjacency (A_t) and PPMI content (C_t) matrices.

Both matrix families are extremely sparse (the motivating corpora exceed a
0.99 sparsity ratio), so matrices are stored as sorted (row, col, value)
triplets plus a per-row activity flag. Inactive rows are rows the trainer
masks out: zero adjacency denominator, or no tokens written in the window.
"""

from __future__ import annotations

import json
import math
import os
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import BackgroundModel, Post
from .errors import DataError, MissingArtifactError
from .util import canonical_json

TMSP_MAGIC = b"TMSP"
TMSP_VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")
_RECORD_DTYPE = np.dtype([("row", "<u4"), ("col", "<u4"), ("value", "<f8")])


@dataclass(eq=False)
class SparseMatrix:
    """Triplet-format sparse matrix with a row activity mask.

    Entries are kept sorted by (row, col); values are float64. Entries may
    exist inside inactive rows (the trainer ignores them when masking).
    """

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    row_active: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values)

    @classmethod
    def from_triplets(cls, rows, cols, row_idx, col_idx, values, row_active) -> "SparseMatrix":
        row_idx = np.asarray(row_idx, dtype=np.uint32)
        col_idx = np.asarray(col_idx, dtype=np.uint32)
        values = np.asarray(values, dtype=np.float64)
        row_active = np.asarray(row_active, dtype=bool)
        order = np.lexsort((col_idx, row_idx))
        m = cls(rows, cols, row_idx[order], col_idx[order], values[order], row_active)
        m.validate()
        return m

    @classmethod
    def from_dense(cls, arr, row_active=None) -> "SparseMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        r, c = np.nonzero(arr)
        if row_active is None:
            row_active = np.zeros(arr.shape[0], dtype=bool)
            row_active[r] = True
        return cls.from_triplets(arr.shape[0], arr.shape[1], r, c, arr[r, c], row_active)

    def validate(self) -> None:
        if self.rows < 0 or self.cols < 0:
            raise DataError("negative matrix dimensions")
        if not (len(self.row_idx) == len(self.col_idx) == len(self.values)):
            raise DataError("triplet arrays have mismatched lengths")
        if len(self.row_active) != self.rows:
            raise DataError(
                f"row_active has length {len(self.row_active)}, expected {self.rows}"
            )
        if self.nnz:
            if int(self.row_idx.max()) >= self.rows or int(self.col_idx.max()) >= self.cols:
                raise DataError("entry index out of range")
            keys = self.row_idx.astype(np.int64) * self.cols + self.col_idx
            if len(np.unique(keys)) != self.nnz:
                raise DataError("duplicate (row, col) entry")
        if not np.all(np.isfinite(self.values)):
            raise DataError("non-finite matrix value")

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=np.float64)
        out[self.row_idx, self.col_idx] = self.values
        return out

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, (self.row_idx, self.col_idx)), shape=(self.rows, self.cols)
        )

    def drop_inactive_entries(self) -> "SparseMatrix":
        """Copy without the entries that sit inside inactive rows."""
        keep = self.row_active[self.row_idx]
        return SparseMatrix(
            self.rows,
            self.cols,
            self.row_idx[keep],
            self.col_idx[keep],
            self.values[keep],
            self.row_active.copy(),
        )

    def save(self, path) -> None:
        records = np.empty(self.nnz, dtype=_RECORD_DTYPE)
        records["row"] = self.row_idx
        records["col"] = self.col_idx
        records["value"] = self.values
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(TMSP_MAGIC, TMSP_VERSION, self.rows, self.cols, self.nnz))
            fh.write(records.tobytes())
            fh.write(self.row_active.astype(np.uint8).tobytes())

    @classmethod
    def load(cls, path) -> "SparseMatrix":
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < _HEADER.size:
            raise DataError(f"truncated matrix file {path}")
        magic, version, rows, cols, nnz = _HEADER.unpack_from(raw)
        if magic != TMSP_MAGIC:
            raise DataError(f"bad magic in {path}: {magic!r}")
        if version != TMSP_VERSION:
            raise DataError(f"unsupported matrix format version {version}")
        body = raw[_HEADER.size:]
        want = nnz * _RECORD_DTYPE.itemsize + rows
        if len(body) != want:
            raise DataError(f"matrix file {path} has {len(body)} payload bytes, expected {want}")
        records = np.frombuffer(body[: nnz * _RECORD_DTYPE.itemsize], dtype=_RECORD_DTYPE)
        row_active = np.frombuffer(body[nnz * _RECORD_DTYPE.itemsize:], dtype=np.uint8).astype(bool)
        m = cls(
            rows,
            cols,
            records["row"].astype(np.uint32),
            records["col"].astype(np.uint32),
            records["value"].astype(np.float64),
            row_active,
        )
        m.validate()
        return m


@dataclass(eq=False)
class MatrixBundle:
    """A_t and C_t for every timestep plus the id manifests behind the axes."""

    A: list[SparseMatrix]
    C: list[SparseMatrix]
    roster: list[str]
    context_users: list[str]
    vocab: list[str]

    @property
    def T(self) -> int:
        return len(self.A)

    @property
    def m(self) -> int:
        return len(self.roster)

    @property
    def n(self) -> int:
        return len(self.context_users)

    @property
    def d_vocab(self) -> int:
        return len(self.vocab)

    def validate(self) -> None:
        if self.T < 1:
            raise DataError("bundle must have T >= 1")
        if len(self.C) != self.T:
            raise DataError(f"{len(self.A)} adjacency vs {len(self.C)} content matrices")
        for t, (a, c) in enumerate(zip(self.A, self.C), start=1):
            if (a.rows, a.cols) != (self.m, self.n):
                raise DataError(f"A_t{t} is {a.rows}x{a.cols}, expected {self.m}x{self.n}")
            if (c.rows, c.cols) != (self.m, self.d_vocab):
                raise DataError(f"C_t{t} is {c.rows}x{c.cols}, expected {self.m}x{self.d_vocab}")


def build_adjacency(bucket: list[Post], roster: list[str], context_roster: list[str]) -> SparseMatrix:
    """Thread co-participation matrix, L1-normalized per row.

    a_ij = |threads(i) ∩ threads(j)| / Σ_y |threads(i) ∩ threads(y)| over
    context users y ≠ i, all within this bucket. Rows with a zero denominator
    are inactive.
    """
    if not roster or not context_roster:
        raise DataError("rosters must be nonempty")
    m, n = len(roster), len(context_roster)
    col_of = {u: j for j, u in enumerate(context_roster)}
    roster_set = set(roster)
    threads_of: dict[str, set] = defaultdict(set)
    posters_of: dict[str, set] = defaultdict(set)
    for post in bucket:
        posters_of[post.thread_id].add(post.user_id)
        if post.user_id in roster_set:
            threads_of[post.user_id].add(post.thread_id)

    row_idx, col_idx, vals = [], [], []
    row_active = np.zeros(m, dtype=bool)
    for i, user in enumerate(roster):
        shared = Counter()
        for thread in threads_of.get(user, ()):
            for other in posters_of[thread]:
                if other == user:
                    continue
                j = col_of.get(other)
                if j is not None:
                    shared[j] += 1
        denom = sum(shared.values())
        if denom == 0:
            continue
        row_active[i] = True
        for j in sorted(shared):
            row_idx.append(i)
            col_idx.append(j)
            vals.append(shared[j] / denom)
    return SparseMatrix.from_triplets(m, n, row_idx, col_idx, vals, row_active)


def build_content(
    bucket: list[Post], roster: list[str], vocab: list[str], bg: BackgroundModel
) -> SparseMatrix:
    """Positive PMI of each user's in-window word usage against the background.

    entry (i, z) = max(0, ln(P(z|i) / P_bg(z))) with P(z|i) = count of z over
    user i's total token count in the bucket (all tokens, in-vocab or not).
    Zeros are left implicit; users with no tokens are inactive.
    """
    if not vocab:
        raise DataError("vocabulary is empty")
    if not roster:
        raise DataError("roster is empty")
    m, d = len(roster), len(vocab)
    col_of = {w: z for z, w in enumerate(vocab)}
    roster_set = set(roster)
    counts: dict[str, Counter] = defaultdict(Counter)
    for post in bucket:
        if post.user_id in roster_set:
            counts[post.user_id].update(post.tokens)

    row_idx, col_idx, vals = [], [], []
    row_active = np.zeros(m, dtype=bool)
    for i, user in enumerate(roster):
        user_counts = counts.get(user)
        if not user_counts:
            continue
        total = sum(user_counts.values())
        if total == 0:
            continue
        row_active[i] = True
        for word, c in user_counts.items():
            z = col_of.get(word)
            if z is None:
                continue
            pmi = math.log((c / total) / bg.prob(word))
            if pmi > 0:
                row_idx.append(i)
                col_idx.append(z)
                vals.append(pmi)
    return SparseMatrix.from_triplets(m, d, row_idx, col_idx, vals, row_active)


def build_bundle(
    buckets: list[list[Post]],
    roster: list[str],
    context_roster: list[str],
    vocab: list[str],
    bg: BackgroundModel,
) -> MatrixBundle:
    if not buckets:
        raise DataError("no timestep buckets")
    bundle = MatrixBundle(
        A=[build_adjacency(b, roster, context_roster) for b in buckets],
        C=[build_content(b, roster, vocab, bg) for b in buckets],
        roster=list(roster),
        context_users=list(context_roster),
        vocab=list(vocab),
    )
    bundle.validate()
    return bundle


def aggregate_adjacency(mats: list[SparseMatrix]) -> SparseMatrix:
    """Sum matrices over time, then re-normalize each row to sum 1."""
    m, n = mats[0].rows, mats[0].cols
    row_idx = np.concatenate([sm.row_idx.astype(np.int64) for sm in mats])
    col_idx = np.concatenate([sm.col_idx.astype(np.int64) for sm in mats])
    values = np.concatenate([sm.values for sm in mats])
    if len(values) == 0:
        return SparseMatrix.from_triplets(m, n, [], [], [], np.zeros(m, dtype=bool))
    keys = row_idx * n + col_idx
    uniq, inverse = np.unique(keys, return_inverse=True)
    sums = np.zeros(len(uniq))
    np.add.at(sums, inverse, values)
    rows = uniq // n
    cols = uniq % n
    row_totals = np.zeros(m)
    np.add.at(row_totals, rows, sums)
    active = row_totals > 0
    return SparseMatrix.from_triplets(m, n, rows, cols, sums / row_totals[rows], active)


def aggregate_bundle(
    bundle: MatrixBundle, buckets: list[list[Post]], bg: BackgroundModel
) -> MatrixBundle:
    """Collapse the time axis: adjacency summed and re-normalized, content
    re-scored from token counts pooled across every bucket."""
    pooled = [post for bucket in buckets for post in bucket]
    agg = MatrixBundle(
        A=[aggregate_adjacency(bundle.A)],
        C=[build_content(pooled, bundle.roster, bundle.vocab, bg)],
        roster=bundle.roster,
        context_users=bundle.context_users,
        vocab=bundle.vocab,
    )
    agg.validate()
    return agg


# -- bundle persistence -------------------------------------------------------


def _write_lines(path, items) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(item + "\n")


def _read_lines(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def save_bundle(bundle: MatrixBundle, outdir, extra: dict | None = None) -> None:
    """Write the bundle as one .tmsp file per matrix plus id lists and a manifest."""
    os.makedirs(outdir, exist_ok=True)
    _write_lines(os.path.join(outdir, "roster.txt"), bundle.roster)
    _write_lines(os.path.join(outdir, "context_users.txt"), bundle.context_users)
    _write_lines(os.path.join(outdir, "vocab.txt"), bundle.vocab)
    a_files, c_files = [], []
    for t in range(bundle.T):
        a_name, c_name = f"A_t{t + 1}.tmsp", f"C_t{t + 1}.tmsp"
        bundle.A[t].save(os.path.join(outdir, a_name))
        bundle.C[t].save(os.path.join(outdir, c_name))
        a_files.append(a_name)
        c_files.append(c_name)
    manifest = {
        "T": bundle.T,
        "m": bundle.m,
        "n": bundle.n,
        "d_vocab": bundle.d_vocab,
        "adjacency": a_files,
        "content": c_files,
        "roster": "roster.txt",
        "context_users": "context_users.txt",
        "vocab": "vocab.txt",
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(outdir, "bundle.json"), "w", encoding="utf-8") as fh:
        fh.write(canonical_json(manifest) + "\n")


def load_bundle(indir) -> MatrixBundle:
    manifest_path = os.path.join(indir, "bundle.json")
    if not os.path.exists(manifest_path):
        raise MissingArtifactError(f"missing artifact {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("roster", "context_users", "vocab"):
        if not os.path.exists(os.path.join(indir, manifest[key])):
            raise MissingArtifactError(f"missing artifact {os.path.join(indir, manifest[key])}")
    bundle = MatrixBundle(
        A=[SparseMatrix.load(os.path.join(indir, nm)) for nm in manifest["adjacency"]],
        C=[SparseMatrix.load(os.path.join(indir, nm)) for nm in manifest["content"]],
        roster=_read_lines(os.path.join(indir, manifest["roster"])),
        context_users=_read_lines(os.path.join(indir, manifest["context_users"])),
        vocab=_read_lines(os.path.join(indir, manifest["vocab"])),
    )
    bundle.validate()
    if (bundle.m, bundle.n, bundle.d_vocab, bundle.T) != (
        manifest["m"],
        manifest["n"],
        manifest["d_vocab"],
        manifest["T"],
    ):
        raise DataError("bundle dimensions disagree with manifest")
    return bundle
