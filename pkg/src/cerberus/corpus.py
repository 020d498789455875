"""Load, window, and filter thread-structured conversation corpora.

The canonical interchange format is JSONL, one post per line with fields
{user_id, thread_id, timestamp, community, category, tokens}. Rosters and
vocabularies derived here are ordered deterministically; their positions are
the matrix row/column ids used everywhere downstream.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import ConfigError, DataError

REQUIRED_FIELDS = ("user_id", "thread_id", "timestamp", "community", "category", "tokens")


@dataclass(frozen=True)
class Post:
    """One authored message."""

    user_id: str
    thread_id: str
    timestamp: int
    community: str
    category: str
    tokens: tuple[str, ...]

    def validate(self) -> None:
        if not self.user_id:
            raise DataError("post has empty user_id")
        if not self.thread_id:
            raise DataError("post has empty thread_id")
        if self.timestamp < 0:
            raise DataError(f"post has negative timestamp {self.timestamp}")

    def to_record(self) -> dict:
        return {
            "user_id": self.user_id,
            "thread_id": self.thread_id,
            "timestamp": self.timestamp,
            "community": self.community,
            "category": self.category,
            "tokens": list(self.tokens),
        }


@dataclass(frozen=True)
class TimeWindowing:
    """Half-open windows [start + t*length, start + (t+1)*length) for t in [0, T)."""

    start: int
    window_length: int
    T: int

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.window_length <= 0:
            raise ConfigError(f"window_length must be > 0, got {self.window_length}")

    @property
    def end(self) -> int:
        return self.start + self.T * self.window_length

    def window_of(self, timestamp: int) -> int:
        if not (self.start <= timestamp < self.end):
            raise DataError(
                f"timestamp {timestamp} outside [{self.start}, {self.end})"
            )
        return (timestamp - self.start) // self.window_length


@dataclass(frozen=True)
class FilterConfig:
    min_active_timesteps: int = 3
    n_context_users: int = 10_000
    min_word_users: int = 20

    def __post_init__(self):
        for name in ("min_active_timesteps", "n_context_users", "min_word_users"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass
class CorpusStore:
    posts: list[Post] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.posts)


class BackgroundModel:
    """Unigram word probabilities estimated from a background corpus.

    Words absent from the background get a fixed add-one-style floor of
    1/(N+1) so PMI stays finite.
    """

    def __init__(self, counts: dict[str, int]):
        total = sum(counts.values())
        if total <= 0:
            raise DataError("background corpus is empty")
        self.total_token_count = total
        self.probs = {w: c / total for w, c in counts.items()}
        self.oov_floor = 1.0 / (total + 1)

    def prob(self, word: str) -> float:
        return self.probs.get(word, self.oov_floor)


def _post_from_record(rec: dict, line_no: int) -> Post:
    for name in REQUIRED_FIELDS:
        if name not in rec:
            raise DataError(f"missing field {name} at line {line_no}")
    tokens = rec["tokens"]
    if not isinstance(tokens, list) or any(not isinstance(t, str) for t in tokens):
        raise DataError(f"tokens must be a list of strings at line {line_no}")
    post = Post(
        user_id=str(rec["user_id"]),
        thread_id=str(rec["thread_id"]),
        timestamp=int(rec["timestamp"]),
        community=str(rec["community"]),
        category=str(rec["category"]),
        tokens=tuple(t.lower() for t in tokens),
    )
    post.validate()
    return post


def load_corpus(path, format: str = "jsonl") -> CorpusStore:
    """Parse a corpus file into a CorpusStore. Only JSONL is supported."""
    if format != "jsonl":
        raise ConfigError(f"unsupported corpus format {format!r}; expected 'jsonl'")
    posts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed line {line_no}: {exc.msg}") from exc
            posts.append(_post_from_record(rec, line_no))
    return CorpusStore(posts=posts)


def save_corpus(posts, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for post in posts:
            fh.write(json.dumps(post.to_record(), sort_keys=True) + "\n")


def partition_timesteps(store: CorpusStore, windowing: TimeWindowing) -> list[list[Post]]:
    """Assign every post to exactly one window bucket, in chronological order.

    Posts on a window boundary fall into the later window (half-open rule).
    """
    buckets: list[list[Post]] = [[] for _ in range(windowing.T)]
    for post in store.posts:
        try:
            t = windowing.window_of(post.timestamp)
        except DataError as exc:
            raise DataError(
                f"post by {post.user_id!r} in thread {post.thread_id!r}: {exc}"
            ) from exc
        buckets[t].append(post)
    return buckets


def filter_users(buckets: list[list[Post]], cfg: FilterConfig) -> list[str]:
    """Users active (>= 1 post) in at least min_active_timesteps distinct buckets,
    ordered lexicographically."""
    if not buckets:
        raise DataError("no buckets to filter")
    active_steps: dict[str, set[int]] = defaultdict(set)
    for t, bucket in enumerate(buckets):
        for post in bucket:
            active_steps[post.user_id].add(t)
    roster = sorted(
        u for u, steps in active_steps.items() if len(steps) >= cfg.min_active_timesteps
    )
    if not roster:
        raise DataError("no users survive filtering")
    return roster


def select_context_users(
    buckets: list[list[Post]], roster: list[str], cfg: FilterConfig
) -> list[str]:
    """Top-n roster users by total post count across all buckets.

    Ties broken lexicographically; the returned roster is ordered
    lexicographically so column ids are stable.
    """
    if cfg.n_context_users > len(roster):
        raise ConfigError(
            f"n_context_users={cfg.n_context_users} exceeds roster size {len(roster)}"
        )
    counts = Counter()
    roster_set = set(roster)
    for bucket in buckets:
        for post in bucket:
            if post.user_id in roster_set:
                counts[post.user_id] += 1
    ranked = sorted(roster, key=lambda u: (-counts[u], u))
    return sorted(ranked[: cfg.n_context_users])


def build_vocab(buckets: list[list[Post]], roster: list[str], cfg: FilterConfig) -> list[str]:
    """Words used by strictly more than min_word_users distinct roster users,
    counted globally across buckets; lexicographic order."""
    roster_set = set(roster)
    users_per_word: dict[str, set[str]] = defaultdict(set)
    for bucket in buckets:
        for post in bucket:
            if post.user_id not in roster_set:
                continue
            for tok in set(post.tokens):
                users_per_word[tok].add(post.user_id)
    vocab = sorted(w for w, users in users_per_word.items() if len(users) > cfg.min_word_users)
    if not vocab:
        raise DataError("vocabulary is empty after filtering")
    return vocab


def build_background(path) -> BackgroundModel:
    """Estimate unigram probabilities from a background corpus.

    Accepts either the JSONL post format (tokens fields are counted) or a
    plain whitespace-separated token stream.
    """
    counts: Counter = Counter()
    with open(path, "r", encoding="utf-8") as fh:
        first = None
        for line in fh:
            if line.strip():
                first = line
                break
        if first is None:
            raise DataError("background corpus is empty")
        is_jsonl = first.lstrip().startswith("{")

        def consume(raw: str, line_no: int) -> None:
            if not raw.strip():
                return
            if is_jsonl:
                try:
                    rec = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise DataError(f"malformed line {line_no}: {exc.msg}") from exc
                toks = rec.get("tokens", [])
                counts.update(t.lower() for t in toks)
            else:
                counts.update(t.lower() for t in raw.split())

        consume(first, 1)
        for line_no, line in enumerate(fh, start=2):
            consume(line, line_no)
    return BackgroundModel(dict(counts))


# -- derived per-bucket tables consumed downstream ---------------------------


def activity_table(buckets: list[list[Post]], roster: list[str]) -> list[list[bool]]:
    """activity[t][i] is True iff roster user i posted in bucket t."""
    index = {u: i for i, u in enumerate(roster)}
    table = [[False] * len(roster) for _ in buckets]
    for t, bucket in enumerate(buckets):
        for post in bucket:
            i = index.get(post.user_id)
            if i is not None:
                table[t][i] = True
    return table


def collect_labels(
    buckets: list[list[Post]], roster: list[str], level: str
) -> dict[tuple[str, int], set[str]]:
    """Label sets per (user_id, timestep), 1-based timesteps.

    level 'community' uses the post community field, 'category' the category
    field. A user's label set at t is every label they posted under in bucket t.
    """
    if level not in ("community", "category"):
        raise ConfigError(f"unknown label level {level!r}")
    roster_set = set(roster)
    labels: dict[tuple[str, int], set[str]] = defaultdict(set)
    for t, bucket in enumerate(buckets):
        for post in bucket:
            if post.user_id in roster_set:
                labels[(post.user_id, t + 1)].add(getattr(post, level))
    return dict(labels)


def community_engagement(
    bucket: list[Post], roster: list[str]
) -> dict[str, Counter]:
    """Per-user post counts per community within one bucket."""
    roster_set = set(roster)
    engagement: dict[str, Counter] = defaultdict(Counter)
    for post in bucket:
        if post.user_id in roster_set:
            engagement[post.user_id][post.community] += 1
    return dict(engagement)
