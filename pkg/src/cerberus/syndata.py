"""Synthetic thread corpora with planted communities and temporal drift.

The generator plants G communities. Per time window each community owns a
fixed set of threads; every post targets the author's own community with
probability 1 - crossover, otherwise a foreign community (uniform by default,
overridable per pair). Post text is a token bag drawn from a per-community
multinomial: shared words at weight 1, the community's signature words at
signature_boost. Drift events (user migration, word adoption, community
splinters) modify membership and emission profiles from their event window
onward. Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Post, TimeWindowing
from .errors import ConfigError, DataError

WINDOW_LENGTH = 100

# Splinter emission overshoots the configured frequency factor so finite
# samples reliably exceed it, not merely match it in expectation.
SPLINTER_HEADROOM = 1.2

DRIFT_KINDS = ("user_migration", "word_adoption", "splinter")


@dataclass(frozen=True)
class DriftEvent:
    kind: str
    t_star: int
    params: dict

    def validate(self, cfg: "SynthConfig") -> None:
        if self.kind not in DRIFT_KINDS:
            raise ConfigError(f"unknown drift kind {self.kind!r}; expected one of {DRIFT_KINDS}")
        if not (1 <= self.t_star <= cfg.T):
            raise ConfigError(f"drift t_star {self.t_star} outside [1, {cfg.T}]")
        needed = {
            "user_migration": ("from_community", "to_community", "n_users"),
            "word_adoption": ("community", "word", "boost"),
            "splinter": ("community", "n_users", "lexicon", "factor"),
        }[self.kind]
        for key in needed:
            if key not in self.params:
                raise ConfigError(f"{self.kind} event missing parameter {key!r}")


@dataclass
class SynthConfig:
    G: int = 3
    users_per_community: int = 30
    T: int = 6
    threads_per_window: int = 6
    posts_per_thread: int = 10
    tokens_per_post: int = 10
    crossover: float = 0.1
    crossover_overrides: dict = field(default_factory=dict)  # "c1:c2" -> rate
    shared_words: int = 20
    signature_words: int = 5
    signature_boost: float = 10.0
    signature_lists: dict = field(default_factory=dict)  # community -> explicit word list
    category_of: dict = field(default_factory=dict)  # community -> category label
    drift_events: list = field(default_factory=list)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        events = [
            e if isinstance(e, DriftEvent) else DriftEvent(e["kind"], e["t_star"], e["params"])
            for e in d.pop("drift_events", [])
        ]
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(drift_events=events, **d)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "drift_events"}
        d["drift_events"] = [
            {"kind": e.kind, "t_star": e.t_star, "params": e.params} for e in self.drift_events
        ]
        return d

    def validate(self) -> None:
        if self.G < 1:
            raise ConfigError(f"G must be >= 1, got {self.G}")
        if self.users_per_community < 1:
            raise ConfigError("users_per_community must be >= 1")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.threads_per_window < 1:
            raise ConfigError("infeasible config: zero threads per window")
        if self.posts_per_thread < 1:
            raise ConfigError("posts_per_thread must be >= 1")
        if not (0.0 <= self.crossover <= 1.0):
            raise ConfigError(f"crossover must be in [0, 1], got {self.crossover}")
        if self.signature_boost < 1.0:
            raise ConfigError("signature_boost must be >= 1")
        if self.shared_words < 1:
            raise ConfigError("need at least one shared word")
        for event in self.drift_events:
            event.validate(self)

    def communities(self) -> list[str]:
        return [f"c{g + 1}" for g in range(self.G)]

    def users_of(self, community: str) -> list[str]:
        return [f"{community}_u{i:03d}" for i in range(self.users_per_community)]

    def windowing(self) -> TimeWindowing:
        return TimeWindowing(start=0, window_length=WINDOW_LENGTH, T=self.T)


@dataclass
class SynthResult:
    posts: list[Post]
    labels: dict  # (user_id, t) -> {home group}
    drift_log: list[dict]
    groups: list[str]  # base communities then splinter groups
    vocab: list[str]
    home: dict  # user_id -> list of per-t home group

    def to_ground_truth(self, cfg: SynthConfig) -> dict:
        return {
            "config": cfg.to_dict(),
            "groups": self.groups,
            "vocab": self.vocab,
            "home": self.home,
            "drift_log": self.drift_log,
        }


def _signature_lists(cfg: SynthConfig) -> dict:
    lists = {}
    for comm in cfg.communities():
        if comm in cfg.signature_lists:
            lists[comm] = list(cfg.signature_lists[comm])
        else:
            lists[comm] = [f"sig_{comm}_w{i}" for i in range(cfg.signature_words)]
    return lists


def _build_vocab(cfg: SynthConfig, signatures: dict) -> list[str]:
    vocab: list[str] = [f"shared_w{i}" for i in range(cfg.shared_words)]
    seen = set(vocab)
    for comm in cfg.communities():
        for word in signatures[comm]:
            if word not in seen:
                vocab.append(word)
                seen.add(word)
    for event in cfg.drift_events:
        extra = [event.params["word"]] if event.kind == "word_adoption" else []
        if event.kind == "splinter":
            extra = list(event.params["lexicon"])
        for word in extra:
            if word not in seen:
                vocab.append(word)
                seen.add(word)
    return vocab


def _membership(cfg: SynthConfig) -> tuple[dict, list[str], list[dict]]:
    """Per-user home group at every t, the full group list, and the drift log."""
    home = {}
    for comm in cfg.communities():
        for user in cfg.users_of(comm):
            home[user] = [comm] * cfg.T
    groups = list(cfg.communities())
    log = []
    for event in cfg.drift_events:
        if event.kind == "user_migration":
            src, dst = event.params["from_community"], event.params["to_community"]
            if src not in groups or dst not in groups:
                raise ConfigError(f"migration references unknown community {src!r} or {dst!r}")
            movers = event.params.get("users") or cfg.users_of(src)[: event.params["n_users"]]
            for user in movers:
                for t in range(event.t_star - 1, cfg.T):
                    home[user][t] = dst
            log.append(
                {"kind": "user_migration", "t_star": event.t_star,
                 "users": list(movers), "from_community": src, "to_community": dst}
            )
        elif event.kind == "splinter":
            parent = event.params["community"]
            if parent not in cfg.communities():
                raise ConfigError(f"splinter references unknown community {parent!r}")
            label = f"{parent}_splinter"
            if label in groups:
                raise ConfigError(f"duplicate splinter of {parent!r}")
            groups.append(label)
            movers = event.params.get("users") or cfg.users_of(parent)[: event.params["n_users"]]
            for user in movers:
                for t in range(event.t_star - 1, cfg.T):
                    home[user][t] = label
            log.append(
                {"kind": "splinter", "t_star": event.t_star, "users": list(movers),
                 "community": parent, "label": label,
                 "lexicon": list(event.params["lexicon"]),
                 "factor": event.params["factor"]}
            )
        elif event.kind == "word_adoption":
            comm = event.params["community"]
            if comm not in cfg.communities():
                raise ConfigError(f"adoption references unknown community {comm!r}")
            log.append(
                {"kind": "word_adoption", "t_star": event.t_star, "community": comm,
                 "word": event.params["word"], "boost": event.params["boost"]}
            )
    return home, groups, log


def _emission_probs(cfg, group, t, signatures, vocab_index) -> np.ndarray:
    """Token distribution for members of `group` during window t (1-based)."""
    d = len(vocab_index)
    weights = np.zeros(d)
    for i in range(cfg.shared_words):
        weights[vocab_index[f"shared_w{i}"]] = 1.0
    parent = group[: -len("_splinter")] if group.endswith("_splinter") else group
    for word in signatures[parent]:
        weights[vocab_index[word]] = cfg.signature_boost
    for event in cfg.drift_events:
        if event.kind == "word_adoption" and event.params["community"] == parent and t >= event.t_star:
            weights[vocab_index[event.params["word"]]] = event.params["boost"]
    probs = weights / weights.sum()
    if parent == group:
        return probs
    # splinter: scale the lexicon words' probabilities to overshoot the
    # configured frequency factor relative to the parent distribution
    spl = next(
        e for e in cfg.drift_events
        if e.kind == "splinter" and e.params["community"] == parent
    )
    lex_ids = []
    for word in spl.params["lexicon"]:
        z = vocab_index[word]
        if probs[z] == 0:
            raise DataError(
                f"splinter lexicon word {word!r} absent from parent emission profile"
            )
        lex_ids.append(z)
    out = np.zeros(d)
    out[lex_ids] = SPLINTER_HEADROOM * spl.params["factor"] * probs[lex_ids]
    lex_mass = out[lex_ids].sum()
    if lex_mass >= 0.9:
        raise DataError(
            f"infeasible splinter: lexicon would claim {lex_mass:.2f} of all tokens"
        )
    rest = np.setdiff1d(np.arange(d), lex_ids)
    out[rest] = probs[rest] * (1.0 - lex_mass) / probs[rest].sum()
    return out


def _target_probs(active: list[str], group: str, cfg: SynthConfig) -> np.ndarray:
    """Probability of a post by `group` members landing in each active group."""
    k = len(active)
    if k == 1:
        return np.ones(1)
    probs = np.zeros(k)
    base = cfg.crossover / (k - 1)
    for j, other in enumerate(active):
        if other == group:
            continue
        key = ":".join(sorted([group, other]))
        probs[j] = cfg.crossover_overrides.get(key, base)
    foreign = probs.sum()
    if foreign > 1.0 + 1e-12:
        raise ConfigError(f"crossover rates for {group!r} sum to {foreign:.3f} > 1")
    probs[active.index(group)] = 1.0 - foreign
    return probs


def generate(cfg: SynthConfig) -> SynthResult:
    """Produce the corpus, per-(user, t) home labels, and the drift log."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    signatures = _signature_lists(cfg)
    for comm, words in signatures.items():
        if not words:
            raise ConfigError(f"community {comm!r} has an empty signature list")
    vocab = _build_vocab(cfg, signatures)
    vocab_index = {w: z for z, w in enumerate(vocab)}
    vocab_arr = np.array(vocab)
    home, groups, drift_log = _membership(cfg)

    posts: list[Post] = []
    labels: dict = {}
    for t in range(1, cfg.T + 1):
        # splinter groups only exist (threads, members) from their event window
        active = [g for g in groups if any(home[u][t - 1] == g for u in home)]
        members = {g: sorted(u for u in home if home[u][t - 1] == g) for g in active}
        threads = {
            g: [f"w{t}_{g}_th{r}" for r in range(cfg.threads_per_window)] for g in active
        }
        emission = {g: _emission_probs(cfg, g, t, signatures, vocab_index) for g in active}
        targeting = {g: _target_probs(active, g, cfg) for g in active}
        for user in home:
            labels[(user, t)] = {home[user][t - 1]}

        counter = 0
        for g in active:
            n_posts = cfg.threads_per_window * cfg.posts_per_thread
            for i in range(n_posts):
                author = members[g][i % len(members[g])]
                target = active[rng.choice(len(active), p=targeting[g])]
                thread = threads[target][rng.integers(0, cfg.threads_per_window)]
                tokens = tuple(
                    str(w)
                    for w in vocab_arr[
                        rng.choice(len(vocab), size=cfg.tokens_per_post, p=emission[g])
                    ]
                )
                posts.append(
                    Post(
                        user_id=author,
                        thread_id=thread,
                        timestamp=(t - 1) * WINDOW_LENGTH + counter % WINDOW_LENGTH,
                        community=target,
                        category=cfg.category_of.get(target, target),
                        tokens=tokens,
                    )
                )
                counter += 1
    return SynthResult(posts, labels, drift_log, groups, vocab, home)


def background_tokens(vocab: list[str]) -> list[str]:
    """Exact-uniform background: every vocabulary word exactly once."""
    return list(vocab)
