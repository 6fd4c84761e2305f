"""Subword vocabulary construction and greedy longest-match tokenization.

Vocabularies are built bottom-up: the four reserved specials, then single
characters, then frequency-greedy pair merges, so any corpus yields a
wordpiece-shaped vocabulary (word-initial pieces plain, continuation pieces
prefixed with "##"). Tokenization lowercases, splits on whitespace, and
segments each word left-to-right by the longest matching piece.

Vocab file format: UTF-8, one token per line, line number = id, lines 0-3
fixed to [PAD], [UNK], [CLS], [SEP].
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ContractError, InputError

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3
CONTINUATION_PREFIX = "##"

_WORD_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class Vocab:
    """Immutable token table; ids are contiguous and specials occupy 0-3."""

    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        for i, tok in enumerate(SPECIALS):
            if self.token_to_id.get(tok) != i:
                raise ContractError(f"vocab must map {tok} to id {i}")
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise ContractError("vocab ids must be contiguous from 0")
        inv = [""] * len(self.token_to_id)
        for tok, i in self.token_to_id.items():
            inv[i] = tok
        object.__setattr__(self, "id_to_token", tuple(inv))

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)


@dataclass(frozen=True)
class TokenizedText:
    """Token ids bracketed by [CLS]/[SEP], with source character spans.

    spans is parallel to ids; [CLS] and [SEP] carry None, [UNK] carries the
    span of the word it replaced, every other token the span of its piece.
    """

    ids: tuple[int, ...]
    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int] | None, ...]

    def __post_init__(self):
        if not (len(self.ids) == len(self.tokens) == len(self.spans)):
            raise ContractError("ids, tokens, and spans must be parallel")

    def __len__(self) -> int:
        return len(self.ids)


def _iter_words(documents: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for doc in documents:
        for m in _WORD_RE.finditer(doc.lower()):
            counts[m.group()] += 1
    return counts


def _to_symbols(word: str) -> tuple[str, ...]:
    return (word[0],) + tuple(CONTINUATION_PREFIX + c for c in word[1:])


def _merge_symbol(a: str, b: str) -> str:
    return a + b[len(CONTINUATION_PREFIX):]


def build_vocab(corpus: Iterable[str], target_size: int, min_frequency: int = 1) -> Vocab:
    """Build a wordpiece-shaped vocabulary of at most target_size tokens.

    Specials first, then both forms ("c" and "##c") of every character seen
    at least min_frequency times, then pair merges in descending pair
    frequency until the size budget is spent or no pair clears the
    frequency floor. Ties break lexicographically, so the result is a pure
    function of the corpus.
    """
    if target_size <= len(SPECIALS):
        raise InputError(
            f"target_size {target_size} leaves no room beyond the {len(SPECIALS)} specials"
        )
    word_counts = _iter_words(corpus)
    if not word_counts:
        raise InputError("cannot build a vocabulary from an empty corpus")

    char_counts: Counter = Counter()
    for word, n in word_counts.items():
        for ch in word:
            char_counts[ch] += n

    tokens: list[str] = list(SPECIALS)
    seen = set(tokens)

    def push(tok: str) -> None:
        if tok not in seen and len(tokens) < target_size:
            tokens.append(tok)
            seen.add(tok)

    for ch, n in sorted(char_counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if n < min_frequency:
            continue
        push(ch)
        push(CONTINUATION_PREFIX + ch)

    # Frequency-greedy merging over the word symbol sequences.
    sequences: dict[tuple[str, ...], int] = {
        _to_symbols(w): n for w, n in word_counts.items()
    }
    while len(tokens) < target_size:
        pair_counts: Counter = Counter()
        for seq, n in sequences.items():
            for a, b in zip(seq, seq[1:]):
                pair_counts[(a, b)] += n
        candidates = [
            (n, pair) for pair, n in pair_counts.items()
            if n >= min_frequency and _merge_symbol(*pair) not in seen
        ]
        if not candidates:
            break
        _, best = min(candidates, key=lambda c: (-c[0], c[1]))
        merged = _merge_symbol(*best)
        push(merged)
        new_sequences: dict[tuple[str, ...], int] = {}
        for seq, n in sequences.items():
            out: list[str] = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and (seq[i], seq[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            new_sequences[tuple(out)] = new_sequences.get(tuple(out), 0) + n
        sequences = new_sequences

    return Vocab({tok: i for i, tok in enumerate(tokens)})


def _segment_word(word: str, vocab: Vocab) -> list[tuple[str, int, int]] | None:
    """Greedy longest-match pieces of word as (piece, start, end) or None."""
    pieces: list[tuple[str, int, int]] = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while end > start:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION_PREFIX + piece
            if piece in vocab:
                found = piece
                break
            end -= 1
        if found is None:
            return None
        pieces.append((found, start, end))
        start = end
    return pieces


def tokenize(text: str, vocab: Vocab, max_len: int) -> TokenizedText:
    """Lowercase, whitespace-split, and segment text into subword ids.

    Words with no matchable first piece become [UNK]. The output always
    starts with [CLS], ends with [SEP], and never exceeds max_len; when
    truncating, the trailing [SEP] is preserved.
    """
    if max_len < 3:
        raise ContractError(f"max_len must be at least 3, got {max_len}")
    ids: list[int] = [CLS_ID]
    toks: list[str] = [CLS]
    spans: list[tuple[int, int] | None] = [None]
    for m in _WORD_RE.finditer(text):
        word = m.group().lower()
        offset = m.start()
        exact = len(word) == len(m.group())
        pieces = _segment_word(word, vocab) if exact else (
            [(word, 0, len(m.group()))] if word in vocab else None
        )
        if pieces is None:
            ids.append(UNK_ID)
            toks.append(UNK)
            spans.append((m.start(), m.end()))
        else:
            for piece, s, e in pieces:
                ids.append(vocab.token_to_id[piece])
                toks.append(piece)
                spans.append((offset + s, offset + e))
    ids.append(SEP_ID)
    toks.append(SEP)
    spans.append(None)
    if len(ids) > max_len:
        ids = ids[: max_len - 1] + [SEP_ID]
        toks = toks[: max_len - 1] + [SEP]
        spans = spans[: max_len - 1] + [None]
    return TokenizedText(tuple(ids), tuple(toks), tuple(spans))


def piece_groups(tokens: Sequence[str]) -> list[list[int]]:
    """Indices grouped so continuation pieces stay with their head piece.

    A continuation piece with no head (malformed input) forms its own group.
    """
    groups: list[list[int]] = []
    for i, tok in enumerate(tokens):
        cont = tok.startswith(CONTINUATION_PREFIX) and tok not in SPECIALS
        if cont and groups and not tokens[groups[-1][0]].startswith(CONTINUATION_PREFIX):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def merge_subwords(
    tokens: Sequence[str], weights: Sequence[float]
) -> list[tuple[str, float]]:
    """Merge continuation pieces into whole words, max-pooling their weights."""
    if len(tokens) != len(weights):
        raise ContractError(
            f"{len(tokens)} tokens but {len(weights)} weights"
        )
    merged: list[tuple[str, float]] = []
    for group in piece_groups(tokens):
        word = tokens[group[0]] + "".join(
            tokens[i][len(CONTINUATION_PREFIX):] for i in group[1:]
        )
        merged.append((word, max(float(weights[i]) for i in group)))
    return merged


def save_vocab(vocab: Vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab.id_to_token:
            fh.write(tok + "\n")


def load_vocab(path) -> Vocab:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    while tokens and tokens[-1] == "":
        tokens.pop()
    if len(tokens) < len(SPECIALS) or tuple(tokens[:4]) != SPECIALS:
        raise InputError(f"{path}: vocab file must start with {', '.join(SPECIALS)}")
    if len(set(tokens)) != len(tokens):
        raise InputError(f"{path}: vocab file contains duplicate tokens")
    return Vocab({tok: i for i, tok in enumerate(tokens)})


def vocab_sha256(vocab: Vocab) -> str:
    """Hash of the canonical serialized form, for checkpoint compatibility."""
    payload = "\n".join(vocab.id_to_token).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()
