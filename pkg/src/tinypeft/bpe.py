"""Byte-level BPE tokenizer with byte fallback and atomic domain terms.

Ids 0..255 are the raw bytes, so every UTF-8 string round-trips exactly.
Specials (BOS/EOS/PAD) and user-supplied domain terms sit above the byte
range; merges fill the remaining vocabulary. Merge selection is
deterministic: highest pair count, ties broken by the lexicographically
smaller left token bytes, then right.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .errors import ConfigError

TOKENIZER_VERSION = 1
N_BYTES = 256


@dataclass
class Specials:
    bos: int = 256
    eos: int = 257
    pad: int = 258


@dataclass
class TokenizerModel:
    """kind=byte_fallback_bpe; persisted as a JSON document."""

    specials: Specials = field(default_factory=Specials)
    # id -> raw bytes of the token
    vocab: dict[int, bytes] = field(default_factory=dict)
    # (left_id, right_id) -> new_id, in application order
    merges: list[tuple[int, int, int]] = field(default_factory=list)
    domain_terms: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.vocab:
            self.vocab = {i: bytes([i]) for i in range(N_BYTES)}
        self._ranks = {(l, r): i for i, (l, r, _) in enumerate(self.merges)}
        self._merge_new = {(l, r): n for l, r, n in self.merges}
        self._term_ids = {}
        for t in self.domain_terms:
            for tid, bs in self.vocab.items():
                if bs == t.encode("utf-8") and tid >= N_BYTES:
                    self._term_ids[t] = tid

    @property
    def vocab_size(self) -> int:
        return max(max(self.vocab), self.specials.pad) + 1

    # -- encoding ------------------------------------------------------------

    def _bpe_segment(self, ids: list[int]) -> list[int]:
        while len(ids) >= 2:
            best_rank, best_pair = None, None
            for i in range(len(ids) - 1):
                r = self._ranks.get((ids[i], ids[i + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank, best_pair = r, (ids[i], ids[i + 1])
            if best_pair is None:
                break
            new_id = self._merge_new[best_pair]
            out, i = [], 0
            while i < len(ids):
                if i < len(ids) - 1 and (ids[i], ids[i + 1]) == best_pair:
                    out.append(new_id)
                    i += 2
                else:
                    out.append(ids[i])
                    i += 1
            ids = out
        return ids

    def _split_terms(self, text: str) -> list[tuple[bool, str]]:
        """Cut text into (is_term, piece) runs, leftmost-longest term match."""
        if not self._term_ids:
            return [(False, text)] if text else []
        terms = sorted(self._term_ids, key=len, reverse=True)
        pieces: list[tuple[bool, str]] = []
        i, start = 0, 0
        while i < len(text):
            hit = next((t for t in terms if text.startswith(t, i)), None)
            if hit is not None:
                if start < i:
                    pieces.append((False, text[start:i]))
                pieces.append((True, hit))
                i += len(hit)
                start = i
            else:
                i += 1
        if start < len(text):
            pieces.append((False, text[start:]))
        return pieces

    def tokenize(self, text: str) -> list[int]:
        ids: list[int] = []
        for is_term, piece in self._split_terms(text):
            if is_term:
                ids.append(self._term_ids[piece])
            else:
                ids.extend(self._bpe_segment(list(piece.encode("utf-8"))))
        return ids

    def detokenize(self, ids: list[int]) -> str:
        special = {self.specials.bos, self.specials.eos, self.specials.pad}
        buf = b"".join(self.vocab[i] for i in ids if i not in special)
        # byte fallback means generated ids can form invalid UTF-8; valid
        # sequences still round-trip exactly
        return buf.decode("utf-8", errors="replace")

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "version": TOKENIZER_VERSION,
            "kind": "byte_fallback_bpe",
            "specials": {"bos": self.specials.bos, "eos": self.specials.eos, "pad": self.specials.pad},
            "vocab": {str(i): bs.hex() for i, bs in sorted(self.vocab.items())},
            "merges": [[l, r, n] for l, r, n in self.merges],
            "domain_terms": list(self.domain_terms),
        }
        return json.dumps(doc, ensure_ascii=False, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TokenizerModel":
        doc = json.loads(text)
        if doc.get("version") != TOKENIZER_VERSION:
            raise ConfigError(f"unsupported tokenizer version {doc.get('version')!r}")
        sp = doc["specials"]
        return cls(
            specials=Specials(bos=sp["bos"], eos=sp["eos"], pad=sp["pad"]),
            vocab={int(i): bytes.fromhex(h) for i, h in doc["vocab"].items()},
            merges=[tuple(m) for m in doc["merges"]],
            domain_terms=doc["domain_terms"],
        )

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "TokenizerModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def train_bpe(
    corpus: list[str],
    target_vocab: int,
    domain_terms: list[str] | None = None,
) -> TokenizerModel:
    """Train byte-level BPE until the vocabulary reaches target_vocab.

    Domain terms become atomic tokens before any merge is learned, so
    tokenization always prefers them over a merge decomposition. Training
    stops early if no adjacent pair repeats.
    """
    domain_terms = list(domain_terms or [])
    specials = Specials()
    floor = N_BYTES + 3 + len(domain_terms)
    if target_vocab < floor:
        raise ConfigError(
            f"target_vocab {target_vocab} < minimum {floor} "
            f"(256 bytes + 3 specials + {len(domain_terms)} domain terms)"
        )

    tok = TokenizerModel(specials=specials, domain_terms=domain_terms)
    next_id = specials.pad + 1
    for term in domain_terms:
        tok.vocab[next_id] = term.encode("utf-8")
        next_id += 1
    tok.__post_init__()  # pick up the term ids

    # working sequences with terms already atomized
    seqs: list[list[int]] = []
    for line in corpus:
        ids: list[int] = []
        for is_term, piece in tok._split_terms(line):
            if is_term:
                ids.append(tok._term_ids[piece])
            else:
                ids.extend(piece.encode("utf-8"))
        if ids:
            seqs.append(ids)

    term_ids = set(tok._term_ids.values())
    while next_id < target_vocab:
        counts: Counter[tuple[int, int]] = Counter()
        for seq in seqs:
            for a, b in zip(seq, seq[1:]):
                if a in term_ids or b in term_ids:
                    continue  # terms stay atomic
                counts[(a, b)] += 1
        if not counts:
            break
        best = min(
            counts.items(),
            key=lambda kv: (-kv[1], tok.vocab[kv[0][0]], tok.vocab[kv[0][1]]),
        )
        if best[1] < 2:
            break
        pair = best[0]
        tok.vocab[next_id] = tok.vocab[pair[0]] + tok.vocab[pair[1]]
        tok.merges.append((pair[0], pair[1], next_id))
        seqs = [_apply_merge(seq, pair, next_id) for seq in seqs]
        next_id += 1

    tok.__post_init__()
    return tok


def _apply_merge(seq: list[int], pair: tuple[int, int], new_id: int) -> list[int]:
    out, i = [], 0
    while i < len(seq):
        if i < len(seq) - 1 and (seq[i], seq[i + 1]) == pair:
            out.append(new_id)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out
