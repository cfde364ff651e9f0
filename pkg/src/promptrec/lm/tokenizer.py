"""Byte-pair tokenizer with atomic ID tokens and enforced digit splitting.

Merges are learned from train query texts only, but the alphabet also covers
every character of the active registry's ID strings, so encode/decode is an
identity on any ID the registry can produce. Registry `extra_vocab` entries
(signed atom tokens, promoted artist integers, the semantic pad) are appended
as atomic symbols that the pre-tokenizer matches before BPE runs. Digits never
participate in merges: integer IDs always tokenize one digit per step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .._util import ConfigError, DataError
from ..corpus import TURN_SEPARATOR

SPACE_MARK = "▁"  # "▁", attached to symbols that begin after a space

PAD, UNK, BOS, EOS, SEP = "<|pad|>", "<|unk|>", "<|bos|>", "<|eos|>", "<|sep|>"
SPECIALS = (PAD, UNK, BOS, EOS, SEP)


def _pretokenize(text: str) -> list[str]:
    """Split into words, folding each leading space into a SPACE_MARK prefix.

    Runs of spaces beyond the first become standalone marks, so decode can
    reproduce the exact spacing.
    """
    words: list[str] = []
    buf = ""
    pending_space = False
    for ch in text:
        if ch == " ":
            if buf:
                words.append(buf)
                buf = ""
            if pending_space:
                words.append(SPACE_MARK)
            pending_space = True
        else:
            if pending_space and not buf:
                buf = SPACE_MARK
                pending_space = False
            buf += ch
    if buf:
        words.append(buf)
    elif pending_space:
        words.append(SPACE_MARK)
    return words


def _word_symbols(word: str) -> list[str]:
    symbols = []
    for ch in word:
        symbols.append(ch)
    return symbols


@dataclass
class Tokenizer:
    symbols: list[str]  # base alphabet + merge products, in id order after specials
    merges: list[tuple[str, str]]
    extended: tuple[str, ...] = ()
    _sym_to_id: dict[str, int] = field(default_factory=dict, repr=False)
    _merge_rank: dict[tuple[str, str], int] = field(default_factory=dict, repr=False)
    _ext_pattern: re.Pattern | None = field(default=None, repr=False)

    def __post_init__(self):
        self.pad_id, self.unk_id, self.bos_id, self.eos_id, self.sep_id = range(5)
        self._sym_to_id = {s: i + len(SPECIALS) for i, s in enumerate(self.symbols)}
        base = len(SPECIALS) + len(self.symbols)
        for i, tok in enumerate(self.extended):
            self._sym_to_id[tok] = base + i
        self._merge_rank = {pair: i for i, pair in enumerate(self.merges)}
        if self.extended:
            alternation = "|".join(re.escape(t) for t in sorted(self.extended, key=len, reverse=True))
            self._ext_pattern = re.compile(alternation)

    @property
    def vocab_size(self) -> int:
        return len(SPECIALS) + len(self.symbols) + len(self.extended)

    def token_string(self, token_id: int) -> str:
        if token_id < len(SPECIALS):
            return SPECIALS[token_id]
        idx = token_id - len(SPECIALS)
        if idx < len(self.symbols):
            return self.symbols[idx]
        return self.extended[idx - len(self.symbols)]

    def _bpe_word(self, word: str) -> list[str]:
        symbols = _word_symbols(word)
        if len(symbols) < 2:
            return symbols
        while True:
            best_rank = None
            best_pos = -1
            for i in range(len(symbols) - 1):
                rank = self._merge_rank.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_pos = rank, i
            if best_rank is None:
                return symbols
            symbols[best_pos: best_pos + 2] = [symbols[best_pos] + symbols[best_pos + 1]]
            if len(symbols) < 2:
                return symbols

    def _encode_plain(self, text: str) -> list[int]:
        ids: list[int] = []
        for word in _pretokenize(text):
            for sym in self._bpe_word(word):
                ids.append(self._sym_to_id.get(sym, self.unk_id))
        return ids

    def _encode_segment(self, segment: str) -> list[int]:
        if self._ext_pattern is None:
            return self._encode_plain(segment)
        ids: list[int] = []
        pos = 0
        for m in self._ext_pattern.finditer(segment):
            if m.start() > pos:
                ids.extend(self._encode_plain(segment[pos: m.start()]))
            ids.append(self._sym_to_id[m.group()])
            pos = m.end()
        if pos < len(segment):
            ids.extend(self._encode_plain(segment[pos:]))
        return ids

    def encode(self, text: str) -> list[int]:
        parts = text.split(TURN_SEPARATOR)
        ids: list[int] = []
        for i, part in enumerate(parts):
            if i:
                ids.append(self.sep_id)
            ids.extend(self._encode_segment(part))
        return ids

    def decode(self, ids: list[int]) -> str:
        out: list[str] = []
        for token_id in ids:
            if token_id in (self.pad_id, self.bos_id, self.eos_id):
                continue
            if token_id == self.sep_id:
                out.append(TURN_SEPARATOR)
            elif token_id == self.unk_id:
                out.append(UNK)
            else:
                out.append(self.token_string(token_id))
        return "".join(out).replace(SPACE_MARK, " ")

    def to_dict(self) -> dict:
        return {
            "symbols": self.symbols,
            "merges": [list(pair) for pair in self.merges],
            "extended": list(self.extended),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tokenizer":
        return cls(
            symbols=list(data["symbols"]),
            merges=[tuple(pair) for pair in data["merges"]],
            extended=tuple(data["extended"]),
        )


def _has_digit(symbol: str) -> bool:
    return any(ch.isdigit() for ch in symbol)


def fit_tokenizer(train_texts, registry=None, base_vocab_size: int = 4000) -> Tokenizer:
    """Learn BPE merges from train texts; extend with the registry's vocabulary.

    The alphabet is the character inventory of the texts plus every character
    of the registry's IDs, so any registry ID round-trips exactly. Merges stop
    at `base_vocab_size` base symbols, when no pair repeats, or when only
    digit-touching pairs remain.
    """
    texts = list(train_texts)
    if not texts:
        raise DataError("cannot fit a tokenizer on an empty text collection")

    word_freq: dict[str, int] = {}
    for text in texts:
        for segment in text.split(TURN_SEPARATOR):
            for word in _pretokenize(segment):
                word_freq[word] = word_freq.get(word, 0) + 1

    alphabet: set[str] = set()
    for word in word_freq:
        alphabet.update(word)
    id_strings: list[str] = []
    extended: tuple[str, ...] = ()
    if registry is not None:
        id_strings = list(registry.forward.values())
        extended = tuple(registry.extra_vocab)
        ext_set = set(extended)
        for id_string in id_strings:
            segments = id_string.split(TURN_SEPARATOR)
            for segment in segments:
                remainder = segment
                for tok in ext_set:
                    remainder = remainder.replace(tok, "")
                for word in _pretokenize(remainder):
                    alphabet.update(word)

    if base_vocab_size < len(alphabet):
        raise ConfigError(
            f"base_vocab_size {base_vocab_size} is below the character inventory ({len(alphabet)})"
        )

    words: dict[str, list[str]] = {w: _word_symbols(w) for w in word_freq}
    symbols: list[str] = sorted(alphabet)
    merges: list[tuple[str, str]] = []
    while len(symbols) < base_vocab_size:
        pair_freq: dict[tuple[str, str], int] = {}
        for word, syms in words.items():
            freq = word_freq[word]
            for i in range(len(syms) - 1):
                pair = (syms[i], syms[i + 1])
                if _has_digit(pair[0]) or _has_digit(pair[1]):
                    continue
                pair_freq[pair] = pair_freq.get(pair, 0) + freq
        if not pair_freq:
            break
        best = max(pair_freq.items(), key=lambda kv: (kv[1], kv[0]))
        if best[1] < 2:
            break
        pair = best[0]
        merged = pair[0] + pair[1]
        merges.append(pair)
        symbols.append(merged)
        for word, syms in words.items():
            i = 0
            while i < len(syms) - 1:
                if syms[i] == pair[0] and syms[i + 1] == pair[1]:
                    syms[i: i + 2] = [merged]
                else:
                    i += 1

    return Tokenizer(symbols=symbols, merges=merges, extended=extended)
