"""Gene/protein mention extraction from gel label text.

Lookup is exact and case-sensitive because gel labels are mostly acronyms.
Tokens shorter than three characters, Arabic or Roman numerals and stoplist
words are dropped before lookup; stoplists compare case-insensitively.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

_TOKEN_RE = re.compile(r"[A-Za-z0-9\-Α-Ωα-ω]+")
_ROMAN_RE = re.compile(r"M{0,3}(CM|CD|D?C{0,3})(XC|XL|L?X{0,3})(IX|IV|V?I{0,3})", re.IGNORECASE)

MIN_TOKEN_LENGTH = 3


def _data_lines(name):
    text = resources.files("gelmine").joinpath("data", name).read_text(encoding="utf-8")
    return _parse_lines(text)


def _parse_lines(text):
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


@dataclass(frozen=True)
class Lexicon:
    entries: dict  # symbol -> identifier
    source_name: str = ""
    version: str = ""

    def __post_init__(self):
        if any(not s for s in self.entries):
            raise ValueError("lexicon symbols must be nonempty")

    def __contains__(self, symbol):
        return symbol in self.entries

    def __len__(self):
        return len(self.entries)

    def lookup(self, symbol):
        return self.entries.get(symbol)

    @classmethod
    def from_tsv(cls, text: str, source_name: str = "", version: str = "") -> Lexicon:
        entries = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) < 2 or not parts[0]:
                raise ValueError(f"lexicon line {lineno}: expected symbol<TAB>identifier")
            entries.setdefault(parts[0], parts[1])
        return cls(entries, source_name, version)

    @classmethod
    def load(cls, path) -> Lexicon:
        path = Path(path)
        return cls.from_tsv(path.read_text(encoding="utf-8"), path.name, f"{path.stat().st_size}b")

    @classmethod
    def default(cls) -> Lexicon:
        text = resources.files("gelmine").joinpath("data", "lexicon_demo.tsv").read_text(encoding="utf-8")
        return cls.from_tsv(text, "lexicon_demo.tsv", "1")


DOMAIN_WORDS = tuple(_data_lines("stopwords_domain.txt"))


@dataclass(frozen=True)
class StopLists:
    frequent_words: frozenset = field(default_factory=lambda: frozenset(_data_lines("stopwords_frequent.txt")))
    domain_words: frozenset = frozenset(DOMAIN_WORDS)

    def __post_init__(self):
        folded = frozenset(w.lower() for w in self.frequent_words | self.domain_words)
        object.__setattr__(self, "_folded", folded)

    def __contains__(self, token):
        return token.lower() in self._folded

    @classmethod
    def from_files(cls, frequent=None, domain=None) -> StopLists:
        kw = {}
        if frequent is not None:
            kw["frequent_words"] = frozenset(_parse_lines(Path(frequent).read_text(encoding="utf-8")))
        if domain is not None:
            kw["domain_words"] = frozenset(_parse_lines(Path(domain).read_text(encoding="utf-8")))
        return cls(**kw)


@dataclass(frozen=True)
class GeneMention:
    token: str
    lexicon_id: str
    partial: bool = False
    source_token: str = ""
    figure_id: str | None = None
    panel_id: int | None = None
    label_segment_id: int | None = None

    def to_json(self) -> dict:
        return {"figure_id": self.figure_id, "panel_id": self.panel_id,
                "label_segment_id": self.label_segment_id, "token": self.token,
                "lexicon_id": self.lexicon_id, "partial": self.partial,
                "source_token": self.source_token}


def tokenize(text: str) -> list[str]:
    """Split on anything but ASCII letters, digits, hyphens and Greek letters."""
    out = []
    for raw in _TOKEN_RE.findall(text or ""):
        tok = raw.strip("-")
        if tok:
            out.append(tok)
    return out


def is_roman_numeral(token: str) -> bool:
    return bool(token) and _ROMAN_RE.fullmatch(token) is not None


def is_excluded(token: str, stoplists: StopLists) -> bool:
    return (len(token) < MIN_TOKEN_LENGTH
            or token.isdigit()
            or is_roman_numeral(token)
            or token in stoplists)


def match_token(token: str, lexicon: Lexicon, stoplists: StopLists) -> list[GeneMention]:
    if is_excluded(token, stoplists):
        return []
    ident = lexicon.lookup(token)
    if ident is not None:
        return [GeneMention(token, ident, False, token)]
    out = []
    if "-" in token:
        for sub in token.split("-"):
            if is_excluded(sub, stoplists):
                continue
            ident = lexicon.lookup(sub)
            if ident is not None:
                out.append(GeneMention(sub, ident, True, token))
    return out


def match_genes(tokens, lexicon: Lexicon, stoplists: StopLists | None = None, *,
                figure_id=None, panel_id=None, label_segment_id=None) -> list[GeneMention]:
    """Lexicon mentions among ``tokens``, in token order.

    A token with no whole-token match is retried on its hyphen-separated
    parts; those hits are flagged ``partial``.
    """
    stoplists = StopLists() if stoplists is None else stoplists
    out = []
    for tok in tokens:
        for m in match_token(tok, lexicon, stoplists):
            out.append(GeneMention(m.token, m.lexicon_id, m.partial, m.source_token,
                                   figure_id, panel_id, label_segment_id))
    return out


@dataclass
class TokenCounts:
    """Token and gene-match tallies; additive across figures."""

    tokens_all: int = 0
    matched_all: int = 0
    tokens_labels: int = 0
    matched_labels: int = 0

    def __add__(self, other):
        return TokenCounts(self.tokens_all + other.tokens_all, self.matched_all + other.matched_all,
                           self.tokens_labels + other.tokens_labels,
                           self.matched_labels + other.matched_labels)


def count_matches(tokens, lexicon: Lexicon, stoplists: StopLists) -> int:
    """Number of tokens yielding at least one (whole or partial) mention."""
    return sum(1 for t in tokens if match_token(t, lexicon, stoplists))


def gene_token_stats(counts) -> dict:
    """Gene-token ratios over all text segments and over gel labels only.

    ``counts`` is a :class:`TokenCounts` or an iterable of them. A zero
    denominator gives ratio 0 with the matching ``*_undefined`` flag set.
    """
    if isinstance(counts, TokenCounts):
        total = counts
    else:
        total = TokenCounts()
        for c in counts:
            total = total + c

    def ratio(num, den):
        return (num / den, False) if den else (0.0, True)

    r_all, f_all = ratio(total.matched_all, total.tokens_all)
    r_lab, f_lab = ratio(total.matched_labels, total.tokens_labels)
    return {"gene_token_ratio_all": r_all, "gene_token_ratio_labels": r_lab,
            "ratio_all_undefined": f_all, "ratio_labels_undefined": f_lab,
            "tokens_all": total.tokens_all, "matched_all": total.matched_all,
            "tokens_labels": total.tokens_labels, "matched_labels": total.matched_labels}
