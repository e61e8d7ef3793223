"""A 5x7 bitmap font for drawing synthetic label text.

Lowercase letters reuse the uppercase glyph squeezed into the lower five
rows; that is enough to give text segments a realistic texture.
"""

from __future__ import annotations

import numpy as np

GLYPH_W, GLYPH_H = 5, 7
ADVANCE = GLYPH_W + 1

_GLYPHS = {
    "A": "01110 10001 10001 11111 10001 10001 10001",
    "B": "11110 10001 10001 11110 10001 10001 11110",
    "C": "01110 10001 10000 10000 10000 10001 01110",
    "D": "11100 10010 10001 10001 10001 10010 11100",
    "E": "11111 10000 10000 11110 10000 10000 11111",
    "F": "11111 10000 10000 11110 10000 10000 10000",
    "G": "01110 10001 10000 10111 10001 10001 01111",
    "H": "10001 10001 10001 11111 10001 10001 10001",
    "I": "01110 00100 00100 00100 00100 00100 01110",
    "J": "00111 00010 00010 00010 00010 10010 01100",
    "K": "10001 10010 10100 11000 10100 10010 10001",
    "L": "10000 10000 10000 10000 10000 10000 11111",
    "M": "10001 11011 10101 10101 10001 10001 10001",
    "N": "10001 10001 11001 10101 10011 10001 10001",
    "O": "01110 10001 10001 10001 10001 10001 01110",
    "P": "11110 10001 10001 11110 10000 10000 10000",
    "Q": "01110 10001 10001 10001 10101 10010 01101",
    "R": "11110 10001 10001 11110 10100 10010 10001",
    "S": "01111 10000 10000 01110 00001 00001 11110",
    "T": "11111 00100 00100 00100 00100 00100 00100",
    "U": "10001 10001 10001 10001 10001 10001 01110",
    "V": "10001 10001 10001 10001 10001 01010 00100",
    "W": "10001 10001 10001 10101 10101 10101 01010",
    "X": "10001 10001 01010 00100 01010 10001 10001",
    "Y": "10001 10001 10001 01010 00100 00100 00100",
    "Z": "11111 00001 00010 00100 01000 10000 11111",
    "0": "01110 10001 10011 10101 11001 10001 01110",
    "1": "00100 01100 00100 00100 00100 00100 01110",
    "2": "01110 10001 00001 00010 00100 01000 11111",
    "3": "11111 00010 00100 00010 00001 10001 01110",
    "4": "00010 00110 01010 10010 11111 00010 00010",
    "5": "11111 10000 11110 00001 00001 10001 01110",
    "6": "00110 01000 10000 11110 10001 10001 01110",
    "7": "11111 00001 00010 00100 01000 01000 01000",
    "8": "01110 10001 10001 01110 10001 10001 01110",
    "9": "01110 10001 10001 01111 00001 00010 01100",
    "-": "00000 00000 00000 11111 00000 00000 00000",
    "−": "00000 00000 00000 11111 00000 00000 00000",
    "+": "00000 00100 00100 11111 00100 00100 00000",
    ".": "00000 00000 00000 00000 00000 01100 01100",
    ",": "00000 00000 00000 00000 01100 00100 01000",
    "(": "00010 00100 01000 01000 01000 00100 00010",
    ")": "01000 00100 00010 00010 00010 00100 01000",
    "/": "00000 00001 00010 00100 01000 10000 00000",
    ":": "00000 01100 01100 00000 01100 01100 00000",
    "%": "11000 11001 00010 00100 01000 10011 00011",
    "=": "00000 00000 11111 00000 11111 00000 00000",
    " ": "00000 00000 00000 00000 00000 00000 00000",
    "&": "01100 10010 10100 01000 10101 10010 01101",
    "?": "01110 10001 00001 00010 00100 00000 00100",
    "α": "00000 00000 01001 10101 10010 10010 01101",
    "β": "01110 10001 11110 10001 11110 10000 10000",
    "γ": "00000 10001 01010 00100 00100 00100 00000",
    "κ": "00000 10010 10100 11000 10100 10010 00000",
    "σ": "00000 01111 10010 10001 10001 01110 00000",
    "μ": "00000 10001 10001 10001 10011 11101 10000",
}


def _bitmap(spec):
    return np.array([[c == "1" for c in row] for row in spec.split()], dtype=bool)


GLYPHS = {ch: _bitmap(spec) for ch, spec in _GLYPHS.items()}


def glyph(ch: str) -> np.ndarray:
    if ch in GLYPHS:
        return GLYPHS[ch]
    if ch.upper() in GLYPHS and ch.islower():
        up = GLYPHS[ch.upper()]
        low = np.zeros_like(up)
        low[2:] = up[[0, 2, 3, 4, 6]]
        return low
    return GLYPHS["?"]


def text_size(text: str, scale: int = 1) -> tuple[int, int]:
    """Width and height in pixels of ``text`` drawn at ``scale``."""
    if not text:
        return 0, 0
    return (len(text) * ADVANCE - 1) * scale, GLYPH_H * scale


def render_text(text: str, scale: int = 1) -> np.ndarray:
    """Boolean ink mask of ``text``; one blank column between glyphs."""
    w, h = text_size(text, scale)
    out = np.zeros((GLYPH_H, len(text) * ADVANCE - 1), dtype=bool)
    for k, ch in enumerate(text):
        out[:, k * ADVANCE:k * ADVANCE + GLYPH_W] = glyph(ch)
    if scale > 1:
        out = np.repeat(np.repeat(out, scale, axis=0), scale, axis=1)
    assert out.shape == (h, w)
    return out
