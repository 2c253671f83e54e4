#!/usr/bin/env python3
"""Builds assets/fonts/TestCJK-Regular.ttf.

A tiny synthetic font used by the test suite as the CJK-capable member of
the bundled font set. Every CJK/kana/hangul codepoint maps to a full-width
box glyph; Basic Latin maps to a half-width box so mixed-script questions
still measure and render. The font is generated, not derived from any
existing typeface.
"""

from fontTools.fontBuilder import FontBuilder
from fontTools.pens.ttGlyphPen import TTGlyphPen

UPM = 1000
ASCENT = 800
DESCENT = 200


def box_glyph(width, inset, top, bottom):
    pen = TTGlyphPen(None)
    x0, x1 = inset, width - inset
    pen.moveTo((x0, bottom))
    pen.lineTo((x1, bottom))
    pen.lineTo((x1, top))
    pen.lineTo((x0, top))
    pen.closePath()
    # inner contour (reversed) to leave a hollow box
    i = 60
    pen.moveTo((x0 + i, bottom + i))
    pen.lineTo((x0 + i, top - i))
    pen.lineTo((x1 - i, top - i))
    pen.lineTo((x1 - i, bottom + i))
    pen.closePath()
    return pen.glyph()


def empty_glyph():
    return TTGlyphPen(None).glyph()


def main():
    fb = FontBuilder(UPM, isTTF=True)
    glyph_order = [".notdef", "space", "halfbox", "fullbox"]
    fb.setupGlyphOrder(glyph_order)

    glyphs = {
        ".notdef": box_glyph(600, 50, 700, 0),
        "space": empty_glyph(),
        "halfbox": box_glyph(500, 40, 700, 0),
        "fullbox": box_glyph(1000, 60, 760, -60),
    }
    fb.setupGlyf(glyphs)

    metrics = {
        ".notdef": (600, 50),
        "space": (300, 0),
        "halfbox": (500, 40),
        "fullbox": (1000, 60),
    }
    fb.setupHorizontalMetrics(metrics)
    fb.setupHorizontalHeader(ascent=ASCENT, descent=-DESCENT)

    cmap = {0x20: "space", 0x3000: "space"}
    for cp in range(0x21, 0x7F):
        cmap[cp] = "halfbox"
    full_ranges = [
        (0x3001, 0x303F),   # CJK punctuation
        (0x3040, 0x309F),   # Hiragana
        (0x30A0, 0x30FF),   # Katakana
        (0x4E00, 0x9FFF),   # CJK Unified Ideographs
        (0xAC00, 0xD7AF),   # Hangul syllables
        (0xFF01, 0xFF60),   # fullwidth forms
    ]
    for lo, hi in full_ranges:
        for cp in range(lo, hi + 1):
            cmap[cp] = "fullbox"
    fb.setupCharacterMap(cmap)
    fb.setupOS2(sTypoAscender=ASCENT, sTypoDescender=-DESCENT,
                usWinAscent=ASCENT, usWinDescent=DESCENT)

    fb.setupNameTable({
        "familyName": "TestCJK",
        "styleName": "Regular",
        "fullName": "TestCJK Regular",
        "psName": "TestCJK-Regular",
        "version": "Version 1.0",
        "copyright": "Generated test asset; released under CC0.",
    })
    fb.setupPost()
    fb.save("assets/fonts/TestCJK-Regular.ttf")


if __name__ == "__main__":
    main()
