"""Minimal helpers for the self-contained SVG emitters.

Everything here is deterministic: fixed float formats, no timestamps, no
randomness, so identical inputs render byte-identical documents.
"""

from xml.sax.saxutils import escape
from zlib import crc32

SVG_DOCTYPE = (
    '<?xml version="1.0" standalone="no"?>\n'
    '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" '
    '"http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
)


def header(width, height):
    return SVG_DOCTYPE + (
        f'<svg version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" '
        'xmlns="http://www.w3.org/2000/svg" '
        'xmlns:xlink="http://www.w3.org/1999/xlink">\n'
    )


def text_el(x, y, content, size=12, anchor="start", fill="#000000", extra=""):
    return (
        f'<text x="{x}" y="{y}" font-size="{size}" font-family="Verdana" '
        f'text-anchor="{anchor}" fill="{fill}"{extra}>{escape(content)}</text>\n'
    )


def warm_color(name):
    """Stable flame-palette color derived from the frame name."""
    h = crc32(name.encode("utf-8"))
    r = 205 + h % 50
    g = (h >> 8) % 230
    b = (h >> 16) % 55
    return f"rgb({r},{g},{b})"


def fmt(value, decimals=2):
    """Fixed-width float format used everywhere coordinates need fractions."""
    return f"{value:.{decimals}f}"
