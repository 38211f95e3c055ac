"""Physical address <-> DRAM coordinate translation.

A mapping scheme name such as ``RoRaBaCoCh`` lists bit fields from most to
least significant, placed directly above the cache-block offset bits.  The
two-letter tokens are Ro=row, Ra=rank, Ba=bank, Co=column (block index
within a row), Ch=channel.  Fields are contiguous; no XOR or permutation
interleaving is applied.
"""

from typing import NamedTuple

MAPPING_SCHEMES = ("RoRaBaCoCh", "RoRaBaChCo", "RoRaChBaCo", "RoChRaBaCo")

_TOKENS = ("Ro", "Ra", "Ba", "Co", "Ch")


class DramCoordinates(NamedTuple):
    channel: int
    rank: int
    bank: int
    row: int
    column: int


def parse_scheme(name: str) -> tuple:
    """Split a scheme name into its field tokens, most significant first."""
    if len(name) != 10:
        raise ValueError(f"bad mapping scheme {name!r}")
    tokens = tuple(name[i : i + 2] for i in range(0, 10, 2))
    if sorted(tokens) != sorted(_TOKENS):
        raise ValueError(f"bad mapping scheme {name!r}")
    return tokens


def _log2(n: int, what: str) -> int:
    if n <= 0 or n & (n - 1):
        raise ValueError(f"{what} must be a power of two, got {n}")
    return n.bit_length() - 1


def field_widths(geom) -> dict:
    """Bit width of each field token under a geometry."""
    return {
        "Ro": _log2(geom.rows_per_bank, "rows_per_bank"),
        "Ra": _log2(geom.ranks_per_channel, "ranks_per_channel"),
        "Ba": _log2(geom.banks_per_rank, "banks_per_rank"),
        "Co": _log2(geom.row_buffer_bytes // geom.cache_block_bytes, "blocks per row"),
        "Ch": _log2(geom.channels, "channels"),
    }


def total_capacity_bytes(geom) -> int:
    return (
        geom.channels
        * geom.ranks_per_channel
        * geom.banks_per_rank
        * geom.rows_per_bank
        * geom.row_buffer_bytes
    )


def decode(addr: int, scheme: str, geom) -> DramCoordinates:
    """Decode a byte address into (channel, rank, bank, row, column)."""
    if addr < 0 or addr >= total_capacity_bytes(geom):
        raise ValueError(f"address {addr:#x} outside capacity")
    widths = field_widths(geom)
    a = addr >> _log2(geom.cache_block_bytes, "cache_block_bytes")
    out = {}
    for token in reversed(parse_scheme(scheme)):
        w = widths[token]
        out[token] = a & ((1 << w) - 1)
        a >>= w
    return DramCoordinates(
        channel=out["Ch"], rank=out["Ra"], bank=out["Ba"], row=out["Ro"], column=out["Co"]
    )


def encode(coords: DramCoordinates, scheme: str, geom) -> int:
    """Inverse of decode: rebuild the byte address from coordinates."""
    widths = field_widths(geom)
    values = {
        "Ch": coords.channel,
        "Ra": coords.rank,
        "Ba": coords.bank,
        "Ro": coords.row,
        "Co": coords.column,
    }
    a = 0
    for token in parse_scheme(scheme):
        w = widths[token]
        v = values[token]
        if v < 0 or v >= (1 << w):
            raise ValueError(f"{token} index {v} out of range for width {w}")
        a = (a << w) | v
    return a << _log2(geom.cache_block_bytes, "cache_block_bytes")
