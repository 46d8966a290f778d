"""Published reference values, stored verbatim with their table identifiers.

Sequences in the large-k tables use run notation: ``z_q`` is q copies of
treatment z and ``M(a, b)`` intertwines two runs.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .sequences import Seq, interleave

# Printed representatives of the closed-form supports for t = 3 (exact x* values
# are produced by solver.known_x_exact).
PRINTED_T3_REPS = {
    4: ("1123", "1213"),
    5: ("11223", "11232", "12323"),
    6: ("112233", "112323"),
    7: ("1112223", "1112323"),
    8: ("11122333", "11112323"),
}

# Efficiency of the single-class support for 4 <= k <= 10; key "5" stands for t >= 5.
SINGLE_CLASS_TABLE = {
    2: {5: 0.8333, 6: 0.9259, 7: 0.9830, 8: 0.9800, 9: 0.9952, 10: 0.9918},
    3: {4: 0.9000, 5: 0.9821, 6: 0.8929, 7: 0.9956, 8: 0.9735, 9: 0.9878, 10: 0.9898},
    4: {4: 1.0000, 5: 0.9098, 6: 1.0000, 7: 0.9956, 8: 0.9615, 9: 0.9818, 10: 0.9795},
    5: {4: 1.0000, 5: 0.9097, 6: 0.8819, 7: 0.9956, 8: 0.9615, 9: 0.9797, 10: 0.9795},
}


@dataclass(frozen=True)
class ExactDesignRow:
    table: str
    k: int
    t: int
    n: int
    model: str
    sigma: str
    blocks: tuple
    a_column: float
    d_column: float


def _blocks(text: str) -> tuple:
    out = []
    for item in text.split(","):
        item = item.strip()
        m = re.fullmatch(r"\((\d+)\)(?:x(\d+))?", item)
        if not m:
            raise ValueError(f"bad design entry {item!r}")
        seq = tuple(int(c) for c in m.group(1))
        out += [seq] * int(m.group(2) or 1)
    return tuple(out)


_EXACT_ROWS = [
    ("independent", 5, 4, 6, "directional", "identity",
     "(12431), (24133)x2, (34421), (41223), (44321)", 0.9868, 0.9903),
    ("independent", 5, 4, 15, "directional", "identity",
     "(12243)x2, (12431)x2, (23144)x2, (23341), (34412), (24133)x3, (41223), (42114), (43211), (43221)",
     0.9983, 0.9987),
    ("independent", 8, 3, 6, "directional", "identity",
     "(12223311), (22213132), (33311122)x2, (33322111)x2", 0.9585, 0.9706),
    ("independent", 8, 3, 15, "directional", "identity",
     "(11232311), (22111332)x4, (22213132), (23331122)x4, (33311122)x2, (33312123), (33322111)x2",
     0.9994, 0.9995),
    ("independent", 5, 4, 6, "crossover", "identity",
     "(12241), (13344), (14421), (23342), (33114), (44322)", 0.9926, 1.0000),
    ("independent", 5, 4, 15, "crossover", "identity",
     "(12241), (12441), (14421), (21142), (21332)x2, (23342), (33114)x2, (33144), (33211), (44122)x2, (44233)x2",
     0.9982, 0.9982),
    ("independent", 8, 3, 6, "crossover", "identity",
     "(11333221), (21113322)x2, (22333112)x2, (33111223)", 1.0000, 1.0000),
    ("independent", 8, 3, 15, "crossover", "identity",
     "(11333221)x2, (21113322)x5, (22333112)x5, (33111223)x3", 0.9994, 0.9994),
    ("correlated", 5, 4, 6, "directional", "ar1:0.2",
     "(11443), (12234), (22134), (23341), (32411), (33244)", 0.9786, 0.9816),
    ("correlated", 5, 4, 15, "directional", "ar1:0.2",
     "(11234), (11423), (12243), (14322), (22143), (22411), (31123), (31442), (32143), (32411), "
     "(34213), (34223), (42134), (42314), (43124)", 0.9936, 0.9941),
    ("correlated", 8, 3, 6, "directional", "ar1:0.2",
     "(11122233), (11333222), (22111333), (22233311), (33311122), (22233311)", 0.9857, 0.9857),
    ("correlated", 8, 3, 15, "directional", "ar1:0.2",
     "(11323231), (11333221), (12233311), (21133322)x3, (22111332)x3, (22333112)x2, (23311122)x2, "
     "(31212133), (33111223)", 0.9979, 0.9982),
    ("correlated", 5, 4, 6, "crossover", "ar1:0.2",
     "(12241), (13344), (21144), (23342), (31143), (32244)", 0.9949, 0.9994),
    ("correlated", 5, 4, 15, "crossover", "ar1:0.2",
     "(12233), (13322), (13341), (21142), (23312), (24432), (31143), (31144), (32244), (34411), "
     "(34413), (34422), (41122), (42211), (43314)", 0.9986, 0.9986),
    ("correlated", 8, 3, 6, "crossover", "ar1:0.2",
     "(12223311), (13332211), (21113322), (23331122), (31112233), (32221133)", 1.0000, 1.0000),
    ("correlated", 8, 3, 15, "crossover", "ar1:0.2",
     "(12223311)x2, (13332211)x3, (23311122)x3, (23331122)x2, (31112233)x2, (32221133)x3",
     0.9997, 0.9997),
]

EXACT_DESIGNS = [ExactDesignRow(tb, k, t, n, m, s, _blocks(b), a, d) for tb, k, t, n, m, s, b, a, d in _EXACT_ROWS]


# Large-k optimal measures for t = 8: k -> (s1, s2, p_<s1>).
SUPPLEMENT_T8 = {
    11: ("1_4,2_4,3_3", "M(1_2,2_2),3_4,4_3", 0.8034),
    12: ("1_3,2_3,3_3,4_3", "M(1_2,2_2),M(3_2,4_2),M(5_2,6_2)", 0.9264),
    13: ("1_4,2_3,3_3,4_3", "M(1_3,2_2),3_4,4_4", 0.8514),
    14: ("1_4,2_4,3_3,4_3", "M(1_3,2_3),3_4,4_4", 0.8889),
    15: ("1_4,2_4,3_4,4_3", "M(1_4,2_3),3_4,4_4", 0.9053),
    16: ("1_4,2_4,3_4,4_4", "M(1_3,2_3),M(3_3,4_3),5_4", 0.9529),
    17: ("1_5,2_4,3_4,4_4", "M(1_3,2_2),3_4,4_4,5_4", 0.8784),
    18: ("1_5,2_5,3_4,4_4", "M(1_3,2_3),3_4,4_4,5_4", 0.9017),
    19: ("1_5,2_5,3_5,4_4", "M(1_3,2_3),3_5,4_4,5_4", 0.9088),
    20: ("1_5,2_5,3_5,4_5", "M(1_3,2_3),3_5,4_5,5_4", 0.9150),
    21: ("1_5,2_4,3_4,4_4,5_4", "M(1_3,2_3),3_5,4_5,5_5", 0.8956),
    22: ("1_5,2_5,3_4,4_4,5_4", "M(1_3,2_3),M(3_3,4_3),5_5,6_5", 0.9500),
    23: ("1_5,2_5,3_5,4_4,5_4", "M(1_3,2_3),M(3_3,4_3),M(5_3,6_3),7_5", 0.9684),
    24: ("1_5,2_5,3_5,4_5,5_4", "M(1_3,2_3),M(3_3,4_3),M(5_3,6_3),M(7_3,8_3)", 0.9775),
    25: ("1_5,2_5,3_5,4_5,5_5", "M(1_4,2_3),M(3_3,4_3),M(5_3,6_3),M(7_3,8_3)", 0.9798),
    26: ("1_6,2_5,3_5,4_5,5_5", "M(1_3,2_3),3_5,4_5,5_5,6_5", 0.9120),
    27: ("1_6,2_6,3_5,4_5,5_5", "M(1_4,2_3),3_5,4_5,5_5,6_5", 0.9285),
    28: ("1_6,2_6,3_6,4_5,5_5", "M(1_4,2_4),3_5,4_5,5_5,6_5", 0.9405),
    29: ("1_6,2_6,3_6,4_6,5_5", "M(1_4,2_3),3_6,4_6,5_5,6_5", 0.9346),
    30: ("1_6,2_6,3_6,4_6,5_6", "M(1_4,2_4),M(3_4,4_3),5_5,6_5,7_5", 0.9708),
    31: ("1_6,2_5,3_5,4_5,5_5,6_5", "M(1_4,2_3),3_6,4_6,5_6,6_6", 0.9252),
    32: ("1_6,2_6,3_5,4_5,5_5,6_5", "M(1_4,2_4),3_6,4_6,5_6,6_6", 0.9348),
    33: ("1_6,2_6,3_6,4_5,5_5,6_5", "M(1_4,2_4),M(3_4,4_3),5_6,6_6,7_6", 0.9667),
    34: ("1_6,2_6,3_6,4_6,5_5,6_5", "M(1_4,2_4),M(3_4,4_4),5_6,6_6,7_6", 0.9695),
    35: ("1_6,2_6,3_6,4_6,5_6,6_5", "M(1_4,2_4),M(3_4,4_4),M(5_4,6_3),7_6,8_6", 0.9796),
    36: ("1_6,2_6,3_6,4_6,5_6,6_6", "M(1_4,2_4),M(3_4,4_4),M(5_4,6_4),7_6,8_6", 0.9810),
    37: ("1_7,2_6,3_6,4_6,5_6,6_6", "M(1_4,2_4),M(3_4,4_4),M(5_4,6_4),7_7,8_6", 0.9813),
    38: ("1_7,2_7,3_6,4_6,5_6,6_6", "M(1_4,2_4),3_6,4_6,5_6,6_6,7_6", 0.9416),
    39: ("1_7,2_7,3_7,4_6,5_6,6_6", "M(1_4,2_4),3_7,4_6,5_6,6_6,7_6", 0.9434),
    40: ("1_7,2_7,3_7,4_7,5_6,6_6", "M(1_5,2_4),3_7,4_6,5_6,6_6,7_6", 0.9524),
    41: ("1_7,2_7,3_7,4_7,5_7,6_6", "M(1_4,2_4),M(3_4,4_4),5_7,6_6,7_6,8_6", 0.9733),
    42: ("1_7,2_7,3_7,4_7,5_7,6_7", "M(1_4,2_4),M(3_4,4_4),5_7,6_7,7_6,8_6", 0.9741),
    43: ("1_7,2_6,3_6,4_6,5_6,6_6,7_6", "M(1_4,2_4),3_7,4_7,5_7,6_7,7_7", 0.9397),
    44: ("1_7,2_7,3_6,4_6,5_6,6_6,7_6", "M(1_5,2_4),3_7,4_7,5_7,6_7,7_7", 0.9476),
    45: ("1_7,2_7,3_7,4_6,5_6,6_6,7_6", "M(1_5,2_5),3_7,4_7,5_7,6_7,7_7", 0.9539),
    46: ("1_7,2_7,3_7,4_7,5_6,6_6,7_6", "M(1_5,2_5),M(3_4,4_4),5_7,6_7,7_7,8_7", 0.9750),
    47: ("1_7,2_7,3_7,4_7,5_7,6_6,7_6", "M(1_5,2_5),M(3_5,4_4),5_7,6_7,7_7,8_7", 0.9769),
    48: ("1_7,2_7,3_7,4_7,5_7,6_7,7_6", "M(1_5,2_5),M(3_5,4_5),5_7,6_7,7_7,8_7", 0.9785),
    49: ("1_7,2_7,3_7,4_7,5_7,6_7,7_7", "M(1_5,2_5),M(3_5,4_5),5_8,6_7,7_7,8_7", 0.9793),
    50: ("1_8,2_7,3_7,4_7,5_7,6_7,7_7", "M(1_4,2_4),3_7,4_7,5_7,6_7,7_7,8_7", 0.9469),
}

# Large-k example for t = 5.
LARGE_K_T5 = {"k": 100, "t": 5, "active": ((100, 0, 0, 5), (100, 37, 2, 3))}
PAIR_31_8 = ("1_6,2_5,3_5,4_5,5_5,6_5", "M(1_4,2_3),3_6,4_6,5_6,6_6")

# Single-class symmetrised designs for t = 5: (rep in run notation, k, n, efficiency).
SYMMETRIZED_T5 = [
    ("1_4,2_4,3_3", 11, 20, 0.9862),
    ("1_8,2_8,3_7,4_7,5_7", 37, 20, 0.9997),
]


def parse_runs(text: str) -> Seq:
    """Expand run notation such as ``M(1_4,2_3),3_6,4_6`` into a sequence."""
    out: list[int] = []
    pos = 0
    text = text.replace(" ", "")
    token = re.compile(r"M\((\d+)_(\d+),(\d+)_(\d+)\)|(\d+)_(\d+)")
    while pos < len(text):
        m = token.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse run notation at {text[pos:]!r}")
        if m.group(1):
            a = [int(m.group(1))] * int(m.group(2))
            b = [int(m.group(3))] * int(m.group(4))
            out.extend(interleave(a, b))
        else:
            out.extend([int(m.group(5))] * int(m.group(6)))
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise ValueError(f"expected ',' at {text[pos:]!r}")
            pos += 1
    return tuple(out)
