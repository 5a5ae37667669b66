"""Published consistency probabilities used as reproduction targets.

Rows are methods in :data:`TABLE_METHODS` order, columns are the kappa
ratios 0.0, 0.2, ..., 1.0.
"""

from __future__ import annotations

TABLE_METHODS = ("Ko(0.5)", "TS(0.5,0.5)", "TS(0.75,0.5)", "TS(0.9,0.5)")

TABLE_SHIFT = {"A5": "noshift", "A6": "shift-i", "A7": "shift-ii"}


def _rows(*rows: str) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in r.split()) for r in rows)


TABLE_TARGETS = {
    "A5": {
        "continuous-linear": _rows(".17 .29 .44 .57 .67 .75", ".18 .32 .52 .70 .82 .90",
                                   ".11 .26 .48 .69 .81 .89", ".10 .25 .48 .68 .81 .89"),
        "continuous-quadratic": _rows(".11 .24 .42 .57 .68 .74", ".11 .27 .51 .71 .84 .90",
                                      ".06 .21 .47 .70 .84 .90", ".05 .20 .47 .70 .83 .89"),
        "continuous-cubic": _rows(".02 .17 .40 .55 .66 .72", ".02 .20 .51 .69 .81 .85",
                                  ".00 .16 .49 .68 .80 .84", ".00 .16 .49 .68 .80 .84"),
        "binary": _rows(".23 .33 .47 .60 .70 .77", ".27 .40 .57 .73 .83 .89",
                        ".21 .35 .54 .70 .82 .88", ".19 .33 .53 .70 .81 .88"),
        "survival": _rows(".14 .21 .31 .43 .57 .69", ".21 .32 .44 .59 .71 .81",
                          ".16 .25 .37 .52 .64 .75", ".14 .23 .35 .49 .61 .71"),
    },
    "A6": {
        "continuous-linear": _rows(".15 .16 .18 .21 .24 .26", ".18 .25 .38 .50 .63 .72",
                                   ".12 .22 .36 .49 .62 .72", ".12 .22 .36 .49 .62 .71"),
        "continuous-quadratic": _rows(".09 .10 .11 .14 .16 .20", ".15 .26 .43 .56 .65 .72",
                                      ".12 .25 .42 .56 .65 .71", ".11 .24 .42 .56 .65 .71"),
        "continuous-cubic": _rows(".01 .04 .09 .15 .21 .25", ".01 .07 .25 .42 .53 .62",
                                  ".00 .06 .24 .42 .52 .61", ".00 .06 .24 .42 .52 .61"),
        "binary": _rows(".23 .25 .29 .37 .43 .49", ".28 .35 .46 .60 .71 .78",
                        ".22 .31 .43 .59 .70 .77", ".21 .30 .42 .58 .69 .77"),
        "survival": _rows(".12 .13 .14 .18 .23 .29", ".25 .31 .38 .46 .53 .59",
                          ".20 .27 .35 .42 .49 .54", ".19 .26 .34 .41 .48 .52"),
    },
    "A7": {
        "continuous-linear": _rows(".15 .17 .19 .22 .22 .25", ".17 .22 .30 .40 .49 .58",
                                   ".12 .19 .28 .39 .48 .57", ".12 .19 .28 .39 .48 .57"),
        "continuous-quadratic": _rows(".09 .09 .11 .14 .16 .18", ".16 .25 .37 .49 .59 .66",
                                      ".14 .23 .36 .49 .59 .65", ".14 .23 .36 .49 .59 .65"),
        "continuous-cubic": _rows(".01 .04 .09 .15 .20 .24", ".01 .05 .18 .33 .44 .50",
                                  ".00 .04 .18 .32 .44 .50", ".00 .04 .18 .32 .44 .50"),
        "binary": _rows(".25 .28 .33 .40 .46 .53", ".30 .36 .46 .59 .68 .75",
                        ".25 .32 .43 .57 .66 .74", ".23 .31 .42 .57 .66 .74"),
        "survival": _rows(".10 .11 .13 .17 .21 .29", ".25 .30 .36 .44 .52 .58",
                          ".21 .26 .33 .41 .48 .53", ".20 .25 .32 .40 .46 .51"),
    },
}

BELIEVE_TARGETS = {
    "power": 0.99,
    "Ko(0.5)": 0.24,
    "TS(0.5,0.5)": 0.70,
    "TS(0.75,0.5)": 0.69,
    "TS(0.9,0.5)": 0.69,
}
