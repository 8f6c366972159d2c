"""Character error rate and grouped CER reports."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence


@dataclass(frozen=True)
class EditCounts:
    sub: int = 0
    dele: int = 0
    ins: int = 0
    ref_len: int = 0

    @property
    def errors(self) -> int:
        return self.sub + self.dele + self.ins

    @property
    def cer(self) -> float:
        return self.errors / self.ref_len if self.ref_len else 0.0

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(self.sub + other.sub, self.dele + other.dele,
                          self.ins + other.ins, self.ref_len + other.ref_len)


def cer(reference: Sequence[str], hypothesis: Sequence[str]) -> EditCounts:
    """Minimal character alignment. Among equal-cost alignments the backtrace
    takes a match or substitution before a deletion, and a deletion before an
    insertion, so S is maximal and D + I minimal."""
    ref, hyp = list(reference), list(hypothesis)
    n, m = len(ref), len(hyp)
    if n == 0:
        raise ValueError("reference must not be empty")
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri, row, prev = ref[i - 1], d[i], d[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (ri != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1)
    s = de = ins = 0
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            de += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(s, de, ins, n)


def edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    """Unit-cost Levenshtein distance; unlike :func:`cer`, ``a`` may be empty."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j - 1] + (x != y), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[-1]


def relative_reduction(baseline: float, system: float) -> float:
    """Relative CER reduction in percent."""
    if baseline == 0:
        raise ValueError("baseline CER must be positive")
    return 100.0 * (baseline - system) / baseline


@dataclass
class CerReport:
    """Edit statistics aggregated over utterances and over named groupings
    (for instance province, region or accent level)."""

    total: EditCounts = field(default_factory=EditCounts)
    groups: dict = field(default_factory=dict)
    utterances: int = 0

    def add(self, reference, hypothesis, **group_values) -> EditCounts:
        counts = cer(reference, hypothesis)
        self.total = self.total + counts
        self.utterances += 1
        for kind, value in group_values.items():
            bucket = self.groups.setdefault(kind, {})
            bucket[value] = bucket.get(value, EditCounts()) + counts
        return counts

    @property
    def cer(self) -> float:
        return self.total.cer

    def rows(self, baseline: "CerReport | None" = None) -> list[dict]:
        def row(kind, name, c, base):
            r = {"group": kind, "name": str(name), "N": c.ref_len, "S": c.sub, "D": c.dele,
                 "I": c.ins, "CER": round(100.0 * c.cer, 4)}
            if base is not None:
                r["CERR"] = round(relative_reduction(100 * base.cer, 100 * c.cer), 4) if base.cer else None
            return r

        out = [row("all", "all", self.total, baseline.total if baseline else None)]
        for kind in sorted(self.groups):
            for name in sorted(self.groups[kind], key=str):
                base = baseline.groups.get(kind, {}).get(name) if baseline else None
                out.append(row(kind, name, self.groups[kind][name], base))
        return out

    def to_tsv(self, baseline: "CerReport | None" = None) -> str:
        rows = self.rows(baseline)
        cols = list(rows[0])
        lines = ["\t".join(cols)]
        for r in rows:
            lines.append("\t".join("" if r[c] is None else str(r[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def to_json(self, baseline: "CerReport | None" = None) -> str:
        return json.dumps({"utterances": self.utterances, "rows": self.rows(baseline)},
                          indent=1, ensure_ascii=False)

    def summary(self, name: str = "system", baseline: "CerReport | None" = None,
                baseline_name: str = "baseline") -> str:
        text = f"{name}: CER {100 * self.cer:.2f}% over {self.total.ref_len} characters, {self.utterances} utterances"
        if baseline is not None and baseline.cer > 0:
            text += f"; CERR vs {baseline_name} {relative_reduction(baseline.cer, self.cer):.1f}%"
        return text
