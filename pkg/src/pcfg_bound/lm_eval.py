"""Comparison of external language-model log-probabilities with grammar bounds."""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import stats

from .errors import PCFGError, RecordFormatError
from .records import TokenLogProbRecord, load_records

DEFAULT_CLASS_MAP = "penn_classes.json"


@dataclass
class EvalReport:
    ppl_lm: float
    ppl_pcfg: float
    r_squared: float | None
    spearman_rho: float | None
    n_scored: int
    per_class_divergence: dict[str, float] | None = field(default=None)

    def to_dict(self) -> dict:
        out = {"n_scored": self.n_scored, "ppl_lm": self.ppl_lm, "ppl_pcfg": self.ppl_pcfg}
        if self.r_squared is not None:
            out["r_squared"] = self.r_squared
        if self.spearman_rho is not None:
            out["spearman_rho"] = self.spearman_rho
        if self.per_class_divergence is not None:
            out["per_class_divergence"] = dict(sorted(self.per_class_divergence.items()))
        return out


def _scored(records) -> dict[tuple[int, int], float]:
    out = {}
    for r in records:
        if r.key in out:
            raise RecordFormatError(f"duplicate key {r.key}")
        if not r.skipped and r.logprob is not None:
            out[r.key] = float(r.logprob)
    return out


def joint_scored(lm, pcfg):
    """Sorted keys scored on both sides, with the two log-probability arrays."""
    a, b = _scored(lm), _scored(pcfg)
    keys = sorted(a.keys() & b.keys())
    if not keys:
        raise PCFGError("no positions are scored by both record sets")
    return keys, np.array([a[k] for k in keys]), np.array([b[k] for k in keys])


def _ppl(lps: np.ndarray) -> float:
    return math.exp(-math.fsum(lps) / len(lps))


def r_squared(lm: np.ndarray, pcfg: np.ndarray) -> float | None:
    """Coefficient of determination of the least-squares fit of pcfg on lm."""
    if not np.all(np.isfinite(lm)) or not np.all(np.isfinite(pcfg)):
        return None
    sy = np.var(pcfg)
    if sy == 0:
        return None
    if np.var(lm) == 0:
        return 0.0
    r = np.corrcoef(lm, pcfg)[0, 1]
    return float(min(1.0, r * r))


def spearman(lm: np.ndarray, pcfg: np.ndarray) -> float | None:
    if np.ptp(lm) == 0 or np.ptp(pcfg) == 0:
        return 1.0 if np.array_equal(lm, pcfg) and len(lm) > 1 else None
    return float(stats.spearmanr(lm, pcfg).statistic)


def compare(lm, pcfg) -> EvalReport:
    """Perplexities, R² and Spearman rho over positions scored on both sides."""
    keys, a, b = joint_scored(lm, pcfg)
    return EvalReport(_ppl(a), _ppl(b), r_squared(a, b), spearman(a, b), len(keys))


def pos_divergence(lm, pcfg, tags: dict, class_map: dict) -> dict[str, float]:
    """Mean ``logP_lm - logP_pcfg`` per coarse class.

    ``tags`` maps ``(sentence_id, position)`` to a fine tag and ``class_map``
    maps fine tags to classes.  Classes with no scored tokens are omitted.
    """
    keys, a, b = joint_scored(lm, pcfg)
    sums = defaultdict(list)
    for k, x, y in zip(keys, a, b):
        tag = tags.get(k)
        if tag is None:
            raise PCFGError(f"no tag for scored position {k}")
        cls = class_map.get(tag)
        if cls is None:
            raise PCFGError(f"tag {tag!r} is missing from the class map")
        sums[cls].append(x - y)
    return {c: math.fsum(v) / len(v) for c, v in sorted(sums.items())}


def evaluate(lm, pcfg, tags: dict | None = None, class_map: dict | None = None) -> EvalReport:
    report = compare(lm, pcfg)
    if tags is not None:
        report.per_class_divergence = pos_divergence(lm, pcfg, tags, class_map or {})
    return report


def parse_tags(lines) -> dict[tuple[int, int], str]:
    """Parse ``sentence_id  position  tag`` rows; a header row is optional."""
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if lineno == 1 and fields[:2] == ["sentence_id", "position"]:
            continue
        if len(fields) != 3:
            raise RecordFormatError(f"line {lineno}: expected 3 tab-separated fields")
        try:
            key = (int(fields[0]), int(fields[1]))
        except ValueError:
            raise RecordFormatError(f"line {lineno}: malformed tag row") from None
        if key in out:
            raise RecordFormatError(f"line {lineno}: duplicate key {key}")
        out[key] = fields[2]
    return out


def format_tags(rows) -> str:
    lines = ["sentence_id\tposition\ttag\n"]
    lines += [f"{sid}\t{pos}\t{tag}\n" for sid, pos, tag in rows]
    return "".join(lines)


def load_tags(path) -> dict[tuple[int, int], str]:
    with open(path, encoding="utf-8") as f:
        return parse_tags(f)


def load_class_map(path=None) -> dict[str, str]:
    """Read a ``{tag: class}`` JSON object; without a path, the bundled default."""
    if path is None:
        text = resources.files("pcfg_bound.data").joinpath(DEFAULT_CLASS_MAP).read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    data = json.loads(text)
    if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
        raise PCFGError("class map must be a JSON object of strings")
    return {k: v for k, v in data.items() if not k.startswith("_")}


__all__ = ["EvalReport", "compare", "pos_divergence", "evaluate", "load_records",
           "load_tags", "parse_tags", "format_tags", "load_class_map", "TokenLogProbRecord"]
