"""Per-token log-probability records and their TSV form.

Header: ``sentence_id  position  token  logprob  skipped``.  Positions are
1-based, log-probabilities are natural logs, and skipped rows carry an empty
``logprob`` field.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable

from .errors import RecordFormatError

HEADER = ("sentence_id", "position", "token", "logprob", "skipped")


@dataclass(frozen=True)
class TokenLogProbRecord:
    sentence_id: int
    position: int
    token: str
    logprob: float | None
    skipped: bool = False

    @property
    def key(self) -> tuple[int, int]:
        return (self.sentence_id, self.position)


def format_logprob(lp: float) -> str:
    return repr(float(lp)) if math.isfinite(lp) else "-inf"


def write_records(records: Iterable[TokenLogProbRecord], stream) -> None:
    stream.write("\t".join(HEADER) + "\n")
    for r in records:
        lp = "" if r.skipped or r.logprob is None else format_logprob(r.logprob)
        stream.write(f"{r.sentence_id}\t{r.position}\t{r.token}\t{lp}\t{int(r.skipped)}\n")


def records_to_tsv(records) -> str:
    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()


def parse_records(lines: Iterable[str]) -> list[TokenLogProbRecord]:
    """Parse record TSV lines, enforcing key uniqueness and ``logprob <= 0``."""
    out = []
    seen = {}
    header_seen = False
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        if not header_seen:
            header_seen = True
            if tuple(fields) == HEADER:
                continue
        if len(fields) != 5:
            raise RecordFormatError(f"line {lineno}: expected 5 tab-separated fields, "
                                    f"got {len(fields)}")
        sid, pos, tok, lp, skipped = fields
        try:
            sid, pos = int(sid), int(pos)
            skipped = {"0": False, "false": False, "1": True, "true": True}[skipped.lower()]
        except (ValueError, KeyError):
            raise RecordFormatError(f"line {lineno}: malformed record") from None
        if pos < 1:
            raise RecordFormatError(f"line {lineno}: positions are 1-based")
        if skipped:
            value = None
        else:
            try:
                value = float(lp)
            except ValueError:
                raise RecordFormatError(f"line {lineno}: bad log-probability {lp!r}") from None
            if math.isnan(value) or value > 0:
                raise RecordFormatError(f"line {lineno}: log-probability must be <= 0")
        key = (sid, pos)
        if key in seen:
            raise RecordFormatError(f"line {lineno}: duplicate key {key} "
                                    f"(first on line {seen[key]})")
        seen[key] = lineno
        out.append(TokenLogProbRecord(sid, pos, tok, value, skipped))
    return out


def load_records(path) -> list[TokenLogProbRecord]:
    with open(path, encoding="utf-8") as f:
        return parse_records(f)
