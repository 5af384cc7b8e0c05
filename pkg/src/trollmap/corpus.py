"""Comment ingestion and per-user aggregation.

Input is a UTF-8 byte stream in one of two layouts:

* ``jsonl`` -- one JSON object per line with string keys ``user_id`` and
  ``text``; other keys are ignored.
* ``csv`` -- RFC 4180 quoting, mandatory header ``user_id,text``.

Text is kept verbatim; normalization only happens when features are counted.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

from .errors import EncodingError, ParseError, SchemaError

logger = logging.getLogger(__name__)

FORMATS = ("jsonl", "csv")
CSV_HEADER = ["user_id", "text"]


@dataclass(frozen=True)
class Comment:
    user_id: str
    text: str

    def __post_init__(self):
        if not isinstance(self.user_id, str) or not self.user_id:
            raise SchemaError("user_id must be a non-empty string")
        if not isinstance(self.text, str):
            raise SchemaError("text must be a string")


@dataclass(frozen=True)
class UserDocument:
    user_id: str
    messages: tuple[str, ...]

    def __post_init__(self):
        if not self.messages:
            raise ValueError(f"user {self.user_id!r} has no messages")

    @property
    def message_count(self) -> int:
        return len(self.messages)


def _decoded_lines(raw: bytes) -> Iterator[tuple[int, str | None, UnicodeDecodeError | None]]:
    # '\n' never occurs inside a multi-byte UTF-8 sequence, so splitting
    # before decoding keeps line numbers exact for error reports.
    if raw.startswith(b"\xef\xbb\xbf"):
        raw = raw[3:]
    for lineno, chunk in enumerate(raw.split(b"\n"), start=1):
        try:
            yield lineno, chunk.decode("utf-8"), None
        except UnicodeDecodeError as exc:
            yield lineno, None, exc


def _record(obj, lineno) -> Comment:
    if not isinstance(obj, dict):
        raise SchemaError("record is not a JSON object", lineno)
    for key in CSV_HEADER:
        if key not in obj:
            raise SchemaError(f"missing required field {key!r}", lineno)
        if not isinstance(obj[key], str):
            raise SchemaError(f"field {key!r} must be a string", lineno)
    if not obj["user_id"]:
        raise SchemaError("empty user_id", lineno)
    return Comment(obj["user_id"], obj["text"])


def _parse_jsonl(raw: bytes):
    for lineno, line, err in _decoded_lines(raw):
        if err is not None:
            yield EncodingError(f"invalid UTF-8 at byte {err.start}", lineno)
            continue
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            yield ParseError(f"malformed JSON: {exc.msg}", lineno)
            continue
        try:
            yield _record(obj, lineno)
        except SchemaError as exc:
            yield exc


def _parse_csv(raw: bytes):
    good_lines = []
    bad = []
    for lineno, line, err in _decoded_lines(raw):
        if err is not None:
            bad.append(EncodingError(f"invalid UTF-8 at byte {err.start}", lineno))
            # keep numbering aligned with the physical file
            good_lines.append("")
        else:
            good_lines.append(line)
    yield from bad
    text = "\n".join(good_lines)
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    header_seen = False
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            yield ParseError(f"malformed CSV: {exc}", reader.line_num)
            continue
        lineno = reader.line_num
        if not row:
            continue
        if not header_seen:
            if row != CSV_HEADER:
                # header problems are never skippable
                raise SchemaError(f"expected header {','.join(CSV_HEADER)!r}, got {row!r}", lineno)
            header_seen = True
            continue
        if len(row) != 2:
            yield ParseError(f"expected 2 fields, got {len(row)}", lineno)
            continue
        try:
            yield _record(dict(zip(CSV_HEADER, row)), lineno)
        except SchemaError as exc:
            yield exc
    if not header_seen:
        raise SchemaError("missing CSV header", 1)


def parse_comments(stream: BinaryIO | bytes, format: str = "jsonl", lenient: bool = False) -> list[Comment]:
    """Read comments from a UTF-8 byte stream, preserving input order.

    Malformed records raise immediately unless ``lenient`` is set, in which
    case they are skipped, logged, and summarized in a single warning.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    raw = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    items = _parse_jsonl(bytes(raw)) if format == "jsonl" else _parse_csv(bytes(raw))

    comments = []
    skipped = 0
    for item in items:
        if isinstance(item, Comment):
            comments.append(item)
        elif lenient:
            skipped += 1
            logger.warning("skipping record: %s", item)
        else:
            raise item
    if skipped:
        warnings.warn(f"skipped {skipped} malformed record(s)", stacklevel=2)
    return comments


def dump_jsonl(comments: Iterable[Comment]) -> bytes:
    lines = [json.dumps({"user_id": c.user_id, "text": c.text}, ensure_ascii=False) for c in comments]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def dump_csv(comments: Iterable[Comment]) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for c in comments:
        writer.writerow([c.user_id, c.text])
    return buf.getvalue().encode("utf-8")


def group_by_user(comments: Iterable[Comment], min_messages: int = 1) -> list[UserDocument]:
    """Collect each author's messages, dropping authors below ``min_messages``.

    Messages keep their input order; documents are sorted by ``user_id``.
    """
    if min_messages < 1:
        raise ValueError("min_messages must be >= 1")
    by_user: dict[str, list[str]] = defaultdict(list)
    for c in comments:
        by_user[c.user_id].append(c.text)
    return [
        UserDocument(uid, tuple(msgs))
        for uid, msgs in sorted(by_user.items())
        if len(msgs) >= min_messages
    ]
