"""Dataset records and line-delimited JSON persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

SAMPLE_FIELDS = ("id", "old_code", "old_comment", "new_code", "new_comment")


@dataclass(frozen=True)
class CommentUpdateSample:
    """One comment-update instance.

    ``new_comment`` is the ground-truth updated comment and is optional:
    inference-time samples do not have one.
    """

    id: str
    old_code: str
    old_comment: str
    new_code: str
    new_comment: str | None = None

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "old_code": self.old_code,
            "old_comment": self.old_comment,
            "new_code": self.new_code,
        }
        if self.new_comment is not None:
            rec["new_comment"] = self.new_comment
        return rec


def _validate(sample: CommentUpdateSample) -> None:
    for field in ("old_code", "old_comment", "new_code"):
        if not getattr(sample, field).strip():
            raise ValidationError(f"sample {sample.id!r}: field {field!r} is empty")
    if sample.new_comment is not None:
        # delayed import: metrics depends on nothing here, but keep the
        # module graph acyclic
        from .metrics import accuracy  # noqa: PLC0415

        if accuracy(sample.new_comment, sample.old_comment) == 1:
            raise ValidationError(
                f"sample {sample.id!r}: new_comment equals old_comment under "
                "the token-matching protocol"
            )


def load_dataset(path: str | Path) -> list[CommentUpdateSample]:
    """Load and validate a line-delimited JSON dataset file."""
    samples: list[CommentUpdateSample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed record: {exc}") from exc
            missing = [f for f in ("id", "old_code", "old_comment", "new_code")
                       if f not in rec]
            if missing:
                raise ValidationError(
                    f"{path}:{lineno}: record missing field(s) {', '.join(missing)}"
                )
            sample = CommentUpdateSample(
                id=str(rec["id"]),
                old_code=rec["old_code"],
                old_comment=rec["old_comment"],
                new_code=rec["new_code"],
                new_comment=rec.get("new_comment"),
            )
            if sample.id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate sample id {sample.id!r}")
            seen.add(sample.id)
            _validate(sample)
            samples.append(sample)
    return samples


def save_dataset(samples, path: str | Path) -> None:
    """Write samples as line-delimited JSON with fixed field order."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_record(), ensure_ascii=False) + "\n")
