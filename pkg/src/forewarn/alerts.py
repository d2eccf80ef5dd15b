"""Subscriber registry, durable outbox, and alert dispatch.

The outbox is an append-only JSONL file; each line carries a dedup key of
(subscriber, run, level) so re-running dispatch for the same run is safe:
delivery is at-least-once with dedup on the key, never silent loss. A
write failure mid-dispatch aborts with a partial report of what did go
out.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .errors import DispatchError
from .risk import RiskLevel

_LEVEL_BY_NAME = {lvl.value: lvl for lvl in RiskLevel}


@dataclass(frozen=True)
class Subscriber:
    subscriber_id: str
    place: str
    opted_in: bool = True
    min_level: RiskLevel = RiskLevel.ELEVATED
    locale: str = "en"

    def to_dict(self) -> dict:
        return {
            "subscriber_id": self.subscriber_id,
            "place": self.place,
            "opted_in": self.opted_in,
            "min_level": self.min_level.value,
            "locale": self.locale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Subscriber":
        return cls(
            subscriber_id=d["subscriber_id"],
            place=d["place"],
            opted_in=d.get("opted_in", True),
            min_level=_LEVEL_BY_NAME[d.get("min_level", "elevated")],
            locale=d.get("locale", "en"),
        )


class SubscriberRegistry:
    """JSON-file-backed subscriber list keyed by id."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._subscribers: dict[str, Subscriber] = {}
        if self.path.exists():
            for d in json.loads(self.path.read_text()):
                sub = Subscriber.from_dict(d)
                self._subscribers[sub.subscriber_id] = sub

    def __len__(self) -> int:
        return len(self._subscribers)

    def __iter__(self):
        return iter(sorted(self._subscribers.values(), key=lambda s: s.subscriber_id))

    def get(self, subscriber_id: str) -> Subscriber | None:
        return self._subscribers.get(subscriber_id)

    def upsert(self, sub: Subscriber) -> None:
        self._subscribers[sub.subscriber_id] = sub
        self._save()

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(f".tmp-{self.path.name}")
        tmp.write_text(json.dumps([s.to_dict() for s in self], indent=1))
        tmp.replace(self.path)


@dataclass(frozen=True)
class AlertMessage:
    recipient: str
    severity: RiskLevel
    template_id: str
    text: str
    run_time: datetime

    @property
    def dedup_key(self) -> str:
        return f"{self.recipient}|{self.run_time.isoformat()}|{self.severity.value}"


class Outbox:
    """Append-only JSONL delivery log with dedup-key index."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._seen: set[str] = set()
        if self.path.exists():
            with open(self.path) as f:
                for line in f:
                    line = line.strip()
                    if line:
                        self._seen.add(json.loads(line)["dedup_key"])

    def __len__(self) -> int:
        return len(self._seen)

    def seen(self, dedup_key: str) -> bool:
        return dedup_key in self._seen

    def append(self, message: AlertMessage) -> None:
        record = {
            "recipient": message.recipient,
            "severity": message.severity.value,
            "template_id": message.template_id,
            "text": message.text,
            "run_time": message.run_time.isoformat(),
            "dedup_key": message.dedup_key,
            "appended_at": datetime.now(timezone.utc).isoformat(),
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(record)
        with open(self.path, "a") as f:
            f.write(line + "\n")
            f.flush()
        self._seen.add(message.dedup_key)

    def records(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with open(self.path) as f:
            for line in f:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out


@dataclass(frozen=True)
class DispatchReport:
    run_time: datetime
    sent: tuple[str, ...]  # subscriber ids delivered this call
    deduplicated: tuple[str, ...]
    below_threshold: tuple[str, ...]
    opted_out: tuple[str, ...]
    failed: tuple[str, ...] = ()

    @property
    def sent_count(self) -> int:
        return len(self.sent)

    @property
    def skipped_count(self) -> int:
        return len(self.deduplicated) + len(self.below_threshold) + len(self.opted_out)


def dispatch_alerts(
    messages: Iterable[tuple[Subscriber, AlertMessage]],
    outbox: Outbox,
) -> DispatchReport:
    """Deliver rendered messages, skipping duplicates, opt-outs, and
    below-threshold severities. An outbox write failure aborts with a
    dispatch error carrying the partial report."""
    sent: list[str] = []
    deduplicated: list[str] = []
    below: list[str] = []
    opted_out: list[str] = []
    run_time: datetime | None = None
    for sub, message in messages:
        run_time = message.run_time
        if not sub.opted_in:
            opted_out.append(sub.subscriber_id)
            continue
        if message.severity.rank < sub.min_level.rank:
            below.append(sub.subscriber_id)
            continue
        if outbox.seen(message.dedup_key):
            deduplicated.append(sub.subscriber_id)
            continue
        try:
            outbox.append(message)
        except OSError as exc:
            partial = DispatchReport(
                run_time=run_time,
                sent=tuple(sent),
                deduplicated=tuple(deduplicated),
                below_threshold=tuple(below),
                opted_out=tuple(opted_out),
                failed=(sub.subscriber_id,),
            )
            raise DispatchError(
                f"outbox write failed after {len(sent)} deliveries: {exc}",
                report=partial,
            ) from exc
        sent.append(sub.subscriber_id)
    if run_time is None:
        run_time = datetime.now(timezone.utc)
    return DispatchReport(
        run_time=run_time,
        sent=tuple(sent),
        deduplicated=tuple(deduplicated),
        below_threshold=tuple(below),
        opted_out=tuple(opted_out),
    )
