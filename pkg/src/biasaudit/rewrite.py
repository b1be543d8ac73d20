"""Abstract regeneration through model providers, with an on-disk response cache."""

from __future__ import annotations

import hashlib
import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .fsutil import atomic_write_text
from .providers import Client, PermanentError, Provider, TransientError, build_client

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE = (
    "Given the scientific abstract, imagine yourself to be an author and researcher, "
    "and rewrite this abstract.\nThe abstract is : "
)

DEFAULT_REFUSAL_PHRASES = (
    "i'm sorry, but",
    "i am sorry, but",
    "i can't help",
    "i cannot help",
    "i can't assist",
    "i cannot assist",
    "i am unable to",
    "i'm unable to",
)

MAX_ATTEMPTS = 3
BACKOFF_BASE = 1.0

OK, REFUSED, FAILED = "ok", "refused", "failed"


def build_prompt(abstract: str) -> str:
    if not abstract or not abstract.strip():
        raise ValueError("abstract is empty")
    return PROMPT_TEMPLATE + abstract


def fingerprint(provider_name: str, model_id: str, prompt: str) -> str:
    blob = json.dumps([provider_name, model_id, prompt], ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RewriteResult:
    record_id: str
    provider: str
    text: str
    status: str
    fingerprint: str
    attempts: int = 0
    cached: bool = False
    error: str | None = None

    def variant_row(self) -> dict:
        return {"id": self.record_id, "provider": self.provider, "status": self.status,
                "text": self.text, "fingerprint": self.fingerprint}


class ResponseCache:
    """One JSON file per request fingerprint; writes go through a temp file + rename."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> dict | None:
        try:
            return json.loads(self.path(key).read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            logger.warning("ignoring corrupt cache entry %s", key)
            return None

    def put(self, key: str, record: dict) -> None:
        atomic_write_text(self.path(key), json.dumps(record, indent=1, ensure_ascii=False) + "\n")


def is_refusal(text: str, phrases: Iterable[str] = DEFAULT_REFUSAL_PHRASES) -> bool:
    low = text.strip().lower()
    return not low or any(p in low for p in phrases)


def rewrite_abstract(
    provider: Provider,
    abstract: str,
    cache: ResponseCache,
    client: Client | None = None,
    record_id: str = "",
    max_attempts: int = MAX_ATTEMPTS,
    backoff: float = BACKOFF_BASE,
    sleep: Callable[[float], None] = time.sleep,
) -> RewriteResult:
    prompt = build_prompt(abstract)
    key = fingerprint(provider.name, provider.model_id, prompt)
    hit = cache.get(key)
    if hit is not None and hit.get("status") in (OK, REFUSED):
        return RewriteResult(record_id, provider.name, hit["text"], hit["status"], key, 0, True, hit.get("error"))

    if client is None:
        client = build_client(provider)
    phrases = provider.options.get("refusal_phrases", DEFAULT_REFUSAL_PHRASES)
    started = datetime.now(timezone.utc).isoformat()
    text, status, error, attempts = "", FAILED, None, 0
    for attempt in range(1, max_attempts + 1):
        attempts = attempt
        try:
            text = client.complete(prompt)
        except TransientError as exc:
            error = str(exc)
            logger.info("%s %s attempt %d/%d failed: %s", provider.name, record_id, attempt, max_attempts, exc)
            if attempt < max_attempts:
                sleep(backoff * 2 ** (attempt - 1) * (1.0 + random.random()))
            continue
        except PermanentError as exc:
            error = str(exc)
            logger.info("%s %s attempt %d failed permanently: %s", provider.name, record_id, attempt, exc)
            break
        logger.info("%s %s attempt %d/%d ok", provider.name, record_id, attempt, max_attempts)
        status = REFUSED if is_refusal(text, phrases) else OK
        error = None
        break

    cache.put(key, {
        "fingerprint": key,
        "provider": provider.name,
        "model": provider.model_id,
        "kind": provider.kind,
        "params": provider.params,
        "prompt": prompt,
        "text": text if status != FAILED else "",
        "status": status,
        "error": error,
        "attempts": attempts,
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(),
    })
    return RewriteResult(record_id, provider.name, text if status != FAILED else "", status, key, attempts, False, error)


def rewrite_corpus(
    providers: Sequence[Provider],
    corpus: Iterable[tuple[str, str]],
    cache: ResponseCache,
    max_in_flight: int = 4,
    clients: Mapping[str, Client] | None = None,
    max_attempts: int = MAX_ATTEMPTS,
    backoff: float = BACKOFF_BASE,
    sleep: Callable[[float], None] = time.sleep,
) -> list[RewriteResult]:
    """Attempt every (record, provider) pair once.

    Each provider gets its own pool of ``max_in_flight`` workers, so one slow
    or failing provider cannot starve the others.  Results come back grouped
    by provider, in corpus order.
    """
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be positive")
    records = list(corpus)
    clients = dict(clients or {})
    for p in providers:
        if p.name not in clients:
            clients[p.name] = build_client(p)

    def run(provider: Provider, rid: str, abstract: str) -> RewriteResult:
        try:
            return rewrite_abstract(provider, abstract, cache, clients[provider.name], rid,
                                    max_attempts=max_attempts, backoff=backoff, sleep=sleep)
        except ValueError as exc:
            return RewriteResult(rid, provider.name, "", FAILED, "", 0, False, str(exc))

    pools = [ThreadPoolExecutor(max_workers=max_in_flight, thread_name_prefix=p.name) for p in providers]
    try:
        futures = [[pool.submit(run, p, rid, text) for rid, text in records] for p, pool in zip(providers, pools)]
        return [f.result() for group in futures for f in group]
    finally:
        for pool in pools:
            pool.shutdown(wait=True)


def run_report(results: Iterable[RewriteResult], providers: Sequence[Provider]) -> dict:
    report: dict = {}
    for p in providers:
        report[p.name] = {"model": p.model_id, "kind": p.kind, "params": p.params,
                          OK: 0, REFUSED: 0, FAILED: 0, "cached": 0, "requests": 0, "failures": []}
    for r in results:
        entry = report[r.provider]
        entry[r.status] += 1
        entry["cached"] += int(r.cached)
        entry["requests"] += r.attempts
        if r.status == FAILED:
            entry["failures"].append({"id": r.record_id, "error": r.error})
    return report


def dump_variants(results: Iterable[RewriteResult]) -> str:
    return "".join(json.dumps(r.variant_row(), ensure_ascii=False, sort_keys=True) + "\n" for r in results)


def load_variants(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]

