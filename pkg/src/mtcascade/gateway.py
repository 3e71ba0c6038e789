"""Clients for remote translation and QE-scoring services.

Translation endpoints speak a chat-completions style protocol
(``POST {base_url}/chat/completions``); QE endpoints take
``{"source", "hypothesis"}`` at ``POST {base_url}/score`` and answer
``{"score": float}``.  Responses are cached on disk, keyed by a hash of the
endpoint identity and the full request payload.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

from .core import Batch, TranslationRecord
from .costmodel import CostModel, CostReport, cascade_flops
from .deferral import DeferralDecision, DeferralRule, select_deferrals
from .errors import ConfigError, EndpointError

log = logging.getLogger(__name__)

DEFAULT_PROMPT = "Translate the following text from {src_lang} into {tgt_lang}.\n{src_lang}: {source}\n{tgt_lang}:"
RETRY_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    auth_token_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 8
    prompt_template: str = DEFAULT_PROMPT
    greedy: bool = True
    max_tokens: int | None = None
    # QE endpoints only: raw score orientation.
    higher_is_better: bool = True
    backoff: float = 0.5

    def __post_init__(self):
        if not self.timeout > 0:
            raise ConfigError(f"timeout must be positive, got {self.timeout}")
        if self.max_in_flight < 1:
            raise ConfigError(f"max_in_flight must be >= 1, got {self.max_in_flight}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EndpointConfig":
        if "token" in data or "auth_token" in data:
            raise ConfigError("auth tokens are read from environment variables only; use auth_token_env")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad endpoint config: {exc}") from None

    def auth_headers(self) -> dict[str, str]:
        if not self.auth_token_env:
            return {}
        token = os.environ.get(self.auth_token_env)
        if not token:
            raise ConfigError(f"environment variable {self.auth_token_env} is not set")
        return {"Authorization": f"Bearer {token}"}


@dataclass(frozen=True)
class CacheEntry:
    key: str
    response: Any
    created_at: str


def cache_key(endpoint: EndpointConfig, path: str, payload: dict[str, Any]) -> str:
    identity = {
        "url": endpoint.base_url.rstrip("/") + path,
        "model": endpoint.model_name,
        "payload": payload,
    }
    blob = json.dumps(identity, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed response store under a directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> CacheEntry | None:
        path = self._path(key)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            log.warning("ignoring corrupt cache entry %s", path)
            return None
        return CacheEntry(data["key"], data["response"], data["created_at"])

    def put(self, key: str, response: Any) -> CacheEntry:
        entry = CacheEntry(key, response, datetime.now(timezone.utc).isoformat())
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(
            json.dumps({"key": key, "response": response, "created_at": entry.created_at}, ensure_ascii=False),
            encoding="utf-8",
        )
        os.replace(tmp, path)
        return entry


@dataclass(frozen=True)
class ItemError:
    index: int
    stage: str
    message: str
    attempts: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"index": self.index, "stage": self.stage, "message": self.message, "attempts": self.attempts}


@dataclass
class BatchOutcome:
    """Order-aligned results; ``values[i]`` is ``None`` where item ``i`` failed."""

    values: list[Any]
    errors: list[ItemError] = field(default_factory=list)
    requests: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors


def _post_with_retries(
    client: httpx.Client, endpoint: EndpointConfig, path: str, payload: dict, headers: dict
) -> tuple[Any, int]:
    """POST, retrying transport errors and retryable statuses; returns
    ``(json_body, attempts)`` or raises :class:`EndpointError`."""
    url = endpoint.base_url.rstrip("/") + path
    last = "no attempt made"
    for attempt in range(endpoint.max_retries + 1):
        if attempt and endpoint.backoff > 0:
            time.sleep(min(endpoint.backoff * 2 ** (attempt - 1), 30.0))
        try:
            resp = client.post(url, json=payload, headers=headers, timeout=endpoint.timeout)
        except httpx.HTTPError as exc:
            last = f"{type(exc).__name__}: {exc}"
            continue
        if resp.status_code in RETRY_STATUS:
            last = f"HTTP {resp.status_code}"
            continue
        if resp.status_code >= 400:
            err = EndpointError(f"HTTP {resp.status_code} from {url}")
            err.attempts = attempt + 1
            raise err
        try:
            return resp.json(), attempt + 1
        except ValueError:
            last = "response is not JSON"
    err = EndpointError(f"{url}: {last} after {endpoint.max_retries + 1} attempts")
    err.attempts = endpoint.max_retries + 1
    raise err


def _run_items(
    payloads: Sequence[dict],
    endpoint: EndpointConfig,
    path: str,
    parse: Callable[[Any], Any],
    cache: ResponseCache | None,
    stage: str,
    client: httpx.Client | None = None,
) -> BatchOutcome:
    headers = endpoint.auth_headers()
    values: list[Any] = [None] * len(payloads)
    errors: list[ItemError] = []
    pending: list[tuple[int, str]] = []
    for i, payload in enumerate(payloads):
        key = cache_key(endpoint, path, payload)
        entry = cache.get(key) if cache is not None else None
        if entry is not None:
            try:
                values[i] = parse(entry.response)
                continue
            except (KeyError, TypeError, ValueError, IndexError):
                log.warning("cache entry %s does not parse; refetching", key)
        pending.append((i, key))
    if not pending:
        return BatchOutcome(values, errors, 0)

    lock = threading.Lock()
    counter = {"requests": 0}

    def work(item: tuple[int, str]) -> None:
        i, key = item
        try:
            body, attempts = _post_with_retries(http, endpoint, path, payloads[i], headers)
        except EndpointError as exc:
            with lock:
                counter["requests"] += exc.attempts
                errors.append(ItemError(i, stage, str(exc), exc.attempts))
            return
        with lock:
            counter["requests"] += attempts
        try:
            values[i] = parse(body)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            with lock:
                errors.append(ItemError(i, stage, f"unexpected response shape: {exc!r}", attempts))
            return
        if cache is not None:
            cache.put(key, body)

    own = client is None
    http = client or httpx.Client(
        limits=httpx.Limits(max_connections=endpoint.max_in_flight, max_keepalive_connections=endpoint.max_in_flight)
    )
    try:
        with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
            list(pool.map(work, pending))
    finally:
        if own:
            http.close()
    errors.sort(key=lambda e: e.index)
    return BatchOutcome(values, errors, counter["requests"])


def translation_payload(source: str, endpoint: EndpointConfig, src_lang: str = "", tgt_lang: str = "") -> dict:
    prompt = endpoint.prompt_template.format(source=source, src_lang=src_lang, tgt_lang=tgt_lang)
    payload: dict[str, Any] = {
        "model": endpoint.model_name,
        "messages": [{"role": "user", "content": prompt}],
    }
    if endpoint.greedy:
        payload["temperature"] = 0.0
    if endpoint.max_tokens is not None:
        payload["max_tokens"] = endpoint.max_tokens
    return payload


def _parse_translation(body: Any) -> str:
    text = body["choices"][0]["message"]["content"]
    if not isinstance(text, str):
        raise TypeError("content is not a string")
    return text.strip()


def translate_batch(
    sources: Sequence[str],
    endpoint: EndpointConfig,
    which: str = "small",
    cache: ResponseCache | None = None,
    lang_pair: str = "",
    client: httpx.Client | None = None,
) -> BatchOutcome:
    """Translate every source with one model, in input order."""
    if which not in ("small", "large"):
        raise ValueError(f"which must be 'small' or 'large', got {which!r}")
    src_lang, _, tgt_lang = lang_pair.partition("-")
    payloads = [translation_payload(s, endpoint, src_lang, tgt_lang) for s in sources]
    return _run_items(payloads, endpoint, "/chat/completions", _parse_translation, cache, f"translate_{which}", client)


def score_batch(
    pairs: Sequence[tuple[str, str]],
    endpoint: EndpointConfig,
    cache: ResponseCache | None = None,
    client: httpx.Client | None = None,
) -> BatchOutcome:
    """QE-score ``(source, hypothesis)`` pairs; scores come back higher-is-better."""
    sign = 1.0 if endpoint.higher_is_better else -1.0

    def parse(body: Any) -> float:
        score = float(body["score"])
        if score != score or score in (float("inf"), float("-inf")):
            raise ValueError("non-finite score")
        return sign * score

    payloads = [{"model": endpoint.model_name, "source": s, "hypothesis": h} for s, h in pairs]
    return _run_items(payloads, endpoint, "/score", parse, cache, "qe_score", client)


@dataclass
class LiveResult:
    batch: Batch
    decision: DeferralDecision
    cost: CostReport | None
    errors: list[ItemError]
    requests: int = 0


def run_cascade_live(
    sources: Sequence[str],
    small: EndpointConfig,
    qe: EndpointConfig,
    large: EndpointConfig,
    eta: float,
    cost: CostModel,
    cache: ResponseCache | None = None,
    ids: Sequence[str] | None = None,
    lang_pair: str = "",
    name: str = "live",
) -> LiveResult:
    """Translate with the small model, QE-score everything, then send the
    lowest-scoring ``eta`` fraction to the large model.

    Items that fail to translate or score are excluded from ranking and
    reported in ``errors``.
    """
    for ep in (small, qe, large):
        ep.auth_headers()
    ids = list(ids) if ids is not None else [f"seg-{i}" for i in range(len(sources))]
    if len(ids) != len(sources):
        raise ValueError("ids and sources differ in length")
    errors: list[ItemError] = []
    requests = 0

    valid = [i for i, s in enumerate(sources) if s]
    errors += [ItemError(i, "input", "empty source") for i, s in enumerate(sources) if not s]
    hyps = translate_batch([sources[i] for i in valid], small, "small", cache, lang_pair)
    requests += hyps.requests
    errors += [ItemError(valid[e.index], e.stage, e.message, e.attempts) for e in hyps.errors]
    ok = [(i, hyps.values[j]) for j, i in enumerate(valid) if hyps.values[j] is not None]
    scores = score_batch([(sources[i], h) for i, h in ok], qe, cache)
    requests += scores.requests
    errors += [ItemError(ok[e.index][0], e.stage, e.message, e.attempts) for e in scores.errors]

    records = [
        TranslationRecord(
            id=ids[i],
            lang_pair=lang_pair or None,
            source=sources[i],
            hyp_small=hyp,
            qe_small=scores.values[j],
        )
        for j, (i, hyp) in enumerate(ok)
        if scores.values[j] is not None
    ]
    batch = Batch(tuple(records), name=name)
    decision = select_deferrals(batch, DeferralRule.qe(), eta)

    deferred = sorted(decision.deferred)
    if deferred:
        out = translate_batch([batch[i].source for i in deferred], large, "large", cache, lang_pair)
        requests += out.requests
        source_index = {rid: k for k, rid in enumerate(ids)}
        for e in out.errors:
            errors.append(ItemError(source_index[batch[deferred[e.index]].id], e.stage, e.message, e.attempts))
        updated = list(batch.records)
        for pos, i in enumerate(deferred):
            if out.values[pos] is not None:
                updated[i] = updated[i].replace(hyp_large=out.values[pos])
        batch = Batch(tuple(updated), name=name)

    report = cascade_flops(cost, decision.eta_effective, len(batch)) if len(batch) else None
    errors.sort(key=lambda e: (e.index, e.stage))
    return LiveResult(batch, decision, report, errors, requests)
