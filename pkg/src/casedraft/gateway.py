"""Backend adapters for draft generation.

Three kinds: a local JSON text-generation server, a hosted single-message
chat-completions API, and a deterministic in-process mock.  Every call is
stateless: one prompt in, one draft out, no conversation history on the
wire.  Transient transport failures retry with exponential backoff; other
failures map to typed errors.  The hosted API key comes from the
environment only, never from config files.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Optional, Union

import requests

from .grounding import CoordinateAlternative, RequiredFact, TokenPhrase, facts_from_input
from .model import ReportSectionKind
from .prompting import PromptSpec

__all__ = [
    "BackendKind",
    "Faithful",
    "DropFacts",
    "InjectCoordinate",
    "InjectName",
    "FaultProfile",
    "BackendConfig",
    "backend_config_from_dict",
    "GeneratedDraft",
    "GatewayError",
    "TransportError",
    "ProtocolError",
    "BackendRefusal",
    "generate",
    "mock_complete",
    "MOCK_CREATED_AT",
    "DEFAULT_API_KEY_ENV",
]


class BackendKind(Enum):
    LOCAL_GENERATE = "local_generate"
    HOSTED_CHAT = "hosted_chat"
    MOCK = "mock"


@dataclass(frozen=True)
class Faithful:
    """Restate every fact found in the prompt's input block."""


@dataclass(frozen=True)
class DropFacts:
    """Faithful, minus the last `count` facts of the restatement."""

    count: int


@dataclass(frozen=True)
class InjectCoordinate:
    """Faithful, plus one coordinate pair the input never mentioned."""

    latitude: float
    longitude: float


@dataclass(frozen=True)
class InjectName:
    """Faithful, plus one person the input never mentioned."""

    name: str


FaultProfile = Union[Faithful, DropFacts, InjectCoordinate, InjectName]

DEFAULT_API_KEY_ENV = "CASEDRAFT_API_KEY"


@dataclass(frozen=True)
class BackendConfig:
    name: str
    kind: BackendKind
    endpoint_url: str = ""
    model_name: str = ""
    max_new_tokens: int = 512
    temperature: float = 0.7
    timeout: float = 120.0
    max_retries: int = 2
    retry_backoff: float = 0.5  # seconds; doubles per attempt
    api_key_env: str = DEFAULT_API_KEY_ENV
    concurrency: int = 1
    fault_profile: FaultProfile = field(default_factory=Faithful)


_FAULT_KINDS = {
    "faithful": lambda d: Faithful(),
    "drop_facts": lambda d: DropFacts(int(d["count"])),
    "inject_coordinate": lambda d: InjectCoordinate(float(d["latitude"]), float(d["longitude"])),
    "inject_name": lambda d: InjectName(str(d["name"])),
}


def backend_config_from_dict(name: str, d: dict) -> BackendConfig:
    """Build a profile from one config-file entry; API keys never appear here."""
    fault = d.get("fault", "faithful")
    if isinstance(fault, str):
        fault_profile = _FAULT_KINDS[fault]({})
    else:
        fault_profile = _FAULT_KINDS[fault["kind"]](fault)
    return BackendConfig(
        name=name,
        kind=BackendKind(d["kind"]),
        endpoint_url=d.get("endpoint_url", ""),
        model_name=d.get("model_name", ""),
        max_new_tokens=int(d.get("max_new_tokens", 512)),
        temperature=float(d.get("temperature", 0.7)),
        timeout=float(d.get("timeout", 120.0)),
        max_retries=int(d.get("max_retries", 2)),
        retry_backoff=float(d.get("retry_backoff", 0.5)),
        api_key_env=d.get("api_key_env", DEFAULT_API_KEY_ENV),
        concurrency=int(d.get("concurrency", 1)),
        fault_profile=fault_profile,
    )


@dataclass(frozen=True)
class GeneratedDraft:
    prompt_id: str
    backend_label: str
    text: str
    latency_s: float
    created_at: datetime
    token_estimate: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "backend_label": self.backend_label,
            "text": self.text,
            "latency_s": self.latency_s,
            "created_at": self.created_at.isoformat(),
            "token_estimate": self.token_estimate,
        }


class GatewayError(Exception):
    """Base for backend failures."""


class TransportError(GatewayError):
    """Network-level failure that survived every retry."""


class ProtocolError(GatewayError):
    """The backend answered, but not in the shape the adapter expects."""


class BackendRefusal(GatewayError):
    """The backend answered with a non-success status."""


MOCK_CREATED_AT = datetime(1970, 1, 1, tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# deterministic mock

def _restate(fact: RequiredFact) -> str:
    coord_alts = [a for a in fact.alternatives if isinstance(a, CoordinateAlternative)]
    phrase_alts = [a for a in fact.alternatives if isinstance(a, TokenPhrase)]
    if fact.description.startswith("location cluster"):
        # centroid label means the records carry no place name; restate a
        # member coordinate, which always grounds
        member = coord_alts[-1] if coord_alts else None
        place = phrase_alts[0].text if phrase_alts and not phrase_alts[0].text.startswith("(") else None
        at = f"({member.latitude:.6f}, {member.longitude:.6f})" if member else ""
        if place:
            return f"Recorded activity at {place} {at}".rstrip()
        return f"Recorded activity at {at}".rstrip()
    if fact.description.endswith("identifier"):
        return f"identifier {phrase_alts[0].text}"
    return phrase_alts[0].text


def mock_complete(prompt: PromptSpec, fault_profile: FaultProfile = Faithful()) -> str:
    """Deterministic draft text for a prompt, no model involved.

    Faithful restates every fact of the input block, one line each.
    DropFacts(k) omits the last k lines; the Inject profiles add one
    fabricated statement at the end.
    """
    facts = facts_from_input(prompt.section, prompt.input_format, prompt.topic, prompt.input_block())
    lines = [f"Draft of the {prompt.section.value.replace('_', ' ')} section."]
    if prompt.section is ReportSectionKind.INTRODUCTION:
        qcount = sum(1 for f in facts if f.description.startswith("question"))
        lines.append(f"The mandate poses {qcount} investigative questions.")

    kept = facts
    if isinstance(fault_profile, DropFacts):
        kept = facts[: max(0, len(facts) - fault_profile.count)]
    lines.extend(_restate(f) for f in kept)

    if isinstance(fault_profile, InjectCoordinate):
        lines.append(
            "Relevant activity was also traced to "
            f"({fault_profile.latitude:.6f}, {fault_profile.longitude:.6f})."
        )
    elif isinstance(fault_profile, InjectName):
        lines.append(f"The records further implicate {fault_profile.name}.")

    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# HTTP adapters

def _post_json(url: str, payload: dict, config: BackendConfig, headers: Optional[dict] = None):
    """POST with retries on transport failure; returns (body, latency_s)."""
    last_exc: Optional[Exception] = None
    for attempt in range(config.max_retries + 1):
        started = time.monotonic()
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=config.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_exc = exc
            if attempt < config.max_retries:
                time.sleep(config.retry_backoff * (2 ** attempt))
            continue
        latency = time.monotonic() - started
        if not 200 <= response.status_code < 300:
            snippet = response.text[:200]
            raise BackendRefusal(
                f"{config.name}: status {response.status_code}: {snippet}"
            )
        try:
            return response.json(), latency
        except ValueError as exc:
            raise ProtocolError(f"{config.name}: response is not JSON") from exc
    raise TransportError(
        f"{config.name}: unreachable after {config.max_retries + 1} attempts: {last_exc}"
    )


def _generate_local(config: BackendConfig, prompt: PromptSpec) -> GeneratedDraft:
    base = (config.endpoint_url or "http://127.0.0.1:5001").rstrip("/")
    url = base if base.endswith("/api/v1/generate") else f"{base}/api/v1/generate"
    payload = {
        "prompt": prompt.rendered_text,
        "max_length": config.max_new_tokens,
        "temperature": config.temperature,
    }
    body, latency = _post_json(url, payload, config)
    try:
        text = body["results"][0]["text"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"{config.name}: no results[0].text in response") from exc
    if not isinstance(text, str) or not text.strip():
        raise ProtocolError(f"{config.name}: backend returned empty text")
    return GeneratedDraft(
        prompt_id=prompt.prompt_id,
        backend_label=config.name,
        text=text,
        latency_s=latency,
        created_at=datetime.now(timezone.utc),
    )


def _generate_hosted(config: BackendConfig, prompt: PromptSpec) -> GeneratedDraft:
    import os

    key = os.environ.get(config.api_key_env, "")
    if not key:
        raise GatewayError(
            f"{config.name}: no API key in environment variable {config.api_key_env}"
        )
    base = config.endpoint_url.rstrip("/")
    url = base if base.endswith("/chat/completions") else f"{base}/v1/chat/completions"
    payload = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt.rendered_text}],
        "max_tokens": config.max_new_tokens,
        "temperature": config.temperature,
    }
    headers = {"Authorization": f"Bearer {key}"}
    body, latency = _post_json(url, payload, config, headers)
    try:
        text = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"{config.name}: no choices[0].message.content in response") from exc
    if not isinstance(text, str) or not text.strip():
        raise ProtocolError(f"{config.name}: backend returned empty text")
    usage = body.get("usage") or {}
    estimate = usage.get("completion_tokens")
    return GeneratedDraft(
        prompt_id=prompt.prompt_id,
        backend_label=config.name,
        text=text,
        latency_s=latency,
        created_at=datetime.now(timezone.utc),
        token_estimate=estimate if isinstance(estimate, int) else None,
    )


def generate(config: BackendConfig, prompt: PromptSpec) -> GeneratedDraft:
    """One stateless completion: exactly this prompt goes over the wire."""
    if config.kind is BackendKind.MOCK:
        text = mock_complete(prompt, config.fault_profile)
        return GeneratedDraft(
            prompt_id=prompt.prompt_id,
            backend_label=config.name,
            text=text,
            latency_s=0.0,
            created_at=MOCK_CREATED_AT,
            token_estimate=max(1, len(text) // 4),
        )
    if config.kind is BackendKind.LOCAL_GENERATE:
        return _generate_local(config, prompt)
    return _generate_hosted(config, prompt)
