"""LLM transport: a chat-completion HTTP client plus a deterministic
offline stub so the whole pipeline runs without network access.

Configuration comes from the environment: ``ENSOMAP_LLM_API_KEY``,
``ENSOMAP_LLM_BASE_URL``, ``ENSOMAP_LLM_MODEL``. The stub is selected
explicitly (``--llm-stub`` in the CLI) or whenever no API key is set.
"""

from __future__ import annotations

import json
import os
import re
from importlib import resources


class LlmError(RuntimeError):
    pass


def load_prompt(name: str) -> str:
    return resources.files("ensomap.prompts").joinpath(f"{name}.txt").read_text()


def render_prompt(name: str, **params: str) -> str:
    text = load_prompt(name)
    for key, value in params.items():
        text = text.replace("{{" + key + "}}", value)
    return text


class HttpLlmClient:
    """Minimal chat-completion client (OpenAI-compatible wire format)."""

    def __init__(
        self,
        api_key: str | None = None,
        base_url: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
    ):
        self.api_key = api_key or os.environ.get("ENSOMAP_LLM_API_KEY", "")
        self.base_url = (base_url or os.environ.get("ENSOMAP_LLM_BASE_URL", "https://api.openai.com/v1")).rstrip("/")
        self.model = model or os.environ.get("ENSOMAP_LLM_MODEL", "gpt-4o-mini")
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        import httpx

        try:
            resp = httpx.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self.api_key}"},
                json={
                    "model": self.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": 0.0,
                },
                timeout=self.timeout,
            )
            resp.raise_for_status()
        except Exception as exc:
            raise LlmError(f"LLM unreachable: {exc}") from exc
        return resp.json()["choices"][0]["message"]["content"]


# canned region fixtures for offline mode; keys are normalized region names
_STUB_REGIONS = {
    "southern california": [
        "Los Angeles-CA", "San Diego-CA", "Orange-CA",
        "Riverside-CA", "San Bernardino-CA", "Ventura-CA",
    ],
    "northern california": [
        "Shasta-CA", "Butte-CA", "Humboldt-CA", "Mendocino-CA", "Siskiyou-CA",
    ],
    "bay area": [
        "San Francisco-CA", "Alameda-CA", "Santa Clara-CA", "Marin-CA", "San Mateo-CA",
    ],
    "test north": ["North-XX"],
    "test south": ["South-XX"],
    "test all": ["North-XX", "South-XX"],
}


class StubLlmClient:
    """Deterministic canned responses keyed by prompt intent. Never
    performs network access."""

    def __init__(self, extra_regions: dict[str, list[str]] | None = None):
        self.regions = dict(_STUB_REGIONS)
        if extra_regions:
            self.regions.update({k.lower(): v for k, v in extra_regions.items()})

    def complete(self, prompt: str) -> str:
        if prompt.startswith("Given a US region"):
            m = re.search(r"Region:\s*(.+?)\s*$", prompt, re.DOTALL)
            name = (m.group(1) if m else "").strip().lower()
            return json.dumps(self.regions.get(name, []))
        if prompt.startswith("Given an input question"):
            m = re.search(r"Question:\s*(.+?)\s*$", prompt, re.DOTALL)
            return json.dumps(self._parse_question(m.group(1) if m else ""))
        if prompt.startswith("You are an expert in geographical analysis"):
            counties = re.findall(r"([A-Za-z .]+-[A-Z]{2})", prompt.rsplit("\n", 1)[-1])
            return f"Region covering {len(counties)} counties" if counties else "No counties"
        if prompt.startswith("You are a climate scientist"):
            return self._summary_from_buckets(prompt)
        raise LlmError("stub has no canned response for this prompt")

    @staticmethod
    def _parse_question(q: str) -> dict:
        ql = q.lower()
        m = re.search(r"over\s+(.+?)\s+(?:is\s+)?(above|below|over|under)\s+(-?[\d.]+)", ql)
        if m:
            kind = "threshold_above" if m.group(2) in ("above", "over") else "threshold_below"
            return {"kind": kind, "region": m.group(1), "x": float(m.group(3))}
        m = re.search(r"between\s+(-?[\d.]+)\s+and\s+(-?[\d.]+)\s+over\s+(.+?)(?:\?|$)", ql)
        if m:
            return {
                "kind": "between", "region": m.group(3).strip(),
                "x": float(m.group(1)), "y": float(m.group(2)),
            }
        m = re.search(r"(?:where\s+)?(.+?)\s+is\s+(higher|lower)\s+than\s+(.+?)(?:\?|$)", ql)
        if m:
            return {
                "kind": "region_vs_region", "region": m.group(1).strip(),
                "region_b": m.group(3).strip(), "op": m.group(2),
            }
        return {}

    @staticmethod
    def _summary_from_buckets(prompt: str) -> str:
        counts = dict.fromkeys(("high", "mod_high", "neutral", "mod_low", "low"), 0)
        for cat, body in re.findall(r'"(high|mod_high|neutral|mod_low|low)":\s*\[([^\]]*)\]', prompt):
            items = [s for s in body.split(",") if s.strip()]
            counts[cat] += len(items)
        dominant = max(counts, key=lambda c: counts[c])
        names = {
            "high": "high precipitation", "mod_high": "moderately high precipitation",
            "neutral": "neutral precipitation", "mod_low": "moderately low precipitation",
            "low": "low precipitation",
        }
        return (
            f"Sampled nodes show predominantly {names[dominant]} across the "
            f"listed regions, with secondary categories present in smaller "
            f"proportions."
        )


def default_client(stub: bool | None = None):
    """Stub unless an API key is configured (or stub is forced)."""
    if stub is None:
        stub = not os.environ.get("ENSOMAP_LLM_API_KEY")
    return StubLlmClient() if stub else HttpLlmClient()
