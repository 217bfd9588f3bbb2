"""HTTP client for an external text rewriter.

The service receives one JSON object per target node::

    {"node_id": 3, "text": "...", "current_label": "c1",
     "neighbor_labels": ["c0", "c0"], "classes": ["c0", "c1"]}

and answers ``{"text": "..."}``.  The rewritten text is turned into a
feature row by the caller-provided ``embed`` function.
"""
from __future__ import annotations

import json
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import RewriterUnavailable

ENV_URL = "TAGROBUST_REWRITER_URL"


def build_request(node_id: int, text: str, current_label: str,
                  neighbor_labels: Sequence[str], classes: Sequence[str]) -> dict:
    return {
        "node_id": int(node_id),
        "text": text,
        "current_label": current_label,
        "neighbor_labels": list(neighbor_labels),
        "classes": list(classes),
    }


@dataclass
class RewriterClient:
    url: str
    embed: Callable[[str], np.ndarray]
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5

    @classmethod
    def from_env(cls, embed: Callable[[str], np.ndarray], **kw) -> Optional["RewriterClient"]:
        url = os.environ.get(ENV_URL)
        return cls(url, embed, **kw) if url else None

    def rewrite(self, request: dict) -> str:
        body = json.dumps(request).encode("utf-8")
        last = None
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(self.url, data=body, method="POST",
                                         headers={"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    doc = json.loads(resp.read().decode("utf-8"))
                text = doc["text"]
                if not isinstance(text, str):
                    raise ValueError("'text' must be a string")
                return text
            except (urllib.error.URLError, OSError, ValueError, KeyError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        raise RewriterUnavailable(f"rewriter at {self.url} failed: {last}")
