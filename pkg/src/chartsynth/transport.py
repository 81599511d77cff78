"""HTTP plumbing shared by the generation client and the service answerer.

One JSON request record per call, line-delimited JSON records back.
Retries cover transport failures only; HTTP error statuses and malformed
payloads are surfaced immediately.
"""

from __future__ import annotations

import json
import logging
import time

import requests

log = logging.getLogger(__name__)


class TransportError(Exception):
    """Endpoint unreachable after bounded retries."""


class ProtocolError(Exception):
    """The service replied with something outside the wire contract."""


def post_json_lines(
    url: str,
    payload: dict,
    timeout: float = 30.0,
    retries: int = 3,
    backoff: float = 0.5,
) -> list[dict]:
    """POST one JSON record; parse a line-delimited JSON reply."""
    last: Exception | None = None
    for attempt in range(retries):
        try:
            response = requests.post(
                url,
                data=json.dumps(payload).encode("utf-8"),
                headers={"Content-Type": "application/json"},
                timeout=timeout,
            )
        except (requests.ConnectionError, requests.Timeout) as err:
            last = err
            if attempt + 1 < retries:
                time.sleep(backoff * (2**attempt))
            continue
        if response.status_code != 200:
            raise ProtocolError(f"service returned HTTP {response.status_code}")
        records = []
        for lineno, line in enumerate(response.text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise ProtocolError(f"reply line {lineno} is not JSON: {err}") from None
            if not isinstance(record, dict):
                raise ProtocolError(f"reply line {lineno} is not a JSON object")
            records.append(record)
        return records
    log.warning("giving up on %s after %d attempts", url, retries)
    raise TransportError(f"cannot reach {url}: {last}")
