"""Shared plumbing for HTTP backend adapters.

Images travel as base64-encoded PNG strings; masks as base64-encoded
1-bit PNGs.  Every adapter error carries the backend name and an excerpt
of the raw payload so failures are debuggable from logs alone.
"""

from __future__ import annotations

import base64
import io

import numpy as np
import requests
from PIL import Image

from .errors import BackendUnreachableError, MalformedResponseError
from .geometry import Mask, RasterImage

_EXCERPT_LEN = 200


def image_to_b64(image: RasterImage) -> str:
    buf = io.BytesIO()
    image.to_pil().save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def b64_to_image(data: str, name: str | None = None) -> RasterImage:
    raw = base64.b64decode(data)
    with Image.open(io.BytesIO(raw)) as im:
        return RasterImage.from_pil(im, name=name)


def mask_to_b64(mask: Mask) -> str:
    buf = io.BytesIO()
    Image.fromarray(mask.bits).convert("1").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def b64_to_mask(data: str) -> Mask:
    raw = base64.b64decode(data)
    with Image.open(io.BytesIO(raw)) as im:
        return Mask(np.asarray(im.convert("1"), dtype=bool))


def excerpt(payload) -> str:
    text = payload if isinstance(payload, str) else repr(payload)
    return text[:_EXCERPT_LEN]


def post_json(backend: str, url: str, payload: dict, timeout: float = 60.0) -> dict:
    """POST a JSON document and return the parsed JSON reply.

    Raises BackendUnreachableError for transport failures and
    MalformedResponseError for bad status codes or unparseable bodies.
    """
    try:
        resp = requests.post(url, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise BackendUnreachableError(backend, f"POST {url} failed: {exc}") from exc
    if resp.status_code != 200:
        raise MalformedResponseError(
            backend, f"HTTP {resp.status_code} from {url}: {excerpt(resp.text)}"
        )
    try:
        doc = resp.json()
    except ValueError as exc:
        raise MalformedResponseError(
            backend, f"non-JSON reply from {url}: {excerpt(resp.text)}"
        ) from exc
    if not isinstance(doc, dict):
        raise MalformedResponseError(
            backend, f"expected a JSON object from {url}, got: {excerpt(resp.text)}"
        )
    return doc


def require_field(backend: str, doc: dict, field: str):
    if field not in doc:
        raise MalformedResponseError(
            backend, f"reply missing '{field}': {excerpt(doc)}"
        )
    return doc[field]
