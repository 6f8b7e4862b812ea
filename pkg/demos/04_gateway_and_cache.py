"""Talking to an OpenAI-compatible endpoint, with retries and a disk cache.

Starts the bundled local stub server, makes it fail twice, and shows the
client retrying, then serves the same request again from the cache.

    python demos/04_gateway_and_cache.py
"""

import tempfile

import numpy as np

from finvision.charting import encode_png
from finvision.llm_gateway import CachedBackend, ChatRequest, HttpBackend, Message, cache_stats
from finvision.stub_server import StubServer

image = encode_png(np.full((8, 8, 3), 128, dtype=np.uint8))
request = ChatRequest("gpt-4o-mini", 0.3, (Message.user("Describe this chart.", [image]),))

with tempfile.TemporaryDirectory() as cache_dir, StubServer(reply="Strategy 1: sideways | hold") as srv:
    srv.fail_next(503, 429)
    http = HttpBackend(srv.base_url, api_key="demo", sleep=lambda s: print(f"  backing off {s:.2f}s"))
    backend = CachedBackend(http, cache_dir)

    first = backend.complete(request)
    print(f"first call: {first.text!r} after {srv.calls} HTTP attempts")
    second = backend.complete(request)
    print(f"second call: {second.text!r}, HTTP attempts still {srv.calls}")
    print(f"cache: {cache_stats(cache_dir)}; hits {backend.hits}, misses {backend.misses}")
    body = srv.requests[-1]
    parts = [p["type"] for p in body["messages"][0]["content"]]
    print(f"request body parts: {parts}")
