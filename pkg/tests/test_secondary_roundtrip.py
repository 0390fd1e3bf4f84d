"""Secondary-component acceptance: the review console round-trip.

Starts the real service over HTTP (uvicorn in a thread), seeds 50 sampled
titles, submits 50 verdicts through the same endpoints the console calls,
and checks the report and the lexicon activation effect. When the console
build (frontend/dist) is present, part of the flow is additionally driven
through the console's own compiled API client under node.
"""

from __future__ import annotations

import json
import random
import shutil
import socket
import subprocess
import threading
import time
from collections import Counter
from pathlib import Path

import httpx
import pytest

from subjectforge.review import ReviewCandidate, ReviewStore, ReviewTag, sample_for_review
from subjectforge.service import create_app

from conftest import block_entries, allow_entries

FRONTEND_DIST = Path(__file__).resolve().parents[1] / "frontend" / "dist"


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveServer:
    def __init__(self, app, port: int):
        import uvicorn

        self._config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self.base_url = f"http://127.0.0.1:{port}"

    def __enter__(self):
        self._thread.start()
        deadline = time.time() + 10
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.02)
        return self

    def __exit__(self, *exc):
        self._server.should_exit = True
        self._thread.join(timeout=5)


@pytest.fixture
def live_service(tmp_path):
    store = ReviewStore(tmp_path / "review.jsonl")
    candidates = [
        ReviewCandidate(
            id=f"qa-{i:03d}", subject=f"レビュー対象の件名 {i} をご覧ください", context_lines=(f"商品例：品{i}",)
        )
        for i in range(80)
    ]
    store.add_items(sample_for_review(candidates, 50, seed=4).items)
    static_dir = FRONTEND_DIST if FRONTEND_DIST.is_dir() else None
    app = create_app(store, base_entries=block_entries() + allow_entries(), static_dir=static_dir)
    with LiveServer(app, free_port()) as server:
        yield server, store


def test_fifty_verdict_roundtrip_over_http(live_service):
    server, store = live_service
    client = httpx.Client(base_url=server.base_url, timeout=10)

    queue = client.get("/api/review/queue", params={"status": "pending", "limit": 100}).json()
    assert len(queue["items"]) == 50
    assert queue["counts"]["pending"] == 50

    tags = client.get("/api/review/tags").json()["tags"]
    assert tags == [t.value for t in ReviewTag]

    rng = random.Random(99)
    expected_tags = Counter()
    approved = 0
    for item in queue["items"]:
        if rng.random() < 0.6:
            body = {"verdict": "approved", "tags": [], "reviewer": "console-test"}
            approved += 1
        else:
            chosen = rng.sample(tags, rng.randint(1, 2))
            body = {"verdict": "rejected", "tags": chosen, "reviewer": "console-test"}
            if "SensitiveItem" in chosen:
                body["ng_term"] = "ばか"
            expected_tags.update(chosen)
        resp = client.post(f"/api/review/{item['id']}/verdict", json=body)
        assert resp.status_code == 200, resp.text

    report = client.get("/api/review/report").json()
    assert report["approved"] + report["rejected"] == 50
    assert report["approved"] == approved
    assert report["pending"] == 0
    for tag in tags:
        assert report["tag_counts"][tag] == expected_tags.get(tag, 0)

    # duplicate submission is idempotent; a conflicting one returns the server state
    first = queue["items"][0]["id"]
    state = store.get(first)
    dup = client.post(
        f"/api/review/{first}/verdict",
        json={
            "verdict": state.status.value,
            "tags": [t.value for t in state.tags],
            "reviewer": "console-test",
            "ng_term": state.ng_term,
        },
    )
    assert dup.status_code == 200
    flipped = "rejected" if state.status.value == "approved" else "approved"
    conflict = client.post(
        f"/api/review/{first}/verdict", json={"verdict": flipped, "reviewer": "someone-else"}
    )
    assert conflict.status_code == 409
    assert conflict.json()["detail"]["item"]["status"] == state.status.value


def test_candidate_activation_changes_scan(live_service):
    server, _ = live_service
    client = httpx.Client(base_url=server.base_url, timeout=10)
    text = "ばかばかしい値引きの話をご覧ください"

    before = client.post("/api/lexicon/scan", json={"text": text, "mode": "substring"}).json()
    assert before["spans"] == []

    cand = client.post("/api/lexicon/candidates", json={"pattern": "ばか", "reason": "insult"}).json()
    still = client.post("/api/lexicon/scan", json={"text": text, "mode": "substring"}).json()
    assert still["spans"] == []  # queued, not active

    client.post(f"/api/lexicon/candidates/{cand['id']}/activate")
    after = client.post("/api/lexicon/scan", json={"text": text, "mode": "substring"}).json()
    assert [s["pattern"] for s in after["spans"]] == ["ばか", "ばか"]

    # discarding removes it again
    client.post(f"/api/lexicon/candidates/{cand['id']}/discard")
    gone = client.post("/api/lexicon/scan", json={"text": text, "mode": "substring"}).json()
    assert gone["spans"] == []


@pytest.mark.skipif(not FRONTEND_DIST.is_dir(), reason="console not built")
def test_console_assets_served(live_service):
    server, _ = live_service
    client = httpx.Client(base_url=server.base_url, timeout=10)
    index = client.get("/")
    assert index.status_code == 200
    assert "Subject Line Review" in index.text
    assert client.get("/app.js").status_code == 200
    assert client.get("/styles.css").status_code == 200


@pytest.mark.skipif(
    not FRONTEND_DIST.is_dir() or shutil.which("node") is None,
    reason="console build or node missing",
)
def test_console_client_drives_service(live_service, tmp_path):
    """Run the console's compiled api.js under node against the live server."""
    server, store = live_service
    pending = [i for i in store.items() if i.status.value == "pending"]
    target = pending[0].id
    script = f"""
const api = await import({json.dumps((FRONTEND_DIST / "api.js").as_uri())});
const store = new Map();
globalThis.sessionStorage = {{
  getItem: (k) => store.get(k) ?? null,
  setItem: (k, v) => store.set(k, v),
  removeItem: (k) => store.delete(k),
}};
const base = {json.dumps(server.base_url)};
const realFetch = globalThis.fetch;
globalThis.fetch = (path, init) => realFetch(base + path, init);

const queue = await api.fetchQueue('pending', 0, 100);
const decided = await api.submitVerdict({json.dumps(target)}, {{
  verdict: 'rejected',
  tags: ['UnnaturalLanguage'],
  reviewer: 'node-console',
}});
let conflictStatus = null;
try {{
  await api.submitVerdict({json.dumps(target)}, {{ verdict: 'approved', tags: [], reviewer: 'x' }});
}} catch (err) {{
  conflictStatus = err.status;
}}
const report = await api.fetchReport();
console.log(JSON.stringify({{
  queued: queue.items.length,
  decidedStatus: decided.status,
  conflictStatus,
  rejected: report.rejected,
}}));
"""
    script_path = tmp_path / "drive.mjs"
    script_path.write_text(script)
    proc = subprocess.run(
        ["node", str(script_path)], capture_output=True, text=True, timeout=30
    )
    assert proc.returncode == 0, proc.stderr
    result = json.loads(proc.stdout.strip().splitlines()[-1])
    assert result["queued"] == len(pending)
    assert result["decidedStatus"] == "rejected"
    assert result["conflictStatus"] == 409
    assert result["rejected"] >= 1
    assert store.get(target).reviewer == "node-console"
