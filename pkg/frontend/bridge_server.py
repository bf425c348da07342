"""Minimal HTTP bridge exposing the nftrack embedding boundary to the demo page.

Endpoints mirror docs/embed_abi.md one-to-one; bodies are raw byte buffers,
results are JSON. Run from the repo root:

    python3 frontend/bridge_server.py [--port 8787]

then serve the frontend statically (e.g. `python3 -m http.server -d frontend`)
and open index.html. The bridge keeps the boundary's single-threaded-per-handle
contract by serving requests on one thread.
"""

import argparse
import json
from http.server import BaseHTTPRequestHandler, HTTPServer
from urllib.parse import parse_qs, urlparse

from nftrack import embed


class Handler(BaseHTTPRequestHandler):
    def _send(self, payload, status=200):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_POST(self):
        url = urlparse(self.path)
        q = {k: v[0] for k, v in parse_qs(url.query).items()}
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length) if length else b""

        if url.path == "/init":
            handle = embed.embed_init(
                body, int(q["tw"]), int(q["th"]),
                float(q["pw"]), float(q["ph"]),
                float(q["fx"]), float(q["fy"]), float(q["cx"]), float(q["cy"]),
                q.get("config", "").encode("utf-8"))
            self._send({"handle": handle, "error": embed.embed_last_error()})
        elif url.path == "/process":
            r = embed.embed_process(int(q["handle"]), body,
                                    int(q["fw"]), int(q["fh"]),
                                    rgba=q.get("rgba", "1") == "1")
            self._send({"status": r.status,
                        "poseMatrix": list(r.pose_matrix),
                        "homography": list(r.homography),
                        "totalTimeUs": r.total_time_us})
        elif url.path == "/dispose":
            embed.embed_dispose(int(q["handle"]))
            self._send({"ok": True})
        else:
            self._send({"error": "unknown endpoint"}, status=404)

    def log_message(self, fmt, *args):
        pass


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--port", type=int, default=8787)
    args = ap.parse_args()
    server = HTTPServer(("127.0.0.1", args.port), Handler)
    print(f"embed bridge listening on http://127.0.0.1:{args.port}")
    server.serve_forever()


if __name__ == "__main__":
    main()
