"""Shared fixtures and independent dense oracles for the test suite.

The oracles here deliberately reimplement the math with dense matrices and
plain loops; they never call into the package's sparse or tape code paths.
"""

import json
import math
import os
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from tagforge.graph import Graph, from_edge_list


# ---------------------------------------------------------------------------
# dense oracles


def dense_normalized_adjacency(graph: Graph, add_self_loops: bool = True) -> np.ndarray:
    """Materialize D^{-1/2} (A [+ I]) D^{-1/2} densely from scratch."""
    n = graph.num_nodes
    a = np.zeros((n, n))
    for i in range(n):
        for j in graph.col_indices[graph.row_offsets[i] : graph.row_offsets[i + 1]]:
            a[i, j] = 1.0
    if add_self_loops:
        a = np.minimum(a + np.eye(n), 1.0)
    deg = a.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


def dense_gt_attention(h, graph, params, heads):
    """Masked n x n multi-head attention oracle.

    Returns (output, alphas) where alphas[head] is the dense attention
    matrix (rows sum to 1 over each neighborhood).
    """
    n = graph.num_nodes
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        mask[i, i] = True
        for j in graph.col_indices[graph.row_offsets[i] : graph.row_offsets[i + 1]]:
            mask[i, j] = True
    width = params["W_Q"].value.shape[1]
    d_head = width // heads
    out = np.zeros((n, width))
    alphas = []
    for head in range(heads):
        sl = slice(head * d_head, (head + 1) * d_head)
        q = h @ params["W_Q"].value[:, sl]
        k = h @ params["W_K"].value[:, sl]
        v = h @ params["W_V"].value[:, sl]
        scores = q @ k.T / math.sqrt(d_head)
        scores = np.where(mask, scores, -np.inf)
        scores -= scores.max(axis=1, keepdims=True)
        e = np.where(mask, np.exp(scores), 0.0)
        alpha = e / e.sum(axis=1, keepdims=True)
        out[:, sl] = alpha @ v
        alphas.append(alpha)
    out = out + h @ params["W_S"].value + params["b"].value
    return out, alphas


def random_graph(n: int, p: float, seed: int) -> Graph:
    """Erdos-Renyi graph via numpy's own generator (independent of tagforge)."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    return from_edge_list(n, np.stack([iu[keep], ju[keep]], axis=1))


# ---------------------------------------------------------------------------
# on-disk dataset fixtures


def write_planetoid(directory, name, edges, labels, features=None, texts=None, split=None):
    """Write a dataset in the documented on-disk layout; returns the dir."""
    from tagforge.features import save_embedding_file

    os.makedirs(directory, exist_ok=True)
    stem = os.path.join(directory, name)
    with open(stem + ".edges", "w") as fh:
        for i, j in edges:
            fh.write(f"{i} {j}\n")
    with open(stem + ".labels", "w") as fh:
        for label in labels:
            fh.write(f"{label}\n")
    if features is not None:
        save_embedding_file(stem + ".features", np.asarray(features))
    if texts is not None:
        with open(stem + ".texts", "w") as fh:
            fh.write("\n".join(texts) + "\n")
    if split is not None:
        with open(stem + ".split.json", "w") as fh:
            json.dump(split, fh)
    return directory


# ---------------------------------------------------------------------------
# mock embedding service


class _EmbedHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        state = self.server.state
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        state["requests"].append(payload)
        if state["fail_remaining"] > 0:
            state["fail_remaining"] -= 1
            self.send_response(500)
            self.end_headers()
            return
        dim = state["dim_override"].pop(0) if state["dim_override"] else state["dim"]
        embeddings = [state["vector_fn"](text, dim) for text in payload["texts"]]
        body = json.dumps({"embeddings": embeddings}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):  # keep pytest output clean
        pass


def _default_vector(text: str, dim: int) -> list[float]:
    # integer-valued so float32 round trips are exact
    base = sum(ord(c) for c in text) % 97
    return [float(base + k) for k in range(dim)]


class EmbedServer:
    def __init__(self):
        self.httpd = HTTPServer(("127.0.0.1", 0), _EmbedHandler)
        self.httpd.state = {
            "requests": [],
            "fail_remaining": 0,
            "dim": 4,
            "dim_override": [],
            "vector_fn": _default_vector,
        }
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.httpd.server_port}"

    @property
    def requests(self) -> list:
        return self.httpd.state["requests"]

    def expected_vector(self, text: str) -> list[float]:
        return _default_vector(text, self.httpd.state["dim"])

    def set_failures(self, n: int) -> None:
        self.httpd.state["fail_remaining"] = n

    def set_dim_overrides(self, dims: list[int]) -> None:
        self.httpd.state["dim_override"] = list(dims)

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def embed_server():
    server = EmbedServer()
    yield server
    server.close()
