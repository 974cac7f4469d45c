"""Shared test helpers: random graph builders, independent oracles, and a
loopback stub embedding server."""
from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from flowrag.graph_model import FlowEdge, FlowGraph, FlowNode, LineStyle, NodeShape

VALUE_POOL = ["start", "check alarm", "send report", "stop", "retry", "wait"]
LABEL_POOL = [None, "yes", "no", "ok"]
SHAPES = list(NodeShape)
STYLES = list(LineStyle)


def random_graph(
    rng: random.Random,
    max_nodes: int = 5,
    min_nodes: int = 1,
    value_pool=VALUE_POOL,
    label_pool=LABEL_POOL,
    graph_id: str = "",
) -> FlowGraph:
    n = rng.randint(min_nodes, max_nodes)
    ids = [chr(ord("A") + i) for i in range(n)]
    nodes = [
        FlowNode(id=ids[i], value=rng.choice(value_pool), shape=rng.choice(SHAPES))
        for i in range(n)
    ]
    edges = []
    triples = set()
    for _ in range(rng.randint(0, 2 * n)):
        src, dst = rng.choice(ids), rng.choice(ids)
        value = rng.choice(label_pool)
        if (src, dst, value) in triples:
            continue
        triples.add((src, dst, value))
        edges.append(
            FlowEdge(
                src=src,
                dst=dst,
                value=value,
                bidirectional=rng.random() < 0.25,
                line_style=rng.choice(STYLES),
            )
        )
    return FlowGraph(nodes=tuple(nodes), edges=tuple(edges), graph_id=graph_id)


# ---------------------------------------------------------------------------
# Brute-force edit distance oracle, independent of the package's solvers:
# enumerate every injective partial node mapping; within each mapping, brute
# force the edge matching per endpoint group.
# ---------------------------------------------------------------------------


def _norm(value):
    return "" if value is None else " ".join(value.split()).casefold()


def _edge_groups(graph: FlowGraph, index: dict[str, int]) -> dict:
    groups: dict = {}
    for edge in graph.edges:
        si, di = index[edge.src], index[edge.dst]
        if edge.bidirectional:
            key = ("b", min(si, di), max(si, di))
        else:
            key = ("d", si, di)
        groups.setdefault(key, []).append(_norm(edge.value))
    return groups


def _group_min_cost(pred_values, truth_values, costs) -> float:
    best = [float("inf")]

    def recurse(i: int, used: frozenset, acc: float) -> None:
        if i == len(pred_values):
            total = acc + (len(truth_values) - len(used)) * costs.edge_insert
            if total < best[0]:
                best[0] = total
            return
        recurse(i + 1, used, acc + costs.edge_delete)
        for j, tv in enumerate(truth_values):
            if j in used:
                continue
            sub = 0.0 if pred_values[i] == tv else costs.edge_substitute
            recurse(i + 1, used | {j}, acc + sub)

    recurse(0, frozenset(), 0.0)
    return best[0]


def oracle_ged(pred: FlowGraph, truth: FlowGraph, costs) -> float:
    p_nodes, t_nodes = list(pred.nodes), list(truth.nodes)
    n1, n2 = len(p_nodes), len(t_nodes)
    p_index = {n.id: i for i, n in enumerate(p_nodes)}
    t_index = {n.id: i for i, n in enumerate(t_nodes)}
    p_groups = _edge_groups(pred, p_index)
    t_groups = _edge_groups(truth, t_index)

    def mapping_cost(assign: list) -> float:
        cost = 0.0
        used = [j for j in assign if j is not None]
        for i, j in enumerate(assign):
            if j is None:
                cost += costs.node_delete
            elif _norm(p_nodes[i].value) != _norm(t_nodes[j].value):
                cost += costs.node_substitute
        cost += (n2 - len(used)) * costs.node_insert
        handled = set()
        for (cls, a, b), p_values in p_groups.items():
            ja, jb = assign[a], assign[b]
            if ja is None or jb is None:
                cost += len(p_values) * costs.edge_delete
                continue
            tkey = ("b", min(ja, jb), max(ja, jb)) if cls == "b" else ("d", ja, jb)
            handled.add(tkey)
            cost += _group_min_cost(p_values, t_groups.get(tkey, []), costs)
        for tkey, t_values in t_groups.items():
            if tkey not in handled:
                cost += len(t_values) * costs.edge_insert
        return cost

    best = [float("inf")]

    def enumerate_mappings(i: int, assign: list, used: frozenset) -> None:
        if i == n1:
            total = mapping_cost(assign)
            if total < best[0]:
                best[0] = total
            return
        enumerate_mappings(i + 1, assign + [None], used)
        for j in range(n2):
            if j not in used:
                enumerate_mappings(i + 1, assign + [j], used | {j})

    enumerate_mappings(0, [], frozenset())
    return best[0]


# ---------------------------------------------------------------------------
# Retrieval fixtures: corpora whose graphs share no vocabulary, with QA
# questions quoting node values verbatim.
# ---------------------------------------------------------------------------


def disjoint_corpus(count: int, nodes_per_graph: int = 4, tokens_per_value: int = 8):
    """Graphs with globally unique tokens in every node value and edge label,
    plus one node question per graph quoting a node value verbatim.

    Values carry several unique tokens so that an exact quote outweighs
    hash-bucket collision noise from unrelated chunks even at corpus scale."""
    from flowrag.synthgen import QaCategory, QaItem

    graphs = []
    qa_items = []
    for gi in range(count):
        ids = [f"N{ni + 1}" for ni in range(nodes_per_graph)]
        nodes = tuple(
            FlowNode(
                id=ids[ni],
                value=" ".join(
                    f"tok{gi}{letter}{ni}"
                    for letter in "abcdefghijklmnop"[:tokens_per_value]
                ),
                shape=NodeShape.TERMINATOR if ni == 0 else NodeShape.PROCESS,
            )
            for ni in range(nodes_per_graph)
        )
        edges = tuple(
            FlowEdge(ids[ni], ids[ni + 1], value=f"lbl{gi}x{ni}")
            for ni in range(nodes_per_graph - 1)
        )
        graph = FlowGraph(nodes=nodes, edges=edges, graph_id=f"g{gi:03d}")
        graphs.append(graph)
        target = nodes[gi % nodes_per_graph]
        qa_items.append(
            QaItem(
                question=f"What happens after {target.value}?",
                graph_id=graph.graph_id,
                gold_node_ids=frozenset({target.id}),
                category=QaCategory.NODE,
            )
        )
    return graphs, qa_items


def mismatch_qa(qa_items):
    """Negative control: every question claims the next graph as gold."""
    from flowrag.synthgen import QaItem

    rotated = []
    count = len(qa_items)
    for i, item in enumerate(qa_items):
        wrong = qa_items[(i + 1) % count]
        rotated.append(
            QaItem(
                question=item.question,
                graph_id=wrong.graph_id,
                gold_node_ids=wrong.gold_node_ids,
                category=item.category,
            )
        )
    return rotated


# ---------------------------------------------------------------------------
# Loopback stub embedding server implementing the /embed wire protocol.
# ---------------------------------------------------------------------------


def stub_vector(text: str, dimension: int) -> list[float]:
    """Deterministic per-text embedding the tests can recompute."""
    values = [0.0] * dimension
    for i, byte in enumerate(text.encode("utf-8")):
        values[i % dimension] += float(byte)
    norm = sum(v * v for v in values) ** 0.5 or 1.0
    return [v / norm for v in values]


class StubEmbedServer:
    """Serves POST /embed. ``status_plan`` is a list of statuses to emit for
    successive requests (200 means serve normally); once exhausted every
    request succeeds. ``truncate`` drops the last embedding of each response
    and ``ragged`` varies the dimension per row, for protocol-error tests.
    Records each request body for assertions."""

    def __init__(
        self,
        dimension: int = 8,
        status_plan: list[int] | None = None,
        truncate: bool = False,
        ragged: bool = False,
    ):
        self.dimension = dimension
        self.status_plan = list(status_plan or [])
        self.truncate = truncate
        self.ragged = ragged
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with outer._lock:
                    outer.requests.append(body)
                    status = outer.status_plan.pop(0) if outer.status_plan else 200
                if status != 200:
                    payload = json.dumps({"error": f"injected {status}"}).encode()
                    self.send_response(status)
                else:
                    embeddings = [
                        stub_vector(
                            text,
                            outer.dimension + (i % 2 if outer.ragged else 0),
                        )
                        for i, text in enumerate(body["inputs"])
                    ]
                    if outer.truncate and embeddings:
                        embeddings = embeddings[:-1]
                    payload = json.dumps({"embeddings": embeddings}).encode()
                    self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubEmbedServer":
        self._thread.start()
        return self

    def __exit__(self, *exc_info):
        self._server.shutdown()
        self._server.server_close()
