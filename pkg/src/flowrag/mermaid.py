"""Mermaid flowchart subset: parse scripts into FlowGraphs and render back.

Supported constructs:
  node shapes   A[text] process, A([text]) terminator, A{text} decision,
                A[/text/] input/output, A((text)) connector
  links         -->  solid arrow        ---   undirected (stored bidirectional)
                -.-> dotted arrow       -..-> dashed arrow (two dots)
                ==>  heavy arrow (collapses to solid)
                <--> <-.-> <-..-> <==>  bidirectional arrows
  edge labels   A -->|label| B   and   A -- label --> B
Anything else (subgraph, class, click, style, ...) errors loudly with a
1-based line number rather than silently dropping content.

Mermaid offers no escape mechanism inside node text, so bracket characters,
pipes and slashes are swapped for fullwidth lookalikes on render and swapped
back on parse.
"""
from __future__ import annotations

import re

from .errors import FlowragError
from .graph_model import (
    FlowEdge,
    FlowGraph,
    FlowNode,
    GraphIntegrityError,
    LineStyle,
    NodeShape,
    validate,
)

MermaidScript = str

DIRECTIONS = ("TD", "TB", "LR", "RL", "BT")


class MermaidSyntaxError(FlowragError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnsupportedFeatureError(FlowragError):
    def __init__(self, feature: str, line: int):
        super().__init__(f"line {line}: unsupported construct '{feature}'")
        self.feature = feature
        self.line = line


_ESCAPES = {
    "[": "［",  # fullwidth [
    "]": "］",
    "{": "｛",
    "}": "｝",
    "(": "（",
    ")": "）",
    "|": "｜",
    "/": "／",
}
_ESCAPE_TABLE = str.maketrans(_ESCAPES)
_UNESCAPE_TABLE = str.maketrans({v: k for k, v in _ESCAPES.items()})


def escape_text(text: str) -> str:
    return text.translate(_ESCAPE_TABLE)


def unescape_text(text: str) -> str:
    return text.translate(_UNESCAPE_TABLE)


_HEADER_RE = re.compile(r"^(?:flowchart|graph)\s+(TD|TB|LR|RL|BT)\s*$")
_UNSUPPORTED_RE = re.compile(
    r"^(subgraph|end|class|classDef|click|style|linkStyle|direction)\b"
)
_BARE_NODE_RE = re.compile(r"^(\w+)$")

# Order matters: two-character openers before their one-character prefixes.
_SHAPE_PATTERNS: list[tuple[re.Pattern, NodeShape]] = [
    (re.compile(r"^(\w+)\(\(([^()]*)\)\)$"), NodeShape.CONNECTOR),
    (re.compile(r"^(\w+)\(\[([^\[\]]*)\]\)$"), NodeShape.TERMINATOR),
    (re.compile(r"^(\w+)\[/([^\[\]/]*)/\]$"), NodeShape.INPUT_OUTPUT),
    (re.compile(r"^(\w+)\[([^\[\]]*)\]$"), NodeShape.PROCESS),
    (re.compile(r"^(\w+)\{([^{}]*)\}$"), NodeShape.DECISION),
]

# A node reference inside a link line: id plus optional inline shape text.
_NODE_REF_RE = re.compile(
    r"^(\w+)"
    r"(\(\([^()]*\)\)|\(\[[^\[\]]*\]\)|\[/[^\[\]/]*/\]|\[[^\[\]]*\]|\{[^{}]*\})?"
)

# Label-between-dashes link forms: A -- label --> B, A -. label .-> B, etc.
_INLINE_LABEL_RES: list[tuple[re.Pattern, LineStyle]] = [
    (re.compile(r"^\s*--\s+(.+?)\s+-->\s*"), LineStyle.SOLID),
    (re.compile(r"^\s*-\.\s+(.+?)\s+\.->\s*"), LineStyle.DOTTED),
    (re.compile(r"^\s*==\s+(.+?)\s+==>\s*"), LineStyle.SOLID),
]

_ARROW_RE = re.compile(
    r"^\s*(?P<bidi><)?(?P<body>-(?P<dots>\.+)->|-(?P<udots>\.+)-(?!>)|-{2,}>|-{3,}|={2,}>|={3,})"
    r"(?:\|(?P<label>[^|]*)\|)?\s*"
)


def _classify_arrow(match: re.Match, line_no: int) -> tuple[bool, LineStyle]:
    """Return (bidirectional, line_style) for a plain arrow match."""
    body = match.group("body")
    bidi = bool(match.group("bidi"))
    if match.group("dots") is not None:
        style = LineStyle.DOTTED if len(match.group("dots")) == 1 else LineStyle.DASHED
        return bidi, style
    if match.group("udots") is not None:
        if bidi:
            raise MermaidSyntaxError(f"malformed link '{match.group(0).strip()}'", line_no)
        style = LineStyle.DOTTED if len(match.group("udots")) == 1 else LineStyle.DASHED
        return True, style
    if body.endswith(">"):
        return bidi, LineStyle.SOLID
    # --- or === with no arrowhead: undirected, stored as bidirectional
    if bidi:
        raise MermaidSyntaxError(f"malformed link '{match.group(0).strip()}'", line_no)
    return True, LineStyle.SOLID


class _Builder:
    def __init__(self):
        self.order: list[str] = []
        self.nodes: dict[str, FlowNode] = {}
        self.edges: list[FlowEdge] = []

    def declare(self, node_id: str, value: str | None, shape: NodeShape | None):
        if node_id not in self.nodes:
            self.order.append(node_id)
            self.nodes[node_id] = FlowNode(
                id=node_id,
                value=node_id if value is None else value,
                shape=shape or NodeShape.UNSPECIFIED,
            )
        elif value is not None:
            # Explicit definition overrides an earlier implicit mention.
            self.nodes[node_id] = FlowNode(id=node_id, value=value, shape=shape)

    def build(self) -> FlowGraph:
        nodes = tuple(self.nodes[i] for i in self.order)
        graph = FlowGraph(nodes=nodes, edges=tuple(self.edges))
        violations = validate(graph)
        if violations:
            raise GraphIntegrityError(violations)
        return graph


def _parse_node_ref(builder: _Builder, text: str, line_no: int) -> tuple[str, str]:
    """Consume one node reference; returns (node_id, rest_of_line)."""
    match = _NODE_REF_RE.match(text)
    if not match or not match.group(1):
        raise MermaidSyntaxError(f"expected a node reference near '{text}'", line_no)
    node_id = match.group(1)
    shaped = match.group(2)
    if shaped is None:
        builder.declare(node_id, None, None)
    else:
        for pattern, shape in _SHAPE_PATTERNS:
            inner = pattern.match(node_id + shaped)
            if inner:
                builder.declare(node_id, unescape_text(inner.group(2)).strip(), shape)
                break
        else:
            raise MermaidSyntaxError(f"malformed node '{node_id}{shaped}'", line_no)
    return node_id, text[match.end():]


def _parse_link_line(builder: _Builder, line: str, line_no: int) -> None:
    src_id, rest = _parse_node_ref(builder, line, line_no)
    label: str | None = None
    bidirectional = False
    style: LineStyle | None = None
    for pattern, inline_style in _INLINE_LABEL_RES:
        match = pattern.match(rest)
        if match:
            label = unescape_text(match.group(1)).strip()
            style = inline_style
            rest = rest[match.end():]
            break
    if style is None:
        match = _ARROW_RE.match(rest)
        if not match:
            raise MermaidSyntaxError(f"malformed link near '{rest.strip()}'", line_no)
        bidirectional, style = _classify_arrow(match, line_no)
        if match.group("label") is not None:
            label = unescape_text(match.group("label")).strip()
        rest = rest[match.end():]
    dst_id, rest = _parse_node_ref(builder, rest, line_no)
    if rest.strip():
        raise MermaidSyntaxError(f"unexpected trailing content '{rest.strip()}'", line_no)
    builder.edges.append(
        FlowEdge(
            src=src_id,
            dst=dst_id,
            value=label or None,
            bidirectional=bidirectional,
            line_style=style,
        )
    )


def parse_mermaid(script: MermaidScript, graph_id: str = "") -> FlowGraph:
    """Parse a flowchart script into a FlowGraph.

    The direction header is required and recorded nowhere: graph content is
    layout-independent. Nodes first mentioned bare get their id as value and
    shape Unspecified.
    """
    if not script.strip():
        raise MermaidSyntaxError("empty script", 1)
    builder = _Builder()
    header_seen = False
    for line_no, raw in enumerate(script.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("%%"):
            continue
        if not header_seen:
            if not _HEADER_RE.match(line):
                raise MermaidSyntaxError(
                    "expected 'flowchart <dir>' or 'graph <dir>' header", line_no
                )
            header_seen = True
            continue
        unsupported = _UNSUPPORTED_RE.match(line)
        if unsupported:
            raise UnsupportedFeatureError(unsupported.group(1), line_no)
        node_def = None
        for pattern, shape in _SHAPE_PATTERNS:
            node_def = pattern.match(line)
            if node_def:
                builder.declare(
                    node_def.group(1), unescape_text(node_def.group(2)).strip(), shape
                )
                break
        if node_def:
            continue
        bare = _BARE_NODE_RE.match(line)
        if bare:
            builder.declare(bare.group(1), None, None)
            continue
        _parse_link_line(builder, line, line_no)
    if not header_seen:
        raise MermaidSyntaxError("expected 'flowchart <dir>' or 'graph <dir>' header", 1)
    graph = builder.build()
    if graph_id:
        graph = FlowGraph(nodes=graph.nodes, edges=graph.edges, graph_id=graph_id)
    return graph


_SHAPE_BRACKETS = {
    NodeShape.PROCESS: ("[", "]"),
    NodeShape.UNSPECIFIED: ("[", "]"),
    NodeShape.TERMINATOR: ("([", "])"),
    NodeShape.DECISION: ("{", "}"),
    NodeShape.INPUT_OUTPUT: ("[/", "/]"),
    NodeShape.CONNECTOR: ("((", "))"),
}

_STYLE_ARROWS = {
    LineStyle.SOLID: "-->",
    LineStyle.DOTTED: "-.->",
    LineStyle.DASHED: "-..->",
}


def render_mermaid(graph: FlowGraph, direction: str = "TD") -> MermaidScript:
    """Render a valid FlowGraph as a flowchart script (UTF-8, LF, trailing
    newline). Unspecified shapes render as process boxes."""
    violations = validate(graph)
    if violations:
        raise GraphIntegrityError(violations)
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    lines = [f"flowchart {direction}"]
    for node in graph.nodes:
        opener, closer = _SHAPE_BRACKETS[node.shape]
        lines.append(f"{node.id}{opener}{escape_text(node.value)}{closer}")
    for edge in graph.edges:
        arrow = _STYLE_ARROWS[edge.line_style]
        if edge.bidirectional:
            arrow = "<" + arrow
        if edge.value is not None:
            arrow = f"{arrow}|{escape_text(edge.value)}|"
        lines.append(f"{edge.src} {arrow} {edge.dst}")
    return "\n".join(lines) + "\n"
