"""In-memory vector index with exact cosine top-k retrieval.

Search is a full scan: corpora here are hundreds of chunks, and evaluation
reproducibility matters more than speed. Ties break by ascending chunk id so
runs are deterministic.

Snapshot format (single file):
  line 1   JSON header {"format", "version", "dimension", "count"}
  n lines  chunk metadata, one JSON object per entry
  blob     n * dimension little-endian float32 vector values
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .chunker import Chunk
from .embed import EmbeddingVector
from .errors import FlowragError

_SNAPSHOT_FORMAT = "flowrag-vstore"
_SNAPSHOT_VERSION = 1


class DimensionMismatchError(FlowragError):
    pass


class SnapshotError(FlowragError):
    pass


@dataclass(frozen=True)
class IndexEntry:
    chunk: Chunk
    vector: EmbeddingVector


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    score: float
    rank: int
    graph_id: str | None = None
    node_id: str | None = None

    def to_dict(self) -> dict:
        obj: dict = {"chunk_id": self.chunk_id, "score": self.score, "rank": self.rank}
        if self.graph_id is not None:
            obj["graph_id"] = self.graph_id
        if self.node_id is not None:
            obj["node_id"] = self.node_id
        return obj


class VectorIndex:
    """Exact cosine index over chunks; one writer, then many readers."""

    def __init__(self):
        self._chunks: list[Chunk] = []
        self._vectors: list[np.ndarray] = []
        self._norms: list[float] = []
        self._by_id: dict[str, int] = {}
        self._dimension: int | None = None

    def __len__(self) -> int:
        return len(self._chunks)

    @property
    def dimension(self) -> int | None:
        return self._dimension

    def upsert(self, entries: list[IndexEntry]) -> int:
        """Insert or replace entries; all-or-nothing on bad input."""
        if not entries:
            return 0
        dimension = self._dimension
        seen: set[str] = set()
        for entry in entries:
            if entry.chunk.chunk_id in seen:
                raise FlowragError(
                    f"duplicate chunk_id {entry.chunk.chunk_id!r} in one upsert call"
                )
            seen.add(entry.chunk.chunk_id)
            if dimension is None:
                dimension = entry.vector.dimension
            elif entry.vector.dimension != dimension:
                raise DimensionMismatchError(
                    f"chunk {entry.chunk.chunk_id!r} has dimension "
                    f"{entry.vector.dimension}, index uses {dimension}"
                )
        self._dimension = dimension
        for entry in entries:
            vector = entry.vector.as_array()
            norm = float(np.linalg.norm(np.asarray(vector, dtype=np.float64)))
            position = self._by_id.get(entry.chunk.chunk_id)
            if position is None:
                self._by_id[entry.chunk.chunk_id] = len(self._chunks)
                self._chunks.append(entry.chunk)
                self._vectors.append(vector)
                self._norms.append(norm)
            else:
                self._chunks[position] = entry.chunk
                self._vectors[position] = vector
                self._norms[position] = norm
        return len(entries)

    def query(
        self,
        vector: EmbeddingVector,
        k: int,
        chunk_filter: Callable[[Chunk], bool] | None = None,
    ) -> list[RetrievalHit]:
        """Exact top-k by cosine among entries passing the filter."""
        if not self._chunks:
            raise FlowragError("query on an empty index")
        if k < 1:
            raise FlowragError(f"k must be positive, got {k}")
        if vector.dimension != self._dimension:
            raise DimensionMismatchError(
                f"query dimension {vector.dimension}, index uses {self._dimension}"
            )
        query = np.asarray(vector.values, dtype=np.float64)
        query_norm = float(np.linalg.norm(query))
        scored: list[tuple[float, str, int]] = []
        for position, chunk in enumerate(self._chunks):
            if chunk_filter is not None and not chunk_filter(chunk):
                continue
            denom = self._norms[position] * query_norm
            if denom == 0.0:
                score = 0.0
            else:
                score = float(
                    np.dot(np.asarray(self._vectors[position], dtype=np.float64), query)
                    / denom
                )
            scored.append((score, chunk.chunk_id, position))
        scored.sort(key=lambda item: (-item[0], item[1]))
        hits = []
        for rank, (score, chunk_id, position) in enumerate(scored[:k], start=1):
            chunk = self._chunks[position]
            hits.append(
                RetrievalHit(
                    chunk_id=chunk_id,
                    score=score,
                    rank=rank,
                    graph_id=chunk.graph_id,
                    node_id=chunk.node_id,
                )
            )
        return hits

    def save(self, path: str | Path) -> None:
        if self._dimension is None and self._chunks:
            raise SnapshotError("index dimension is unset")
        dimension = self._dimension or 0
        with open(path, "wb") as fh:
            header = {
                "format": _SNAPSHOT_FORMAT,
                "version": _SNAPSHOT_VERSION,
                "dimension": dimension,
                "count": len(self._chunks),
            }
            fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
            fh.write(b"\n")
            for chunk in self._chunks:
                fh.write(
                    json.dumps(
                        chunk.to_dict(), ensure_ascii=False, separators=(",", ":")
                    ).encode("utf-8")
                )
                fh.write(b"\n")
            for vector in self._vectors:
                fh.write(struct.pack(f"<{dimension}f", *[float(v) for v in vector]))

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        index = cls()
        with open(path, "rb") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise SnapshotError(f"unreadable snapshot header: {exc}") from exc
            if header.get("format") != _SNAPSHOT_FORMAT:
                raise SnapshotError(
                    f"expected format {_SNAPSHOT_FORMAT!r}, found {header.get('format')!r}"
                )
            if header.get("version") != _SNAPSHOT_VERSION:
                raise SnapshotError(
                    f"expected snapshot version {_SNAPSHOT_VERSION}, "
                    f"found {header.get('version')}"
                )
            count = header["count"]
            dimension = header["dimension"]
            entries = []
            for i in range(count):
                line = fh.readline()
                if not line:
                    raise SnapshotError(f"truncated snapshot: missing chunk {i}")
                try:
                    chunk = Chunk.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise SnapshotError(f"bad chunk record {i}: {exc}") from exc
                entries.append(chunk)
            for chunk in entries:
                blob = fh.read(4 * dimension)
                if len(blob) != 4 * dimension:
                    raise SnapshotError(
                        f"truncated snapshot: missing vector for {chunk.chunk_id!r}"
                    )
                values = struct.unpack(f"<{dimension}f", blob)
                index.upsert([
                    IndexEntry(chunk=chunk, vector=EmbeddingVector(values=values))
                ])
            if fh.read(1):
                raise SnapshotError("trailing bytes after snapshot payload")
        return index
