import json
import random

import pytest

from flowrag.chunker import Chunk, ChunkStrategy, SourceKind
from flowrag.embed import EmbeddingVector
from flowrag.errors import FlowragError
from flowrag.vstore import (
    DimensionMismatchError,
    IndexEntry,
    SnapshotError,
    VectorIndex,
)


def make_chunk(i: int, kind: SourceKind = SourceKind.GRAPH) -> Chunk:
    return Chunk(
        chunk_id=f"c{i:04d}",
        text=f"text {i}",
        source_kind=kind,
        graph_id=f"g{i % 7}" if kind is SourceKind.GRAPH else None,
        node_id=f"N{i % 3}" if kind is SourceKind.GRAPH else None,
        strategy=ChunkStrategy.PER_NODE if kind is SourceKind.GRAPH else None,
    )


def random_vector(rng: random.Random, dim: int) -> EmbeddingVector:
    values = [rng.gauss(0.0, 1.0) for _ in range(dim)]
    norm = sum(v * v for v in values) ** 0.5 or 1.0
    return EmbeddingVector(values=tuple(v / norm for v in values))


def build_index(rng: random.Random, count: int, dim: int = 16) -> VectorIndex:
    index = VectorIndex()
    index.upsert(
        [IndexEntry(chunk=make_chunk(i), vector=random_vector(rng, dim)) for i in range(count)]
    )
    return index


def scan_oracle(entries, query: EmbeddingVector, k: int):
    """Linear scan with float64 cosine; ties by ascending chunk id."""
    import numpy as np

    q = np.asarray(query.values, dtype=np.float64)
    qn = float(np.linalg.norm(q))
    scored = []
    for chunk, vector in entries:
        v = np.asarray(vector.values, dtype=np.float64)
        denom = float(np.linalg.norm(v)) * qn
        score = 0.0 if denom == 0.0 else float(np.dot(v, q) / denom)
        scored.append((score, chunk.chunk_id))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return scored[:k]


class TestUpsert:
    def test_insert_and_replace(self):
        rng = random.Random(1)
        index = VectorIndex()
        entries = [
            IndexEntry(chunk=make_chunk(i), vector=random_vector(rng, 8)) for i in range(3)
        ]
        assert index.upsert(entries) == 3
        assert len(index) == 3
        replacement = IndexEntry(chunk=make_chunk(1), vector=random_vector(rng, 8))
        assert index.upsert([replacement]) == 1
        assert len(index) == 3

    def test_empty_upsert_is_noop(self):
        index = VectorIndex()
        assert index.upsert([]) == 0
        assert len(index) == 0

    def test_mixed_dimensions_rejected_atomically(self):
        rng = random.Random(2)
        index = VectorIndex()
        index.upsert([IndexEntry(chunk=make_chunk(0), vector=random_vector(rng, 8))])
        bad = [
            IndexEntry(chunk=make_chunk(1), vector=random_vector(rng, 8)),
            IndexEntry(chunk=make_chunk(2), vector=random_vector(rng, 9)),
        ]
        with pytest.raises(DimensionMismatchError) as excinfo:
            index.upsert(bad)
        assert "c0002" in str(excinfo.value)
        assert len(index) == 1

    def test_duplicate_ids_within_call_rejected(self):
        rng = random.Random(3)
        index = VectorIndex()
        entries = [
            IndexEntry(chunk=make_chunk(1), vector=random_vector(rng, 8)),
            IndexEntry(chunk=make_chunk(1), vector=random_vector(rng, 8)),
        ]
        with pytest.raises(FlowragError):
            index.upsert(entries)
        assert len(index) == 0


class TestQuery:
    def test_stored_vector_is_rank_one(self):
        rng = random.Random(4)
        index = VectorIndex()
        entries = [
            IndexEntry(chunk=make_chunk(i), vector=random_vector(rng, 16)) for i in range(20)
        ]
        index.upsert(entries)
        hits = index.query(entries[7].vector, k=1)
        assert hits[0].chunk_id == "c0007"
        assert hits[0].score == pytest.approx(1.0, abs=1e-6)
        assert hits[0].rank == 1

    def test_k_larger_than_index(self):
        rng = random.Random(5)
        index = build_index(rng, 4)
        hits = index.query(random_vector(rng, 16), k=10)
        assert len(hits) == 4
        assert [h.rank for h in hits] == [1, 2, 3, 4]
        assert all(hits[i].score >= hits[i + 1].score for i in range(3))

    def test_matches_linear_scan_oracle(self):
        rng = random.Random(6)
        entries = [
            (make_chunk(i), random_vector(rng, 16)) for i in range(300)
        ]
        index = VectorIndex()
        index.upsert([IndexEntry(chunk=c, vector=v) for c, v in entries])
        for _ in range(20):
            query = random_vector(rng, 16)
            for k in (1, 3, 5):
                hits = index.query(query, k=k)
                expected = scan_oracle(entries, query, k)
                assert [(h.score, h.chunk_id) for h in hits] == expected

    def test_tie_break_by_chunk_id(self):
        vector = EmbeddingVector(values=(1.0, 0.0))
        index = VectorIndex()
        index.upsert(
            [
                IndexEntry(chunk=make_chunk(9), vector=vector),
                IndexEntry(chunk=make_chunk(2), vector=vector),
                IndexEntry(chunk=make_chunk(5), vector=vector),
            ]
        )
        hits = index.query(vector, k=3)
        assert [h.chunk_id for h in hits] == ["c0002", "c0005", "c0009"]

    def test_filter_predicate(self):
        rng = random.Random(7)
        index = VectorIndex()
        entries = [
            IndexEntry(chunk=make_chunk(0), vector=random_vector(rng, 8)),
            IndexEntry(
                chunk=make_chunk(1, kind=SourceKind.TEXT), vector=random_vector(rng, 8)
            ),
        ]
        index.upsert(entries)
        hits = index.query(
            random_vector(rng, 8),
            k=5,
            chunk_filter=lambda c: c.source_kind is SourceKind.GRAPH,
        )
        assert [h.chunk_id for h in hits] == ["c0000"]

    def test_dimension_mismatch(self):
        rng = random.Random(8)
        index = build_index(rng, 3, dim=8)
        with pytest.raises(DimensionMismatchError):
            index.query(random_vector(rng, 16), k=1)

    def test_empty_index_rejected(self):
        with pytest.raises(FlowragError):
            VectorIndex().query(EmbeddingVector(values=(1.0,)), k=1)

    def test_hits_carry_chunk_metadata(self):
        rng = random.Random(9)
        index = build_index(rng, 5)
        hit = index.query(random_vector(rng, 16), k=1)[0]
        assert hit.graph_id is not None
        assert hit.node_id is not None


class TestSnapshot:
    def test_round_trip_preserves_queries(self, tmp_path):
        rng = random.Random(10)
        index = build_index(rng, 50)
        queries = [random_vector(rng, 16) for _ in range(50)]
        before = [index.query(q, k=5) for q in queries]
        path = tmp_path / "index.snap"
        index.save(path)
        loaded = VectorIndex.load(path)
        after = [loaded.query(q, k=5) for q in queries]
        assert json.dumps([[h.to_dict() for h in hits] for hits in before]) == json.dumps(
            [[h.to_dict() for h in hits] for hits in after]
        )

    def test_byte_identical_snapshots(self, tmp_path):
        rng_a, rng_b = random.Random(11), random.Random(11)
        a, b = tmp_path / "a.snap", tmp_path / "b.snap"
        build_index(rng_a, 30).save(a)
        build_index(rng_b, 30).save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_truncated_file(self, tmp_path):
        rng = random.Random(12)
        path = tmp_path / "index.snap"
        build_index(rng, 10).save(path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 7])
        with pytest.raises(SnapshotError):
            VectorIndex.load(path)

    def test_version_mismatch(self, tmp_path):
        rng = random.Random(13)
        path = tmp_path / "index.snap"
        build_index(rng, 3).save(path)
        lines = path.read_bytes().split(b"\n", 1)
        header = json.loads(lines[0])
        header["version"] = 99
        path.write_bytes(json.dumps(header).encode() + b"\n" + lines[1])
        with pytest.raises(SnapshotError) as excinfo:
            VectorIndex.load(path)
        assert "expected" in str(excinfo.value) and "99" in str(excinfo.value)

    def test_wrong_format(self, tmp_path):
        path = tmp_path / "index.snap"
        path.write_bytes(b'{"format":"other","version":1}\n')
        with pytest.raises(SnapshotError):
            VectorIndex.load(path)

    def test_empty_index_round_trip(self, tmp_path):
        path = tmp_path / "empty.snap"
        VectorIndex().save(path)
        loaded = VectorIndex.load(path)
        assert len(loaded) == 0

    def test_trailing_garbage_rejected(self, tmp_path):
        rng = random.Random(14)
        path = tmp_path / "index.snap"
        build_index(rng, 3).save(path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(SnapshotError):
            VectorIndex.load(path)
