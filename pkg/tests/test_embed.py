"""Toy embedder math, EMB1 codec, embedding store, external embedder protocol."""

import json
import struct

import numpy as np
import pytest
from PIL import Image

from herdpipe.crop import CropRecord, write_crop_manifest
from herdpipe.embed import (
    MAGIC,
    TOY_DIM,
    TOY_GRID,
    EmbeddingStore,
    StoreRecord,
    build_store,
    embed_crops,
    embedding_filename,
    open_store,
    read_embedding,
    run_external_embedder,
    toy_embedder,
    write_embedding,
)
from herdpipe.errors import (
    FormatError,
    IncompleteStoreError,
    InvalidInputError,
    NotAnEmbeddingError,
    StageError,
    StoreInconsistentError,
    TruncatedEmbeddingError,
)

from oracles import area_average_reference


class TestToyEmbedder:
    def test_constant_raster_gives_uniform_vector(self):
        for value in (0, 77, 255):
            vec = toy_embedder(np.full((24, 30), value, dtype=np.uint8))
            assert vec.shape == (TOY_DIM,)
            assert np.allclose(vec, 1.0 / TOY_GRID, atol=1e-12)

    def test_row_major_flatten(self):
        # a single hot pixel on the 16x16 grid lands at index row*16 + col
        raster = np.zeros((TOY_GRID, TOY_GRID))
        raster[2, 5] = 160.0
        vec = toy_embedder(raster)
        assert vec[2 * TOY_GRID + 5] == pytest.approx(1.0)
        assert np.count_nonzero(vec) == 1

    def test_divisible_size_pools_exact_block_means(self, rng):
        arr = rng.uniform(0, 255, size=(32, 32))
        blocks = arr.reshape(TOY_GRID, 2, TOY_GRID, 2).mean(axis=(1, 3))
        expect = blocks.reshape(-1)
        expect = expect / np.linalg.norm(expect)
        assert np.allclose(toy_embedder(arr), expect, atol=1e-12)

    def test_matches_reference_integration(self, rng):
        for _ in range(8):
            h, w = int(rng.integers(1, 60)), int(rng.integers(1, 60))
            arr = rng.uniform(0, 255, size=(h, w))
            want = area_average_reference(arr, TOY_GRID).reshape(-1)
            want = want / np.linalg.norm(want)
            assert np.allclose(toy_embedder(arr), want, atol=1e-10)

    def test_rgb_uses_channel_mean(self, rng):
        rgb = rng.uniform(0, 255, size=(20, 20, 3))
        assert np.allclose(toy_embedder(rgb), toy_embedder(rgb.mean(axis=2)), atol=1e-12)

    def test_unit_norm_always(self, rng):
        for _ in range(20):
            h, w = int(rng.integers(1, 40)), int(rng.integers(1, 40))
            vec = toy_embedder(rng.uniform(0, 255, size=(h, w)))
            assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_shapes(self):
        with pytest.raises(InvalidInputError):
            toy_embedder(np.zeros((0, 5)))
        with pytest.raises(InvalidInputError):
            toy_embedder(np.zeros((2, 2, 3, 1)))


class TestEmb1Codec:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        vec = rng.standard_normal(129).astype(np.float32)
        write_embedding(tmp_path / "a.emb", vec)
        back = read_embedding(tmp_path / "a.emb")
        assert back.dtype == np.float32
        assert np.array_equal(back, vec)

    def test_file_layout(self, tmp_path):
        vec = np.array([1.5, -2.0], dtype=np.float32)
        write_embedding(tmp_path / "a.emb", vec)
        data = (tmp_path / "a.emb").read_bytes()
        assert data[:4] == MAGIC == b"EMB1"
        assert struct.unpack("<I", data[4:8]) == (2,)
        assert data[8:] == vec.tobytes()
        assert len(data) == 16

    def test_bad_magic(self, tmp_path):
        (tmp_path / "a.emb").write_bytes(b"NOPE" + b"\x00" * 8)
        with pytest.raises(NotAnEmbeddingError):
            read_embedding(tmp_path / "a.emb")

    def test_truncated_header(self, tmp_path):
        (tmp_path / "a.emb").write_bytes(b"EMB1\x02\x00")
        with pytest.raises(TruncatedEmbeddingError):
            read_embedding(tmp_path / "a.emb")

    def test_truncated_payload(self, tmp_path):
        write_embedding(tmp_path / "a.emb", np.ones(4, dtype=np.float32))
        data = (tmp_path / "a.emb").read_bytes()
        (tmp_path / "a.emb").write_bytes(data[:-3])
        with pytest.raises(TruncatedEmbeddingError):
            read_embedding(tmp_path / "a.emb")

    def test_trailing_bytes(self, tmp_path):
        write_embedding(tmp_path / "a.emb", np.ones(4, dtype=np.float32))
        with open(tmp_path / "a.emb", "ab") as fh:
            fh.write(b"xx")
        with pytest.raises(FormatError, match="trailing"):
            read_embedding(tmp_path / "a.emb")

    def test_non_finite_rejected_both_ways(self, tmp_path):
        with pytest.raises(FormatError):
            write_embedding(tmp_path / "a.emb", [1.0, float("nan")])
        payload = MAGIC + struct.pack("<I", 1) + struct.pack("<f", float("inf"))
        (tmp_path / "b.emb").write_bytes(payload)
        with pytest.raises(FormatError):
            read_embedding(tmp_path / "b.emb")

    def test_vector_shape_validated(self, tmp_path):
        with pytest.raises(InvalidInputError):
            write_embedding(tmp_path / "a.emb", np.zeros((2, 2)))
        with pytest.raises(InvalidInputError):
            write_embedding(tmp_path / "a.emb", np.zeros(0))


def store_entries(rng, n=3, dim=8):
    labels = ["rest", None, "walk"][:n] + [None] * max(0, n - 3)
    entries = []
    for i in range(n):
        vec = rng.standard_normal(dim).astype(np.float32)
        entries.append((f"{i + 1:07d}_pig_01.jpg", vec,
                        {"label": labels[i], "identity": "pig_01",
                         "frame_global_index": i + 1}))
    return entries


class TestStore:
    def test_build_then_open_round_trip(self, tmp_path, rng):
        entries = store_entries(rng)
        built = build_store(tmp_path / "store", entries)
        opened = open_store(tmp_path / "store")
        assert opened.records == built.records
        assert opened.dim == 8
        for rec, (name, vec, meta) in zip(opened.records, entries):
            assert rec.crop_filename == name
            assert rec.embedding_filename == embedding_filename(name)
            assert rec.label == meta["label"]
            assert rec.identity == "pig_01"
            assert np.array_equal(opened.vector(rec), vec)

    def test_matrix_stacks_in_record_order(self, tmp_path, rng):
        entries = store_entries(rng)
        store = build_store(tmp_path / "store", entries)
        mat = store.matrix()
        assert mat.shape == (3, 8)
        assert mat.dtype == np.float64
        for i, (_, vec, _) in enumerate(entries):
            assert np.allclose(mat[i], vec.astype(np.float64))
        assert store.labels() == ["rest", None, "walk"]

    def test_mixed_dims_rejected_at_build(self, tmp_path, rng):
        entries = [("a.jpg", np.ones(4)), ("b.jpg", np.ones(5))]
        with pytest.raises(StoreInconsistentError):
            build_store(tmp_path / "store", entries)

    def test_missing_file_detected(self, tmp_path, rng):
        build_store(tmp_path / "store", store_entries(rng))
        (tmp_path / "store" / "0000002_pig_01.emb").unlink()
        with pytest.raises(IncompleteStoreError, match="0000002"):
            open_store(tmp_path / "store")

    def test_stray_file_detected(self, tmp_path, rng):
        build_store(tmp_path / "store", store_entries(rng))
        write_embedding(tmp_path / "store" / "intruder.emb", np.ones(8))
        with pytest.raises(StoreInconsistentError, match="intruder"):
            open_store(tmp_path / "store")

    def test_dim_drift_detected(self, tmp_path, rng):
        build_store(tmp_path / "store", store_entries(rng))
        write_embedding(tmp_path / "store" / "0000001_pig_01.emb", np.ones(5))
        with pytest.raises(StoreInconsistentError):
            open_store(tmp_path / "store")


class TestEmbedCrops:
    def test_store_carries_metadata_and_toy_vectors(self, tmp_path, rng):
        crop_dir = tmp_path / "crops"
        crop_dir.mkdir()
        records = []
        rasters = {}
        for i, label in [(1, "rest"), (2, None)]:
            raster = rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)
            name = f"{i:07d}_pig_01.png"
            Image.fromarray(raster).save(crop_dir / name)
            rasters[name] = raster
            records.append(CropRecord(name, i, "pig_01", label))
        store = embed_crops(crop_dir, records, tmp_path / "store")
        assert store.dim == TOY_DIM
        assert [r.label for r in store.records] == ["rest", None]
        assert [r.frame_global_index for r in store.records] == [1, 2]
        for rec in store.records:
            want = toy_embedder(rasters[rec.crop_filename]).astype(np.float32)
            assert np.array_equal(store.vector(rec), want)


FAKE_EMBEDDER = r"""
import json, struct, sys
manifest, out_dir, dim = sys.argv[1], sys.argv[2], int(sys.argv[3])
skip = set(sys.argv[4:])
for line in open(manifest):
    rec = json.loads(line)
    if "filename" not in rec:
        continue
    stem = rec["filename"].rsplit(".", 1)[0]
    if stem in skip:
        continue
    vec = [float(len(stem))] * dim
    payload = b"EMB1" + struct.pack("<I", dim) + struct.pack(f"<{dim}f", *vec)
    open(f"{out_dir}/{stem}.emb", "wb").write(payload)
"""


class TestExternalEmbedder:
    def setup_scene(self, tmp_path):
        records = [CropRecord("0000001_a.jpg", 1, "a", "rest"),
                   CropRecord("0000002_b.jpg", 2, "b", None)]
        manifest = tmp_path / "crops.jsonl"
        write_crop_manifest(manifest, records, [], out_size=(8, 8),
                            bg_color=(0, 0, 0), encoder="jpeg")
        script = tmp_path / "embedder.py"
        script.write_text(FAKE_EMBEDDER)
        return records, manifest, script

    def test_happy_path(self, tmp_path):
        records, manifest, script = self.setup_scene(tmp_path)
        cmd = f"python3 {script} {{manifest}} {{out_dir}} {{dim}}"
        store = run_external_embedder(cmd, manifest, records, tmp_path / "store", dim=6)
        assert store.dim == 6
        assert [r.crop_filename for r in store.records] == [r.filename for r in records]
        assert [r.label for r in store.records] == ["rest", None]
        vec = store.vector(store.records[0])
        assert np.array_equal(vec, np.full(6, float(len("0000001_a")), dtype=np.float32))
        # the command's output dir is indexed by a manifest, so it reopens clean
        assert open_store(tmp_path / "store").records == store.records

    def test_nonzero_exit_reported(self, tmp_path):
        records, manifest, script = self.setup_scene(tmp_path)
        script.write_text("import sys; sys.exit(3)")
        cmd = f"python3 {script} {{manifest}} {{out_dir}} {{dim}}"
        with pytest.raises(StageError, match="exited 3"):
            run_external_embedder(cmd, manifest, records, tmp_path / "store", dim=6)

    def test_missing_output_detected(self, tmp_path):
        records, manifest, script = self.setup_scene(tmp_path)
        cmd = f"python3 {script} {{manifest}} {{out_dir}} {{dim}} 0000002_b"
        with pytest.raises(IncompleteStoreError, match="0000002_b.jpg"):
            run_external_embedder(cmd, manifest, records, tmp_path / "store", dim=6)

    def test_wrong_dim_detected(self, tmp_path):
        records, manifest, script = self.setup_scene(tmp_path)
        cmd = f"python3 {script} {{manifest}} {{out_dir}} 3"
        with pytest.raises(StoreInconsistentError):
            run_external_embedder(cmd, manifest, records, tmp_path / "store", dim=6)
