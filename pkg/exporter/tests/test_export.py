import json
import struct

import numpy as np
import pytest
from PIL import Image

from smexport.cli import main
from smexport.encoders import TinyEncoder, make_encoder
from smexport.export import ExportJob, export
from smexport.smeb import SMEB_MAGIC, SMEB_VERSION, default_index_path


def make_frames(tmp_path, logs=("log00",), cameras=("cam",), n=3, seed=0):
    rng = np.random.default_rng(seed)
    frames_dir = tmp_path / "frames"
    for log_id in logs:
        for cam in cameras:
            d = frames_dir / log_id / cam
            d.mkdir(parents=True, exist_ok=True)
            for i in range(n):
                img = Image.fromarray(
                    rng.integers(0, 255, size=(24, 32, 3), dtype=np.uint8)
                )
                img.save(d / f"{i * 100_000_000}.png")
    return frames_dir


def make_texts(tmp_path, texts):
    path = tmp_path / "texts.jsonl"
    with path.open("w") as fh:
        for qid, text in texts:
            fh.write(json.dumps({"query_id": qid, "text": text}) + "\n")
    return path


class TestTinyEncoder:
    def test_unit_norm_and_dim(self, tmp_path):
        enc = TinyEncoder(dim=32)
        vec = enc.encode_text("a red truck")
        assert vec.shape == (32,)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-6)

    def test_text_determinism(self):
        a = TinyEncoder(dim=16).encode_text("pedestrian crossing")
        b = TinyEncoder(dim=16).encode_text("pedestrian crossing")
        assert a.tobytes() == b.tobytes()

    def test_different_texts_differ(self):
        enc = TinyEncoder(dim=64)
        assert enc.encode_text("red truck").tobytes() != enc.encode_text("blue car").tobytes()

    def test_token_matrix(self):
        enc = TinyEncoder(dim=16)
        toks = enc.encode_text_tokens("vehicle turning left")
        assert toks.shape == (3, 16)

    def test_unknown_encoder_rejected(self):
        with pytest.raises(ValueError):
            make_encoder("warp")


class TestExport:
    def test_zero_inputs_valid_empty_file(self, tmp_path):
        texts = make_texts(tmp_path, [])
        out = tmp_path / "empty.smeb"
        report = export(ExportJob(encoder=TinyEncoder(dim=8),
                                  texts_file=str(texts), out_path=str(out)))
        assert report.rows == 0
        raw = out.read_bytes()
        magic, version, dim, rows = struct.unpack("<4sIIQ", raw[:20])
        assert magic == SMEB_MAGIC and version == SMEB_VERSION
        assert rows == 0 and dim == 8

    def test_three_texts_three_rows_all_text_kind(self, tmp_path):
        texts = make_texts(tmp_path, [("q0", "a"), ("q1", "b"), ("q2", "c")])
        out = tmp_path / "texts.smeb"
        report = export(ExportJob(encoder=TinyEncoder(dim=8),
                                  texts_file=str(texts), out_path=str(out)))
        assert report.rows == report.texts == 3
        records = [json.loads(l) for l in
                   default_index_path(out).read_text().splitlines()]
        assert [r["kind"] for r in records] == ["text"] * 3
        assert [r["row"] for r in records] == [0, 1, 2]

    def test_header_dim_equals_encoder_dim(self, tmp_path):
        frames = make_frames(tmp_path)
        out = tmp_path / "frames.smeb"
        encoder = TinyEncoder(dim=48)
        report = export(ExportJob(encoder=encoder, frames_dir=str(frames),
                                  out_path=str(out)))
        raw = out.read_bytes()
        _, _, dim, rows = struct.unpack("<4sIIQ", raw[:20])
        assert dim == encoder.dim == report.dim
        assert rows == report.rows == 3

    def test_reexport_byte_identical(self, tmp_path):
        frames = make_frames(tmp_path, logs=("log00", "log01"), n=4)
        texts = make_texts(tmp_path, [("q0", "vehicle near pedestrian")])
        out_a = tmp_path / "a.smeb"
        out_b = tmp_path / "b.smeb"
        for out in (out_a, out_b):
            export(ExportJob(encoder=TinyEncoder(dim=32), frames_dir=str(frames),
                             texts_file=str(texts), out_path=str(out)))
        assert out_a.read_bytes() == out_b.read_bytes()
        assert default_index_path(out_a).read_text() == \
            default_index_path(out_b).read_text()

    def test_unreadable_media_skipped_with_warning(self, tmp_path):
        frames = make_frames(tmp_path, n=2)
        bad = frames / "log00" / "cam" / "999999.png"
        bad.write_bytes(b"this is not a png")
        out = tmp_path / "skip.smeb"
        report = export(ExportJob(encoder=TinyEncoder(dim=8),
                                  frames_dir=str(frames), out_path=str(out)))
        assert report.rows == 2
        assert any("999999" in w for w in report.warnings)

    def test_bad_timestamp_filename_warned(self, tmp_path):
        frames = make_frames(tmp_path, n=1)
        img = Image.new("RGB", (8, 8))
        img.save(frames / "log00" / "cam" / "notanumber.png")
        out = tmp_path / "warn.smeb"
        report = export(ExportJob(encoder=TinyEncoder(dim=8),
                                  frames_dir=str(frames), out_path=str(out)))
        assert report.rows == 1
        assert any("bad timestamp" in w for w in report.warnings)

    def test_dim_mismatch_aborts(self, tmp_path):
        class Lying:
            dim = 8

            def encode_image(self, path):
                return np.zeros(9, dtype=np.float32)

        frames = make_frames(tmp_path, n=1)
        with pytest.raises(RuntimeError, match="dim"):
            export(ExportJob(encoder=Lying(), frames_dir=str(frames),
                             out_path=str(tmp_path / "x.smeb")))

    def test_text_token_rows_share_query_id(self, tmp_path):
        texts = make_texts(tmp_path, [("q0", "vehicle turning left")])
        out = tmp_path / "tok.smeb"
        report = export(ExportJob(encoder=TinyEncoder(dim=8), texts_file=str(texts),
                                  out_path=str(out), text_tokens=True))
        assert report.rows == 3
        records = [json.loads(l) for l in
                   default_index_path(out).read_text().splitlines()]
        assert all(r["query_id"] == "q0" for r in records)


class TestCli:
    def test_end_to_end(self, tmp_path, capsys):
        frames = make_frames(tmp_path)
        texts = make_texts(tmp_path, [("q0", "hello")])
        out = tmp_path / "cli.smeb"
        code = main(["--frames-dir", str(frames), "--texts-file", str(texts),
                     "--encoder", "tiny", "--dim", "16", "--out", str(out)])
        assert code == 0
        assert "wrote 4 rows" in capsys.readouterr().out
        assert out.exists()

    def test_requires_some_input(self, capsys):
        assert main(["--out", "x.smeb"]) == 2


class TestPrimaryEngineInterop:
    """The exporter's only contract with the engine is the file format."""

    def test_files_parse_in_primary_engine(self, tmp_path):
        smine = pytest.importorskip("smine.embeddings")
        frames = make_frames(tmp_path, logs=("log00",), cameras=("cam_a", "cam_b"))
        texts = make_texts(tmp_path, [("q0", "a red truck"), ("q1", "a dog")])
        out = tmp_path / "interop.smeb"
        report = export(ExportJob(encoder=TinyEncoder(dim=24), frames_dir=str(frames),
                                  texts_file=str(texts), out_path=str(out)))
        store = smine.load_store(out)
        assert store.dim == report.dim == 24
        assert len(store) == report.rows
        assert store.frame_timestamps("log00", "cam_a").tolist() == [
            0, 100_000_000, 200_000_000
        ]
        assert store.text_tokens("q0").shape == (1, 24)
        # zero-copy row access against the raw bytes
        raw = out.read_bytes()[20:]
        assert store.vectors.tobytes() == raw

    def test_clip_encoder_unavailable_is_clear(self):
        try:
            import transformers  # noqa: F401
            pytest.skip("transformers installed; cannot test the guard")
        except ImportError:
            with pytest.raises(RuntimeError, match="clip"):
                make_encoder("clip")
