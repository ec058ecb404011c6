"""Bundled synthetic desk corpus: layout, coverage, determinism."""

import hashlib

import numpy as np

from phonobeam.audio import read_wav
from phonobeam.fixtures import build_desk_corpus
from phonobeam.phonemes import CATEGORIES, load_category_map, parse_alignment
from phonobeam.pipeline import validate_config
from phonobeam.scene import BINAURAL_LAYOUT, load_rir_set


def _tree_digest(root):
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(path.name.encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


class TestCorpusLayout:
    def test_expected_files(self, desk_corpus):
        wavs = sorted((desk_corpus / "speech").glob("*.wav"))
        aligns = sorted((desk_corpus / "alignments").glob("*.csv"))
        assert len(wavs) == 10
        assert [w.stem for w in wavs] == [a.stem for a in aligns]
        assert (desk_corpus / "noise" / "ssn_donor.wav").is_file()
        assert (desk_corpus / "config.yaml").is_file()

    def test_config_validates(self, desk_corpus):
        cfg = validate_config(desk_corpus / "config.yaml")
        assert cfg.alignment_dir is not None
        assert "speech_shaped" in cfg.noise_kinds

    def test_rir_set_loads(self, desk_corpus):
        rirs = load_rir_set(desk_corpus / "rirs")
        assert set(rirs.angles) >= {0, 45}
        for angle in rirs.angles:
            assert rirs.channels(angle) == BINAURAL_LAYOUT

    def test_speech_is_sane(self, desk_corpus):
        for path in sorted((desk_corpus / "speech").glob("*.wav")):
            w = read_wav(path, expected_rate=16000)
            assert 0.5 <= w.duration <= 3.0
            assert np.abs(w.samples).max() <= 0.31


class TestAlignments:
    def test_alignments_parse_and_fit(self, desk_corpus):
        for path in sorted((desk_corpus / "alignments").glob("*.csv")):
            alignment = parse_alignment(path)
            speech = read_wav(desk_corpus / "speech" / f"{path.stem}.wav")
            assert alignment.segments
            assert alignment.segments[-1].end <= speech.duration + 1e-9

    def test_all_categories_covered(self, desk_corpus):
        cmap = load_category_map()
        seen = set()
        for path in sorted((desk_corpus / "alignments").glob("*.csv")):
            for segment in parse_alignment(path).segments:
                seen.add(cmap.categorize(segment.label))
        assert set(CATEGORIES) <= seen

    def test_every_utterance_has_a_sibilant(self, desk_corpus):
        cmap = load_category_map()
        for path in sorted((desk_corpus / "alignments").glob("*.csv")):
            categories = {
                cmap.categorize(s.label) for s in parse_alignment(path).segments
            }
            assert "sibilant" in categories, path.stem


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        build_desk_corpus(a)
        build_desk_corpus(b)
        assert _tree_digest(a) == _tree_digest(b)

    def test_seed_changes_content(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        build_desk_corpus(a)
        build_desk_corpus(b, seed=1)
        assert _tree_digest(a) != _tree_digest(b)
