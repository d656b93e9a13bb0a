import numpy as np
import pytest

from speechmoe.audio import load_audio
from speechmoe.schema import SyntheticSpec
from speechmoe.utils import parse_manifest
from speechmoe.utils.synth import AUDIO_DIR, MANIFEST_NAME, synth_dataset, synth_labels


class TestSyntheticSpec:
    """Synthetic dataset settings"""

    def test_overlapping_tones(self):
        tones = {"control": ((400.0,), (500.0,)), "depression": ((500.0,), (900.0,))}
        with pytest.raises(ValueError, match="overlap"):
            SyntheticSpec(tones=tones)

    @pytest.mark.parametrize("balance", [0.0, 1.0])
    def test_balance_bounds(self, balance):
        with pytest.raises(ValueError):
            SyntheticSpec(class_balance=balance)


class TestSynthDataset:
    """Seeded tone dataset generation"""

    def test_layout(self, tiny_spec, tmp_path):
        manifest = synth_dataset(tiny_spec, tmp_path)
        assert manifest == tmp_path / MANIFEST_NAME
        entries = parse_manifest(manifest)
        assert len(entries) == 6
        assert len(list((tmp_path / AUDIO_DIR).glob("*.wav"))) == 12
        assert sum(e.target for e in entries) == 3
        assert [e.subject_id for e in entries] == [f"s{i:03d}" for i in range(6)]

    def test_labels_follow_balance(self):
        labels = synth_labels(SyntheticSpec(n_subjects=10, class_balance=0.3))
        assert labels.count("depression") == 3

    def test_durations(self, tiny_spec, tmp_path):
        entries = parse_manifest(synth_dataset(tiny_spec, tmp_path))
        assert len(load_audio(entries[0].reading_path)) == 16000

    def test_tones_are_the_dominant_frequencies(self, tmp_path):
        spec = SyntheticSpec(n_subjects=4, duration=1.0, noise_level=0.0, seed=3)
        for entry in parse_manifest(synth_dataset(spec, tmp_path)):
            for task_index, path in enumerate((entry.reading_path, entry.interview_path)):
                samples = load_audio(path).samples
                spectrum = np.abs(np.fft.rfft(samples))
                freqs = np.fft.rfftfreq(samples.size, 1.0 / 16000)
                top = sorted(freqs[np.argsort(spectrum)[-2:]].tolist())
                assert top == pytest.approx(sorted(spec.tones[entry.label][task_index]))

    def test_output_is_byte_identical(self, tiny_spec, tmp_path):
        a = synth_dataset(tiny_spec, tmp_path / "a").parent
        b = synth_dataset(tiny_spec, tmp_path / "b").parent
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        for rel in files:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_seed_changes_audio(self, tiny_spec, tmp_path):
        a = synth_dataset(tiny_spec, tmp_path / "a").parent
        b = synth_dataset(tiny_spec.model_copy(update={"seed": 12}), tmp_path / "b").parent
        rel = f"{AUDIO_DIR}/s000_reading.wav"
        assert (a / rel).read_bytes() != (b / rel).read_bytes()
