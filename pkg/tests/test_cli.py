import numpy as np
import pytest

from dccrnplus import cli, synth
from dccrnplus.checkpoint import save_checkpoint
from dccrnplus.model import DCCRNPlus, ModelConfig
from dccrnplus.wavio import wav_read, wav_write


@pytest.fixture
def noisy(tmp_path):
    x, _, _ = synth.make_pairs(1, 1.0, seed=0)[0]
    path = tmp_path / "noisy.wav"
    wav_write(path, x, 16000)
    return path


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_enhance_offline_and_stream_agree(noisy, tmp_path, capsys):
    code, out, _ = run(["enhance", noisy, tmp_path / "a.wav"], capsys)
    assert code == 0 and "mode=offline" in out
    code, out, _ = run(["enhance", noisy, tmp_path / "b.wav", "--stream", "--chunk", "97"], capsys)
    assert code == 0 and "latency_ms=40.0" in out
    a, b = wav_read(tmp_path / "a.wav").samples, wav_read(tmp_path / "b.wav").samples
    assert len(a) == len(b) == 16000
    assert np.max(np.abs(a - b)) < 1e-5


def test_no_postproc_changes_output(noisy, tmp_path, capsys):
    run(["enhance", noisy, tmp_path / "a.wav"], capsys)
    run(["enhance", noisy, tmp_path / "b.wav", "--no-postproc"], capsys)
    a, b = wav_read(tmp_path / "a.wav").samples, wav_read(tmp_path / "b.wav").samples
    assert not np.allclose(a, b)


def test_zero_in_zero_out(tmp_path, capsys):
    wav_write(tmp_path / "z.wav", np.zeros(4000, np.float32), 16000)
    code, _, _ = run(["enhance", tmp_path / "z.wav", tmp_path / "o.wav"], capsys)
    assert code == 0
    assert np.all(wav_read(tmp_path / "o.wav").samples == 0)


def test_checkpoint_is_used(noisy, tmp_path, capsys):
    model = DCCRNPlus(ModelConfig.toy(), seed=5)
    save_checkpoint(tmp_path / "m.ckpt", model)
    run(["enhance", noisy, tmp_path / "a.wav", "--checkpoint", tmp_path / "m.ckpt"], capsys)
    run(["enhance", noisy, tmp_path / "b.wav", "--seed", "5"], capsys)
    np.testing.assert_array_equal(wav_read(tmp_path / "a.wav").samples, wav_read(tmp_path / "b.wav").samples)


def test_deterministic_under_seed(noisy, tmp_path, capsys):
    for name in ("a", "b"):
        run(["enhance", noisy, tmp_path / f"{name}.wav", "--seed", "3"], capsys)
    np.testing.assert_array_equal(wav_read(tmp_path / "a.wav").samples, wav_read(tmp_path / "b.wav").samples)


class TestExitCodes:
    def test_usage(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["enhance"])
        assert info.value.code == 1
        with pytest.raises(SystemExit) as info:
            cli.main(["frobnicate"])
        assert info.value.code == 1

    def test_bad_value_is_usage(self, noisy, tmp_path, capsys):
        code, _, err = run(["enhance", noisy, tmp_path / "o.wav", "--stream", "--chunk", "0"], capsys)
        assert code == 1 and "chunk" in err

    def test_missing_input(self, tmp_path, capsys):
        code, _, err = run(["enhance", tmp_path / "none.wav", tmp_path / "o.wav"], capsys)
        assert code == 2 and "not found" in err

    def test_bad_wav(self, tmp_path, capsys):
        (tmp_path / "bad.wav").write_bytes(b"RIFF0000WAVEjunk")
        code, _, _ = run(["enhance", tmp_path / "bad.wav", tmp_path / "o.wav"], capsys)
        assert code == 2

    def test_wrong_rate(self, tmp_path, capsys):
        wav_write(tmp_path / "r.wav", np.zeros(8000, np.float32), 8000)
        code, _, err = run(["enhance", tmp_path / "r.wav", tmp_path / "o.wav"], capsys)
        assert code == 2 and "sample rate" in err

    def test_corrupt_checkpoint(self, noisy, tmp_path, capsys):
        (tmp_path / "c.ckpt").write_bytes(b"DCCP" + bytes(30))
        code, _, _ = run(["enhance", noisy, tmp_path / "o.wav", "--checkpoint", tmp_path / "c.ckpt"], capsys)
        assert code == 2

    def test_checkpoint_config_mismatch(self, noisy, tmp_path, capsys):
        save_checkpoint(tmp_path / "t.ckpt", DCCRNPlus(ModelConfig.tiny()))
        code, _, _ = run(["enhance", noisy, tmp_path / "o.wav", "--checkpoint", tmp_path / "t.ckpt"], capsys)
        assert code == 2

    def test_bad_manifest(self, tmp_path, capsys):
        (tmp_path / "m.txt").write_text("speech missing.wav\n")
        code, _, _ = run(["train-toy", "--manifest", tmp_path / "m.txt", "--steps", "1"], capsys)
        assert code == 2

    def test_numerical_failure(self, tmp_path, capsys):
        wav_write(tmp_path / "s.wav", np.zeros(16000, np.float32), 16000)
        model = DCCRNPlus(ModelConfig.toy())
        for p in model.parameters().values():
            p.data[...] = np.nan
        save_checkpoint(tmp_path / "nan.ckpt", model)
        x, _, _ = synth.make_pairs(1, 1.0, seed=0)[0]
        wav_write(tmp_path / "x.wav", x, 16000)
        code, _, err = run(["enhance", tmp_path / "x.wav", tmp_path / "o.wav", "--checkpoint", tmp_path / "nan.ckpt"], capsys)
        assert code == 3 and "numerical" in err


def test_train_toy_log_and_checkpoint(tmp_path, capsys):
    argv = ["train-toy", "--steps", "3", "--batch-size", "2", "--crop-seconds", "0.5", "--val-every", "2",
            "--out", tmp_path / "t.ckpt", "--log", tmp_path / "m.log", "--seed", "1"]
    code, out, _ = run(argv, capsys)
    assert code == 0 and "checkpoint=" in out
    lines = (tmp_path / "m.log").read_text().splitlines()
    assert len(lines) == 3
    rows = [dict(kv.split("=") for kv in line.split()) for line in lines]
    assert [r["step"] for r in rows] == ["1", "2", "3"]
    assert {"loss", "si_snr", "snr_mse", "lr"} <= set(rows[0]) and "val_loss" in rows[1]
    # same seed, same log
    argv[argv.index("--log") + 1] = tmp_path / "m2.log"
    run(argv, capsys)
    assert (tmp_path / "m2.log").read_text() == (tmp_path / "m.log").read_text()
    code, _, _ = run(["enhance", "--checkpoint", tmp_path / "t.ckpt", tmp_path / "none.wav", tmp_path / "o.wav"], capsys)
    assert code == 2


def test_train_toy_from_manifest(tmp_path, capsys):
    rng = np.random.default_rng(0)
    wav_write(tmp_path / "s.wav", synth.harmonic_speech(12000, rng).astype(np.float32), 16000)
    wav_write(tmp_path / "n.wav", synth.colored_noise(12000, rng).astype(np.float32), 16000)
    (tmp_path / "m.txt").write_text("speech s.wav\nnoise n.wav\n")
    code, _, _ = run(["train-toy", "--manifest", tmp_path / "m.txt", "--steps", "1", "--batch-size", "1"], capsys)
    assert code == 0


def test_bench_report(capsys):
    code, out, _ = run(["bench", "--preset", "toy", "--seconds", "0.5", "--runs", "2"], capsys)
    assert code == 0
    kv = {}
    for line in out.splitlines():
        for item in line.split():
            k, _, v = item.partition("=")
            kv.setdefault(k, v)
    assert kv["reference_rtf"] == "0.250" and float(kv["rtf"]) > 0
    assert abs(float(kv["coverage"]) - 1) < 0.05


def test_verify_subset(capsys):
    code, out, _ = run(["verify", "--only", "stft round trip", "--only", "subband identity"], capsys)
    assert code == 0 and out.count("PASS") == 2 and "failed=0" in out
    code, _, _ = run(["verify", "--only", "nonsense"], capsys)
    assert code == 1
