import numpy as np
import pytest

from dccrnplus import autodiff as ad
from dccrnplus import dsp
from dccrnplus.bench import REFERENCE_RTF, STAGES, run_bench
from dccrnplus.model import DCCRNPlus, ModelConfig
from dccrnplus.streaming import StreamingEnhancer, enhance_offline, enhance_streaming, latency_report


@pytest.fixture(scope="module")
def model():
    with ad.default_dtype(np.float64):
        return DCCRNPlus(ModelConfig(channels=(8, 16), lstm_hidden=4, clp_units=4, snr_hidden=3), seed=1).eval()


@pytest.fixture(scope="module")
def signal():
    return 0.1 * np.random.default_rng(0).standard_normal(8000)


@pytest.mark.parametrize("chunk", [1, 77, 160, 1000])
@pytest.mark.parametrize("postproc", [False, True])
def test_any_chunking_matches_offline(model, signal, chunk, postproc):
    a = enhance_offline(model, signal, postproc)
    b = enhance_streaming(model, signal, postproc, chunk=chunk)
    assert len(a) == len(b)
    assert np.max(np.abs(a - b)) < 1e-12


def test_output_length_and_release(model, signal):
    eng = StreamingEnhancer(model, postproc=False)
    got = [len(eng.push(signal[i:i + 160])) for i in range(0, 800, 160)]
    # frames complete at 320, 480, ...; output samples 0..159 need frame 1, i.e. 480 inputs
    assert got == [0, 0, 160, 160, 160]
    eng.finish()
    assert eng.n_out == dsp.Framing().n_samples(eng.n_frames)


def test_latency_budget(model):
    rep = latency_report(model)
    assert rep["buffering_ms"] == 30.0
    assert rep["window_ms"] + rep["lookahead_ms"] == rep["buffering_ms"]
    assert rep["algorithmic_latency_ms"] == 40.0


def test_reset(model, signal):
    eng = StreamingEnhancer(model)
    first = np.concatenate([eng.push(signal), eng.finish()])
    eng.reset()
    again = np.concatenate([eng.push(signal), eng.finish()])
    np.testing.assert_array_equal(first, again)


def test_empty_finish(model):
    assert len(StreamingEnhancer(model).finish()) == 0


class TestBench:
    def test_report_accounts_for_total(self, model):
        rep = run_bench(model, seconds=0.5, runs=3, mode="stream")
        assert len(rep.rtf_runs) == 3 and rep.rtf > 0
        assert set(rep.stages) <= set(STAGES)
        assert {"stft", "encoder", "tf_lstm", "decoder", "postproc"} <= set(rep.stages)
        assert abs(rep.stage_sum - rep.total_seconds) <= 0.05 * rep.total_seconds
        text = "\n".join(rep.lines())
        assert f"reference_rtf={REFERENCE_RTF:.3f}" in text

    def test_offline_mode(self, model):
        rep = run_bench(model, seconds=0.5, runs=1, mode="offline", postproc=False)
        assert "postproc" not in rep.stages

    def test_bad_args(self, model):
        with pytest.raises(ValueError):
            run_bench(model, runs=0)
        with pytest.raises(ValueError):
            run_bench(model, mode="batch")

    def test_small_config_is_cheaper(self):
        small = DCCRNPlus(ModelConfig(channels=(8,), lstm_hidden=4, clp_units=4, snr_hidden=3)).eval()
        big = DCCRNPlus(ModelConfig.toy()).eval()
        a = run_bench(small, seconds=0.5, runs=3, mode="offline")
        b = run_bench(big, seconds=0.5, runs=3, mode="offline")
        assert a.rtf < b.rtf
