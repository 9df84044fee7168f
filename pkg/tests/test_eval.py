import csv
import math

import numpy as np
import pytest

from npfx.baselines import get_imputer
from npfx.eval import (
    ModelImputer, PolarCalibration, blob_centroid, build_imputers, dump_flow, empirical_cdf,
    format_table, make_masks, read_pgm, run_benchmark, run_elasticity, run_zero_shot, track_blob,
    track_frames, tracking_error, write_pgm,
)
from npfx.model import ModelConfig, PrefixImputer
from npfx.numerics import Tensor
from npfx.sequence import FrameSequence
from npfx.synthdata import DomainSpec, generate, mask, preset


def oracle_imputer(windows):
    """Returns ground truth by looking the masked times up in the full windows."""
    def imp(seq):
        for w in windows:
            idx = np.searchsorted(w.timestamps, seq.masked_times)
            if np.all(idx < len(w)) and np.array_equal(w.timestamps[idx], seq.masked_times) \
                    and np.array_equal(w.frames[seq.observed_idx], seq.observed_frames):
                return w.frames[idx].copy()
        raise LookupError("window not found")
    return imp


def failing_imputer(seq):
    raise RuntimeError("boom")


# -- tracking -------------------------------------------------------------------------

def test_tracking_error_cases():
    assert tracking_error(1.0, 0.3, 1.0, 0.3) == 0.0
    assert tracking_error(1.0, 0.0, 1.0, np.pi / 2) == pytest.approx(np.sqrt(2))
    assert tracking_error(3.0, 0.2, 1.0, 0.2) == pytest.approx(2.0)


def test_tracking_error_symmetric(rng):
    for _ in range(50):
        r1, r2 = rng.uniform(0, 3, 2)
        t1, t2 = rng.uniform(-1, 1, 2)
        assert tracking_error(r1, t1, r2, t2) == pytest.approx(tracking_error(r2, t2, r1, t1))
        assert tracking_error(r1, t1, r2, t2) >= 0


def test_hot_pixel_maps_to_its_polar_coordinates():
    frame = np.zeros((32, 32))
    frame[31, 0] = 1.0
    r, theta = track_blob(frame)
    assert r == pytest.approx(3.0) and theta == pytest.approx(np.deg2rad(-60.0))
    frame = np.zeros((5, 5))
    frame[2, 2] = 0.7
    cal = PolarCalibration()
    assert track_blob(frame, cal) == cal.to_polar(2, 2, 5, 5)


def test_all_zero_frame_is_no_blob():
    assert track_blob(np.zeros((8, 8))) is None
    assert blob_centroid(np.zeros((8, 8, 1))) is None


def test_centroid_picks_brightest_component():
    frame = np.zeros((10, 10))
    frame[1:3, 1:3] = 0.6
    frame[6:9, 6:9] = 1.0
    assert blob_centroid(frame) == pytest.approx((7.0, 7.0))


@pytest.mark.parametrize("seed", range(5))
def test_gaussian_blob_centroid_matches_generator(seed):
    w = generate(DomainSpec(noise=0.0), 1, 5, seed=seed)[0]
    for frame, (cx, cy) in zip(w.frames, w.centers[:, 0]):
        row, col = blob_centroid(frame)
        assert abs(row - cy) <= 1 and abs(col - cx) <= 1


def test_track_frames_perfect_and_missed():
    w = generate(DomainSpec(noise=0.0), 1, 4, seed=0)[0]
    res = track_frames(w.frames, w.centers[:, 0])
    assert res.missed == 0 and res.median < 0.1
    blank = np.zeros_like(w.frames)
    miss = track_frames(blank, w.centers[:, 0])
    assert miss.missed == 4
    mid = PolarCalibration().midpoint()
    r, t = PolarCalibration().to_polar(w.centers[0, 0, 1], w.centers[0, 0, 0], 32, 32)
    assert miss.errors[0] == pytest.approx(tracking_error(*mid, r, t))


def test_empirical_cdf():
    xs, ys = empirical_cdf([3.0, 1.0, 2.0])
    assert xs == [1.0, 2.0, 3.0] and ys == pytest.approx([1 / 3, 2 / 3, 1.0])
    assert empirical_cdf([]) == ([], [])


# -- benchmark -------------------------------------------------------------------------

def test_oracle_imputer_scores_perfectly(small_windows):
    rep = run_benchmark({"oracle": oracle_imputer(small_windows)}, small_windows)
    row = rep["rows"][0]
    assert row["ssim"] == 1.0 and row["mse"] == 0.0 and math.isinf(row["psnr"])
    assert row["failures"] == [] and row["frames"] == 5 * len(small_windows)


def test_mean_equals_locf_on_static_windows():
    rng = np.random.default_rng(0)
    static = [FrameSequence(np.repeat(rng.random((1, 16, 16, 1)).astype(np.float32), 10, 0),
                            np.arange(10) / 40.0) for _ in range(3)]
    rep = run_benchmark({"mean": get_imputer("mean"), "locf": get_imputer("locf")}, static)
    a, b = rep["rows"]
    assert (a["mse"], a["ssim"]) == (b["mse"], b["ssim"])


def test_five_baseline_table_has_a_row_each(small_windows):
    names = ["mean", "locf", "em", "of", "ot"]
    rep = run_benchmark(build_imputers(names), small_windows[:2])
    assert [r["name"] for r in rep["rows"]] == names
    table = format_table(rep).splitlines()
    assert len(table) == 1 + len(names) and table[0].split()[:3] == ["imputer", "MSE", "SSIM"]


def test_failures_are_recorded_not_fatal(small_windows):
    rep = run_benchmark({"bad": failing_imputer, "locf": get_imputer("locf")}, small_windows[:3])
    bad, locf = rep["rows"]
    assert len(bad["failures"]) == 3 and "RuntimeError: boom" in bad["failures"][0]["error"]
    assert math.isnan(bad["ssim"]) and locf["frames"] == 15
    assert "-" in format_table(rep).splitlines()[1]


def test_masks_shared_and_hashed(small_windows):
    a = run_benchmark({"locf": get_imputer("locf")}, small_windows, seed=4)
    b = run_benchmark({"mean": get_imputer("mean")}, small_windows, seed=4)
    c = run_benchmark({"mean": get_imputer("mean")}, small_windows, seed=5)
    assert a["mask"]["hash"] == b["mask"]["hash"] != c["mask"]["hash"]
    seqs = make_masks(small_windows, 0.5, "interp", 4)
    assert np.array_equal(seqs[2].masked_idx, mask(small_windows[2], 0.5, "interp", [4, 2]).masked_idx)


def test_parallel_matches_serial(small_windows):
    imps = {"locf": get_imputer("locf"), "em": get_imputer("em", 1)}
    serial = run_benchmark(imps, small_windows, jobs=1)
    parallel = run_benchmark(imps, small_windows, jobs=2)
    assert serial == parallel


def test_tracking_reported_per_imputer(small_windows):
    row = run_benchmark({"locf": get_imputer("locf")}, small_windows)["rows"][0]
    assert row["tracking"]["median"] >= 0
    assert row["tracking"]["cdf_y"][-1] == 1.0
    assert np.all(np.diff(row["tracking"]["cdf_x"]) >= 0)


def test_build_imputers_needs_a_model():
    with pytest.raises(ValueError, match="trained model"):
        build_imputers(["model"])


# -- zero-shot and elasticity ----------------------------------------------------------

@pytest.fixture(scope="module")
def untrained():
    return PrefixImputer(ModelConfig(), seed=0)


def test_zero_shot_on_same_domain_equals_in_domain(untrained, small_windows):
    rep = run_zero_shot(untrained, small_windows[:3], small_windows[:3])
    assert rep.zero_shot == rep.in_domain
    assert rep.deltas["ssim_gap_to_in_domain"] == 0.0
    assert rep.mask_hashes["unseen"] == rep.mask_hashes["reference"]


def test_untrained_model_is_flagged_below_locf(untrained, small_windows):
    other = generate(preset("domain-B"), 4, 10, seed=1)
    rep = run_zero_shot(untrained, other, small_windows[:3])
    assert rep.flags["below_locf"] and rep.deltas["ssim_vs_locf"] < 0


def test_zero_shot_rejects_frame_shape_mismatch(untrained):
    small = generate(DomainSpec(height=16, width=16, blob_sigma=1.0), 2, 10, seed=0)
    with pytest.raises(ValueError, match="do not match model"):
        run_zero_shot(untrained, small, small)


def test_elasticity_single_and_repeated_tolerance(untrained, small_windows):
    one = run_elasticity(untrained, small_windows[:2], [1e-5])
    assert len(one) == 1 and one[0]["nfev"] > 0
    a, b = run_elasticity(untrained, small_windows[:2], [1e-5, 1e-5])
    assert {k: v for k, v in a.items() if k != "wall_time"} == \
        {k: v for k, v in b.items() if k != "wall_time"}


def test_model_imputer_reports_solver_telemetry(untrained, small_windows):
    rep = run_benchmark({"model": ModelImputer(untrained)}, small_windows[:2])
    assert rep["rows"][0]["nfev"] > 0


# -- flow dumps -------------------------------------------------------------------------

def test_pgm_round_trip(tmp_path):
    img = np.linspace(0, 2, 12).reshape(3, 4)
    write_pgm(tmp_path / "a.pgm", img)
    back = read_pgm(tmp_path / "a.pgm")
    assert back.shape == (3, 4) and back.max() == 255 and back[0, 0] == 0
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n4 3\n255\n")


def test_zero_flow_head_writes_all_zero_csv(tmp_path, monkeypatch, small_windows):
    m = PrefixImputer(ModelConfig(), seed=0)

    def head(h, prev):
        B, _, H, W = prev.shape
        z = np.zeros((B, 1, H, W), np.float32)
        return Tensor(np.zeros((B, 2, H, W), np.float32)), Tensor(z + 1), Tensor(z)

    monkeypatch.setattr(m, "head", head)
    seq = mask(small_windows[0], 0.5, "interp", seed=0)
    written = dump_flow(m, seq, tmp_path / "flows")
    assert len(written) == 5
    with open(tmp_path / "flows" / written[0]["csv"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1024 and set(rows[0]) == {"x", "y", "dx", "dy"}
    assert all(float(r["dx"]) == 0 and float(r["dy"]) == 0 for r in rows)
    assert read_pgm(tmp_path / "flows" / written[0]["pgm"]).max() == 0


def test_unwritable_flow_dir(tmp_path, small_windows):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    seq = mask(small_windows[0], 0.5, "interp", seed=0)
    with pytest.raises(OSError, match="cannot write flow dumps"):
        dump_flow(PrefixImputer(ModelConfig()), seq, blocker / "sub")


@pytest.mark.slow
def test_trained_flow_concentrates_on_the_blob(trained_model, heldout_a, tmp_path):
    inside, outside = [], []
    for i, w in enumerate(heldout_a[:10]):
        seq = mask(w, 0.5, "interp", seed=[0, i])
        res = trained_model.impute(seq)
        for k, flow in zip(seq.masked_idx, res.flows):
            mag = np.hypot(flow[0], flow[1])
            cx, cy = w.centers[k, 0]
            box = np.zeros(mag.shape, bool)
            box[max(int(cy) - 6, 0):int(cy) + 7, max(int(cx) - 6, 0):int(cx) + 7] = True
            inside.append(mag[box].mean())
            outside.append(mag[~box].mean())
    assert np.mean(inside) > np.mean(outside)
    assert dump_flow(trained_model, mask(heldout_a[0], 0.5, "interp", 0), tmp_path)
