# Copyright 2026 The regsyn Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import math

import numpy as np
import pytest

import regsyn


def test_phantom_pair_shapes_and_determinism():
    a = regsyn.phantom_pair(size=32, seed=3)
    b = regsyn.phantom_pair(size=32, seed=3)
    assert a["source"].shape == (32, 32, 32)
    assert a["field"].shape == (3, 32, 32, 32)
    assert a["source"].dtype == np.float32
    for key in ("source", "target_aligned", "target_misaligned", "field", "mask"):
        np.testing.assert_array_equal(a[key], b[key])
    assert a["mask"].any()


def test_misaligned_target_is_the_warped_aligned_target():
    p = regsyn.phantom_pair(size=32, seed=5)
    np.testing.assert_array_equal(regsyn.warp(p["target_aligned"], p["field"]), p["target_misaligned"])


def test_integer_translation_matches_index_shift():
    rng = np.random.default_rng(0)
    v = rng.uniform(-1, 1, size=(8, 9, 10)).astype(np.float32)
    field = np.zeros((3, 8, 9, 10), np.float32)
    field[2] = 1.0  # dx = +1
    w = regsyn.warp(v, field)
    np.testing.assert_array_equal(w[:, :, :-1], v[:, :, 1:])
    np.testing.assert_array_equal(w[:, :, -1], v[:, :, -1])


def test_smoothness_of_a_constant_field_is_zero():
    assert regsyn.smoothness_loss(np.full((3, 4, 4, 4), 2.5, np.float32)) == 0.0


def test_metrics_closed_form_cases():
    rng = np.random.default_rng(1)
    ref = rng.uniform(-1000, 1000, size=(12, 12, 12)).astype(np.float32)
    mask = np.ones_like(ref, dtype=np.uint8)
    assert regsyn.mae(ref, ref, mask) == 0.0
    assert math.isinf(regsyn.psnr(ref, ref, mask))
    assert regsyn.psnr(ref + 20, ref, mask) == pytest.approx(40.0, abs=1e-4)
    assert regsyn.ssim(ref, ref, mask) == pytest.approx(1.0, abs=1e-6)


def test_errors_surface_as_regsyn_errors():
    with pytest.raises(regsyn.RegsynError):
        regsyn.mae(np.zeros((4, 4, 4), np.float32), np.zeros((4, 4, 4), np.float32), np.zeros((4, 4, 4), np.uint8))
    with pytest.raises(regsyn.RegsynError):
        regsyn.load_volume("/nonexistent/volume.mivol")


def test_volume_file_round_trip(tmp_path):
    v = np.arange(2 * 3 * 4, dtype=np.float32).reshape(2, 3, 4)
    regsyn.save_volume(v, tmp_path / "v.mivol", units="hu")
    back, units = regsyn.load_volume(tmp_path / "v.mivol")
    assert units == "HU"
    np.testing.assert_array_equal(back, v)


def test_tiny_training_run_and_inference(tmp_path):
    data = tmp_path / "data"
    regsyn.write_phantom_dataset(data, size=32, seed=2, train=2, val=1, test=1)
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(
        "\n".join(
            [
                f"data_dir = {data}",
                "patch = 16",
                "batch = 1",
                "epochs = 1",
                "lr = 2e-4",
                "poly_power = 0.9",
                "lambda_anatomy = 0.5",
                "lambda_smooth = 10",
                "lambda_align = 20",
                "channel_scale = 0.125",
                "seed = 1",
                "variant = BOTH+ACDS",
                "adv_form = lsgan",
                "hu_lo = -1000",
                "hu_hi = 1000",
            ]
        )
        + "\n"
    )
    result = regsyn.train(cfg)
    assert result["iterations"] == 2
    syn = regsyn.Synthesizer(result["checkpoint"])
    assert syn.variant == "BOTH+ACDS"
    src = np.random.default_rng(4).uniform(-1000, 1000, size=(20, 21, 22)).astype(np.float32)
    out = syn.infer(src)
    assert out.shape == src.shape
    assert np.isfinite(out).all()
    allowed = ("e_c_s.", "e_s_t.", "g_t.")
    assert all(n.startswith(allowed) or n == "d_t" for n in syn.touched)
