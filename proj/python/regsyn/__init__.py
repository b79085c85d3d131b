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

"""Registration-guided cross-modality 3D synthesis (C++ core)."""

from ._regsyn import (
    RegsynError,
    Synthesizer,
    evaluate,
    load_volume,
    mae,
    phantom_pair,
    psnr,
    save_volume,
    smoothness_loss,
    ssim,
    train,
    warp,
    write_phantom_dataset,
)

__all__ = [
    "RegsynError",
    "Synthesizer",
    "evaluate",
    "load_volume",
    "mae",
    "phantom_pair",
    "psnr",
    "save_volume",
    "smoothness_loss",
    "ssim",
    "train",
    "warp",
    "write_phantom_dataset",
]
