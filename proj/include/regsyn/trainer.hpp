// Copyright 2026 The regsyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regsyn/losses.hpp"
#include "regsyn/metrics.hpp"
#include "regsyn/model.hpp"
#include "regsyn/phantom.hpp"

namespace regsyn {

// -- configuration ------------------------------------------------------------

struct TrainConfig {
  std::filesystem::path data_dir;
  int patch = 32;
  int batch = 2;
  int epochs = 30;
  double lr = 2e-4;
  double poly_power = 0.9;
  LossWeights weights;
  double channel_scale = 0.5;
  std::uint64_t seed = 0;
  Variant variant = Variant::BothAcds;
  AdvForm adv_form = AdvForm::LeastSquares;
  double hu_lo = kDefaultHuLo;
  double hu_hi = kDefaultHuHi;

  // Not part of the config file.
  std::filesystem::path run_dir;  // empty: <data_dir>/runs/<variant>_seed<seed>
  int val_every = 1;              // epochs between validation passes (0: final only)
  bool quiet = false;

  void validate() const;
  std::filesystem::path resolved_run_dir() const;
};

/// Parses key=value lines (`#` starts a comment). Every key must appear
/// exactly once; unknown keys are rejected.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Canonical key=value text of the file-backed fields.
std::string config_snapshot(const TrainConfig& cfg);
std::uint64_t config_hash(const TrainConfig& cfg);

// -- optimization ---------------------------------------------------------------

/// base * (1 - iter / max_iter)^power.
double lr_schedule(long iter, long max_iter, double base, double power);

/// Adam over the parameters selected by a name predicate.
class Adam {
 public:
  Adam(double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(nn::ParameterSet<float>& ps, const std::function<bool(const std::string&)>& select, double lr);
  long steps() const { return t_; }

 private:
  double b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

/// One sample of a training batch (normalized patches).
struct Batch {
  ad::Var<float> source;  // {N,1,P,P,P}
  ad::Var<float> target;
  std::uint64_t seed = 0;  // seed the patches were drawn with
};

struct TrainerState {
  explicit TrainerState(const ModelConfig& mc) : model(mc) {}
  Model<float> model;
  Adam g_opt;
  Adam d_opt;
  long iteration = 0;
};

/// Which halves of the alternating update to apply (tests isolate them).
enum class StepParts { Both, DiscriminatorOnly, GeneratorOnly };

/// One alternating update: the discriminators on the detached fakes, then
/// every other parameter on the generator-side total with the discriminators
/// frozen. Throws NonFiniteError (with the loss components and batch seed) if
/// any loss or parameter becomes non-finite.
LossReport train_step(TrainerState& state, const Batch& batch, const TrainConfig& cfg, double lr,
                      StepParts parts = StepParts::Both);

/// The two registration-consistency outputs of one step, both built from the
/// single field phi = R_Phi(I_s, I_t):
///   before = R_S(G(I_s), phi)   (synthesis, then resampling)
///   after  = G(R_S(I_s, phi))   (resampling, then synthesis)
struct ConsistencyBranches {
  ad::Var<float> phi;
  ad::Var<float> before;
  ad::Var<float> after;
};
ConsistencyBranches consistency_branches(const Model<float>& model, const ad::Var<float>& source,
                                         const ad::Var<float>& target);

// -- datasets -----------------------------------------------------------------

/// Normalized training data of one case.
struct TrainingCase {
  std::string id;
  Volume source;
  Volume target;  // misaligned: what the training pipeline actually observes
  Mask mask;
};

/// Draws `count` patches of edge `patch` covering at least 30% body mask
/// (best of a bounded number of attempts otherwise).
Batch sample_batch(const std::vector<TrainingCase>& cases, const std::vector<std::size_t>& picks, int patch,
                   std::uint64_t seed);

// -- runs -----------------------------------------------------------------------

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint;
  LossReport first;
  LossReport last;
  double val_mae = 0.0;
  long iterations = 0;
};

/// Full training run. Writes losses.csv, val.csv, config.snapshot and
/// ckpt_final.bin into the run directory.
TrainResult train(const TrainConfig& cfg);
/// Paired L1 + adversarial reference (same backbone, no registration),
/// trained against the misaligned targets.
TrainResult train_baseline(TrainConfig cfg);

// -- checkpoints ------------------------------------------------------------------

struct CheckpointMeta {
  Variant variant = Variant::BothAcds;
  double channel_scale = 1.0;
  int style_dim = 64;
  std::uint64_t seed = 0;
  int epoch = 0;
  long iteration = 0;
  std::uint64_t config_hash = 0;
  double hu_lo = kDefaultHuLo;
  double hu_hi = kDefaultHuHi;
  double val_mae = 0.0;
};

void save_checkpoint(const Model<float>& model, const CheckpointMeta& meta, const std::filesystem::path& path);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::unique_ptr<Model<float>> model;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// -- inference ----------------------------------------------------------------------

struct InferInfo {
  std::array<int, 3> pad_before{0, 0, 0};  // (z, y, x)
  std::array<int, 3> pad_after{0, 0, 0};
  bool padded() const;
  std::set<std::string> touched;  // parameters read during the forward pass
};

/// Source-to-target translation of a full volume, returned in HU. HU input is
/// normalized with [hu_lo, hu_hi]; dims that are not multiples of 8 are
/// reflect-padded and the output cropped back.
Volume infer(Model<float>& model, const Volume& source, double hu_lo, double hu_hi, InferInfo* info = nullptr);
Volume infer(LoadedCheckpoint& ckpt, const Volume& source, InferInfo* info = nullptr);

/// Masked MAE (HU) of infer() over cases, against `use_aligned` ?
/// target_aligned : target_misaligned.
double mean_masked_mae(Model<float>& model, const DatasetManifest& manifest, Split split, bool use_aligned,
                       double hu_lo, double hu_hi);

/// Infers every case of a split and scores it against target_aligned inside
/// the body mask. Predictions are also written as <id>.mivol (HU) when
/// `pred_dir` is non-empty.
CohortReport evaluate_split(Model<float>& model, const DatasetManifest& manifest, Split split, double hu_lo,
                            double hu_hi, const std::filesystem::path& pred_dir = {});

// -- ablation ------------------------------------------------------------------------

struct AblationRow {
  Variant variant = Variant::BothAcds;
  CohortReport report;
  std::filesystem::path checkpoint;
};

/// Trains each variant with the same config, seed and data, and scores each
/// on the test split. Writes <out_dir>/ablation.csv.
std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const std::vector<Variant>& variants,
                                      const std::filesystem::path& out_dir);

}  // namespace regsyn
