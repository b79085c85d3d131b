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

#include "regsyn/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "regsyn/convert.hpp"
#include "regsyn/metrics.hpp"

namespace regsyn {

namespace fs = std::filesystem;
using json = nlohmann::json;
using VarF = ad::Var<float>;

static_assert(std::endian::native == std::endian::little, "float payloads are written in host order");

// -- configuration ------------------------------------------------------------

namespace {

const char* const kConfigKeys[] = {"data_dir",       "patch",         "batch",        "epochs",
                                   "lr",             "poly_power",    "lambda_anatomy", "lambda_smooth",
                                   "lambda_align",   "channel_scale", "seed",         "variant",
                                   "adv_form",       "hu_lo",         "hu_hi"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  N out{};
  is >> out;
  if (is.fail() || !is.eof()) throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string run_name(Variant v) {
  std::string s = to_string(v);
  for (auto& c : s) c = c == '+' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (patch < 16 || patch % 16 != 0) throw ConfigError("patch must be a positive multiple of 16");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(poly_power >= 0.0)) throw ConfigError("poly_power must be nonnegative");
  if (!(channel_scale > 0.0)) throw ConfigError("channel_scale must be positive");
  if (!(hu_hi > hu_lo)) throw ConfigError("hu_hi must exceed hu_lo");
  weights.validate();
}

fs::path TrainConfig::resolved_run_dir() const {
  if (!run_dir.empty()) return run_dir;
  return data_dir / "runs" / (run_name(variant) + "_seed" + std::to_string(seed));
}

TrainConfig parse_train_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(std::begin(kConfigKeys), std::end(kConfigKeys), key) == std::end(kConfigKeys)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    if (!kv.emplace(key, value).second) throw ConfigError("duplicate config key '" + key + "'");
  }
  for (const char* key : kConfigKeys) {
    if (!kv.count(key)) throw ConfigError(std::string("missing config key '") + key + "'");
  }
  TrainConfig c;
  c.data_dir = kv["data_dir"];
  c.patch = parse_number<int>("patch", kv["patch"]);
  c.batch = parse_number<int>("batch", kv["batch"]);
  c.epochs = parse_number<int>("epochs", kv["epochs"]);
  c.lr = parse_number<double>("lr", kv["lr"]);
  c.poly_power = parse_number<double>("poly_power", kv["poly_power"]);
  c.weights.anatomy = parse_number<double>("lambda_anatomy", kv["lambda_anatomy"]);
  c.weights.smooth = parse_number<double>("lambda_smooth", kv["lambda_smooth"]);
  c.weights.align = parse_number<double>("lambda_align", kv["lambda_align"]);
  c.channel_scale = parse_number<double>("channel_scale", kv["channel_scale"]);
  c.seed = parse_number<std::uint64_t>("seed", kv["seed"]);
  c.variant = parse_variant(kv["variant"]);
  c.adv_form = parse_adv_form(kv["adv_form"]);
  c.hu_lo = parse_number<double>("hu_lo", kv["hu_lo"]);
  c.hu_hi = parse_number<double>("hu_hi", kv["hu_hi"]);
  c.validate();
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  TrainConfig c = parse_train_config(ss.str());
  if (c.data_dir.is_relative()) c.data_dir = fs::absolute(path).parent_path() / c.data_dir;
  c.data_dir = c.data_dir.lexically_normal();
  return c;
}

std::string config_snapshot(const TrainConfig& c) {
  std::ostringstream os;
  os << "data_dir=" << c.data_dir.string() << '\n'
     << "patch=" << c.patch << '\n'
     << "batch=" << c.batch << '\n'
     << "epochs=" << c.epochs << '\n'
     << "lr=" << fmt_double(c.lr) << '\n'
     << "poly_power=" << fmt_double(c.poly_power) << '\n'
     << "lambda_anatomy=" << fmt_double(c.weights.anatomy) << '\n'
     << "lambda_smooth=" << fmt_double(c.weights.smooth) << '\n'
     << "lambda_align=" << fmt_double(c.weights.align) << '\n'
     << "channel_scale=" << fmt_double(c.channel_scale) << '\n'
     << "seed=" << c.seed << '\n'
     << "variant=" << to_string(c.variant) << '\n'
     << "adv_form=" << to_string(c.adv_form) << '\n'
     << "hu_lo=" << fmt_double(c.hu_lo) << '\n'
     << "hu_hi=" << fmt_double(c.hu_hi) << '\n';
  return os.str();
}

std::uint64_t config_hash(const TrainConfig& cfg) { return fnv1a64(config_snapshot(cfg)); }

// -- optimization ---------------------------------------------------------------

double lr_schedule(long iter, long max_iter, double base, double power) {
  if (max_iter <= 0) throw ParameterError("max_iter must be positive");
  if (iter < 0 || iter > max_iter) throw ParameterError("iteration outside [0, max_iter]");
  return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

void Adam::step(nn::ParameterSet<float>& ps, const std::function<bool(const std::string&)>& select, double lr) {
  if (m_.size() < ps.size()) {
    m_.resize(ps.size());
    v_.resize(ps.size());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& e = ps.entry(i);
    if (!select(e.name)) continue;
    const auto g = e.var.grad();
    if (g.empty()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    if (m.empty()) {
      m.assign(g.size(), 0.0f);
      v.assign(g.size(), 0.0f);
    }
    auto w = e.var.mutable_value();
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<float>(b1_ * m[k] + (1.0 - b1_) * gk);
      v[k] = static_cast<float>(b2_ * v[k] + (1.0 - b2_) * gk * gk);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] = static_cast<float>(w[k] - lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

// -- train step -------------------------------------------------------------------

namespace {

bool is_generator_param(const std::string& name) { return !is_discriminator_param(name); }

double value_of(const VarF& v) { return v.defined() ? static_cast<double>(v.item()) : 0.0; }

[[noreturn]] void abort_non_finite(const LossReport& r, const Batch& batch, const char* where) {
  throw NonFiniteError(std::string("non-finite ") + where + " (batch seed " + std::to_string(batch.seed) +
                       "): " + r.describe());
}

// Synthesizer outputs of one step that feed both the discriminator and the
// generator objectives.
struct Forward {
  VarF phi;
  VarF o_t;        // G(I_s)
  VarF o_s;        // G_s(E_c^t(I_t)), disentangled form only
  VarF o_t_b;      // R_S(G(I_s), phi)
  VarF o_t_a;      // G(R_S(I_s, phi))
  VarF fake_t;     // what D_t judges
  VarF c_s, c_t, s_s, s_t;
};

Forward forward(const Model<float>& model, const VarF& src, const VarF& tgt, Variant variant) {
  const auto& acds = model.acds();
  const auto& ps = model.params();
  Forward f;
  const bool disentangled = acds.disentangled();
  if (disentangled) {
    f.s_s = acds.encode_style(ps, Domain::Source);
    f.s_t = acds.encode_style(ps, Domain::Target);
  }
  const VarF* style_t = disentangled ? &f.s_t : nullptr;
  const bool need_plain = variant != Variant::Aft;
  if (need_plain) {
    f.c_s = acds.encode_content(ps, src, Domain::Source);
    f.o_t = acds.decode(ps, f.c_s, style_t, Domain::Target);
  }
  if (uses_registration(variant)) {
    f.phi = model.predict_field(src, tgt);
    if (variant != Variant::Aft) f.o_t_b = warp(f.o_t, f.phi);
    if (variant != Variant::Bef) {
      const VarF src_w = warp(src, f.phi);
      f.o_t_a = acds.decode(ps, acds.encode_content(ps, src_w, Domain::Source), style_t, Domain::Target);
      // Both consistency branches must consume the very same field tensor.
      if (f.o_t_b.defined()) {
        const auto* nb = f.o_t_b.node();
        const auto* na = src_w.node();
        if (!nb->inputs.empty() && !na->inputs.empty() && nb->inputs.at(1) != na->inputs.at(1)) {
          throw Error("runtime error", "consistency branches received different deformation fields");
        }
      }
    }
  }
  f.fake_t = variant == Variant::Aft ? f.o_t_a : f.o_t;
  if (disentangled) {
    f.c_t = acds.encode_content(ps, tgt, Domain::Target);
    f.o_s = acds.decode(ps, f.c_t, &f.s_s, Domain::Source);
  }
  return f;
}

}  // namespace

ConsistencyBranches consistency_branches(const Model<float>& model, const VarF& source, const VarF& target) {
  if (!model.has_registration()) throw ParameterError("variant has no registration network");
  const Forward f = forward(model, source, target, Variant::Both);
  return {f.phi, f.o_t_b, f.o_t_a};
}

LossReport train_step(TrainerState& state, const Batch& batch, const TrainConfig& cfg, double lr, StepParts parts) {
  Model<float>& model = state.model;
  auto& ps = model.params();
  const auto& acds = model.acds();
  const Variant variant = model.config().variant;
  const VarF& src = batch.source;
  const VarF& tgt = batch.target;
  const bool disentangled = acds.disentangled();

  ps.zero_grad();
  Forward f = forward(model, src, tgt, variant);

  LossReport rep;
  // (1) discriminators on detached fakes.
  {
    std::vector<RealnessMaps<float>> reals{acds.discriminate(ps, tgt, Domain::Target)};
    std::vector<RealnessMaps<float>> fakes{acds.discriminate(ps, ad::detach(f.fake_t), Domain::Target)};
    if (disentangled) {
      reals.push_back(acds.discriminate(ps, src, Domain::Source));
      fakes.push_back(acds.discriminate(ps, ad::detach(f.o_s), Domain::Source));
    }
    const VarF d_loss = adversarial_loss(reals, fakes, AdvRole::Discriminator, cfg.adv_form);
    rep.d_loss = value_of(d_loss);
    if (!std::isfinite(rep.d_loss)) abort_non_finite(rep, batch, "discriminator loss");
    if (parts != StepParts::GeneratorOnly) {
      ad::backward(d_loss);
      state.d_opt.step(ps, is_discriminator_param, lr);
      ps.zero_grad();
    }
  }
  if (parts == StepParts::DiscriminatorOnly) {
    if (!ps.all_finite()) abort_non_finite(rep, batch, "parameters after update");
    return rep;
  }

  // (2) everything else, discriminators frozen.
  ps.set_requires_grad(is_discriminator_param, false);
  try {
    std::vector<RealnessMaps<float>> fakes{acds.discriminate(ps, f.fake_t, Domain::Target)};
    if (disentangled) fakes.push_back(acds.discriminate(ps, f.o_s, Domain::Source));
    const VarF adv = adversarial_loss<float>({}, fakes, AdvRole::Generator, cfg.adv_form);
    const VarF zero = VarF::scalar(0.0f);
    VarF self = zero, cycle = zero, anatomy = zero, smooth = zero, align = zero;

    if (variant == Variant::Baseline) {
      align = ad::l1(f.o_t, tgt);
    } else {
      smooth = smoothness_loss(f.phi);
      if (variant == Variant::Bef) {
        align = ad::l1(f.o_t_b, tgt);
      } else if (variant == Variant::Aft) {
        align = ad::l1(f.o_t_a, tgt);
      } else {
        align = alignment_loss(f.o_t_b, f.o_t_a, tgt);
      }
    }
    if (disentangled) {
      const VarF rec_s = acds.decode(ps, f.c_s, &f.s_s, Domain::Source);
      const VarF rec_t = acds.decode(ps, f.c_t, &f.s_t, Domain::Target);
      self = ad::add(ad::l1(rec_s, src), ad::l1(rec_t, tgt));
      const VarF c_ot = acds.encode_content(ps, f.o_t, Domain::Target);
      const VarF c_os = acds.encode_content(ps, f.o_s, Domain::Source);
      cycle = cycle_consistency_from_latents(acds, ps, src, tgt, c_ot, c_os, f.s_s, f.s_t);
      anatomy = anatomy_consistency_from_latents(c_ot, f.c_s, c_os, f.c_t);
    }
    LossWeights w = cfg.weights;
    if (!uses_acds(variant)) w.anatomy = 0.0;
    const VarF total = total_loss(adv, self, cycle, anatomy, smooth, align, w);

    rep.adv = value_of(adv);
    rep.self = value_of(self);
    rep.cycle = value_of(cycle);
    rep.anatomy = value_of(anatomy);
    rep.smooth = value_of(smooth);
    rep.align = value_of(align);
    rep.total = rep.adv + rep.self + rep.cycle + w.anatomy * rep.anatomy + w.smooth * rep.smooth +
                w.align * rep.align;
    if (!rep.finite() || !std::isfinite(total.item())) abort_non_finite(rep, batch, "generator loss");

    ad::backward(total);
    state.g_opt.step(ps, is_generator_param, lr);
    ps.zero_grad();
  } catch (...) {
    ps.set_requires_grad(is_discriminator_param, true);
    throw;
  }
  ps.set_requires_grad(is_discriminator_param, true);
  if (!ps.all_finite()) abort_non_finite(rep, batch, "parameters after update");
  ++state.iteration;
  return rep;
}

// -- data ---------------------------------------------------------------------------

namespace {

Volume as_normalized(const Volume& v, double lo, double hi) {
  return v.units() == Units::Normalized ? v : normalize_intensity(v, lo, hi);
}

Volume as_hu(const Volume& v, double lo, double hi) {
  return v.units() == Units::HU ? v : denormalize_intensity(v, lo, hi);
}

constexpr double kMinMaskCoverage = 0.3;
constexpr int kPatchAttempts = 64;

}  // namespace

Batch sample_batch(const std::vector<TrainingCase>& cases, const std::vector<std::size_t>& picks, int patch,
                   std::uint64_t seed) {
  if (picks.empty()) throw ParameterError("empty batch");
  std::vector<Volume> srcs, tgts;
  const Dims size{patch, patch, patch};
  for (std::size_t k = 0; k < picks.size(); ++k) {
    const TrainingCase& c = cases.at(picks[k]);
    const Dims& d = c.source.dims();
    if (d.d < patch || d.h < patch || d.w < patch) {
      throw DimensionError("case " + c.id + " (" + to_string(d) + ") is smaller than the patch");
    }
    Rng rng(substream_seed(seed, "patch/" + std::to_string(k)));
    std::uniform_int_distribution<int> uz(0, d.d - patch), uy(0, d.h - patch), ux(0, d.w - patch);
    Index3 best{};
    double best_cov = -1.0;
    for (int attempt = 0; attempt < kPatchAttempts; ++attempt) {
      const Index3 o{uz(rng), uy(rng), ux(rng)};
      const double cov = static_cast<double>(extract_patch(c.mask, o, size).count()) / size.voxels();
      if (cov > best_cov) {
        best_cov = cov;
        best = o;
      }
      if (cov >= kMinMaskCoverage) break;
    }
    srcs.push_back(extract_patch(c.source, best, size));
    tgts.push_back(extract_patch(c.target, best, size));
  }
  return {volumes_to_var<float>(srcs), volumes_to_var<float>(tgts), seed};
}

// -- inference ------------------------------------------------------------------------

bool InferInfo::padded() const {
  for (int i = 0; i < 3; ++i) {
    if (pad_before[i] || pad_after[i]) return true;
  }
  return false;
}

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Volume infer(Model<float>& model, const Volume& source, double hu_lo, double hu_hi, InferInfo* info) {
  const Volume norm = as_normalized(source, hu_lo, hu_hi);
  const Dims d = norm.dims();
  const int n[3] = {d.d, d.h, d.w};
  int before[3], padded[3];
  for (int i = 0; i < 3; ++i) {
    padded[i] = (n[i] + 7) / 8 * 8;
    before[i] = (padded[i] - n[i]) / 2;
  }
  const Dims pd{padded[0], padded[1], padded[2]};
  Volume input = norm;
  if (pd != d) {
    std::vector<float> vox(pd.voxels());
    for (int z = 0; z < pd.d; ++z) {
      const int sz = reflect_index(z - before[0], d.d);
      for (int y = 0; y < pd.h; ++y) {
        const int sy = reflect_index(y - before[1], d.h);
        for (int x = 0; x < pd.w; ++x) vox[pd.index(z, y, x)] = norm.at(sz, sy, reflect_index(x - before[2], d.w));
      }
    }
    input = Volume(pd, norm.spacing(), std::move(vox), Units::Normalized, norm.modality());
  }

  model.params().begin_trace();
  Volume out = [&] {
    try {
      return synthesize_s2t(model, input);
    } catch (...) {
      model.params().end_trace();
      throw;
    }
  }();
  auto touched = model.params().end_trace();

  if (pd != d) out = extract_patch(out, Index3{before[0], before[1], before[2]}, d);
  if (info) {
    for (int i = 0; i < 3; ++i) {
      info->pad_before[i] = before[i];
      info->pad_after[i] = padded[i] - n[i] - before[i];
    }
    info->touched = std::move(touched);
  }
  return denormalize_intensity(out, hu_lo, hu_hi);
}

Volume infer(LoadedCheckpoint& ckpt, const Volume& source, InferInfo* info) {
  return infer(*ckpt.model, source, ckpt.meta.hu_lo, ckpt.meta.hu_hi, info);
}

double mean_masked_mae(Model<float>& model, const DatasetManifest& manifest, Split split, bool use_aligned,
                       double hu_lo, double hu_hi) {
  const auto cases = manifest.split(split);
  if (cases.empty()) throw ManifestError(std::string("no ") + to_string(split) + " cases in manifest");
  double sum = 0.0;
  for (const auto& c : cases) {
    const CaseVolumes v = load_case(manifest, c);
    const Volume pred = infer(model, v.source, hu_lo, hu_hi);
    const Volume ref = as_hu(use_aligned ? v.target_aligned : v.target_misaligned, hu_lo, hu_hi);
    sum += mae_masked(pred, ref, v.mask);
  }
  return sum / static_cast<double>(cases.size());
}

CohortReport evaluate_split(Model<float>& model, const DatasetManifest& manifest, Split split, double hu_lo,
                            double hu_hi, const fs::path& pred_dir) {
  const auto cases = manifest.split(split);
  if (cases.empty()) throw ManifestError(std::string("no ") + to_string(split) + " cases in manifest");
  if (!pred_dir.empty()) fs::create_directories(pred_dir);
  std::vector<CaseMetrics> rows;
  const double range = hu_hi - hu_lo;
  for (const auto& c : cases) {
    const CaseVolumes v = load_case(manifest, c);
    const Volume pred = infer(model, v.source, hu_lo, hu_hi);
    if (!pred_dir.empty()) save_volume(pred, pred_dir / (c.id + ".mivol"));
    const Volume ref = as_hu(v.target_aligned, hu_lo, hu_hi);
    rows.push_back({c.id, mae_masked(pred, ref, v.mask), psnr_masked(pred, ref, v.mask, range),
                    ssim_masked(pred, ref, v.mask, range)});
  }
  return summarize(std::move(rows));
}

// -- checkpoints ----------------------------------------------------------------------

namespace {

constexpr std::string_view kCkptMagic = "RSCKPT1\n";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void save_checkpoint(const Model<float>& model, const CheckpointMeta& meta, const fs::path& path) {
  const auto& ps = model.params();
  std::string payload;
  payload.reserve(ps.scalar_count() * sizeof(float));
  json tensors = json::array();
  for (const auto& e : ps.entries()) {
    tensors.push_back({{"name", e.name}, {"shape", e.var.shape()}});
    const auto v = e.var.value();
    payload.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  json j{{"variant", to_string(meta.variant)},
         {"channel_scale", meta.channel_scale},
         {"style_dim", meta.style_dim},
         {"seed", meta.seed},
         {"epoch", meta.epoch},
         {"iteration", meta.iteration},
         {"config_hash", hex64(meta.config_hash)},
         {"hu_lo", meta.hu_lo},
         {"hu_hi", meta.hu_hi},
         {"val_mae", meta.val_mae},
         {"payload_bytes", payload.size()},
         {"payload_fnv1a", hex64(fnv1a64(payload))},
         {"tensors", tensors}};
  const std::string header = j.dump();
  std::string out(kCkptMagic);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(header.size()) >> (8 * i)) & 0xff));
  out += header;
  out += payload;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < kCkptMagic.size() + 8 || bytes.compare(0, kCkptMagic.size(), kCkptMagic) != 0) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) {
    hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[kCkptMagic.size() + i])) << (8 * i);
  }
  const std::size_t hstart = kCkptMagic.size() + 8;
  if (hlen > bytes.size() - hstart) throw CorruptionError("checkpoint header truncated: " + path.string());
  json j;
  try {
    j = json::parse(bytes.substr(hstart, hlen));
  } catch (const json::exception& e) {
    throw CorruptionError("checkpoint header unreadable: " + std::string(e.what()));
  }
  const std::string payload = bytes.substr(hstart + hlen);

  LoadedCheckpoint ck;
  try {
    if (payload.size() != j.at("payload_bytes").get<std::size_t>()) {
      throw CorruptionError("checkpoint payload size mismatch: " + path.string());
    }
    if (hex64(fnv1a64(payload)) != j.at("payload_fnv1a").get<std::string>()) {
      throw CorruptionError("checkpoint payload checksum mismatch: " + path.string());
    }
    CheckpointMeta& m = ck.meta;
    m.variant = parse_variant(j.at("variant").get<std::string>());
    m.channel_scale = j.at("channel_scale").get<double>();
    m.style_dim = j.at("style_dim").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epoch = j.at("epoch").get<int>();
    m.iteration = j.at("iteration").get<long>();
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    m.hu_lo = j.at("hu_lo").get<double>();
    m.hu_hi = j.at("hu_hi").get<double>();
    m.val_mae = j.at("val_mae").is_number() ? j.at("val_mae").get<double>() : std::numeric_limits<double>::quiet_NaN();

    ck.model = std::make_unique<Model<float>>(ModelConfig{m.variant, m.channel_scale, m.style_dim, m.seed});
    auto& ps = ck.model->params();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != ps.size()) throw CorruptionError("checkpoint tensor count does not match its variant");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& e = ps.entry(i);
      if (tensors[i].at("name").get<std::string>() != e.name ||
          tensors[i].at("shape").get<ad::Shape>() != e.var.shape()) {
        throw CorruptionError("checkpoint tensor " + std::to_string(i) + " does not match " + e.name);
      }
      const std::size_t nbytes = e.var.size() * sizeof(float);
      if (offset + nbytes > payload.size()) throw CorruptionError("checkpoint payload truncated");
      std::memcpy(e.var.mutable_value().data(), payload.data() + offset, nbytes);
      offset += nbytes;
    }
    if (offset != payload.size()) throw CorruptionError("checkpoint payload has trailing bytes");
  } catch (const json::exception& e) {
    throw CorruptionError("checkpoint metadata invalid: " + std::string(e.what()));
  }
  if (!ck.model->params().all_finite()) throw CorruptionError("checkpoint holds non-finite parameters");
  return ck;
}

// -- runs -------------------------------------------------------------------------------

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  os << s;
}

std::string csv_row(long iter, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", iter, r.adv, r.self, r.cycle,
                r.anatomy, r.smooth, r.align, r.total, r.d_loss);
  return buf;
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const DatasetManifest manifest = load_manifest(cfg.data_dir);
  std::vector<TrainingCase> cases;
  for (const auto& c : manifest.split(Split::Train)) {
    CaseVolumes v = load_case(manifest, c);
    cases.push_back({c.id, as_normalized(v.source, cfg.hu_lo, cfg.hu_hi),
                     as_normalized(v.target_misaligned, cfg.hu_lo, cfg.hu_hi), std::move(v.mask)});
  }
  if (cases.empty()) throw ManifestError("no training cases in " + cfg.data_dir.string());
  const bool have_val = !manifest.split(Split::Val).empty();

  TrainResult result;
  result.run_dir = cfg.resolved_run_dir();
  fs::create_directories(result.run_dir);
  write_text(result.run_dir / "config.snapshot", config_snapshot(cfg));

  ModelConfig mc;
  mc.variant = cfg.variant;
  mc.channel_scale = cfg.channel_scale;
  mc.seed = cfg.seed;
  TrainerState state(mc);

  const long per_epoch = (static_cast<long>(cases.size()) + cfg.batch - 1) / cfg.batch;
  const long max_iter = per_epoch * cfg.epochs;
  Rng data_rng = make_rng(cfg.seed, "data");
  const std::uint64_t sampling_seed = substream_seed(cfg.seed, "sampling");

  std::ofstream losses(result.run_dir / "losses.csv", std::ios::trunc);
  std::ofstream vals(result.run_dir / "val.csv", std::ios::trunc);
  if (!losses || !vals) throw IoError("cannot write logs in " + result.run_dir.string());
  losses << "iter,adv,self,cycle,anatomy,smooth,align,total,d_loss\n";
  vals << "epoch,iter,val_mae_hu\n";

  double val_mae = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> order(cases.size());
  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), data_rng);
    double epoch_total = 0.0;
    for (long b = 0; b < per_epoch; ++b) {
      std::vector<std::size_t> picks;
      for (int k = 0; k < cfg.batch; ++k) picks.push_back(order[(b * cfg.batch + k) % order.size()]);
      const long iter = state.iteration;
      const Batch batch = sample_batch(cases, picks, cfg.patch, substream_seed(sampling_seed, std::to_string(iter)));
      const double lr = lr_schedule(iter, max_iter, cfg.lr, cfg.poly_power);
      const LossReport rep = train_step(state, batch, cfg, lr);
      if (iter == 0) result.first = rep;
      result.last = rep;
      epoch_total += rep.total;
      losses << csv_row(iter + 1, rep);
    }
    losses.flush();
    const bool validate_now =
        have_val && (epoch == cfg.epochs || (cfg.val_every > 0 && epoch % cfg.val_every == 0));
    if (validate_now) {
      val_mae = mean_masked_mae(state.model, manifest, Split::Val, false, cfg.hu_lo, cfg.hu_hi);
      char buf[128];
      std::snprintf(buf, sizeof buf, "%d,%ld,%.9g\n", epoch, state.iteration, val_mae);
      vals << buf;
      vals.flush();
    }
    if (!cfg.quiet) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "[%s] epoch %d/%d  mean total %.5f  val MAE %.3f HU  (%.1fs)\n", to_string(cfg.variant),
                   epoch, cfg.epochs, epoch_total / per_epoch, val_mae, secs);
    }
  }

  CheckpointMeta meta;
  meta.variant = cfg.variant;
  meta.channel_scale = cfg.channel_scale;
  meta.style_dim = mc.style_dim;
  meta.seed = cfg.seed;
  meta.epoch = cfg.epochs;
  meta.iteration = state.iteration;
  meta.config_hash = config_hash(cfg);
  meta.hu_lo = cfg.hu_lo;
  meta.hu_hi = cfg.hu_hi;
  meta.val_mae = val_mae;
  result.checkpoint = result.run_dir / "ckpt_final.bin";
  save_checkpoint(state.model, meta, result.checkpoint);
  result.val_mae = val_mae;
  result.iterations = state.iteration;
  return result;
}

TrainResult train_baseline(TrainConfig cfg) {
  cfg.variant = Variant::Baseline;
  return train(cfg);
}

std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const std::vector<Variant>& variants,
                                      const fs::path& out_dir) {
  if (variants.empty()) throw ConfigError("no variants to compare");
  const DatasetManifest manifest = load_manifest(cfg.data_dir);
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    TrainConfig c = cfg;
    c.variant = v;
    c.run_dir = out_dir / run_name(v);
    const TrainResult tr = train(c);
    LoadedCheckpoint ck = load_checkpoint(tr.checkpoint);
    CohortReport rep = evaluate_split(*ck.model, manifest, Split::Test, c.hu_lo, c.hu_hi, c.run_dir / "pred");
    write_report(rep, c.run_dir / "eval");
    rows.push_back({v, std::move(rep), tr.checkpoint});
  }
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "ablation.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (out_dir / "ablation.csv").string());
  csv << "variant,mae_hu_mean,mae_hu_std,psnr_db_mean,psnr_db_std,ssim_mean,ssim_std,cases\n";
  for (const auto& r : rows) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.8f,%.8f,%zu\n", to_string(r.variant),
                  r.report.mae.mean, r.report.mae.std, r.report.psnr.mean, r.report.psnr.std, r.report.ssim.mean,
                  r.report.ssim.std, r.report.cases.size());
    csv << buf;
  }
  return rows;
}

}  // namespace regsyn
