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

// regsyn command-line entry point.
//
// Exit codes: 0 success, 1 invalid input/config/usage, 2 runtime abort.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "regsyn/metrics.hpp"
#include "regsyn/phantom.hpp"
#include "regsyn/trainer.hpp"

namespace fs = std::filesystem;
using namespace regsyn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

Dims parse_dims(const std::string& s) {
  std::vector<int> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--dims: cannot parse '" + s + "'");
    }
  }
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ValidationError("--dims expects N or D,H,W");
}

std::vector<Variant> parse_variant_list(const std::string& s) {
  std::vector<Variant> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_variant(item));
  }
  if (out.empty()) throw ConfigError("--variants is empty");
  return out;
}

void print_summary(const CohortReport& r) {
  std::printf("cases %zu  MAE %.2f +- %.2f HU  PSNR %.2f +- %.2f dB%s  SSIM %.4f +- %.4f\n", r.cases.size(),
              r.mae.mean, r.mae.std, r.psnr.mean, r.psnr.std,
              r.psnr_infinite ? " (+inf cases excluded)" : "", r.ssim.mean, r.ssim.std);
}

struct GenArgs {
  std::string out;
  int count = 55;
  std::uint64_t seed = 7;
  std::string dims = "64";
  double amplitude = 3.0;
  double sigma = 8.0;
};

int cmd_gen_phantoms(const GenArgs& a) {
  if (a.count < 1) throw ValidationError("--count must be >= 1");
  PhantomConfig cfg;
  cfg.dims = parse_dims(a.dims);
  cfg.misalign_amplitude = a.amplitude;
  cfg.misalign_sigma = a.sigma;
  cfg.validate();
  const auto m = write_phantom_dataset(a.out, cfg, a.seed, SplitCounts::proportional(a.count));
  std::printf("wrote %zu phantom pairs to %s\n", m.cases.size(), fs::path(a.out).string().c_str());
  return kExitOk;
}

int cmd_train(const std::string& config) {
  const TrainConfig cfg = load_train_config(config);
  std::cout << config_snapshot(cfg) << std::flush;
  const TrainResult r = train(cfg);
  std::printf("checkpoint %s\nfinal total %.6f  val MAE %.3f HU  (%ld iterations)\n", r.checkpoint.string().c_str(),
              r.last.total, r.val_mae, r.iterations);
  return kExitOk;
}

int cmd_synthesize(const std::string& checkpoint, const std::string& input, const std::string& output) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const Volume src = load_volume(input);
  InferInfo info;
  const Volume out = infer(ck, src, &info);
  const fs::path out_path(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_volume(out, out_path);
  const fs::path sidecar = out_path.string() + ".json";
  if (info.padded()) {
    nlohmann::json j{{"pad_before_zyx", info.pad_before}, {"pad_after_zyx", info.pad_after}, {"mode", "reflect"}};
    std::ofstream(sidecar) << j.dump(2) << '\n';
  } else if (fs::exists(sidecar)) {
    fs::remove(sidecar);
  }
  std::printf("wrote %s (%s)\n", out_path.string().c_str(), to_string(out.dims()).c_str());
  return kExitOk;
}

int cmd_evaluate(const std::string& pred, const std::string& ref, const std::string& mask, const std::string& out) {
  const CohortReport r = evaluate_dataset(pred, ref, mask);
  write_report(r, out);
  print_summary(r);
  return kExitOk;
}

int cmd_ablate(const std::string& config, const std::string& variants) {
  const TrainConfig cfg = load_train_config(config);
  const auto list = parse_variant_list(variants);
  std::cout << config_snapshot(cfg) << std::flush;
  const fs::path out = cfg.data_dir / "runs" / ("ablation_seed" + std::to_string(cfg.seed));
  const auto rows = run_ablation(cfg, list, out);
  for (const auto& r : rows) {
    std::printf("%-10s ", to_string(r.variant));
    print_summary(r.report);
  }
  std::printf("wrote %s\n", (out / "ablation.csv").string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Registration-guided cross-modality 3D image synthesis"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-phantoms", "Write a synthetic paired phantom dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of pairs (split 40/5/10 proportionally)");
  gen_cmd->add_option("--seed", gen.seed, "Root seed");
  gen_cmd->add_option("--dims", gen.dims, "Volume dims: N or D,H,W");
  gen_cmd->add_option("--amplitude", gen.amplitude, "Max misalignment displacement (voxels)");
  gen_cmd->add_option("--sigma", gen.sigma, "Misalignment smoothness (voxels)");

  std::string config;
  auto* train_cmd = app.add_subcommand("train", "Train from a key=value config file");
  train_cmd->add_option("--config", config, "Config file")->required();

  std::string checkpoint, input, output;
  auto* syn_cmd = app.add_subcommand("synthesize", "Translate a source volume with a checkpoint");
  syn_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  syn_cmd->add_option("--input", input, "Source volume (.mivol)")->required();
  syn_cmd->add_option("--output", output, "Output volume (.mivol)")->required();

  std::string pred, ref, mask, out;
  auto* eval_cmd = app.add_subcommand("evaluate", "Masked MAE/PSNR/SSIM of predictions");
  eval_cmd->add_option("--pred", pred, "Prediction directory (<case>.mivol)")->required();
  eval_cmd->add_option("--ref", ref, "Reference directory or phantom dataset")->required();
  eval_cmd->add_option("--mask", mask, "Mask directory or phantom dataset")->required();
  eval_cmd->add_option("--out", out, "Report directory")->required();

  std::string ablate_config, variants = "BEF,AFT,BOTH,BOTH+ACDS";
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare variants on one dataset");
  ablate_cmd->add_option("--config", ablate_config, "Config file")->required();
  ablate_cmd->add_option("--variants", variants, "Comma-separated variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto parsed = app.get_subcommands();
    std::cerr << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitInvalid;
  }

  try {
    if (*gen_cmd) return cmd_gen_phantoms(gen);
    if (*train_cmd) return cmd_train(config);
    if (*syn_cmd) return cmd_synthesize(checkpoint, input, output);
    if (*eval_cmd) return cmd_evaluate(pred, ref, mask, out);
    if (*ablate_cmd) return cmd_ablate(ablate_config, variants);
  } catch (const NonFiniteError& e) {
    std::cerr << e.what() << '\n';
    return kExitRuntime;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return e.kind() == "runtime error" ? kExitRuntime : kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInvalid;
}
