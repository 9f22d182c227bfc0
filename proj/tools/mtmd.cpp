#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mtmd/mtmd.hpp"

namespace fs = std::filesystem;
using namespace mtmd;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = csv::open_out(path);
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

struct DataOverride {
  std::string panel, concepts;

  Dataset load(const TrainConfig& config) const {
    DataPaths paths = config.data;
    if (!panel.empty()) paths.panel = panel;
    if (!concepts.empty()) paths.concepts = concepts;
    return load_dataset(paths);
  }
};

void add_data_options(CLI::App* cmd, DataOverride& d) {
  cmd->add_option("--panel", d.panel, "Panel CSV (defaults to the path recorded in the checkpoint)");
  cmd->add_option("--concepts", d.concepts, "Concept CSV (defaults to the path recorded in the checkpoint)");
}

int gen_data(const std::string& spec_path, const std::string& out_dir) {
  const SyntheticSpec spec = synthetic_spec_from_json(read_json(spec_path));
  const SyntheticMarket market = generate_synthetic(spec);
  write_synthetic(out_dir, market);
  std::printf("wrote %zu dates x %zu stocks, %zu concepts to %s\n", market.panel.dates.size(), spec.n_stocks,
              spec.n_concepts, out_dir.c_str());
  return kOk;
}

int train_cmd(const std::string& config_path, std::optional<std::uint64_t> seed) {
  TrainConfig config = load_train_config(config_path);
  if (seed) {
    config.seed = *seed;
    config.model.seed = *seed;
  }
  const Dataset data = load_dataset(config.data);
  const TrainResult r = train(config, data, [](const EpochRecord& e) {
    std::fprintf(stderr, "epoch %3zu  loss %.6f  valid IC %.4f%s\n", e.epoch, e.train_loss, e.valid_ic,
                 e.improved ? "  *" : "");
  });
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint.bin", r.best);
  write_text(dir / "log.json", to_json(r.log).dump(2) + "\n");
  std::printf("best epoch %zu, valid IC %.4f; checkpoint at %s\n", r.log.best_epoch, r.log.best_valid_ic,
              (dir / "checkpoint.bin").string().c_str());
  return kOk;
}

int eval_cmd(const std::string& ckpt_path, const std::string& split, const std::string& report,
             const DataOverride& over) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset data = over.load(config_from_checkpoint(ckpt));
  const MetricReport r = evaluate(ckpt, data, split_from_string(split));
  std::cout << report_table(r);
  if (!report.empty()) write_text(report, report_csv(r));
  return kOk;
}

int ablate_cmd(const std::string& config_path, const std::string& out) {
  const TrainConfig config = load_train_config(config_path);
  const Dataset data = load_dataset(config.data);
  const AblationResult r = run_ablation(config, data, [](const std::string& label, std::uint64_t seed, const MetricReport& t) {
    std::fprintf(stderr, "%s seed %llu: test IC %.4f\n", label.c_str(), static_cast<unsigned long long>(seed), t.ic.mean);
  });
  const std::string table = ablation_table(r);
  std::cout << table;
  if (!out.empty()) write_text(out, table);
  return kOk;
}

int export_cmd(const std::string& ckpt_path, const std::string& out, const std::string& split,
               const DataOverride& over) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset data = over.load(config_from_checkpoint(ckpt));
  export_embeddings(ckpt, data, split_from_string(split), out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-stage concept memory model for stock trend forecasting"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  auto* gen = app.add_subcommand("gen-data", "Generate a planted-factor synthetic market");
  gen->add_option("--spec", spec_path, "Synthetic spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint.bin and log.json");
  tr->add_option("--config", config_path, "Training config JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--seed", seed, "Override the config seed");

  std::string ckpt_path, split = "test", report;
  DataOverride eval_data;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  ev->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
  ev->add_option("--report", report, "Also write per-date metrics to this CSV");
  add_data_options(ev, eval_data);

  std::string ablate_out;
  auto* ab = app.add_subcommand("ablate", "Train B/P/H/A and compare test metrics");
  ab->add_option("--config", config_path, "Training config JSON")->required()->check(CLI::ExistingFile);
  ab->add_option("--out", ablate_out, "Also write the table to this file");

  std::string export_out, export_split = "test";
  DataOverride export_data;
  auto* ex = app.add_subcommand("export-embeddings", "Write per-stock h1/q1/q2/ĥ3 features as CSV");
  ex->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ex->add_option("--out", export_out, "Output CSV")->required();
  ex->add_option("--split", export_split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
  add_data_options(ex, export_data);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_data(spec_path, out_dir);
    if (*tr) return train_cmd(config_path, seed);
    if (*ev) return eval_cmd(ckpt_path, split, report, eval_data);
    if (*ab) return ablate_cmd(config_path, ablate_out);
    if (*ex) return export_cmd(ckpt_path, export_out, export_split, export_data);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const Json::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
