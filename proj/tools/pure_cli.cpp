#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "pure/commands.hpp"
#include "pure/errors.hpp"

using namespace pure;

int main(int argc, char** argv) {
  CLI::App app{"pure: profile-updating LLM recommender evaluation"};
  app.require_subcommand(1);

  std::string reviews, metadata, out = "histories.jsonl";
  std::size_t min_interactions = 4, first_target = 4;
  auto* ingest = app.add_subcommand("ingest", "join reviews with metadata and write per-user histories");
  ingest->add_option("--reviews", reviews, "reviews JSONL (.gz ok)")->required();
  ingest->add_option("--metadata", metadata, "metadata JSONL (.gz ok)")->required();
  ingest->add_option("--out", out, "output history file");
  ingest->add_option("--min-interactions", min_interactions);
  ingest->add_option("--first-target", first_target);

  std::string config_path, run_id, backend_kind, mode;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "run or resume an experiment");
  run->add_option("--config", config_path)->required();
  run->add_option("--run-id", run_id, "overrides run_id in the config");
  run->add_option("--backend", backend_kind)->check(CLI::IsMember({"mock", "http"}));
  run->add_option("--seed", seed);
  run->add_option("--mode", mode)->check(CLI::IsMember({"continuous", "oneshot"}));

  std::string output_dir;
  bool csv = false;
  auto* report = app.add_subcommand("report", "print tables for a run");
  report->add_option("--output-dir", output_dir)->required();
  report->add_option("--run-id", run_id)->required();
  report->add_flag("--csv", csv, "print the metrics CSV instead");

  auto* plot = app.add_subcommand("plot-data", "print the token/accuracy trade-off CSV");
  plot->add_option("--output-dir", output_dir)->required();
  plot->add_option("--run-id", run_id)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*ingest) {
      auto s = cmd_ingest(reviews, metadata, out, min_interactions, first_target);
      std::cout << s.to_json().dump(2) << "\n";
      return kExitOk;
    }
    if (*run) {
      auto j = nlohmann::json::parse(std::ifstream(config_path), nullptr, false);
      if (j.is_discarded()) {
        std::cerr << "config error: " << config_path << " is not readable JSON\n";
        return kExitConfig;
      }
      if (!run_id.empty()) j["run_id"] = run_id;
      if (!backend_kind.empty()) j["backend"]["kind"] = backend_kind;
      if (seed) j["run_seed"] = *seed;
      if (!mode.empty()) j["mode"] = mode;
      auto cfg = parse_run_config(j, std::filesystem::path(config_path).parent_path());
      return cmd_run(cfg, std::cerr);
    }
    if (*report) return cmd_report(output_dir, run_id, std::cout, std::cerr, csv);
    if (*plot) return cmd_plot_data(output_dir, run_id, std::cout, std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IngestError& e) {
    std::cerr << "ingest error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
