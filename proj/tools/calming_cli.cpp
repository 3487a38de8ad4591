#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "calming/calming.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Calming-prior inverse problem toolkit"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  for (const auto& name : calming::pipeline_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " pipeline");
    sub->add_option("--config", config_path, "JSON experiment config")->required();
    sub->add_option("--seed", seed, "master seed, overrides the config");
    sub->add_option("--out", out_dir, "output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  const std::string pipeline = app.get_subcommands().front()->get_name();

  try {
    std::filesystem::path file(config_path);
    std::ifstream in(file);
    if (!in) throw calming::ConfigError("--config", "cannot open " + config_path);
    calming::json doc;
    try {
      doc = calming::json::parse(in);
    } catch (const calming::json::parse_error& e) {
      throw calming::ConfigError("<json>", e.what());
    }
    if (!doc.is_object()) throw calming::ConfigError("<root>", "expected a JSON object");
    if (doc.contains("pipeline") && doc["pipeline"] != pipeline)
      throw calming::ConfigError("pipeline", "config names '" + doc["pipeline"].dump() + "' but subcommand is " + pipeline);
    doc["pipeline"] = pipeline;
    if (seed) doc["seed"] = *seed;
    const auto base = file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path();
    const calming::ExperimentConfig cfg = calming::parse_config(doc, base);
    const calming::ResultRecord rec = calming::run_pipeline(cfg, out_dir);
    for (const auto& [k, v] : rec.flags)
      if (!v) std::cerr << "hypothesis not verified: " << k << "\n";
    return rec.flags_ok() ? 0 : 2;
  } catch (const calming::ConfigError& e) {
    std::cerr << "config error at " << e.field << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
