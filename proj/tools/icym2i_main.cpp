// icym2i command line: generate | run | config | report | compare
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "icym2i/experiment.hpp"

using namespace icym2i;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitCompare = 3;

struct Common {
  std::string config_path;
  std::string preset_name;
  std::string seeds;
  std::string out;
  std::string arms;
  int jobs = 0;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

ExperimentConfig load_config(const Common& c) {
  if (c.config_path.empty() == c.preset_name.empty())
    throw InvalidArgument("exactly one of --config or --preset is required");
  ExperimentConfig cfg;
  if (!c.preset_name.empty()) {
    cfg = preset(c.preset_name);
  } else {
    std::ifstream f(c.config_path);
    if (!f) throw InvalidArgument("cannot open config " + c.config_path);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("config parse: ") + e.what());
    }
    cfg = ExperimentConfig::from_json(j);
  }
  if (!c.seeds.empty()) {
    cfg.seeds.clear();
    for (auto& s : split_list(c.seeds)) {
      try {
        cfg.seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw InvalidArgument("bad seed: " + s);
      }
    }
  }
  if (!c.arms.empty()) {
    cfg.arms.clear();
    for (auto& a : split_list(c.arms)) cfg.arms.push_back(arm_from_string(a));
  }
  if (!c.out.empty()) cfg.output = c.out;
  if (c.jobs > 0) {
    cfg.jobs = c.jobs;
  } else if (const char* env = std::getenv("ICYM2I_JOBS")) {
    cfg.jobs = std::max(1, std::atoi(env));
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool with_arms) {
  app->add_option("--config", c.config_path, "JSON experiment config");
  app->add_option("--preset", c.preset_name, "table1 | table2 | table4 | table5");
  app->add_option("--seed", c.seeds, "comma-separated seeds");
  app->add_option("--out", c.out, "output directory");
  if (with_arms) {
    app->add_option("--arms", c.arms, "comma-separated arms");
    app->add_option("--jobs", c.jobs, "worker threads (default ICYM2I_JOBS or 1)");
  }
}

ExperimentReport read_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidArgument("cannot open report " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("report parse: ") + e.what());
  }
  return ExperimentReport::from_json(j);
}

int cmd_generate(const Common& c) {
  ExperimentConfig cfg = load_config(c);
  const auto settings = cfg.generator.settings();
  std::filesystem::create_directories(cfg.output);
  for (auto seed : cfg.seeds)
    for (std::size_t si = 0; si < settings.size(); ++si) {
      Dataset full;
      const auto data_seed = derive_seed(seed, {"data", settings[si]});
      if (cfg.generator.type == "logic_gate") {
        full = generate_logic_gate(cfg.generator.gates[si], cfg.generator.n, data_seed);
      } else {
        ClusteredLatentSpec s = cfg.generator.latent;
        s.p1 = cfg.generator.mixing[si].first;
        s.p2 = cfg.generator.mixing[si].second;
        s.n = cfg.generator.n;
        s.seed = data_seed;
        full = generate_clustered_latent(s);
      }
      std::string stem = settings[si];
      for (char& ch : stem)
        if (ch == ',' || ch == '=') ch = '_';
      const auto base = std::filesystem::path(cfg.output) / strprintf("%s_seed%llu", stem.c_str(),
                                                                       static_cast<unsigned long long>(seed));
      {
        std::ofstream f(base.string() + "_full.csv");
        write_csv(full, f);
      }
      if (cfg.mechanism) {
        auto md = apply_missingness(full, *cfg.mechanism, derive_seed(seed, {"mask", settings[si]}));
        std::ofstream f(base.string() + "_masked.csv");
        write_csv(md.data, f);
      }
      std::cout << "wrote " << base.string() << "_*.csv\n";
    }
  return kExitOk;
}

int cmd_run(const Common& c) {
  ExperimentConfig cfg = load_config(c);
  ExperimentReport rep = run_experiment(cfg);
  emit_report(rep, cfg.output);
  std::cout << format_table(rep);
  std::cout << "report written to " << cfg.output << "\n";
  return rep.complete ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Missingness-corrected multimodal evaluation and information decomposition"};
  app.require_subcommand(1);

  Common gen_opts, run_opts;
  auto* gen = app.add_subcommand("generate", "write synthetic datasets (full and masked) as CSV");
  add_common(gen, gen_opts, false);
  auto* run = app.add_subcommand("run", "run an experiment and write report.json / report.txt");
  add_common(run, run_opts, true);

  Common cfg_opts;
  auto* show = app.add_subcommand("config", "print the resolved experiment config as JSON");
  add_common(show, cfg_opts, true);

  std::string report_path;
  auto* rep = app.add_subcommand("report", "print the table for an existing report.json");
  rep->add_option("report", report_path, "report.json")->required();

  std::string cmp_report, cmp_reference;
  double cmp_tol = 0.05;
  auto* cmp = app.add_subcommand("compare", "compare a report against a reference CSV");
  cmp->add_option("report", cmp_report, "report.json")->required();
  cmp->add_option("reference", cmp_reference, "CSV: setting,arm,column,value[,tolerance]")->required();
  cmp->add_option("--tolerance", cmp_tol, "default absolute tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(gen_opts);
    if (*run) return cmd_run(run_opts);
    if (*show) {
      std::cout << load_config(cfg_opts).to_json().dump(2) << "\n";
      return kExitOk;
    }
    if (*rep) {
      std::cout << format_table(read_report(report_path));
      return kExitOk;
    }
    if (*cmp) {
      std::ifstream f(cmp_reference);
      if (!f) throw InvalidArgument("cannot open reference " + cmp_reference);
      auto res = compare_to_reference(read_report(cmp_report), f, cmp_tol);
      std::cout << format_comparison(res);
      return res.ok() ? kExitOk : kExitCompare;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
