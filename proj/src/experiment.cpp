#include "icym2i/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include "icym2i/metrics.hpp"

#ifndef ICYM2I_VERSION
#define ICYM2I_VERSION "dev"
#endif

namespace icym2i {

using nlohmann::json;

std::string_view to_string(ArmKind a) {
  switch (a) {
    case ArmKind::kOracle: return "oracle";
    case ArmKind::kObserved: return "observed";
    case ArmKind::kIcym2i: return "icym2i";
    case ArmKind::kTrainOnly: return "train-only-corrected";
    case ArmKind::kEvalOnly: return "eval-only-corrected";
  }
  return "?";
}

ArmKind arm_from_string(std::string_view s) {
  for (ArmKind a : {ArmKind::kOracle, ArmKind::kObserved, ArmKind::kIcym2i, ArmKind::kTrainOnly, ArmKind::kEvalOnly})
    if (to_string(a) == s) return a;
  throw InvalidArgument("unknown arm: " + std::string(s));
}

std::vector<std::string> GeneratorConfig::settings() const {
  std::vector<std::string> out;
  if (type == "logic_gate") {
    for (Gate g : gates) out.emplace_back(to_string(g));
  } else {
    for (auto [p1, p2] : mixing) out.push_back(strprintf("p1=%.2f,p2=%.2f", p1, p2));
  }
  return out;
}

// ------------------------------------------------------------------ config

void ExperimentConfig::validate() const {
  if (arms.empty()) throw InvalidArgument("config: at least one arm is required");
  if (seeds.empty()) throw InvalidArgument("config: seeds must be nonempty");
  if (generator.type == "logic_gate") {
    if (generator.gates.empty()) throw InvalidArgument("config: logic_gate generator needs gates");
  } else if (generator.type == "clustered_latent") {
    if (generator.mixing.empty()) throw InvalidArgument("config: clustered_latent generator needs settings");
    for (auto [p1, p2] : generator.mixing)
      if (!(p1 >= 0 && p2 >= 0 && p1 + p2 <= 1 + 1e-12))
        throw InvalidArgument("config: mixing proportions need p1, p2 >= 0 and p1 + p2 <= 1");
  } else {
    throw InvalidArgument("config: unknown generator type " + generator.type);
  }
  if (generator.n < 100) throw InvalidArgument("config: n must be at least 100");
  if (mechanism) mechanism->validate();
  bool needs_mask = false;
  for (ArmKind a : arms) needs_mask = needs_mask || a != ArmKind::kOracle;
  if (needs_mask && !mechanism) throw InvalidArgument("config: non-oracle arms need a mechanism");
  if (propensity.source != "fitted" && propensity.source != "true")
    throw InvalidArgument("config: propensity.source must be fitted or true");
  if (!(propensity.floor > 0 && propensity.floor <= 0.5)) throw InvalidArgument("config: propensity floor in (0, 0.5]");
  model.mlp.validate();
  if (batch_size < 2) throw InvalidArgument("config: evaluation batch size must be >= 2");
  if (pid.bins < 2) throw InvalidArgument("config: pid.bins must be >= 2");
  if (jobs < 1) throw InvalidArgument("config: jobs must be >= 1");
}

json ExperimentConfig::to_json() const {
  json j;
  j["name"] = name;
  json g;
  g["type"] = generator.type;
  g["n"] = generator.n;
  if (generator.type == "logic_gate") {
    g["gates"] = json::array();
    for (Gate x : generator.gates) g["gates"].push_back(std::string(to_string(x)));
  } else {
    g["settings"] = json::array();
    for (auto [p1, p2] : generator.mixing) g["settings"].push_back({p1, p2});
    g["latent_dim"] = generator.latent.latent_dim;
    g["clusters"] = generator.latent.clusters;
    g["cluster_spread"] = generator.latent.cluster_spread;
    g["within_sd"] = generator.latent.within_sd;
  }
  j["generator"] = g;
  if (mechanism) {
    json m;
    m["kind"] = std::string(to_string(mechanism->kind));
    m["target"] = std::string(to_string(mechanism->target));
    m["coefficients"] = mechanism->coefficients;
    m["intercept"] = mechanism->intercept;
    m["rate"] = mechanism->rate ? json(*mechanism->rate) : json(nullptr);
    m["floor"] = mechanism->floor;
    j["mechanism"] = m;
  } else {
    j["mechanism"] = nullptr;
  }
  json cov = json::array();
  if (propensity.covariates.x1) cov.push_back("x1");
  if (propensity.covariates.x2) cov.push_back("x2");
  if (propensity.covariates.y) cov.push_back("y");
  j["propensity"] = {{"source", propensity.source}, {"covariates", cov}, {"floor", propensity.floor}};
  j["arms"] = json::array();
  for (ArmKind a : arms) j["arms"].push_back(std::string(to_string(a)));
  j["model"] = {{"architecture", model.architecture == Architecture::kMlp ? "mlp" : "logistic"},
                {"hidden_layers", model.mlp.hidden_layers},
                {"hidden_width", model.mlp.hidden_width},
                {"learning_rate", model.mlp.learning_rate},
                {"epochs", model.mlp.epochs},
                {"batch_size", model.mlp.batch_size},
                {"calibrate", model.calibrate}};
  j["pid"] = {{"enabled", pid.enabled},
              {"bins", pid.bins},
              {"learning_rate", pid.solver.learning_rate},
              {"max_steps", pid.solver.max_steps},
              {"tolerance", pid.solver.tolerance},
              {"window", pid.solver.window},
              {"unrolled_rounds", pid.solver.unrolled_rounds},
              {"atol", pid.solver.final_projection.atol},
              {"max_rounds", pid.solver.final_projection.max_rounds}};
  j["evaluation"] = {{"batch_size", batch_size}};
  j["seeds"] = seeds;
  j["output"] = output;
  return j;
}

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) && !j[key].is_null() ? j[key].get<T>() : fallback;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.name = get_or<std::string>(j, "name", c.name);
    if (j.contains("generator")) {
      const json& g = j["generator"];
      c.generator.type = get_or<std::string>(g, "type", c.generator.type);
      c.generator.n = get_or<std::size_t>(g, "n", c.generator.n);
      if (g.contains("gates")) {
        c.generator.gates.clear();
        for (auto& s : g["gates"]) c.generator.gates.push_back(gate_from_string(s.get<std::string>()));
      }
      if (g.contains("settings")) {
        for (auto& s : g["settings"]) {
          if (s.is_array()) c.generator.mixing.emplace_back(s.at(0).get<double>(), s.at(1).get<double>());
          else c.generator.mixing.emplace_back(s.at("p1").get<double>(), s.at("p2").get<double>());
        }
      }
      c.generator.latent.latent_dim = get_or<std::size_t>(g, "latent_dim", c.generator.latent.latent_dim);
      c.generator.latent.clusters = get_or<std::size_t>(g, "clusters", c.generator.latent.clusters);
      c.generator.latent.cluster_spread = get_or<double>(g, "cluster_spread", c.generator.latent.cluster_spread);
      c.generator.latent.within_sd = get_or<double>(g, "within_sd", c.generator.latent.within_sd);
    }
    if (j.contains("mechanism") && !j["mechanism"].is_null()) {
      const json& m = j["mechanism"];
      const auto kind = mechanism_kind_from_string(m.at("kind").get<std::string>());
      const auto target = mask_target_from_string(get_or<std::string>(m, "target", "x2_and_y"));
      MechanismSpec s;
      if (m.contains("binary")) {
        s = MechanismSpec::binary(kind, m["binary"].at("p0").get<double>(), m["binary"].at("p1").get<double>(), target);
      } else if (kind == MechanismKind::kMcar) {
        s = MechanismSpec::mcar(m.at("rate").get<double>(), target);
      } else {
        s.kind = kind;
        s.target = target;
        s.coefficients = m.at("coefficients").get<std::vector<double>>();
        s.intercept = get_or<double>(m, "intercept", 0.0);
        if (m.contains("rate") && !m["rate"].is_null()) s.rate = m["rate"].get<double>();
      }
      s.floor = get_or<double>(m, "floor", s.floor);
      c.mechanism = s;
    }
    if (j.contains("propensity")) {
      const json& p = j["propensity"];
      c.propensity.source = get_or<std::string>(p, "source", c.propensity.source);
      c.propensity.floor = get_or<double>(p, "floor", c.propensity.floor);
      if (p.contains("covariates")) {
        c.propensity.covariates = {false, false, false};
        for (auto& s : p["covariates"]) {
          const auto v = s.get<std::string>();
          if (v == "x1") c.propensity.covariates.x1 = true;
          else if (v == "x2") c.propensity.covariates.x2 = true;
          else if (v == "y") c.propensity.covariates.y = true;
          else throw InvalidArgument("config: unknown covariate " + v);
        }
      }
    }
    if (j.contains("arms")) {
      c.arms.clear();
      for (auto& s : j["arms"]) c.arms.push_back(arm_from_string(s.get<std::string>()));
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      const auto arch = get_or<std::string>(m, "architecture", "mlp");
      if (arch == "mlp") c.model.architecture = Architecture::kMlp;
      else if (arch == "logistic") c.model.architecture = Architecture::kLogistic;
      else throw InvalidArgument("config: unknown architecture " + arch);
      c.model.mlp.hidden_layers = get_or<int>(m, "hidden_layers", c.model.mlp.hidden_layers);
      c.model.mlp.hidden_width = get_or<int>(m, "hidden_width", c.model.mlp.hidden_width);
      c.model.mlp.learning_rate = get_or<double>(m, "learning_rate", c.model.mlp.learning_rate);
      c.model.mlp.epochs = get_or<int>(m, "epochs", c.model.mlp.epochs);
      c.model.mlp.batch_size = get_or<int>(m, "batch_size", c.model.mlp.batch_size);
      c.model.calibrate = get_or<bool>(m, "calibrate", c.model.calibrate);
    }
    if (j.contains("pid")) {
      const json& p = j["pid"];
      c.pid.enabled = get_or<bool>(p, "enabled", c.pid.enabled);
      c.pid.bins = get_or<std::size_t>(p, "bins", c.pid.bins);
      c.pid.solver.learning_rate = get_or<double>(p, "learning_rate", c.pid.solver.learning_rate);
      c.pid.solver.max_steps = get_or<int>(p, "max_steps", c.pid.solver.max_steps);
      c.pid.solver.tolerance = get_or<double>(p, "tolerance", c.pid.solver.tolerance);
      c.pid.solver.window = get_or<int>(p, "window", c.pid.solver.window);
      c.pid.solver.unrolled_rounds = get_or<int>(p, "unrolled_rounds", c.pid.solver.unrolled_rounds);
      c.pid.solver.final_projection.atol = get_or<double>(p, "atol", c.pid.solver.final_projection.atol);
      c.pid.solver.final_projection.max_rounds = get_or<int>(p, "max_rounds", c.pid.solver.final_projection.max_rounds);
    }
    if (j.contains("evaluation")) c.batch_size = get_or<std::size_t>(j["evaluation"], "batch_size", c.batch_size);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.output = get_or<std::string>(j, "output", c.output);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output");
  return strprintf("%016llx", static_cast<unsigned long long>(hash_tag(j.dump())));
}

ExperimentConfig preset(std::string_view name) {
  ExperimentConfig c;
  c.name = std::string(name);
  c.output = "out/" + c.name;
  c.seeds = {0, 1, 2};
  if (name == "table1" || name == "table4" || name == "table5") {
    c.generator.type = "logic_gate";
    c.generator.n = 10000;
    c.propensity.source = "fitted";
    c.propensity.covariates = {true, false, false};
    if (name == "table1") c.mechanism = MechanismSpec::binary(MechanismKind::kMar, 0.8, 0.2);
    else if (name == "table4") c.mechanism = MechanismSpec::mcar(0.5);
    else c.mechanism = MechanismSpec::binary(MechanismKind::kMnar, 0.8, 0.2);
    return c;
  }
  if (name == "table2") {
    c.generator.type = "clustered_latent";
    c.generator.n = 10000;
    c.generator.mixing = {{0.0, 0.0}, {0.2, 0.0}, {0.0, 0.2}, {0.2, 0.2}, {0.4, 0.2}, {0.2, 0.4},
                          {0.4, 0.4}, {0.6, 0.2}, {0.2, 0.6}, {0.8, 0.0}, {0.0, 0.8}, {0.5, 0.5}};
    MechanismSpec m;
    m.kind = MechanismKind::kMar;
    m.target = MaskTarget::kX2AndY;
    const std::size_t d = c.generator.latent.latent_dim;
    // x1 = [zc, z1]: the mechanism loads on both halves of the observed modality
    m.coefficients.assign(2 * d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      m.coefficients[k] = -0.12;
      m.coefficients[d + k] = 0.12;
    }
    m.rate = 0.5;
    m.floor = 0.02;
    c.mechanism = m;
    c.propensity.source = "true";
    c.propensity.floor = 0.02;
    c.seeds = {0, 1, 2, 3, 4};
    c.arms = {ArmKind::kOracle, ArmKind::kObserved, ArmKind::kTrainOnly, ArmKind::kEvalOnly, ArmKind::kIcym2i};
    c.pid.enabled = false;
    return c;
  }
  throw InvalidArgument("unknown preset: " + std::string(name));
}

// ------------------------------------------------------------------ run

namespace {

constexpr std::array<InputSchema, 3> kModalities{InputSchema::kX1, InputSchema::kX2, InputSchema::kBoth};

enum class Regime { kFull, kComplete, kWeighted };

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::kFull: return "full";
    case Regime::kComplete: return "complete";
    case Regime::kWeighted: return "complete-ipw";
  }
  return "?";
}

Regime train_regime(ArmKind a) {
  switch (a) {
    case ArmKind::kOracle: return Regime::kFull;
    case ArmKind::kObserved:
    case ArmKind::kEvalOnly: return Regime::kComplete;
    case ArmKind::kIcym2i:
    case ArmKind::kTrainOnly: return Regime::kWeighted;
  }
  return Regime::kFull;
}

bool eval_corrected(ArmKind a) { return a == ArmKind::kIcym2i || a == ArmKind::kEvalOnly; }

struct TaskOutput {
  std::vector<MetricRow> metrics;
  std::vector<PidRow> pid;
  std::vector<std::string> notes;
  std::string error;
};

std::vector<double> gather(const std::vector<double>& v, const std::vector<std::size_t>& rows) {
  std::vector<double> out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) out[k] = v[rows[k]];
  return out;
}

struct TaskRunner {
  const ExperimentConfig& cfg;
  std::string setting;
  std::size_t setting_index;
  std::uint64_t seed;
  TaskOutput out;
  std::string stage = "init", arm = "-";

  Dataset full, masked;
  std::vector<double> ipw_row, stab_row;  // per dataset row
  std::map<Regime, std::array<Classifier, 3>> models;

  TaskRunner(const ExperimentConfig& c, std::string s, std::size_t si, std::uint64_t sd)
      : cfg(c), setting(std::move(s)), setting_index(si), seed(sd) {}

  void generate() {
    stage = "generate";
    const auto data_seed = derive_seed(seed, {"data", setting});
    if (cfg.generator.type == "logic_gate") {
      full = generate_logic_gate(cfg.generator.gates[setting_index], cfg.generator.n, data_seed);
    } else {
      ClusteredLatentSpec s = cfg.generator.latent;
      s.p1 = cfg.generator.mixing[setting_index].first;
      s.p2 = cfg.generator.mixing[setting_index].second;
      s.n = cfg.generator.n;
      s.seed = data_seed;
      full = generate_clustered_latent(s);
    }
  }

  bool needs_masked() const {
    for (ArmKind a : cfg.arms)
      if (a != ArmKind::kOracle) return true;
    return false;
  }

  bool needs_weights() const {
    for (ArmKind a : cfg.arms)
      if (a == ArmKind::kIcym2i || a == ArmKind::kTrainOnly || a == ArmKind::kEvalOnly) return true;
    return false;
  }

  void mask_and_weight() {
    if (!needs_masked()) return;
    stage = "mask";
    MaskedDataset md = apply_missingness(full, *cfg.mechanism, derive_seed(seed, {"mask", setting}));
    masked = std::move(md.data);
    if (!needs_weights()) return;
    stage = "propensity";
    const std::size_t n = masked.size();
    std::vector<double> obs(n);
    if (cfg.propensity.source == "true") {
      obs = md.observation_prob;
    } else {
      PropensityOptions po;
      po.floor = cfg.propensity.floor;
      auto train_rows = masked.rows(Split::train);
      PropensityModel pm = fit_propensity(masked, cfg.propensity.covariates, train_rows, po);
      if (pm.report.ridge_fallback) out.notes.push_back(strprintf("%s seed %llu: propensity fit fell back to ridge",
                                                                  setting.c_str(), static_cast<unsigned long long>(seed)));
      std::vector<double> c;
      for (std::size_t i = 0; i < n; ++i) {
        cfg.propensity.covariates.extract(masked, i, c);
        obs[i] = 1.0 - pm.missing_prob(c);
      }
    }
    double pm_rate = 0.0;
    for (double p : obs) pm_rate += 1.0 - p;
    pm_rate /= static_cast<double>(n);
    auto ipw = ipw_weights_from_probabilities(obs, cfg.propensity.floor, WeightNormalization::kNone);
    auto stab = stabilized_weights_from_probabilities(obs, 1.0 - pm_rate, cfg.propensity.floor);
    ipw_row = std::move(ipw.w);
    stab_row = std::move(stab.w);
    if (ipw.floor_hits)
      out.notes.push_back(strprintf("%s seed %llu: %zu rows hit the propensity floor", setting.c_str(),
                                    static_cast<unsigned long long>(seed), ipw.floor_hits));
  }

  const Dataset& data_for(Regime r) const { return r == Regime::kFull ? full : masked; }

  void train_models() {
    std::vector<Regime> need;
    for (ArmKind a : cfg.arms) {
      Regime r = train_regime(a);
      if (std::find(need.begin(), need.end(), r) == need.end()) need.push_back(r);
    }
    std::sort(need.begin(), need.end());
    for (Regime r : need) {
      stage = "train";
      arm = std::string(regime_name(r));
      const Dataset& ds = data_for(r);
      std::vector<std::size_t> tr, va;
      if (r == Regime::kFull) {
        tr = ds.rows(Split::train);
        va = ds.rows(Split::val);
      } else {
        tr = ds.complete_rows(Split::train);
        va = ds.complete_rows(Split::val);
      }
      std::vector<double> wt, wv;
      if (r == Regime::kWeighted) {
        wt = gather(ipw_row, tr);
        wv = gather(ipw_row, va);
      }
      std::array<Classifier, 3> trio;
      for (std::size_t k = 0; k < kModalities.size(); ++k) {
        MLPConfig mc = cfg.model.mlp;
        mc.seed = derive_seed(seed, {"model", setting, regime_name(r), to_string(kModalities[k])});
        Classifier c = train(ds, kModalities[k], cfg.model.architecture, tr, wt, mc, va, wv);
        if (cfg.model.calibrate) {
          stage = "calibrate";
          c = calibrate(c, ds, va, wv);
          if (c.diagnostics.calibration_degenerate)
            out.notes.push_back(strprintf("%s seed %llu %s/%s: single-class validation labels, identity calibration",
                                          setting.c_str(), static_cast<unsigned long long>(seed),
                                          std::string(regime_name(r)).c_str(),
                                          std::string(to_string(kModalities[k])).c_str()));
          stage = "train";
        }
        trio[k] = std::move(c);
      }
      models[r] = std::move(trio);
    }
  }

  void evaluate() {
    for (ArmKind a : cfg.arms) {
      stage = "evaluate";
      arm = std::string(to_string(a));
      const bool oracle = a == ArmKind::kOracle;
      const Dataset& ds = oracle ? full : masked;
      auto rows = oracle ? ds.rows(Split::test) : ds.complete_rows(Split::test);
      std::vector<std::uint8_t> y(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) y[k] = ds.y[rows[k]];
      std::vector<double> w;
      if (eval_corrected(a)) w = gather(ipw_row, rows);
      for (std::size_t m = 0; m < kModalities.size(); ++m) {
        const Classifier& clf = models.at(train_regime(a))[m];
        auto s = clf.predict_proba(ds, rows);
        MetricRow row;
        row.setting = setting;
        row.arm = arm;
        row.seed = seed;
        row.modality = std::string(to_string(kModalities[m]));
        row.auroc = weighted_auroc(s, y, w);
        row.brier = weighted_brier(s, y, w);
        row.n_effective = kish_effective_n(w, rows.size());
        std::size_t bs = cfg.batch_size;
        if (rows.size() / bs < 2) bs = std::max<std::size_t>(2, rows.size() / 4);
        auto metric = [&](std::span<const std::size_t> idx) {
          std::vector<double> ss(idx.size()), ww;
          std::vector<std::uint8_t> yy(idx.size());
          for (std::size_t k = 0; k < idx.size(); ++k) {
            ss[k] = s[idx[k]];
            yy[k] = y[idx[k]];
          }
          if (!w.empty()) {
            ww.resize(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) ww[k] = w[idx[k]];
          }
          return weighted_auroc(ss, yy, ww);
        };
        Dispersion d = batch_dispersion(metric, rows.size(), bs, derive_seed(seed, {"batches", setting, arm, row.modality}));
        row.batch_sd = d.sd;
        row.batch_size = bs;
        row.batches = d.batches;
        out.metrics.push_back(row);
      }
    }
  }

  void pid_arms() {
    if (!cfg.pid.enabled) return;
    const bool binary = cfg.generator.type == "logic_gate";
    std::optional<Binning> observed_bins;
    for (ArmKind a : cfg.arms) {
      if (a != ArmKind::kOracle && a != ArmKind::kObserved && a != ArmKind::kIcym2i) continue;
      arm = std::string(to_string(a));
      stage = "quantize";
      const bool oracle = a == ArmKind::kOracle;
      const Dataset& ds = oracle ? full : masked;
      auto rows = oracle ? ds.all_rows() : ds.complete_rows();
      Binning bins;
      if (binary) {
        bins = bin_dataset(ds, nullptr, nullptr);
      } else if (!oracle && observed_bins) {
        bins = *observed_bins;
      } else {
        const std::string group = oracle ? "oracle" : "observed";
        Quantizer q1 = fit_quantizer(schema_features(ds, InputSchema::kX1, rows), cfg.pid.bins,
                                     derive_seed(seed, {"quantizer", setting, group, "x1"}));
        Quantizer q2 = fit_quantizer(schema_features(ds, InputSchema::kX2, rows), cfg.pid.bins,
                                     derive_seed(seed, {"quantizer", setting, group, "x2"}));
        bins = bin_dataset(ds, &q1, &q2);
        if (!oracle) observed_bins = bins;
      }
      stage = "pid";
      PidInputs in;
      in.n1 = bins.n1;
      in.n2 = bins.n2;
      for (auto r : rows) {
        in.b1.push_back(bins.b1[r]);
        in.b2.push_back(bins.b2[r]);
      }
      const auto& trio = models.at(train_regime(a));
      in.p_x1 = trio[0].predict_proba(ds, rows);
      in.p_x2 = trio[1].predict_proba(ds, rows);
      in.p_x12 = trio[2].predict_proba(ds, rows);
      if (a == ArmKind::kIcym2i) {
        in.ipw = gather(ipw_row, rows);
        in.stabilized = gather(stab_row, rows);
        in.provenance = Provenance::kIpwCorrected;
      } else {
        in.provenance = oracle ? Provenance::kEmpiricalFull : Provenance::kEmpiricalObserved;
      }
      SolverOptions so = cfg.pid.solver;
      so.seed = derive_seed(seed, {"pid", setting, arm});
      PIDResult r = pid_icym2i(in, so);
      PidRow row;
      row.setting = setting;
      row.arm = arm;
      row.seed = seed;
      row.unique1 = r.unique1;
      row.unique2 = r.unique2;
      row.shared = r.shared;
      row.complementary = r.complementary;
      row.total_mi = r.total_mi;
      row.residual = r.residual;
      row.solver = r.solver;
      row.iterations = r.iterations;
      row.sk_rounds = r.sk_rounds;
      row.marginal_error = r.marginal_error;
      row.objective_value = r.objective_value;
      row.converged = r.converged;
      row.sk_converged = r.sk_converged;
      row.reconciled = r.reconciled;
      out.pid.push_back(row);
    }
  }

  TaskOutput run() {
    try {
      generate();
      mask_and_weight();
      train_models();
      evaluate();
      pid_arms();
    } catch (const std::exception& e) {
      out.error = strprintf("setting %s, seed %llu, arm %s, stage %s: %s", setting.c_str(),
                            static_cast<unsigned long long>(seed), arm.c_str(), stage.c_str(), e.what());
    }
    return std::move(out);
  }
};

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto settings = cfg.generator.settings();
  const std::size_t ntasks = cfg.seeds.size() * settings.size();
  std::vector<TaskOutput> results(ntasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= ntasks) return;
      const std::size_t si = t % settings.size();
      TaskRunner runner(cfg, settings[si], si, cfg.seeds[t / settings.size()]);
      results[t] = runner.run();
    }
  };
  const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(ntasks)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < jobs; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentReport rep;
  rep.name = cfg.name;
  rep.config_hash = cfg.hash();
  rep.version = ICYM2I_VERSION;
  for (auto& r : results) {
    rep.metrics.insert(rep.metrics.end(), r.metrics.begin(), r.metrics.end());
    rep.pid.insert(rep.pid.end(), r.pid.begin(), r.pid.end());
    rep.notes.insert(rep.notes.end(), r.notes.begin(), r.notes.end());
    if (!r.error.empty()) {
      rep.complete = false;
      rep.errors.push_back(r.error);
    }
  }
  rep.rmse = rmse_summary(rep.metrics);
  return rep;
}

std::vector<RmseRow> rmse_summary(const std::vector<MetricRow>& metrics) {
  std::map<std::tuple<std::string, std::uint64_t, std::string>, double> oracle;
  for (auto& m : metrics)
    if (m.arm == "oracle") oracle[{m.setting, m.seed, m.modality}] = m.auroc;
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_arm;
  for (auto& m : metrics) {
    if (m.arm == "oracle") continue;
    auto it = oracle.find({m.setting, m.seed, m.modality});
    if (it == oracle.end()) continue;
    if (!per_arm.count(m.arm)) order.push_back(m.arm);
    per_arm[m.arm].first.push_back(m.auroc);
    per_arm[m.arm].second.push_back(it->second);
  }
  std::vector<RmseRow> out;
  for (auto& a : order) {
    auto& [est, orc] = per_arm[a];
    out.push_back({a, rmse_vs_oracle(est, orc), est.size()});
  }
  return out;
}

}  // namespace icym2i
