#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "icym2i/experiment.hpp"

namespace icym2i {

using nlohmann::json;

namespace {

json metric_to_json(const MetricRow& m) {
  return {{"setting", m.setting},       {"arm", m.arm},       {"seed", m.seed},
          {"modality", m.modality},     {"auroc", m.auroc},   {"brier", m.brier},
          {"n_effective", m.n_effective}, {"batch_sd", m.batch_sd}, {"batch_size", m.batch_size},
          {"batches", m.batches}};
}

MetricRow metric_from_json(const json& j) {
  MetricRow m;
  m.setting = j.at("setting").get<std::string>();
  m.arm = j.at("arm").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.modality = j.at("modality").get<std::string>();
  m.auroc = j.at("auroc").get<double>();
  m.brier = j.at("brier").get<double>();
  m.n_effective = j.at("n_effective").get<double>();
  m.batch_sd = j.at("batch_sd").get<double>();
  m.batch_size = j.at("batch_size").get<std::size_t>();
  m.batches = j.at("batches").get<std::size_t>();
  return m;
}

json pid_to_json(const PidRow& p) {
  return {{"setting", p.setting},
          {"arm", p.arm},
          {"seed", p.seed},
          {"unique1", p.unique1},
          {"unique2", p.unique2},
          {"shared", p.shared},
          {"complementary", p.complementary},
          {"total_mi", p.total_mi},
          {"residual", p.residual},
          {"solver", p.solver},
          {"iterations", p.iterations},
          {"sk_rounds", p.sk_rounds},
          {"marginal_error", p.marginal_error},
          {"objective_value", p.objective_value},
          {"converged", p.converged},
          {"sk_converged", p.sk_converged},
          {"reconciled", p.reconciled}};
}

PidRow pid_from_json(const json& j) {
  PidRow p;
  p.setting = j.at("setting").get<std::string>();
  p.arm = j.at("arm").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.unique1 = j.at("unique1").get<double>();
  p.unique2 = j.at("unique2").get<double>();
  p.shared = j.at("shared").get<double>();
  p.complementary = j.at("complementary").get<double>();
  p.total_mi = j.at("total_mi").get<double>();
  p.residual = j.at("residual").get<double>();
  p.solver = j.at("solver").get<std::string>();
  p.iterations = j.at("iterations").get<int>();
  p.sk_rounds = j.at("sk_rounds").get<int>();
  p.marginal_error = j.at("marginal_error").get<double>();
  p.objective_value = j.at("objective_value").get<double>();
  p.converged = j.at("converged").get<bool>();
  p.sk_converged = j.at("sk_converged").get<bool>();
  p.reconciled = j.at("reconciled").get<bool>();
  return p;
}

std::string modality_for(const std::string& column) {
  if (column == "X1") return "x1";
  if (column == "X2") return "x2";
  if (column == "X1+X2") return "x1+x2";
  return {};
}

double pid_field(const PidRow& p, const std::string& column) {
  if (column == "Unique 1") return p.unique1;
  if (column == "Unique 2") return p.unique2;
  if (column == "Shared") return p.shared;
  if (column == "Complementary") return p.complementary;
  throw InvalidArgument("unknown table column: " + column);
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

json ExperimentReport::to_json() const {
  json j;
  j["name"] = name;
  j["config_hash"] = config_hash;
  j["version"] = version;
  j["complete"] = complete;
  j["errors"] = errors;
  j["notes"] = notes;
  j["metrics"] = json::array();
  for (auto& m : metrics) j["metrics"].push_back(metric_to_json(m));
  j["pid"] = json::array();
  for (auto& p : pid) j["pid"].push_back(pid_to_json(p));
  j["rmse"] = json::array();
  for (auto& r : rmse) j["rmse"].push_back({{"arm", r.arm}, {"rmse", r.rmse}, {"cells", r.cells}});
  return j;
}

ExperimentReport ExperimentReport::from_json(const json& j) {
  ExperimentReport r;
  try {
    r.name = j.at("name").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.version = j.at("version").get<std::string>();
    r.complete = j.at("complete").get<bool>();
    r.errors = j.at("errors").get<std::vector<std::string>>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    for (auto& m : j.at("metrics")) r.metrics.push_back(metric_from_json(m));
    for (auto& p : j.at("pid")) r.pid.push_back(pid_from_json(p));
    for (auto& x : j.at("rmse"))
      r.rmse.push_back({x.at("arm").get<std::string>(), x.at("rmse").get<double>(), x.at("cells").get<std::size_t>()});
  } catch (const json::exception& e) {
    throw SchemaError(std::string("report: ") + e.what());
  }
  return r;
}

std::optional<double> report_cell(const ExperimentReport& r, const std::string& setting, const std::string& arm,
                                  const std::string& column) {
  double sum = 0.0;
  std::size_t n = 0;
  const std::string mod = modality_for(column);
  if (!mod.empty()) {
    for (auto& m : r.metrics)
      if (m.setting == setting && m.arm == arm && m.modality == mod) {
        sum += m.auroc;
        ++n;
      }
  } else {
    for (auto& p : r.pid)
      if (p.setting == setting && p.arm == arm) {
        sum += pid_field(p, column);
        ++n;
      }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string format_table(const ExperimentReport& r) {
  std::ostringstream os;
  os << r.name << "  (config " << r.config_hash << ", version " << r.version << ")\n";
  if (!r.complete) os << "INCOMPLETE: " << r.errors.size() << " task(s) failed\n";

  // stable first-seen order
  std::vector<std::string> settings, arms;
  auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (auto& m : r.metrics) {
    remember(settings, m.setting);
    remember(arms, m.arm);
  }
  for (auto& p : r.pid) {
    remember(settings, p.setting);
    remember(arms, p.arm);
  }

  const bool has_pid = !r.pid.empty();
  std::size_t sw = 8;
  for (auto& s : settings) sw = std::max(sw, s.size() + 2);
  os << "\n" << pad("Setting", sw) << pad("Arm", 22);
  for (const char* c : {"X1", "X2", "X1+X2"}) os << pad(c, 18);
  if (has_pid)
    for (const char* c : {"Unique 1", "Unique 2", "Shared", "Complementary"}) os << pad(c, 15);
  os << "\n";

  for (auto& s : settings)
    for (auto& a : arms) {
      bool any = false;
      std::ostringstream line;
      line << pad(s, sw) << pad(a, 22);
      for (const char* c : {"X1", "X2", "X1+X2"}) {
        double sd = 0.0;
        std::size_t n = 0;
        for (auto& m : r.metrics)
          if (m.setting == s && m.arm == a && m.modality == modality_for(c)) {
            sd += m.batch_sd;
            ++n;
          }
        auto v = report_cell(r, s, a, c);
        if (v) {
          any = true;
          line << pad(strprintf("%.3f (%.3f)", *v, sd / static_cast<double>(n)), 18);
        } else {
          line << pad("-", 18);
        }
      }
      if (has_pid)
        for (const char* c : {"Unique 1", "Unique 2", "Shared", "Complementary"}) {
          auto v = report_cell(r, s, a, c);
          any = any || v.has_value();
          line << pad(v ? strprintf("%.3f", *v) : std::string("-"), 15);
        }
      if (any) os << line.str() << "\n";
    }

  if (!r.rmse.empty()) {
    os << "\nAUROC RMSE against oracle\n";
    for (auto& x : r.rmse) os << "  " << pad(x.arm, 22) << strprintf("%.4f  (%zu cells)", x.rmse, x.cells) << "\n";
  }
  if (has_pid) {
    std::size_t unconverged = 0, reconciled = 0;
    for (auto& p : r.pid) {
      unconverged += p.converged && p.sk_converged ? 0 : 1;
      reconciled += p.reconciled ? 1 : 0;
    }
    os << strprintf("\nPID solves: %zu, unconverged: %zu, reconciled targets: %zu\n", r.pid.size(), unconverged,
                    reconciled);
  }
  if (!r.notes.empty()) {
    os << "\nNotes\n";
    for (auto& n : r.notes) os << "  " << n << "\n";
  }
  if (!r.errors.empty()) {
    os << "\nErrors\n";
    for (auto& e : r.errors) os << "  " << e << "\n";
  }
  return os.str();
}

void emit_report(const ExperimentReport& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir);
  {
    std::ofstream f(base / "report.json", std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + (base / "report.json").string());
    f << r.to_json().dump(2) << "\n";
  }
  {
    std::ofstream f(base / "report.txt", std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + (base / "report.txt").string());
    f << format_table(r);
  }
}

CompareResult compare_to_reference(const ExperimentReport& r, std::istream& in, double tolerance) {
  CompareResult out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (lineno == 1 && !f.empty() && f[0] == "setting") continue;
    if (f.size() != 4 && f.size() != 5) throw SchemaError(strprintf("reference line %zu: expected 4 or 5 fields", lineno));
    CompareCell c;
    c.setting = f[0];
    c.arm = f[1];
    c.column = f[2];
    try {
      c.reference = std::stod(f[3]);
      c.tolerance = f.size() == 5 ? std::stod(f[4]) : tolerance;
    } catch (const std::exception&) {
      throw SchemaError(strprintf("reference line %zu: bad number", lineno));
    }
    auto v = report_cell(r, c.setting, c.arm, c.column);
    c.present = v.has_value();
    if (c.present) {
      c.estimate = *v;
      c.pass = std::abs(c.estimate - c.reference) <= c.tolerance;
    }
    if (!c.pass) ++out.failures;
    out.cells.push_back(c);
  }
  return out;
}

std::string format_comparison(const CompareResult& c) {
  std::ostringstream os;
  for (auto& x : c.cells) {
    os << (x.pass ? "ok   " : "FAIL ") << pad(x.setting, 8) << pad(x.arm, 22) << pad(x.column, 15);
    if (x.present) os << strprintf("ref %.3f  got %.3f  |diff| %.3f  tol %.3f", x.reference, x.estimate,
                                   std::abs(x.estimate - x.reference), x.tolerance);
    else os << strprintf("ref %.3f  missing from report", x.reference);
    os << "\n";
  }
  os << strprintf("%zu/%zu cells within tolerance\n", c.cells.size() - c.failures, c.cells.size());
  return os.str();
}

}  // namespace icym2i
