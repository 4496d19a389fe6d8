#include "fedhet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedhet/error.hpp"
#include "fedhet/metrics.hpp"

namespace fedhet {

using nlohmann::json;

const char* const kRoundsCsvHeader =
    "experiment_id,repeat,round,hi,chisq_target,attack_scale,total_budget,timing,accuracy,asr,"
    "window,attack_active";

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string{}; }

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

// Axis value as it appears in labels and CSV cells.
std::string value_label(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string sanitize(std::string s) {
  for (auto& c : s)
    if (c == '/' || c == '\\' || c == ' ' || c == '"' || c == ':') c = '_';
  return s;
}

void write_summary_csv(std::ostream& out, const ExperimentConfig& cfg, const ExperimentOutcome& o) {
  out << "experiment_id,repeat,hi,chisq_target,measured_chisq,attack_scale,total_budget,timing,window,"
         "scaling_factor,summary_asr,summary_accuracy,rounds_averaged\n";
  for (const auto& s : o.summaries) {
    out << cfg.id << ',' << s.repeat << ',' << opt_real(s.heterogeneity_index) << ','
        << opt_real(s.chisq_target) << ',' << opt_real(s.measured_chisq) << ',' << cfg.attack.attack_scale << ','
        << cfg.attack.total_budget << ',' << cfg.attack.timing.name() << ',' << cfg.attack.window.name() << ','
        << format_real(cfg.attack.scaling_factor) << ',' << format_real(s.summary.asr) << ','
        << format_real(s.summary.accuracy) << ',' << s.summary.rounds_averaged << '\n';
  }
}

void write_selection_csv(std::ostream& out, std::size_t repeat, const FederationResult& r, bool header) {
  if (header) out << "repeat,round,selected,poisoned_samples,trained_samples\n";
  for (const auto& log : r.rounds) {
    out << repeat << ',' << log.round << ',';
    for (std::size_t i = 0; i < log.selected.size(); ++i) out << (i ? ";" : "") << log.selected[i];
    out << ',' << log.poisoned_samples << ',' << log.trained_samples << '\n';
  }
}

json manifest_for(const ExperimentConfig& cfg, const ExperimentOutcome& o, double elapsed_ms) {
  json m;
  m["config"] = config_to_json(cfg);
  m["master_seed"] = cfg.seed;
  std::vector<std::string> notes;
  notes.push_back("summary ASR = mean over the final " + std::to_string(cfg.evaluation.summary_rounds) +
                  (cfg.attack.enabled() ? " rounds inside the attack window" : " rounds"));
  json reps = json::array();
  for (std::size_t i = 0; i < o.results.size(); ++i) {
    const auto& r = o.results[i];
    json rep;
    rep["repeat"] = i;
    rep["seed"] = repeat_seed(cfg, i);
    rep["malicious_ids"] = r.malicious_ids;
    if (r.heterogeneity_index) rep["heterogeneity_index"] = *r.heterogeneity_index;
    if (r.class_cap) rep["class_cap"] = *r.class_cap;
    if (r.chisq_target) rep["chisq_target"] = *r.chisq_target;
    if (r.measured_chisq) rep["measured_chisq"] = *r.measured_chisq;
    if (r.fake_chisq) rep["fake_chisq"] = *r.fake_chisq;
    rep["asr_eval_size"] = r.asr_eval_size;
    rep["warnings"] = r.warnings;
    reps.push_back(rep);
    if (o.summaries[i].summary.short_run)
      notes.push_back("repeat " + std::to_string(i) + ": fewer than " +
                      std::to_string(cfg.evaluation.summary_rounds) + " rounds available; averaged " +
                      std::to_string(o.summaries[i].summary.rounds_averaged));
  }
  m["repeats"] = reps;
  m["notes"] = notes;
  m["elapsed_ms"] = elapsed_ms;
  return m;
}

}  // namespace

void write_rounds_csv(std::ostream& out, const ExperimentConfig& cfg, std::size_t repeat,
                      const FederationResult& r, bool header) {
  if (header) out << kRoundsCsvHeader << '\n';
  const std::string hi = opt_real(r.heterogeneity_index);
  const std::string chi = opt_real(r.chisq_target);
  for (const auto& log : r.rounds) {
    out << cfg.id << ',' << repeat << ',' << log.round << ',' << hi << ',' << chi << ','
        << cfg.attack.attack_scale << ',' << cfg.attack.total_budget << ',' << cfg.attack.timing.name() << ','
        << format_real(log.accuracy) << ',' << format_real(log.asr) << ',' << cfg.attack.window.name() << ','
        << (log.attack_active ? 1 : 0) << '\n';
  }
}

void write_cosine_csv(std::ostream& out, const ExperimentConfig& cfg, std::size_t repeat,
                      const FederationResult& r, bool header) {
  if (header) out << "experiment_id,repeat,round,client_id,malicious,cosine\n";
  for (const auto& log : r.rounds)
    for (const auto& c : log.cosines)
      out << cfg.id << ',' << repeat << ',' << log.round << ',' << c.client_id << ',' << (c.malicious ? 1 : 0)
          << ',' << format_real(c.cosine) << '\n';
}

double ExperimentOutcome::mean_asr() const {
  std::vector<double> v;
  for (const auto& s : summaries) v.push_back(s.summary.asr);
  return mean(v);
}
double ExperimentOutcome::median_asr() const {
  std::vector<double> v;
  for (const auto& s : summaries) v.push_back(s.summary.asr);
  return median(v);
}
double ExperimentOutcome::mean_accuracy() const {
  std::vector<double> v;
  for (const auto& s : summaries) v.push_back(s.summary.accuracy);
  return mean(v);
}
double ExperimentOutcome::median_accuracy() const {
  std::vector<double> v;
  for (const auto& s : summaries) v.push_back(s.summary.accuracy);
  return median(v);
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                 int workers) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentOutcome o;
  o.dir = out_dir;
  for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
    try {
      auto r = run_federation(cfg, rep, workers);
      const Summary s = summarize(r.rounds, cfg.evaluation.summary_rounds, cfg.attack.enabled());
      o.summaries.push_back({rep, s, r.heterogeneity_index, r.chisq_target, r.measured_chisq});
      o.results.push_back(std::move(r));
    } catch (const std::exception& e) {
      o.error = "repeat " + std::to_string(rep) + ": " + e.what();
      break;
    }
  }
  if (out_dir.empty()) return o;

  std::filesystem::create_directories(out_dir);
  {
    auto rounds = open_out(out_dir / "rounds.csv");
    auto cos = open_out(out_dir / "cosine.csv");
    auto sel = open_out(out_dir / "selection.csv");
    for (std::size_t i = 0; i < o.results.size(); ++i) {
      write_rounds_csv(rounds, cfg, i, o.results[i], i == 0);
      write_cosine_csv(cos, cfg, i, o.results[i], i == 0);
      write_selection_csv(sel, i, o.results[i], i == 0);
    }
    if (o.results.empty()) {
      rounds << kRoundsCsvHeader << '\n';
      cos << "experiment_id,repeat,round,client_id,malicious,cosine\n";
      sel << "repeat,round,selected,poisoned_samples,trained_samples\n";
    }
    auto summary = open_out(out_dir / "summary.csv");
    write_summary_csv(summary, cfg, o);
  }
  const double elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  open_out(out_dir / "manifest.json") << manifest_for(cfg, o, elapsed).dump(2) << '\n';
  if (o.error) {
    json err{{"error", *o.error}, {"completed_repeats", o.results.size()}};
    open_out(out_dir / "error.json") << err.dump(2) << '\n';
  }
  return o;
}

std::vector<json> parse_values(const std::string& list) {
  std::vector<json> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    json v = json::parse(item, nullptr, false);
    out.push_back(v.is_discarded() ? json(item) : v);
  }
  if (out.empty()) throw ConfigError("sweep: empty value list");
  return out;
}

void set_path(json& doc, const std::string& path, const json& value) {
  if (path.empty()) throw ConfigError("sweep: empty axis path");
  json* node = &doc;
  std::stringstream ss(path);
  std::string seg;
  std::vector<std::string> segs;
  while (std::getline(ss, seg, '.')) {
    if (seg.empty()) throw ConfigError("sweep: invalid axis path '" + path + "'");
    segs.push_back(seg);
  }
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    if (!node->is_object()) throw ConfigError("sweep: axis path '" + path + "' crosses a non-object");
    node = &(*node)[segs[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("sweep: axis path '" + path + "' crosses a non-object");
  (*node)[segs.back()] = value;
}

SweepOutcome sweep(const json& template_doc, const SweepAxis& axis, const std::optional<SweepAxis>& axis2,
                   const std::filesystem::path& out_dir, int workers) {
  struct Planned {
    std::vector<json> values;
    std::string label;
    ExperimentConfig cfg;
  };
  const std::string base_id = template_doc.value("id", std::string("sweep"));
  std::vector<Planned> plan;
  auto add = [&](std::vector<json> values) {
    json doc = template_doc;
    std::string label = axis.path + "=" + value_label(values[0]);
    set_path(doc, axis.path, values[0]);
    if (axis2) {
      label += ";" + axis2->path + "=" + value_label(values[1]);
      set_path(doc, axis2->path, values[1]);
    }
    doc["id"] = base_id + "/" + label;
    ExperimentConfig cfg;
    try {
      cfg = parse_config(doc, doc.dump(2));
    } catch (const ConfigError& e) {
      throw ConfigError("sweep point " + label + ": " + e.what());
    }
    plan.push_back({std::move(values), label, std::move(cfg)});
  };
  // Validate every point before running any of them.
  for (const auto& v1 : axis.values) {
    if (axis2)
      for (const auto& v2 : axis2->values) add({v1, v2});
    else
      add({v1});
  }

  SweepOutcome result;
  for (auto& p : plan) {
    const auto dir = out_dir.empty() ? std::filesystem::path{} : out_dir / sanitize(p.label);
    auto outcome = run_experiment(p.cfg, dir, workers);
    if (outcome.error) throw std::runtime_error("sweep point " + p.label + ": " + *outcome.error);
    result.points.push_back({p.values, p.label, std::move(outcome)});
  }
  if (out_dir.empty()) return result;

  std::filesystem::create_directories(out_dir);
  {
    auto combined = open_out(out_dir / "combined.csv");
    combined << kRoundsCsvHeader << '\n';
    for (std::size_t i = 0; i < result.points.size(); ++i) {
      const auto& o = result.points[i].outcome;
      for (std::size_t rep = 0; rep < o.results.size(); ++rep)
        write_rounds_csv(combined, plan[i].cfg, rep, o.results[rep], false);
    }
  }
  {
    auto s = open_out(out_dir / "sweep_summary.csv");
    s << "experiment_id,axis1,value1,axis2,value2,repeat,hi,chisq_target,measured_chisq,summary_asr,"
         "summary_accuracy\n";
    for (std::size_t i = 0; i < result.points.size(); ++i) {
      const auto& pt = result.points[i];
      for (const auto& rs : pt.outcome.summaries) {
        s << plan[i].cfg.id << ',' << axis.path << ',' << value_label(pt.values[0]) << ','
          << (axis2 ? axis2->path : "") << ',' << (axis2 ? value_label(pt.values[1]) : "") << ',' << rs.repeat
          << ',' << opt_real(rs.heterogeneity_index) << ',' << opt_real(rs.chisq_target) << ','
          << opt_real(rs.measured_chisq) << ',' << format_real(rs.summary.asr) << ','
          << format_real(rs.summary.accuracy) << '\n';
      }
    }
  }
  if (axis2) {
    auto h = open_out(out_dir / "heatmap.csv");
    h << "axis1,value1,axis2,value2,mean_asr,median_asr,mean_accuracy\n";
    for (const auto& pt : result.points)
      h << axis.path << ',' << value_label(pt.values[0]) << ',' << axis2->path << ','
        << value_label(pt.values[1]) << ',' << format_real(pt.outcome.mean_asr()) << ','
        << format_real(pt.outcome.median_asr()) << ',' << format_real(pt.outcome.mean_accuracy()) << '\n';
  } else {
    const bool numeric = std::all_of(axis.values.begin(), axis.values.end(),
                                     [](const json& v) { return v.is_number(); });
    if (numeric && axis.values.size() >= 2) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& pt : result.points) pts.emplace_back(pt.values[0].get<double>(), pt.outcome.mean_asr());
      try {
        const auto fit = linreg(pts);
        auto l = open_out(out_dir / "linreg.csv");
        l << "axis,n,slope,intercept,r\n"
          << axis.path << ',' << pts.size() << ',' << format_real(fit.slope) << ',' << format_real(fit.intercept)
          << ',' << format_real(fit.r) << '\n';
      } catch (const ArgumentError&) {
        // Constant axis values: no regression to report.
      }
    }
  }
  return result;
}

}  // namespace fedhet
