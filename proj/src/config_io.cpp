#include <fstream>
#include <set>
#include <sstream>

#include "fedhet/error.hpp"
#include "fedhet/harness.hpp"

namespace fedhet {

using nlohmann::json;

namespace {

// 1-based line of the deepest key of a dotted path found in the source.
std::size_t locate(const std::string& text, const std::string& path) {
  if (text.empty()) return 0;
  std::size_t pos = 0, found = std::string::npos;
  std::stringstream ss(path);
  std::string seg;
  while (std::getline(ss, seg, '.')) {
    if (seg.empty() || seg.front() == '[') continue;
    const auto p = text.find('"' + seg + '"', pos);
    if (p == std::string::npos) break;
    found = pos = p;
  }
  if (found == std::string::npos) return 1;
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(found), '\n'));
}

[[noreturn]] void fail(const std::string& text, const std::string& path, const std::string& msg) {
  const std::size_t line = locate(text, path);
  std::string out = line ? "line " + std::to_string(line) + ": " : "";
  throw ConfigError(out + (path.empty() ? "<root>" : path) + ": " + msg);
}

class Reader {
 public:
  Reader(const json& obj, std::string path, const std::string& text)
      : obj_(obj), path_(std::move(path)), text_(text) {
    if (!obj_.is_object()) fail(text_, path_, "expected an object");
  }

  bool has(const std::string& key) {
    if (!obj_.contains(key)) return false;
    used_.insert(key);
    return true;
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& raw(const std::string& key) {
    if (!has(key)) fail(text_, key_path(key), "missing required field '" + key + "'");
    return obj_.at(key);
  }

  Reader child(const std::string& key) { return Reader(raw(key), key_path(key), text_); }

  double real(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) fail(text_, key_path(key), "expected a number");
    return v.get<double>();
  }
  double real(const std::string& key, double dflt) { return has(key) ? real(key) : dflt; }

  std::size_t count(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
      fail(text_, key_path(key), "expected a non-negative integer");
    return v.get<std::size_t>();
  }
  std::size_t count(const std::string& key, std::size_t dflt) { return has(key) ? count(key) : dflt; }

  std::uint64_t u64(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_unsigned()) fail(text_, key_path(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool dflt) {
    if (!has(key)) return dflt;
    const json& v = obj_.at(key);
    if (!v.is_boolean()) fail(text_, key_path(key), "expected true or false");
    return v.get<bool>();
  }

  std::string str(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) fail(text_, key_path(key), "expected a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& key, const std::string& dflt) { return has(key) ? str(key) : dflt; }

  std::vector<double> reals(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) fail(text_, key_path(key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) fail(text_, key_path(key), "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) fail(text_, key_path(key), "expected an array of non-negative integers");
    std::vector<std::size_t> out;
    for (const auto& x : v) {
      if (!x.is_number_integer() || x.get<long long>() < 0)
        fail(text_, key_path(key), "expected an array of non-negative integers");
      out.push_back(x.get<std::size_t>());
    }
    return out;
  }

  [[noreturn]] void error(const std::string& key, const std::string& msg) const { fail(text_, key_path(key), msg); }

  // Rejects keys that were never read.
  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!used_.count(k)) fail(text_, key_path(k), "unknown key '" + k + "'");
  }

 private:
  const json& obj_;
  std::string path_;
  const std::string& text_;
  std::set<std::string> used_;
};

void read_dataset(Reader r, DatasetSpec& d) {
  const std::string kind = r.str("kind", "synthetic");
  if (kind == "synthetic") {
    d.kind = DatasetSpec::Kind::kSynthetic;
    d.num_classes = r.count("num_classes", d.num_classes);
    d.num_features = r.count("num_features", d.num_features);
    d.samples_per_class = r.count("samples_per_class", d.samples_per_class);
    d.sigma = r.real("sigma", d.sigma);
  } else if (kind == "idx") {
    d.kind = DatasetSpec::Kind::kIdx;
    d.images_path = r.str("images");
    d.labels_path = r.str("labels");
  } else {
    r.error("kind", "expected \"synthetic\" or \"idx\"");
  }
  d.test_fraction = r.real("test_fraction", d.test_fraction);
  r.finish();
}

void read_partition(Reader r, PartitionSpec& p) {
  const std::string method = r.str("method");
  if (method == "class_cap") {
    p.method = PartitionSpec::Method::kClassCap;
    if (r.has("hi")) p.hi = r.real("hi");
    if (r.has("max_classes")) p.max_classes = r.count("max_classes");
  } else if (method == "gaussian") {
    p.method = PartitionSpec::Method::kGaussian;
    p.variance = r.real("variance");
  } else if (method == "dirichlet") {
    p.method = PartitionSpec::Method::kDirichlet;
    p.alpha = r.real("alpha");
  } else {
    r.error("method", "expected \"class_cap\", \"gaussian\" or \"dirichlet\"");
  }
  r.finish();
}

void read_federation(Reader r, FederationConfig& f) {
  f.total_clients = r.count("total_clients");
  f.clients_per_round = r.count("clients_per_round");
  f.total_rounds = r.count("rounds");
  f.training.learning_rate = r.real("learning_rate", f.training.learning_rate);
  f.training.batch_size = r.count("batch_size", f.training.batch_size);
  f.training.local_epochs = r.count("local_epochs", f.training.local_epochs);
  r.finish();
}

TriggerPattern read_trigger(Reader r) {
  TriggerPattern t;
  const auto features = r.counts("features");
  std::vector<double> values;
  if (r.has("values")) {
    values = r.reals("values");
    if (values.size() != features.size()) r.error("values", "must have one value per feature");
  } else {
    values.assign(features.size(), r.real("value"));
  }
  for (std::size_t i = 0; i < features.size(); ++i) t.entries.emplace_back(features[i], values[i]);
  t.target_class = r.count("target_class");
  r.finish();
  return t;
}

void read_attack(Reader r, ExperimentConfig& cfg) {
  auto& a = cfg.attack;
  a.attack_scale = r.count("attack_scale", 0);
  a.total_budget = r.count("total_budget", 0);
  if (r.has("timing")) {
    try {
      a.timing = Timing::parse(r.str("timing"));
    } catch (const ArgumentError& e) {
      r.error("timing", e.what());
    }
  }
  if (r.has("window")) {
    const json& w = r.raw("window");
    if (w.is_string()) {
      try {
        a.window = AttackWindow::parse(w.get<std::string>());
      } catch (const ArgumentError& e) {
        r.error("window", e.what());
      }
    } else {
      const auto b = r.counts("window");
      if (b.size() != 2) r.error("window", "expected a name or [begin, end]");
      a.window = AttackWindow::interval(b[0], b[1]);
    }
  }
  if (r.has("trigger")) a.trigger = read_trigger(r.child("trigger"));
  a.distributed_trigger = r.boolean("distributed_trigger", a.distributed_trigger);
  if (r.has("malicious_histogram")) {
    try {
      a.malicious_histogram = Histogram::from_counts(r.reals("malicious_histogram"));
    } catch (const ArgumentError& e) {
      r.error("malicious_histogram", e.what());
    }
  }
  if (r.has("chisq_target")) a.chisq_target = r.real("chisq_target");
  if (r.has("chisq_target_range")) {
    const auto v = r.reals("chisq_target_range");
    if (v.size() != 2) r.error("chisq_target_range", "expected [lo, hi]");
    cfg.chisq_target_range = std::make_pair(v[0], v[1]);
  }
  a.chisq_tol = r.real("chisq_tol", a.chisq_tol);
  if (r.has("local_data_size")) a.local_data_size = r.count("local_data_size");
  a.scaling_factor = r.real("scaling_factor", a.scaling_factor);
  r.finish();
}

void read_defense(Reader r, DefenseConfig& d) {
  d.cosine_monitor = r.boolean("cosine_monitor", false);
  if (r.has("active_defense")) {
    Reader ad = r.child("active_defense");
    ActiveDefenseConfig a;
    a.iid_fraction = ad.real("iid_fraction", a.iid_fraction);
    a.retrain_epochs = ad.count("retrain_epochs", a.retrain_epochs);
    if (ad.has("learning_rate")) a.learning_rate = ad.real("learning_rate");
    ad.finish();
    d.active_defense = a;
  }
  if (r.has("separation_factor")) d.separation_factor = r.count("separation_factor");
  if (r.has("fake_distribution")) {
    Reader fd = r.child("fake_distribution");
    FakeDistributionConfig f;
    f.chisq_offset = fd.real("chisq_offset");
    f.tol = fd.real("tol", f.tol);
    fd.finish();
    d.fake_distribution = f;
  }
  r.finish();
}

// Maps a validation failure back to the config key it concerns.
std::string path_of_validation_error(const std::string& msg) {
  const auto end = msg.find_first_of(" :");
  return end == std::string::npos ? std::string{} : msg.substr(0, end);
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::string& text) {
  ExperimentConfig cfg;
  Reader root(j, "", text);
  cfg.id = root.str("id");
  cfg.seed = root.u64("seed");
  cfg.repeats = root.count("repeats", cfg.repeats);
  cfg.output_dir = root.str("output_dir", cfg.output_dir);
  read_dataset(root.child("dataset"), cfg.dataset);
  read_partition(root.child("partition"), cfg.partition);
  if (root.has("model")) {
    Reader m = root.child("model");
    if (m.has("hidden")) cfg.hidden = m.counts("hidden");
    m.finish();
  }
  read_federation(root.child("federation"), cfg.federation);
  if (root.has("attack")) read_attack(root.child("attack"), cfg);
  if (root.has("defense")) read_defense(root.child("defense"), cfg.defense);
  if (root.has("evaluation")) {
    Reader e = root.child("evaluation");
    cfg.evaluation.eval_fraction = e.real("eval_fraction", cfg.evaluation.eval_fraction);
    cfg.evaluation.summary_rounds = e.count("summary_rounds", cfg.evaluation.summary_rounds);
    e.finish();
  }
  root.finish();
  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    fail(text, path_of_validation_error(e.what()), e.what());
  }
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("line " + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  return parse_config(j, text);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config_text(read_text_file(path));
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["id"] = cfg.id;
  j["seed"] = cfg.seed;
  j["repeats"] = cfg.repeats;
  j["output_dir"] = cfg.output_dir;
  auto& d = j["dataset"];
  if (cfg.dataset.kind == DatasetSpec::Kind::kSynthetic) {
    d["kind"] = "synthetic";
    d["num_classes"] = cfg.dataset.num_classes;
    d["num_features"] = cfg.dataset.num_features;
    d["samples_per_class"] = cfg.dataset.samples_per_class;
    d["sigma"] = cfg.dataset.sigma;
  } else {
    d["kind"] = "idx";
    d["images"] = cfg.dataset.images_path;
    d["labels"] = cfg.dataset.labels_path;
  }
  d["test_fraction"] = cfg.dataset.test_fraction;
  auto& p = j["partition"];
  switch (cfg.partition.method) {
    case PartitionSpec::Method::kClassCap:
      p["method"] = "class_cap";
      if (cfg.partition.hi) p["hi"] = *cfg.partition.hi;
      if (cfg.partition.max_classes) p["max_classes"] = *cfg.partition.max_classes;
      break;
    case PartitionSpec::Method::kGaussian:
      p["method"] = "gaussian";
      p["variance"] = cfg.partition.variance;
      break;
    case PartitionSpec::Method::kDirichlet:
      p["method"] = "dirichlet";
      p["alpha"] = cfg.partition.alpha;
      break;
  }
  j["model"]["hidden"] = cfg.hidden;
  auto& f = j["federation"];
  f["total_clients"] = cfg.federation.total_clients;
  f["clients_per_round"] = cfg.federation.clients_per_round;
  f["rounds"] = cfg.federation.total_rounds;
  f["learning_rate"] = cfg.federation.training.learning_rate;
  f["batch_size"] = cfg.federation.training.batch_size;
  f["local_epochs"] = cfg.federation.training.local_epochs;
  const auto& a = cfg.attack;
  auto& ja = j["attack"];
  ja["attack_scale"] = a.attack_scale;
  ja["total_budget"] = a.total_budget;
  ja["timing"] = a.timing.name();
  if (a.window.kind == AttackWindow::Kind::kExplicit)
    ja["window"] = {a.window.begin, a.window.end};
  else
    ja["window"] = a.window.name();
  if (!a.trigger.entries.empty()) {
    std::vector<std::size_t> feats;
    std::vector<double> vals;
    for (const auto& [i, v] : a.trigger.entries) {
      feats.push_back(i);
      vals.push_back(v);
    }
    ja["trigger"] = {{"features", feats}, {"values", vals}, {"target_class", a.trigger.target_class}};
  }
  ja["distributed_trigger"] = a.distributed_trigger;
  if (a.malicious_histogram)
    ja["malicious_histogram"] = std::vector<double>(a.malicious_histogram->freqs().begin(),
                                                    a.malicious_histogram->freqs().end());
  if (a.chisq_target) ja["chisq_target"] = *a.chisq_target;
  if (cfg.chisq_target_range)
    ja["chisq_target_range"] = {cfg.chisq_target_range->first, cfg.chisq_target_range->second};
  ja["chisq_tol"] = a.chisq_tol;
  if (a.local_data_size) ja["local_data_size"] = *a.local_data_size;
  ja["scaling_factor"] = a.scaling_factor;
  auto& jd = j["defense"];
  jd["cosine_monitor"] = cfg.defense.cosine_monitor;
  if (cfg.defense.active_defense) {
    const auto& ad = *cfg.defense.active_defense;
    jd["active_defense"] = {{"iid_fraction", ad.iid_fraction}, {"retrain_epochs", ad.retrain_epochs}};
    if (ad.learning_rate) jd["active_defense"]["learning_rate"] = *ad.learning_rate;
  }
  if (cfg.defense.separation_factor) jd["separation_factor"] = *cfg.defense.separation_factor;
  if (cfg.defense.fake_distribution)
    jd["fake_distribution"] = {{"chisq_offset", cfg.defense.fake_distribution->chisq_offset},
                               {"tol", cfg.defense.fake_distribution->tol}};
  j["evaluation"] = {{"eval_fraction", cfg.evaluation.eval_fraction},
                     {"summary_rounds", cfg.evaluation.summary_rounds}};
  return j;
}

}  // namespace fedhet
