#include "approxabft/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace approxabft {
namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& node, std::string name) : node_(node), name_(std::move(name)) {
    if (!node_.is_object()) throw ConfigError("'" + name_ + "' must be an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& [key, value] : node_.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
        throw ConfigError("unknown key '" + path(key) + "'");
    }
  }

  bool has(const char* key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  const json& at(const char* key) const {
    if (!has(key)) throw ConfigError("missing required key '" + path(key) + "'");
    return node_.at(key);
  }

  std::uint64_t u64(const char* key) const { return to_u64(at(key), path(key)); }
  std::uint64_t u64(const char* key, std::uint64_t fallback) const { return has(key) ? u64(key) : fallback; }

  double number(const char* key) const {
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError("'" + path(key) + "' must be a number");
    return v.get<double>();
  }
  double number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::string text(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError("'" + path(key) + "' must be a string");
    return v.get<std::string>();
  }
  std::string text(const char* key, const std::string& fallback) const { return has(key) ? text(key) : fallback; }

  Section child(const char* key) const { return Section(at(key), path(key)); }

  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  static std::uint64_t to_u64(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError("'" + where + "' must be a non-negative integer");
  }

 private:
  const json& node_;
  std::string name_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  if (path.empty() || path.is_absolute() || base.empty()) return path;
  return base / path;
}

ModelConfig parse_model(const Section& s) {
  s.allow({"num_layers", "embed_dim", "num_heads", "seq_len", "ff_multiplier", "num_classes", "weight_seed"});
  ModelConfig m;
  m.num_layers = s.u64("num_layers", m.num_layers);
  m.embed_dim = s.u64("embed_dim", m.embed_dim);
  m.num_heads = s.u64("num_heads", m.num_heads);
  m.seq_len = s.u64("seq_len", m.seq_len);
  m.ff_multiplier = s.u64("ff_multiplier", m.ff_multiplier);
  m.num_classes = s.u64("num_classes", m.num_classes);
  m.weight_seed = s.u64("weight_seed");
  return m;
}

void parse_faults(const Section& s, CampaignConfig& cfg) {
  s.allow({"bers", "trials", "base_seed", "scope", "forced"});
  const json& bers = s.at("bers");
  if (!bers.is_array()) throw ConfigError("'faults.bers' must be a list");
  for (const json& b : bers) {
    if (!b.is_number()) throw ConfigError("'faults.bers' entries must be numbers");
    cfg.bers.push_back(b.get<double>());
  }
  cfg.trials = s.u64("trials");
  cfg.base_seed = s.u64("base_seed");
  if (s.has("scope")) {
    const json& scope = s.at("scope");
    if (!scope.is_array()) throw ConfigError("'faults.scope' must be a list");
    for (const json& id : scope) {
      if (!id.is_string()) throw ConfigError("'faults.scope' entries must be strings");
      cfg.scope.insert(id.get<std::string>());
    }
  }
  if (s.has("forced")) {
    const json& forced = s.at("forced");
    if (!forced.is_array()) throw ConfigError("'faults.forced' must be a list");
    for (const json& f : forced) {
      const Section e(f, "faults.forced[]");
      e.allow({"gemm_id", "row", "col", "delta"});
      cfg.forced.push_back(
          {e.text("gemm_id"), e.u64("row"), e.u64("col"), static_cast<float>(e.number("delta"))});
    }
  }
}

void parse_abft(const Section& s, const std::filesystem::path& base, CampaignConfig& cfg) {
  s.allow({"strategies", "profiles", "alphas"});
  const json& names = s.at("strategies");
  if (!names.is_array()) throw ConfigError("'abft.strategies' must be a list");
  for (const json& n : names) {
    if (!n.is_string()) throw ConfigError("'abft.strategies' entries must be strings");
    cfg.strategies.push_back(n.get<std::string>());
  }
  if (s.has("profiles")) cfg.profiles_path = resolve(base, s.text("profiles"));
  if (s.has("alphas")) cfg.alphas_path = resolve(base, s.text("alphas"));
}

SearchSettings parse_search(const Section& s) {
  s.allow({"mode", "ber", "budget", "trials_per_eval", "resolution", "order", "strategy", "seed", "profile_trials",
           "profile_seed"});
  SearchSettings out;
  const std::string mode = s.text("mode", "gemmwise");
  if (mode == "global")
    out.mode = SearchMode::global;
  else if (mode == "gemmwise")
    out.mode = SearchMode::gemmwise;
  else
    throw ConfigError("'search.mode' must be global or gemmwise");
  out.ber = s.number("ber", out.ber);
  out.budget = s.number("budget", out.budget);
  out.trials_per_eval = s.u64("trials_per_eval", out.trials_per_eval);
  out.resolution = s.number("resolution", out.resolution);
  try {
    out.order = parse_search_order(s.text("order", "ascending"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("search.order: ") + e.what());
  }
  out.strategy = s.text("strategy", out.strategy);
  out.seed = s.u64("seed");
  out.profile_trials = s.u64("profile_trials", out.profile_trials);
  out.profile_seed = s.u64("profile_seed");
  return out;
}

OutputPaths parse_output(const Section& s, const std::filesystem::path& base) {
  s.allow({"csv", "json", "profiles", "alphas", "stats"});
  OutputPaths out;
  out.csv = resolve(base, s.text("csv", ""));
  out.json = resolve(base, s.text("json", ""));
  out.profiles = resolve(base, s.text("profiles", ""));
  out.alphas = resolve(base, s.text("alphas", ""));
  out.stats = resolve(base, s.text("stats", ""));
  return out;
}

bool strategy_needs_calibration(const std::string& name) {
  const auto s = parse_strategy(name);
  return s && (s->detection == Detection::AED || s->localization == LocalizationMode::AEL);
}

}  // namespace

const char* to_string(SearchMode mode) { return mode == SearchMode::global ? "global" : "gemmwise"; }

void CampaignConfig::validate() const {
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  if (dataset.n_samples == 0) throw ConfigError("dataset.n_samples must be at least 1");
  if (bers.empty()) throw ConfigError("faults.bers must not be empty");
  for (double b : bers)
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("faults.bers entries must lie in [0, 1]");
  if (trials == 0) throw ConfigError("faults.trials must be at least 1");
  if (strategies.empty()) throw ConfigError("abft.strategies must not be empty");
  for (const std::string& s : strategies)
    if (!is_known_strategy_name(s)) throw ConfigError("unknown strategy '" + s + "'");
  if (!is_known_strategy_name(search.strategy) || !parse_strategy(search.strategy))
    throw ConfigError("search.strategy must name a protected strategy");
  if (!(search.budget >= 0.0 && search.budget <= 1.0)) throw ConfigError("search.budget must lie in [0, 1]");
  if (!(search.resolution > 0.0 && search.resolution <= 1.0)) throw ConfigError("search.resolution must lie in (0, 1]");
  if (!(search.ber >= 0.0 && search.ber <= 1.0)) throw ConfigError("search.ber must lie in [0, 1]");
  if (search.trials_per_eval == 0) throw ConfigError("search.trials_per_eval must be at least 1");
  if (search.profile_trials == 0) throw ConfigError("search.profile_trials must be at least 1");
}

bool CampaignConfig::needs_calibration() const {
  return std::any_of(strategies.begin(), strategies.end(), strategy_needs_calibration);
}

CampaignConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const Section top(root, "");
  top.allow({"model", "dataset", "faults", "abft", "search", "output", "threads"});

  CampaignConfig cfg;
  try {
    cfg.model = parse_model(top.child("model"));
    const Section ds = top.child("dataset");
    ds.allow({"n_samples", "data_seed"});
    cfg.dataset.n_samples = ds.u64("n_samples", cfg.dataset.n_samples);
    cfg.dataset.data_seed = ds.u64("data_seed");
    parse_faults(top.child("faults"), cfg);
    parse_abft(top.child("abft"), base_dir, cfg);
    if (top.has("search")) {
      cfg.search = parse_search(top.child("search"));
      cfg.has_search = true;
    }
    if (top.has("output")) cfg.output = parse_output(top.child("output"), base_dir);
    cfg.threads = top.u64("threads", 1);
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  cfg.validate();
  return cfg;
}

CampaignConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.parent_path());
}

std::string profiles_to_json(const std::vector<DeviationProfile>& profiles) {
  json arr = json::array();
  for (const DeviationProfile& p : profiles) {
    arr.push_back({{"gemm_id", p.gemm_id},
                   {"ber", p.ber},
                   {"msd_min", p.msd_min},
                   {"msd_max", p.msd_max},
                   {"rcsd_min", p.rcsd_min},
                   {"rcsd_max", p.rcsd_max},
                   {"sample_count", p.sample_count},
                   {"nonfinite_count", p.nonfinite_count}});
  }
  return json{{"profiles", arr}}.dump(2) + "\n";
}

std::vector<DeviationProfile> profiles_from_json(const std::string& text) {
  std::vector<DeviationProfile> out;
  try {
    const json root = json::parse(text);
    for (const json& p : root.at("profiles")) {
      DeviationProfile d;
      d.gemm_id = p.at("gemm_id").get<std::string>();
      d.ber = p.at("ber").get<double>();
      d.msd_min = p.at("msd_min").get<double>();
      d.msd_max = p.at("msd_max").get<double>();
      d.rcsd_min = p.at("rcsd_min").get<double>();
      d.rcsd_max = p.at("rcsd_max").get<double>();
      d.sample_count = p.at("sample_count").get<std::size_t>();
      d.nonfinite_count = p.value("nonfinite_count", std::size_t{0});
      if (!(d.msd_min <= d.msd_max && d.rcsd_min <= d.rcsd_max))
        throw ConfigError("profile for '" + d.gemm_id + "' has min above max");
      out.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed profile file: ") + e.what());
  }
  return out;
}

std::string alphas_to_json(const AlphaAssignment& assignment) {
  json alphas = json::object();
  for (const auto& [id, a] : assignment.alphas) alphas[id] = {{"detect", a.detect}, {"localize", a.localize}};
  return json{{"alphas", alphas}, {"infeasible", assignment.infeasible}}.dump(2) + "\n";
}

AlphaAssignment alphas_from_json(const std::string& text) {
  AlphaAssignment out;
  try {
    const json root = json::parse(text);
    for (const auto& [id, a] : root.at("alphas").items()) {
      const AlphaPair pair{a.at("detect").get<double>(), a.at("localize").get<double>()};
      if (!(pair.detect >= 0.0 && pair.detect <= 1.0 && pair.localize >= 0.0 && pair.localize <= 1.0))
        throw ConfigError("alpha for '" + id + "' lies outside [0, 1]");
      out.alphas[id] = pair;
    }
    out.infeasible = root.value("infeasible", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed alpha file: ") + e.what());
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out.flush()) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace approxabft
