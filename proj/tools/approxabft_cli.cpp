// Command-line front end: profiling, threshold search, campaigns, stats.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "approxabft/campaign.hpp"
#include "approxabft/config.hpp"
#include "approxabft/threshold.hpp"

namespace fs = std::filesystem;
using namespace approxabft;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

void emit(const fs::path& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  write_text_file(path, text);
  std::cerr << "wrote " << path.string() << "\n";
}

const CampaignConfig& require_search(const CampaignConfig& cfg) {
  if (!cfg.has_search) throw ConfigError("this command needs a 'search' section in the config");
  return cfg;
}

struct Workload {
  Model model;
  Dataset dataset;
};

Workload make_workload(const CampaignConfig& cfg) {
  Model model = build_model(cfg.model);
  Dataset dataset = generate_dataset(model, cfg.dataset.n_samples, cfg.dataset.data_seed);
  return {std::move(model), std::move(dataset)};
}

std::vector<DeviationProfile> compute_profiles(const CampaignConfig& cfg, const Workload& w) {
  const SearchSettings& s = require_search(cfg).search;
  return profile_all(w.model, w.dataset, s.ber, s.profile_trials, s.profile_seed);
}

int cmd_profile(CampaignConfig cfg, const std::vector<double>& bers, std::size_t trials, const fs::path& out) {
  require_search(cfg);
  if (!bers.empty()) {
    if (bers.size() != 1) throw ConfigError("profile takes a single --ber");
    cfg.search.ber = bers.front();
  }
  if (trials > 0) cfg.search.profile_trials = trials;
  cfg.validate();
  const Workload w = make_workload(cfg);
  const std::vector<DeviationProfile> profiles = compute_profiles(cfg, w);
  emit(out.empty() ? cfg.output.profiles : out, profiles_to_json(profiles));
  return 0;
}

int cmd_search(CampaignConfig cfg, const std::string& mode, const std::string& order, double budget,
               const fs::path& profiles_in, const fs::path& out) {
  require_search(cfg);
  if (!mode.empty()) {
    if (mode == "global")
      cfg.search.mode = SearchMode::global;
    else if (mode == "gemmwise")
      cfg.search.mode = SearchMode::gemmwise;
    else
      throw ConfigError("--mode must be global or gemmwise");
  }
  if (!order.empty()) {
    try {
      cfg.search.order = parse_search_order(order);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (budget >= 0.0) cfg.search.budget = budget;
  cfg.validate();

  const Workload w = make_workload(cfg);
  std::vector<DeviationProfile> profiles;
  if (!profiles_in.empty()) {
    profiles = profiles_from_json(read_text_file(profiles_in));
  } else if (cfg.profiles_path && fs::exists(*cfg.profiles_path)) {
    profiles = profiles_from_json(read_text_file(*cfg.profiles_path));
  } else {
    std::cerr << "profiling " << cfg.search.profile_trials << " trials at ber " << cfg.search.ber << "\n";
    profiles = compute_profiles(cfg, w);
  }

  SearchConfig sc;
  sc.accuracy_budget = cfg.search.budget;
  sc.trials_per_eval = cfg.search.trials_per_eval;
  sc.ber = cfg.search.ber;
  sc.resolution = cfg.search.resolution;
  sc.order = cfg.search.order;
  sc.base_seed = cfg.search.seed;
  sc.threads = cfg.threads;
  sc.strategy = *parse_strategy(cfg.search.strategy);

  const AlphaAssignment a = cfg.search.mode == SearchMode::global
                                ? binary_search_global_alpha(w.model, w.dataset, sc, profiles)
                                : greedy_gemmwise_search(w.model, w.dataset, sc, profiles);
  if (a.infeasible) std::cerr << "warning: alpha = 0 does not meet the accuracy budget for some GEMM\n";
  emit(out.empty() ? cfg.output.alphas : out, alphas_to_json(a));
  return 0;
}

int cmd_run(CampaignConfig cfg, const std::vector<std::string>& strategies, const std::vector<double>& bers,
            std::size_t trials, std::size_t threads, const fs::path& csv, const fs::path& json) {
  if (!strategies.empty()) cfg.strategies = strategies;
  if (!bers.empty()) cfg.bers = bers;
  if (trials > 0) cfg.trials = trials;
  if (threads > 0) cfg.threads = threads;
  cfg.validate();
  const CampaignResult result = run_campaign(cfg);

  const fs::path csv_path = csv.empty() ? cfg.output.csv : csv;
  const fs::path json_path = json.empty() ? cfg.output.json : json;
  if (!csv_path.empty() || json_path.empty()) emit(csv_path, to_csv(result));
  if (!json_path.empty()) emit(json_path, to_json(result));

  struct Agg {
    double acc = 0.0;
    double mults = 0.0;
    std::size_t n = 0;
  };
  std::map<std::pair<double, std::string>, Agg> agg;
  for (const CampaignRow& r : result.rows) {
    Agg& a = agg[{r.ber, r.strategy}];
    a.acc += r.accuracy;
    a.mults += static_cast<double>(r.abft_mults);
    ++a.n;
  }
  std::FILE* summary = csv_path.empty() ? stderr : stdout;
  std::fprintf(summary, "%-10s %-12s %10s %16s\n", "ber", "strategy", "accuracy", "abft_mults/trial");
  for (const auto& [key, a] : agg)
    std::fprintf(summary, "%-10g %-12s %10.4f %16.0f\n", key.first, key.second.c_str(), a.acc / a.n, a.mults / a.n);
  return 0;
}

int cmd_stats(const CampaignConfig& cfg, const std::string& kind, const std::vector<double>& bers_in,
              std::size_t trials_in, const std::vector<std::string>& gemms_in, std::size_t bins, const fs::path& out) {
  const Workload w = make_workload(cfg);
  const std::vector<std::string> ids = gemms_in.empty() ? largest_per_layer(w.model) : gemms_in;
  const std::vector<double>& bers = bers_in.empty() ? cfg.bers : bers_in;
  const std::size_t trials = trials_in > 0 ? trials_in : cfg.trials;
  std::vector<StatsReport> reports;
  for (double ber : bers) reports.push_back(compute_stats(w.model, w.dataset, ids, ber, trials, cfg.base_seed, bins));

  if (kind == "multierror") {
    std::cout << "ber,multi_error_fraction,multi_error_lines,flagged_lines\n";
    for (const StatsReport& r : reports)
      std::cout << format_double(r.ber) << ',' << format_double(r.multi_error_fraction) << ',' << r.multi_error_lines
                << ',' << r.flagged_lines << '\n';
    std::cout << "# denominator: " << kMultiErrorDenominator << "\n";
  } else {
    std::cout << "ber,gemm_id,bin,lower,upper,count\n";
    for (const StatsReport& r : reports) {
      for (const GemmStats& g : r.gemms) {
        const Histogram& h = kind == "msd" ? g.msd : g.rcsd;
        for (std::size_t b = 0; b < h.counts.size(); ++b)
          std::cout << format_double(r.ber) << ',' << g.gemm_id << ',' << b << ',' << format_double(h.edges[b]) << ','
                    << format_double(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
      }
    }
  }
  const fs::path path = out.empty() ? cfg.output.stats : out;
  if (!path.empty()) emit(path, stats_to_json(reports));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Checksum ABFT fault-injection campaigns on a toy transformer"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("-c,--config", config_path, "campaign config file (JSON)");

  auto* profile = app.add_subcommand("profile", "profile per-GEMM deviation ranges under random faults");
  std::vector<double> p_ber;
  std::size_t p_trials = 0;
  std::string p_out;
  profile->add_option("--ber", p_ber, "override search.ber")->expected(1);
  profile->add_option("--trials", p_trials, "override search.profile_trials");
  profile->add_option("-o,--out", p_out, "output file (default output.profiles)");

  auto* search = app.add_subcommand("search", "search approximation thresholds");
  std::string s_mode, s_order, s_profiles, s_out;
  double s_budget = -1.0;
  search->add_option("--mode", s_mode, "global | gemmwise")->check(CLI::IsMember({"global", "gemmwise"}));
  search->add_option("--order", s_order, "inorder | ascending")->check(CLI::IsMember({"inorder", "ascending"}));
  search->add_option("--budget", s_budget, "accuracy loss budget per step")->check(CLI::Range(0.0, 1.0));
  search->add_option("--profiles", s_profiles, "profile file (default abft.profiles, else profile first)");
  search->add_option("-o,--out", s_out, "output file (default output.alphas)");

  auto* run = app.add_subcommand("run", "run a BER x strategy x trial campaign");
  std::vector<std::string> r_strategies;
  std::vector<double> r_bers;
  std::size_t r_trials = 0, r_threads = 0;
  std::string r_csv, r_json;
  run->add_option("--strategy", r_strategies, "strategy names")->delimiter(',');
  run->add_option("--ber", r_bers, "bit error rates")->delimiter(',');
  run->add_option("--trials", r_trials, "trials per (ber, strategy)");
  run->add_option("--threads", r_threads, "worker threads");
  run->add_option("--csv", r_csv, "CSV output (default output.csv)");
  run->add_option("--json", r_json, "JSON output (default output.json)");

  auto* stats = app.add_subcommand("stats", "deviation histograms and multi-error fractions");
  std::string t_kind = "msd", t_out;
  std::vector<double> t_bers;
  std::vector<std::string> t_gemms;
  std::size_t t_trials = 0, t_bins = 10;
  stats->add_option("--kind", t_kind, "msd | rcsd | multierror")->check(CLI::IsMember({"msd", "rcsd", "multierror"}));
  stats->add_option("--ber", t_bers, "bit error rates (default faults.bers)")->delimiter(',');
  stats->add_option("--trials", t_trials, "forward passes per ber (default faults.trials)");
  stats->add_option("--gemm", t_gemms, "GEMM ids (default: largest per layer)")->delimiter(',');
  stats->add_option("--bins", t_bins, "histogram bins")->check(CLI::PositiveNumber);
  stats->add_option("-o,--out", t_out, "JSON report (default output.stats)");

  auto* gemms = app.add_subcommand("gemms", "list the model's GEMM nodes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gemms->parsed() && config_path.empty()) {
      std::cout << gemm_table_csv(build_model({}));
      return 0;
    }
    if (config_path.empty()) throw ConfigError("--config is required");
    const CampaignConfig cfg = load_config(config_path);
    if (gemms->parsed()) {
      std::cout << gemm_table_csv(build_model(cfg.model));
      return 0;
    }
    if (profile->parsed()) return cmd_profile(cfg, p_ber, p_trials, p_out);
    if (search->parsed()) return cmd_search(cfg, s_mode, s_order, s_budget, s_profiles, s_out);
    if (run->parsed()) return cmd_run(cfg, r_strategies, r_bers, r_trials, r_threads, r_csv, r_json);
    if (stats->parsed()) return cmd_stats(cfg, t_kind, t_bers, t_trials, t_gemms, t_bins, t_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
