#include "approxabft/campaign.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "approxabft/parallel.hpp"
#include "json.hpp"

namespace approxabft {
namespace {

using nlohmann::json;

bool needs_thresholds(const std::optional<AbftStrategy>& s) {
  return s && (s->detection == Detection::AED || s->localization == LocalizationMode::AEL);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("bad integer '" + s + "'");
  return v;
}

json row_to_json(const CampaignRow& r) {
  return {{"ber", r.ber},
          {"strategy", r.strategy},
          {"trial", r.trial},
          {"accuracy", r.accuracy},
          {"workload_mults", r.workload_mults},
          {"abft_mults", r.abft_mults},
          {"abft_adds", r.abft_adds},
          {"abft_comparisons", r.abft_comparisons},
          {"detections_triggered", r.detections_triggered},
          {"exact_corrected", r.exact_corrected},
          {"approx_corrected", r.approx_corrected},
          {"ignored", r.ignored}};
}

json histogram_to_json(const Histogram& h) {
  return {{"edges", h.edges}, {"counts", h.counts}, {"nonfinite", h.nonfinite}};
}

}  // namespace

std::optional<Calibration> load_calibration(const CampaignConfig& cfg) {
  if (!cfg.needs_calibration()) return std::nullopt;
  if (!cfg.profiles_path || !cfg.alphas_path)
    throw ConfigError("approximate strategies need abft.profiles and abft.alphas files");
  Calibration c;
  try {
    c.profiles = profiles_from_json(read_text_file(*cfg.profiles_path));
    c.alphas = alphas_from_json(read_text_file(*cfg.alphas_path));
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void sort_rows(std::vector<CampaignRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const CampaignRow& a, const CampaignRow& b) {
    return std::tie(a.ber, a.strategy, a.trial) < std::tie(b.ber, b.strategy, b.trial);
  });
}

CampaignResult run_campaign(const CampaignConfig& cfg, const Model& model, const Dataset& dataset,
                            const std::optional<Calibration>& calibration) {
  cfg.validate();
  std::vector<std::optional<AbftStrategy>> strategies;
  std::vector<ThresholdSet> calibrated;
  for (const std::string& name : cfg.strategies) {
    strategies.push_back(parse_strategy(name));
    if (needs_thresholds(strategies.back()) && calibrated.empty()) {
      if (!calibration) throw ConfigError("strategy '" + name + "' needs a calibration");
      try {
        calibrated = thresholds_for(model, calibration->profiles, calibration->alphas);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }

  const std::size_t per_ber = cfg.strategies.size() * cfg.trials;
  std::vector<CampaignRow> rows(cfg.bers.size() * per_ber);
  parallel_for(rows.size(), cfg.threads, [&](std::size_t task) {
    const std::size_t b = task / per_ber;
    const std::size_t s = (task % per_ber) / cfg.trials;
    const std::size_t t = task % cfg.trials;
    FaultConfig faults;
    faults.ber = cfg.bers[b];
    faults.seed = cfg.base_seed + t;
    faults.scope = cfg.scope;
    faults.forced = cfg.forced;
    const auto& strategy = strategies[s];
    const AccuracyResult r =
        evaluate_accuracy(model, dataset, &faults, strategy, needs_thresholds(strategy) ? &calibrated : nullptr);
    CampaignRow& row = rows[task];
    row.ber = faults.ber;
    row.strategy = cfg.strategies[s];
    row.trial = t;
    row.accuracy = r.accuracy;
    row.workload_mults = r.counter.workload_mults;
    row.abft_mults = r.counter.abft_mults;
    row.abft_adds = r.counter.abft_adds;
    row.abft_comparisons = r.counter.abft_comparisons;
    row.detections_triggered = r.detections_triggered;
    row.exact_corrected = r.exact_corrected;
    row.approx_corrected = r.approx_corrected;
    row.ignored = r.ignored;
  });
  sort_rows(rows);
  return {std::move(rows)};
}

CampaignResult run_campaign(const CampaignConfig& cfg) {
  cfg.validate();
  const Model model = build_model(cfg.model);
  const Dataset dataset = generate_dataset(model, cfg.dataset.n_samples, cfg.dataset.data_seed);
  return run_campaign(cfg, model, dataset, load_calibration(cfg));
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, ptr);
}

std::string to_csv(const CampaignResult& result) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const CampaignRow& r : result.rows) {
    out += format_double(r.ber) + ',' + r.strategy + ',' + std::to_string(r.trial) + ',' + format_double(r.accuracy);
    for (std::uint64_t v : {r.workload_mults, r.abft_mults, r.abft_adds, r.abft_comparisons, r.detections_triggered,
                            r.exact_corrected, r.approx_corrected, r.ignored})
      out += ',' + std::to_string(v);
    out += '\n';
  }
  return out;
}

CampaignResult parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("unexpected CSV header");
  CampaignResult result;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != 12) throw std::runtime_error("CSV row has " + std::to_string(f.size()) + " fields");
    CampaignRow r;
    r.ber = parse_double(f[0]);
    r.strategy = f[1];
    r.trial = parse_u64(f[2]);
    r.accuracy = parse_double(f[3]);
    r.workload_mults = parse_u64(f[4]);
    r.abft_mults = parse_u64(f[5]);
    r.abft_adds = parse_u64(f[6]);
    r.abft_comparisons = parse_u64(f[7]);
    r.detections_triggered = parse_u64(f[8]);
    r.exact_corrected = parse_u64(f[9]);
    r.approx_corrected = parse_u64(f[10]);
    r.ignored = parse_u64(f[11]);
    result.rows.push_back(std::move(r));
  }
  return result;
}

std::string to_json(const CampaignResult& result) {
  json rows = json::array();
  for (const CampaignRow& r : result.rows) rows.push_back(row_to_json(r));
  return json{{"rows", rows}}.dump(2) + "\n";
}

CampaignResult parse_json(const std::string& text) {
  CampaignResult result;
  const json root = json::parse(text);
  for (const json& j : root.at("rows")) {
    CampaignRow r;
    r.ber = j.at("ber").get<double>();
    r.strategy = j.at("strategy").get<std::string>();
    r.trial = j.at("trial").get<std::uint64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.workload_mults = j.at("workload_mults").get<std::uint64_t>();
    r.abft_mults = j.at("abft_mults").get<std::uint64_t>();
    r.abft_adds = j.at("abft_adds").get<std::uint64_t>();
    r.abft_comparisons = j.at("abft_comparisons").get<std::uint64_t>();
    r.detections_triggered = j.at("detections_triggered").get<std::uint64_t>();
    r.exact_corrected = j.at("exact_corrected").get<std::uint64_t>();
    r.approx_corrected = j.at("approx_corrected").get<std::uint64_t>();
    r.ignored = j.at("ignored").get<std::uint64_t>();
    result.rows.push_back(std::move(r));
  }
  return result;
}

std::uint64_t Histogram::total() const {
  std::uint64_t n = nonfinite;
  for (std::uint64_t c : counts) n += c;
  return n;
}

double Histogram::lowest_bin_fraction() const {
  const std::uint64_t finite = total() - nonfinite;
  if (finite == 0 || counts.empty()) return 0.0;
  return static_cast<double>(counts.front()) / static_cast<double>(finite);
}

Histogram make_histogram(const std::vector<double>& samples, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  Histogram h;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : samples) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo > hi) lo = hi = 0.0;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = i == bins ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  const double width = hi - lo;
  for (double v : samples) {
    if (!std::isfinite(v)) {
      ++h.nonfinite;
      continue;
    }
    std::size_t bin = 0;
    if (width > 0.0) {
      const double pos = (v - lo) / width * static_cast<double>(bins);
      bin = std::min(bins - 1, static_cast<std::size_t>(pos));
    }
    ++h.counts[bin];
  }
  return h;
}

std::vector<std::string> largest_per_layer(const Model& model) {
  std::vector<std::string> out;
  const auto& nodes = model.nodes();
  for (std::size_t l = 0; l < model.config().num_layers; ++l) {
    const GemmNode* best = nullptr;
    for (const GemmNode& n : nodes) {
      if (n.layer != l || n.kind == GemmKind::classifier) continue;
      if (!best || n.shape.m * n.shape.n > best->shape.m * best->shape.n) best = &n;
    }
    if (best) out.push_back(best->id);
  }
  return out;
}

StatsReport compute_stats(const Model& model, const Dataset& dataset, const std::vector<std::string>& gemm_ids,
                          double ber, std::size_t trials, std::uint64_t base_seed, std::size_t bins) {
  if (trials == 0) throw std::invalid_argument("stats need at least one trial");
  if (dataset.inputs.empty()) throw std::invalid_argument("dataset is empty");
  std::vector<std::size_t> idx;
  for (const std::string& id : gemm_ids) idx.push_back(model.node_index(id));

  std::vector<std::vector<double>> msd(idx.size()), rcsd(idx.size());
  StatsReport report;
  report.ber = ber;
  report.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    FaultConfig faults;
    faults.ber = ber;
    faults.seed = base_seed + t;
    ForwardOptions opt;
    opt.faults = &faults;
    opt.observe = true;
    opt.stream_trial = t % dataset.inputs.size();
    OpCounter scratch;
    const ForwardResult r = forward(model, dataset.inputs[opt.stream_trial], opt, scratch);
    for (std::size_t g = 0; g < idx.size(); ++g) {
      const Observation& o = *r.reports[idx[g]].observation;
      msd[g].push_back(o.msd);
      rcsd[g].insert(rcsd[g].end(), o.abs_rcsd.begin(), o.abs_rcsd.end());
      report.flagged_lines += o.flagged_rows + o.flagged_cols;
      report.multi_error_lines += o.multi_rows + o.multi_cols;
    }
  }
  for (std::size_t g = 0; g < idx.size(); ++g)
    report.gemms.push_back({gemm_ids[g], make_histogram(msd[g], bins), make_histogram(rcsd[g], bins)});
  if (report.flagged_lines > 0)
    report.multi_error_fraction =
        static_cast<double>(report.multi_error_lines) / static_cast<double>(report.flagged_lines);
  return report;
}

std::string stats_to_json(const std::vector<StatsReport>& reports) {
  json arr = json::array();
  for (const StatsReport& r : reports) {
    json gemms = json::array();
    for (const GemmStats& g : r.gemms)
      gemms.push_back({{"gemm_id", g.gemm_id}, {"msd", histogram_to_json(g.msd)}, {"rcsd", histogram_to_json(g.rcsd)}});
    arr.push_back({{"ber", r.ber},
                   {"trials", r.trials},
                   {"gemms", gemms},
                   {"multi_error_fraction", r.multi_error_fraction},
                   {"multi_error_lines", r.multi_error_lines},
                   {"flagged_lines", r.flagged_lines}});
  }
  return json{{"multi_error_denominator", kMultiErrorDenominator}, {"reports", arr}}.dump(2) + "\n";
}

std::string stats_to_csv(const std::vector<StatsReport>& reports) {
  std::string out = "ber,gemm_id,quantity,bin,lower,upper,count\n";
  for (const StatsReport& r : reports) {
    for (const GemmStats& g : r.gemms) {
      for (const auto& [name, h] : {std::pair<const char*, const Histogram&>{"msd", g.msd}, {"rcsd", g.rcsd}}) {
        for (std::size_t b = 0; b < h.counts.size(); ++b)
          out += format_double(r.ber) + ',' + g.gemm_id + ',' + name + ',' + std::to_string(b) + ',' +
                 format_double(h.edges[b]) + ',' + format_double(h.edges[b + 1]) + ',' + std::to_string(h.counts[b]) +
                 '\n';
      }
    }
  }
  return out;
}

std::string gemm_table_csv(const Model& model) {
  std::string out = "id,kind,m,k,n\n";
  for (const GemmNode& n : model.nodes())
    out += n.id + ',' + to_string(n.kind) + ',' + std::to_string(n.shape.m) + ',' + std::to_string(n.shape.k) + ',' +
           std::to_string(n.shape.n) + '\n';
  return out;
}

}  // namespace approxabft
