#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "approxabft/abft.hpp"
#include "approxabft/fault_injector.hpp"
#include "approxabft/tensor.hpp"

namespace approxabft {

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t embed_dim = 32;
  std::size_t num_heads = 2;
  std::size_t seq_len = 16;
  std::size_t ff_multiplier = 4;
  std::size_t num_classes = 10;
  std::uint64_t weight_seed = 0;

  std::size_t head_dim() const { return embed_dim / num_heads; }
  void validate() const;
};

enum class GemmKind { weight_proj, attn_score, attn_value, classifier };
const char* to_string(GemmKind kind);

struct GemmNode {
  std::string id;
  GemmShape shape;
  GemmKind kind = GemmKind::weight_proj;
  std::size_t layer = 0;
};

struct LayerWeights {
  LayerNormParams ln_attn, ln_ff;
  Matrix wq, wk, wv, wo, w_ff1, w_ff2;
};

/// Pre-layernorm transformer encoder over token matrices followed by a final
/// layernorm, mean pooling and a linear classifier. Immutable after build.
class Model {
 public:
  const ModelConfig& config() const { return config_; }
  /// GEMM nodes in execution (topological) order.
  const std::vector<GemmNode>& nodes() const { return nodes_; }
  std::size_t node_index(const std::string& id) const;  // throws std::out_of_range
  const std::vector<LayerWeights>& layers() const { return layers_; }
  const LayerNormParams& ln_final() const { return ln_final_; }
  const Matrix& classifier() const { return classifier_; }

 private:
  friend Model build_model(const ModelConfig& cfg);
  ModelConfig config_;
  std::vector<GemmNode> nodes_;
  std::vector<LayerWeights> layers_;
  LayerNormParams ln_final_;
  Matrix classifier_;
};

/// Weights are uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn from
/// weight_seed; layernorm scales start at 1 and shifts at 0.
Model build_model(const ModelConfig& cfg);

/// Raw checksum statistics of one GEMM output before any correction.
struct Observation {
  double msd = 0.0;
  std::vector<double> abs_rcsd;  // |RSD| for every row, then |CSD| for every column
  std::size_t flagged_rows = 0;  // at baseline thresholds
  std::size_t flagged_cols = 0;
  std::size_t multi_rows = 0;  // flagged rows holding more than one faulty cell
  std::size_t multi_cols = 0;
  std::uint64_t flips = 0;
};

struct GemmReport {
  bool protected_run = false;
  DetectionReport detection;
  CorrectionReport correction;
  std::optional<Observation> observation;
};

struct ForwardOptions {
  /// No fault config means a clean run.
  const FaultConfig* faults = nullptr;
  /// No strategy means GEMMs run unprotected.
  std::optional<AbftStrategy> strategy;
  /// Per-node calibrated thresholds (indexed like Model::nodes()); empty
  /// means all zero.
  const std::vector<ThresholdSet>* thresholds = nullptr;
  /// Third component of every stream key (sample index within a trial).
  std::uint64_t stream_trial = 0;
  bool observe = false;
};

struct ForwardResult {
  std::vector<float> logits;
  std::vector<GemmReport> reports;  // one per node
};

ForwardResult forward(const Model& model, const Matrix& input, const ForwardOptions& options, OpCounter& counter);

/// Index of the largest logit; ties go to the lowest index and NaN never wins
/// over an earlier entry.
std::size_t argmax(const std::vector<float>& logits);

struct Dataset {
  std::vector<Matrix> inputs;
  std::vector<std::size_t> labels;
};

Dataset generate_dataset(const Model& model, std::size_t n_samples, std::uint64_t data_seed);

struct AccuracyResult {
  double accuracy = 0.0;
  OpCounter counter;
  std::uint64_t detections_triggered = 0;
  std::uint64_t exact_corrected = 0;
  std::uint64_t approx_corrected = 0;
  std::uint64_t ignored = 0;
  /// Per-node number of triggered detections.
  std::vector<std::uint64_t> node_triggers;
};

/// Top-1 agreement with the stored labels. Sample s uses stream key
/// (faults->seed, node, s).
AccuracyResult evaluate_accuracy(const Model& model, const Dataset& dataset, const FaultConfig* faults,
                                 const std::optional<AbftStrategy>& strategy,
                                 const std::vector<ThresholdSet>* thresholds);

/// One accuracy evaluation per trial; trial t uses fault seed base_seed + t
/// with the rest of `faults` unchanged. Results are in trial order.
std::vector<AccuracyResult> evaluate_trials(const Model& model, const Dataset& dataset, const FaultConfig& faults,
                                            std::uint64_t base_seed, std::size_t trials,
                                            const std::optional<AbftStrategy>& strategy,
                                            const std::vector<ThresholdSet>* thresholds, std::size_t threads = 1);

double mean_accuracy(const std::vector<AccuracyResult>& results);

/// Analytic ABFT multiplication count for one forward pass given which nodes
/// triggered recovery.
std::uint64_t predicted_abft_mults(const Model& model, const std::vector<std::uint64_t>& node_triggers,
                                   std::uint64_t forwards);

}  // namespace approxabft
