#pragma once

// Adam training loop with checkpoint resume. Also the ablation driver.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "slbr/metrics.hpp"
#include "slbr/network.hpp"
#include "slbr/objectives.hpp"
#include "slbr/synth.hpp"

namespace slbr {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "slbr-checkpoint";

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 8;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int image_size = 256;
  int max_steps = 0;
  std::uint64_t seed = 0;
  LossWeights weights;
  NetworkConfig network;
  std::uint64_t extractor_seed = 0;
  // Pretrained extractor weights; empty selects the seeded extractor.
  std::string extractor_weights;
  // 0 disables clipping of the global gradient norm.
  double clip_grad_norm = 0.0;
  // lr *= lr_decay_factor every lr_decay_every steps; 0 disables.
  int lr_decay_every = 0;
  double lr_decay_factor = 0.5;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Field-level differences between two configurations, ignoring max_steps.
// Each entry reads "key: a != b".
std::vector<std::string> config_diff(const TrainConfig& a, const TrainConfig& b);

struct HistoryRow {
  int step = 0;  // 1-based index of the completed step
  LossTerms terms;
};

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history);

class Adam {
 public:
  Adam(std::vector<Var> params, double beta1, double beta2, double eps);

  // One update with the gradients currently stored on the parameters.
  void step(double lr);
  long steps_taken() const { return t_; }

  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps_taken(long t) { t_ = t; }

 private:
  std::vector<Var> params_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Sample order for a step: epoch e uses a permutation seeded from (seed, e);
// incomplete trailing batches are dropped.
std::vector<int> batch_indices(std::uint64_t seed, int dataset_size, int batch_size, int step);

class Trainer {
 public:
  // Fresh run. Samples must be image_size x image_size.
  Trainer(const TrainConfig& config, const std::vector<Sample>& data);

  // Continues from a checkpoint written by save_checkpoint. The checkpoint
  // config must match `config` apart from max_steps.
  static std::unique_ptr<Trainer> resume(const std::filesystem::path& checkpoint,
                                         const TrainConfig& config,
                                         const std::vector<Sample>& data);

  // One optimization step; NumericError on a non-finite loss.
  const HistoryRow& step();
  // Steps until `until_step` completed steps; `on_step` after each.
  void run(int until_step, const std::function<void(const HistoryRow&)>& on_step = {});

  int steps_done() const { return step_; }
  const SlbrNetwork& network() const { return *net_; }
  SlbrNetwork& network() { return *net_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<HistoryRow>& history() const { return history_; }
  double current_lr() const;

  void save_checkpoint(const std::filesystem::path& path) const;

 private:
  TrainConfig config_;
  const std::vector<Sample>& data_;
  std::unique_ptr<SlbrNetwork> net_;
  PerceptualExtractor extractor_;
  std::unique_ptr<Adam> adam_;
  int step_ = 0;
  std::vector<HistoryRow> history_;
  std::vector<Tensor> inputs_, targets_, masks_;
};

// Reads the network stored in a checkpoint. With `expected` given, a
// differing network configuration raises CompatibilityError before any
// weight is touched.
std::unique_ptr<SlbrNetwork> load_network(const std::filesystem::path& checkpoint,
                                          const NetworkConfig* expected = nullptr);
TrainConfig checkpoint_config(const std::filesystem::path& checkpoint);

struct AblationResult {
  int row = 0;
  AblationRow toggles;
  std::size_t parameter_count = 0;
  MetricsReport report;
};

// Trains every row with the same seed and data, then evaluates on
// `eval_data`. Progress goes to `log` when given.
std::vector<AblationResult> run_ablation_grid(const TrainConfig& base, const std::vector<int>& rows,
                                              const std::vector<Sample>& train_data,
                                              const std::vector<Sample>& eval_data,
                                              std::ostream* log = nullptr);

void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationResult>& results);
std::string format_ablation_table(const std::vector<AblationResult>& results);

}  // namespace slbr
