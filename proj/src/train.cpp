#include "slbr/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "slbr/errors.hpp"
#include "slbr/tensor_file.hpp"

namespace slbr {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  if (image_size < 32 || image_size % 16 != 0) {
    throw ConfigError("train.image_size must be a multiple of 16 and >= 32, got " +
                      std::to_string(image_size));
  }
  if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (!(clip_grad_norm >= 0.0)) throw ConfigError("train.clip_grad_norm must be >= 0");
  if (lr_decay_every < 0 || !(lr_decay_factor > 0.0)) {
    throw ConfigError("lr decay needs every >= 0 and factor > 0");
  }
  weights.validate();
  try {
    network.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"image_size", c.image_size},
                     {"max_steps", c.max_steps},
                     {"seed", c.seed},
                     {"lambda_vgg", c.weights.lambda_vgg},
                     {"lambda_mask", c.weights.lambda_mask},
                     {"network", c.network},
                     {"extractor_seed", c.extractor_seed},
                     {"extractor_weights", c.extractor_weights},
                     {"clip_grad_norm", c.clip_grad_norm},
                     {"lr_decay_every", c.lr_decay_every},
                     {"lr_decay_factor", c.lr_decay_factor}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("lr").get_to(c.lr);
  j.at("batch_size").get_to(c.batch_size);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  j.at("image_size").get_to(c.image_size);
  j.at("max_steps").get_to(c.max_steps);
  j.at("seed").get_to(c.seed);
  j.at("lambda_vgg").get_to(c.weights.lambda_vgg);
  j.at("lambda_mask").get_to(c.weights.lambda_mask);
  j.at("network").get_to(c.network);
  j.at("extractor_seed").get_to(c.extractor_seed);
  j.at("extractor_weights").get_to(c.extractor_weights);
  j.at("clip_grad_norm").get_to(c.clip_grad_norm);
  j.at("lr_decay_every").get_to(c.lr_decay_every);
  j.at("lr_decay_factor").get_to(c.lr_decay_factor);
}

std::vector<std::string> config_diff(const TrainConfig& a, const TrainConfig& b) {
  const nlohmann::json fa = nlohmann::json(a).flatten();
  const nlohmann::json fb = nlohmann::json(b).flatten();
  std::vector<std::string> out;
  auto dotted = [](std::string key) {
    key.erase(0, 1);
    std::replace(key.begin(), key.end(), '/', '.');
    return key;
  };
  for (auto it = fa.begin(); it != fa.end(); ++it) {
    if (it.key() == "/max_steps") continue;
    const auto other = fb.find(it.key());
    const std::string rhs = other == fb.end() ? "<absent>" : other->dump();
    if (other == fb.end() || *other != it.value()) {
      out.push_back(dotted(it.key()) + ": " + it.value().dump() + " != " + rhs);
    }
  }
  for (auto it = fb.begin(); it != fb.end(); ++it) {
    if (!fa.contains(it.key())) out.push_back(dotted(it.key()) + ": <absent> != " + it->dump());
  }
  return out;
}

void write_history_csv(const fs::path& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write '" + path.string() + "'");
  out << "step,total,L_c,L_r,L_vgg,L_mask,L_mask_prime\n" << std::setprecision(17);
  for (const HistoryRow& r : history) {
    out << r.step << ',' << r.terms.total << ',' << r.terms.coarse_l1 << ','
        << r.terms.refined_l1 << ',' << r.terms.vgg << ',' << r.terms.mask << ','
        << r.terms.mask_prime << '\n';
  }
}

Adam::Adam(std::vector<Var> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Var& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto g = params_[i].node()->grad.values();
    auto w = params_[i].mutable_value().values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

std::vector<int> batch_indices(std::uint64_t seed, int dataset_size, int batch_size, int step) {
  require(dataset_size >= batch_size && batch_size >= 1, "batch_indices: dataset smaller than batch");
  const int per_epoch = dataset_size / batch_size;
  const int epoch = step / per_epoch, cursor = step % per_epoch;
  std::vector<int> order(dataset_size);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  Rng rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return {order.begin() + cursor * batch_size, order.begin() + (cursor + 1) * batch_size};
}

namespace {

PerceptualExtractor make_extractor(const TrainConfig& c) {
  if (!c.extractor_weights.empty()) return PerceptualExtractor::from_file(c.extractor_weights);
  return PerceptualExtractor::seeded(c.extractor_seed);
}

std::string describe(const LossTerms& t) {
  std::ostringstream os;
  os << "total=" << t.total << " L_c=" << t.coarse_l1 << " L_r=" << t.refined_l1
     << " L_vgg=" << t.vgg << " L_mask=" << t.mask << " L_mask'=" << t.mask_prime;
  return os.str();
}

Tensor gather(const std::vector<Tensor>& pool, const std::vector<int>& idx) {
  const Shape one = pool.at(idx.front()).shape();
  Tensor out({static_cast<int>(idx.size()), one.c, one.h, one.w});
  const std::size_t n = one.size();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto src = pool[idx[b]].values();
    std::copy(src.begin(), src.end(), out.values().begin() + b * n);
  }
  return out;
}

void copy_into(Tensor& dst, const Tensor& src, const std::string& name, const fs::path& path) {
  if (src.shape() != dst.shape()) {
    throw CompatibilityError("'" + path.string() + "': tensor " + name + " has shape " +
                             src.shape().str() + ", expected " + dst.shape().str());
  }
  std::copy(src.values().begin(), src.values().end(), dst.values().begin());
}

TensorFile open_checkpoint(const fs::path& path) {
  TensorFile file = read_tensor_file(path);
  const auto& meta = file.meta;
  if (meta.value("format", std::string()) != kCheckpointFormat) {
    throw CompatibilityError("'" + path.string() + "' is not a checkpoint file");
  }
  const int version = meta.value("version", -1);
  if (version != kCheckpointVersion) {
    throw CompatibilityError("'" + path.string() + "': checkpoint version " +
                             std::to_string(version) + " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  if (!meta.contains("config") || !meta.contains("step")) {
    throw LoadError("'" + path.string() + "': checkpoint metadata incomplete");
  }
  return file;
}

TrainConfig parse_config(const TensorFile& file, const fs::path& path) {
  try {
    return file.meta.at("config").get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("'" + path.string() + "': bad checkpoint config: " + e.what());
  }
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, const std::vector<Sample>& data)
    : config_(config), data_(data) {
  config_.validate();
  if (static_cast<int>(data_.size()) < config_.batch_size) {
    throw ConfigError("dataset has " + std::to_string(data_.size()) +
                      " samples, fewer than batch_size " + std::to_string(config_.batch_size));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const Sample& s = data_[i];
    if (s.watermarked.height() != config_.image_size || s.watermarked.width() != config_.image_size) {
      throw ConfigError("sample " + std::to_string(i) + " is " +
                        std::to_string(s.watermarked.height()) + "x" +
                        std::to_string(s.watermarked.width()) + ", expected image_size " +
                        std::to_string(config_.image_size));
    }
    inputs_.push_back(s.watermarked.to_tensor());
    targets_.push_back(s.background.to_tensor());
    masks_.push_back(s.mask.to_tensor());
  }
  net_ = std::make_unique<SlbrNetwork>(config_.network, config_.seed);
  extractor_ = make_extractor(config_);
  adam_ = std::make_unique<Adam>(net_->parameters(), config_.beta1, config_.beta2,
                                 config_.adam_eps);
}

double Trainer::current_lr() const {
  if (config_.lr_decay_every <= 0) return config_.lr;
  return config_.lr * std::pow(config_.lr_decay_factor, step_ / config_.lr_decay_every);
}

const HistoryRow& Trainer::step() {
  const std::vector<int> idx =
      batch_indices(config_.seed, static_cast<int>(data_.size()), config_.batch_size, step_);
  const Tensor x = gather(inputs_, idx);
  const Tensor y = gather(targets_, idx);
  const Tensor m = gather(masks_, idx);

  net_->zero_grad();
  const SlbrOutput out = net_->forward(Var(x));
  const LossResult loss = total_loss(out.coarse, out.refined, y, m, config_.weights, extractor_);
  if (!loss.terms.all_finite()) {
    throw NumericError("non-finite loss at step " + std::to_string(step_ + 1) + ": " +
                       describe(loss.terms));
  }
  backward(loss.total);

  if (config_.clip_grad_norm > 0.0) {
    double sq = 0.0;
    for (const Var& p : net_->parameters()) {
      if (!p.has_grad()) continue;
      for (double g : p.node()->grad.values()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_grad_norm) {
      const double f = config_.clip_grad_norm / norm;
      for (const Var& p : net_->parameters()) {
        if (!p.has_grad()) continue;
        for (double& g : p.node()->grad.values()) g *= f;
      }
    }
  }
  adam_->step(current_lr());
  ++step_;
  history_.push_back({step_, loss.terms});
  return history_.back();
}

void Trainer::run(int until_step, const std::function<void(const HistoryRow&)>& on_step) {
  while (step_ < until_step) {
    const HistoryRow& row = step();
    if (on_step) on_step(row);
  }
}

void Trainer::save_checkpoint(const fs::path& path) const {
  TensorFile file;
  file.meta = {{"format", kCheckpointFormat},
               {"version", kCheckpointVersion},
               {"step", step_},
               {"adam_steps", adam_->steps_taken()},
               {"config", config_},
               {"rng", {{"seed", config_.seed}, {"next_step", step_}}}};
  const NamedParameters params = net_->named_parameters();
  for (const auto& [name, p] : params) file.tensors.emplace_back(name, p.value());
  for (std::size_t i = 0; i < params.size(); ++i) {
    file.tensors.emplace_back("adam.m." + params[i].first, adam_->first_moments()[i]);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    file.tensors.emplace_back("adam.v." + params[i].first, adam_->second_moments()[i]);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_tensor_file(path, file);
}

std::unique_ptr<Trainer> Trainer::resume(const fs::path& checkpoint, const TrainConfig& config,
                                         const std::vector<Sample>& data) {
  const TensorFile file = open_checkpoint(checkpoint);
  const TrainConfig saved = parse_config(file, checkpoint);
  const std::vector<std::string> diff = config_diff(saved, config);
  if (!diff.empty()) {
    std::string msg = "checkpoint '" + checkpoint.string() + "' was written with a different config:";
    for (const std::string& d : diff) msg += "\n  " + d;
    throw CompatibilityError(msg);
  }
  auto trainer = std::make_unique<Trainer>(config, data);
  NamedParameters params = trainer->net_->named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    copy_into(p.mutable_value(), file.at(name), name, checkpoint);
    copy_into(trainer->adam_->first_moments()[i], file.at("adam.m." + name), "adam.m." + name,
              checkpoint);
    copy_into(trainer->adam_->second_moments()[i], file.at("adam.v." + name), "adam.v." + name,
              checkpoint);
  }
  trainer->step_ = file.meta.at("step").get<int>();
  trainer->adam_->set_steps_taken(file.meta.at("adam_steps").get<long>());
  return trainer;
}

TrainConfig checkpoint_config(const fs::path& checkpoint) {
  return parse_config(open_checkpoint(checkpoint), checkpoint);
}

std::unique_ptr<SlbrNetwork> load_network(const fs::path& checkpoint,
                                          const NetworkConfig* expected) {
  const TensorFile file = open_checkpoint(checkpoint);
  const TrainConfig saved = parse_config(file, checkpoint);
  if (expected != nullptr && !(*expected == saved.network)) {
    TrainConfig a, b;
    a.network = saved.network;
    b.network = *expected;
    std::string msg = "checkpoint '" + checkpoint.string() + "' holds a different network:";
    for (const std::string& d : config_diff(a, b)) msg += "\n  " + d;
    throw CompatibilityError(msg);
  }
  auto net = std::make_unique<SlbrNetwork>(saved.network, saved.seed);
  for (auto& [name, p] : net->named_parameters()) {
    copy_into(p.mutable_value(), file.at(name), name, checkpoint);
  }
  return net;
}

std::vector<AblationResult> run_ablation_grid(const TrainConfig& base, const std::vector<int>& rows,
                                              const std::vector<Sample>& train_data,
                                              const std::vector<Sample>& eval_data,
                                              std::ostream* log) {
  if (rows.empty()) throw ConfigError("ablation grid has no rows");
  std::vector<AblationResult> results;
  for (int row : rows) {
    AblationResult r;
    r.row = row;
    r.toggles = ablation_row(row);
    TrainConfig cfg = base;
    cfg.network = apply_ablation(base.network, r.toggles);
    Trainer trainer(cfg, train_data);
    r.parameter_count = trainer.network().parameter_count();
    trainer.run(cfg.max_steps);
    r.report = evaluate_corpus(NetworkRestorer(trainer.network()), eval_data);
    if (log != nullptr) {
      *log << "row " << row << ": " << r.parameter_count << " params, final loss "
           << (trainer.history().empty() ? 0.0 : trainer.history().back().terms.total)
           << ", psnr " << r.report.psnr << "\n";
    }
    results.push_back(std::move(r));
  }
  return results;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationResult>& results) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write '" + path.string() + "'");
  out << "row,n_smr,n_mbe,n_cff,n_skip_stage,psnr,ssim,rmse,rmsew\n" << std::setprecision(17);
  for (const AblationResult& r : results) {
    out << r.row << ',' << r.toggles.n_smr << ',' << r.toggles.n_mbe << ',' << r.toggles.n_cff
        << ',' << r.toggles.n_skip_stage << ',' << r.report.psnr << ',' << r.report.ssim << ','
        << r.report.rmse << ',' << r.report.rmsew << '\n';
  }
}

std::string format_ablation_table(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  os << std::left << std::setw(5) << "row" << std::right << std::setw(6) << "SMR" << std::setw(6)
     << "MBE" << std::setw(6) << "CFF" << std::setw(6) << "Skip" << std::setw(10) << "PSNR"
     << std::setw(9) << "SSIM" << std::setw(9) << "RMSE" << std::setw(9) << "RMSEw" << "\n";
  os << std::fixed;
  for (const AblationResult& r : results) {
    os << std::left << std::setw(5) << r.row << std::right << std::setw(6) << r.toggles.n_smr
       << std::setw(6) << r.toggles.n_mbe << std::setw(6) << r.toggles.n_cff << std::setw(6)
       << r.toggles.n_skip_stage << std::setprecision(2) << std::setw(10) << r.report.psnr
       << std::setprecision(4) << std::setw(9) << r.report.ssim << std::setprecision(2)
       << std::setw(9) << r.report.rmse << std::setw(9) << r.report.rmsew;
    if (r.toggles.refine_fusion == RefineFusion::decoder) os << "  (decoder fusion)";
    if (!r.toggles.refine_stage) os << "  (coarse only)";
    os << "\n";
  }
  return os.str();
}

}  // namespace slbr
