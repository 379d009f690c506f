#include "slbr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "slbr/errors.hpp"

namespace slbr {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + key + "': cannot parse '" + v + "' as a number");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "': cannot parse '" + v + "' as a real number");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("'" + key + "': expected true/false, got '" + v + "'");
}

std::vector<int> parse_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ConfigError("'" + key + "': empty list");
  return out;
}

template <std::size_t N>
std::array<int, N> parse_fixed(const std::string& key, const std::string& v) {
  const std::vector<int> xs = parse_ints(key, v);
  if (xs.size() != N) {
    throw ConfigError("'" + key + "': expected " + std::to_string(N) + " values, got " +
                      std::to_string(xs.size()));
  }
  std::array<int, N> out{};
  std::copy(xs.begin(), xs.end(), out.begin());
  return out;
}

using Setter = std::function<void(AppConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto real = [&t](const std::string& k, auto field) {
      t[k] = [field](AppConfig& c, const std::string& key, const std::string& v) {
        field(c) = parse_real(key, v);
      };
    };
    auto integer = [&t](const std::string& k, auto field) {
      t[k] = [field](AppConfig& c, const std::string& key, const std::string& v) {
        field(c) = parse_number<std::remove_reference_t<decltype(field(c))>>(key, v);
      };
    };
    auto path = [&t](const std::string& k, auto field) {
      t[k] = [field](AppConfig& c, const std::string&, const std::string& v) { field(c) = v; };
    };

    path("synth.backgrounds", [](AppConfig& c) -> auto& { return c.backgrounds_dir; });
    path("synth.watermarks", [](AppConfig& c) -> auto& { return c.watermarks_dir; });
    real("synth.alpha_min", [](AppConfig& c) -> auto& { return c.synth.alpha_min; });
    real("synth.alpha_max", [](AppConfig& c) -> auto& { return c.synth.alpha_max; });
    real("synth.size_min", [](AppConfig& c) -> auto& { return c.synth.size_min; });
    real("synth.size_max", [](AppConfig& c) -> auto& { return c.synth.size_max; });
    real("synth.max_rotation_deg", [](AppConfig& c) -> auto& { return c.synth.max_rotation_deg; });
    integer("synth.image_size", [](AppConfig& c) -> auto& { return c.synth.image_size; });
    integer("synth.count", [](AppConfig& c) -> auto& { return c.synth.count; });
    integer("synth.seed", [](AppConfig& c) -> auto& { return c.synth.seed; });

    path("data.path", [](AppConfig& c) -> auto& { return c.data_path; });
    path("data.eval_path", [](AppConfig& c) -> auto& { return c.eval_data_path; });

    real("train.lr", [](AppConfig& c) -> auto& { return c.train.lr; });
    integer("train.batch_size", [](AppConfig& c) -> auto& { return c.train.batch_size; });
    real("train.beta1", [](AppConfig& c) -> auto& { return c.train.beta1; });
    real("train.beta2", [](AppConfig& c) -> auto& { return c.train.beta2; });
    real("train.adam_eps", [](AppConfig& c) -> auto& { return c.train.adam_eps; });
    integer("train.image_size", [](AppConfig& c) -> auto& { return c.train.image_size; });
    integer("train.max_steps", [](AppConfig& c) -> auto& { return c.train.max_steps; });
    integer("train.seed", [](AppConfig& c) -> auto& { return c.train.seed; });
    real("train.clip_grad_norm", [](AppConfig& c) -> auto& { return c.train.clip_grad_norm; });
    integer("train.lr_decay_every", [](AppConfig& c) -> auto& { return c.train.lr_decay_every; });
    real("train.lr_decay_factor", [](AppConfig& c) -> auto& { return c.train.lr_decay_factor; });
    integer("train.checkpoint_every", [](AppConfig& c) -> auto& { return c.checkpoint_every; });
    integer("train.log_every", [](AppConfig& c) -> auto& { return c.log_every; });
    path("train.resume", [](AppConfig& c) -> auto& { return c.resume_from; });

    real("loss.lambda_vgg", [](AppConfig& c) -> auto& { return c.train.weights.lambda_vgg; });
    real("loss.lambda_mask", [](AppConfig& c) -> auto& { return c.train.weights.lambda_mask; });
    integer("loss.extractor_seed", [](AppConfig& c) -> auto& { return c.train.extractor_seed; });
    t["loss.extractor_weights"] = [](AppConfig& c, const std::string&, const std::string& v) {
      c.train.extractor_weights = v;
    };

    t["network.preset"] = [](AppConfig&, const std::string&, const std::string&) {};
    t["network.encoder_channels"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.train.network.encoder_channels = parse_fixed<5>(k, v);
    };
    t["network.refine_channels"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.train.network.refine_channels = parse_fixed<3>(k, v);
    };
    integer("network.n_cff", [](AppConfig& c) -> auto& { return c.train.network.n_cff; });
    integer("network.n_smr", [](AppConfig& c) -> auto& { return c.train.network.n_smr; });
    integer("network.n_mbe", [](AppConfig& c) -> auto& { return c.train.network.n_mbe; });
    integer("network.n_skip_stage", [](AppConfig& c) -> auto& { return c.train.network.n_skip_stage; });
    integer("network.residual_depth",
            [](AppConfig& c) -> auto& { return c.train.network.residual_depth; });
    integer("network.norm_groups", [](AppConfig& c) -> auto& { return c.train.network.norm_groups; });
    t["network.refine_stage"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.train.network.refine_stage = parse_bool(k, v);
    };
    t["network.refine_fusion"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      if (v == "cff") {
        c.train.network.refine_fusion = RefineFusion::cff;
      } else if (v == "decoder") {
        c.train.network.refine_fusion = RefineFusion::decoder;
      } else {
        throw ConfigError("'" + k + "': expected cff or decoder, got '" + v + "'");
      }
    };

    path("eval.checkpoint", [](AppConfig& c) -> auto& { return c.checkpoint; });
    t["eval.model"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      if (v != "network" && v != "identity") {
        throw ConfigError("'" + k + "': expected network or identity, got '" + v + "'");
      }
      c.eval_model = v;
    };
    path("infer.input", [](AppConfig& c) -> auto& { return c.infer_input; });
    t["ablate.rows"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.ablate_rows = parse_ints(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

Setting parse_setting(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
  Setting s{trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
  if (s.first.empty()) throw ConfigError("empty key in '" + text + "'");
  return s;
}

std::vector<Setting> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read config file '" + path.string() + "'");
  std::vector<Setting> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      out.push_back(parse_setting(t));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

AppConfig build_config(const std::vector<Setting>& settings) {
  AppConfig c;
  c.synth.image_size = 64;
  c.train.image_size = 64;
  c.train.batch_size = 4;
  c.train.network = NetworkConfig::toy();
  for (const auto& [key, value] : settings) {
    if (key != "network.preset") continue;
    if (value == "toy") {
      c.train.network = NetworkConfig::toy();
    } else if (value == "default") {
      c.train.network = NetworkConfig::defaults();
    } else {
      throw ConfigError("'network.preset': expected toy or default, got '" + value + "'");
    }
  }
  const auto& table = setters();
  for (const auto& [key, value] : settings) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(c, key, value);
  }
  if (c.eval_data_path.empty()) c.eval_data_path = c.data_path;
  return c;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

}  // namespace slbr
