#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "bwn/error.hpp"

namespace bwn {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw Error(Errc::config, "'" + std::string(v) + "' is not a valid number");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::size_t> parse_list(std::string_view v, char sep) {
  std::vector<std::size_t> out;
  while (true) {
    const auto pos = v.find(sep);
    out.push_back(parse_number<std::size_t>(trim(v.substr(0, pos))));
    if (pos == std::string_view::npos) break;
    v.remove_prefix(pos + 1);
  }
  return out;
}

std::string join(const std::vector<std::size_t>& xs, char sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(xs[i]);
  }
  return out;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(Errc::config, "'" + std::string(v) + "' is not true or false");
}

struct Key {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Key size_key(T RunConfig::*group, std::size_t T::*field) {
  return {[=](RunConfig& c, std::string_view v) { c.*group.*field = parse_number<std::size_t>(v); },
          [=](const RunConfig& c) { return std::to_string(c.*group.*field); }};
}

template <typename T>
Key double_key(T RunConfig::*group, double T::*field) {
  return {[=](RunConfig& c, std::string_view v) { c.*group.*field = parse_number<double>(v); },
          [=](const RunConfig& c) { return format_double(c.*group.*field); }};
}

// Ordered as written to resolved.cfg.
const std::vector<std::pair<std::string, Key>>& keys() {
  static const std::vector<std::pair<std::string, Key>> table = {
      {"seed",
       {[](RunConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>(v); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"out_dir",
       {[](RunConfig& c, std::string_view v) {
          if (v.empty()) throw Error(Errc::config, "out_dir is empty");
          c.out_dir = std::string(v);
        },
        [](const RunConfig& c) { return c.out_dir.string(); }}},
      // network
      {"depth", size_key(&RunConfig::network, &MicroResNetOptions::depth_blocks)},
      {"channels",
       {[](RunConfig& c, std::string_view v) { c.network.channels = parse_list(v, ','); },
        [](const RunConfig& c) { return join(c.network.channels, ','); }}},
      {"embedding_dim", size_key(&RunConfig::network, &MicroResNetOptions::embedding_dim)},
      {"activation",
       {[](RunConfig& c, std::string_view v) {
          if (v == "relu") {
            c.network.activation = Activation::relu;
          } else if (v == "prelu") {
            c.network.activation = Activation::prelu;
          } else {
            throw Error(Errc::config, "activation must be relu or prelu, got '" + std::string(v) + "'");
          }
        },
        [](const RunConfig& c) { return std::string(activation_name(c.network.activation)); }}},
      {"prelu_slope",
       {[](RunConfig& c, std::string_view v) {
          c.network.prelu_slope = static_cast<float>(parse_number<double>(v));
        },
        [](const RunConfig& c) { return format_double(c.network.prelu_slope); }}},
      // training
      {"lr0", double_key(&RunConfig::train, &TrainConfig::lr0)},
      {"momentum", double_key(&RunConfig::train, &TrainConfig::momentum)},
      {"decay_factor", double_key(&RunConfig::train, &TrainConfig::decay_factor)},
      {"decay_every", size_key(&RunConfig::train, &TrainConfig::decay_every)},
      {"batch_size", size_key(&RunConfig::train, &TrainConfig::batch_size)},
      {"epochs", size_key(&RunConfig::train, &TrainConfig::epochs)},
      {"clip_threshold", double_key(&RunConfig::train, &TrainConfig::clip_threshold)},
      {"gradient_rule",
       {[](RunConfig& c, std::string_view v) {
          if (v == "scaled_ste") {
            c.train.gradient_rule = GradientRule::scaled_ste;
          } else if (v == "pass_through") {
            c.train.gradient_rule = GradientRule::pass_through;
          } else {
            throw Error(Errc::config,
                        "gradient_rule must be scaled_ste or pass_through, got '" + std::string(v) + "'");
          }
        },
        [](const RunConfig& c) { return std::string(gradient_rule_name(c.train.gradient_rule)); }}},
      {"clip_shadow",
       {[](RunConfig& c, std::string_view v) { c.train.clip_shadow = parse_bool(v); },
        [](const RunConfig& c) { return std::string(c.train.clip_shadow ? "true" : "false"); }}},
      // synthetic data
      {"num_speakers", size_key(&RunConfig::data, &SyntheticSpeakerConfig::num_speakers)},
      {"utterances_per_speaker",
       size_key(&RunConfig::data, &SyntheticSpeakerConfig::utterances_per_speaker)},
      {"feature_shape",
       {[](RunConfig& c, std::string_view v) { c.data.feature_shape = parse_list(v, 'x'); },
        [](const RunConfig& c) { return join(c.data.feature_shape, 'x'); }}},
      {"sigma_within", double_key(&RunConfig::data, &SyntheticSpeakerConfig::sigma_within)},
      {"separation", double_key(&RunConfig::data, &SyntheticSpeakerConfig::separation)},
      {"max_shift", size_key(&RunConfig::data, &SyntheticSpeakerConfig::max_shift)},
      {"smoothing", size_key(&RunConfig::data, &SyntheticSpeakerConfig::smoothing)},
      // evaluation
      {"p_target", double_key(&RunConfig::dcf, &DcfParams::p_target)},
      {"c_miss", double_key(&RunConfig::dcf, &DcfParams::c_miss)},
      {"c_fa", double_key(&RunConfig::dcf, &DcfParams::c_fa)},
  };
  return table;
}

}  // namespace

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + " = " + key.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  train.validate();
  data.validate();
  try {
    dcf.validate();
  } catch (const Error& e) {
    throw Error(Errc::config, e.what());
  }
  network_spec();
}

NetworkSpec RunConfig::network_spec() const {
  MicroResNetOptions opts = network;
  opts.input_shape = data.feature_shape;
  opts.num_classes = data.num_speakers;
  return build_micro_resnet(opts);
}

RunConfig parse_config(std::string_view text) {
  std::map<std::string_view, const Key*> lookup;
  for (const auto& [name, key] : keys()) lookup.emplace(name, &key);

  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  for (std::size_t lineno = 1; std::getline(in, raw); ++lineno) {
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(Errc::config, where + "expected key = value");
    const std::string_view name = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = lookup.find(name);
    if (it == lookup.end()) throw Error(Errc::config, where + "unknown key '" + std::string(name) + "'");
    if (!seen.insert(std::string(name)).second) {
      throw Error(Errc::config, where + "duplicate key '" + std::string(name) + "'");
    }
    try {
      it->second->set(config, value);
    } catch (const Error& e) {
      throw Error(Errc::config, where + std::string(name) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const Error& e) {
    throw Error(Errc::config, path.string() + ": " + e.what());
  }
}

}  // namespace bwn
