#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "bwn/error.hpp"
#include "bwn/log.hpp"
#include "bwn/metrics.hpp"
#include "bwn/model_io.hpp"
#include "bwn/network.hpp"
#include "bwn/rng.hpp"
#include "bwn/synth.hpp"
#include "bwn/training.hpp"
#include "bwn/verify.hpp"
#include "run_config.hpp"

namespace bwn {

namespace {

namespace fs = std::filesystem;

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// Writes every line to the console and to the run log.
class RunLog {
 public:
  RunLog(std::ostream& console, const fs::path& path) : console_(console), file_(path) {
    if (!file_) throw Error(Errc::io, "cannot create " + path.string());
  }
  void line(const std::string& text) {
    console_ << text << '\n';
    file_ << text << '\n';
    file_.flush();
  }
  void block(const std::string& text) {
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) line(l);
  }

 private:
  std::ostream& console_;
  std::ofstream file_;
};

double binary_accuracy(const Model& model, const Dataset& data) {
  constexpr std::size_t kBatch = 64;
  const Shape4 s = shape4(data.inputs);
  const std::size_t sample = s.channels * s.height * s.width;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += kBatch) {
    const std::size_t count = std::min(kBatch, data.size() - start);
    Tensor batch({count, s.channels, s.height, s.width});
    std::copy_n(data.inputs.data().begin() + static_cast<std::ptrdiff_t>(start * sample),
                count * sample, batch.data().begin());
    const NetworkOutput<float> out = forward_network(model, batch, ForwardMode::binary);
    const std::span<const std::size_t> labels(data.labels.data() + start, count);
    correct += static_cast<std::size_t>(
        std::lround(classification_accuracy(out.logits, labels) * static_cast<double>(count)));
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

int cmd_train(const fs::path& config_path, const std::optional<fs::path>& out_override,
              const std::optional<std::uint64_t>& seed_override, std::ostream& out) {
  RunConfig cfg = load_config(config_path);
  if (out_override) cfg.out_dir = *out_override;
  if (seed_override) cfg.seed = *seed_override;
  cfg.validate();
  const NetworkSpec spec = cfg.network_spec();

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream resolved(cfg.out_dir / "resolved.cfg");
    resolved << cfg.to_text();
    if (!resolved) throw Error(Errc::io, "cannot write resolved config");
  }
  RunLog log(out, cfg.out_dir / "train.log");

  SyntheticSpeakerConfig data_cfg = cfg.data;
  data_cfg.seed = derive_seed(cfg.seed, "data");
  const SyntheticDataset ds = generate_dataset(data_cfg);
  save_utterances(cfg.out_dir / "data", ds.utterances);
  write_trials(cfg.out_dir / "trials.txt", ds.trials);
  const Dataset train_set = ds.utterances.training_set();

  const SizeReport sizes = size_report(spec);
  log.line("# " + std::to_string(spec.layers.size()) + " frontend layers, " +
           std::to_string(sizes.binarized_params + sizes.float_only_params) + " parameters (" +
           std::to_string(sizes.binarized_params) + " binarized), activation " +
           std::string(activation_name(cfg.network.activation)) + ", gradient rule " +
           std::string(gradient_rule_name(cfg.train.gradient_rule)));
  log.line("# " + std::to_string(train_set.size()) + " training utterances, " +
           std::to_string(ds.trials.size()) + " held-out trials");

  Model model = init_model(spec, cfg.seed);
  TrainState state = make_train_state(model, cfg.train, cfg.seed);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
    const EpochMetrics m = train_epoch(state, spec, train_set, cfg.train);
    if (!std::isfinite(m.loss)) throw Error(Errc::numeric, "non-finite epoch loss");
    log.line("epoch=" + std::to_string(m.epoch) + " lr=" + shortest(m.learning_rate) +
             " loss=" + fixed(m.loss, 6) + " accuracy=" + fixed(m.accuracy, 4));
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const Model trained = trained_model(spec, state);
  save_model(cfg.out_dir / "checkpoint.bwn", trained, Encoding::float32);
  save_model(cfg.out_dir / "model.bwn", trained, Encoding::packed);

  const EvalReport report = evaluate(trained, ds.trials, ds.utterances.store, cfg.dcf);
  log.line("train_seconds=" + fixed(seconds, 1));
  log.line("train_accuracy_binary=" + fixed(binary_accuracy(trained, train_set), 4));
  log.block(format_report_kv(report));
  out << format_report_text(report);
  return kExitOk;
}

int cmd_eval(const fs::path& model_path, const fs::path& trials_path, const fs::path& data_path,
             const DcfParams& dcf, std::ostream& out) {
  try {
    dcf.validate();
  } catch (const Error& e) {
    throw Error(Errc::config, e.what());
  }
  const Model model = load_model(model_path);
  const std::vector<Trial> trials = read_trials(trials_path);
  const LabeledUtterances data = load_utterances(data_path);
  const EvalReport report = evaluate(model, trials, data.store, dcf);
  out << format_report_text(report) << format_report_kv(report);
  return kExitOk;
}

int cmd_compress(const fs::path& checkpoint, const fs::path& out_path, std::ostream& out) {
  Model model = load_model(checkpoint);
  if (is_packed(model)) {
    throw Error(Errc::config, checkpoint.string() + " is already packed; compress expects a "
                                                    "float32 checkpoint");
  }
  binarize_model(model);
  save_model(out_path, model, Encoding::packed);
  const SizeReport report = size_report(model.spec);
  if (report.binarized_params == 0) {
    warn("model has no binarizable layers; the packed file is not smaller");
  }
  out << format_size_report(report);
  out << "wrote " << out_path.string() << '\n';
  return kExitOk;
}

int cmd_inspect(const fs::path& model_path, std::ostream& out) {
  const std::vector<std::uint8_t> bytes = read_file(model_path);
  const Model model = parse_model(bytes);
  out << describe_model_file(bytes);
  out << "frontend layers: " << model.spec.layers.size()
      << (is_packed(model) ? ", packed" : ", float32 checkpoint") << '\n';
  return kExitOk;
}

int cmd_verify(const std::string& scope, std::ostream& out) {
  const std::vector<verify::SuiteResult> results = verify::run_scope(scope);
  std::size_t passed = 0;
  for (const auto& r : results) {
    verify::print(out, r);
    passed += r.passed() ? 1 : 0;
  }
  out << "verify " << scope << ": " << passed << "/" << results.size() << " suites passed\n";
  return passed == results.size() ? kExitOk : kExitFailure;
}

int exit_code_for(const Error& e) {
  if (e.is_format_error()) return kExitFormat;
  if (e.code() == Errc::numeric || e.code() == Errc::non_finite) return kExitNumeric;
  return kExitConfig;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Binary-weight speaker embedding toolkit", "bwn"};
  app.require_subcommand(1);

  fs::path config_path, model_path, trials_path, data_path, out_path;
  std::optional<fs::path> out_override;
  std::optional<std::uint64_t> seed_override;
  DcfParams dcf;
  std::string scope = "all";

  CLI::App* train = app.add_subcommand("train", "Train on a synthetic speaker dataset");
  train->add_option("--config", config_path, "Run configuration file")->required();
  train->add_option("--out", out_override, "Output directory (overrides out_dir)");
  train->add_option("--seed", seed_override, "Seed (overrides the config)");

  CLI::App* eval = app.add_subcommand("eval", "Score a trial list and report EER/minDCF");
  eval->add_option("--model", model_path, "Model file")->required();
  eval->add_option("--trials", trials_path, "Trial list")->required();
  eval->add_option("--data", data_path, "Utterance directory")->required();
  eval->add_option("--p-target", dcf.p_target, "Target prior for minDCF");
  eval->add_option("--c-miss", dcf.c_miss, "Miss cost for minDCF");
  eval->add_option("--c-fa", dcf.c_fa, "False-alarm cost for minDCF");

  CLI::App* compress = app.add_subcommand("compress", "Pack a float32 checkpoint");
  compress->add_option("--model", model_path, "Float32 checkpoint")->required();
  compress->add_option("--out", out_path, "Packed model path")->required();

  CLI::App* inspect = app.add_subcommand("inspect", "Describe a model file");
  inspect->add_option("--model", model_path, "Model file")->required();

  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the self-verification suites");
  verify_cmd->add_option("scope", scope,
                         "binarize-oracle, conv-equivalence, gradcheck, metrics-oracle, "
                         "storage, optimizer or all");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_override, seed_override, out);
    if (eval->parsed()) return cmd_eval(model_path, trials_path, data_path, dcf, out);
    if (compress->parsed()) return cmd_compress(model_path, out_path, out);
    if (inspect->parsed()) return cmd_inspect(model_path, out);
    if (verify_cmd->parsed()) return cmd_verify(scope, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace bwn
