#include <fstream>
#include <sstream>

#include "bwn/metrics.hpp"
#include "bwn/model_io.hpp"
#include "bwn/network.hpp"
#include "commands.hpp"
#include "helpers.hpp"
#include "run_config.hpp"

using namespace bwn;
using bwn::test::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const char* kTinyConfig =
    "seed = 5\n"
    "depth = 1\n"
    "channels = 4\n"
    "embedding_dim = 16\n"
    "batch_size = 4\n"
    "epochs = 2\n"
    "num_speakers = 3\n"
    "utterances_per_speaker = 6\n"
    "feature_shape = 1x8x8\n"
    "sigma_within = 0.2\n"
    "max_shift = 1\n"
    "smoothing = 1\n";

fs::path write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

// Trains the tiny configuration once per test binary.
const fs::path& trained_run() {
  static TempDir dir("cli_run");
  static bool done = false;
  if (!done) {
    const fs::path cfg = write_text(dir / "tiny.cfg", kTinyConfig);
    const CliResult r = cli({"train", "--config", cfg.string(), "--out", (dir / "out").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    done = true;
  }
  static const fs::path out = dir / "out";
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

}  // namespace

TEST_CASE("run config parsing") {
  const RunConfig c = parse_config("# comment\nseed = 9 # trailing\nchannels = 4, 8\nactivation = prelu\n"
                                   "feature_shape = 1x16x24\nclip_shadow = true\n");
  CHECK(c.seed == 9);
  CHECK(c.network.channels == std::vector<std::size_t>{4, 8});
  CHECK(c.network.activation == Activation::prelu);
  CHECK(c.data.feature_shape == Extents{1, 16, 24});
  CHECK(c.train.clip_shadow);

  const RunConfig again = parse_config(c.to_text());
  CHECK(again.to_text() == c.to_text());

  auto message = [](const std::string& text) {
    try {
      (void)parse_config(text);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::config);
      return std::string(e.what());
    }
    FAIL("expected config error");
    return std::string();
  };
  CHECK(message("seed = 1\nepoch = 3\n").find("line 2") != std::string::npos);
  CHECK(message("epoch = 3\n").find("unknown key 'epoch'") != std::string::npos);
  CHECK(message("seed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
  CHECK(message("lr0 = fast\n").find("lr0") != std::string::npos);
  CHECK(message("just words\n").find("key = value") != std::string::npos);
  CHECK(message("activation = tanh\n").find("relu or prelu") != std::string::npos);
  CHECK(message("clip_shadow = maybe\n").find("true or false") != std::string::npos);
}

TEST_CASE("bundled configs parse and validate") {
  for (const char* name : {"quickstart.cfg", "quickstart_prelu.cfg"}) {
    const RunConfig c = load_config(fs::path(BWN_SOURCE_DIR) / "configs" / name);
    CHECK_NOTHROW(c.validate());
    CHECK(c.data.num_speakers == 10);
    CHECK(c.train.epochs == 30);
    std::size_t blocks = 0;
    for (const LayerSpec& l : c.network_spec().layers) blocks += l.kind == LayerKind::residual_block;
    CHECK(blocks == 4);
  }
}

TEST_CASE("train writes every artifact and metric lines") {
  const fs::path& out = trained_run();
  for (const char* f : {"resolved.cfg", "train.log", "checkpoint.bwn", "model.bwn", "trials.txt",
                        "data/features.bwt", "data/utterances.txt"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }
  std::ifstream log(out / "train.log");
  std::stringstream text;
  text << log.rdbuf();
  const std::vector<std::string> lines = lines_of(text.str());
  std::size_t epochs = 0;
  for (const std::string& l : lines) {
    if (l.rfind("epoch=", 0) != 0) continue;
    CHECK(l.find(" lr=") != std::string::npos);
    CHECK(l.find(" loss=") != std::string::npos);
    CHECK(l.find(" accuracy=") != std::string::npos);
    ++epochs;
  }
  CHECK(epochs == 2);
  CHECK(text.str().find("eer=") != std::string::npos);

  const RunConfig resolved = load_config(out / "resolved.cfg");
  CHECK(resolved.seed == 5);
  CHECK(resolved.out_dir == out);
  CHECK_FALSE(is_packed(load_model(out / "checkpoint.bwn")));
  CHECK(is_packed(load_model(out / "model.bwn")));
}

TEST_CASE("train with zero epochs writes an untrained checkpoint") {
  TempDir dir("cli_zero");
  const fs::path cfg = write_text(dir / "z.cfg", std::string(kTinyConfig) + "");
  std::string text = kTinyConfig;
  text.replace(text.find("epochs = 2"), 10, "epochs = 0");
  write_text(cfg, text);
  const CliResult r = cli({"train", "--config", cfg.string(), "--out", (dir / "o").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("epoch=") == std::string::npos);
  const Model m = load_model(dir / "o" / "checkpoint.bwn");
  const RunConfig c = parse_config(text);
  CHECK(m.weights == init_model(c.network_spec(), c.seed).weights);
}

TEST_CASE("config errors exit with 2") {
  TempDir dir("cli_cfg");
  const fs::path bad = write_text(dir / "bad.cfg", std::string(kTinyConfig) + "learning_rate = 0.1\n");
  const CliResult r = cli({"train", "--config", bad.string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("learning_rate") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "o"));

  CHECK(cli({"train", "--config", (dir / "nope.cfg").string()}).code == 2);
  const fs::path invalid = write_text(dir / "inv.cfg", "batch_size = 0\n");
  CHECK(cli({"train", "--config", invalid.string(), "--out", (dir / "o2").string()}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"train"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"verify", "everything"}).code == 2);
}

TEST_CASE("eval reports metrics and maps failures to exit codes") {
  const fs::path& out = trained_run();
  const std::string trials = (out / "trials.txt").string(), data = (out / "data").string();
  const CliResult r = cli({"eval", "--model", (out / "model.bwn").string(), "--trials", trials, "--data", data,
                           "--p-target", "0.05"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("eer=") != std::string::npos);
  CHECK(r.out.find("p_target=0.05") != std::string::npos);

  TempDir dir("cli_eval");
  std::vector<std::uint8_t> bytes = read_file(out / "model.bwn");
  bytes[bytes.size() / 2] ^= 0xFF;
  write_file_atomic(dir / "corrupt.bwn", bytes);
  const CliResult c = cli({"eval", "--model", (dir / "corrupt.bwn").string(), "--trials", trials, "--data", data});
  CHECK(c.code == 4);
  CHECK(c.err.find("CRC") != std::string::npos);

  write_text(dir / "ghost.txt", "1 spk0_utt4 ghost_utt\n0 spk0_utt4 spk1_utt4\n");
  const CliResult g = cli({"eval", "--model", (out / "model.bwn").string(), "--trials",
                           (dir / "ghost.txt").string(), "--data", data});
  CHECK(g.code == 2);
  CHECK(g.err.find("ghost_utt") != std::string::npos);

  CHECK(cli({"eval", "--model", (out / "model.bwn").string(), "--trials", trials, "--data", data,
             "--p-target", "1.5"}).code == 2);
}

TEST_CASE("compress packs a checkpoint and matches in-memory binarization") {
  const fs::path& out = trained_run();
  TempDir dir("cli_compress");
  const fs::path packed = dir / "packed.bwn";
  const CliResult r = cli({"compress", "--model", (out / "checkpoint.bwn").string(), "--out", packed.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("32") != std::string::npos);
  CHECK(read_file(packed) == read_file(out / "model.bwn"));

  Model in_memory = load_model(out / "checkpoint.bwn");
  binarize_model(in_memory);
  const LabeledUtterances data = load_utterances(out / "data");
  const std::vector<Trial> trials = read_trials(out / "trials.txt");
  const std::string expected = format_report_kv(evaluate(in_memory, trials, data.store));
  const CliResult e = cli({"eval", "--model", packed.string(), "--trials", (out / "trials.txt").string(),
                           "--data", (out / "data").string()});
  CHECK(e.out.find(expected) != std::string::npos);

  const CliResult again = cli({"compress", "--model", packed.string(), "--out", (dir / "x.bwn").string()});
  CHECK(again.code == 2);
  CHECK(again.err.find("already packed") != std::string::npos);
}

TEST_CASE("compress warns when nothing is binarizable") {
  TempDir dir("cli_float");
  NetworkSpec spec;
  spec.input_shape = {1, 4, 4};
  spec.layers = {LayerSpec::float_conv2d(2, 3), LayerSpec::flatten()};
  spec.embedding_dim = 8;
  save_model(dir / "f.bwn", init_model(spec, 1), Encoding::float32);
  const CliResult r = cli({"compress", "--model", (dir / "f.bwn").string(), "--out", (dir / "p.bwn").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("1.00") != std::string::npos);
}

TEST_CASE("inspect") {
  const fs::path& out = trained_run();
  const RunConfig cfg = load_config(out / "resolved.cfg");
  const CliResult p = cli({"inspect", "--model", (out / "model.bwn").string()});
  REQUIRE(p.code == 0);
  CHECK(p.out.find("frontend layers: " + std::to_string(cfg.network_spec().layers.size()) + ", packed") !=
        std::string::npos);
  CHECK(p.out.find("first word 0x") != std::string::npos);

  const CliResult f = cli({"inspect", "--model", (out / "checkpoint.bwn").string()});
  CHECK(f.code == 0);
  CHECK(f.out.find("float32") != std::string::npos);

  TempDir dir("cli_inspect");
  const std::vector<std::uint8_t> bytes = read_file(out / "model.bwn");
  write_file_atomic(dir / "cut.bwn", std::span(bytes).first(bytes.size() / 2));
  const CliResult t = cli({"inspect", "--model", (dir / "cut.bwn").string()});
  CHECK(t.code == 4);
  CHECK(t.err.find("record") != std::string::npos);

  CHECK(cli({"inspect", "--model", (dir / "missing.bwn").string()}).code == 2);
}

TEST_CASE("verify runs a named scope") {
  const CliResult r = cli({"verify", "optimizer"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("train is deterministic") {
  TempDir dir("cli_det");
  const fs::path cfg = write_text(dir / "tiny.cfg", kTinyConfig);
  REQUIRE(cli({"train", "--config", cfg.string(), "--out", (dir / "a").string()}).code == 0);
  REQUIRE(cli({"train", "--config", cfg.string(), "--out", (dir / "b").string()}).code == 0);
  CHECK(read_file(dir / "a" / "model.bwn") == read_file(dir / "b" / "model.bwn"));
  CHECK(read_file(dir / "a" / "checkpoint.bwn") == read_file(dir / "b" / "checkpoint.bwn"));
  const CliResult s = cli({"train", "--config", cfg.string(), "--out", (dir / "c").string(), "--seed", "6"});
  REQUIRE(s.code == 0);
  CHECK(read_file(dir / "a" / "model.bwn") != read_file(dir / "c" / "model.bwn"));
}
