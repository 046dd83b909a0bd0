// Drives the installed CLI binary end-to-end; the binary path arrives as the
// first program argument (wired up by CTest).
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <json.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

static std::string g_cli;
static fs::path g_work;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.exit_code = WEXITSTATUS(status);
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_micro_config(const fs::path& path) {
  // a configuration small enough for a CI-speed pipeline round trip
  std::ofstream out(path);
  out << R"({
  "seed": 7,
  "synth": {"q_channels": 8, "informative_channels": [1, 5], "n_examples": 20,
             "seg_len_s": 1.0, "fs_audio": 1000.0},
  "preprocess": {"seg_len_s": 0.5, "hop_s": 0.5},
  "model": {"embed_dim": 8, "attention_heads": 2, "eeg_tcn_layers": 2, "cmca_layers": 1,
             "separator_blocks": 2, "separator_repeats": 1, "tcn_hidden": 12},
  "schedule": {"max_lr": 0.002, "total_epochs": 2, "batch_size": 4},
  "train": {"val_fraction": 0.2, "test_fraction": 0.2,
             "gamma_list": [0.0, 0.1],
             "convrs_gamma0_epochs": 2, "convrs_stage1_epochs": 1, "convrs_stage2_epochs": 1}
})";
}

}  // namespace

TEST_CASE("cli: synth -> preprocess -> train basen -> eval -> report round trip") {
  const fs::path cfg = g_work / "config.json";
  write_micro_config(cfg);
  const fs::path raw = g_work / "raw";
  const fs::path prep = g_work / "prep";
  const fs::path run = g_work / "run_basen";

  auto synth = run_cli("synth --config " + cfg.string() + " --out " + raw.string());
  INFO(synth.output);
  CHECK(synth.exit_code == 0);
  CHECK(fs::exists(raw / "ex000000" / "audio_mix.f32"));
  CHECK(fs::exists(raw / "ex000000" / "meta.json"));
  CHECK(fs::exists(raw / "corpus_report.json"));

  auto prep_r = run_cli("preprocess --config " + cfg.string() + " --in " + raw.string() +
                        " --out " + prep.string());
  INFO(prep_r.output);
  CHECK(prep_r.exit_code == 0);
  CHECK(fs::exists(prep / "ex000000_s000" / "eeg.f32"));
  {
    nlohmann::json meta;
    std::ifstream mf(prep / "ex000000_s000" / "meta.json");
    mf >> meta;
    CHECK(meta.at("stage").get<std::string>() == "mua");
  }

  auto train = run_cli("train --config " + cfg.string() + " --method basen --dataset " +
                       raw.string() + " --run-dir " + run.string());
  INFO(train.output);
  CHECK(train.exit_code == 0);
  CHECK(fs::exists(run / "config.json"));
  CHECK(fs::exists(run / "metrics.jsonl"));
  CHECK(fs::exists(run / "basen_final.ckpt"));

  // metric log lines carry the documented schema
  {
    std::ifstream log(run / "metrics.jsonl");
    std::string line;
    REQUIRE(std::getline(log, line));
    const nlohmann::json j = nlohmann::json::parse(line);
    for (const char* key : {"step", "si_sdr_db", "l_d", "l_reg", "total", "lr", "tau"})
      CHECK(j.contains(key));
  }

  const fs::path eval_out = g_work / "eval.json";
  auto eval = run_cli("eval --ckpt " + (run / "basen_final.ckpt").string() + " --dataset " +
                      raw.string() + " --out " + eval_out.string());
  INFO(eval.output);
  CHECK(eval.exit_code == 0);
  const nlohmann::json summary = nlohmann::json::parse(read_file(eval_out));
  CHECK(summary.contains("si_sdri"));
  CHECK(summary.at("examples").size() == 20);
}

TEST_CASE("cli: unknown config keys are rejected, naming every offender") {
  const fs::path cfg = g_work / "bad_config.json";
  {
    std::ofstream out(cfg);
    out << R"({"synth": {"n_examples": 4, "bogus_key": 1}, "mystery_section": {}})";
  }
  auto r = run_cli("synth --config " + cfg.string() + " --out " + (g_work / "never").string());
  CHECK(r.exit_code != 0);
  CHECK(r.output.find("synth.bogus_key") != std::string::npos);
  CHECK(r.output.find("mystery_section") != std::string::npos);
  // machine-readable single-line error
  const auto nl = r.output.find('\n');
  const nlohmann::json err = nlohmann::json::parse(r.output.substr(0, nl));
  CHECK(err.contains("error"));
}

TEST_CASE("cli: unsorted gamma list fails validation naming the key") {
  const fs::path cfg = g_work / "gamma_config.json";
  {
    std::ofstream out(cfg);
    out << R"({"train": {"gamma_list": [0.0, 0.2, 0.1]}})";
  }
  auto r = run_cli("train --config " + cfg.string() + " --method convrs --dataset /nonexistent" +
                   " --run-dir " + (g_work / "never2").string());
  CHECK(r.exit_code != 0);
  CHECK(r.output.find("gamma_list") != std::string::npos);
}

TEST_CASE("cli: identical seeds give byte-identical ChannelSubset JSON") {
  const fs::path cfg = g_work / "config.json";
  if (!fs::exists(cfg)) write_micro_config(cfg);
  const fs::path raw = g_work / "raw";
  if (!fs::exists(raw / "ex000000")) {
    REQUIRE(run_cli("synth --config " + cfg.string() + " --out " + raw.string()).exit_code == 0);
  }
  const fs::path run_a = g_work / "run_convrs_a";
  const fs::path run_b = g_work / "run_convrs_b";
  for (const fs::path& run : {run_a, run_b}) {
    auto r = run_cli("train --config " + cfg.string() + " --method convrs --seed 7 --dataset " +
                     raw.string() + " --run-dir " + run.string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
  }
  auto sel_a = run_cli("select --run-dir " + run_a.string());
  auto sel_b = run_cli("select --run-dir " + run_b.string());
  CHECK(sel_a.exit_code == 0);
  CHECK(sel_a.output == sel_b.output);
  CHECK(!sel_a.output.empty());

  // report emits the channel map plus sidecar
  auto rep = run_cli("report --run-dir " + run_a.string());
  CHECK(rep.exit_code == 0);
  CHECK(fs::exists(run_a / "channel_map.svg"));
  CHECK(fs::exists(run_a / "channel_map.svg.json"));
  CHECK(fs::exists(run_a / "duplicate_report.json"));
}

TEST_CASE("cli: --set overrides config file keys") {
  const fs::path cfg = g_work / "config.json";
  if (!fs::exists(cfg)) write_micro_config(cfg);
  const fs::path raw2 = g_work / "raw_override";
  auto r = run_cli("synth --config " + cfg.string() + " --set synth.n_examples=3 --out " +
                   raw2.string());
  CHECK(r.exit_code == 0);
  int count = 0;
  for (const auto& e : fs::directory_iterator(raw2))
    if (e.is_directory()) ++count;
  CHECK(count == 3);
}

int main(int argc, char** argv) {
  if (argc > 1 && argv[1][0] != '-') {
    g_cli = argv[1];
  } else {
    std::fprintf(stderr, "usage: test_cli <path-to-basen-binary>\n");
    return 2;
  }
  g_work = fs::temp_directory_path() / "basen_cli_test";
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  doctest::Context ctx;
  ctx.applyCommandLine(argc - 1, argv + 1);
  const int rc = ctx.run();
  fs::remove_all(g_work);
  return rc;
}
