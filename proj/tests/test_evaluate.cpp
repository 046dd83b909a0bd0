#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "basen/evaluate.hpp"
#include "basen/training.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

using namespace basen;
namespace fs = std::filesystem;

namespace {

Dataset tiny_dataset(int n, uint64_t seed) {
  SynthConfig sc;
  sc.n_examples = n;
  sc.seed = seed;
  sc.seg_len_s = 1.0;
  return generate_dataset(sc);
}

ModelConfig micro_model() {
  ModelConfig mc;
  mc.embed_dim = 8;
  mc.attention_heads = 2;
  mc.eeg_tcn_layers = 2;
  mc.cmca_layers = 1;
  mc.separator_blocks = 2;
  mc.separator_repeats = 1;
  mc.tcn_hidden = 12;
  return mc;
}

Checkpoint micro_checkpoint(int q) {
  const ModelConfig mc = micro_model();
  BasenModel<float> model(mc, q);
  return checkpoint_from_store(model.params(), model_config_to_json(mc, q, "basen"));
}

}  // namespace

TEST_CASE("aggregate: order statistics are consistent") {
  const Aggregates a = aggregate({5.0, 1.0, 3.0, 2.0, 4.0});
  CHECK(a.min == 1.0);
  CHECK(a.max == 5.0);
  CHECK(a.median == 3.0);
  CHECK(a.mean == 3.0);
  CHECK(a.min <= a.q1);
  CHECK(a.q1 <= a.median);
  CHECK(a.median <= a.q3);
  CHECK(a.q3 <= a.max);
}

TEST_CASE("evaluate_with: target passthrough stub clamps SI-SDRi high") {
  const Dataset ds = tiny_dataset(4, 21);
  const EvalSummary summary =
      evaluate_with([](const MixtureExample& ex) { return ex.target; }, ds);
  for (const auto& pe : summary.examples) CHECK(pe.si_sdri > 100.0);
}

TEST_CASE("evaluate: full-channel subset is identical to no subset") {
  const Dataset ds = tiny_dataset(3, 22);
  const Checkpoint ckpt = micro_checkpoint(16);
  ChannelSubset all;
  all.method = "convrs";
  for (int c = 0; c < 16; ++c) all.indices.push_back(c);
  const EvalSummary without = evaluate(ckpt, ds);
  const EvalSummary with = evaluate(ckpt, ds, all);
  REQUIRE(without.examples.size() == with.examples.size());
  for (size_t i = 0; i < with.examples.size(); ++i)
    CHECK(std::abs(with.examples[i].si_sdr - without.examples[i].si_sdr) < 1e-9);
}

TEST_CASE("evaluate: out-of-range subset index errors") {
  const Dataset ds = tiny_dataset(1, 23);
  const Checkpoint ckpt = micro_checkpoint(16);
  ChannelSubset bad;
  bad.indices = {99};
  CHECK_THROWS_AS(evaluate(ckpt, ds, bad), std::invalid_argument);
}

TEST_CASE("evaluate is order-invariant per example") {
  const Dataset ds = tiny_dataset(5, 24);
  const Checkpoint ckpt = micro_checkpoint(16);
  Dataset shuffled = ds;
  std::swap(shuffled[0], shuffled[4]);
  std::swap(shuffled[1], shuffled[3]);
  const EvalSummary a = evaluate(ckpt, ds);
  const EvalSummary b = evaluate(ckpt, shuffled);
  for (const auto& pa : a.examples) {
    bool found = false;
    for (const auto& pb : b.examples) {
      if (pb.example_id == pa.example_id) {
        CHECK(pb.si_sdr == pa.si_sdr);
        CHECK(pb.si_sdri == pa.si_sdri);
        found = true;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("evaluate: SI-SDRi definition holds per example") {
  const Dataset ds = tiny_dataset(3, 25);
  const Checkpoint ckpt = micro_checkpoint(16);
  const EvalSummary s = evaluate(ckpt, ds);
  for (const auto& pe : s.examples)
    CHECK(std::abs(pe.si_sdri - (pe.si_sdr - pe.si_sdr_mixture)) < 1e-12);
}

TEST_CASE("external metric adapter slot is invoked") {
  const Dataset ds = tiny_dataset(2, 26);
  const EvalSummary s = evaluate_with(
      [](const MixtureExample& ex) { return ex.mixture; }, ds,
      {{"stub_metric", [](const ArrF& est, const ArrF& ref, double) {
          return static_cast<double>(est.size() + ref.size());
        }}});
  for (const auto& pe : s.examples) CHECK(pe.extra.at("stub_metric") > 0.0);
}

TEST_CASE("duplicate_report partitions by multiplicity") {
  ChannelSubset s;
  s.indices = {3, 7, 3};
  const DuplicateReport r = duplicate_report(s);
  CHECK(r.unique == std::vector<int>{7});
  CHECK(r.duplicated == std::vector<int>{3});

  ChannelSubset distinct;
  distinct.indices = {1, 2, 5};
  CHECK(duplicate_report(distinct).duplicated.empty());

  ChannelSubset empty;
  const DuplicateReport re = duplicate_report(empty);
  CHECK(re.unique.empty());
  CHECK(re.duplicated.empty());
}

TEST_CASE("synthetic grid layout covers all channels inside the unit square") {
  const ChannelLayout layout = synthetic_grid_layout(16);
  REQUIRE(layout.size() == 16);
  for (const auto& p : layout) {
    CHECK(p.x >= -1.0);
    CHECK(p.x <= 1.0);
    CHECK(p.y >= -1.0);
    CHECK(p.y <= 1.0);
  }
}

TEST_CASE("render_channel_map: sidecar classes match the subset") {
  const ChannelLayout layout = synthetic_grid_layout(16);
  ChannelSubset subset;
  subset.method = "resgs";
  subset.gamma_or_k = 4;
  subset.indices = {1, 5, 9, 13, 5};  // 5 duplicated
  subset.duplicate_count = 1;
  const std::string path = (fs::temp_directory_path() / "basen_map_test.svg").string();
  render_channel_map(subset, layout, path);

  std::ifstream side(path + ".json");
  REQUIRE(side.good());
  nlohmann::json j;
  side >> j;
  int unique_n = 0, dup_n = 0, hollow_n = 0;
  for (const auto& ch : j.at("channels")) {
    const std::string cls = ch.at("class").get<std::string>();
    const int idx = ch.at("index").get<int>();
    if (cls == "unique") {
      ++unique_n;
      CHECK((idx == 1 || idx == 9 || idx == 13));
    } else if (cls == "duplicated") {
      ++dup_n;
      CHECK(idx == 5);
    } else {
      ++hollow_n;
    }
  }
  CHECK(unique_n == 3);
  CHECK(dup_n == 1);
  CHECK(hollow_n == 12);

  std::ifstream svg(path);
  std::string content((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
  CHECK(content.find("<svg") != std::string::npos);
  fs::remove(path);
  fs::remove(path + ".json");
}

TEST_CASE("render_channel_map: empty subset renders all hollow") {
  const ChannelLayout layout = synthetic_grid_layout(4);
  ChannelSubset empty;
  empty.method = "convrs";
  const std::string path = (fs::temp_directory_path() / "basen_map_empty.svg").string();
  render_channel_map(empty, layout, path);
  std::ifstream side(path + ".json");
  nlohmann::json j;
  side >> j;
  for (const auto& ch : j.at("channels")) CHECK(ch.at("class").get<std::string>() == "unselected");
  fs::remove(path);
  fs::remove(path + ".json");
}

TEST_CASE("render_channel_map: missing coordinates error") {
  const ChannelLayout layout = synthetic_grid_layout(4);
  ChannelSubset subset;
  subset.indices = {7};
  CHECK_THROWS_AS(
      render_channel_map(subset, layout, (fs::temp_directory_path() / "x.svg").string()),
      std::invalid_argument);
}

TEST_CASE("layout CSV round trip") {
  const std::string path = (fs::temp_directory_path() / "basen_layout.csv").string();
  {
    std::ofstream out(path);
    out << "channel_index,label,x,y\n0,Fz,0.0,0.8\n1,Cz,0.0,0.0\n2,Pz,0.0,-0.8\n";
  }
  const ChannelLayout layout = load_layout_csv(path);
  REQUIRE(layout.size() == 3);
  CHECK(layout[0].label == "Fz");
  CHECK(layout[2].y == -0.8);
  fs::remove(path);

  {
    std::ofstream out(path);
    out << "0,Fz,3.0,0.0\n";
  }
  CHECK_THROWS_AS(load_layout_csv(path), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("eval summary JSON carries aggregates and per-subject breakdown") {
  const Dataset ds = tiny_dataset(4, 27);
  const EvalSummary s = evaluate_with([](const MixtureExample& ex) { return ex.mixture; }, ds);
  const std::string text = eval_summary_to_json(s);
  const nlohmann::json j = nlohmann::json::parse(text);
  CHECK(j.contains("si_sdr"));
  CHECK(j.contains("si_sdri"));
  CHECK(j.contains("per_subject_si_sdri"));
  CHECK(j.at("examples").size() == 4);
  // mixture as estimate: improvement is identically 0
  CHECK(std::abs(j.at("si_sdri").at("mean").get<double>()) < 1e-9);
}
