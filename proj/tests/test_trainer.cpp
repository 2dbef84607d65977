#include <filesystem>

#include "doctest.h"
#include "json.hpp"
#include "mtlsar/checkpoint.hpp"
#include "mtlsar/error.hpp"
#include "mtlsar/trainer.hpp"
#include "mtlsar/workflow.hpp"
#include "scratch.hpp"

using namespace mtlsar;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.chip_size = 24;
  spec.groups = {{17.0, VariantKind::base, 0, 4, "train"},
                 {15.0, VariantKind::base, 0, 2, "test"},
                 {30.0, VariantKind::base, 0, 2, "test"}};
  return spec;
}

RunConfig tiny_config() {
  RunConfig c;
  NetworkConfig& n = c.network;
  n.input_h = n.input_w = 16;
  n.num_classes = 3;
  n.encoder_channels = {3, 4, 4};
  n.recognition_channels = 4;
  n.batch_size = 4;
  n.lr = 0.05;
  n.weight_std = 0.1;
  n.epochs = 3;
  n.seed = 17;
  c.crops_per_chip = 2;
  c.overlays = 2;
  return c;
}

std::vector<double> flat_parameters(MtlNetwork& net) {
  std::vector<double> out;
  for (const auto& p : net.parameters()) out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

bool same_summary(const EpochSummary& a, const EpochSummary& b) {
  return a.epoch == b.epoch && a.lr == b.lr && a.loss == b.loss && a.loss_rec == b.loss_rec &&
         a.loss_seg == b.loss_seg && a.train_accuracy == b.train_accuracy &&
         a.train_pixel_accuracy == b.train_pixel_accuracy;
}

}  // namespace

TEST_CASE("prepare_data") {
  const Dataset d = generate_corpus(tiny_spec(), 1);
  SUBCASE("crop counts and sizes") {
    const PreparedData p = prepare_data(d, tiny_config());
    CHECK(p.train.size() == 3 * 4 * 2);
    CHECK(p.test.size() == 3 * 2);
    for (const auto& s : p.train) CHECK(s.image.shape() == Shape{1, 1, 16, 16});
  }
  SUBCASE("class quota") {
    RunConfig c = tiny_config();
    c.class_quota = 11;
    CHECK(prepare_data(d, c).train.size() == 33);
  }
  SUBCASE("class count mismatch is a data error") {
    RunConfig c = tiny_config();
    c.network.num_classes = 4;
    try {
      prepare_data(d, c);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::data);
    }
  }
  SUBCASE("chips smaller than the input") {
    RunConfig c = tiny_config();
    c.network.input_h = c.network.input_w = 32;
    CHECK_THROWS_AS(prepare_data(d, c), Error);
  }
}

TEST_CASE("train_epoch") {
  const Dataset d = generate_corpus(tiny_spec(), 2);
  const RunConfig config = tiny_config();
  const PreparedData data = prepare_data(d, config);

  SUBCASE("loss falls over three epochs") {
    Rng rng(3);
    MtlNetwork net = MtlNetwork::build(config.network, rng);
    net.mutable_config().lr_decay_period = 0;
    std::vector<double> losses;
    for (std::size_t e = 0; e < 3; ++e) losses.push_back(train_epoch(net, data.train, e).loss);
    CHECK(losses[2] < losses[0]);
  }
  SUBCASE("zero loss weights leave the parameters unchanged") {
    Rng rng(4);
    MtlNetwork net = MtlNetwork::build(config.network, rng);
    net.mutable_config().lambda_rec = 0.0;
    net.mutable_config().lambda_seg = 0.0;
    const auto before = flat_parameters(net);
    train_epoch(net, data.train, 0);
    CHECK(flat_parameters(net) == before);
  }
  SUBCASE("same seed, identical summaries") {
    Rng r1(5), r2(5);
    MtlNetwork a = MtlNetwork::build(config.network, r1);
    MtlNetwork b = MtlNetwork::build(config.network, r2);
    for (std::size_t e = 0; e < 2; ++e) CHECK(same_summary(train_epoch(a, data.train, e), train_epoch(b, data.train, e)));
    CHECK(flat_parameters(a) == flat_parameters(b));
  }
  SUBCASE("shuffle is a permutation that changes per epoch") {
    auto o0 = epoch_order(50, 9, 0);
    const auto o1 = epoch_order(50, 9, 1);
    CHECK(o0 != o1);
    CHECK(o0 == epoch_order(50, 9, 0));
    std::sort(o0.begin(), o0.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(o0[i] == i);
  }
  SUBCASE("evaluation does not depend on the worker count") {
    Rng rng(6);
    MtlNetwork net = MtlNetwork::build(config.network, rng);
    train_epoch(net, data.train, 0);
    const EvalResults one = evaluate(net, data.test, data.class_names, "SOC", 0, 1);
    const EvalResults three = evaluate(net, data.test, data.class_names, "SOC", 0, 3);
    REQUIRE(one.records.size() == three.records.size());
    for (std::size_t i = 0; i < one.records.size(); ++i) {
      CHECK(one.records[i].predicted_label == three.records[i].predicted_label);
      CHECK(one.records[i].predicted_mask == three.records[i].predicted_mask);
    }
  }
}

TEST_CASE("run_train") {
  ScratchDir dir("train");
  run_generate(tiny_spec(), dir / "data", 8);
  RunConfig config = tiny_config();
  config.network.lr_decay_period = 1;

  SUBCASE("writes logs, checkpoint and validation numbers that eval reproduces") {
    const TrainOutcome o = run_train(config, dir / "data", dir / "run");
    CHECK(o.epochs_run == 3);
    for (const char* f : {"config.json", "train_log.csv", "timing.csv", "checkpoint.bin", "validation.json"})
      CHECK(std::filesystem::exists(dir / ("run/" + std::string(f))));
    const std::string log = read_text_file(dir / "run/train_log.csv");
    CHECK(std::count(log.begin(), log.end(), '\n') == 4);

    const EvalResults r = run_eval(dir / "run/checkpoint.bin", dir / "data", "", dir / "eval");
    const auto validation = nlohmann::json::parse(read_text_file(dir / "run/validation.json"));
    const auto summary = nlohmann::json::parse(read_text_file(dir / "eval/summary.json"));
    CHECK(summary["recognition_ratio"] == validation["recognition_ratio"]);
    CHECK(summary["pixel_accuracy"] == validation["pixel_accuracy"]);
    CHECK(summary["scenario"] == "SOC");
  }
  SUBCASE("two runs are byte-identical") {
    run_train(config, dir / "data", dir / "a");
    run_train(config, dir / "data", dir / "b");
    CHECK(read_text_file(dir / "a/train_log.csv") == read_text_file(dir / "b/train_log.csv"));
    CHECK(read_text_file(dir / "a/checkpoint.bin") == read_text_file(dir / "b/checkpoint.bin"));
  }
  SUBCASE("resume continues the learning-rate schedule") {
    RunConfig first = config;
    first.network.epochs = 2;
    run_train(first, dir / "data", dir / "first");
    CHECK(load_checkpoint(dir / "first/checkpoint.bin").epochs_done == 2);
    std::vector<EpochSummary> seen;
    const TrainOutcome o = run_train(config, dir / "data", dir / "resumed", dir / "first/checkpoint.bin",
                                     [&](const EpochSummary& e) { seen.push_back(e); });
    CHECK(o.epochs_run == 1);
    CHECK(o.epochs_done == 3);
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].epoch == 2);
    CHECK(seen[0].lr == 0.05 / 100.0);
  }
  SUBCASE("recognition-only ablation") {
    config.network.lambda_seg = 0.0;
    config.network.epochs = 1;
    const TrainOutcome o = run_train(config, dir / "data", dir / "ablation");
    CHECK(o.last.loss == doctest::Approx(o.last.loss_rec));
  }
  SUBCASE("mismatched class count") {
    config.network.num_classes = 5;
    try {
      run_train(config, dir / "data", dir / "bad");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::data);
    }
  }
}
