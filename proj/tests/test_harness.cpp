#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support.hpp"

using namespace mtmd;
using namespace mtmd::test;

namespace {

Dataset small_dataset(std::uint64_t seed = 3) {
  SyntheticMarket m = small_market(seed);
  return Dataset{std::move(m.panel), std::move(m.graph)};
}

bool same_report(const MetricReport& a, const MetricReport& b) { return report_csv(a) == report_csv(b); }

/// Runs one epoch of train_step over `order` from a fresh model.
ModelState run_dates(const TrainConfig& cfg, const Dataset& data, const std::vector<std::size_t>& order) {
  ModelConfig model = cfg.model;
  model.seed = cfg.seed;
  ModelState state = init_model(model);
  const auto inputs = prepare_inputs(data, model);
  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  for (std::size_t d : order)
    train_step(state, model, inputs[d], data.panel.dates[d].labels, opt, data.panel.dates[d].date);
  return state;
}

}  // namespace

TEST(Splits, FractionsCoverLabeledDatesInOrder) {
  const Dataset data = small_dataset();
  const Splits s = split_dates(data.panel, SplitConfig{});
  std::size_t labeled = 0;
  for (const auto& d : data.panel.dates) labeled += d.has_labels;
  EXPECT_EQ(s.train.size() + s.valid.size() + s.test.size(), labeled);
  EXPECT_LT(s.train.back(), s.valid.front());
  EXPECT_LT(s.valid.back(), s.test.front());
  EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
}

TEST(Splits, DateBoundariesAreInclusive) {
  const Dataset data = small_dataset();
  SplitConfig cfg;
  cfg.train_end = data.panel.dates[8].date;
  cfg.valid_end = data.panel.dates[12].date;
  const Splits s = split_dates(data.panel, cfg);
  EXPECT_EQ(data.panel.dates[s.train.back()].date, cfg.train_end);
  EXPECT_EQ(data.panel.dates[s.valid.back()].date, cfg.valid_end);
  EXPECT_EQ(s.test.front(), s.valid.back() + 1);
}

TEST(Splits, SeedDoesNotChangeSplits) {
  const Dataset data = small_dataset();
  TrainConfig a = small_train_config(0), b = small_train_config(99);
  const Splits sa = split_dates(data.panel, a.split), sb = split_dates(data.panel, b.split);
  EXPECT_EQ(sa.train, sb.train);
  EXPECT_EQ(sa.valid, sb.valid);
  EXPECT_EQ(sa.test, sb.test);
  a.model.seed = 0;
  b.model.seed = 99;
  EXPECT_NE(init_model(a.model).params, init_model(b.model).params);
}

TEST(Train, SameSeedGivesIdenticalRuns) {
  const Dataset data = small_dataset();
  const TrainConfig cfg = small_train_config(1);
  const TrainResult a = train(cfg, data), b = train(cfg, data);
  EXPECT_EQ(to_json(a.log).dump(), to_json(b.log).dump());
  EXPECT_EQ(serialize(a.best), serialize(b.best));
  EXPECT_EQ(a.final_state.params, b.final_state.params);
}

TEST(Train, ZeroLearningRateOnlyMovesBanks) {
  const Dataset data = small_dataset();
  TrainConfig cfg = small_train_config(2);
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const TrainResult r = train(cfg, data);
  ModelConfig model = cfg.model;
  model.seed = cfg.seed;
  const ModelState init = init_model(model);
  EXPECT_EQ(r.final_state.params, init.params);
  EXPECT_NE(r.final_state.banks.predefined.items, init.banks.predefined.items);
  EXPECT_NE(r.final_state.banks.hidden.items, init.banks.hidden.items);
}

TEST(Train, LogRecordsChronologicalDatesAndSelection) {
  const Dataset data = small_dataset();
  TrainConfig cfg = small_train_config(3);
  cfg.epochs = 3;
  const TrainResult r = train(cfg, data);
  ASSERT_EQ(r.log.epochs.size(), 4u);
  EXPECT_TRUE(r.log.epochs[0].dates.empty());
  const auto& visited = r.log.epochs[1].dates;
  EXPECT_TRUE(std::is_sorted(visited.begin(), visited.end()));
  EXPECT_EQ(visited.size(), split_dates(data.panel, cfg.split).train.size());
  EXPECT_GE(r.log.best_valid_ic, r.log.epochs[0].valid_ic);
  for (const auto& e : r.log.epochs) EXPECT_LE(e.valid_ic, r.log.best_valid_ic);
  EXPECT_EQ(r.log.epochs[r.log.best_epoch].valid_ic, r.log.best_valid_ic);
  EXPECT_EQ(r.best.metadata.at("metrics").at("best_epoch"), r.log.best_epoch);
}

TEST(Train, PatienceStopsEarly) {
  const Dataset data = small_dataset();
  TrainConfig cfg = small_train_config(4);
  cfg.learning_rate = 0.0;  // validation IC can never improve on epoch 0
  cfg.epochs = 10;
  cfg.patience = 2;
  cfg.model.memory_predefined = cfg.model.memory_hidden = false;
  const TrainResult r = train(cfg, data);
  EXPECT_EQ(r.log.epochs.size(), 3u);
  EXPECT_TRUE(r.log.stopped_early);
  EXPECT_EQ(r.log.best_epoch, 0u);
}

TEST(Train, DateOrderChangesFinalBank) {
  const Dataset data = small_dataset();
  const TrainConfig cfg = small_train_config(5);
  const auto train_dates = split_dates(data.panel, cfg.split).train;
  auto shuffled = train_dates;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const ModelState a = run_dates(cfg, data, train_dates), b = run_dates(cfg, data, shuffled);
  EXPECT_GT(max_abs_diff(a.banks.predefined.items, b.banks.predefined.items), 0.0);
  EXPECT_GT(max_abs_diff(a.banks.hidden.items, b.banks.hidden.items), 0.0);
}

TEST(Train, ResetFlagRestoresBanksEachEpoch) {
  const Dataset data = small_dataset();
  TrainConfig cfg = small_train_config(6);
  cfg.learning_rate = 0.0;
  cfg.reset_memory_each_epoch = true;
  cfg.epochs = 2;
  cfg.patience = 5;
  const TrainResult two = train(cfg, data);
  cfg.epochs = 1;
  const TrainResult one = train(cfg, data);
  EXPECT_EQ(two.final_state.banks.predefined.items, one.final_state.banks.predefined.items);
}

TEST(Train, EmptySplitsAreRejected) {
  const Dataset data = small_dataset();
  TrainConfig cfg = small_train_config();
  cfg.split.train_fraction = 0.6;
  cfg.split.valid_fraction = 0.0;
  EXPECT_THROW(train(cfg, data), ContractError);
  TrainConfig late = small_train_config();
  late.split.train_end = "1900-01-01";
  late.split.valid_end = "1900-01-02";
  EXPECT_THROW(train(late, data), ContractError);
}

TEST(Train, DefaultConfigLossDecreasesOnSyntheticMarket) {
  SyntheticSpec spec;  // 20 stocks, 4 concepts, 300 dates
  SyntheticMarket m = generate_synthetic(spec);
  const Dataset data{std::move(m.panel), std::move(m.graph)};
  TrainConfig cfg;  // default model, optimizer and rate
  cfg.epochs = 5;
  const TrainResult r = train(cfg, data);
  ASSERT_EQ(r.log.epochs.size(), 6u);
  for (std::size_t e = 2; e <= 5; ++e)
    EXPECT_LT(r.log.epochs[e].train_loss, r.log.epochs[e - 1].train_loss) << "epoch " << e;
}

TEST(Evaluate, RepeatableAndSurvivesCheckpointRoundTrip) {
  const Dataset data = small_dataset();
  const TrainResult r = train(small_train_config(7), data);
  const MetricReport a = evaluate(r.best, data, Split::test), b = evaluate(r.best, data, Split::test);
  EXPECT_TRUE(same_report(a, b));
  const auto dir = temp_dir("roundtrip");
  save_checkpoint(dir / "c.bin", r.best);
  const Checkpoint loaded = load_checkpoint(dir / "c.bin");
  EXPECT_EQ(serialize(loaded), serialize(r.best));
  EXPECT_EQ(loaded.tensors, r.best.tensors);
  EXPECT_TRUE(same_report(evaluate(loaded, data, Split::test), a));
  EXPECT_NEAR(evaluate(loaded, data, Split::valid).ic.mean, r.log.best_valid_ic, 0.0);
}

TEST(Evaluate, EvalWritesFlagLetsBanksAbsorb) {
  const Dataset data = small_dataset();
  TrainConfig cfg = small_train_config(8);
  const TrainResult r = train(cfg, data);
  const ModelConfig& model = cfg.model;
  const auto inputs = prepare_inputs(data, model);
  const auto test = split_dates(data.panel, cfg.split).test;
  const MetricReport frozen = evaluate_dates(r.best_state, model, data, inputs, test, false);
  const MetricReport writing = evaluate_dates(r.best_state, model, data, inputs, test, true);
  EXPECT_FALSE(same_report(frozen, writing));
  EXPECT_THROW(evaluate_dates(r.best_state, model, data, inputs, {}, false), ContractError);
}

TEST(Checkpoint, HeaderLayout) {
  Checkpoint c;
  c.tensors["w"] = Tensor::matrix({{1.5, -2.0}});
  c.metadata = Json{{"k", 1}};
  const std::string bytes = serialize(c);
  EXPECT_EQ(bytes.substr(0, 4), "MTMD");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[8], 1);  // tensor count
  // name length, name, rank, two u64 dims, two f64 values, metadata length, metadata
  EXPECT_EQ(bytes.size(), 12u + 4 + 1 + 4 + 16 + 16 + 8 + c.metadata.dump().size());
  const Checkpoint back = deserialize(bytes);
  EXPECT_EQ(back.tensors.at("w"), c.tensors.at("w"));
  EXPECT_EQ(back.metadata, c.metadata);
}

TEST(Checkpoint, CorruptFilesAreDataErrors) {
  Checkpoint c;
  c.tensors["w"] = Tensor::vector({1.0, 2.0});
  c.metadata = Json::object();
  const std::string good = serialize(c);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), DataError);
  std::string bad_version = good;
  bad_version[4] = 7;
  EXPECT_THROW(deserialize(bad_version), DataError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, good.size() / 2, good.size() - 1})
    EXPECT_THROW(deserialize(good.substr(0, cut)), DataError) << cut;
  EXPECT_THROW(deserialize(good + "x"), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/mtmd.bin"), DataError);
  EXPECT_THROW(state_from_checkpoint(c), DataError);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c = small_train_config(9);
  c.optimizer = OptimizerKind::adam;
  c.split.train_end = "2020-03-01";
  c.split.valid_end = "2020-04-01";
  c.ablation_seeds = {0, 1, 2};
  c.model.memory_hidden = false;
  c.data.panel = "/abs/panel.csv";
  const TrainConfig back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Config, RelativePathsResolveAgainstBase) {
  const Json j = {{"data", {{"panel", "d/panel.csv"}, {"concepts", "/x/c.csv"}}}, {"output_dir", "out"}};
  const TrainConfig c = train_config_from_json(j, "/base/cfg");
  EXPECT_EQ(c.data.panel, "/base/cfg/d/panel.csv");
  EXPECT_EQ(c.data.concepts, "/x/c.csv");
  EXPECT_EQ(c.output_dir, "/base/cfg/out");
}

TEST(Config, InvalidValuesAreRejected) {
  EXPECT_THROW(train_config_from_json(Json{{"learning_rate", -1.0}}), ContractError);
  EXPECT_THROW(train_config_from_json(Json{{"optimizer", "lbfgs"}}), ContractError);
  EXPECT_THROW(train_config_from_json(Json{{"model", {{"hidden", 0}}}}), ContractError);
  EXPECT_THROW(split_from_string("holdout"), ContractError);
}

TEST(Ablation, FourRowsAndBaselineMatchesDirectTrain) {
  const Dataset data = small_dataset();
  TrainConfig base = small_train_config(0);
  base.ablation_seeds = {0, 1};
  const AblationResult r = run_ablation(base, data);
  ASSERT_EQ(r.rows.size(), 4u);
  const char* labels[] = {"B", "P", "H", "A"};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(r.rows[i].label, labels[i]);
    EXPECT_EQ(r.rows[i].test.size(), 2u);
  }
  TrainConfig direct = small_train_config(1);
  direct.model.memory_predefined = direct.model.memory_hidden = false;
  const TrainResult t = train(direct, data);
  EXPECT_TRUE(same_report(evaluate(t.best, data, Split::test), r.row("B").test[1]));
  EXPECT_EQ(r.row("B").valid_ic[1], t.log.best_valid_ic);
  const std::string table = ablation_table(r);
  for (const char* l : labels) EXPECT_NE(table.find(std::string("\n") + l + " "), std::string::npos) << l;
  EXPECT_NE(table.find("0.128"), std::string::npos);
}

TEST(Export, RowCountStagesAndDeterminism) {
  const Dataset data = small_dataset();
  const TrainResult r = train(small_train_config(10), data);
  const auto dir = temp_dir("export");
  export_embeddings(r.best, data, Split::test, dir / "a.csv");
  export_embeddings(r.best, data, Split::test, dir / "b.csv");
  const std::string a = read_file(dir / "a.csv");
  EXPECT_EQ(a, read_file(dir / "b.csv"));

  const auto test = split_dates(data.panel, small_train_config().split).test;
  std::size_t expected = 0;
  for (std::size_t d : test) expected += data.panel.dates[d].num_stocks() * kExportStages.size();
  std::istringstream in(a);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "date,stock_id,stage,d0,d1,d2,d3");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto first = line.find(','), second = line.find(',', first + 1), third = line.find(',', second + 1);
    const std::string stage = line.substr(second + 1, third - second - 1);
    EXPECT_NE(std::find(kExportStages.begin(), kExportStages.end(), stage), kExportStages.end()) << stage;
  }
  EXPECT_EQ(rows, expected);
}

TEST(Export, StageValuesMatchForwardTrace) {
  const Dataset data = small_dataset();
  const TrainResult r = train(small_train_config(11), data);
  const auto test = split_dates(data.panel, small_train_config().split).test;
  ModelConfig model = small_train_config(11).model;
  ModelState s = r.best_state;
  const std::size_t d = test.front();
  const ForwardTrace t = forward(make_input(data.panel.dates[d], data.graph, d, model), s, model, Mode::eval);
  const std::string csv = embeddings_csv(r.best_state, model, data, {d});
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);  // stock 0, h1
  EXPECT_EQ(line.substr(line.rfind(',') + 1), csv::format_double(t.h1(0, 3)));
  std::getline(in, line);  // stock 0, q1
  EXPECT_EQ(line.substr(line.rfind(',') + 1), csv::format_double(t.q1(0, 3)));
}
