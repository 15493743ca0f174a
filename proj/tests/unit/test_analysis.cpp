#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "dib/analysis/analysis.hpp"
#include "dib/errors.hpp"
#include "dib/io/csv.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dib;
using nlohmann::json;

namespace {

LoadedDataset letters_table() {
  std::ostringstream csv;
  csv << "v,x,y\n";
  Rng rng(1);
  const char* letters[] = {"a", "b", "c", "d"};
  for (int i = 0; i < 200; ++i) csv << letters[i % 4] << "," << rng.normal() << "," << (i % 3 == 0) << "\n";
  return load_csv_text(csv.str(), Schema::from_json(json::parse(R"({
    "task": "binary",
    "columns": [{"name": "v", "kind": "categorical"}, {"name": "x", "kind": "continuous"},
                {"name": "y", "kind": "categorical", "target": true}]})")));
}

// Linear encoders so the first channel's Gaussians can be set by hand.
DibModel linear_model(const DatasetTable& table, std::uint64_t seed = 3) {
  ModelConfig base;
  base.embedding_dim = 2;
  base.encoder_hidden = {};
  base.decoder_hidden = {4};
  return DibModel::create(ModelConfig::for_table(table, base), seed);
}

// Row k of the one-hot weight becomes (means, log-variances) of vocabulary entry k.
void set_encodings(DibModel& model, const std::vector<std::array<double, 4>>& rows) {
  const DenseLayer& layer = model.encoder(0).layers.front();
  Tensor& w = model.params().value(layer.weight);
  Tensor& b = model.params().value(layer.bias);
  for (double& v : b.values()) v = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < 4; ++c) w.at(r, c) = rows[r][c];
  }
}

InfoPlanePoint point(std::size_t step, std::vector<double> kl, double val_error) {
  InfoPlanePoint p;
  p.step = step;
  p.kl_bits = std::move(kl);
  for (double k : p.kl_bits) p.kl_total_bits += k;
  p.val_error = val_error;
  return p;
}

Trajectory two_feature_trajectory() {
  Trajectory t;
  t.channel_names = {"A", "B"};
  // Steps increase with beta, so KL shrinks along the run.
  t.points = {point(100, {6.0, 4.0}, 0.40), point(200, {3.0, 1.5}, 0.42), point(300, {1.2, 0.5}, 0.45),
              point(400, {0.8, 0.04}, 0.50), point(500, {0.03, 0.01}, 0.69)};
  return t;
}

}  // namespace

TEST_CASE("confusion matrix is symmetric, bounded, with a unit diagonal") {
  const LoadedDataset d = letters_table();
  const DibModel model = linear_model(d.table);
  const ConfusionMatrix m = confusion_matrix(model, d.table, 0, 0);
  CHECK(m.labels == std::vector<std::string>{"a", "b", "c", "d"});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(m.at(i, i) == 1.0);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(m.at(i, j) == m.at(j, i));
      CHECK(m.at(i, j) >= 0.0);
      CHECK(m.at(i, j) <= 1.0);
    }
  }
}

TEST_CASE("encodings at the prior are indistinguishable") {
  const LoadedDataset d = letters_table();
  DibModel model = linear_model(d.table);
  set_encodings(model, std::vector<std::array<double, 4>>(4, {0.0, 0.0, 0.0, 0.0}));
  const ConfusionMatrix m = confusion_matrix(model, d.table, 0, 0);
  for (double c : m.coefficients) CHECK(c == 1.0);
  CHECK(m.mean_off_diagonal() == 1.0);
}

TEST_CASE("two groups of values form two blocks") {
  const LoadedDataset d = letters_table();
  DibModel model = linear_model(d.table);
  set_encodings(model, {{{0, 0, 0, 0}}, {{0, 0, 0, 0}}, {{10, 10, 0, 0}}, {{10, 10, 0, 0}}});
  const ConfusionMatrix m = confusion_matrix(model, d.table, 0, 0);
  CHECK(m.at(0, 1) == doctest::Approx(1.0));
  CHECK(m.at(2, 3) == doctest::Approx(1.0));
  CHECK(m.at(0, 2) == doctest::Approx(std::exp(-25.0)));
  CHECK(m.at(1, 3) == doctest::Approx(std::exp(-25.0)));
}

TEST_CASE("a matrix entry agrees with numerical integration") {
  const LoadedDataset d = letters_table();
  DibModel model = linear_model(d.table);
  set_encodings(model, {{{0.3, -1.0, 0.5, -0.2}}, {{1.1, 0.4, -0.7, 0.9}}, {{0, 0, 0, 0}}, {{2, 2, 1, 1}}});
  const std::vector<std::string> pick{"b", "a"};
  const ConfusionMatrix m = confusion_matrix(model, d.table, 0, std::span<const std::string>(pick));
  CHECK(m.labels == pick);
  const std::vector<double> ma{0.3, -1.0}, la{0.5, -0.2}, mb{1.1, 0.4}, lb{-0.7, 0.9};
  CHECK(std::abs(m.at(0, 1) - oracle::bhattacharyya_quadrature(mb, lb, ma, la)) < 1e-6);
  const std::vector<std::string> bad{"a", "zzz"};
  CHECK_THROWS_AS(confusion_matrix(model, d.table, 0, std::span<const std::string>(bad)), ConfigError);
}

TEST_CASE("continuous features use sorted sampled values") {
  const LoadedDataset d = letters_table();
  const DibModel model = linear_model(d.table);
  const ConfusionMatrix m = confusion_matrix(model, d.table, 1, 9);
  CHECK(m.size() == 200);
  const auto values = sample_feature_values(d.table, 1, 50, 9);
  CHECK(values.size() == 50);
  CHECK(std::is_sorted(values.begin(), values.end()));
  CHECK(values == sample_feature_values(d.table, 1, 50, 9));
  const std::vector<double> raw{0.5, -1.0, 0.0};
  const ConfusionMatrix r = confusion_matrix(model, d.table, 1, std::span<const double>(raw));
  CHECK(r.labels.front().find("-1") == 0);
}

TEST_CASE("confusion matrices need per-feature encoders and a bounded value count") {
  const LoadedDataset d = letters_table();
  ModelConfig fused = linear_model(d.table).config();
  fused.fused = true;
  const DibModel model = DibModel::create(fused, 1);
  CHECK_THROWS_AS(confusion_matrix(model, d.table, 0, 0), ContractError);
  const DibModel ok = linear_model(d.table);
  CHECK_THROWS_AS(confusion_matrix(ok, 0, std::vector<std::string>(1001, "x"), Tensor({1001, 4})), ContractError);
}

TEST_CASE("thread count follows the environment") {
  ::setenv("DIB_THREADS", "3", 1);
  CHECK(analysis_threads() == 3);
  ::setenv("DIB_THREADS", "junk", 1);
  CHECK(analysis_threads() >= 1);
  ::unsetenv("DIB_THREADS");
}

TEST_CASE("budget lookup picks the largest total under the budget") {
  const Trajectory t = two_feature_trajectory();
  CHECK(point_for_budget(t, 100.0) == std::optional<std::size_t>(0));
  CHECK(point_for_budget(t, 5.0) == std::optional<std::size_t>(1));
  CHECK(point_for_budget(t, 1.7) == std::optional<std::size_t>(2));
  CHECK_FALSE(point_for_budget(t, 0.01));
  Trajectory tied = t;
  tied.points.push_back(point(600, {0.8, 0.04}, 0.5));
  CHECK(point_for_budget(tied, 0.9) == std::optional<std::size_t>(5));
}

TEST_CASE("importance ranks features and records when they switch on") {
  const Trajectory t = two_feature_trajectory();
  const std::vector<double> budgets{0.01, 1.0, 5.0};
  const ImportanceReport r = importance_report(t, budgets);
  REQUIRE(r.snapshots.size() == 3);
  CHECK_FALSE(r.snapshots[0].available);
  CHECK(r.snapshots[1].available);
  CHECK(r.snapshots[1].step == 400);
  CHECK(r.snapshots[1].ranking == std::vector<std::size_t>{0, 1});
  CHECK(r.snapshots[2].step == 200);
  double sum = 0.0;
  for (double k : r.snapshots[2].kl_bits) sum += k;
  CHECK(sum == doctest::Approx(r.snapshots[2].kl_total_bits));
  // A clears 0.05 bits up to step 400, B only up to step 300.
  CHECK(r.first_contribution_step[0] == std::optional<std::size_t>(400));
  CHECK(r.first_contribution_step[1] == std::optional<std::size_t>(300));
  CHECK(r.contribution_order == std::vector<std::size_t>{0, 1});

  const std::vector<double> descending{5.0, 1.0};
  CHECK_THROWS_AS(importance_report(t, descending), ConfigError);
  const std::vector<double> negative{-1.0};
  CHECK_THROWS_AS(importance_report(t, negative), ConfigError);
}

TEST_CASE("near-equal features are flagged as ties") {
  Trajectory t;
  t.channel_names = {"x", "x_copy", "noise"};
  t.points = {point(10, {2.0, 1.95, 0.1}, 0.3)};
  const std::vector<double> budgets{10.0};
  const ImportanceReport r = importance_report(t, budgets);
  const BudgetSnapshot& s = r.snapshots[0];
  CHECK(s.ranking == std::vector<std::size_t>{0, 1, 2});
  CHECK(s.tied_with_next == std::vector<bool>{true, false, false});
}

TEST_CASE("a single-feature run ranks that feature") {
  Trajectory t;
  t.channel_names = {"only"};
  t.points = {point(1, {3.0}, 0.2), point(2, {0.5}, 0.4)};
  const std::vector<double> budgets{1.0};
  const ImportanceReport r = importance_report(t, budgets);
  CHECK(r.snapshots[0].ranking == std::vector<std::size_t>{0});
  CHECK(r.contribution_order == std::vector<std::size_t>{0});
}

TEST_CASE("the frontier keeps strictly improving points in KL order") {
  Trajectory t = two_feature_trajectory();
  t.points.push_back(point(600, {2.0, 2.0}, 0.46));  // dominated
  const auto frontier = pareto_frontier(t);
  REQUIRE(frontier.size() == 5);
  for (std::size_t i = 1; i < frontier.size(); ++i) {
    CHECK(frontier[i].kl_total_bits > frontier[i - 1].kl_total_bits);
    CHECK(frontier[i].val_error < frontier[i - 1].val_error);
  }
  const std::vector<double> budgets{1.0, 2.0};
  const InfoPlaneExport e = info_plane_export(t, budgets);
  CHECK(e.frontier.size() == frontier.size());
  const json doc = to_json(e);
  CHECK(doc.at("frontier").size() == frontier.size());
}

TEST_CASE("exports write the expected files") {
  const LoadedDataset d = letters_table();
  const DibModel model = linear_model(d.table);
  fixture::TempDir dir("analysis");
  const ConfusionMatrix m = confusion_matrix(model, d.table, 0, 0);
  write_confusion_csv(dir.path() / "c.csv", m);
  const auto doc = csv::read_file(dir.path() / "c.csv");
  CHECK(doc.header == std::vector<std::string>{"v", "a", "b", "c", "d"});
  CHECK(doc.records.size() == 4);
  const Trajectory t = two_feature_trajectory();
  const std::vector<double> budgets{1.0, 5.0};
  const ImportanceReport r = importance_report(t, budgets);
  write_importance_csv(dir.path() / "i.csv", r);
  CHECK(csv::read_file(dir.path() / "i.csv").records.size() == 4);
  CHECK(to_json(r).at("contribution_order") == json{"A", "B"});
}
