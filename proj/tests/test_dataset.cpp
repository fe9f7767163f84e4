#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "pdl/dataset.hpp"
#include "pdl/dictionary.hpp"
#include "test_util.hpp"

using namespace pdl;
using testutil::TempDir;
using testutil::tiny_dataset;

TEST_CASE("dataset validation catches shape problems") {
  PopulationDataset ds = tiny_dataset();
  REQUIRE_NOTHROW(ds.validate());

  SECTION("times must strictly increase") {
    ds.times[2] = ds.times[1];
    REQUIRE_THROWS_AS(ds.validate(), data_error);
  }
  SECTION("cloud count must match time count") {
    ds.clouds.pop_back();
    REQUIRE_THROWS_AS(ds.validate(), data_error);
  }
  SECTION("cloud width must match variable count") {
    ds.clouds[1] = Eigen::MatrixXd::Zero(3, 5);
    REQUIRE_THROWS_AS(ds.validate(), data_error);
  }
  SECTION("at least two clouds required") {
    ds.times.resize(1);
    ds.clouds.resize(1);
    REQUIRE_THROWS_AS(ds.validate(), data_error);
  }
  SECTION("non-finite samples are rejected") {
    ds.clouds[0](1, 1) = std::nan("");
    REQUIRE_THROWS_AS(ds.validate(), data_error);
  }
}

TEST_CASE("intervention sets require consistent variables") {
  InterventionSet set;
  set.datasets.push_back(tiny_dataset());
  set.datasets.push_back(tiny_dataset());
  set.datasets[1].intervention_id = "other";
  REQUIRE_NOTHROW(set.validate());
  set.datasets[1].variables = {"a", "b"};
  REQUIRE_THROWS_AS(set.validate(), data_error);
}

TEST_CASE("variable_range pools datasets and applies the margin") {
  InterventionSet set;
  set.datasets.push_back(tiny_dataset(4, 6));
  // x1 spans [0, 3.05]: cloud k = 3, sample p = 5 gives 3 + 0.05.
  auto [lo, hi] = variable_range(set, 0, 0.0);
  REQUIRE(lo == 0.0);
  REQUIRE(hi == 3.05);
  // A relative margin of 0.2 widens each side by 0.2 * span.
  auto [lo2, hi2] = variable_range(set, 0, 0.2);
  REQUIRE(lo2 == Catch::Approx(0.0 - 0.2 * 3.05));
  REQUIRE(hi2 == Catch::Approx(3.05 + 0.2 * 3.05));
}

TEST_CASE("variable_range widens a degenerate span instead of failing") {
  PopulationDataset ds = tiny_dataset(2, 3);
  for (auto& c : ds.clouds) c.col(0).setConstant(1.5);
  auto [lo, hi] = variable_range(ds, 0, 0.0);
  REQUIRE(lo < 1.5);
  REQUIRE(hi > 1.5);
  REQUIRE(hi - lo > 0.0);
}

TEST_CASE("split_dataset produces disjoint per-cloud partitions of stated size") {
  PopulationDataset ds = tiny_dataset(3, 40);
  auto parts = split_dataset(ds, {0.8, 0.1, 0.1}, 99);
  const auto& train = parts[0];
  const auto& test = parts[1];
  const auto& val = parts[2];

  for (const auto* p : {&train, &test, &val}) {
    REQUIRE(p->times == ds.times);
    REQUIRE(p->variables == ds.variables);
    REQUIRE_NOTHROW(p->validate());
  }
  for (int k = 0; k < ds.n_clouds(); ++k) {
    // floor(0.1 * 40) = 4 rows each for test and validation, remainder trains.
    REQUIRE(test.clouds[k].rows() == 4);
    REQUIRE(val.clouds[k].rows() == 4);
    REQUIRE(train.clouds[k].rows() == 32);

    // Together the three parts hold exactly the original rows (x2 values in
    // cloud k are the distinct integers 10k..10k+39, so multisets identify
    // rows uniquely).
    std::multiset<double> got, expect;
    for (const auto* p : {&train, &test, &val})
      for (int r = 0; r < p->clouds[k].rows(); ++r) got.insert(p->clouds[k](r, 1));
    for (int r = 0; r < ds.clouds[k].rows(); ++r) expect.insert(ds.clouds[k](r, 1));
    REQUIRE(got == expect);
  }
}

TEST_CASE("split_dataset is deterministic in the seed") {
  PopulationDataset ds = tiny_dataset(3, 24);
  auto a = split_dataset(ds, {0.8, 0.1, 0.1}, 7);
  auto b = split_dataset(ds, {0.8, 0.1, 0.1}, 7);
  auto c = split_dataset(ds, {0.8, 0.1, 0.1}, 8);
  REQUIRE(a[1].clouds[0] == b[1].clouds[0]);
  bool all_equal = true;
  for (int k = 0; k < 3 && all_equal; ++k)
    all_equal = a[1].clouds[k] == c[1].clouds[k];
  REQUIRE_FALSE(all_equal);
}

TEST_CASE("split_dataset rejects impossible configurations") {
  PopulationDataset ds = tiny_dataset(3, 2);
  REQUIRE_THROWS_AS(split_dataset(ds, {0.8, 0.1, 0.1}, 1), data_error);
  PopulationDataset ok = tiny_dataset(3, 30);
  REQUIRE_THROWS_AS(split_dataset(ok, {0.8, 0.1, 0.2}, 1), data_error);
  REQUIRE_THROWS_AS(split_dataset(ok, {1.0, 0.0, 0.0}, 1), data_error);
}

TEST_CASE("csv round trip preserves values bit-exactly") {
  TempDir tmp;
  InterventionSet set;
  set.datasets.push_back(tiny_dataset(3, 5));
  set.datasets.push_back(tiny_dataset(4, 2));
  set.datasets[1].intervention_id = "second";
  set.datasets[1].clouds[2](0, 0) = 1.0 / 3.0;  // value needing all 17 digits

  const std::string path = tmp.file("data.csv");
  save_interventions_csv(set, path);
  InterventionSet back = load_interventions_csv(path);

  REQUIRE(back.datasets.size() == 2);
  REQUIRE(back.datasets[0].variables == set.datasets[0].variables);
  for (size_t r = 0; r < 2; ++r) {
    REQUIRE(back.datasets[r].intervention_id == set.datasets[r].intervention_id);
    REQUIRE(back.datasets[r].times == set.datasets[r].times);
    for (size_t k = 0; k < set.datasets[r].clouds.size(); ++k)
      REQUIRE(back.datasets[r].clouds[k] == set.datasets[r].clouds[k]);
  }
}

TEST_CASE("csv loader reports malformed rows with line numbers") {
  TempDir tmp;
  const std::string path = tmp.file("bad.csv");

  SECTION("short row") {
    write_text_file(path, "time,sample_id,x1,x2,intervention_id\n0,0,1.0\n");
    REQUIRE_THROWS_WITH(load_interventions_csv(path), Catch::Matchers::ContainsSubstring("line 2"));
  }
  SECTION("non-numeric value") {
    write_text_file(path,
                    "time,sample_id,x1,x2,intervention_id\n"
                    "0,0,1.0,2.0,a\n0,1,1.0,2.0,a\n0.5,0,oops,2.0,a\n0.5,1,1.0,2.0,a\n");
    REQUIRE_THROWS_WITH(load_interventions_csv(path), Catch::Matchers::ContainsSubstring("line 4"));
  }
  SECTION("bad header") {
    write_text_file(path, "t,sample,x1,x2,id\n0,0,1.0,2.0,a\n");
    REQUIRE_THROWS_AS(load_interventions_csv(path), data_error);
  }
  SECTION("single snapshot is not a time series") {
    write_text_file(path, "time,sample_id,x1,x2,intervention_id\n0,0,1.0,2.0,a\n0,1,3.0,4.0,a\n");
    REQUIRE_THROWS_AS(load_interventions_csv(path), data_error);
  }
}

TEST_CASE("json round trip preserves intervention metadata") {
  TempDir tmp;
  InterventionSet set;
  set.datasets.push_back(tiny_dataset(3, 4));
  set.datasets.push_back(tiny_dataset(3, 4));
  set.datasets[1].intervention_id = "suppress_x2";
  set.datasets[1].kind = InterventionKind::Inhibition;
  set.datasets[1].inhibition_target = 1;

  const std::string path = tmp.file("data.json");
  save_interventions_json(set, path);
  InterventionSet back = load_interventions(path);  // dispatch by extension

  REQUIRE(back.datasets.size() == 2);
  REQUIRE(back.datasets[0].kind == InterventionKind::Activation);
  REQUIRE(back.datasets[1].kind == InterventionKind::Inhibition);
  REQUIRE(back.datasets[1].inhibition_target == 1);
  REQUIRE(back.datasets[1].times == set.datasets[1].times);
  for (int k = 0; k < 3; ++k) REQUIRE(back.datasets[1].clouds[k] == set.datasets[1].clouds[k]);
}

TEST_CASE("polynomial dictionary enumerates graded terms in a frozen order") {
  Dictionary dict = Dictionary::build(2, 3, true, true);
  // Degree-graded order, constant first; within a degree the leading variable
  // carries the highest powers first.
  const std::vector<std::vector<int>> expect = {
      {0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}};
  REQUIRE(dict.exponents == expect);
  REQUIRE(dict.size() == 10);

  REQUIRE(dict.find({1, 1}) == 4);
  REQUIRE(dict.find({4, 0}) == -1);
  REQUIRE(dict.find_linear(0) == 1);
  REQUIRE(dict.find_linear(1) == 2);

  const double x[2] = {2.0, 3.0};
  REQUIRE(dict.eval_atom(0, x) == 1.0);
  REQUIRE(dict.eval_atom(7, x) == 12.0);   // x1^2 x2
  REQUIRE(dict.eval_atom(9, x) == 27.0);   // x2^3

  std::vector<std::string> names = {"u", "v"};
  REQUIRE(dict.atom_name(0, names) == "1");
  REQUIRE(dict.atom_name(7, names) == "u^2*v");
}

TEST_CASE("dictionary options prune constants and cross terms") {
  Dictionary no_const = Dictionary::build(2, 2, false, true);
  REQUIRE(no_const.find({0, 0}) == -1);
  REQUIRE(no_const.size() == 5);

  Dictionary pure = Dictionary::build(2, 3, true, false);
  // {1, x1, x2, x1^2, x2^2, x1^3, x2^3}
  REQUIRE(pure.size() == 7);
  REQUIRE(pure.find({1, 1}) == -1);
  REQUIRE(pure.find({3, 0}) >= 0);
}

TEST_CASE("dictionary json round trip") {
  Dictionary dict = Dictionary::build(3, 2, true, true);
  Dictionary back = Dictionary::from_json(dict.to_json());
  REQUIRE(back.n_vars == dict.n_vars);
  REQUIRE(back.exponents == dict.exponents);
}
