#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "scalebb/data.hpp"
#include "support/stats.hpp"

using namespace scalebb;
namespace ts = testsupport;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "scalebb_tests";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_file(const std::string& name, const std::string& content) {
  const auto path = temp_file(name);
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Eigen::MatrixXd read_all(const ChunkedDataset& ds) {
  Eigen::MatrixXd all(ds.n_rows(), static_cast<Eigen::Index>(ds.schema().size()));
  auto cursor = ds.open_cursor();
  for (std::int64_t b = 0; b < ds.n_blocks(); ++b) {
    auto block = cursor->read(b);
    all.middleRows(b * ds.block_size(), block.rows()) = block;
  }
  return all;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("ingest rejects malformed numeric tokens, naming row and column") {
  const auto path = write_file("bad.csv", "x,y\n1,2\nabc,3\n4,5\n");
  const Schema schema{{"x", ColumnKind::Numeric}, {"y", ColumnKind::Numeric}};
  try {
    ChunkedDataset::from_csv(path.string(), schema);
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'x'") != std::string::npos);
  }
}

TEST_CASE("ingest rejects missing columns and empty files") {
  const auto path = write_file("one_col.csv", "x\n1\n");
  CHECK_THROWS_AS(
      ChunkedDataset::from_csv(path.string(),
                               {{"x", ColumnKind::Numeric}, {"z", ColumnKind::Numeric}}),
      IngestError);
  const auto empty = write_file("empty.csv", "");
  CHECK_THROWS_AS(ChunkedDataset::from_csv(empty.string(), {{"x", ColumnKind::Numeric}}),
                  IngestError);
  const auto header_only = write_file("header_only.csv", "x\n");
  CHECK_THROWS_AS(ChunkedDataset::from_csv(header_only.string(), {{"x", ColumnKind::Numeric}}),
                  IngestError);
}

TEST_CASE("blocks: 10 rows at block_size 4 split 4/4/2") {
  std::string csv = "v\n";
  for (int i = 0; i < 10; ++i) csv += std::to_string(i) + "\n";
  const auto path = write_file("ten.csv", csv);
  const auto ds = ChunkedDataset::from_csv(path.string(), {{"v", ColumnKind::Numeric}}, 4);
  CHECK(ds.n_rows() == 10);
  CHECK(ds.n_blocks() == 3);
  auto cursor = ds.open_cursor();
  CHECK(cursor->read(0).rows() == 4);
  CHECK(cursor->read(1).rows() == 4);
  CHECK(cursor->read(2).rows() == 2);
  CHECK(cursor->read(2)(1, 0) == 9.0);
}

TEST_CASE("round-trip: write, ingest, re-emit is byte-identical") {
  Rng rng(SeedSpec{99, 0});
  const Schema schema{{"a", ColumnKind::Numeric}, {"b", ColumnKind::Numeric}};
  Eigen::MatrixXd values(1000, 2);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    values(i, 0) = rng.next_normal() * 1e3;
    values(i, 1) = rng.next_normal() * 1e-3;
  }
  const auto ds0 = ChunkedDataset::from_matrix(schema, values, 128);
  const auto p1 = temp_file("round1.csv");
  const auto p2 = temp_file("round2.csv");
  ds0.write_csv(p1.string());
  const auto ds1 = ChunkedDataset::from_csv(p1.string(), schema, 77);
  ds1.write_csv(p2.string());
  CHECK(slurp(p1) == slurp(p2));
  CHECK(read_all(ds1) == values);
}

TEST_CASE("complete-case rule: rows with missing fields are dropped consistently") {
  const auto path = write_file("missing.csv", "x,y\n1,2\n,3\n4,\n5,6\n");
  const auto ds = ChunkedDataset::from_csv(path.string(),
                                           {{"x", ColumnKind::Numeric}, {"y", ColumnKind::Numeric}});
  CHECK(ds.n_rows() == 2);
  CHECK(ds.n_dropped_rows() == 2);
  const auto all = read_all(ds);
  CHECK(all(0, 0) == 1.0);
  CHECK(all(1, 0) == 5.0);
}

TEST_CASE("quoted categorical fields and level dictionaries") {
  const auto path = write_file("cats.csv", "g,x\n\"b,1\",1\nzed,2\nalpha,3\nzed,4\n");
  const auto ds = ChunkedDataset::from_csv(
      path.string(), {{"g", ColumnKind::Categorical}, {"x", ColumnKind::Numeric}});
  CHECK(ds.n_rows() == 4);
  const auto& levels = ds.levels(0);
  REQUIRE(levels.size() == 3);
  CHECK(levels[0] == "alpha");  // dictionary (sorted) order; reference level
  CHECK(levels[1] == "b,1");
  CHECK(levels[2] == "zed");
}

TEST_CASE("make_partition: exact divisibility and floor rule") {
  const auto even = make_partition(10, 5, SeedSpec{1, 0});
  REQUIRE(even.size() == 2);
  std::set<std::int64_t> seen;
  for (const auto& s : even) {
    CHECK(s.row_ids.size() == 5);
    seen.insert(s.row_ids.begin(), s.row_ids.end());
  }
  CHECK(seen.size() == 10);

  const auto uneven = make_partition(10, 3, SeedSpec{2, 0});
  REQUIRE(uneven.size() == 3);
  std::set<std::int64_t> assigned;
  for (const auto& s : uneven) {
    CHECK(s.row_ids.size() == 3);
    assigned.insert(s.row_ids.begin(), s.row_ids.end());
  }
  CHECK(assigned.size() == 9);  // exactly one row unassigned

  CHECK_THROWS_AS(make_partition(5, 6, SeedSpec{3, 0}), InvalidParameterError);
}

TEST_CASE("partition_subset reproduces make_partition lazily") {
  const SeedSpec seed{42, 7};
  const auto full = make_partition(101, 10, seed);
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(full.size()); ++j) {
    const auto lazy = partition_subset(101, 10, seed, j);
    CHECK(lazy.row_ids == full[static_cast<std::size_t>(j)].row_ids);
  }
  CHECK_THROWS_AS(partition_subset(101, 10, seed, 10), InvalidParameterError);
}

TEST_CASE("partition assignment is exchangeable (Monte Carlo)") {
  // Chi-square GOF for one fixed row's subset id over seeded partitions, and
  // 3-sigma frequency bands for a few rows' membership in subset 0.
  const std::int64_t n = 1000, b = 100;
  const int reps = 2000;
  std::map<std::int64_t, int> label_counts;
  int first_in_subset0 = 0, mid_in_subset0 = 0, last_in_subset0 = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto parts = make_partition(n, b, SeedSpec{500 + static_cast<std::uint64_t>(rep), 0});
    for (const auto& s : parts) {
      for (auto row : s.row_ids) {
        if (row == 17) ++label_counts[s.subset_id];
        if (s.subset_id == 0) {
          if (row == 0) ++first_in_subset0;
          if (row == n / 2) ++mid_in_subset0;
          if (row == n - 1) ++last_in_subset0;
        }
      }
    }
  }
  double chi2 = 0.0;
  const double expected = reps / 10.0;
  for (std::int64_t j = 0; j < 10; ++j) chi2 += std::pow(label_counts[j] - expected, 2) / expected;
  CHECK(ts::chi2_p(chi2, 9) > 0.01);
  // sd of the frequency is sqrt(.1*.9/2000) ~ 0.0067; 0.02 is a 3-sigma band
  CHECK(std::abs(first_in_subset0 / double(reps) - 0.1) < 0.02);
  CHECK(std::abs(mid_in_subset0 / double(reps) - 0.1) < 0.02);
  CHECK(std::abs(last_in_subset0 / double(reps) - 0.1) < 0.02);
}

TEST_CASE("draw_subset: exhaustive case, validation, enumeration oracle") {
  const auto all = draw_subset(7, 7, SeedSpec{1, 0});
  CHECK(all.row_ids == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(draw_subset(3, 4, SeedSpec{1, 0}), InvalidParameterError);

  // All C(5,2) = 10 pairs equally likely: frequencies 0.1 +/- 0.005 and a
  // chi-square over the enumerated outcomes.
  std::map<std::pair<std::int64_t, std::int64_t>, int> counts;
  const int reps = 100000;
  for (int rep = 0; rep < reps; ++rep) {
    const auto s = draw_subset(5, 2, SeedSpec{900 + static_cast<std::uint64_t>(rep), 0});
    counts[{s.row_ids[0], s.row_ids[1]}]++;
  }
  REQUIRE(counts.size() == 10);
  double chi2 = 0.0;
  for (const auto& [pair, count] : counts) {
    CHECK(std::abs(count / double(reps) - 0.1) < 0.005);
    chi2 += std::pow(count - reps / 10.0, 2) / (reps / 10.0);
  }
  CHECK(ts::chi2_p(chi2, 9) > 0.01);
}

TEST_CASE("draw_subset singleton marginals are uniform") {
  std::vector<int> counts(10, 0);
  const int reps = 10000;
  for (int rep = 0; rep < reps; ++rep) {
    ++counts[static_cast<std::size_t>(
        draw_subset(10, 1, SeedSpec{3000 + static_cast<std::uint64_t>(rep), 0}).row_ids[0])];
  }
  for (int c : counts) CHECK(std::abs(c / double(reps) - 0.1) < 0.01);
}

TEST_CASE("materialize: identity gather equals the full table") {
  Eigen::MatrixXd values(6, 2);
  values << 1, 10, 2, 20, 3, 30, 4, 40, 5, 50, 6, 60;
  const Schema schema{{"y", ColumnKind::Numeric}, {"x", ColumnKind::Numeric}};
  const auto ds = ChunkedDataset::from_matrix(schema, values, 4);
  FunctionalSpec spec;
  spec.outcome = "y";
  spec.predictors = {"x"};
  SubsetIndex idx;
  idx.n = 6;
  idx.b = 6;
  idx.row_ids = {0, 1, 2, 3, 4, 5};
  const auto mat = materialize(ds, idx, spec);
  CHECK(mat.design.col(0) == Eigen::VectorXd::Ones(6));
  CHECK(mat.design.col(1) == values.col(1));
  CHECK(mat.outcome == values.col(0));
  CHECK(mat.coefficient_names == std::vector<std::string>{"(intercept)", "x"});
}

TEST_CASE("materialize: random subset equals direct row lookups") {
  Rng rng(SeedSpec{1234, 0});
  Eigen::MatrixXd values(10000, 3);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    values(i, 0) = rng.next_normal();
    values(i, 1) = rng.next_normal();
    values(i, 2) = rng.next_normal();
  }
  const Schema schema{{"y", ColumnKind::Numeric}, {"x1", ColumnKind::Numeric},
                      {"x2", ColumnKind::Numeric}};
  const auto ds = ChunkedDataset::from_matrix(schema, values, 512);
  FunctionalSpec spec;
  spec.outcome = "y";
  spec.predictors = {"x1", "x2"};
  const auto idx = draw_subset(10000, 100, SeedSpec{77, 0});
  const auto mat = materialize(ds, idx, spec);
  for (std::size_t i = 0; i < idx.row_ids.size(); ++i) {
    const auto row = idx.row_ids[i];
    REQUIRE(mat.outcome(static_cast<Eigen::Index>(i)) == values(row, 0));
    REQUIRE(mat.design(static_cast<Eigen::Index>(i), 1) == values(row, 1));
    REQUIRE(mat.design(static_cast<Eigen::Index>(i), 2) == values(row, 2));
  }
  CHECK_THROWS_AS(materialize(ds, [] {
                    SubsetIndex bad;
                    bad.row_ids = {10000};
                    return bad;
                  }(), spec),
                  MaterializeError);
}

TEST_CASE("materialize on a CSV source reads each block once, in order") {
  std::string csv = "y,x\n";
  Rng rng(SeedSpec{55, 0});
  for (int i = 0; i < 1000; ++i) {
    csv += std::to_string(i) + "," + std::to_string(rng.next_double()) + "\n";
  }
  const auto path = write_file("scan.csv", csv);
  const auto ds = ChunkedDataset::from_csv(
      path.string(), {{"y", ColumnKind::Numeric}, {"x", ColumnKind::Numeric}}, 100);
  ds.enable_access_log();
  FunctionalSpec spec;
  spec.outcome = "y";
  spec.predictors = {"x"};
  const auto idx = draw_subset(1000, 50, SeedSpec{5, 0});
  (void)materialize(ds, idx, spec);
  const auto log = ds.take_access_log();
  CHECK(!log.empty());
  CHECK(log.size() <= 10);  // never more than one visit per block
  for (std::size_t i = 1; i < log.size(); ++i) REQUIRE(log[i] > log[i - 1]);
}

TEST_CASE("categorical predictors expand to dummies against sorted levels") {
  const Schema schema{{"y", ColumnKind::Numeric}, {"g", ColumnKind::Categorical}};
  std::vector<std::vector<std::string>> cols{{"1", "2", "3", "4"}, {"b", "a", "c", "a"}};
  const auto ds = ChunkedDataset::from_memory(schema, cols);
  FunctionalSpec spec;
  spec.outcome = "y";
  spec.predictors = {"g"};
  SubsetIndex idx;
  idx.row_ids = {0, 1, 2, 3};
  const auto mat = materialize(ds, idx, spec);
  // levels sorted: a (reference), b, c -> two dummy columns
  REQUIRE(mat.design.cols() == 3);
  CHECK(mat.coefficient_names == std::vector<std::string>{"(intercept)", "g=b", "g=c"});
  CHECK(mat.design(0, 1) == 1.0);  // "b"
  CHECK(mat.design(0, 2) == 0.0);
  CHECK(mat.design(1, 1) == 0.0);  // "a" reference
  CHECK(mat.design(2, 2) == 1.0);  // "c"

  // constant categorical in a subset: dummies constant, no error here
  SubsetIndex sub;
  sub.row_ids = {1, 3};
  const auto constant = materialize(ds, sub, spec);
  CHECK(constant.design.col(1).isZero());
  CHECK(constant.design.col(2).isZero());
}

TEST_CASE("cluster layout: contiguity and constant size are enforced") {
  const Schema schema{{"y", ColumnKind::Numeric}, {"c", ColumnKind::GroupId}};
  Eigen::MatrixXd good(6, 2);
  good << 1, 0, 2, 0, 3, 0, 4, 1, 5, 1, 6, 1;
  const auto ds = ChunkedDataset::from_matrix(schema, good);
  REQUIRE(ds.clusters().has_value());
  CHECK(ds.clusters()->n_clusters == 2);
  CHECK(ds.clusters()->cluster_size == 3);

  Eigen::MatrixXd uneven(5, 2);
  uneven << 1, 0, 2, 0, 3, 0, 4, 1, 5, 1;
  CHECK_THROWS_AS(ChunkedDataset::from_matrix(schema, uneven), IngestError);

  Eigen::MatrixXd split(6, 2);
  split << 1, 0, 2, 0, 3, 1, 4, 1, 5, 0, 6, 0;
  CHECK_THROWS_AS(ChunkedDataset::from_matrix(schema, split), IngestError);
}

TEST_CASE("mixed materialization expands cluster ids to their rows") {
  const Schema schema{{"y", ColumnKind::Numeric}, {"x", ColumnKind::Numeric},
                      {"c", ColumnKind::GroupId}};
  Eigen::MatrixXd values(9, 3);
  for (int i = 0; i < 9; ++i) {
    values(i, 0) = i;
    values(i, 1) = 10 * i;
    values(i, 2) = i / 3;
  }
  const auto ds = ChunkedDataset::from_matrix(schema, values);
  FunctionalSpec spec;
  spec.kind = FunctionalKind::Mixed;
  spec.outcome = "y";
  spec.predictors = {"x"};
  spec.group = "c";
  CHECK(unit_count(ds, spec) == 3);
  SubsetIndex idx;
  idx.row_ids = {0, 2};  // cluster ids
  const auto mat = materialize(ds, idx, spec);
  CHECK(mat.n_units == 2);
  CHECK(mat.cluster_size == 3);
  REQUIRE(mat.design.rows() == 6);
  CHECK(mat.outcome(0) == 0.0);
  CHECK(mat.outcome(3) == 6.0);  // first row of cluster 2
  CHECK(mat.group_ids == std::vector<std::int64_t>{0, 0, 0, 2, 2, 2});
}

TEST_CASE("partition JSON export carries ids for audit and replay") {
  const auto parts = make_partition(6, 3, SeedSpec{10, 0});
  const auto json = partition_to_json(parts);
  CHECK(json.find("\"s\":2") != std::string::npos);
  CHECK(json.find("row_ids") != std::string::npos);
}

}  // TEST_SUITE
