#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "scalebb/errors.hpp"
#include "scalebb/rng.hpp"

namespace scalebb {

enum class ColumnKind { Numeric, Categorical, GroupId };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
};

using Schema = std::vector<ColumnSpec>;

/// Uniform-cluster layout: rows grouped contiguously, constant cluster size.
/// Detected at ingest when the schema declares a group-id column; required by
/// the mixed-effects functional, which resamples whole clusters.
struct ClusterInfo {
  std::int64_t n_clusters = 0;
  int cluster_size = 0;
};

class BlockCursor;

/// Column-typed numeric table streamed in fixed-size row blocks.
///
/// Two backends share one interface: an in-memory table for desk-scale work
/// and a CSV-file backend that re-reads blocks on demand so engines stay
/// memory-bounded at any n. Immutable after ingest; cursors are independent,
/// so concurrent materializations are safe.
class ChunkedDataset {
 public:
  /// Streaming CSV ingest: one pass counts rows, builds categorical level
  /// dictionaries (levels sorted lexicographically; the first is the dummy
  /// reference level) and records block byte offsets. Rows with missing
  /// (empty) fields are dropped, complete-case style; malformed tokens are
  /// an error naming row and column. Peak memory O(block_size * columns).
  static ChunkedDataset from_csv(const std::string& path, const Schema& schema,
                                 std::int64_t block_size = kDefaultBlockSize);

  /// In-memory table. `columns` is column-major, one vector per schema entry;
  /// categorical columns are passed as strings and coded against their sorted
  /// level set.
  static ChunkedDataset from_memory(const Schema& schema,
                                    std::vector<std::vector<std::string>> columns,
                                    std::int64_t block_size = kDefaultBlockSize);

  /// In-memory numeric-only fast path (all columns numeric or group-id).
  static ChunkedDataset from_matrix(const Schema& schema, Eigen::MatrixXd values,
                                    std::int64_t block_size = kDefaultBlockSize);

  std::int64_t n_rows() const { return n_rows_; }
  std::int64_t block_size() const { return block_size_; }
  std::int64_t n_blocks() const;
  std::int64_t n_dropped_rows() const { return n_dropped_; }
  const Schema& schema() const { return schema_; }
  int column_index(const std::string& name) const;  // -1 when absent

  /// Level dictionary of a categorical column, in dictionary (sorted) order.
  const std::vector<std::string>& levels(int column) const;

  const std::optional<ClusterInfo>& clusters() const { return clusters_; }

  /// Opens an independent sequential reader. Blocks come back as a
  /// (rows x columns) matrix with categorical cells holding level codes.
  std::unique_ptr<BlockCursor> open_cursor() const;

  /// Test instrumentation: when enabled, every block read is appended to a
  /// shared log (block indices in read order).
  void enable_access_log() const;
  std::vector<std::int64_t> take_access_log() const;

  /// Re-emits the table as CSV (numeric cells printed with round-trip
  /// precision). Used by the ingest round-trip oracle and for exporting
  /// synthetic datasets.
  void write_csv(const std::string& path) const;

  static constexpr std::int64_t kDefaultBlockSize = 65536;

  // Backend state; defined in data.cpp, shared with the cursors.
  struct Impl;

  /// Cursor instrumentation hook; no-op unless the access log is enabled.
  void log_access(std::int64_t block) const;

 private:
  struct AccessLog {
    std::mutex mutex;
    std::vector<std::int64_t> entries;
    bool enabled = false;
  };

  std::shared_ptr<const Impl> impl_;
  Schema schema_;
  std::int64_t n_rows_ = 0;
  std::int64_t block_size_ = kDefaultBlockSize;
  std::int64_t n_dropped_ = 0;
  std::optional<ClusterInfo> clusters_;
  std::shared_ptr<AccessLog> access_log_ = std::make_shared<AccessLog>();
};

/// Sequential block reader; the returned view stays valid until the next
/// read() on the same cursor.
class BlockCursor {
 public:
  virtual ~BlockCursor() = default;
  /// Reads block `block_index`; rows [first_row(), first_row()+rows()).
  virtual Eigen::Ref<const Eigen::MatrixXd> read(std::int64_t block_index) = 0;
};

/// One element of a random partition (or one random subset) of the row ids.
struct SubsetIndex {
  std::int64_t subset_id = 0;
  std::vector<std::int64_t> row_ids;  // sorted
  std::int64_t b = 0;
  std::int64_t n = 0;
};

/// Random partition of {0..n-1} into floor(n/b) disjoint subsets of size b.
/// Leftover rows (n mod b) stay unassigned; the rescale factor n/b is kept in
/// exact rational form by callers. Exactly uniform: rows are labeled by
/// sequential draws from the shrinking label urn, which induces the same law
/// as shuffling and chunking but needs only O(b + n/b) memory per subset.
std::vector<SubsetIndex> make_partition(std::int64_t n, std::int64_t b, SeedSpec stream);

/// Lazily extracts subset j of the partition make_partition(n, b, stream)
/// would return, without materializing the other subsets.
SubsetIndex partition_subset(std::int64_t n, std::int64_t b, SeedSpec stream,
                             std::int64_t subset_id);

/// Number of subsets in a partition: floor(n/b).
inline std::int64_t partition_count(std::int64_t n, std::int64_t b) { return n / b; }

/// b distinct row ids uniform over all size-b subsets of {0..n-1}. Sparse
/// partial Fisher-Yates (hash-map displacements), O(b) memory for any n.
SubsetIndex draw_subset(std::int64_t n, std::int64_t b, SeedSpec stream);

enum class FunctionalKind { Linear, Logistic, Mixed };
enum class MixedWeightMatrix { Inverse, Literal };

std::string functional_kind_name(FunctionalKind kind);
FunctionalKind functional_kind_from_name(const std::string& name);

/// Declarative description of the statistic T: which columns feed it and
/// which estimator is used.
struct FunctionalSpec {
  FunctionalKind kind = FunctionalKind::Linear;
  std::string outcome;
  std::vector<std::string> predictors;
  bool intercept = true;
  std::string group;  // mixed only
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  // The mixed-effects display is ambiguous about whether the covariance or
  // its inverse enters the quadratic forms; GLS convention (inverse) is the
  // default, switchable for comparison.
  MixedWeightMatrix mixed_weight_matrix = MixedWeightMatrix::Inverse;

  void validate() const;
};

/// Gathered subset rows, ready for functional evaluation. For mixed
/// functionals the unit of resampling is the cluster: rows hold m
/// observations per cluster, contiguously.
struct MaterializedSubset {
  Eigen::MatrixXd design;   // (rows x q), intercept column first when requested
  Eigen::VectorXd outcome;  // rows
  std::vector<std::int64_t> group_ids;  // empty unless a group column is used
  std::int64_t n_units = 0;             // rows, or clusters for mixed
  int cluster_size = 1;
  std::vector<std::string> coefficient_names;
};

/// Gathers the rows of `idx` in one ordered pass over blocks (ids are sorted,
/// so block reads are strictly sequential) and expands categoricals to dummy
/// columns against the ingest-time dictionaries. For mixed specs, idx.row_ids
/// are cluster ids and each expands to its cluster's rows.
MaterializedSubset materialize(const ChunkedDataset& ds, const SubsetIndex& idx,
                               const FunctionalSpec& spec);

/// Width of the design matrix implied by spec against ds's schema.
int design_width(const ChunkedDataset& ds, const FunctionalSpec& spec);

/// Coordinate names in design order: "(intercept)", column names, and
/// "column=level" dummies.
std::vector<std::string> coefficient_names(const ChunkedDataset& ds, const FunctionalSpec& spec);

/// Number of exchangeable units: rows, or clusters when spec is mixed.
std::int64_t unit_count(const ChunkedDataset& ds, const FunctionalSpec& spec);

/// JSON export of a partition, one object per partition, for audit/replay.
std::string partition_to_json(const std::vector<SubsetIndex>& subsets);

}  // namespace scalebb
