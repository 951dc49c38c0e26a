#include "scalebb/data.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace scalebb {

namespace {

// --- CSV primitives --------------------------------------------------------

// Reads one CSV record (RFC-4180-style: quoted fields, "" escapes, CRLF).
// Returns false at end of input. Quoted fields may span lines. Line-based so
// the bulk of the work is memchr inside getline, not per-character reads.
bool read_record(std::istream& in, std::string& line, std::vector<std::string>& fields) {
  fields.clear();
  if (!std::getline(in, line)) return false;
  // a record continues past the newline while a quote is open
  while (std::count(line.begin(), line.end(), '"') % 2 != 0) {
    std::string more;
    if (!std::getline(in, more)) break;
    line += '\n';
    line += more;
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::string field;
  bool in_quotes = false;
  bool at_field_start = true;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && at_field_start) {
      in_quotes = true;
      at_field_start = false;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      at_field_start = true;
    } else {
      field.push_back(c);
      at_field_start = false;
    }
  }
  fields.push_back(std::move(field));
  return true;
}

std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& raw, double& out) {
  const std::string t = trimmed(raw);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

bool parse_int64(const std::string& raw, std::int64_t& out) {
  const std::string t = trimmed(raw);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

// Streaming validator for the uniform-cluster layout (contiguous groups,
// constant size). Keeps O(#clusters) ids to reject reappearing groups.
class ClusterValidator {
 public:
  void observe(std::int64_t group) {
    if (!started_) {
      started_ = true;
      current_ = group;
      run_ = 1;
      seen_.insert(group);
      return;
    }
    if (group == current_) {
      ++run_;
      return;
    }
    close_run();
    if (!seen_.insert(group).second) {
      throw IngestError("group column is not contiguous: id " + std::to_string(group) +
                        " appears in separate runs");
    }
    current_ = group;
    run_ = 1;
  }

  std::optional<ClusterInfo> finish() {
    if (!started_) return std::nullopt;
    close_run();
    return ClusterInfo{static_cast<std::int64_t>(seen_.size()), size_};
  }

 private:
  void close_run() {
    if (size_ == 0) {
      size_ = static_cast<int>(run_);
    } else if (run_ != size_) {
      throw IngestError("clusters must have constant size; group " + std::to_string(current_) +
                        " has " + std::to_string(run_) + " rows, expected " + std::to_string(size_));
    }
    run_ = 0;
  }

  bool started_ = false;
  std::int64_t current_ = 0;
  std::int64_t run_ = 0;
  int size_ = 0;
  std::unordered_set<std::int64_t> seen_;
};

}  // namespace

// --- Dataset internals ------------------------------------------------------

struct ChunkedDataset::Impl {
  bool in_memory = false;
  Eigen::MatrixXd values;  // in-memory backend: rows x columns, level codes for categoricals

  std::string path;                          // CSV backend
  std::vector<int> field_positions;          // schema column -> CSV field index
  std::vector<std::uint64_t> block_offsets;  // byte offset of each block's first kept record

  std::vector<std::vector<std::string>> levels;                    // per column
  std::vector<std::unordered_map<std::string, int>> level_codes;   // per column
};

std::int64_t ChunkedDataset::n_blocks() const {
  return (n_rows_ + block_size_ - 1) / block_size_;
}

int ChunkedDataset::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    if (schema_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const std::vector<std::string>& ChunkedDataset::levels(int column) const {
  return impl_->levels.at(static_cast<std::size_t>(column));
}

void ChunkedDataset::enable_access_log() const { access_log_->enabled = true; }

void ChunkedDataset::log_access(std::int64_t block) const {
  if (!access_log_->enabled) return;
  std::lock_guard<std::mutex> lock(access_log_->mutex);
  access_log_->entries.push_back(block);
}

std::vector<std::int64_t> ChunkedDataset::take_access_log() const {
  std::lock_guard<std::mutex> lock(access_log_->mutex);
  std::vector<std::int64_t> out;
  out.swap(access_log_->entries);
  return out;
}

namespace {

class MemoryCursor final : public BlockCursor {
 public:
  MemoryCursor(const ChunkedDataset* ds, const Eigen::MatrixXd* values)
      : ds_(ds), values_(values) {}

  Eigen::Ref<const Eigen::MatrixXd> read(std::int64_t block) override {
    const std::int64_t bs = ds_->block_size();
    const std::int64_t first = block * bs;
    if (block < 0 || first >= ds_->n_rows()) {
      throw MaterializeError("block index out of range: " + std::to_string(block));
    }
    ds_->log_access(block);
    const std::int64_t nr = std::min(bs, ds_->n_rows() - first);
    return values_->middleRows(first, nr);
  }

 private:
  const ChunkedDataset* ds_;
  const Eigen::MatrixXd* values_;
};

}  // namespace

class CsvCursor final : public BlockCursor {
 public:
  CsvCursor(const ChunkedDataset* ds, std::shared_ptr<const ChunkedDataset::Impl> impl)
      : ds_(ds), impl_(std::move(impl)), in_(impl_->path, std::ios::binary) {
    if (!in_) throw MaterializeError("cannot reopen dataset source: " + impl_->path);
    buffer_.resize(ds_->block_size(), static_cast<Eigen::Index>(ds_->schema().size()));
  }

  Eigen::Ref<const Eigen::MatrixXd> read(std::int64_t block) override {
    const std::int64_t bs = ds_->block_size();
    const std::int64_t first = block * bs;
    if (block < 0 || first >= ds_->n_rows()) {
      throw MaterializeError("block index out of range: " + std::to_string(block));
    }
    ds_->log_access(block);
    const std::int64_t nr = std::min(bs, ds_->n_rows() - first);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(impl_->block_offsets[static_cast<std::size_t>(block)]));
    const auto& schema = ds_->schema();
    std::vector<std::string> fields;
    std::string line;
    std::int64_t got = 0;
    while (got < nr) {
      if (!read_record(in_, line, fields)) {
        throw MaterializeError("dataset source truncated while reading block " + std::to_string(block));
      }
      bool missing = false;
      for (std::size_t c = 0; c < schema.size(); ++c) {
        const int pos = impl_->field_positions[c];
        if (pos >= static_cast<int>(fields.size()) || trimmed(fields[static_cast<std::size_t>(pos)]).empty()) {
          missing = true;
          break;
        }
      }
      if (missing) continue;  // complete-case rule, re-applied on every scan
      for (std::size_t c = 0; c < schema.size(); ++c) {
        const std::string& raw = fields[static_cast<std::size_t>(impl_->field_positions[c])];
        double v = 0.0;
        switch (schema[c].kind) {
          case ColumnKind::Numeric:
            if (!parse_double(raw, v)) {
              throw MaterializeError("non-numeric token re-reading column '" + schema[c].name + "'");
            }
            break;
          case ColumnKind::GroupId: {
            std::int64_t g = 0;
            if (!parse_int64(raw, g)) {
              throw MaterializeError("non-integer group id re-reading column '" + schema[c].name + "'");
            }
            v = static_cast<double>(g);
            break;
          }
          case ColumnKind::Categorical: {
            const auto& codes = impl_->level_codes[c];
            auto it = codes.find(trimmed(raw));
            if (it == codes.end()) {
              throw MaterializeError("categorical level absent from dictionary: column '" +
                                     schema[c].name + "', value '" + trimmed(raw) + "'");
            }
            v = static_cast<double>(it->second);
            break;
          }
        }
        buffer_(got, static_cast<Eigen::Index>(c)) = v;
      }
      ++got;
    }
    return buffer_.topRows(nr);
  }

 private:
  const ChunkedDataset* ds_;
  std::shared_ptr<const ChunkedDataset::Impl> impl_;
  std::ifstream in_;
  Eigen::MatrixXd buffer_;
};

std::unique_ptr<BlockCursor> ChunkedDataset::open_cursor() const {
  if (impl_->in_memory) {
    return std::make_unique<MemoryCursor>(this, &impl_->values);
  }
  return std::make_unique<CsvCursor>(this, impl_);
}

// --- Ingest -----------------------------------------------------------------

ChunkedDataset ChunkedDataset::from_csv(const std::string& path, const Schema& schema,
                                        std::int64_t block_size) {
  if (block_size < 1) throw InvalidParameterError("block_size must be >= 1");
  if (schema.empty()) throw InvalidParameterError("schema must not be empty");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open file: " + path);

  std::vector<std::string> header;
  std::string linebuf;
  if (!read_record(in, linebuf, header)) throw IngestError("empty file: " + path);

  auto impl = std::make_shared<Impl>();
  impl->path = path;
  impl->field_positions.resize(schema.size(), -1);
  for (std::size_t c = 0; c < schema.size(); ++c) {
    for (std::size_t f = 0; f < header.size(); ++f) {
      if (trimmed(header[f]) == schema[c].name) {
        impl->field_positions[c] = static_cast<int>(f);
        break;
      }
    }
    if (impl->field_positions[c] < 0) {
      throw IngestError("missing column '" + schema[c].name + "' in " + path);
    }
  }

  std::vector<std::set<std::string>> level_sets(schema.size());
  ClusterValidator cluster_check;
  bool has_group = false;
  for (const auto& col : schema) has_group |= (col.kind == ColumnKind::GroupId);

  std::vector<std::string> fields;
  std::int64_t kept = 0, dropped = 0, record_no = 0;
  for (;;) {
    const auto offset = static_cast<std::uint64_t>(in.tellg());
    if (!read_record(in, linebuf, fields)) break;
    ++record_no;
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank trailing line
    bool missing = false;
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const int pos = impl->field_positions[c];
      if (pos >= static_cast<int>(fields.size()) || trimmed(fields[static_cast<std::size_t>(pos)]).empty()) {
        missing = true;
        break;
      }
    }
    if (missing) {
      ++dropped;
      continue;
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const std::string& raw = fields[static_cast<std::size_t>(impl->field_positions[c])];
      switch (schema[c].kind) {
        case ColumnKind::Numeric: {
          double v;
          if (!parse_double(raw, v)) {
            throw IngestError("non-numeric token at row " + std::to_string(record_no) +
                              ", column '" + schema[c].name + "': '" + trimmed(raw) + "'");
          }
          break;
        }
        case ColumnKind::GroupId: {
          std::int64_t g;
          if (!parse_int64(raw, g)) {
            throw IngestError("non-integer group id at row " + std::to_string(record_no) +
                              ", column '" + schema[c].name + "'");
          }
          if (has_group) cluster_check.observe(g);
          break;
        }
        case ColumnKind::Categorical:
          level_sets[c].insert(trimmed(raw));
          break;
      }
    }
    if (kept % block_size == 0) impl->block_offsets.push_back(offset);
    ++kept;
  }
  if (kept == 0) throw IngestError("no usable rows in " + path);

  impl->levels.resize(schema.size());
  impl->level_codes.resize(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].kind != ColumnKind::Categorical) continue;
    impl->levels[c].assign(level_sets[c].begin(), level_sets[c].end());
    for (std::size_t l = 0; l < impl->levels[c].size(); ++l) {
      impl->level_codes[c][impl->levels[c][l]] = static_cast<int>(l);
    }
  }

  ChunkedDataset ds;
  ds.impl_ = std::move(impl);
  ds.schema_ = schema;
  ds.n_rows_ = kept;
  ds.block_size_ = block_size;
  ds.n_dropped_ = dropped;
  ds.clusters_ = cluster_check.finish();
  return ds;
}

ChunkedDataset ChunkedDataset::from_memory(const Schema& schema,
                                           std::vector<std::vector<std::string>> columns,
                                           std::int64_t block_size) {
  if (block_size < 1) throw InvalidParameterError("block_size must be >= 1");
  if (columns.size() != schema.size()) {
    throw InvalidParameterError("from_memory: column count does not match schema");
  }
  const std::size_t n = columns.empty() ? 0 : columns[0].size();
  for (const auto& col : columns) {
    if (col.size() != n) throw InvalidParameterError("from_memory: ragged columns");
  }
  if (n == 0) throw IngestError("from_memory: empty table");

  auto impl = std::make_shared<Impl>();
  impl->in_memory = true;
  impl->levels.resize(schema.size());
  impl->level_codes.resize(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].kind != ColumnKind::Categorical) continue;
    std::set<std::string> level_set;
    for (const auto& value : columns[c]) level_set.insert(trimmed(value));
    impl->levels[c].assign(level_set.begin(), level_set.end());
    for (std::size_t l = 0; l < impl->levels[c].size(); ++l) {
      impl->level_codes[c][impl->levels[c][l]] = static_cast<int>(l);
    }
  }

  Eigen::MatrixXd values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(schema.size()));
  ClusterValidator cluster_check;
  bool has_group = false;
  for (const auto& col : schema) has_group |= (col.kind == ColumnKind::GroupId);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const std::string& raw = columns[c][r];
      double v = 0.0;
      switch (schema[c].kind) {
        case ColumnKind::Numeric:
          if (!parse_double(raw, v)) {
            throw IngestError("non-numeric token at row " + std::to_string(r + 1) +
                              ", column '" + schema[c].name + "': '" + trimmed(raw) + "'");
          }
          break;
        case ColumnKind::GroupId: {
          std::int64_t g;
          if (!parse_int64(raw, g)) {
            throw IngestError("non-integer group id at row " + std::to_string(r + 1) +
                              ", column '" + schema[c].name + "'");
          }
          if (has_group) cluster_check.observe(g);
          v = static_cast<double>(g);
          break;
        }
        case ColumnKind::Categorical:
          v = static_cast<double>(impl->level_codes[c].at(trimmed(raw)));
          break;
      }
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  impl->values = std::move(values);

  ChunkedDataset ds;
  ds.impl_ = std::move(impl);
  ds.schema_ = schema;
  ds.n_rows_ = static_cast<std::int64_t>(n);
  ds.block_size_ = block_size;
  ds.clusters_ = cluster_check.finish();
  return ds;
}

ChunkedDataset ChunkedDataset::from_matrix(const Schema& schema, Eigen::MatrixXd values,
                                           std::int64_t block_size) {
  if (block_size < 1) throw InvalidParameterError("block_size must be >= 1");
  if (values.cols() != static_cast<Eigen::Index>(schema.size())) {
    throw InvalidParameterError("from_matrix: column count does not match schema");
  }
  if (values.rows() == 0) throw IngestError("from_matrix: empty table");
  for (const auto& col : schema) {
    if (col.kind == ColumnKind::Categorical) {
      throw InvalidParameterError("from_matrix: categorical columns need from_memory");
    }
  }
  auto impl = std::make_shared<Impl>();
  impl->in_memory = true;
  impl->levels.resize(schema.size());
  impl->level_codes.resize(schema.size());

  ClusterValidator cluster_check;
  std::optional<ClusterInfo> clusters;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].kind == ColumnKind::GroupId) {
      for (Eigen::Index r = 0; r < values.rows(); ++r) {
        cluster_check.observe(static_cast<std::int64_t>(values(r, static_cast<Eigen::Index>(c))));
      }
      clusters = cluster_check.finish();
    }
  }
  const std::int64_t n_rows = static_cast<std::int64_t>(values.rows());
  impl->values = std::move(values);

  ChunkedDataset ds;
  ds.impl_ = std::move(impl);
  ds.schema_ = schema;
  ds.n_rows_ = n_rows;
  ds.block_size_ = block_size;
  ds.clusters_ = clusters;
  return ds;
}

void ChunkedDataset::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open for writing: " + path);
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    if (c) out << ',';
    out << csv_escape(schema_[c].name);
  }
  out << '\n';
  auto cursor = open_cursor();
  char buf[64];
  for (std::int64_t bi = 0; bi < n_blocks(); ++bi) {
    auto block = cursor->read(bi);
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      for (std::size_t c = 0; c < schema_.size(); ++c) {
        if (c) out << ',';
        const double v = block(r, static_cast<Eigen::Index>(c));
        switch (schema_[c].kind) {
          case ColumnKind::Numeric:
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf;
            break;
          case ColumnKind::GroupId:
            std::snprintf(buf, sizeof buf, "%" PRId64, static_cast<std::int64_t>(v));
            out << buf;
            break;
          case ColumnKind::Categorical:
            out << csv_escape(impl_->levels[c][static_cast<std::size_t>(v)]);
            break;
        }
      }
      out << '\n';
    }
  }
}

// --- Partitioning and subsampling --------------------------------------------

namespace {

// Fenwick tree over label capacities; find() maps a uniform draw on the
// remaining mass to its label.
class CapacityTree {
 public:
  explicit CapacityTree(const std::vector<std::int64_t>& caps)
      : n_(caps.size()), tree_(caps.size() + 1, 0) {
    for (std::size_t i = 0; i < caps.size(); ++i) add(i, caps[i]);
  }

  void add(std::size_t i, std::int64_t delta) {
    for (std::size_t k = i + 1; k <= n_; k += k & (~k + 1)) tree_[k] += delta;
  }

  // Smallest label whose cumulative capacity exceeds t.
  std::size_t find(std::int64_t t) const {
    std::size_t pos = 0;
    std::size_t mask = pow2_;
    while (mask) {
      const std::size_t next = pos + mask;
      if (next <= n_ && tree_[next] <= t) {
        pos = next;
        t -= tree_[next];
      }
      mask >>= 1;
    }
    return pos;
  }

  void finalize_mask() {
    pow2_ = 1;
    while (pow2_ * 2 <= n_) pow2_ *= 2;
  }

 private:
  std::size_t n_;
  std::size_t pow2_ = 1;
  std::vector<std::int64_t> tree_;
};

// Replays the label stream of a uniform partition: each row draws its label
// from the urn of remaining capacities. Same law as shuffling {labels} and
// reading off positions, but O(n/b) state.
template <typename Visit>
void replay_partition_labels(std::int64_t n, std::int64_t b, SeedSpec stream, Visit&& visit) {
  if (b < 1 || b > n) {
    throw InvalidParameterError("partition: requires 1 <= b <= n (got b=" + std::to_string(b) +
                                ", n=" + std::to_string(n) + ")");
  }
  const std::int64_t s = n / b;
  std::vector<std::int64_t> caps(static_cast<std::size_t>(s) + 1, b);
  caps.back() = n - s * b;  // leftover rows stay unassigned
  CapacityTree tree(caps);
  tree.finalize_mask();
  Rng rng(stream);
  std::int64_t remaining = n;
  for (std::int64_t row = 0; row < n; ++row) {
    const auto t = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(remaining)));
    const std::size_t label = tree.find(t);
    tree.add(label, -1);
    --remaining;
    visit(row, static_cast<std::int64_t>(label));
  }
}

}  // namespace

std::vector<SubsetIndex> make_partition(std::int64_t n, std::int64_t b, SeedSpec stream) {
  const std::int64_t s = (b >= 1 && b <= n) ? n / b : 0;
  std::vector<SubsetIndex> subsets(static_cast<std::size_t>(std::max<std::int64_t>(s, 0)));
  for (std::int64_t j = 0; j < s; ++j) {
    subsets[static_cast<std::size_t>(j)].subset_id = j;
    subsets[static_cast<std::size_t>(j)].b = b;
    subsets[static_cast<std::size_t>(j)].n = n;
    subsets[static_cast<std::size_t>(j)].row_ids.reserve(static_cast<std::size_t>(b));
  }
  replay_partition_labels(n, b, stream, [&](std::int64_t row, std::int64_t label) {
    if (label < s) subsets[static_cast<std::size_t>(label)].row_ids.push_back(row);
  });
  return subsets;
}

SubsetIndex partition_subset(std::int64_t n, std::int64_t b, SeedSpec stream,
                             std::int64_t subset_id) {
  if (subset_id < 0 || (b >= 1 && subset_id >= n / b)) {
    throw InvalidParameterError("partition_subset: subset_id out of range");
  }
  SubsetIndex out;
  out.subset_id = subset_id;
  out.b = b;
  out.n = n;
  out.row_ids.reserve(static_cast<std::size_t>(b));
  replay_partition_labels(n, b, stream, [&](std::int64_t row, std::int64_t label) {
    if (label == subset_id) out.row_ids.push_back(row);
  });
  return out;
}

SubsetIndex draw_subset(std::int64_t n, std::int64_t b, SeedSpec stream) {
  if (b < 1 || b > n) {
    throw InvalidParameterError("draw_subset: requires 1 <= b <= n (got b=" + std::to_string(b) +
                                ", n=" + std::to_string(n) + ")");
  }
  Rng rng(stream);
  // Sparse partial Fisher-Yates: only displaced entries are stored, so the
  // draw is exactly uniform with O(b) memory for any n.
  std::unordered_map<std::int64_t, std::int64_t> displaced;
  displaced.reserve(static_cast<std::size_t>(2 * b));
  auto value_at = [&](std::int64_t pos) {
    auto it = displaced.find(pos);
    return it == displaced.end() ? pos : it->second;
  };
  SubsetIndex out;
  out.b = b;
  out.n = n;
  out.row_ids.reserve(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    const std::int64_t j = i + static_cast<std::int64_t>(
        rng.next_below(static_cast<std::uint64_t>(n - i)));
    out.row_ids.push_back(value_at(j));
    displaced[j] = value_at(i);
  }
  std::sort(out.row_ids.begin(), out.row_ids.end());
  return out;
}

// --- Materialization ----------------------------------------------------------

std::string functional_kind_name(FunctionalKind kind) {
  switch (kind) {
    case FunctionalKind::Linear: return "linear";
    case FunctionalKind::Logistic: return "logistic";
    case FunctionalKind::Mixed: return "mixed";
  }
  return "?";
}

FunctionalKind functional_kind_from_name(const std::string& name) {
  if (name == "linear") return FunctionalKind::Linear;
  if (name == "logistic") return FunctionalKind::Logistic;
  if (name == "mixed") return FunctionalKind::Mixed;
  throw ConfigError("unknown functional kind: " + name, "functional.kind");
}

void FunctionalSpec::validate() const {
  if (outcome.empty()) throw InvalidParameterError("functional: outcome column required");
  if (kind == FunctionalKind::Mixed && group.empty()) {
    throw InvalidParameterError("functional: mixed kind requires a group column");
  }
  if (max_iterations < 1) throw InvalidParameterError("functional: max_iterations must be >= 1");
  if (!(gradient_tolerance > 0.0)) {
    throw InvalidParameterError("functional: gradient_tolerance must be > 0");
  }
}

namespace {

struct ResolvedColumns {
  int outcome = -1;
  std::vector<int> predictors;
  int group = -1;
  int width = 0;
  std::vector<std::string> names;
};

ResolvedColumns resolve_columns(const ChunkedDataset& ds, const FunctionalSpec& spec) {
  spec.validate();
  ResolvedColumns rc;
  rc.outcome = ds.column_index(spec.outcome);
  if (rc.outcome < 0) throw MaterializeError("outcome column not found: " + spec.outcome);
  if (ds.schema()[static_cast<std::size_t>(rc.outcome)].kind != ColumnKind::Numeric) {
    throw MaterializeError("outcome column must be numeric: " + spec.outcome);
  }
  if (spec.intercept) {
    rc.width += 1;
    rc.names.push_back("(intercept)");
  }
  for (const auto& name : spec.predictors) {
    const int c = ds.column_index(name);
    if (c < 0) throw MaterializeError("predictor column not found: " + name);
    const auto kind = ds.schema()[static_cast<std::size_t>(c)].kind;
    if (kind == ColumnKind::GroupId) {
      throw MaterializeError("group-id column cannot be a predictor: " + name);
    }
    rc.predictors.push_back(c);
    if (kind == ColumnKind::Numeric) {
      rc.width += 1;
      rc.names.push_back(name);
    } else {
      const auto& lv = ds.levels(c);
      if (lv.empty()) throw MaterializeError("categorical column has no levels: " + name);
      rc.width += static_cast<int>(lv.size()) - 1;
      for (std::size_t l = 1; l < lv.size(); ++l) rc.names.push_back(name + "=" + lv[l]);
    }
  }
  if (rc.width == 0) throw MaterializeError("design matrix would have zero columns");
  if (spec.kind == FunctionalKind::Mixed) {
    rc.group = ds.column_index(spec.group);
    if (rc.group < 0) throw MaterializeError("group column not found: " + spec.group);
    if (ds.schema()[static_cast<std::size_t>(rc.group)].kind != ColumnKind::GroupId) {
      throw MaterializeError("group column must have kind group-id: " + spec.group);
    }
    if (!ds.clusters()) {
      throw MaterializeError("dataset has no cluster layout; mixed functionals need one");
    }
  }
  return rc;
}

}  // namespace

int design_width(const ChunkedDataset& ds, const FunctionalSpec& spec) {
  return resolve_columns(ds, spec).width;
}

std::vector<std::string> coefficient_names(const ChunkedDataset& ds, const FunctionalSpec& spec) {
  return resolve_columns(ds, spec).names;
}

std::int64_t unit_count(const ChunkedDataset& ds, const FunctionalSpec& spec) {
  if (spec.kind == FunctionalKind::Mixed) {
    resolve_columns(ds, spec);  // validates cluster layout
    return ds.clusters()->n_clusters;
  }
  return ds.n_rows();
}

MaterializedSubset materialize(const ChunkedDataset& ds, const SubsetIndex& idx,
                               const FunctionalSpec& spec) {
  const ResolvedColumns rc = resolve_columns(ds, spec);
  const bool mixed = spec.kind == FunctionalKind::Mixed;
  const int m = mixed ? ds.clusters()->cluster_size : 1;
  const std::int64_t unit_limit = mixed ? ds.clusters()->n_clusters : ds.n_rows();

  std::vector<std::int64_t> rows;
  rows.reserve(idx.row_ids.size() * static_cast<std::size_t>(m));
  for (std::int64_t unit : idx.row_ids) {
    if (unit < 0 || unit >= unit_limit) {
      throw MaterializeError("requested unit " + std::to_string(unit) + " beyond " +
                             std::to_string(unit_limit));
    }
    for (int r = 0; r < m; ++r) rows.push_back(unit * m + r);
  }

  MaterializedSubset out;
  out.n_units = static_cast<std::int64_t>(idx.row_ids.size());
  out.cluster_size = m;
  out.coefficient_names = rc.names;
  out.design.resize(static_cast<Eigen::Index>(rows.size()), rc.width);
  out.outcome.resize(static_cast<Eigen::Index>(rows.size()));
  if (rc.group >= 0) out.group_ids.resize(rows.size());

  auto cursor = ds.open_cursor();
  const std::int64_t bs = ds.block_size();
  std::size_t i = 0;
  while (i < rows.size()) {
    const std::int64_t block = rows[i] / bs;
    auto view = cursor->read(block);
    const std::int64_t first = block * bs;
    for (; i < rows.size() && rows[i] / bs == block; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(rows[i] - first);
      const Eigen::Index out_r = static_cast<Eigen::Index>(i);
      int col = 0;
      if (spec.intercept) out.design(out_r, col++) = 1.0;
      for (std::size_t p = 0; p < rc.predictors.size(); ++p) {
        const int c = rc.predictors[p];
        const auto kind = ds.schema()[static_cast<std::size_t>(c)].kind;
        const double v = view(r, c);
        if (kind == ColumnKind::Numeric) {
          out.design(out_r, col++) = v;
        } else {
          const auto& lv = ds.levels(c);
          const int code = static_cast<int>(v);
          if (code < 0 || code >= static_cast<int>(lv.size())) {
            throw MaterializeError("categorical code out of range in column '" +
                                   ds.schema()[static_cast<std::size_t>(c)].name + "'");
          }
          for (int l = 1; l < static_cast<int>(lv.size()); ++l) {
            out.design(out_r, col++) = (code == l) ? 1.0 : 0.0;
          }
        }
      }
      out.outcome(out_r) = view(r, rc.outcome);
      if (rc.group >= 0) {
        out.group_ids[i] = static_cast<std::int64_t>(view(r, rc.group));
      }
    }
  }
  return out;
}

std::string partition_to_json(const std::vector<SubsetIndex>& subsets) {
  nlohmann::json j;
  j["s"] = subsets.size();
  j["b"] = subsets.empty() ? 0 : subsets.front().b;
  j["n"] = subsets.empty() ? 0 : subsets.front().n;
  auto& arr = j["subsets"] = nlohmann::json::array();
  for (const auto& sub : subsets) {
    arr.push_back({{"subset_id", sub.subset_id}, {"row_ids", sub.row_ids}});
  }
  return j.dump();
}

}  // namespace scalebb
