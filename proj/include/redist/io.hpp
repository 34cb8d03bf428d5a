#pragma once

// File formats.
//
// Inputs are comma-separated UTF-8 text with a header row:
//   units       unit_id,dataset,pop,vap,<group>_vap...,<group>_pop...
//   adjacency   unit_id_a,unit_id_b
//   assignment  unit_id,district
//
// Ensemble streams and graph snapshots are little-endian binary; the byte
// layout is documented in docs/ensemble_stream.md.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "redist/error.hpp"
#include "redist/graph.hpp"
#include "redist/record.hpp"

namespace redist::io {

// ---------------------------------------------------------------------------
// Delimited text

namespace detail {

/// Splits one CSV line. Double-quoted fields may contain commas; "" escapes a quote.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  for (auto& f : fields) {
    const auto first = f.find_first_not_of(" \t");
    const auto last = f.find_last_not_of(" \t");
    f = first == std::string::npos ? std::string() : f.substr(first, last - first + 1);
  }
  return fields;
}

/// Reads data rows after the header, skipping blank lines. Calls fn(fields, line_no).
class CsvReader {
 public:
  CsvReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      strip(line);
      if (line.empty()) continue;
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      header_ = split_csv(line);
      return;
    }
    throw Error(ErrorKind::ParseError, source_ + ": missing header row");
  }

  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::string& source() const noexcept { return source_; }

  int column(const std::string& name) const {
    auto it = std::find(header_.begin(), header_.end(), name);
    if (it == header_.end()) throw Error(ErrorKind::MissingColumn, source_ + ": no column '" + name + "'");
    return static_cast<int>(it - header_.begin());
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      strip(line);
      if (line.empty()) continue;
      fields = split_csv(line);
      if (fields.size() != header_.size())
        fail("expected " + std::to_string(header_.size()) + " fields, found " + std::to_string(fields.size()));
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what, ErrorKind kind = ErrorKind::ParseError) const {
    throw Error(kind, source_ + ":" + std::to_string(line_no_) + ": " + what);
  }

  int line() const noexcept { return line_no_; }

 private:
  static void strip(std::string& line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  }

  std::istream& in_;
  std::string source_;
  std::vector<std::string> header_;
  int line_no_ = 0;
};

inline Count parse_count(const CsvReader& reader, const std::string& text, const std::string& column) {
  Count value = 0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last)
    reader.fail("column '" + column + "': '" + text + "' is not an integer");
  if (value < 0) reader.fail("column '" + column + "': negative count " + text, ErrorKind::NegativeCount);
  return value;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  return in;
}

}  // namespace detail

/// Maps unit-table columns to attribute roles. Empty group lists are
/// inferred from the header: every `<g>_vap` column is a VAP group and every
/// `<g>_pop` column a population group.
struct UnitSchema {
  std::array<std::string, kNumDatasets> datasets{"published", "reference"};
  std::vector<std::string> vap_groups;
  std::vector<std::string> pop_groups;
};

inline std::vector<GeoUnit> load_units(std::istream& in, const UnitSchema& schema,
                                       const std::string& source = "units") {
  detail::CsvReader reader(in, source);
  const int c_id = reader.column("unit_id");
  const int c_ds = reader.column("dataset");
  const int c_pop = reader.column("pop");
  const int c_vap = reader.column("vap");

  auto infer = [&](const std::vector<std::string>& given, const std::string& suffix) {
    std::vector<std::pair<std::string, int>> cols;
    if (!given.empty()) {
      for (const std::string& g : given) cols.emplace_back(g, reader.column(g + suffix));
      return cols;
    }
    for (std::size_t i = 0; i < reader.header().size(); ++i) {
      const std::string& h = reader.header()[i];
      if (h.size() > suffix.size() && h.compare(h.size() - suffix.size(), suffix.size(), suffix) == 0)
        cols.emplace_back(h.substr(0, h.size() - suffix.size()), static_cast<int>(i));
    }
    return cols;
  };
  const auto vap_cols = infer(schema.vap_groups, "_vap");
  const auto pop_cols = infer(schema.pop_groups, "_pop");

  std::vector<GeoUnit> units;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const std::string& id = fields[c_id];
    if (id.empty()) reader.fail("empty unit_id");
    const std::string& ds = fields[c_ds];
    if (ds != schema.datasets[0] && ds != schema.datasets[1])
      reader.fail("unknown dataset '" + ds + "'", ErrorKind::UnknownDataset);
    AttributeRow row;
    row.pop = detail::parse_count(reader, fields[c_pop], "pop");
    row.vap = detail::parse_count(reader, fields[c_vap], "vap");
    for (const auto& [g, c] : vap_cols) row.group_vap[g] = detail::parse_count(reader, fields[c], g + "_vap");
    for (const auto& [g, c] : pop_cols) row.group_pops[g] = detail::parse_count(reader, fields[c], g + "_pop");

    auto [it, fresh] = index.emplace(id, units.size());
    if (fresh) units.push_back(GeoUnit{id, {}});
    if (!units[it->second].attrs_by_dataset.emplace(ds, std::move(row)).second)
      reader.fail("second row for unit '" + id + "' in dataset '" + ds + "'");
  }
  for (const GeoUnit& u : units)
    for (const std::string& ds : schema.datasets)
      if (!u.attrs_by_dataset.contains(ds))
        throw Error(ErrorKind::MissingDatasetRow, source + ": unit '" + u.unit_id + "' has no '" + ds + "' row");
  return units;
}

inline std::vector<GeoUnit> load_units(const std::string& path, const UnitSchema& schema) {
  auto in = detail::open_input(path);
  return load_units(in, schema, path);
}

/// Undirected edge list by unit id. Self-loops and repeated pairs (in either
/// orientation) are rejected.
inline std::vector<std::pair<std::string, std::string>> load_adjacency(std::istream& in,
                                                                       const std::set<std::string>& known_units,
                                                                       const std::string& source = "adjacency") {
  detail::CsvReader reader(in, source);
  const int c_a = reader.column("unit_id_a");
  const int c_b = reader.column("unit_id_b");
  std::vector<std::pair<std::string, std::string>> edges;
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const std::string& a = fields[c_a];
    const std::string& b = fields[c_b];
    for (const std::string* id : {&a, &b})
      if (!known_units.contains(*id)) reader.fail("unknown unit '" + *id + "'", ErrorKind::UnknownUnit);
    if (a == b) reader.fail("self-loop on '" + a + "'", ErrorKind::SelfLoop);
    if (!seen.emplace(std::min(a, b), std::max(a, b)).second)
      reader.fail("duplicate edge '" + a + "'-'" + b + "'", ErrorKind::DuplicateEdge);
    edges.emplace_back(a, b);
  }
  return edges;
}

inline std::vector<std::pair<std::string, std::string>> load_adjacency(const std::string& path,
                                                                       const std::set<std::string>& known_units) {
  auto in = detail::open_input(path);
  return load_adjacency(in, known_units, path);
}

/// Builds a DualGraph from parsed units and id-keyed edges.
inline DualGraph assemble_graph(const std::vector<GeoUnit>& units,
                                const std::vector<std::pair<std::string, std::string>>& id_edges,
                                const std::array<std::string, kNumDatasets>& datasets) {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < units.size(); ++i) index.emplace(units[i].unit_id, static_cast<int>(i));
  std::vector<std::pair<int, int>> edges;
  edges.reserve(id_edges.size());
  for (const auto& [a, b] : id_edges) {
    auto ia = index.find(a), ib = index.find(b);
    if (ia == index.end() || ib == index.end())
      throw Error(ErrorKind::UnknownUnit, "edge '" + a + "'-'" + b + "' names an unknown unit");
    edges.emplace_back(ia->second, ib->second);
  }
  return build_graph(units, edges, datasets);
}

inline DualGraph load_graph(const std::string& units_path, const std::string& adjacency_path,
                            const UnitSchema& schema) {
  const auto units = load_units(units_path, schema);
  std::set<std::string> ids;
  for (const auto& u : units) ids.insert(u.unit_id);
  return assemble_graph(units, load_adjacency(adjacency_path, ids), schema.datasets);
}

struct LoadedAssignment {
  Partition partition;
  std::vector<std::string> district_labels;  // district index -> label in the file
  bool contiguous = false;
};

/// Reads a unit -> district table. District labels that all parse as
/// integers are ordered numerically, otherwise lexicographically. Enacted
/// plans may be discontiguous on coarse units; that is reported, not rejected.
inline LoadedAssignment load_assignment(std::istream& in, const DualGraph& graph,
                                        const std::string& source = "assignment") {
  detail::CsvReader reader(in, source);
  const int c_id = reader.column("unit_id");
  const int c_d = reader.column("district");
  std::vector<std::string> label_of(graph.num_units());
  std::vector<char> seen(graph.num_units(), 0);
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const int u = graph.find_unit(fields[c_id]);
    if (u < 0) reader.fail("unknown unit '" + fields[c_id] + "'", ErrorKind::UnknownUnit);
    if (seen[u]) reader.fail("unit '" + fields[c_id] + "' assigned twice");
    if (fields[c_d].empty()) reader.fail("empty district label");
    seen[u] = 1;
    label_of[u] = fields[c_d];
  }
  for (int u = 0; u < graph.num_units(); ++u)
    if (!seen[u]) throw Error(ErrorKind::MissingUnit, source + ": unit '" + graph.unit_id(u) + "' not assigned");

  std::set<std::string> distinct(label_of.begin(), label_of.end());
  std::vector<std::string> labels(distinct.begin(), distinct.end());
  const bool numeric = std::all_of(labels.begin(), labels.end(), [](const std::string& s) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
  });
  if (numeric)
    std::sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      return std::stoll(a) < std::stoll(b);
    });
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], static_cast<int>(i));
  std::vector<int> assignment(graph.num_units());
  for (int u = 0; u < graph.num_units(); ++u) assignment[u] = index.at(label_of[u]);

  LoadedAssignment out{Partition(graph, std::move(assignment), static_cast<int>(labels.size())), std::move(labels),
                       false};
  out.contiguous = contiguity_check(graph, out.partition);
  return out;
}

inline LoadedAssignment load_assignment(const std::string& path, const DualGraph& graph) {
  auto in = detail::open_input(path);
  return load_assignment(in, graph, path);
}

/// Writes a unit -> district table that load_assignment reads back.
inline void write_assignment(std::ostream& out, const DualGraph& graph, std::span<const int> assignment) {
  out << "unit_id,district\n";
  for (int u = 0; u < graph.num_units(); ++u) out << graph.unit_id(u) << ',' << assignment[u] << '\n';
}

// ---------------------------------------------------------------------------
// Binary encoding helpers

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  const std::string& bytes() const noexcept { return buf_; }
  void clear() { buf_.clear(); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  bool ok() const noexcept { return ok_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  std::uint64_t uint(int width) {
    if (remaining() < static_cast<std::size_t>(width)) {
      ok_ = false;
      pos_ = data_.size();
      return 0;
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(uint(8)); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    if (!ok_ || remaining() < n) {
      ok_ = false;
      return {};
    }
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

inline std::uint32_t fnv1a32(std::string_view bytes) {
  std::uint32_t h = 0x811C9DC5u;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x01000193u;
  }
  return h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ensemble streams

inline constexpr char kStreamMagic[4] = {'R', 'D', 'E', 'N'};
inline constexpr std::uint8_t kStreamVersion = 1;

/// Self-describing stream header: district count, dataset labels, group schema.
struct StreamHeader {
  std::uint32_t k = 0;
  std::array<std::string, kNumDatasets> datasets;
  Schema schema;

  static StreamHeader for_graph(const DualGraph& graph, int k) {
    return {static_cast<std::uint32_t>(k), graph.dataset_labels(), graph.schema()};
  }

  bool operator==(const StreamHeader&) const = default;
};

/// Append-only writer, one per stream.
class EnsembleWriter {
 public:
  EnsembleWriter(std::ostream& out, StreamHeader header) : out_(out), header_(std::move(header)) {
    detail::ByteWriter w;
    w.raw(std::string_view(kStreamMagic, 4));
    w.u8(kStreamVersion);
    w.u32(header_.k);
    for (const auto& d : header_.datasets) w.str(d);
    w.u32(static_cast<std::uint32_t>(header_.schema.vap_groups.size()));
    for (const auto& g : header_.schema.vap_groups) w.str(g);
    w.u32(static_cast<std::uint32_t>(header_.schema.pop_groups.size()));
    for (const auto& g : header_.schema.pop_groups) w.str(g);
    out_.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  }

  void append(const EnsembleRecord& r) {
    if (static_cast<std::uint32_t>(r.k()) != header_.k || r.reference().size() != header_.k)
      throw Error(ErrorKind::InvalidArgument, "record district count differs from stream header");
    if (count_ > 0 && r.ordinal <= last_ordinal_)
      throw Error(ErrorKind::InvalidArgument, "record ordinals must strictly increase");
    payload_.clear();
    payload_.u64(r.ordinal);
    payload_.u64(r.step);
    payload_.u32(r.subchain);
    payload_.u32(static_cast<std::uint32_t>(r.assignment.size()));
    for (const auto& districts : r.districts) {
      for (const DistrictAggregate& d : districts) {
        if (d.group_vap.size() != header_.schema.vap_groups.size() ||
            d.group_pops.size() != header_.schema.pop_groups.size())
          throw Error(ErrorKind::InvalidArgument, "record group columns differ from stream header");
        payload_.i64(d.pop);
        payload_.i64(d.vap);
        for (Count c : d.group_vap) payload_.i64(c);
        for (Count c : d.group_pops) payload_.i64(c);
      }
    }
    for (int a : r.assignment) payload_.i32(a);
    detail::ByteWriter frame;
    frame.u32(static_cast<std::uint32_t>(payload_.bytes().size()));
    frame.raw(payload_.bytes());
    frame.u32(detail::fnv1a32(payload_.bytes()));
    out_.write(frame.bytes().data(), static_cast<std::streamsize>(frame.bytes().size()));
    if (!out_) throw Error(ErrorKind::Io, "ensemble stream write failed");
    last_ordinal_ = r.ordinal;
    ++count_;
  }

  std::uint64_t count() const noexcept { return count_; }
  const StreamHeader& header() const noexcept { return header_; }

 private:
  std::ostream& out_;
  StreamHeader header_;
  detail::ByteWriter payload_;
  std::uint64_t last_ordinal_ = 0;
  std::uint64_t count_ = 0;
};

/// Sequential reader. A truncated final record ends the stream with a
/// warning; a malformed complete record throws CorruptRecord with its offset.
class EnsembleReader {
 public:
  explicit EnsembleReader(std::string bytes) : bytes_(std::move(bytes)) {
    if (bytes_.empty()) return;
    detail::ByteReader r(bytes_);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (!r.ok() || std::memcmp(magic, kStreamMagic, 4) != 0)
      throw Error(ErrorKind::CorruptRecord, "offset 0: not an ensemble stream");
    const std::uint8_t version = r.u8();
    if (r.ok() && version != kStreamVersion)
      throw Error(ErrorKind::CorruptRecord, "offset 4: unsupported stream version " + std::to_string(version));
    header_.k = r.u32();
    for (auto& d : header_.datasets) d = r.str();
    header_.schema.vap_groups.resize(r.u32());
    for (auto& g : header_.schema.vap_groups) g = r.str();
    header_.schema.pop_groups.resize(r.u32());
    for (auto& g : header_.schema.pop_groups) g = r.str();
    if (!r.ok()) throw Error(ErrorKind::CorruptRecord, "offset 0: truncated stream header");
    pos_ = bytes_.size() - r.remaining();
    has_header_ = true;
  }

  static EnsembleReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return EnsembleReader(ss.str());
  }

  bool has_header() const noexcept { return has_header_; }
  const StreamHeader& header() const noexcept { return header_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  std::optional<EnsembleRecord> next() {
    if (!has_header_ || pos_ >= bytes_.size()) return std::nullopt;
    const std::size_t offset = pos_;
    const std::string_view rest = std::string_view(bytes_).substr(pos_);
    detail::ByteReader frame(rest);
    const std::uint32_t len = frame.u32();
    if (!frame.ok() || rest.size() < 4ull + len + 4ull) {
      warnings_.push_back("truncated record at offset " + std::to_string(offset) + " ignored");
      pos_ = bytes_.size();
      return std::nullopt;
    }
    const std::string_view payload = rest.substr(4, len);
    detail::ByteReader tail(rest.substr(4 + len, 4));
    if (tail.u32() != detail::fnv1a32(payload)) corrupt(offset, "checksum mismatch");

    detail::ByteReader r(payload);
    EnsembleRecord rec;
    rec.ordinal = r.u64();
    rec.step = r.u64();
    rec.subchain = r.u32();
    const std::uint32_t assignment_len = r.u32();
    const std::size_t ng = header_.schema.vap_groups.size(), np = header_.schema.pop_groups.size();
    const std::size_t expected = 24 + kNumDatasets * std::size_t{header_.k} * 8 * (2 + ng + np) + 4ull * assignment_len;
    if (len != expected) corrupt(offset, "length " + std::to_string(len) + " != " + std::to_string(expected));
    for (auto& districts : rec.districts) {
      districts.resize(header_.k);
      for (DistrictAggregate& d : districts) {
        d.pop = r.i64();
        d.vap = r.i64();
        d.group_vap.resize(ng);
        for (Count& c : d.group_vap) c = r.i64();
        d.group_pops.resize(np);
        for (Count& c : d.group_pops) c = r.i64();
      }
    }
    rec.assignment.resize(assignment_len);
    for (int& a : rec.assignment) a = r.i32();
    if (count_ > 0 && rec.ordinal <= last_ordinal_) corrupt(offset, "ordinal does not increase");
    pos_ += 8 + len;
    last_ordinal_ = rec.ordinal;
    ++count_;
    return rec;
  }

 private:
  [[noreturn]] static void corrupt(std::size_t offset, const std::string& what) {
    throw Error(ErrorKind::CorruptRecord, "offset " + std::to_string(offset) + ": " + what);
  }

  std::string bytes_;
  std::size_t pos_ = 0;
  bool has_header_ = false;
  StreamHeader header_;
  std::vector<std::string> warnings_;
  std::uint64_t last_ordinal_ = 0;
  std::uint64_t count_ = 0;
};

struct Ensemble {
  StreamHeader header;
  std::vector<EnsembleRecord> records;
  std::vector<std::string> warnings;
};

inline Ensemble read_records(EnsembleReader reader) {
  Ensemble e{reader.header(), {}, {}};
  while (auto r = reader.next()) e.records.push_back(std::move(*r));
  e.warnings = reader.warnings();
  return e;
}

inline Ensemble read_records(const std::string& path) { return read_records(EnsembleReader::from_file(path)); }

// ---------------------------------------------------------------------------
// Graph snapshots

inline constexpr char kSnapshotMagic[4] = {'R', 'D', 'G', 'S'};
inline constexpr std::uint8_t kSnapshotVersion = 1;

inline void write_graph_snapshot(std::ostream& out, const DualGraph& g) {
  detail::ByteWriter w;
  w.raw(std::string_view(kSnapshotMagic, 4));
  w.u8(kSnapshotVersion);
  for (const auto& d : g.dataset_labels()) w.str(d);
  w.u32(static_cast<std::uint32_t>(g.schema().vap_groups.size()));
  for (const auto& s : g.schema().vap_groups) w.str(s);
  w.u32(static_cast<std::uint32_t>(g.schema().pop_groups.size()));
  for (const auto& s : g.schema().pop_groups) w.str(s);
  w.u32(static_cast<std::uint32_t>(g.num_units()));
  for (int u = 0; u < g.num_units(); ++u) {
    w.str(g.unit_id(u));
    for (int d = 0; d < kNumDatasets; ++d) {
      const Tally& t = g.row(d, u);
      w.i64(t.pop);
      w.i64(t.vap);
      for (Count c : t.group_vap) w.i64(c);
      for (Count c : t.group_pops) w.i64(c);
    }
  }
  w.u32(static_cast<std::uint32_t>(g.num_edges()));
  for (const Edge& e : g.edges()) w.u32(static_cast<std::uint32_t>(e.a)), w.u32(static_cast<std::uint32_t>(e.b));
  w.u64(g.fingerprint());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
}

inline DualGraph read_graph_snapshot(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  detail::ByteReader r(bytes);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (!r.ok() || std::memcmp(magic, kSnapshotMagic, 4) != 0 || r.u8() != kSnapshotVersion)
    throw Error(ErrorKind::CorruptRecord, "offset 0: not a graph snapshot");
  std::array<std::string, kNumDatasets> labels;
  for (auto& l : labels) l = r.str();
  std::vector<std::string> vap(r.u32());
  for (auto& s : vap) s = r.str();
  std::vector<std::string> pop(r.u32());
  for (auto& s : pop) s = r.str();
  const std::uint32_t n = r.u32();
  if (!r.ok() || n > bytes.size()) throw Error(ErrorKind::CorruptRecord, "truncated graph snapshot");
  std::vector<GeoUnit> units(n);
  for (GeoUnit& u : units) {
    u.unit_id = r.str();
    for (const auto& label : labels) {
      AttributeRow row;
      row.pop = r.i64();
      row.vap = r.i64();
      for (const auto& g : vap) row.group_vap[g] = r.i64();
      for (const auto& g : pop) row.group_pops[g] = r.i64();
      u.attrs_by_dataset.emplace(label, std::move(row));
    }
  }
  const std::uint32_t m = r.u32();
  if (!r.ok() || m > bytes.size()) throw Error(ErrorKind::CorruptRecord, "truncated graph snapshot");
  std::vector<std::pair<int, int>> edges(m);
  for (auto& [a, b] : edges) a = static_cast<int>(r.u32()), b = static_cast<int>(r.u32());
  const std::uint64_t fingerprint = r.u64();
  if (!r.ok()) throw Error(ErrorKind::CorruptRecord, "truncated graph snapshot");
  DualGraph g = build_graph(units, edges, labels);
  if (g.fingerprint() != fingerprint) throw Error(ErrorKind::CorruptRecord, "graph snapshot fingerprint mismatch");
  return g;
}

}  // namespace redist::io
