#pragma once

// Command implementations behind the `redist` binary. Everything takes its
// streams as arguments so tests can drive commands in-process.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "redist/redist.hpp"

namespace redist::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Settings: config file values overlaid by flags

// keys whose values are file paths (relative ones in a config file are
// resolved against the config file's directory)
inline const std::set<std::string> kPathKeys{"units", "adjacency", "graph", "assignment",
                                             "ensemble", "geographies", "chains-csv"};

struct KeyHelp {
  const char* key;
  const char* help;
};

inline const std::vector<KeyHelp> kAllKeys{
    {"seed", "base RNG seed"},
    {"workers", "worker threads"},
    {"out", "output directory"},
    {"units", "unit table CSV"},
    {"adjacency", "adjacency CSV"},
    {"graph", "graph snapshot written by ingest (instead of --units/--adjacency)"},
    {"published-label", "dataset label plans are drawn on"},
    {"reference-label", "dataset label plans are judged on"},
    {"assignment", "unit -> district CSV"},
    {"k", "number of districts"},
    {"tau", "population tolerance as a fraction"},
    {"steps", "chain steps"},
    {"interval", "record every n-th step"},
    {"chains", "independent chains"},
    {"retries", "spanning-tree redraws before a step is a self-loop"},
    {"keep-assignments", "store full assignments in the stream (true/false)"},
    {"group", "VAP group label"},
    {"burst-len", "steps per burst"},
    {"num-bursts", "bursts per subchain"},
    {"subchains", "independent burst subchains"},
    {"delta-step", "offset grid step"},
    {"delta-max", "largest offset"},
    {"plans", "plans per offset"},
    {"mode", "sweep mode: fresh or filter"},
    {"repetition", "repetition index for seed derivation"},
    {"repetitions", "independent critical-offset repetitions"},
    {"threshold", "rate threshold (critical-offset) or deviation threshold (diagnose)"},
    {"geographies", "CSV listing name,units,adjacency[,k][,assignment]"},
    {"name", "geography name used in reports"},
    {"ensemble", "ensemble stream file"},
    {"bin-width", "margin bin width in persons"},
    {"bin-range", "margin bin half-range in persons"},
    {"dedup", "count distinct districts once in margin bins (true/false)"},
    {"mu", "noise mean as a fraction of ideal"},
    {"sigma", "noise sd as a fraction of ideal"},
    {"mc-samples", "Monte Carlo plans per offset (0 = quadrature only)"},
    {"chains-csv", "CSV with columns chain,value in draw order"},
};

class Settings {
 public:
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.contains(key); }

  std::string str(const std::string& key, const std::string& fallback) {
    auto it = values_.find(key);
    return record(key, it == values_.end() ? fallback : it->second);
  }

  std::string required(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty())
      throw Error(ErrorKind::InvalidArgument, "--" + key + " is required");
    return record(key, it->second);
  }

  std::optional<std::string> optional(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) return std::nullopt;
    return record(key, it->second);
  }

  std::int64_t integer(const std::string& key, const std::string& fallback) {
    return parse_int(key, str(key, fallback));
  }

  std::int64_t required_integer(const std::string& key) { return parse_int(key, required(key)); }

  double real(const std::string& key, const std::string& fallback) { return parse_real(key, str(key, fallback)); }

  bool flag(const std::string& key, bool fallback) {
    const std::string v = str(key, fallback ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorKind::InvalidArgument, "--" + key + ": expected true or false, got '" + v + "'");
  }

  const std::map<std::string, std::string>& used() const noexcept { return used_; }

  static std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size())
      throw Error(ErrorKind::InvalidArgument, "--" + key + ": '" + v + "' is not an integer");
    return out;
  }

  static double parse_real(const std::string& key, const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size())
      throw Error(ErrorKind::InvalidArgument, "--" + key + ": '" + v + "' is not a number");
    return out;
  }

 private:
  std::string record(const std::string& key, std::string value) {
    if (kPathKeys.contains(key) && !value.empty()) value = fs::absolute(value).lexically_normal().string();
    used_[key] = value;
    return value;
  }

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> used_;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline bool known_key(const std::string& key) {
  return std::any_of(kAllKeys.begin(), kAllKeys.end(), [&](const KeyHelp& k) { return key == k.key; });
}

/// Reads a `key = value` file (# comments) or a JSON run manifest, whose
/// "params" object is taken verbatim.
inline std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const fs::path dir = fs::absolute(path).parent_path();

  std::map<std::string, std::string> out;
  auto put = [&](std::string key, std::string value, const std::string& where) {
    std::replace(key.begin(), key.end(), '_', '-');
    if (!known_key(key)) throw Error(ErrorKind::InvalidArgument, where + ": unknown key '" + key + "'");
    if (kPathKeys.contains(key) && !value.empty() && fs::path(value).is_relative()) value = (dir / value).string();
    out[key] = value;
  };

  if (trim(text).starts_with("{")) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
    if (!j.contains("params") || !j["params"].is_object())
      throw Error(ErrorKind::ParseError, path + ": manifest has no params object");
    for (const auto& [k, v] : j["params"].items()) put(k, v.is_string() ? v.get<std::string>() : v.dump(), path);
    return out;
  }

  std::istringstream lines(text);
  std::string line;
  int no = 0;
  while (std::getline(lines, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path + ":" + std::to_string(no);
    if (eq == std::string::npos) throw Error(ErrorKind::ParseError, where + ": expected key = value");
    put(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t fnv64(std::string_view bytes) {
  detail::Fnv1a h;
  h.bytes(bytes.data(), bytes.size());
  return h.h;
}

/// Collects the files a command writes and their hashes for the manifest.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir_.string() + "': " + ec.message());
  }

  void write(const std::string& name, const std::string& bytes) {
    const fs::path p = dir_ / name;
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write '" + p.string() + "'");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorKind::Io, "short write to '" + p.string() + "'");
    hashes_[name] = hex64(fnv64(bytes));
  }

  const fs::path& dir() const noexcept { return dir_; }
  const std::map<std::string, std::string>& hashes() const noexcept { return hashes_; }

 private:
  fs::path dir_;
  std::map<std::string, std::string> hashes_;
};

struct Context {
  Settings settings;
  std::ostream& out;
  std::ostream& err;
  std::string command;
  json extra = json::object();
  std::optional<std::uint64_t> fingerprint;
};

inline void write_manifest(Context& ctx, Outputs& files) {
  json m;
  m["command"] = ctx.command;
  m["seed"] = ctx.settings.used().contains("seed") ? ctx.settings.used().at("seed") : "";
  m["params"] = ctx.settings.used();
  m["graph_fingerprint"] = ctx.fingerprint ? json(hex64(*ctx.fingerprint)) : json(nullptr);
  m["outputs"] = files.hashes();
  for (const auto& [k, v] : ctx.extra.items()) m[k] = v;
  files.write("manifest.json", m.dump(2) + "\n");
}

inline std::uint64_t seed_of(Settings& s) { return static_cast<std::uint64_t>(s.integer("seed", "1")); }

inline int workers_of(Settings& s) {
  const auto w = s.integer("workers", "1");
  if (w < 1) throw Error(ErrorKind::InvalidArgument, "--workers must be at least 1");
  return static_cast<int>(w);
}

inline double tau_of(Settings& s) {
  const double tau = s.real("tau", "0.05");
  if (!(tau >= 0 && tau < 1)) throw Error(ErrorKind::InvalidArgument, "--tau must lie in [0, 1)");
  return tau;
}

inline int positive_int(Settings& s, const std::string& key, const std::string& fallback) {
  const auto v = s.integer(key, fallback);
  if (v < 1) throw Error(ErrorKind::InvalidArgument, "--" + key + " must be at least 1");
  return static_cast<int>(v);
}

inline io::UnitSchema unit_schema(Settings& s) {
  io::UnitSchema schema;
  schema.datasets = {s.str("published-label", "published"), s.str("reference-label", "reference")};
  return schema;
}

inline DualGraph load_graph(Context& ctx) {
  Settings& s = ctx.settings;
  DualGraph g = [&] {
    if (auto snap = s.optional("graph")) {
      auto in = io::detail::open_input(*snap);
      return io::read_graph_snapshot(in);
    }
    const auto schema = unit_schema(s);
    return io::load_graph(s.required("units"), s.required("adjacency"), schema);
  }();
  ctx.fingerprint = g.fingerprint();
  return g;
}

inline Partition start_plan(Settings& s, const DualGraph& g, int k, double tau, std::uint64_t seed) {
  if (auto path = s.optional("assignment")) {
    const auto loaded = io::load_assignment(*path, g);
    if (loaded.partition.k() != k)
      throw Error(ErrorKind::InvalidInputPartition,
                  *path + ": has " + std::to_string(loaded.partition.k()) + " districts, expected " + std::to_string(k));
    if (!is_valid_plan(g, loaded.partition, tau))
      throw Error(ErrorKind::InvalidInputPartition, *path + ": plan is discontiguous or outside tolerance");
    return loaded.partition;
  }
  Rng rng = Rng(seed).split(0xC0FFEE);
  return seed_partition(g, k, tau, rng);
}

inline std::string stream_bytes(const DualGraph& g, int k, const std::vector<EnsembleRecord>& records) {
  std::ostringstream buf(std::ios::binary);
  io::EnsembleWriter w(buf, io::StreamHeader::for_graph(g, k));
  for (const auto& r : records) w.append(r);
  return buf.str();
}

inline std::string assignment_csv(const DualGraph& g, std::span<const int> a) {
  std::ostringstream buf;
  io::write_assignment(buf, g, a);
  return buf.str();
}

// geographies list: name,units,adjacency[,k][,assignment]
struct GeographyEntry {
  std::string name;
  std::string units;
  std::string adjacency;
  std::optional<int> k;
  std::string assignment;
};

inline std::vector<GeographyEntry> read_geographies(const std::string& path) {
  auto in = io::detail::open_input(path);
  io::detail::CsvReader reader(in, path);
  const fs::path dir = fs::path(path).parent_path();
  auto col = [&](const std::string& name) {
    const auto& h = reader.header();
    auto it = std::find(h.begin(), h.end(), name);
    return it == h.end() ? -1 : static_cast<int>(it - h.begin());
  };
  const int c_name = reader.column("name"), c_units = reader.column("units"), c_adj = reader.column("adjacency");
  const int c_k = col("k"), c_asg = col("assignment");
  auto resolve = [&](const std::string& p) { return p.empty() || fs::path(p).is_absolute() ? p : (dir / p).string(); };
  std::vector<GeographyEntry> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    GeographyEntry e{f[c_name], resolve(f[c_units]), resolve(f[c_adj]), std::nullopt, ""};
    if (c_k >= 0 && !f[c_k].empty()) {
      const auto k = Settings::parse_int("k", f[c_k]);
      if (k < 1) reader.fail("k must be positive");
      e.k = static_cast<int>(k);
    }
    if (c_asg >= 0) e.assignment = resolve(f[c_asg]);
    out.push_back(std::move(e));
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, path + ": no geographies listed");
  return out;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_ingest(Context& ctx) {
  Settings& s = ctx.settings;
  const auto schema = unit_schema(s);
  const std::string units_path = s.required("units");
  const std::string adj_path = s.required("adjacency");
  Outputs files(s.str("out", "redist_out"));

  const auto units = io::load_units(units_path, schema);
  std::set<std::string> ids;
  for (const auto& u : units) ids.insert(u.unit_id);
  const auto pairs = io::load_adjacency(adj_path, ids);

  DualGraph g;
  try {
    g = io::assemble_graph(units, pairs, schema.datasets);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DisconnectedGraph) throw;
    // list the components by unit id
    std::map<std::string, std::string> parent;
    std::function<std::string(const std::string&)> find = [&](const std::string& x) {
      auto it = parent.find(x);
      if (it == parent.end() || it->second == x) return x;
      return it->second = find(it->second);
    };
    for (const auto& id : ids) parent[id] = id;
    for (const auto& [a, b] : pairs) parent[find(a)] = find(b);
    std::map<std::string, std::vector<std::string>> comps;
    for (const auto& u : units) comps[find(u.unit_id)].push_back(u.unit_id);
    std::vector<std::vector<std::string>> listing;
    for (auto& [root, members] : comps) listing.push_back(std::move(members));
    std::sort(listing.begin(), listing.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    ctx.out << "units=" << units.size() << " edges=" << pairs.size() << " connected=no\n";
    for (std::size_t i = 0; i < listing.size(); ++i) {
      ctx.out << "component " << i + 1 << " (" << listing[i].size() << " units):";
      for (std::size_t j = 0; j < listing[i].size() && j < 20; ++j) ctx.out << ' ' << listing[i][j];
      if (listing[i].size() > 20) ctx.out << " ...";
      ctx.out << '\n';
    }
    throw;
  }
  ctx.fingerprint = g.fingerprint();

  std::ostringstream report;
  report << "units=" << g.num_units() << " edges=" << g.num_edges() << " connected=yes\n";
  for (int d = 0; d < kNumDatasets; ++d) {
    const Tally& t = g.total(d);
    report << "dataset " << g.dataset_labels()[d] << ": pop=" << t.pop << " vap=" << t.vap;
    for (std::size_t i = 0; i < g.schema().vap_groups.size(); ++i)
      report << ' ' << g.schema().vap_groups[i] << "_vap=" << t.group_vap[i];
    for (std::size_t i = 0; i < g.schema().pop_groups.size(); ++i)
      report << ' ' << g.schema().pop_groups[i] << "_pop=" << t.group_pops[i];
    report << '\n';
  }
  const Count diff = g.total(kReference).pop - g.total(kPublished).pop;
  if (diff == 0)
    report << "state-level invariant holds\n";
  else
    report << "state-level totals differ by " << diff << " persons\n";
  ctx.out << report.str();

  std::ostringstream snap(std::ios::binary);
  io::write_graph_snapshot(snap, g);
  files.write("graph.snap", snap.str());
  files.write("ingest_summary.txt", report.str());

  std::ifstream adj(adj_path, std::ios::binary);
  std::stringstream adj_bytes;
  adj_bytes << adj.rdbuf();
  ctx.extra["adjacency_provenance"] = {{"path", fs::absolute(adj_path).lexically_normal().string()},
                                       {"fnv64", hex64(fnv64(adj_bytes.str()))},
                                       {"pairs", pairs.size()}};
  write_manifest(ctx, files);
  return 0;
}

inline int cmd_sample(Context& ctx) {
  Settings& s = ctx.settings;
  const DualGraph g = load_graph(ctx);
  const std::uint64_t seed = seed_of(s);
  const int workers = workers_of(s);
  const double tau = tau_of(s);
  const int k = positive_int(s, "k", "2");
  const int chains = positive_int(s, "chains", "1");

  ChainParams params;
  params.tolerance = tau;
  params.steps = static_cast<std::uint64_t>(positive_int(s, "steps", "1000"));
  params.subsample_interval = static_cast<std::uint64_t>(positive_int(s, "interval", "10"));
  params.max_cut_retries = positive_int(s, "retries", "100");
  params.keep_assignments = s.flag("keep-assignments", false);
  Outputs files(s.str("out", "redist_out"));
  params.validate();

  const std::uint64_t per_chain = params.steps / params.subsample_interval;
  std::vector<std::vector<EnsembleRecord>> records(chains);
  std::vector<ChainSummary> summaries(chains);
  std::vector<Partition> starts;
  for (int c = 0; c < chains; ++c) starts.push_back(start_plan(s, g, k, tau, Rng(seed).split(c).seed()));
  parallel_for(static_cast<std::size_t>(chains), workers, [&](std::size_t c) {
    ChainParams p = params;
    p.rng_seed = Rng(seed).split(c).seed();
    summaries[c] = run_chain(g, starts[c], p, [&](const EnsembleRecord& r) { records[c].push_back(r); },
                             static_cast<std::uint32_t>(c), c * per_chain);
  });

  std::vector<EnsembleRecord> all;
  for (auto& chain : records) all.insert(all.end(), std::make_move_iterator(chain.begin()), std::make_move_iterator(chain.end()));
  files.write("ensemble.rden", stream_bytes(g, k, all));
  for (int c = 0; c < chains; ++c) {
    const std::string name = chains == 1 ? "final_assignment.csv" : "final_assignment_" + std::to_string(c) + ".csv";
    files.write(name, assignment_csv(g, summaries[c].final_partition.assignment()));
  }
  std::uint64_t moved = 0;
  for (const auto& sm : summaries) moved += sm.moved_steps;
  ctx.extra["records"] = all.size();
  ctx.extra["moved_steps"] = moved;
  write_manifest(ctx, files);
  ctx.out << "records=" << all.size() << " chains=" << chains << " moved_steps=" << moved << '\n';
  return 0;
}

inline int cmd_bursts(Context& ctx) {
  Settings& s = ctx.settings;
  const DualGraph g = load_graph(ctx);
  const std::uint64_t seed = seed_of(s);
  const int workers = workers_of(s);
  const double tau = tau_of(s);
  const int k = positive_int(s, "k", "2");

  BurstParams bp;
  bp.burst_length = positive_int(s, "burst-len", "10");
  bp.num_bursts = positive_int(s, "num-bursts", "100");
  bp.num_subchains = positive_int(s, "subchains", "10");
  bp.group = s.required("group");
  bp.chain.tolerance = tau;
  bp.chain.rng_seed = seed;
  bp.chain.max_cut_retries = positive_int(s, "retries", "100");
  bp.chain.keep_assignments = s.flag("keep-assignments", false);
  Outputs files(s.str("out", "redist_out"));

  const Partition start = start_plan(s, g, k, tau, seed);
  std::vector<EnsembleRecord> records;
  const BurstResult res = short_burst_run(g, start, bp, [&](const EnsembleRecord& r) { records.push_back(r); }, workers);

  files.write("ensemble.rden", stream_bytes(g, k, records));
  files.write("best_assignment.csv", assignment_csv(g, res.best.assignment()));
  std::ostringstream progress;
  progress << "subchain,burst,best_score\n";
  for (std::size_t c = 0; c < res.best_after_burst.size(); ++c)
    for (std::size_t b = 0; b < res.best_after_burst[c].size(); ++b)
      progress << c << ',' << b + 1 << ',' << res.best_after_burst[c][b] << '\n';
  files.write("burst_progress.csv", progress.str());
  ctx.extra["records"] = records.size();
  ctx.extra["best_score"] = res.best_score;
  ctx.extra["best_subchain"] = res.best_subchain;
  write_manifest(ctx, files);
  ctx.out << "records=" << records.size() << " best_score=" << res.best_score << " best_subchain=" << res.best_subchain
          << '\n';
  return 0;
}

inline lab::Geography geography(Settings& s, const DualGraph& g, const std::string& name, int k) {
  lab::Geography geo;
  geo.name = name;
  geo.graph = &g;
  geo.k = k;
  geo.chain.subsample_interval = static_cast<std::uint64_t>(positive_int(s, "interval", "10"));
  geo.chain.max_cut_retries = positive_int(s, "retries", "100");
  return geo;
}

inline std::vector<double> delta_grid(Settings& s, double tau) {
  const double step = s.real("delta-step", "0.0005");
  const double max = s.real("delta-max", "0.01");
  if (max > tau) throw Error(ErrorKind::InvalidArgument, "--delta-max exceeds --tau");
  return lab::offset_grid(step, max);
}

inline int cmd_sweep(Context& ctx) {
  Settings& s = ctx.settings;
  const DualGraph g = load_graph(ctx);
  const std::uint64_t seed = seed_of(s);
  const int workers = workers_of(s);
  const double tau = tau_of(s);
  const int k = positive_int(s, "k", "2");
  const auto deltas = delta_grid(s, tau);
  const auto plans = static_cast<std::uint64_t>(positive_int(s, "plans", "1000"));
  const std::string mode = s.str("mode", "fresh");
  if (mode != "fresh" && mode != "filter") throw Error(ErrorKind::InvalidArgument, "--mode must be fresh or filter");
  const auto repetition = static_cast<std::uint64_t>(s.integer("repetition", "0"));
  const lab::Geography geo = geography(s, g, s.str("name", "geography"), k);
  Outputs files(s.str("out", "redist_out"));

  const auto result = lab::offset_sweep(geo, tau, deltas, plans, seed, workers,
                                        mode == "fresh" ? lab::SweepMode::FreshChain : lab::SweepMode::Filter,
                                        repetition);
  std::ostringstream csv;
  csv << "delta,tau,plans,exceed,rate\n";
  for (const auto& p : result.points)
    csv << num(p.delta) << ',' << num(tau) << ',' << p.plans << ',' << p.exceed << ',' << num(p.rate) << '\n';
  files.write("sweep.csv", csv.str());
  write_manifest(ctx, files);
  ctx.out << csv.str();
  return 0;
}

inline int cmd_critical_offset(Context& ctx) {
  Settings& s = ctx.settings;
  const std::uint64_t seed = seed_of(s);
  const int workers = workers_of(s);
  const double tau = tau_of(s);
  lab::CriticalOffsetOptions opt;
  opt.threshold = s.real("threshold", "0.02");
  opt.step = s.real("delta-step", "0.0005");
  opt.cap = s.real("delta-max", num(tau));
  opt.repetitions = positive_int(s, "repetitions", "1");
  opt.plans_per_delta = static_cast<std::uint64_t>(positive_int(s, "plans", "1000"));
  if (*opt.cap > tau) throw Error(ErrorKind::InvalidArgument, "--delta-max exceeds --tau");

  std::vector<GeographyEntry> entries;
  if (auto list = s.optional("geographies")) {
    entries = read_geographies(*list);
  } else {
    entries.push_back({s.str("name", "geography"), "", "", positive_int(s, "k", "2"), ""});
  }
  Outputs files(s.str("out", "redist_out"));

  std::ostringstream table, runs, scans;
  table << "geography,tau,threshold,step,repetitions,status,mean_delta,stdev_delta,rate_at_zero\n";
  runs << "geography,repetition,critical_delta\n";
  scans << "geography,repetition,delta,plans,exceed,rate\n";
  std::vector<double> zero_rates, offsets;
  bool incomplete = false;
  for (const auto& e : entries) {
    std::optional<DualGraph> g;
    if (e.units.empty()) {
      g = load_graph(ctx);
    } else {
      g = io::load_graph(e.units, e.adjacency, unit_schema(s));
    }
    if (!e.k) throw Error(ErrorKind::InvalidArgument, e.name + ": no k given");
    const lab::Geography geo = geography(s, *g, e.name, *e.k);
    const auto row_prefix = e.name + "," + num(tau) + "," + num(opt.threshold) + "," + num(opt.step) + "," +
                            std::to_string(opt.repetitions) + ",";
    try {
      const auto r = lab::critical_offset(geo, tau, opt, seed, workers);
      double zero = 0.0;
      for (const auto& scan : r.scans) zero += scan.front().rate;
      zero /= static_cast<double>(r.scans.size());
      const std::string status = r.all_found() ? "found" : "partial";
      incomplete |= !r.all_found();
      table << row_prefix << status << ',' << num(r.mean) << ',' << num(r.stdev) << ',' << num(zero) << '\n';
      for (std::size_t rep = 0; rep < r.per_repetition.size(); ++rep) {
        runs << e.name << ',' << rep << ',' << (r.per_repetition[rep] ? num(*r.per_repetition[rep]) : "not_found") << '\n';
        for (const auto& p : r.scans[rep])
          scans << e.name << ',' << rep << ',' << num(p.delta) << ',' << p.plans << ',' << p.exceed << ',' << num(p.rate)
                << '\n';
      }
      zero_rates.push_back(zero);
      offsets.push_back(r.mean);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::Infeasible && err.kind() != ErrorKind::NotFoundWithinGrid) throw;
      incomplete = true;
      const std::string status = err.kind() == ErrorKind::Infeasible ? "infeasible" : "not_found";
      table << row_prefix << status << ",,,\n";
      ctx.err << e.name << ": " << err.what() << '\n';
    }
  }

  std::ostringstream summary;
  summary << "statistic,min,q25,q50,q75,max\n";
  auto summary_row = [&](const char* name, const std::vector<double>& v) {
    if (v.empty()) return;
    const auto f = lab::five_number_summary(v);
    summary << name << ',' << num(f.min) << ',' << num(f.q25) << ',' << num(f.q50) << ',' << num(f.q75) << ','
            << num(f.max) << '\n';
  };
  summary_row("discrepancy_rate", zero_rates);
  summary_row("critical_offset", offsets);

  files.write("critical_offset.csv", table.str());
  files.write("critical_offset_runs.csv", runs.str());
  files.write("critical_offset_scans.csv", scans.str());
  files.write("critical_offset_summary.csv", summary.str());
  write_manifest(ctx, files);
  ctx.out << table.str();
  if (offsets.empty()) throw Error(ErrorKind::NotFoundWithinGrid, "no geography reached the threshold");
  return incomplete ? 2 : 0;
}

inline io::Ensemble read_ensemble(Settings& s) {
  auto e = io::read_records(s.required("ensemble"));
  if (e.records.empty()) throw Error(ErrorKind::EmptyEnsemble, "ensemble stream has no records");
  return e;
}

inline int cmd_mmd_report(Context& ctx) {
  Settings& s = ctx.settings;
  const auto ens = read_ensemble(s);
  for (const auto& w : ens.warnings) ctx.err << "warning: " << w << '\n';
  const int group = ens.header.schema.vap_group_index(s.required("group"));
  lab::MmdReportOptions opt;
  opt.bin_width = s.real("bin-width", "50");
  opt.bin_range = s.real("bin-range", "300");
  opt.dedup_margin_districts = s.flag("dedup", true);
  Outputs files(s.str("out", "redist_out"));

  const auto rep = lab::mmd_report(ens.records, group, opt);
  std::ostringstream summary, hist, bins;
  summary << "plans,mean_discrepancy,nonzero_rate,max_published_mmd,max_agreement,near_max_plans,"
             "near_max_inversions,inversion_rate,pearson_mmd_discrepancy\n";
  summary << rep.plans << ',' << num(rep.mean_discrepancy) << ',' << num(rep.nonzero_rate) << ',' << rep.max_published
          << ',' << (rep.max_agreement ? "yes" : "no") << ',' << rep.near_max_plans << ',' << rep.near_max_inversions
          << ',' << num(rep.inversion_rate) << ','
          << (rep.pearson_mmd_discrepancy ? num(*rep.pearson_mmd_discrepancy) : "undefined") << '\n';
  hist << "published_mmd,discrepancy,plans\n";
  for (const auto& [key, count] : rep.histogram) hist << key.first << ',' << key.second << ',' << count << '\n';
  bins << "margin_lo,margin_hi,districts,disagreements,rate\n";
  for (const auto& b : rep.margin_bins)
    bins << num(b.lo) << ',' << num(b.hi) << ',' << b.districts << ',' << b.disagreements << ',' << num(b.rate()) << '\n';

  files.write("mmd_summary.csv", summary.str());
  files.write("mmd_histogram.csv", hist.str());
  files.write("margin_bins.csv", bins.str());
  write_manifest(ctx, files);
  ctx.out << summary.str();
  return 0;
}

inline int cmd_model(Context& ctx) {
  Settings& s = ctx.settings;
  noise::NoiseModelParams p;
  p.k = positive_int(s, "k", "39");
  p.tau = tau_of(s);
  const auto deltas = delta_grid(s, p.tau);
  if (auto path = s.optional("ensemble")) {
    // fit the noise to signed district errors of a sampled ensemble
    const auto ens = io::read_records(*path);
    std::vector<double> errors;
    for (const auto& r : ens.records) {
      const double ideal = metrics::ideal_population(r.published());
      for (int d = 0; d < r.k(); ++d) errors.push_back(metrics::err_das(r.published()[d].pop, r.reference()[d].pop, ideal));
    }
    const auto fit = noise::fit_noise(errors);
    p.mu = fit.mu;
    p.sigma = fit.sigma;
    ctx.extra["fit"] = {{"mu", fit.mu}, {"sigma", fit.sigma}, {"districts", fit.n}};
  } else {
    p.mu = s.real("mu", "0");
    p.sigma = s.real("sigma", "0.0006");
  }
  p.validate();
  const auto mc = static_cast<std::uint64_t>(s.integer("mc-samples", "0"));
  const std::uint64_t seed = seed_of(s);
  Outputs files(s.str("out", "redist_out"));

  const auto curve = noise::model_curve(p, deltas);
  std::ostringstream csv;
  csv << "delta,tau,rate" << (mc ? ",mc_rate,mc_standard_error" : "") << '\n';
  for (std::size_t i = 0; i < curve.size(); ++i) {
    csv << num(curve[i].delta) << ',' << num(curve[i].tau) << ',' << num(curve[i].rate);
    if (mc) {
      noise::NoiseModelParams q = p;
      q.delta = curve[i].delta;
      Rng rng = Rng(seed).split(i);
      const auto est = noise::exceed_rate_mc(q, mc, rng);
      csv << ',' << num(est.rate) << ',' << num(est.standard_error);
    }
    csv << '\n';
  }
  files.write("model_curve.csv", csv.str());
  write_manifest(ctx, files);
  ctx.out << csv.str();
  return 0;
}

inline std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "undefined"; }

inline int cmd_diagnose(Context& ctx) {
  Settings& s = ctx.settings;
  const std::string name = s.str("name", "geography");
  // functional name -> chains
  std::vector<std::pair<std::string, std::vector<std::vector<double>>>> functionals;
  if (auto path = s.optional("chains-csv")) {
    auto in = io::detail::open_input(*path);
    io::detail::CsvReader reader(in, *path);
    const int c_chain = reader.column("chain"), c_value = reader.column("value");
    std::map<std::string, std::vector<double>> by_chain;
    std::vector<std::string> order, f;
    while (reader.next(f)) {
      if (!by_chain.contains(f[c_chain])) order.push_back(f[c_chain]);
      try {
        by_chain[f[c_chain]].push_back(Settings::parse_real("value", f[c_value]));
      } catch (const Error&) {
        reader.fail("'" + f[c_value] + "' is not a number");
      }
    }
    std::vector<std::vector<double>> chains;
    for (const auto& c : order) chains.push_back(std::move(by_chain[c]));
    functionals.emplace_back("value", std::move(chains));
  } else {
    const auto ens = read_ensemble(s);
    for (const auto& w : ens.warnings) ctx.err << "warning: " << w << '\n';
    const double threshold = s.real("threshold", "0.05");
    const auto group = s.optional("group");
    const int gi = group ? ens.header.schema.vap_group_index(*group) : -1;
    std::map<std::uint32_t, std::vector<const EnsembleRecord*>> by_chain;
    for (const auto& r : ens.records) by_chain[r.subchain].push_back(&r);
    auto collect = [&](const std::function<double(const EnsembleRecord&)>& fn) {
      std::vector<std::vector<double>> chains;
      for (const auto& [c, recs] : by_chain) {
        chains.emplace_back();
        for (const auto* r : recs) chains.back().push_back(fn(*r));
      }
      return chains;
    };
    functionals.emplace_back("population_balance",
                             collect([&](const EnsembleRecord& r) { return diagnostics::balance_indicator(r, threshold); }));
    if (group)
      functionals.emplace_back("mmd", collect([&](const EnsembleRecord& r) { return diagnostics::mmd_discrepancy_value(r, gi); }));
  }
  Outputs files(s.str("out", "redist_out"));

  std::ostringstream csv;
  csv << "geography,functional,chains,draws,rhat,ess_bulk,ess_rank,converged\n";
  for (const auto& [fname, chains] : functionals) {
    const diagnostics::ChainMatrix m(chains);
    const auto rhat = diagnostics::split_rhat(m);
    const auto bulk = diagnostics::ess(m);
    const auto rank = diagnostics::ess(m, true);
    csv << name << ',' << fname << ',' << m.num_chains() << ',' << m.num_draws() << ',' << opt_num(rhat) << ','
        << opt_num(bulk) << ',' << opt_num(rank) << ',' << (diagnostics::converged(rhat, rank) ? "yes" : "no") << '\n';
  }
  files.write("diagnostics.csv", csv.str());
  write_manifest(ctx, files);
  ctx.out << csv.str();
  return 0;
}

inline int cmd_enacted_errors(Context& ctx) {
  Settings& s = ctx.settings;
  std::vector<GeographyEntry> entries;
  if (auto list = s.optional("geographies")) {
    entries = read_geographies(*list);
  } else {
    entries.push_back({s.str("name", "geography"), "", "", std::nullopt, s.required("assignment")});
  }
  Outputs files(s.str("out", "redist_out"));

  std::vector<lab::DistrictError> all;
  std::ostringstream districts;
  districts << "geography,district,ideal,pop_published,pop_reference,abs_err\n";
  for (const auto& e : entries) {
    const DualGraph g = e.units.empty() ? load_graph(ctx) : io::load_graph(e.units, e.adjacency, unit_schema(s));
    if (e.assignment.empty()) throw Error(ErrorKind::InvalidArgument, e.name + ": no assignment given");
    const auto loaded = io::load_assignment(e.assignment, g);
    if (!loaded.contiguous) ctx.err << e.name << ": enacted plan is discontiguous on these units\n";
    const auto& pub = loaded.partition.aggregates(kPublished);
    const auto& ref = loaded.partition.aggregates(kReference);
    const auto errors = lab::district_errors(pub, ref);
    for (std::size_t d = 0; d < errors.size(); ++d)
      districts << e.name << ',' << loaded.district_labels[d] << ',' << num(errors[d].ideal) << ',' << pub[d].pop << ','
                << ref[d].pop << ',' << num(errors[d].abs_error) << '\n';
    all.insert(all.end(), errors.begin(), errors.end());
  }
  std::ostringstream table;
  table << "bucket,districts,max,p98,p90\n";
  for (const auto& b : lab::enacted_error_table(all))
    table << b.label << ',' << b.count << ',' << num(b.max) << ',' << num(b.p98) << ',' << num(b.p90) << '\n';
  files.write("enacted_districts.csv", districts.str());
  files.write("enacted_errors.csv", table.str());
  if (entries.size() > 1) ctx.fingerprint.reset();
  write_manifest(ctx, files);
  ctx.out << table.str();
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

struct Command {
  const char* name;
  const char* help;
  std::vector<std::string> keys;
  int (*fn)(Context&);
};

inline const std::vector<Command>& commands() {
  static const std::vector<Command> list{
      {"ingest", "validate units and adjacency, write a graph snapshot",
       {"units", "adjacency", "published-label", "reference-label"}, cmd_ingest},
      {"sample", "run ReCom chains and write an ensemble stream",
       {"units", "adjacency", "graph", "published-label", "reference-label", "assignment", "k", "tau", "steps",
        "interval", "chains", "retries", "keep-assignments"},
       cmd_sample},
      {"bursts", "short-burst search for majority-minority districts",
       {"units", "adjacency", "graph", "published-label", "reference-label", "assignment", "k", "tau", "group",
        "burst-len", "num-bursts", "subchains", "retries", "keep-assignments"},
       cmd_bursts},
      {"sweep", "discrepancy rate at tau over a grid of offsets",
       {"units", "adjacency", "graph", "published-label", "reference-label", "k", "tau", "delta-step", "delta-max",
        "plans", "interval", "retries", "mode", "repetition", "name"},
       cmd_sweep},
      {"critical-offset", "smallest offset bringing the discrepancy rate under a threshold",
       {"units", "adjacency", "graph", "published-label", "reference-label", "k", "tau", "threshold", "delta-step",
        "delta-max", "plans", "interval", "retries", "repetitions", "geographies", "name"},
       cmd_critical_offset},
      {"mmd-report", "majority-minority discrepancy statistics of an ensemble",
       {"ensemble", "group", "bin-width", "bin-range", "dedup"}, cmd_mmd_report},
      {"model", "exceedance curve of the uniform-plus-normal noise model",
       {"k", "tau", "delta-step", "delta-max", "mu", "sigma", "mc-samples", "ensemble"}, cmd_model},
      {"diagnose", "split R-hat and effective sample size",
       {"ensemble", "chains-csv", "threshold", "group", "name"}, cmd_diagnose},
      {"enacted-errors", "disclosure-avoidance error of enacted districts by ideal population",
       {"units", "adjacency", "graph", "published-label", "reference-label", "assignment", "geographies", "name"},
       cmd_enacted_errors},
  };
  return list;
}

inline const char* help_for(const std::string& key) {
  for (const auto& k : kAllKeys)
    if (key == k.key) return k.help;
  return "";
}

/// Runs one command line. Returns the process exit code:
/// 0 ok, 1 validation, 2 infeasible, 3 internal.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Redistricting ensembles on published vs reference census data", "redist"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every command");

  struct Parsed {
    CLI::App* sub;
    const Command* cmd;
    std::string config;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
  };
  std::vector<Parsed> parsed(commands().size());
  for (std::size_t i = 0; i < commands().size(); ++i) {
    const Command& c = commands()[i];
    Parsed& p = parsed[i];
    p.cmd = &c;
    p.sub = app.add_subcommand(c.name, c.help);
    p.sub->add_option("--config", p.config, "key = value file or a manifest.json from an earlier run");
    std::vector<std::string> keys{"seed", "workers", "out"};
    keys.insert(keys.end(), c.keys.begin(), c.keys.end());
    for (const auto& k : keys) p.options[k] = p.sub->add_option("--" + k, p.values[k], help_for(k));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  for (Parsed& p : parsed) {
    if (!p.sub->parsed()) continue;
    Context ctx{Settings{}, out, err, p.cmd->name};
    try {
      if (!p.config.empty())
        for (auto& [k, v] : read_config(p.config)) ctx.settings.set(k, v);
      for (const auto& [k, opt] : p.options)
        if (opt->count() > 0) ctx.settings.set(k, p.values[k]);
      return p.cmd->fn(ctx);
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return exit_code(e.kind());
    } catch (const std::exception& e) {
      err << "internal error: " << e.what() << '\n';
      return 3;
    }
  }
  return 3;
}

}  // namespace redist::cli
