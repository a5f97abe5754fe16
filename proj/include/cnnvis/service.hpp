#pragma once

// Snapshot store and interactive sessions behind the HTTP API. Snapshots
// persist as files under <data>/snapshots, sessions as append-only command
// logs under <data>/sessions; everything else is rebuilt on demand.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "cnnvis/error.hpp"
#include "cnnvis/layout.hpp"
#include "cnnvis/snapshot.hpp"

namespace cnnvis {

inline std::filesystem::path default_data_dir() {
  if (const char* d = std::getenv("CNNVIS_DATA_DIR"); d && *d) return d;
  return std::filesystem::path("cnnvis-data");
}

inline bool safe_id(std::string_view id) {
  static const std::regex re("[A-Za-z0-9._-]{1,128}");
  return std::regex_match(id.begin(), id.end(), re) && id != "." && id != "..";
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::not_found, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_ / "snapshots");
  }

  /// Validates and stores a snapshot file; returns its id.
  std::string ingest(std::string_view bytes) {
    auto snap = std::make_shared<const NetworkSnapshot>(parse_snapshot(bytes));
    if (!safe_id(snap->id())) throw Error(Errc::malformed_file, "snapshot id must match [A-Za-z0-9._-]+");
    std::lock_guard lock(mu_);
    const auto path = file_of(snap->id());
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << serialize_snapshot(*snap);
      if (!out) throw Error(Errc::invalid_argument, "cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
    cache_[snap->id()] = snap;
    layouts_.erase(snap->id());
    return snap->id();
  }

  std::shared_ptr<const NetworkSnapshot> get(const std::string& id) {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(id); it != cache_.end()) return it->second;
    if (!safe_id(id) || !std::filesystem::exists(file_of(id))) throw Error(Errc::not_found, "unknown snapshot '" + id + "'");
    auto snap = std::make_shared<const NetworkSnapshot>(parse_snapshot(read_file(file_of(id))));
    cache_[id] = snap;
    return snap;
  }

  /// Serialized layout for (snapshot, params, view), memoized per request key.
  std::string layout(const std::string& id, const LayoutParams& params, const ViewState& view) {
    auto snap = get(id);
    const auto key = params_key(params, view);
    {
      std::lock_guard lock(mu_);
      if (auto it = layouts_[id].find(key); it != layouts_[id].end()) return it->second;
    }
    auto body = serialize_layout(*snap, assemble(*snap, params, view));
    std::lock_guard lock(mu_);
    layouts_[id][key] = body;
    return body;
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path file_of(const std::string& id) const { return dir_ / "snapshots" / (id + ".json"); }

  static std::string params_key(const LayoutParams& p, const ViewState& v) {
    json k = json::array({to_string(p.method), p.kmeans_k ? json(*p.kmeans_k) : json(nullptr),
                          p.bandwidth ? json(*p.bandwidth) : json(nullptr), p.seed, p.representatives,
                          to_string(p.importance), to_string(v.facet), to_string(v.edge_facet), v.classes,
                          v.tau ? json(*v.tau) : json(nullptr), v.stop ? json(*v.stop) : json(nullptr)});
    return k.dump();
  }

  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const NetworkSnapshot>> cache_;
  std::map<std::string, std::map<std::string, std::string>> layouts_;
};

/// One interactive session: a stack of documents (for undo) and a version
/// counter that every accepted command or undo bumps by one.
class Session {
 public:
  Session(std::string id, std::shared_ptr<const NetworkSnapshot> snap, LayoutParams params)
      : id_(std::move(id)), snap_(std::move(snap)), params_(params) {
    docs_.push_back(assemble(*snap_, params_, ViewState{}));
  }

  const std::string& id() const { return id_; }
  const std::string& snapshot_id() const { return snap_->id(); }
  const NetworkSnapshot& snapshot() const { return *snap_; }
  const LayoutParams& params() const { return params_; }
  std::uint64_t version() const { return version_; }
  std::size_t depth() const { return docs_.size() - 1; }
  const LayoutDocument& document() const { return docs_.back(); }
  std::mutex& mutex() { return mu_; }

  void apply(const Command& cmd) {
    docs_.push_back(apply_interaction(*snap_, docs_.back(), cmd));
    ++version_;
  }

  void undo() {
    if (docs_.size() < 2) throw Error(Errc::version_conflict, "nothing to undo");
    docs_.pop_back();
    ++version_;
  }

 private:
  std::string id_;
  std::shared_ptr<const NetworkSnapshot> snap_;
  LayoutParams params_;
  std::vector<LayoutDocument> docs_;
  std::uint64_t version_ = 1;
  std::mutex mu_;
};

inline json params_to_json(const LayoutParams& p) {
  return json{{"method", to_string(p.method)},
              {"kmeansK", p.kmeans_k ? json(*p.kmeans_k) : json(nullptr)},
              {"bandwidth", p.bandwidth ? json(*p.bandwidth) : json(nullptr)},
              {"seed", p.seed},
              {"representatives", p.representatives}};
}

inline LayoutParams params_from_json(const json& j) {
  LayoutParams p;
  if (!j.is_object()) return p;
  try {
    if (j.contains("method")) {
      const auto m = j["method"].get<std::string>();
      if (m == "kmeans")
        p.method = ClusterMethod::kmeans;
      else if (m != "meanshift")
        throw Error(Errc::invalid_argument, "unknown clustering method '" + m + "'");
    }
    if (j.contains("kmeansK") && !j["kmeansK"].is_null()) p.kmeans_k = j["kmeansK"].get<std::size_t>();
    if (j.contains("bandwidth") && !j["bandwidth"].is_null()) p.bandwidth = j["bandwidth"].get<double>();
    if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("representatives")) p.representatives = j["representatives"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad params: ") + e.what());
  }
  if (p.kmeans_k && *p.kmeans_k < 1) throw Error(Errc::invalid_k, "k must be >= 1");
  if (p.bandwidth && !(*p.bandwidth > 0.0)) throw Error(Errc::non_positive_bandwidth, "bandwidth must be > 0");
  return p;
}

/// Sessions by id. Every accepted change is appended to the session's log
/// before it becomes visible; on restart the logs are replayed.
class SessionManager {
 public:
  explicit SessionManager(SnapshotStore& store) : store_(store) {
    std::filesystem::create_directories(log_dir());
  }

  std::shared_ptr<Session> create(const std::string& snapshot_id, const LayoutParams& params = {}) {
    auto snap = store_.get(snapshot_id);
    std::lock_guard lock(mu_);
    std::string id;
    do {
      id = "s" + std::to_string(++counter_);
    } while (std::filesystem::exists(log_of(id)));
    auto s = std::make_shared<Session>(id, snap, params);
    append(id, json{{"op", "create"}, {"snapshotId", snapshot_id}, {"params", params_to_json(params)}});
    sessions_[id] = s;
    return s;
  }

  std::shared_ptr<Session> get(const std::string& id) {
    std::lock_guard lock(mu_);
    if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    if (!safe_id(id) || !std::filesystem::exists(log_of(id))) throw Error(Errc::not_found, "unknown session '" + id + "'");
    auto s = replay(id);
    sessions_[id] = s;
    return s;
  }

  /// Applies `cmd` if the client saw the current version. Caller must not
  /// hold the session mutex.
  std::uint64_t command(Session& s, std::uint64_t expected, const Command& cmd) {
    std::lock_guard lock(s.mutex());
    if (expected != s.version())
      throw Error(Errc::version_conflict,
                  "expected version " + std::to_string(expected) + ", current " + std::to_string(s.version()));
    s.apply(cmd);
    append(s.id(), json{{"op", "command"}, {"command", command_to_json(cmd)}});
    return s.version();
  }

  std::uint64_t undo(Session& s) {
    std::lock_guard lock(s.mutex());
    s.undo();
    append(s.id(), json{{"op", "undo"}});
    return s.version();
  }

  /// Drops in-memory sessions so the next access replays from disk.
  void forget() {
    std::lock_guard lock(mu_);
    sessions_.clear();
  }

 private:
  std::filesystem::path log_dir() const { return store_.dir() / "sessions"; }
  std::filesystem::path log_of(const std::string& id) const { return log_dir() / (id + ".log"); }

  void append(const std::string& id, const json& entry) {
    std::lock_guard lock(log_mu_);
    std::ofstream out(log_of(id), std::ios::app | std::ios::binary);
    out << entry.dump() << '\n';
    out.flush();
    if (!out) throw Error(Errc::invalid_argument, "cannot append to session log");
  }

  std::shared_ptr<Session> replay(const std::string& id) {
    std::istringstream lines(read_file(log_of(id)));
    std::string line;
    std::shared_ptr<Session> s;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      const auto entry = json::parse(line);
      const auto op = entry.at("op").get<std::string>();
      if (op == "create")
        s = std::make_shared<Session>(id, store_.get(entry.at("snapshotId").get<std::string>()),
                                      params_from_json(entry.value("params", json::object())));
      else if (op == "command" && s)
        s->apply(command_from_json(entry.at("command")));
      else if (op == "undo" && s)
        s->undo();
    }
    if (!s) throw Error(Errc::not_found, "session log '" + id + "' is empty");
    return s;
  }

  SnapshotStore& store_;
  std::mutex mu_, log_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace cnnvis
