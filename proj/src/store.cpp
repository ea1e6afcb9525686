#include "agm/store.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>
#include <utility>

#include "agm/error.hpp"
#include "agm/wire.hpp"

namespace agm {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> default_collections() {
  return {std::string(collections::workers),   std::string(collections::workstations),
          std::string(collections::routings),  std::string(collections::instances),
          std::string(collections::jobs),      std::string(collections::timers),
          std::string(collections::counters)};
}

namespace {

const json* lookup_field(const json& body, const std::string& field) {
  if (!body.is_object()) return nullptr;
  if (!field.empty() && field.front() == '/') {
    const json::json_pointer ptr(field);
    if (!body.contains(ptr)) return nullptr;
    return &body.at(ptr);
  }
  auto it = body.find(field);
  return it == body.end() ? nullptr : &*it;
}

bool compare(const json& lhs, FilterOp op, const json& rhs) {
  switch (op) {
    case FilterOp::eq: return lhs == rhs;
    case FilterOp::ne: return lhs != rhs;
    case FilterOp::lt: return lhs < rhs;
    case FilterOp::le: return lhs <= rhs;
    case FilterOp::gt: return lhs > rhs;
    case FilterOp::ge: return lhs >= rhs;
  }
  return false;
}

// Append-only line file. Writes are flushed to the OS on every append.
class LineFile {
 public:
  LineFile() = default;
  LineFile(const fs::path& path, bool sync) : path_(path), sync_(sync) { reopen(); }
  ~LineFile() { close(); }
  LineFile(const LineFile&) = delete;
  LineFile& operator=(const LineFile&) = delete;
  LineFile& operator=(LineFile&& other) noexcept {
    if (this != &other) {
      close();
      path_ = std::move(other.path_);
      sync_ = other.sync_;
      file_ = std::exchange(other.file_, nullptr);
      lines_ = other.lines_;
    }
    return *this;
  }

  void append(const std::string& line) {
    if (file_ == nullptr) return;
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fputc('\n', file_) == EOF ||
        std::fflush(file_) != 0) {
      throw StorageError("write failed: " + path_.string());
    }
    if (sync_ && ::fsync(::fileno(file_)) != 0) throw StorageError("fsync failed: " + path_.string());
    ++lines_;
  }

  void reopen() {
    close();
    file_ = std::fopen(path_.c_str(), "ab");
    if (file_ == nullptr) throw StorageError("cannot open " + path_.string());
  }

  void close() {
    if (file_ != nullptr) std::fclose(file_);
    file_ = nullptr;
  }

  std::size_t lines() const { return lines_; }
  void set_lines(std::size_t n) { lines_ = n; }
  const fs::path& path() const { return path_; }
  bool is_open() const { return file_ != nullptr; }

 private:
  fs::path path_;
  bool sync_ = false;
  std::FILE* file_ = nullptr;
  std::size_t lines_ = 0;
};

// Reads complete JSON lines, stopping at the first line that fails to parse
// or is rejected by `accept`. Truncates the file to the accepted prefix.
template <typename Accept>
void replay_lines(const fs::path& path, Accept&& accept) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::string line;
  std::uintmax_t good_bytes = 0;
  bool torn = false;
  while (std::getline(in, line)) {
    const bool had_newline = !in.eof();
    if (!had_newline) {
      torn = true;  // last line without its newline never finished writing
      break;
    }
    if (line.empty()) {
      good_bytes += 1;
      continue;
    }
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !accept(j)) {
      torn = true;
      break;
    }
    good_bytes += line.size() + 1;
  }
  in.close();
  if (torn) fs::resize_file(path, good_bytes);
}

}  // namespace

bool Query::matches(const Document& doc) const {
  if (org_id && doc.org_id != *org_id) return false;
  for (const auto& f : filters) {
    const json* v = lookup_field(doc.body, f.field);
    if (v == nullptr || !compare(*v, f.op, f.value)) return false;
  }
  return true;
}

struct DocumentStore::Impl {
  struct Collection {
    mutable std::shared_mutex mu;
    std::map<std::string, Document, std::less<>> docs;
    LineFile journal;
  };

  StoreOptions options;
  fs::path dir;
  bool persistent = false;
  std::unordered_map<std::string, std::unique_ptr<Collection>> collections;

  mutable std::mutex audit_mu;
  mutable std::condition_variable audit_cv;
  std::vector<AuditEvent> audit;
  LineFile audit_file;

  std::atomic<std::size_t> writes{0};

  Collection& collection(std::string_view name) const {
    auto it = collections.find(std::string(name));
    if (it == collections.end()) throw NotFound("unknown collection '" + std::string(name) + "'");
    return *it->second;
  }

  void count_write() {
    if (!options.crash_after_writes) return;
    if (writes.fetch_add(1) >= *options.crash_after_writes) {
      throw StorageError("injected crash: store is no longer writable");
    }
  }

  static json journal_put(const Document& d) {
    return json{{"op", "put"}, {"id", d.id}, {"version", d.version}, {"org_id", d.org_id}, {"body", d.body}};
  }

  void maybe_compact(Collection& c) {
    if (!persistent) return;
    if (c.journal.lines() > c.docs.size() + options.compact_slack) compact_locked(c);
  }

  void compact_locked(Collection& c) {
    const fs::path final_path = c.journal.path();
    fs::path tmp = final_path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw StorageError("cannot write " + tmp.string());
      for (const auto& [id, d] : c.docs) out << journal_put(d).dump() << '\n';
      out.flush();
      if (!out) throw StorageError("write failed: " + tmp.string());
    }
    if (options.fsync) {
      if (std::FILE* f = std::fopen(tmp.c_str(), "rb")) {
        ::fsync(::fileno(f));
        std::fclose(f);
      }
    }
    c.journal.close();
    std::error_code ec;
    fs::rename(tmp, final_path, ec);
    c.journal.reopen();
    if (ec) throw StorageError("rename failed: " + ec.message());
    c.journal.set_lines(c.docs.size());
  }
};

DocumentStore::DocumentStore(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
DocumentStore::~DocumentStore() = default;

std::shared_ptr<DocumentStore> DocumentStore::in_memory(StoreOptions options) {
  auto impl = std::make_unique<Impl>();
  for (const auto& name : options.collections) impl->collections.emplace(name, std::make_unique<Impl::Collection>());
  impl->options = std::move(options);
  return std::shared_ptr<DocumentStore>(new DocumentStore(std::move(impl)));
}

std::shared_ptr<DocumentStore> DocumentStore::open(const fs::path& data_dir, StoreOptions options) {
  std::error_code ec;
  fs::create_directories(data_dir, ec);
  if (ec) throw StorageError("cannot create data dir " + data_dir.string() + ": " + ec.message());

  auto impl = std::make_unique<Impl>();
  impl->dir = data_dir;
  impl->persistent = true;
  impl->options = std::move(options);

  for (const auto& name : impl->options.collections) {
    auto c = std::make_unique<Impl::Collection>();
    const fs::path path = data_dir / (name + ".jsonl");
    fs::remove(fs::path(path.string() + ".tmp"), ec);  // unfinished compaction
    std::size_t lines = 0;
    replay_lines(path, [&](const json& j) {
      if (!j.is_object() || !j.contains("op") || !j.contains("id") || !j["id"].is_string()) return false;
      const std::string id = j["id"].get<std::string>();
      if (j["op"] == "del") {
        c->docs.erase(id);
      } else {
        Document d;
        d.collection = name;
        d.id = id;
        d.version = j.value("version", std::uint64_t{0});
        d.org_id = j.value("org_id", std::string{});
        d.body = j.value("body", json::object());
        c->docs[id] = std::move(d);
      }
      ++lines;
      return true;
    });
    c->journal = LineFile(path, impl->options.fsync);
    c->journal.set_lines(lines);
    impl->collections.emplace(name, std::move(c));
  }

  const fs::path audit_path = data_dir / "audit.jsonl";
  replay_lines(audit_path, [&](const json& j) {
    AuditEvent e;
    try {
      e = decode<AuditEvent>(j);
    } catch (const Error&) {
      return false;
    }
    if (e.seq != impl->audit.size()) return false;  // keep only the gap-free prefix
    impl->audit.push_back(std::move(e));
    return true;
  });
  impl->audit_file = LineFile(audit_path, impl->options.fsync);
  impl->audit_file.set_lines(impl->audit.size());

  return std::shared_ptr<DocumentStore>(new DocumentStore(std::move(impl)));
}

std::uint64_t DocumentStore::put(std::string_view collection, std::string_view id, json body,
                                 std::optional<std::uint64_t> expected_version, std::string_view org_id) {
  auto& c = impl_->collection(collection);
  std::unique_lock lock(c.mu);
  auto it = c.docs.find(id);
  Document next;
  if (!expected_version) {
    if (it != c.docs.end()) {
      throw AlreadyExists(std::string(collection) + "/" + std::string(id) + " already exists");
    }
    next.version = 0;
  } else {
    if (it == c.docs.end()) throw NotFound(std::string(collection) + "/" + std::string(id) + " not found");
    if (it->second.version != *expected_version) {
      throw VersionConflict(std::string(collection) + "/" + std::string(id) + " is at version " +
                            std::to_string(it->second.version) + ", expected " + std::to_string(*expected_version));
    }
    next.version = it->second.version + 1;
  }
  next.collection = std::string(collection);
  next.id = std::string(id);
  next.body = std::move(body);
  next.org_id = org_id.empty() && it != c.docs.end() ? it->second.org_id : std::string(org_id);

  impl_->count_write();
  if (impl_->persistent) c.journal.append(Impl::journal_put(next).dump());
  const auto version = next.version;
  c.docs.insert_or_assign(std::string(id), std::move(next));
  impl_->maybe_compact(c);
  return version;
}

std::optional<Document> DocumentStore::get(std::string_view collection, std::string_view id) const {
  auto& c = impl_->collection(collection);
  std::shared_lock lock(c.mu);
  auto it = c.docs.find(id);
  if (it == c.docs.end()) return std::nullopt;
  return it->second;
}

std::vector<Document> DocumentStore::query(std::string_view collection, const Query& q) const {
  auto& c = impl_->collection(collection);
  std::vector<Document> out;
  {
    std::shared_lock lock(c.mu);
    for (const auto& [id, d] : c.docs) {
      if (q.matches(d)) out.push_back(d);
    }
  }
  if (q.sort_by) {
    const std::string key = *q.sort_by;
    std::stable_sort(out.begin(), out.end(), [&](const Document& a, const Document& b) {
      const json* va = lookup_field(a.body, key);
      const json* vb = lookup_field(b.body, key);
      if (va == nullptr || vb == nullptr) return va != nullptr && vb == nullptr;
      return *va < *vb;
    });
  }
  return out;
}

void DocumentStore::remove(std::string_view collection, std::string_view id,
                           std::optional<std::uint64_t> expected_version) {
  auto& c = impl_->collection(collection);
  std::unique_lock lock(c.mu);
  auto it = c.docs.find(id);
  if (it == c.docs.end()) throw NotFound(std::string(collection) + "/" + std::string(id) + " not found");
  if (expected_version && it->second.version != *expected_version) {
    throw VersionConflict(std::string(collection) + "/" + std::string(id) + " is at version " +
                          std::to_string(it->second.version));
  }
  impl_->count_write();
  if (impl_->persistent) {
    c.journal.append(json{{"op", "del"}, {"id", std::string(id)}, {"version", it->second.version}}.dump());
  }
  c.docs.erase(it);
  impl_->maybe_compact(c);
}

std::uint64_t DocumentStore::append_audit(AuditEvent event) {
  std::uint64_t seq;
  {
    std::lock_guard lock(impl_->audit_mu);
    event.seq = impl_->audit.size();
    impl_->count_write();
    if (impl_->persistent) impl_->audit_file.append(json(event).dump());
    seq = event.seq;
    impl_->audit.push_back(std::move(event));
  }
  impl_->audit_cv.notify_all();
  return seq;
}

std::vector<AuditEvent> DocumentStore::read_audit(std::uint64_t since_seq) const {
  std::lock_guard lock(impl_->audit_mu);
  if (since_seq >= impl_->audit.size()) return {};
  return {impl_->audit.begin() + static_cast<std::ptrdiff_t>(since_seq), impl_->audit.end()};
}

std::uint64_t DocumentStore::audit_size() const {
  std::lock_guard lock(impl_->audit_mu);
  return impl_->audit.size();
}

bool DocumentStore::wait_for_audit(std::uint64_t seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(impl_->audit_mu);
  return impl_->audit_cv.wait_for(lock, timeout, [&] { return impl_->audit.size() > seq; });
}

void DocumentStore::compact() {
  if (!impl_->persistent) return;
  for (auto& [name, c] : impl_->collections) {
    std::unique_lock lock(c->mu);
    impl_->compact_locked(*c);
  }
}

bool DocumentStore::persistent() const { return impl_->persistent; }
const fs::path& DocumentStore::data_dir() const { return impl_->dir; }

}  // namespace agm
