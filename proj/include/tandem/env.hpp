#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "tandem/status.hpp"

namespace tandem {

// Flat namespace of append-only files. Appended bytes become crash-durable
// only after Sync(). Delete() is durable on return.
class Env {
 public:
  virtual ~Env() = default;

  virtual Status Append(const std::string& name, std::string_view data) = 0;
  virtual Status Sync(const std::string& name) = 0;
  virtual Status Read(const std::string& name, uint64_t offset, size_t n, std::string* out) = 0;
  virtual Result<uint64_t> Size(const std::string& name) = 0;
  virtual Status Delete(const std::string& name) = 0;
  virtual std::vector<std::string> List() = 0;

  bool Exists(const std::string& name) { return Size(name).ok(); }
  Status ReadAll(const std::string& name, std::string* out);
};

// Files live in a host directory.
class PosixEnv final : public Env {
 public:
  static Result<std::unique_ptr<PosixEnv>> Open(const std::string& dir, bool create_if_missing);
  ~PosixEnv() override;

  Status Append(const std::string& name, std::string_view data) override;
  Status Sync(const std::string& name) override;
  Status Read(const std::string& name, uint64_t offset, size_t n, std::string* out) override;
  Result<uint64_t> Size(const std::string& name) override;
  Status Delete(const std::string& name) override;
  std::vector<std::string> List() override;

  const std::string& dir() const { return dir_; }

 private:
  explicit PosixEnv(std::string dir) : dir_(std::move(dir)) {}
  Result<int> Fd(const std::string& name, bool create);
  std::string PathOf(const std::string& name) const { return dir_ + "/" + name; }

  std::string dir_;
  std::mutex mu_;
  std::map<std::string, int> fds_;
};

// In-memory files with a durability journal. Every Sync that makes new bytes
// durable and every Delete is one journal event; CrashAt(p) rebuilds the
// store as it would look after a crash that kept only the first p events.
class MemEnv final : public Env {
 public:
  struct Event {
    enum class Type { kSync, kDelete } type;
    std::string name;
    std::string delta;  // bytes made durable by this sync
  };

  explicit MemEnv(bool record_journal = false) : record_(record_journal) {}

  Status Append(const std::string& name, std::string_view data) override;
  Status Sync(const std::string& name) override;
  Status Read(const std::string& name, uint64_t offset, size_t n, std::string* out) override;
  Result<uint64_t> Size(const std::string& name) override;
  Status Delete(const std::string& name) override;
  std::vector<std::string> List() override;

  // Number of durability events so far (journaled or not).
  uint64_t event_count() const;

  // Store state after a crash retaining the first `events` journal events.
  // Requires record_journal.
  std::unique_ptr<MemEnv> CrashAt(uint64_t events) const;

  // Store state with every unsynced byte dropped. Works without a journal.
  std::unique_ptr<MemEnv> CrashNow() const;

  // Subsequent Append/Sync calls fail with IOError.
  void SetFailWrites(bool fail);

  uint64_t durable_bytes() const;

 private:
  struct File {
    std::string data;
    size_t durable = 0;
  };

  bool record_;
  mutable std::mutex mu_;
  std::map<std::string, File> files_;
  std::vector<Event> journal_;
  uint64_t events_ = 0;
  bool fail_writes_ = false;
};

}  // namespace tandem
