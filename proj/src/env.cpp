#include "tandem/env.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>

namespace tandem {

Status Env::ReadAll(const std::string& name, std::string* out) {
  TANDEM_ASSIGN_OR_RETURN(uint64_t size, Size(name));
  return Read(name, 0, size, out);
}

// ---------------------------------------------------------------------------
// PosixEnv

namespace {
Status ErrnoStatus(const std::string& what) {
  return Status::IOError(what + ": " + std::strerror(errno));
}
}  // namespace

Result<std::unique_ptr<PosixEnv>> PosixEnv::Open(const std::string& dir, bool create_if_missing) {
  std::error_code ec;
  if (!std::filesystem::exists(dir, ec)) {
    if (!create_if_missing) return Status::NotFound(dir);
    std::filesystem::create_directories(dir, ec);
    if (ec) return Status::IOError("mkdir " + dir + ": " + ec.message());
  } else if (!std::filesystem::is_directory(dir, ec)) {
    return Status::InvalidArgument(dir + " is not a directory");
  }
  return std::unique_ptr<PosixEnv>(new PosixEnv(dir));
}

PosixEnv::~PosixEnv() {
  for (auto& [name, fd] : fds_) ::close(fd);
}

Result<int> PosixEnv::Fd(const std::string& name, bool create) {
  auto it = fds_.find(name);
  if (it != fds_.end()) return it->second;
  int flags = O_RDWR | O_APPEND | O_CLOEXEC;
  if (create) flags |= O_CREAT;
  int fd = ::open(PathOf(name).c_str(), flags, 0644);
  if (fd < 0) {
    if (errno == ENOENT) return Status::NotFound(name);
    return ErrnoStatus("open " + name);
  }
  fds_[name] = fd;
  return fd;
}

Status PosixEnv::Append(const std::string& name, std::string_view data) {
  std::lock_guard lock(mu_);
  TANDEM_ASSIGN_OR_RETURN(int fd, Fd(name, true));
  while (!data.empty()) {
    ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      return ErrnoStatus("write " + name);
    }
    data.remove_prefix(static_cast<size_t>(n));
  }
  return Status::OK();
}

Status PosixEnv::Sync(const std::string& name) {
  std::lock_guard lock(mu_);
  TANDEM_ASSIGN_OR_RETURN(int fd, Fd(name, true));
  if (::fdatasync(fd) != 0) return ErrnoStatus("fdatasync " + name);
  return Status::OK();
}

Status PosixEnv::Read(const std::string& name, uint64_t offset, size_t n, std::string* out) {
  int fd;
  {
    std::lock_guard lock(mu_);
    TANDEM_ASSIGN_OR_RETURN(fd, Fd(name, false));
  }
  out->resize(n);
  size_t done = 0;
  while (done < n) {
    ssize_t r = ::pread(fd, out->data() + done, n - done, static_cast<off_t>(offset + done));
    if (r < 0) {
      if (errno == EINTR) continue;
      return ErrnoStatus("pread " + name);
    }
    if (r == 0) return Status::OutOfRange(name);
    done += static_cast<size_t>(r);
  }
  return Status::OK();
}

Result<uint64_t> PosixEnv::Size(const std::string& name) {
  struct stat st {};
  if (::stat(PathOf(name).c_str(), &st) != 0) {
    if (errno == ENOENT) return Status::NotFound(name);
    return ErrnoStatus("stat " + name);
  }
  return static_cast<uint64_t>(st.st_size);
}

Status PosixEnv::Delete(const std::string& name) {
  std::lock_guard lock(mu_);
  auto it = fds_.find(name);
  if (it != fds_.end()) {
    ::close(it->second);
    fds_.erase(it);
  }
  if (::unlink(PathOf(name).c_str()) != 0) {
    if (errno == ENOENT) return Status::NotFound(name);
    return ErrnoStatus("unlink " + name);
  }
  int dfd = ::open(dir_.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
  return Status::OK();
}

std::vector<std::string> PosixEnv::List() {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir_, ec)) {
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  }
  return names;
}

// ---------------------------------------------------------------------------
// MemEnv

Status MemEnv::Append(const std::string& name, std::string_view data) {
  std::lock_guard lock(mu_);
  if (fail_writes_) return Status::IOError("injected write failure");
  files_[name].data.append(data);
  return Status::OK();
}

Status MemEnv::Sync(const std::string& name) {
  std::lock_guard lock(mu_);
  if (fail_writes_) return Status::IOError("injected sync failure");
  auto it = files_.find(name);
  if (it == files_.end()) return Status::NotFound(name);
  File& f = it->second;
  if (f.durable == f.data.size()) return Status::OK();
  if (record_) {
    journal_.push_back({Event::Type::kSync, name, f.data.substr(f.durable)});
  }
  f.durable = f.data.size();
  ++events_;
  return Status::OK();
}

Status MemEnv::Read(const std::string& name, uint64_t offset, size_t n, std::string* out) {
  std::lock_guard lock(mu_);
  auto it = files_.find(name);
  if (it == files_.end()) return Status::NotFound(name);
  const std::string& data = it->second.data;
  if (offset + n > data.size()) return Status::OutOfRange(name);
  out->assign(data, offset, n);
  return Status::OK();
}

Result<uint64_t> MemEnv::Size(const std::string& name) {
  std::lock_guard lock(mu_);
  auto it = files_.find(name);
  if (it == files_.end()) return Status::NotFound(name);
  return static_cast<uint64_t>(it->second.data.size());
}

Status MemEnv::Delete(const std::string& name) {
  std::lock_guard lock(mu_);
  auto it = files_.find(name);
  if (it == files_.end()) return Status::NotFound(name);
  bool was_durable = it->second.durable > 0;
  files_.erase(it);
  if (was_durable) {
    if (record_) journal_.push_back({Event::Type::kDelete, name, {}});
    ++events_;
  }
  return Status::OK();
}

std::vector<std::string> MemEnv::List() {
  std::lock_guard lock(mu_);
  std::vector<std::string> names;
  names.reserve(files_.size());
  for (const auto& [name, f] : files_) names.push_back(name);
  return names;
}

uint64_t MemEnv::event_count() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::unique_ptr<MemEnv> MemEnv::CrashAt(uint64_t events) const {
  std::lock_guard lock(mu_);
  auto out = std::make_unique<MemEnv>(record_);
  uint64_t n = std::min<uint64_t>(events, journal_.size());
  for (uint64_t i = 0; i < n; ++i) {
    const Event& e = journal_[i];
    if (e.type == Event::Type::kSync) {
      File& f = out->files_[e.name];
      f.data.append(e.delta);
      f.durable = f.data.size();
    } else {
      out->files_.erase(e.name);
    }
    if (record_) out->journal_.push_back(e);
  }
  out->events_ = n;
  return out;
}

std::unique_ptr<MemEnv> MemEnv::CrashNow() const {
  std::lock_guard lock(mu_);
  auto out = std::make_unique<MemEnv>(record_);
  for (const auto& [name, f] : files_) {
    if (f.durable == 0) continue;
    File& g = out->files_[name];
    g.data = f.data.substr(0, f.durable);
    g.durable = f.durable;
  }
  out->journal_ = journal_;
  out->events_ = events_;
  return out;
}

void MemEnv::SetFailWrites(bool fail) {
  std::lock_guard lock(mu_);
  fail_writes_ = fail;
}

uint64_t MemEnv::durable_bytes() const {
  std::lock_guard lock(mu_);
  uint64_t total = 0;
  for (const auto& [name, f] : files_) total += f.durable;
  return total;
}

}  // namespace tandem
