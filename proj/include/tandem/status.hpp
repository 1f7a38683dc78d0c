#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace tandem {

class Status {
 public:
  enum class Code {
    kOk = 0,
    kNotFound,
    kCorruption,
    kInvalidArgument,
    kIOError,
    kClosed,
    kAlreadyExists,
    kOutOfRange,
    kAborted,
  };

  Status() = default;

  static Status OK() { return Status(); }
  static Status NotFound(std::string_view msg = {}) { return {Code::kNotFound, msg}; }
  static Status Corruption(std::string_view msg = {}) { return {Code::kCorruption, msg}; }
  static Status InvalidArgument(std::string_view msg = {}) { return {Code::kInvalidArgument, msg}; }
  static Status IOError(std::string_view msg = {}) { return {Code::kIOError, msg}; }
  static Status Closed(std::string_view msg = {}) { return {Code::kClosed, msg}; }
  static Status AlreadyExists(std::string_view msg = {}) { return {Code::kAlreadyExists, msg}; }
  static Status OutOfRange(std::string_view msg = {}) { return {Code::kOutOfRange, msg}; }
  static Status Aborted(std::string_view msg = {}) { return {Code::kAborted, msg}; }

  bool ok() const { return code_ == Code::kOk; }
  bool IsNotFound() const { return code_ == Code::kNotFound; }
  bool IsCorruption() const { return code_ == Code::kCorruption; }
  bool IsInvalidArgument() const { return code_ == Code::kInvalidArgument; }
  bool IsIOError() const { return code_ == Code::kIOError; }
  bool IsClosed() const { return code_ == Code::kClosed; }
  bool IsAlreadyExists() const { return code_ == Code::kAlreadyExists; }
  bool IsOutOfRange() const { return code_ == Code::kOutOfRange; }
  bool IsAborted() const { return code_ == Code::kAborted; }

  Code code() const { return code_; }
  const std::string& message() const { return msg_; }

  std::string ToString() const {
    std::string out;
    switch (code_) {
      case Code::kOk: return "OK";
      case Code::kNotFound: out = "NotFound"; break;
      case Code::kCorruption: out = "Corruption"; break;
      case Code::kInvalidArgument: out = "InvalidArgument"; break;
      case Code::kIOError: out = "IOError"; break;
      case Code::kClosed: out = "Closed"; break;
      case Code::kAlreadyExists: out = "AlreadyExists"; break;
      case Code::kOutOfRange: out = "OutOfRange"; break;
      case Code::kAborted: out = "Aborted"; break;
    }
    if (!msg_.empty()) {
      out += ": ";
      out += msg_;
    }
    return out;
  }

  friend bool operator==(const Status& a, const Status& b) { return a.code_ == b.code_; }

 private:
  Status(Code code, std::string_view msg) : code_(code), msg_(msg) {}

  Code code_ = Code::kOk;
  std::string msg_;
};

// Value-or-error. Holds a T when status().ok().
template <typename T>
class Result {
 public:
  Result(T value) : value_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Result(Status status) : status_(std::move(status)) {}  // NOLINT(google-explicit-constructor)

  bool ok() const { return status_.ok(); }
  const Status& status() const { return status_; }

  T& value() & { return *value_; }
  const T& value() const& { return *value_; }
  T&& value() && { return std::move(*value_); }

  T* operator->() { return &*value_; }
  const T* operator->() const { return &*value_; }
  T& operator*() & { return *value_; }
  const T& operator*() const& { return *value_; }

 private:
  Status status_;
  std::optional<T> value_;
};

}  // namespace tandem

#define TANDEM_RETURN_IF_ERROR(expr)      \
  do {                                    \
    ::tandem::Status _st = (expr);        \
    if (!_st.ok()) return _st;            \
  } while (0)

#define TANDEM_CONCAT_INNER(a, b) a##b
#define TANDEM_CONCAT(a, b) TANDEM_CONCAT_INNER(a, b)

#define TANDEM_ASSIGN_OR_RETURN_IMPL(tmp, lhs, expr) \
  auto tmp = (expr);                                 \
  if (!tmp.ok()) return tmp.status();                \
  lhs = std::move(tmp).value()

#define TANDEM_ASSIGN_OR_RETURN(lhs, expr) \
  TANDEM_ASSIGN_OR_RETURN_IMPL(TANDEM_CONCAT(_res_, __LINE__), lhs, expr)
