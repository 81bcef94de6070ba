#ifndef MALAKIT_LOG_HPP
#define MALAKIT_LOG_HPP

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace malakit {

namespace detail {
inline std::atomic<bool>& warnings_enabled() {
  static std::atomic<bool> enabled{true};
  return enabled;
}
inline std::mutex& log_mutex() {
  static std::mutex mu;
  return mu;
}
}  // namespace detail

inline void set_warnings_enabled(bool on) { detail::warnings_enabled() = on; }

// All diagnostics go to standard error; standard output is reserved for
// machine-readable results.
inline void warn(const std::string& msg) {
  if (!detail::warnings_enabled()) return;
  std::lock_guard lock(detail::log_mutex());
  std::cerr << "malakit: warning: " << msg << '\n';
}

inline void info(const std::string& msg) {
  std::lock_guard lock(detail::log_mutex());
  std::cerr << "malakit: " << msg << '\n';
}

}  // namespace malakit

#endif
