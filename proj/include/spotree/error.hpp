#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spotree {

enum class Errc {
  dimension_mismatch,
  empty_input,
  infeasible,
  inconsistent_oracle,
  invalid_argument,
  too_large,
  parse_error,
  io_error,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::empty_input: return "empty_input";
    case Errc::infeasible: return "infeasible";
    case Errc::inconsistent_oracle: return "inconsistent_oracle";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::too_large: return "too_large";
    case Errc::parse_error: return "parse_error";
    case Errc::io_error: return "io_error";
  }
  return "unknown";
}

// All library failures are reported through this type; code() is stable and
// is what the CLI prints in its machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

inline void require_dims(std::size_t got, std::size_t want, std::string_view what) {
  if (got != want) {
    throw Error(Errc::dimension_mismatch, std::string(what) + ": expected dimension " +
                                              std::to_string(want) + ", got " + std::to_string(got));
  }
}

}  // namespace spotree
