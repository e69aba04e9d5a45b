#pragma once

#include <stdexcept>
#include <string>

namespace octad {

// Error codes shared across modules. Each recoverable failure mode gets its
// own value so callers (and tests) can distinguish them.
enum class Errc {
  // tensor file i/o
  bad_magic,
  bad_dtype,
  bad_header,
  truncated,
  io_failure,
  // manifest / config
  missing_column,
  duplicate_key,
  label_years_inconsistent,
  bad_field,
  invalid_config,
  // phantom
  invalid_spec,
  // cohort
  empty_cohort,
  unmatched_subject,
  infeasible_split,
  // model / eval
  nonfinite,
  single_class,
  leakage,
  invalid_argument,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const { return code_; }

  // Exit-code mapping for the CLI: configuration/input problems are
  // validation errors (1), everything else is a runtime error (2).
  bool is_validation() const {
    switch (code_) {
      case Errc::missing_column:
      case Errc::duplicate_key:
      case Errc::label_years_inconsistent:
      case Errc::bad_field:
      case Errc::invalid_config:
      case Errc::invalid_spec:
      case Errc::invalid_argument:
        return true;
      default:
        return false;
    }
  }

 private:
  Errc code_;
};

}  // namespace octad
