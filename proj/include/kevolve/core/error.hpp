// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kevolve {

enum class ErrorCode {
  invalid_argument,
  empty_island,
  no_block,
  ambiguous_block,
  inverted_markers,
  parent_block_malformed,
  locked_region_violation,
  irreducible_prompt,
  missing_template_field,
  backend_unavailable,
  unknown_backend,
  invalid_rule_table,
  unknown_job,
  queue_full,
  provider_error,
  credential_missing,
  script_exhausted,
  missing_artifact,
  parent_invalid,
  io_error,
  parse_error,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kevolve
