// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kevolve/core/types.hpp"

namespace kevolve {

// Template text with {{name}} placeholders.
struct PromptTemplates {
  std::string system;
  std::string user;
  std::string version;

  // Built-in v1 templates shipped under templates/.
  static PromptTemplates defaults();
  static PromptTemplates load(const std::string& system_path, const std::string& user_path);
};

// Substitutes every {{name}}; a placeholder without a field throws
// missing_template_field.
std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& fields);

std::string render_system_prompt(const TaskSpec& task,
                                 const std::map<std::string, std::string>& hardware_metadata,
                                 const PromptTemplates& templates = PromptTemplates::defaults());

struct ProgramView {
  CandidateProgram program;
  EvalResult eval;
};

struct UserPromptContext {
  std::string target_class;
  CandidateProgram current;
  EvalResult current_eval;
  std::vector<ProgramView> previous;  // oldest first
  std::vector<ProgramView> top;       // inspiration order
  std::optional<std::string> feedback_note;
  bool error_log_truncated = false;
};

inline constexpr std::size_t kErrorLogTail = 2000;

std::string render_user_prompt(const UserPromptContext& context,
                               const PromptTemplates& templates = PromptTemplates::defaults());

// ceil(chars / 4).
std::size_t estimate_tokens(std::string_view text);

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  std::size_t token_count_estimate = 0;
  std::vector<std::string> included_previous;
  std::vector<std::string> included_top;
  UserPromptContext context;
};

PromptBundle make_bundle(std::string system_text, UserPromptContext context,
                         const PromptTemplates& templates = PromptTemplates::defaults());

// Drops the oldest previous attempt, then the lowest-scored top program,
// then cuts the error log to its last kErrorLogTail characters, until the
// estimate fits. Throws irreducible_prompt when it still does not.
PromptBundle enforce_token_budget(PromptBundle bundle, std::size_t cap = 32768,
                                  const PromptTemplates& templates = PromptTemplates::defaults());

}  // namespace kevolve
