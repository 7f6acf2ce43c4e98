// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/prompt/prompt_engine.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "kevolve/core/error.hpp"
#include "kevolve/core/serialization.hpp"

namespace kevolve {

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fenced(std::string_view code) {
  std::string out = "```\n";
  out.append(code);
  if (!code.empty() && code.back() != '\n') out.push_back('\n');
  out += "```\n";
  return out;
}

std::string metric_lines(const EvalResult& eval, std::string_view indent) {
  std::ostringstream out;
  out << indent << "- compiled: " << fixed4(eval.compiled ? 1.0 : 0.0) << "\n";
  out << indent << "- correctness: " << fixed4(eval.correct ? 1.0 : 0.0) << "\n";
  out << indent << "- score: " << fixed4(eval.score) << "\n";
  if (eval.speedup) out << indent << "- speedup: " << fixed4(*eval.speedup) << "\n";
  if (eval.candidate_timing)
    out << indent << "- runtime_ns: " << fixed4(eval.candidate_timing->trimmed_mean) << "\n";
  return out.str();
}

std::string render_views(const std::vector<ProgramView>& views, const char* label) {
  if (views.empty()) return "(none)\n";
  std::ostringstream out;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    out << "### " << label << " " << (i + 1) << " (" << v.program.candidate_id << ")\n";
    out << metric_lines(v.eval, "");
    out << "- stage: " << to_string(v.eval.stage) << "\n";
    out << fenced(v.program.evolve_block);
  }
  return out.str();
}

std::string render_hardware(const std::map<std::string, std::string>& hardware) {
  if (hardware.empty()) return "unknown device";
  std::string out;
  for (const auto& [k, v] : hardware) {
    if (!out.empty()) out += "\n";
    out += k + ": " + v;
  }
  return out;
}

}  // namespace

PromptTemplates PromptTemplates::load(const std::string& system_path, const std::string& user_path) {
  return PromptTemplates{read_text_file(system_path), read_text_file(user_path), system_path};
}

std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& fields) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const auto open = tpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    const auto close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    out.append(tpl.substr(pos, open - pos));
    const std::string name(tpl.substr(open + 2, close - open - 2));
    auto it = fields.find(name);
    if (it == fields.end())
      throw Error(ErrorCode::missing_template_field, "no value for {{" + name + "}}");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

std::string render_system_prompt(const TaskSpec& task,
                                 const std::map<std::string, std::string>& hardware_metadata,
                                 const PromptTemplates& templates) {
  task.validate();
  const std::string target = task.target_class_name.empty() ? "ModelNew" : task.target_class_name;
  return render_template(templates.system,
                         {{"reference_code", fenced(task.reference_source)},
                          {"custom_code", "(target module class: " + target + ")"},
                          {"accelerator_specs", render_hardware(hardware_metadata)},
                          {"start_marker", task.markers.start_marker},
                          {"end_marker", task.markers.end_marker}});
}

std::string render_user_prompt(const UserPromptContext& context, const PromptTemplates& templates) {
  if (context.current.candidate_id != context.current_eval.candidate_id)
    throw Error(ErrorCode::invalid_argument, "current_eval does not belong to the current program");
  const EvalResult& eval = context.current_eval;

  std::string error_section;
  if (is_error_stage(eval.stage) && !eval.error_log.empty()) {
    std::string log = eval.error_log;
    if (context.error_log_truncated && log.size() > kErrorLogTail)
      log = log.substr(log.size() - kErrorLogTail);
    error_section = "- Runtime Error Message:\n  " + log + "\n";
  }
  if (context.feedback_note)
    error_section += "- Last Generation Rejected:\n  " + *context.feedback_note + "\n";

  return render_template(templates.user,
                         {{"target_class", context.target_class},
                          {"previous_attempts", render_views(context.previous, "Attempt")},
                          {"top_programs", render_views(context.top, "Program")},
                          {"current_program", fenced(context.current.full_source)},
                          {"current_metrics", metric_lines(eval, "  ")},
                          {"stage", std::string(to_string(eval.stage))},
                          {"error_section", error_section}});
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

PromptBundle make_bundle(std::string system_text, UserPromptContext context,
                         const PromptTemplates& templates) {
  PromptBundle bundle;
  bundle.system_text = std::move(system_text);
  bundle.user_text = render_user_prompt(context, templates);
  bundle.token_count_estimate = estimate_tokens(bundle.system_text) + estimate_tokens(bundle.user_text);
  for (const auto& v : context.previous) bundle.included_previous.push_back(v.program.candidate_id);
  for (const auto& v : context.top) bundle.included_top.push_back(v.program.candidate_id);
  bundle.context = std::move(context);
  return bundle;
}

PromptBundle enforce_token_budget(PromptBundle bundle, std::size_t cap,
                                  const PromptTemplates& templates) {
  while (bundle.token_count_estimate > cap) {
    UserPromptContext ctx = bundle.context;
    if (!ctx.previous.empty()) {
      ctx.previous.erase(ctx.previous.begin());
    } else if (!ctx.top.empty()) {
      // Lowest score goes first; among equals, the later-listed one.
      auto worst = ctx.top.begin();
      for (auto it = ctx.top.begin(); it != ctx.top.end(); ++it)
        if (it->eval.score <= worst->eval.score) worst = it;
      ctx.top.erase(worst);
    } else if (!ctx.error_log_truncated && ctx.current_eval.error_log.size() > kErrorLogTail) {
      ctx.error_log_truncated = true;
    } else {
      throw Error(ErrorCode::irreducible_prompt,
                  "prompt needs " + std::to_string(bundle.token_count_estimate) +
                      " tokens with only the current program left (cap " + std::to_string(cap) + ")");
    }
    bundle = make_bundle(std::move(bundle.system_text), std::move(ctx), templates);
  }
  return bundle;
}

}  // namespace kevolve
