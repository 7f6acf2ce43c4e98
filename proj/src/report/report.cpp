// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/report/report.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <mutex>
#include <thread>

#include "kevolve/core/error.hpp"
#include "kevolve/core/serialization.hpp"

namespace kevolve {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const MetricsSummary& v) {
  nlohmann::json fast = nlohmann::json::object();
  for (const auto& [p, f] : v.fast_p) fast["fast_" + format_number(p)] = f;
  j = nlohmann::json{{"corr", v.corr}, {"fast_p", fast}, {"avg_amsr", v.avg_amsr}, {"task_count", v.task_count}};
}

MetricsSummary compute_metrics(const std::vector<MetricInput>& results,
                               const std::vector<double>& p_values) {
  if (results.empty()) throw Error(ErrorCode::invalid_argument, "compute_metrics needs at least one result");
  const double n = static_cast<double>(results.size());
  MetricsSummary m;
  m.task_count = results.size();
  std::size_t valid = 0;
  double amsr = 0.0;
  std::map<double, std::size_t> fast;
  for (double p : p_values) fast[p] = 0;
  for (const auto& r : results) {
    if (!r.correct || r.hack_detected) continue;
    ++valid;
    if (!r.speedup) continue;
    if (*r.speedup >= 1.0) amsr += *r.speedup;
    for (auto& [p, count] : fast)
      if (*r.speedup > p) ++count;
  }
  m.corr = 100.0 * static_cast<double>(valid) / n;
  for (const auto& [p, count] : fast) m.fast_p[p] = static_cast<double>(count) / n;
  m.avg_amsr = amsr / n;
  return m;
}

MetricInput metric_input(const EvalResult& eval) {
  return {eval.correct, eval.hack_detected, eval.speedup};
}

std::optional<std::pair<CandidateProgram, EvalResult>> best_evolved(const RunReport& report) {
  const TrajectoryStep* best = nullptr;
  for (const auto& s : report.steps)
    if (s.child_eval && (!best || s.child_eval->score > best->child_eval->score)) best = &s;
  if (!best) return std::nullopt;
  return std::make_pair(*best->child, *best->child_eval);
}

SuiteManifest load_suite_manifest(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
  };
  SuiteManifest m;
  m.name = j.value("name", std::string("suite"));
  for (const auto& t : j.at("tasks")) {
    SuiteTask task;
    task.task_path = resolve(t.at("task").get<std::string>());
    task.level = t.value("level", 1);
    task.mock_script = resolve(t.value("mock_script", std::string{}));
    m.tasks.push_back(std::move(task));
  }
  if (m.tasks.empty()) throw Error(ErrorCode::invalid_argument, "suite manifest lists no tasks");
  return m;
}

nlohmann::json suite_to_json(const SuiteResult& result) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : result.tasks)
    tasks.push_back({{"task_id", t.task_id},
                     {"level", t.level},
                     {"best_candidate_id", t.best_candidate_id ? nlohmann::json(*t.best_candidate_id)
                                                               : nlohmann::json(nullptr)},
                     {"best_eval", t.best_eval ? nlohmann::json(*t.best_eval) : nlohmann::json(nullptr)},
                     {"infrastructure_error", t.infrastructure_error}});
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [level, m] : result.per_level) levels[std::to_string(level)] = m;
  return {{"schema_version", kReportSchemaVersion},
          {"name", result.name},
          {"tasks", tasks},
          {"per_level", levels},
          {"overall", result.overall}};
}

std::string sanitize_id(std::string_view id) {
  std::string out(id);
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return out.empty() ? "_" : out;
}

namespace {

SuiteTaskResult run_one(const SuiteTask& entry, const SuiteOptions& options, Evaluator& evaluator,
                        const ProviderFactory& providers) {
  SuiteTaskResult out;
  out.level = entry.level;
  out.task_id = fs::path(entry.task_path).stem().string();
  try {
    TaskSpec task = load_task_file(entry.task_path);
    if (!options.backend_id.empty()) task.backend_id = options.backend_id;
    out.task_id = task.task_id;
    RunConfig run = options.run;
    run.run_id = sanitize_id(task.task_id);
    std::string run_dir;
    std::shared_ptr<AuditLog> audit;
    if (!options.output_dir.empty()) {
      run_dir = (fs::path(options.output_dir) / "runs" / run.run_id).string();
      fs::create_directories(run_dir);
      audit = std::make_shared<AuditLog>((fs::path(run_dir) / "audit.jsonl").string());
    } else {
      audit = std::make_shared<AuditLog>();
    }
    LlmClient client(providers(entry), options.retry, audit);
    EvolutionController controller(task, run, evaluator, client,
                                   {options.templates, options.now, run_dir});
    const RunReport report = controller.run();
    out.curve = report.best_score_curve;
    if (auto best = best_evolved(report)) {
      out.best_candidate_id = best->first.candidate_id;
      out.best_eval = best->second;
    }
  } catch (const std::exception& e) {
    out.infrastructure_error = e.what();
  }
  return out;
}

}  // namespace

SuiteResult run_suite(const SuiteManifest& manifest, const SuiteOptions& options,
                      Evaluator& evaluator, const ProviderFactory& providers) {
  if (manifest.tasks.empty()) throw Error(ErrorCode::invalid_argument, "suite manifest lists no tasks");
  SuiteResult result;
  result.name = manifest.name;
  result.tasks.resize(manifest.tasks.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < manifest.tasks.size();)
      result.tasks[i] = run_one(manifest.tasks[i], options, evaluator, providers);
  };
  const std::size_t threads = std::clamp<std::size_t>(options.parallelism, 1, manifest.tasks.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::map<int, std::vector<MetricInput>> by_level;
  std::vector<MetricInput> all;
  for (const auto& t : result.tasks) {
    const MetricInput in = t.best_eval ? metric_input(*t.best_eval) : MetricInput{};
    by_level[t.level].push_back(in);
    all.push_back(in);
  }
  for (const auto& [level, inputs] : by_level) result.per_level[level] = compute_metrics(inputs, options.p_values);
  result.overall = compute_metrics(all, options.p_values);

  if (!options.output_dir.empty()) {
    const fs::path dir(options.output_dir);
    write_text_file((dir / "suite.json").string(), suite_to_json(result).dump(2) + "\n");
    std::map<std::string, std::vector<CurvePoint>> curves;
    for (const auto& t : result.tasks)
      if (!t.curve.empty()) curves[t.task_id] = t.curve;
    export_curves(curves, (dir / "curves").string());
  }
  return result;
}

int suite_exit_code(const SuiteResult& result) {
  int code = 0;
  for (const auto& t : result.tasks) {
    if (!t.infrastructure_error.empty()) return 2;
    if (!t.best_eval || !t.best_eval->valid()) code = 1;
  }
  return code;
}

void export_curves(const std::map<std::string, std::vector<CurvePoint>>& curves, const std::string& dir) {
  fs::create_directories(dir);
  std::string aggregate = "task_id,iteration,best_score,best_speedup\n";
  for (const auto& [task_id, curve] : curves) {
    write_text_file((fs::path(dir) / (sanitize_id(task_id) + ".csv")).string(), curve_csv(curve));
    for (const auto& p : curve)
      aggregate += task_id + "," + std::to_string(p.iteration) + "," + format_number(p.best_score) + "," +
                   format_number(p.best_speedup) + "\n";
  }
  write_text_file((fs::path(dir) / "curves.csv").string(), aggregate);
}

RunReport rescore(RunReport report, const ScoreWeights& weights) {
  weights.validate();
  report.seed_eval.score = score_eval(report.seed_eval, weights);
  for (auto& s : report.steps)
    if (s.child_eval) s.child_eval->score = score_eval(*s.child_eval, weights);
  report.best_score_curve = best_score_curve(report);
  report.final_best = {report.seed.candidate_id, report.seed_eval.score, report.seed_eval.speedup};
  for (const auto& s : report.steps)
    if (s.child_eval && s.child_eval->score > report.final_best.score)
      report.final_best = {s.child->candidate_id, s.child_eval->score, s.child_eval->speedup};
  return report;
}

}  // namespace kevolve
