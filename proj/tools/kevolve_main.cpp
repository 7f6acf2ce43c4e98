// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kevolve/core/error.hpp"
#include "kevolve/core/serialization.hpp"
#include "kevolve/eval/backend.hpp"
#include "kevolve/eval/eval_service.hpp"
#include "kevolve/eval/http_api.hpp"
#include "kevolve/evolve/controller.hpp"
#include "kevolve/llm/llm_client.hpp"
#include "kevolve/prompt/prompt_engine.hpp"
#include "kevolve/report/config.hpp"
#include "kevolve/report/report.hpp"
#include "kevolve/training/extractor.hpp"

namespace fs = std::filesystem;
using namespace kevolve;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCandidateFailure = 1;
constexpr int kExitInfrastructure = 2;

struct GlobalFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::size_t> parallelism;
};

AppConfig resolve_config(const GlobalFlags& g) {
  AppConfig c = load_config(g.config);
  if (g.seed) c.run.seed = *g.seed;
  if (g.backend) c.backend_id = *g.backend;
  if (g.parallelism) c.eval.parallelism = *g.parallelism;
  return c;
}

std::unique_ptr<EvalService> make_service(const AppConfig& c) {
  auto service = std::make_unique<EvalService>(c.eval);
  if (!c.backends_file.empty())
    for (const auto& d : load_backend_registry(c.backends_file)) service->register_backend(d);
  return service;
}

PromptTemplates templates_of(const AppConfig& c) {
  if (c.system_template.empty() && c.user_template.empty()) return PromptTemplates::defaults();
  return PromptTemplates::load(c.system_template, c.user_template);
}

std::shared_ptr<Provider> make_provider(const AppConfig& c, const std::string& mock_script) {
  if (c.llm.provider == "chat") return std::make_shared<ChatCompletionsProvider>(c.llm.chat);
  const std::string script = mock_script.empty() ? c.llm.mock_script : mock_script;
  if (script.empty())
    throw Error(ErrorCode::invalid_argument, "the mock provider needs a script (--mock-script or llm.mock_script)");
  return ScriptedMock::from_file(script);
}


int cmd_run(const GlobalFlags& g, const std::string& task_path, const std::string& mock_script,
            const std::string& out_dir, std::optional<std::uint32_t> iterations) {
  AppConfig c = resolve_config(g);
  if (iterations) c.run.iterations = *iterations;
  TaskSpec task = load_task_file(task_path);
  if (!c.backend_id.empty()) task.backend_id = c.backend_id;
  c.run.run_id = sanitize_id(task.task_id);
  auto service = make_service(c);
  fs::create_directories(out_dir);
  auto audit = std::make_shared<AuditLog>((fs::path(out_dir) / "audit.jsonl").string());
  LlmClient client(make_provider(c, mock_script), c.llm.retry, audit);
  EvolutionController controller(task, c.run, *service, client, {templates_of(c), {}, out_dir});
  const RunReport report = controller.run();
  const auto best = best_evolved(report);
  std::cout << "task " << report.task_id << ": " << report.steps.size() << " steps, best score "
            << format_number(report.final_best.score) << " (" << report.final_best.candidate_id << ")";
  if (report.final_best.speedup) std::cout << ", speedup " << format_number(*report.final_best.speedup);
  std::cout << "\nrun directory: " << out_dir << "\n";
  return best && best->second.valid() ? kExitOk : kExitCandidateFailure;
}

void print_metrics(const std::string& label, const MetricsSummary& m) {
  std::cout << label << ": tasks=" << m.task_count << " corr=" << format_number(m.corr);
  for (const auto& [p, f] : m.fast_p) std::cout << " fast_" << format_number(p) << "=" << format_number(f);
  std::cout << " avg_amsr=" << format_number(m.avg_amsr) << "\n";
}

void print_suite(const SuiteResult& r) {
  for (const auto& t : r.tasks) {
    std::cout << "  " << t.task_id << " (level " << t.level << "): ";
    if (!t.infrastructure_error.empty())
      std::cout << "infrastructure failure: " << t.infrastructure_error;
    else if (t.best_eval)
      std::cout << to_string(t.best_eval->stage) << " score " << format_number(t.best_eval->score)
                << (t.best_eval->speedup ? " speedup " + format_number(*t.best_eval->speedup) : "");
    else
      std::cout << "no accepted candidate";
    std::cout << "\n";
  }
  for (const auto& [level, m] : r.per_level) print_metrics("level " + std::to_string(level), m);
  print_metrics("overall", r.overall);
}

int cmd_suite(const GlobalFlags& g, const std::string& manifest_path, const std::string& out_dir,
              std::optional<std::uint32_t> iterations) {
  AppConfig c = resolve_config(g);
  if (iterations) c.run.iterations = *iterations;
  auto service = make_service(c);
  SuiteOptions options;
  options.run = c.run;
  options.parallelism = c.eval.parallelism;
  options.output_dir = out_dir;
  options.backend_id = c.backend_id;
  options.retry = c.llm.retry;
  options.templates = templates_of(c);
  const SuiteManifest manifest = load_suite_manifest(manifest_path);
  const SuiteResult result = run_suite(manifest, options, *service, [&](const SuiteTask& t) {
    return make_provider(c, t.mock_script);
  });
  print_suite(result);
  return suite_exit_code(result);
}


int cmd_serve(const GlobalFlags& g, std::optional<std::string> host, std::optional<int> port) {
  AppConfig c = resolve_config(g);
  auto service = make_service(c);
  EvalHttpServer server(*service);
  const std::string h = host.value_or(c.server.host);
  const int p = port.value_or(c.server.port);
  std::cout << "serving on " << h << ":" << p << std::endl;
  server.listen(h, p);
  return kExitOk;
}

int cmd_extract(const GlobalFlags& g, const std::vector<std::string>& run_dirs, const std::string& out_dir,
                std::size_t quota) {
  AppConfig c = resolve_config(g);
  const auto vocabulary = c.vocabulary_file.empty() ? default_vocabulary() : load_vocabulary(c.vocabulary_file);
  std::vector<TrainingSample> samples;
  std::vector<LeakageFinding> dropped;
  for (const auto& dir : run_dirs) {
    const RunReport report = read_json_file((fs::path(dir) / "run.json").string()).get<RunReport>();
    TaskSpec task;
    const fs::path task_file = fs::path(dir) / "task.json";
    if (fs::exists(task_file)) task = read_json_file(task_file.string()).get<TaskSpec>();
    const std::string reference = task.reference_source.empty() ? report.seed.full_source : task.reference_source;
    const Difficulty difficulty = bucket_difficulty(task, reference, vocabulary);
    const auto drafts = decompose(report, dir, difficulty);
    std::vector<TrainingSample> run_samples = filter_correctness(drafts);
    for (auto& s : filter_performance(drafts)) run_samples.push_back(std::move(s));
    for (auto& s : select_best_steps(drafts)) run_samples.push_back(std::move(s));
    LeakageAudit audit = audit_leakage(std::move(run_samples), catalog_of(report));
    for (auto& f : audit.dropped) {
      std::cerr << "leakage: dropped " << f.sample_id << " (context holds " << f.leaked_candidate_id
                << " scoring " << format_number(f.leaked_score) << " > " << format_number(f.target_score) << ")\n";
      dropped.push_back(std::move(f));
    }
    for (auto& s : audit.kept) samples.push_back(std::move(s));
  }
  const Shard shard = balanced_sample(samples, quota, g.seed.value_or(c.run.seed));
  write_shard(shard, out_dir, dropped);
  std::cout << "wrote " << shard.samples.size() << " samples to " << out_dir << "\n";
  for (const auto& [key, count] : shard.buckets)
    if (count.available) std::cout << "  " << key << ": " << count.selected << "/" << count.available << "\n";
  return kExitOk;
}

int cmd_report(const GlobalFlags&, const std::string& dir, const std::string& curves_dir) {
  const fs::path root(dir);
  std::map<std::string, std::vector<CurvePoint>> curves;
  const std::string out = curves_dir.empty() ? (root / "curves").string() : curves_dir;
  if (fs::exists(root / "suite.json")) {
    const auto suite = read_json_file((root / "suite.json").string());
    std::vector<MetricInput> all;
    std::map<int, std::vector<MetricInput>> levels;
    for (const auto& t : suite.at("tasks")) {
      MetricInput in;
      if (!t.at("best_eval").is_null()) in = metric_input(t.at("best_eval").get<EvalResult>());
      all.push_back(in);
      levels[t.at("level").get<int>()].push_back(in);
      std::cout << "  " << t.at("task_id").get<std::string>() << " level " << t.at("level").get<int>() << "\n";
    }
    for (const auto& [level, inputs] : levels) print_metrics("level " + std::to_string(level), compute_metrics(inputs));
    print_metrics("overall", compute_metrics(all));
    if (fs::exists(root / "runs"))
      for (const auto& entry : fs::directory_iterator(root / "runs"))
        if (fs::exists(entry.path() / "run.json")) {
          const auto r = read_json_file((entry.path() / "run.json").string()).get<RunReport>();
          curves[r.task_id] = r.best_score_curve;
        }
  } else {
    const auto r = read_json_file((root / "run.json").string()).get<RunReport>();
    const auto best = best_evolved(r);
    print_metrics("run " + r.task_id, compute_metrics({best ? metric_input(best->second) : MetricInput{}}));
    curves[r.task_id] = r.best_score_curve;
  }
  export_curves(curves, out);
  std::cout << "curves written to " << out << "\n";
  return kExitOk;
}

int cmd_replay(const GlobalFlags& g, const std::string& run_dir, const std::string& out_path,
               std::optional<std::string> weights_file, ScoreWeights weights) {
  AppConfig c = resolve_config(g);
  if (weights_file) weights = read_json_file(*weights_file).get<ScoreWeights>();
  (void)c;
  const RunReport original = read_json_file((fs::path(run_dir) / "run.json").string()).get<RunReport>();
  const RunReport rescored = rescore(original, weights);
  const std::string out = out_path.empty() ? (fs::path(run_dir) / "replay.json").string() : out_path;
  write_text_file(out, nlohmann::json(rescored).dump(2) + "\n");
  std::cout << "best score " << format_number(original.final_best.score) << " -> "
            << format_number(rescored.final_best.score) << " (" << rescored.final_best.candidate_id << ")\n"
            << "rescored report: " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kevolve: LLM-driven kernel evolution with a MAP-Elites archive"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "RNG seed for archive sampling and shard balancing");
  app.add_option("--backend", g.backend, "backend id overriding each task's backend");
  app.add_option("--parallelism", g.parallelism, "evaluation workers and concurrent suite tasks");

  std::string task_path, mock_script, out_dir = "kevolve-run";
  std::optional<std::uint32_t> iterations;
  auto* run = app.add_subcommand("run", "evolve a single task");
  run->add_option("--task", task_path, "task JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--mock-script", mock_script, "scripted mock provider responses");
  run->add_option("--out", out_dir, "run directory");
  run->add_option("--iterations", iterations, "evolution iterations");

  std::string manifest_path, suite_out = "kevolve-suite";
  auto* suite = app.add_subcommand("suite", "evolve every task of a suite manifest");
  suite->add_option("--manifest", manifest_path, "suite manifest JSON")->required()->check(CLI::ExistingFile);
  suite->add_option("--out", suite_out, "suite output directory");
  suite->add_option("--iterations", iterations, "evolution iterations per task");

  std::optional<std::string> host;
  std::optional<int> port;
  auto* serve = app.add_subcommand("serve", "run the evaluation HTTP service");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "bind port");

  std::vector<std::string> run_dirs;
  std::string shard_out = "kevolve-shard";
  std::size_t quota = 1000;
  auto* extract = app.add_subcommand("extract", "mine run directories into a training shard");
  extract->add_option("--runs", run_dirs, "run directories")->required()->expected(1, -1);
  extract->add_option("--out", shard_out, "shard directory");
  extract->add_option("--quota", quota, "samples per (kind, difficulty) bucket");

  std::string report_dir, curves_dir;
  auto* report = app.add_subcommand("report", "print metrics and export curves for a run or suite");
  report->add_option("dir", report_dir, "run or suite directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--curves", curves_dir, "curve output directory");

  std::string replay_dir, replay_out;
  std::optional<std::string> weights_file;
  ScoreWeights weights;
  auto* replay = app.add_subcommand("replay", "re-score a persisted run under new weights");
  replay->add_option("dir", replay_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  replay->add_option("--out", replay_out, "output report path");
  replay->add_option("--weights", weights_file, "ScoreWeights JSON")->check(CLI::ExistingFile);
  replay->add_option("--compile-credit", weights.compile_credit);
  replay->add_option("--correct-credit", weights.correct_credit);
  replay->add_option("--speedup-weight", weights.speedup_weight);
  replay->add_option("--speedup-cap", weights.speedup_cap);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInfrastructure;
  }

  try {
    if (*run) return cmd_run(g, task_path, mock_script, out_dir, iterations);
    if (*suite) return cmd_suite(g, manifest_path, suite_out, iterations);
    if (*serve) return cmd_serve(g, host, port);
    if (*extract) return cmd_extract(g, run_dirs, shard_out, quota);
    if (*report) return cmd_report(g, report_dir, curves_dir);
    if (*replay) return cmd_replay(g, replay_dir, replay_out, weights_file, weights);
  } catch (const std::exception& e) {
    std::cerr << "kevolve: " << e.what() << "\n";
    return kExitInfrastructure;
  }
  return kExitInfrastructure;
}
