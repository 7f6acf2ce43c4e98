// Copyright 2026 The kevolve Authors.
// SPDX-License-Identifier: Apache-2.0

#include "kevolve/training/extractor.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include "kevolve/core/digest.hpp"
#include "kevolve/core/error.hpp"
#include "kevolve/core/rng.hpp"
#include "kevolve/core/serialization.hpp"

namespace kevolve {

namespace fs = std::filesystem;

std::string_view to_string(SampleKind kind) {
  switch (kind) {
    case SampleKind::correctness_sft: return "correctness_sft";
    case SampleKind::performance_sft: return "performance_sft";
    case SampleKind::best_step_rl: return "best_step_rl";
  }
  return "unknown";
}

SampleKind sample_kind_from_string(std::string_view name) {
  for (auto k : {SampleKind::correctness_sft, SampleKind::performance_sft, SampleKind::best_step_rl})
    if (to_string(k) == name) return k;
  throw Error(ErrorCode::parse_error, "unknown sample kind: " + std::string(name));
}

void TrainingSample::validate() const {
  if (reward.has_value() != (kind == SampleKind::best_step_rl))
    throw Error(ErrorCode::invalid_argument, "reward must be present exactly for best_step_rl samples");
  if (kind == SampleKind::performance_sft && !(child_speedup && *child_speedup > 1.0))
    throw Error(ErrorCode::invalid_argument, "performance sample without speedup > 1");
  if (reward && *reward < 0.0) throw Error(ErrorCode::invalid_argument, "negative reward");
}

void to_json(nlohmann::json& j, const TrainingSample& v) {
  j = nlohmann::json{
      {"sample_id", v.sample_id},
      {"kind", to_string(v.kind)},
      {"input_context", {{"system_text", v.input_context.system_text}, {"user_text", v.input_context.user_text}}},
      {"target_output", v.target_output},
      {"parent_runtime_ns", v.parent_runtime_ns},
      {"child_runtime_ns", v.child_runtime_ns},
      {"achieved_speedup_vs_parent", v.achieved_speedup_vs_parent},
      {"reward", v.reward ? nlohmann::json(*v.reward) : nlohmann::json(nullptr)},
      {"difficulty", v.difficulty},
      {"task_id", v.task_id},
      {"source_step", {{"run_id", v.source_step.run_id}, {"iteration", v.source_step.iteration}}},
      {"candidate_id", v.candidate_id},
      {"parent_id", v.parent_id},
      {"target_score", v.target_score},
      {"child_speedup", v.child_speedup ? nlohmann::json(*v.child_speedup) : nlohmann::json(nullptr)},
      {"context_ids", v.context_ids}};
}

void from_json(const nlohmann::json& j, TrainingSample& v) {
  v.sample_id = j.at("sample_id").get<std::string>();
  v.kind = sample_kind_from_string(j.at("kind").get<std::string>());
  v.input_context.system_text = j.at("input_context").at("system_text").get<std::string>();
  v.input_context.user_text = j.at("input_context").at("user_text").get<std::string>();
  v.target_output = j.at("target_output").get<std::string>();
  v.parent_runtime_ns = j.at("parent_runtime_ns").get<double>();
  v.child_runtime_ns = j.at("child_runtime_ns").get<double>();
  v.achieved_speedup_vs_parent = j.at("achieved_speedup_vs_parent").get<double>();
  v.reward.reset();
  if (!j.at("reward").is_null()) v.reward = j.at("reward").get<double>();
  v.difficulty = j.at("difficulty").get<Difficulty>();
  v.task_id = j.at("task_id").get<std::string>();
  v.source_step.run_id = j.at("source_step").at("run_id").get<std::string>();
  v.source_step.iteration = j.at("source_step").at("iteration").get<std::uint32_t>();
  v.candidate_id = j.value("candidate_id", std::string{});
  v.parent_id = j.value("parent_id", std::string{});
  v.target_score = j.value("target_score", 0.0);
  v.child_speedup.reset();
  if (j.contains("child_speedup") && !j.at("child_speedup").is_null())
    v.child_speedup = j.at("child_speedup").get<double>();
  v.context_ids = j.value("context_ids", std::vector<std::string>{});
}

namespace {

std::string read_artifact(const fs::path& path) {
  if (!fs::is_regular_file(path))
    throw Error(ErrorCode::missing_artifact, "missing run artifact: " + path.string());
  return read_text_file(path.string());
}

std::optional<double> mean_runtime(const EvalResult& e) {
  if (!e.candidate_timing) return std::nullopt;
  return e.candidate_timing->trimmed_mean;
}

TrainingSample make_sample(const StepDraft& d, SampleKind kind) {
  TrainingSample s;
  s.kind = kind;
  s.sample_id = d.source.run_id + "/" + step_dir_name(d.source.iteration) + "/" + std::string(to_string(kind));
  s.input_context = d.input_context;
  s.target_output = d.target_output;
  const auto parent_ns = mean_runtime(d.parent_eval);
  const auto child_ns = mean_runtime(d.child_eval);
  s.parent_runtime_ns = parent_ns.value_or(0.0);
  s.child_runtime_ns = child_ns.value_or(0.0);
  if (parent_ns && child_ns && *child_ns > 0.0 && d.child_eval.valid())
    s.achieved_speedup_vs_parent = *parent_ns / *child_ns;
  s.difficulty = d.difficulty;
  s.task_id = d.task_id;
  s.source_step = d.source;
  s.candidate_id = d.child.candidate_id;
  s.parent_id = d.parent_id;
  s.target_score = d.child_eval.score;
  s.child_speedup = d.child_eval.speedup;
  s.context_ids = d.context_ids;
  return s;
}

}  // namespace

std::vector<StepDraft> decompose(const std::string& run_dir, Difficulty difficulty) {
  const RunReport report = read_json_file((fs::path(run_dir) / "run.json").string()).get<RunReport>();
  return decompose(report, run_dir, difficulty);
}

std::vector<StepDraft> decompose(const RunReport& report, const std::string& run_dir,
                                 Difficulty difficulty) {
  std::map<std::string, std::pair<const CandidateProgram*, const EvalResult*>> known;
  known[report.seed.candidate_id] = {&report.seed, &report.seed_eval};
  for (const auto& s : report.steps)
    if (s.child) known[s.child->candidate_id] = {&*s.child, &*s.child_eval};

  std::vector<StepDraft> drafts;
  for (const auto& s : report.steps) {
    if (!s.accepted()) continue;
    const auto parent = known.find(s.parent_id);
    if (parent == known.end())
      throw Error(ErrorCode::missing_artifact, "parent " + s.parent_id + " not found in run " + report.run_id);
    const fs::path dir = fs::path(run_dir) / "steps" / step_dir_name(s.iteration);
    StepDraft d;
    d.source = {report.run_id, s.iteration};
    d.task_id = report.task_id;
    d.input_context.system_text = read_artifact(dir / "system.txt");
    d.input_context.user_text = read_artifact(dir / "prompt.txt");
    d.target_output = read_artifact(dir / "generation.txt");
    d.parent_id = s.parent_id;
    d.parent_generation = parent->second.first->generation;
    d.parent_eval = *parent->second.second;
    d.child = *s.child;
    d.child_eval = *s.child_eval;
    d.context_ids = s.inspiration_ids;
    d.context_ids.insert(d.context_ids.end(), s.previous_ids.begin(), s.previous_ids.end());
    d.seed_score = report.seed_eval.score;
    d.difficulty = difficulty;
    drafts.push_back(std::move(d));
  }
  return drafts;
}

std::vector<TrainingSample> filter_correctness(const std::vector<StepDraft>& drafts) {
  std::vector<TrainingSample> out;
  for (const auto& d : drafts)
    if (d.from_seed() && d.child_eval.valid()) out.push_back(make_sample(d, SampleKind::correctness_sft));
  return out;
}

std::vector<TrainingSample> filter_performance(const std::vector<StepDraft>& drafts) {
  std::vector<TrainingSample> out;
  for (const auto& d : drafts)
    if (!d.from_seed() && d.child_eval.valid() && d.child_eval.speedup && *d.child_eval.speedup > 1.0)
      out.push_back(make_sample(d, SampleKind::performance_sft));
  return out;
}

std::vector<TrainingSample> select_best_steps(const std::vector<StepDraft>& drafts) {
  std::map<std::string, std::vector<const StepDraft*>> by_run;
  for (const auto& d : drafts) by_run[d.source.run_id].push_back(&d);
  std::vector<TrainingSample> out;
  for (auto& [run, steps] : by_run) {
    std::stable_sort(steps.begin(), steps.end(), [](const StepDraft* a, const StepDraft* b) {
      return a->source.iteration < b->source.iteration;
    });
    double best = steps.front()->seed_score;
    for (const StepDraft* d : steps) {
      if (!(d->child_eval.score > best)) continue;
      best = d->child_eval.score;
      if (d->from_seed()) continue;
      TrainingSample s = make_sample(*d, SampleKind::best_step_rl);
      s.reward = s.achieved_speedup_vs_parent;
      out.push_back(std::move(s));
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const RLGroup& v) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : v.members) members.push_back({{"candidate_id", m.candidate_id}, {"reward", m.reward}});
  j = nlohmann::json{{"group_id", v.group_id},
                     {"parent_candidate_id", v.parent_candidate_id},
                     {"prompt_hash", v.prompt_hash},
                     {"members", members}};
}

RLGroup grpo_rewards(const EvalResult& parent_eval, const std::vector<EvalResult>& children,
                     std::optional<std::size_t> group_size) {
  if (!parent_eval.candidate_timing || !(parent_eval.candidate_timing->trimmed_mean > 0.0))
    throw Error(ErrorCode::parent_invalid, "parent " + parent_eval.candidate_id + " has no timing");
  if (group_size && *group_size != children.size())
    throw Error(ErrorCode::invalid_argument, "group needs " + std::to_string(*group_size) +
                                                 " children, got " + std::to_string(children.size()));
  const double parent_ns = parent_eval.candidate_timing->trimmed_mean;
  RLGroup group;
  group.parent_candidate_id = parent_eval.candidate_id;
  group.group_id = "grpo/" + parent_eval.candidate_id;
  for (const auto& child : children) {
    double reward = 0.0;
    if (child.valid() && child.candidate_timing && child.candidate_timing->trimmed_mean > 0.0)
      reward = parent_ns / child.candidate_timing->trimmed_mean;
    group.members.push_back({child.candidate_id, reward});
  }
  return group;
}

std::vector<std::string> default_vocabulary() {
  return {"Conv1d",    "Conv2d",     "Conv3d",    "ConvTranspose2d", "Linear",      "BatchNorm2d",
          "LayerNorm", "GroupNorm",  "Dropout",   "Embedding",       "MaxPool2d",   "AvgPool2d",
          "matmul",    "bmm",        "mm",        "einsum",          "conv2d",      "linear",
          "relu",      "gelu",       "silu",      "sigmoid",         "tanh",        "softmax",
          "log_softmax", "layer_norm", "batch_norm", "dropout",      "sum",         "mean",
          "max",       "min",        "argmax",    "cumsum",          "exp",         "log",
          "sqrt",      "clamp",      "where",     "cat",             "transpose",   "reshape",
          "scaled_dot_product_attention"};
}

std::vector<std::string> load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read vocabulary file " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

std::size_t count_operators(std::string_view source, const std::vector<std::string>& vocabulary) {
  std::unordered_set<std::string> idents;
  auto is_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_body = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  for (std::size_t i = 0; i < source.size();) {
    if (is_start(source[i]) && (i == 0 || !is_body(source[i - 1]))) {
      std::size_t j = i;
      while (j < source.size() && is_body(source[j])) ++j;
      idents.emplace(source.substr(i, j - i));
      i = j;
    } else {
      ++i;
    }
  }
  std::set<std::string> matched;
  for (const auto& v : vocabulary)
    if (idents.count(v)) matched.insert(v);
  return matched.size();
}

Difficulty bucket_difficulty(const TaskSpec& task, std::string_view reference_source,
                             const std::vector<std::string>& vocabulary) {
  if (task.difficulty_level) return *task.difficulty_level;
  const std::size_t n = count_operators(reference_source, vocabulary);
  if (n < 3) return Difficulty::easy;
  if (n <= 7) return Difficulty::medium;
  return Difficulty::hard;
}

CandidateCatalog catalog_of(const RunReport& report) {
  CandidateCatalog c;
  c[report.seed.candidate_id] = {report.seed_eval.score, report.seed.evolve_block};
  for (const auto& s : report.steps)
    if (s.child) c[s.child->candidate_id] = {s.child_eval->score, s.child->evolve_block};
  return c;
}

namespace {

// Shorter blocks match too easily by accident to count as a quotation.
constexpr std::size_t kMinQuotedBlock = 16;

}  // namespace

LeakageAudit audit_leakage(std::vector<TrainingSample> samples, const CandidateCatalog& catalog) {
  LeakageAudit audit;
  for (auto& s : samples) {
    std::optional<LeakageFinding> finding;
    const auto parent = catalog.find(s.parent_id);
    const std::string* parent_block = parent == catalog.end() ? nullptr : &parent->second.evolve_block;
    for (const auto& id : s.context_ids) {
      if (id == s.parent_id) continue;
      const auto it = catalog.find(id);
      if (it != catalog.end() && it->second.score > s.target_score) {
        finding = LeakageFinding{s.sample_id, id, it->second.score, s.target_score};
        break;
      }
    }
    if (!finding) {
      for (const auto& [id, entry] : catalog) {
        if (id == s.parent_id || id == s.candidate_id || !(entry.score > s.target_score)) continue;
        if (entry.evolve_block.size() < kMinQuotedBlock) continue;
        if (parent_block && *parent_block == entry.evolve_block) continue;
        if (s.input_context.user_text.find(entry.evolve_block) != std::string::npos) {
          finding = LeakageFinding{s.sample_id, id, entry.score, s.target_score};
          break;
        }
      }
    }
    if (finding)
      audit.dropped.push_back(*finding);
    else
      audit.kept.push_back(std::move(s));
  }
  return audit;
}

Shard balanced_sample(const std::vector<TrainingSample>& samples, std::size_t per_bucket_quota,
                      std::uint64_t seed) {
  Shard shard;
  shard.quota = per_bucket_quota;
  shard.seed = seed;
  std::map<std::string, std::vector<const TrainingSample*>> buckets;
  for (auto k : {SampleKind::correctness_sft, SampleKind::performance_sft, SampleKind::best_step_rl})
    for (auto d : {Difficulty::easy, Difficulty::medium, Difficulty::hard})
      buckets[std::string(to_string(k)) + "/" + std::string(to_string(d))];
  for (const auto& s : samples)
    buckets[std::string(to_string(s.kind)) + "/" + std::string(to_string(s.difficulty))].push_back(&s);

  Rng rng(seed);
  for (auto& [key, members] : buckets) {
    std::sort(members.begin(), members.end(), [](const TrainingSample* a, const TrainingSample* b) {
      return a->sample_id < b->sample_id;
    });
    rng.shuffle(members);
    const std::size_t take = std::min(per_bucket_quota, members.size());
    shard.buckets[key] = {members.size(), take};
    for (std::size_t i = 0; i < take; ++i) shard.samples.push_back(*members[i]);
  }
  return shard;
}

nlohmann::json write_shard(const Shard& shard, const std::string& dir,
                           const std::vector<LeakageFinding>& dropped) {
  std::string lines;
  for (const auto& s : shard.samples) lines += nlohmann::json(s).dump() + "\n";
  write_text_file((fs::path(dir) / "samples.jsonl").string(), lines);

  nlohmann::json buckets = nlohmann::json::object();
  for (const auto& [key, c] : shard.buckets)
    buckets[key] = {{"available", c.available}, {"selected", c.selected}};
  nlohmann::json leaks = nlohmann::json::array();
  for (const auto& f : dropped)
    leaks.push_back({{"sample_id", f.sample_id},
                     {"leaked_candidate_id", f.leaked_candidate_id},
                     {"leaked_score", f.leaked_score},
                     {"target_score", f.target_score}});
  nlohmann::json manifest{{"schema_version", kShardSchemaVersion},
                          {"seed", shard.seed},
                          {"per_bucket_quota", shard.quota},
                          {"sample_count", shard.samples.size()},
                          {"buckets", buckets},
                          {"files", {{"samples.jsonl", {{"sha256", sha256_hex(lines)}}}}},
                          {"leakage_dropped", leaks}};
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace kevolve
