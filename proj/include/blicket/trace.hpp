#pragma once
// Canonical episode-trace schema, serialization, and run persistence. Every
// downstream metric is computable from an EpisodeTrace alone.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "blicket/behavior.hpp"
#include "blicket/context_graph.hpp"
#include "blicket/env.hpp"

namespace blicket {

inline constexpr const char* kTraceSchemaVersion = "1.0";

enum class Tier { base, cg, cg_db };
enum class EvaluatorKind { heuristic, external };

const char* to_string(Tier t);
const char* to_string(EvaluatorKind k);
Tier tier_from_string(const std::string& s);
EvaluatorKind evaluator_kind_from_string(const std::string& s);

struct ScaffoldingSummary {
    Tier tier = Tier::base;
    EvaluatorKind evaluator = EvaluatorKind::heuristic;
    bool operator==(const ScaffoldingSummary&) const = default;
};

struct ParsedSummary {
    bool parse_ok = false;
    std::optional<std::string> transition_request;
    std::string action_text;  // canonical, e.g. "place A", "check", "noop"
    bool operator==(const ParsedSummary&) const = default;
};

struct TransitionOutcome {
    std::string target;
    bool accepted = false;
    std::string reason;
    bool operator==(const TransitionOutcome&) const = default;
};

struct StepRecord {
    int step_index = 0;               // 1-based, strictly increasing
    std::string prompt_digest;        // fnv1a-64 hex of the assembled prompt
    std::optional<std::string> prompt_text;  // flag-controlled sidecar
    ParsedSummary parsed;
    std::optional<std::string> cg_state;  // present iff tier >= cg
    std::optional<TransitionOutcome> transition;
    Action action;
    Observation observation;
    std::vector<std::string> notifications_delivered;
    std::vector<TriggerEvaluation> monitor_evaluations;
    bool operator==(const StepRecord&) const = default;
};

struct Firing {
    BehaviorId behavior_id = BehaviorId::exploration_stagnation;
    int step = 0;
    double score = 0.0;
    bool operator==(const Firing&) const = default;
};

struct EpisodeTrace {
    std::string schema_version = kTraceSchemaVersion;
    EpisodeConfig config;
    ScaffoldingSummary scaffolding;
    std::vector<StepRecord> steps;
    std::vector<Firing> firings;
    std::vector<ModificationRecord> modification_log;
    std::optional<Answer> final_answer;
    std::optional<Verdict> verdict;
    int activation_count_final = 0;
    bool switched = false;
    bool aborted = false;
    std::optional<std::string> abort_reason;
    bool operator==(const EpisodeTrace&) const = default;
};

class SchemaError : public std::runtime_error {
public:
    SchemaError(const std::string& path, const std::string& what)
        : std::runtime_error("schema-violation at \"" + path + "\": " + what), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

nlohmann::json serialize(const EpisodeTrace& trace);
// strict mode rejects unknown fields; invariant violations are reported as
// schema errors with the offending field path
EpisodeTrace deserialize(const nlohmann::json& j, bool strict = false);

std::string trace_to_string(const EpisodeTrace& trace);
EpisodeTrace trace_from_string(const std::string& text, bool strict = false);

struct ManifestEpisode {
    int index = 0;
    std::string file;
    std::uint64_t seed = 0;
    Condition condition = Condition::conjunctive;
    Tier tier = Tier::base;
    bool aborted = false;
    bool operator==(const ManifestEpisode&) const = default;
};

struct RunManifest {
    std::string schema_version = kTraceSchemaVersion;
    std::string run_id;
    std::uint64_t base_seed = 0;
    std::string policy;
    EvaluatorKind evaluator = EvaluatorKind::heuristic;
    std::vector<ManifestEpisode> episodes;
    bool operator==(const RunManifest&) const = default;
};

class RunStoreError : public std::runtime_error {
public:
    explicit RunStoreError(const std::string& what) : std::runtime_error(what) {}
};

std::string episode_file_name(int index);

// One file per episode plus manifest.json. No wall-clock anywhere: two runs
// of the same plan produce byte-identical directories.
void store_run(const std::filesystem::path& dir, const std::vector<EpisodeTrace>& traces,
               const RunManifest& manifest);
RunManifest load_manifest(const std::filesystem::path& dir);
// Reproduces the trace list in manifest order; missing-file and
// manifest-mismatch are distinct errors.
std::vector<EpisodeTrace> load_run(const std::filesystem::path& dir, bool strict = false,
                                   RunManifest* manifest_out = nullptr);

}  // namespace blicket
