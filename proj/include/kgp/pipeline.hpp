#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kgp/config.hpp"
#include "kgp/eval.hpp"
#include "kgp/graph.hpp"
#include "kgp/model.hpp"

namespace kgp {

KnowledgeGraph load_graph(const DatasetConfig& cfg);

struct ProvenanceRow {
    Triple target;
    std::string family;
    std::string method;    // attribution method / pattern+heuristic / baseline name
    Edit edit;
    std::string decoy;     // inference attacks only
    double score = 0.0;
    double elapsed_ms = 0.0;
};

struct AttackOutput {
    std::vector<Edit> edits;  // deduplicated across targets
    std::vector<ProvenanceRow> provenance;
    double selection_seconds = 0.0;  // excludes neighbourhood precomputation
};

// Runs the configured attack for every target against a trained model.
AttackOutput generate_edits(const ExperimentConfig& cfg, const EmbeddingModel& model,
                            const KnowledgeGraph& kg, const std::vector<Triple>& targets);

void write_provenance_csv(const std::vector<ProvenanceRow>& rows, const KnowledgeGraph& kg,
                          const std::filesystem::path& path);

struct RunReport {
    EvalReport original_targets;
    EvalReport poisoned_targets;
    DeltaMrr delta;
    std::vector<std::pair<std::string, double>> stage_seconds;
    size_t edits_emitted = 0;
    size_t edits_applied = 0;
    size_t edits_skipped = 0;
};

// train → evaluate → select targets → attack → perturb → retrain → report.
// Writes config snapshot, checkpoints, ranks/metrics files, edits TSV,
// provenance CSV and run_report.json under out_dir.
RunReport run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

void write_run_report(const RunReport& report, const std::filesystem::path& path);

}  // namespace kgp
