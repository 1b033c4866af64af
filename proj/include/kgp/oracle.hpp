#pragma once

#include <filesystem>
#include <vector>

#include "kgp/eval.hpp"
#include "kgp/graph.hpp"
#include "kgp/trainer.hpp"

namespace kgp {

struct LooResult {
    Triple candidate;
    // original minus retrained score: positive when the removal damaged the
    // target's prediction.
    double delta_score = 0.0;
    // retrained minus original mean filtered rank over both sides: positive
    // when the rank got worse.
    double delta_rank = 0.0;
    double seconds = 0.0;
};

// Ground truth by re-training from the same seed on train \ {candidate}.
LooResult loo_oracle(const KnowledgeGraph& kg, const ModelSpec& spec, const TrainConfig& cfg,
                     const Triple& target, const Triple& candidate,
                     const EmbeddingModel* original = nullptr);

struct AdditionOracleEntry {
    Triple candidate;
    double delta_score = 0.0;  // original minus retrained target score
    double delta_rank = 0.0;   // retrained minus original mean rank (positive = degraded)
    double seconds = 0.0;
};

// Retrains once per candidate addition (pool capped at 500) and ranks the
// candidates by achieved target-rank degradation, best first. Candidates
// already in train are reported with delta 0 without retraining.
std::vector<AdditionOracleEntry> brute_force_addition_oracle(const KnowledgeGraph& kg,
                                                             const ModelSpec& spec,
                                                             const TrainConfig& cfg,
                                                             const Triple& target,
                                                             const std::vector<Triple>& pool);

void write_oracle_csv(const std::vector<AdditionOracleEntry>& entries, const KnowledgeGraph& kg,
                      const std::filesystem::path& path);

}  // namespace kgp
