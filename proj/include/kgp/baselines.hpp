#pragma once

#include <cstdint>
#include <vector>

#include "kgp/graph.hpp"
#include "kgp/model.hpp"

namespace kgp {

enum class EditMode { Neighbourhood, Global };
enum class EditOp { Del, Add };

// Uniform random edits; additions are sampled from E×R×E excluding train and
// never duplicated within one call. Deterministic per seed.
std::vector<Edit> random_edit(const KnowledgeGraph& kg, const Triple& target, EditMode mode,
                              EditOp op, size_t count, uint64_t seed);

struct DirectConfig {
    double epsilon = 1.0;
    bool normalize_gradient = true;  // step along -ε·ĝ (raw gradient when false)
    double downsample_pct = 5.0;     // candidate fraction for additions
};

// Score-difference deletion: perturb the embeddings of the target's entities
// against the target score, then pick the neighbourhood triple whose score
// drops the most under the perturbation. Ties break lexicographically.
Triple direct_del(const EmbeddingModel& model, const KnowledgeGraph& kg, const Triple& target,
                  const DirectConfig& cfg = {});

// Addition variant: candidates are down-sampled triples touching a target
// entity on either side; existing train triples are excluded.
Triple direct_add(const EmbeddingModel& model, const KnowledgeGraph& kg, const Triple& target,
                  const DirectConfig& cfg, uint64_t seed);

// Exposed for the exhaustive re-scoring oracle in tests: the score drop of a
// candidate when the target's entity embeddings are perturbed.
double direct_score_drop(const EmbeddingModel& model, const Triple& target, const Triple& candidate,
                         const DirectConfig& cfg);

}  // namespace kgp
