#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgp/graph.hpp"
#include "kgp/model.hpp"

namespace kgp {

enum class AttributionMethod { Dot, L2, Cos, GD, GL, GC, IF };

std::string to_string(AttributionMethod m);
AttributionMethod attribution_method_from_string(const std::string& name);
bool is_gradient_method(AttributionMethod m);

// Per-triple loss whose gradient g(t, θ) feeds the gradient-similarity and
// influence-function scores. BCE treats the triple as a positive under binary
// cross entropy (gradient touches three rows). CE uses the 1vsAll per-triple
// cross entropy over both sides (gradient touches all entity rows).
enum class TripleLossKind { BCE, CE };

struct GradConfig {
    TripleLossKind loss = TripleLossKind::BCE;
};

// Gradient of a per-triple loss in parameter space, stored as sparse rows.
// Row ids index entities first, then relations.
struct SparseGrad {
    std::vector<std::pair<size_t, std::vector<double>>> rows;  // sorted by row id

    double dot(const SparseGrad& other) const;
    double squared_norm() const;
    double norm() const;
};

// Dense parameter-space vector (same layout as SparseGrad row ids).
struct ParamVec {
    size_t n_rows = 0;
    size_t dim = 0;
    std::vector<double> data;

    ParamVec() = default;
    ParamVec(size_t rows, size_t d) : n_rows(rows), dim(d), data(rows * d, 0.0) {}

    void add(const SparseGrad& g, double scale = 1.0);
    double dot(const SparseGrad& g) const;
    double norm() const;
};

SparseGrad triple_loss_grad(const EmbeddingModel& model, const Triple& t, const GradConfig& cfg);

// Hessian-vector product of the per-triple loss at the current parameters.
SparseGrad triple_loss_hvp(const EmbeddingModel& model, const Triple& t, const GradConfig& cfg,
                           const ParamVec& v);

struct LissaConfig {
    double damping = 0.01;
    double scale = 25.0;
    size_t depth = 0;  // 0 → min(|train|, 5000)
    int repeats = 1;
    uint64_t sample_seed = 0;
    size_t check_every = 50;
    double divergence_factor = 1e8;
};

// Stochastic estimate of (H + damping·I)^{-1} v where H is the mean per-triple
// loss Hessian over the train set. Throws with guidance to raise damping/scale
// when the iterate norm blows up.
ParamVec lissa_inverse_hvp(const EmbeddingModel& model, const KnowledgeGraph& kg,
                           const GradConfig& grad_cfg, const LissaConfig& cfg,
                           const SparseGrad& v);

struct InfluenceScore {
    Triple target;
    Triple candidate;
    AttributionMethod method = AttributionMethod::Dot;
    double value = 0.0;
};

// One score per neighbourhood triple, sorted descending (ties broken by
// candidate (s, r, o) order). For IF the inverse HVP of the target gradient is
// computed once and dotted with each candidate gradient.
std::vector<InfluenceScore> influence_scores(AttributionMethod method, const EmbeddingModel& model,
                                             const Triple& target, const Neighbourhood& neighbourhood,
                                             const GradConfig& grad_cfg = {},
                                             const LissaConfig& lissa_cfg = {},
                                             const KnowledgeGraph* kg = nullptr);

// IF candidate scores given a precomputed parameter-space vector (used by
// influence_scores and directly testable against GD with v = g(target)).
std::vector<InfluenceScore> influence_scores_from_vec(const EmbeddingModel& model,
                                                      const Triple& target,
                                                      const Neighbourhood& neighbourhood,
                                                      const GradConfig& grad_cfg,
                                                      const ParamVec& v);

// The top-scored neighbourhood triple; errors when the neighbourhood is empty.
Triple select_deletion(AttributionMethod method, const EmbeddingModel& model,
                       const KnowledgeGraph& kg, const Triple& target,
                       const GradConfig& grad_cfg = {}, const LissaConfig& lissa_cfg = {});

// Adversarial additions: copy each of the top-`budget` influential triples and
// replace its non-shared entity with the most dissimilar entity (cosine
// distance for multiplicative models, Euclidean for additive ones), skipping
// replacements that recreate a train triple or the target itself.
std::vector<Triple> select_additions(AttributionMethod method, const EmbeddingModel& model,
                                     const KnowledgeGraph& kg, const Triple& target, size_t budget,
                                     const GradConfig& grad_cfg = {},
                                     const LissaConfig& lissa_cfg = {});

Triple select_addition(AttributionMethod method, const EmbeddingModel& model,
                       const KnowledgeGraph& kg, const Triple& target,
                       const GradConfig& grad_cfg = {}, const LissaConfig& lissa_cfg = {});

// Most dissimilar replacement for `influential` given the target; exposed for
// the linear-scan oracle test.
Triple dissimilar_replacement(const EmbeddingModel& model, const KnowledgeGraph& kg,
                              const Triple& target, const Triple& influential);

}  // namespace kgp
