#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgp/eval.hpp"
#include "kgp/graph.hpp"
#include "kgp/model.hpp"

namespace kgp {

enum class Pattern { Symmetry, Inversion, Composition };
enum class DecoyHeuristic { SoftTruth, KgeRank, CosDistance };

std::string to_string(Pattern p);
std::string to_string(DecoyHeuristic h);
Pattern pattern_from_string(const std::string& name);
DecoyHeuristic decoy_heuristic_from_string(const std::string& name);

// Sigmoid of the model score: the soft truth value of a single atom.
double soft_truth(const EmbeddingModel& model, const Triple& t);

struct Grounding {
    Pattern pattern = Pattern::Symmetry;
    Triple head;
    std::vector<Triple> body;  // 1 atom (symmetry/inversion) or 2 (composition)
    double soft_truth = 0.0;
};

// Product t-norm score of an implication: 1 - φ(body)·(1 - φ(head)), with
// φ(body) the product over body atoms. Stores the value in the grounding.
double grounding_score(const EmbeddingModel& model, Grounding& g);

// t-norm connectives over soft truth values.
double tnorm_and(double a, double b);
double tnorm_or(double a, double b);
double tnorm_not(double a);

// Relation-algebra residuals. Multiplicative models fit e_ri ∘ e_r ≈ 1 (for
// ComplEx the real part of the Hermitian product, conjugation on r_i);
// additive models fit e_ri + e_r ≈ 0. Lower is better.
double inverse_residual(const EmbeddingModel& model, int32_t r_i, int32_t r);

// All relations != r ranked by ascending residual.
std::vector<std::pair<int32_t, double>> inverse_relation_candidates(const EmbeddingModel& model,
                                                                    int32_t r);
int32_t find_inverse_relation(const EmbeddingModel& model, int32_t r);

// Euclidean distance between the composed embedding of (r1, r2) and e_r;
// composition is the Hadamard product for multiplicative models and the sum
// for additive ones.
double composition_residual(const EmbeddingModel& model, int32_t r1, int32_t r2, int32_t r);

// Argmin over all |R|² ordered pairs.
std::pair<int32_t, int32_t> find_composition_pair(const EmbeddingModel& model, int32_t r);

// --- K-means over entity embeddings ---

struct Clustering {
    int k = 0;
    std::vector<int> assignment;          // entity -> cluster
    std::vector<std::vector<double>> centroids;
    double wcss = 0.0;                    // within-cluster sum of squares
};

// Lloyd iterations to an assignment fixpoint (cap 100); empty clusters are
// reseeded from the farthest point.
Clustering kmeans_entities(const EmbeddingModel& model, int k, uint64_t seed);

std::vector<int> default_elbow_grid();

// Grid point with the maximum second difference of WCSS over the grid
// (restricted to k <= |E|).
int elbow_k(const EmbeddingModel& model, const std::vector<int>& grid, uint64_t seed);

struct ClusterConfig {
    int k = 0;  // 0 → choose via elbow_k on the grid
    std::vector<int> grid = default_elbow_grid();
    uint64_t seed = 0;
};

struct DecoyChoice {
    Triple target;
    Side side = Side::Object;
    Triple decoy;
    DecoyHeuristic heuristic = DecoyHeuristic::SoftTruth;
    double score = 0.0;  // heuristic-specific: grounding score, rank, or distance
};

// Shared per-model caches (step-1 relation algebra, clustering) reused across
// targets; computed lazily and read-only afterwards.
class InferenceContext {
public:
    explicit InferenceContext(const EmbeddingModel& model, ClusterConfig cluster_cfg = {})
        : model_(&model), cluster_cfg_(std::move(cluster_cfg)) {}

    int32_t inverse_of(int32_t r);
    std::pair<int32_t, int32_t> composition_of(int32_t r);
    const Clustering& clustering();

    const ClusterConfig& cluster_config() const { return cluster_cfg_; }

private:
    const EmbeddingModel* model_;
    ClusterConfig cluster_cfg_;
    std::vector<int32_t> inverse_cache_;
    std::vector<std::pair<int32_t, int32_t>> composition_cache_;
    bool have_clustering_ = false;
    Clustering clustering_;
};

DecoyChoice select_decoy(const EmbeddingModel& model, const KnowledgeGraph& kg, const Triple& target,
                         Side side, Pattern pattern, DecoyHeuristic heuristic,
                         InferenceContext& ctx);

// Composition step 3: the intermediate entity maximizing the grounding score
// with the decoy fixed. Skips entities whose two body triples both already
// exist in train, and any body atom equal to the decoy or the target.
int32_t select_adversarial_entity(const EmbeddingModel& model, const KnowledgeGraph& kg,
                                  const DecoyChoice& decoy, int32_t r1, int32_t r2);

struct InferenceAttackResult {
    std::vector<Triple> additions;        // deduplicated, order: object side then subject side
    std::vector<size_t> addition_decoy;   // per addition: index into decoys
    std::vector<DecoyChoice> decoys;      // one per side
    std::vector<double> grounding_scores; // matching decoys
};

// Full per-target attack; candidates already in train, the decoy itself and
// the target fact are never emitted.
InferenceAttackResult inference_attack(const EmbeddingModel& model, const KnowledgeGraph& kg,
                                       const Triple& target, Pattern pattern,
                                       DecoyHeuristic heuristic, InferenceContext& ctx);

}  // namespace kgp
