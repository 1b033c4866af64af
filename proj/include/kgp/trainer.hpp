#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kgp/graph.hpp"
#include "kgp/model.hpp"
#include "kgp/rng.hpp"

namespace kgp {

enum class Strategy { NegSamp, OneVsAll, KvsAll };
enum class LossKind { BCE, CrossEntropy, MarginRank };
enum class OptimizerKind { Adam, SGD };
enum class RegKind { None, L2, N3 };

std::string to_string(Strategy s);
std::string to_string(LossKind l);
Strategy strategy_from_string(const std::string& name);
LossKind loss_from_string(const std::string& name);
OptimizerKind optimizer_from_string(const std::string& name);
RegKind regularizer_from_string(const std::string& name);

struct ModelSpec {
    ModelKind kind = ModelKind::DistMult;
    int k = 200;
    int transe_norm = 2;
};

struct TrainConfig {
    Strategy strategy = Strategy::KvsAll;
    int n_neg = 2;  // NegSamp corruptions per side
    LossKind loss = LossKind::BCE;
    double margin = 9.0;
    // The standard hinge is max(0, margin - f_pos + f_neg). The flipped sign
    // max(0, margin + f_pos - f_neg) is exposed for comparison.
    bool margin_paper_sign = false;

    OptimizerKind optimizer = OptimizerKind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    int epochs = 100;
    int batch_size = 128;

    RegKind regularizer = RegKind::None;
    double reg_weight = 0.0;
    double label_smoothing = 0.0;  // applied to KvsAll/BCE targets

    uint64_t seed = 0;

    void validate() const;  // pairing rules between strategy and loss
};

struct TrainResult {
    EmbeddingModel model;
    std::vector<double> loss_trace;  // per-epoch mean loss
};

// Deterministic given cfg.seed (initialization, shuffling and sampling all
// derive from it). Throws on divergence (non-finite loss) naming the epoch.
TrainResult train(const KnowledgeGraph& kg, const ModelSpec& spec, const TrainConfig& cfg);

// --- Loss primitives (value + gradient w.r.t. scores) ---

struct LossGrad {
    double value = 0.0;
    std::vector<double> dscores;
};

// Mean binary cross entropy over (score, label) pairs; scores are logits.
LossGrad bce_loss(std::span<const double> scores, std::span<const double> labels);

// Cross entropy of softmax(scores) against labels normalized to sum to 1.
LossGrad ce_loss(std::span<const double> scores, std::span<const double> labels);

struct MarginLossGrad {
    double value = 0.0;
    double dpos = 0.0;
    std::vector<double> dnegs;
};

// Mean pairwise hinge over (pos, neg) pairs.
MarginLossGrad margin_rank_loss(double pos_score, std::span<const double> neg_scores, double margin,
                                bool paper_sign = false);

// --- Negative generation (exposed for tests and external callers) ---

// NegSamp corruptions for one positive: n subject-side then n object-side
// replacements, uniform over entities with no false-negative filtering.
std::vector<Triple> negsamp_corruptions(const KnowledgeGraph& kg, const Triple& t, int n_per_side,
                                        Rng& rng);

// KvsAll label vector over all entities for an (entity, relation) key.
// mode_object: key is (s, r) and labels mark observed objects; otherwise the
// key is (o, r) and labels mark observed subjects.
std::vector<double> kvsall_labels(const KnowledgeGraph& kg, int32_t key_entity, int32_t relation,
                                  bool mode_object);

void write_loss_trace(const std::vector<double>& trace, const std::filesystem::path& path);

}  // namespace kgp
