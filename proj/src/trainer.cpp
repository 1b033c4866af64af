#include "kgp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "kgp/error.hpp"
#include "grad_accum.hpp"

namespace kgp {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::NegSamp: return "negsamp";
        case Strategy::OneVsAll: return "1vsall";
        case Strategy::KvsAll: return "kvsall";
    }
    return "?";
}

std::string to_string(LossKind l) {
    switch (l) {
        case LossKind::BCE: return "bce";
        case LossKind::CrossEntropy: return "ce";
        case LossKind::MarginRank: return "margin";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& name) {
    if (name == "negsamp") return Strategy::NegSamp;
    if (name == "1vsall" || name == "onevsall") return Strategy::OneVsAll;
    if (name == "kvsall") return Strategy::KvsAll;
    fail("unknown training strategy '", name, "'");
}

LossKind loss_from_string(const std::string& name) {
    if (name == "bce") return LossKind::BCE;
    if (name == "ce" || name == "cross_entropy") return LossKind::CrossEntropy;
    if (name == "margin" || name == "margin_rank") return LossKind::MarginRank;
    fail("unknown loss '", name, "'");
}

OptimizerKind optimizer_from_string(const std::string& name) {
    if (name == "adam") return OptimizerKind::Adam;
    if (name == "sgd") return OptimizerKind::SGD;
    fail("unknown optimizer '", name, "'");
}

RegKind regularizer_from_string(const std::string& name) {
    if (name == "none") return RegKind::None;
    if (name == "l2") return RegKind::L2;
    if (name == "n3") return RegKind::N3;
    fail("unknown regularizer '", name, "'");
}

void TrainConfig::validate() const {
    require(epochs >= 0 && batch_size >= 1, "invalid epochs/batch_size");
    require(label_smoothing >= 0.0 && label_smoothing < 1.0, "label_smoothing must be in [0,1)");
    require(n_neg >= 1 || strategy != Strategy::NegSamp, "NegSamp needs n_neg >= 1");
    if (loss == LossKind::MarginRank)
        require(strategy == Strategy::NegSamp, "MarginRank loss is only valid with NegSamp");
    if (loss == LossKind::CrossEntropy)
        require(strategy != Strategy::KvsAll, "CrossEntropy loss pairs with NegSamp or 1vsAll");
}

// --- Loss primitives ---

namespace {

void require_finite(std::span<const double> scores) {
    for (double s : scores)
        require(std::isfinite(s), "non-finite score in loss computation");
}

// softplus(x) = log(1 + e^x), computed stably.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

LossGrad bce_loss(std::span<const double> scores, std::span<const double> labels) {
    require(scores.size() == labels.size() && !scores.empty(), "bce: shape mismatch");
    require_finite(scores);
    LossGrad out;
    out.dscores.resize(scores.size());
    const double inv_n = 1.0 / static_cast<double>(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        const double f = scores[i], y = labels[i];
        // -(y log σ(f) + (1-y) log(1-σ(f))) = softplus(f) - y f
        out.value += (softplus(f) - y * f) * inv_n;
        out.dscores[i] = (sigmoid(f) - y) * inv_n;
    }
    return out;
}

LossGrad ce_loss(std::span<const double> scores, std::span<const double> labels) {
    require(scores.size() == labels.size() && !scores.empty(), "ce: shape mismatch");
    require_finite(scores);
    double label_sum = 0.0;
    for (double y : labels) label_sum += y;
    require(label_sum > 0.0, "ce: labels sum to zero");

    const double max_score = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double f : scores) z += std::exp(f - max_score);
    const double log_z = std::log(z) + max_score;

    LossGrad out;
    out.dscores.resize(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        const double y = labels[i] / label_sum;
        const double log_p = scores[i] - log_z;
        out.value -= y * log_p;
        out.dscores[i] = std::exp(log_p) - y;
    }
    return out;
}

MarginLossGrad margin_rank_loss(double pos_score, std::span<const double> neg_scores, double margin,
                                bool paper_sign) {
    require(std::isfinite(pos_score), "non-finite positive score");
    require_finite(neg_scores);
    require(!neg_scores.empty(), "margin loss needs at least one negative");
    MarginLossGrad out;
    out.dnegs.resize(neg_scores.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(neg_scores.size());
    for (size_t i = 0; i < neg_scores.size(); ++i) {
        const double delta = paper_sign ? pos_score - neg_scores[i] : neg_scores[i] - pos_score;
        const double hinge = margin + delta;
        if (hinge > 0.0) {
            out.value += hinge * inv_n;
            const double sign = paper_sign ? 1.0 : -1.0;
            out.dpos += sign * inv_n;
            out.dnegs[i] = -sign * inv_n;
        }
    }
    return out;
}

// --- Negatives ---

std::vector<Triple> negsamp_corruptions(const KnowledgeGraph& kg, const Triple& t, int n_per_side,
                                        Rng& rng) {
    require(n_per_side >= 1, "n_per_side must be >= 1");
    std::vector<Triple> negs;
    negs.reserve(static_cast<size_t>(2 * n_per_side));
    const auto n_entities = static_cast<uint64_t>(kg.num_entities());
    for (int i = 0; i < n_per_side; ++i)
        negs.push_back({static_cast<int32_t>(rng.below(n_entities)), t.r, t.o});
    for (int i = 0; i < n_per_side; ++i)
        negs.push_back({t.s, t.r, static_cast<int32_t>(rng.below(n_entities))});
    return negs;
}

std::vector<double> kvsall_labels(const KnowledgeGraph& kg, int32_t key_entity, int32_t relation,
                                  bool mode_object) {
    std::vector<double> labels(kg.num_entities(), 0.0);
    const auto& idx = mode_object ? kg.by_subject(key_entity) : kg.by_object(key_entity);
    for (uint32_t i : idx) {
        const Triple& t = kg.train()[i];
        if (t.r != relation) continue;
        labels[static_cast<size_t>(mode_object ? t.o : t.s)] = 1.0;
    }
    return labels;
}

// --- Training internals ---

namespace {

using detail::GradBuffer;
using detail::Rows;
using detail::rows_of;
using detail::accumulate_triple;
using detail::accumulate_all_objects;
using detail::accumulate_all_subjects;

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, size_t n_params) : cfg_(cfg) {
        if (cfg.optimizer == OptimizerKind::Adam) {
            m_.assign(n_params, 0.0);
            v_.assign(n_params, 0.0);
        }
    }

    // Applies the accumulated batch gradient to the touched rows only (lazy
    // Adam semantics with a global step counter for bias correction).
    void step(GradBuffer& grads, EmbeddingModel& model, size_t n_entity_rows) {
        grads.sort_touched();
        ++step_count_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
        const size_t d = grads.dim_;
        for (size_t row : grads.touched_) {
            double* param = row < n_entity_rows ? model.E.data() + row * d
                                                : model.R.data() + (row - n_entity_rows) * d;
            const double* g = grads.data_.data() + row * d;
            if (cfg_.optimizer == OptimizerKind::SGD) {
                for (size_t i = 0; i < d; ++i) param[i] -= cfg_.lr * g[i];
            } else {
                double* m = m_.data() + row * d;
                double* v = v_.data() + row * d;
                for (size_t i = 0; i < d; ++i) {
                    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                    const double mhat = m[i] / bc1;
                    const double vhat = v[i] / bc2;
                    param[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
                }
            }
        }
    }

private:
    TrainConfig cfg_;
    std::vector<double> m_, v_;
    int64_t step_count_ = 0;
};

// N3 penalty on a parameter row; returns the penalty value and accumulates the gradient.
double n3_row(const EmbeddingModel& model, size_t row, size_t n_entities, double weight,
              GradBuffer& g) {
    const size_t d = static_cast<size_t>(model.dim());
    const double* param = row < n_entities ? model.E.data() + row * d
                                           : model.R.data() + (row - n_entities) * d;
    double* grad = g.row(row);
    double value = 0.0;
    for (size_t i = 0; i < d; ++i) {
        const double a = std::abs(param[i]);
        value += a * a * a;
        grad[i] += weight * 3.0 * a * a * (param[i] >= 0.0 ? 1.0 : -1.0);
    }
    return weight * value;
}

double apply_n3(const EmbeddingModel& model, const Triple& t, size_t n_entities, double weight,
                double inv_scale, GradBuffer& g) {
    if (weight == 0.0) return 0.0;
    const Rows rw = rows_of(t, n_entities);
    double v = 0.0;
    v += n3_row(model, rw.s, n_entities, weight * inv_scale, g);
    v += n3_row(model, rw.r, n_entities, weight * inv_scale, g);
    v += n3_row(model, rw.o, n_entities, weight * inv_scale, g);
    return v;
}

double apply_l2_all(const EmbeddingModel& model, double weight, GradBuffer& g, size_t n_entities) {
    if (weight == 0.0) return 0.0;
    const size_t d = static_cast<size_t>(model.dim());
    double value = 0.0;
    for (size_t row = 0; row < n_entities + model.n_relations; ++row) {
        const double* param = row < n_entities ? model.E.data() + row * d
                                               : model.R.data() + (row - n_entities) * d;
        double* grad = g.row(row);
        for (size_t i = 0; i < d; ++i) {
            value += param[i] * param[i];
            grad[i] += 2.0 * weight * param[i];
        }
    }
    return weight * value;
}

struct KvsKey {
    int32_t entity;
    int32_t relation;
    bool mode_object;
};

}  // namespace

TrainResult train(const KnowledgeGraph& kg, const ModelSpec& spec, const TrainConfig& cfg) {
    cfg.validate();
    require(!kg.train().empty(), "cannot train on an empty train set");

    TrainResult result;
    result.model = init_model(spec.kind, spec.k, kg.num_entities(), kg.num_relations(), cfg.seed,
                              spec.transe_norm);
    EmbeddingModel& model = result.model;
    const size_t n_entities = kg.num_entities();
    const size_t n_rows = n_entities + kg.num_relations();
    const size_t d = static_cast<size_t>(model.dim());

    GradBuffer grads(n_rows, d);
    Optimizer opt(cfg, n_rows * d);
    Rng rng(cfg.seed ^ 0x7261696e65724bull);

    // KvsAll keys, alternating (s,r) and (o,r) batches.
    std::vector<KvsKey> kvs_keys;
    if (cfg.strategy == Strategy::KvsAll) {
        std::map<std::pair<int32_t, int32_t>, char> sr, or_;
        for (const auto& t : kg.train()) {
            sr[{t.s, t.r}] = 1;
            or_[{t.o, t.r}] = 1;
        }
        std::vector<KvsKey> sr_keys, or_keys;
        for (const auto& [key, _] : sr) sr_keys.push_back({key.first, key.second, true});
        for (const auto& [key, _] : or_) or_keys.push_back({key.first, key.second, false});
        // Interleave so that every epoch alternates between the two modes.
        size_t i = 0, j = 0;
        while (i < sr_keys.size() || j < or_keys.size()) {
            if (i < sr_keys.size()) kvs_keys.push_back(sr_keys[i++]);
            if (j < or_keys.size()) kvs_keys.push_back(or_keys[j++]);
        }
    }

    std::vector<double> scores(n_entities), labels_buf;
    const double ls = cfg.label_smoothing;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        size_t epoch_examples = 0;

        auto run_batch = [&](auto&& body, size_t batch_examples) {
            grads.clear();
            double batch_loss = 0.0;
            try {
                batch_loss = body();
            } catch (const Error& e) {
                fail("training diverged at epoch ", epoch, ": ", e.what());
            }
            if (cfg.regularizer == RegKind::L2)
                batch_loss += apply_l2_all(model, cfg.reg_weight, grads, n_entities);
            if (!std::isfinite(batch_loss))
                fail("training diverged (non-finite loss) at epoch ", epoch);
            opt.step(grads, model, n_entities);
            epoch_loss += batch_loss * static_cast<double>(batch_examples);
            epoch_examples += batch_examples;
        };

        if (cfg.strategy == Strategy::KvsAll) {
            // Homogeneous batches that alternate between (s,r) and (o,r) mode.
            std::vector<size_t> sr_pos, or_pos;
            for (size_t i = 0; i < kvs_keys.size(); ++i)
                (kvs_keys[i].mode_object ? sr_pos : or_pos).push_back(i);
            rng.shuffle(sr_pos);
            rng.shuffle(or_pos);
            std::vector<std::pair<size_t, size_t>> batches;  // (offset, size) into a mode list
            std::vector<const std::vector<size_t>*> batch_src;
            {
                const size_t bs = static_cast<size_t>(cfg.batch_size);
                size_t a = 0, b = 0;
                while (a < sr_pos.size() || b < or_pos.size()) {
                    if (a < sr_pos.size()) {
                        const size_t take = std::min(bs, sr_pos.size() - a);
                        batches.emplace_back(a, take);
                        batch_src.push_back(&sr_pos);
                        a += take;
                    }
                    if (b < or_pos.size()) {
                        const size_t take = std::min(bs, or_pos.size() - b);
                        batches.emplace_back(b, take);
                        batch_src.push_back(&or_pos);
                        b += take;
                    }
                }
            }
            for (size_t bi = 0; bi < batches.size(); ++bi) {
                const auto& order = *batch_src[bi];
                const size_t begin = batches[bi].first;
                const size_t end = begin + batches[bi].second;
                run_batch(
                    [&]() {
                        double loss = 0.0;
                        size_t n_pos = 0;
                        const double inv_keys = 1.0 / static_cast<double>(end - begin);
                        for (size_t ii = begin; ii < end; ++ii) {
                            const KvsKey& key = kvs_keys[order[ii]];
                            labels_buf = kvsall_labels(kg, key.entity, key.relation, key.mode_object);
                            if (key.mode_object)
                                model.score_all_objects(key.entity, key.relation, scores);
                            else
                                model.score_all_subjects(key.relation, key.entity, scores);
                            std::vector<int32_t> positives;
                            for (size_t e = 0; e < n_entities; ++e)
                                if (labels_buf[e] > 0.0) positives.push_back(static_cast<int32_t>(e));
                            if (cfg.loss == LossKind::BCE && ls > 0.0) {
                                const double floor = ls / static_cast<double>(n_entities);
                                for (auto& y : labels_buf) y = y * (1.0 - ls) + floor;
                            }
                            LossGrad lg = cfg.loss == LossKind::BCE ? bce_loss(scores, labels_buf)
                                                                    : ce_loss(scores, labels_buf);
                            loss += lg.value * inv_keys;
                            for (auto& dv : lg.dscores) dv *= inv_keys;
                            if (key.mode_object)
                                accumulate_all_objects(model, key.entity, key.relation, lg.dscores,
                                                       grads, n_entities);
                            else
                                accumulate_all_subjects(model, key.relation, key.entity, lg.dscores,
                                                        grads, n_entities);
                            if (cfg.regularizer == RegKind::N3) {
                                for (int32_t e : positives) {
                                    const Triple t = key.mode_object
                                                         ? Triple{key.entity, key.relation, e}
                                                         : Triple{e, key.relation, key.entity};
                                    loss += apply_n3(model, t, n_entities, cfg.reg_weight, inv_keys,
                                                     grads);
                                }
                            }
                            n_pos += positives.size();
                        }
                        (void)n_pos;
                        return loss;
                    },
                    end - begin);
            }
        } else {
            std::vector<size_t> order(kg.train().size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
            for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
                const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
                run_batch(
                    [&]() {
                        double loss = 0.0;
                        const double inv_pos = 1.0 / static_cast<double>(end - begin);
                        for (size_t ii = begin; ii < end; ++ii) {
                            const Triple& t = kg.train()[order[ii]];
                            if (cfg.strategy == Strategy::OneVsAll) {
                                for (int side = 0; side < 2; ++side) {
                                    const bool object_side = side == 0;
                                    if (object_side)
                                        model.score_all_objects(t.s, t.r, scores);
                                    else
                                        model.score_all_subjects(t.r, t.o, scores);
                                    labels_buf.assign(n_entities, 0.0);
                                    labels_buf[static_cast<size_t>(object_side ? t.o : t.s)] = 1.0;
                                    LossGrad lg = cfg.loss == LossKind::BCE
                                                      ? bce_loss(scores, labels_buf)
                                                      : ce_loss(scores, labels_buf);
                                    loss += lg.value * 0.5 * inv_pos;
                                    for (auto& dv : lg.dscores) dv *= 0.5 * inv_pos;
                                    if (object_side)
                                        accumulate_all_objects(model, t.s, t.r, lg.dscores, grads,
                                                               n_entities);
                                    else
                                        accumulate_all_subjects(model, t.r, t.o, lg.dscores, grads,
                                                                n_entities);
                                }
                            } else {  // NegSamp
                                // Corruption draws are keyed by (seed, epoch, triple)
                                // so that removing one train triple does not
                                // reshuffle every other triple's negatives.
                                Rng neg_rng(cfg.seed ^
                                            (TripleHash{}(t) + 0x9e3779b97f4a7c15ull *
                                                                   static_cast<uint64_t>(epoch + 1)));
                                const auto negs = negsamp_corruptions(kg, t, cfg.n_neg, neg_rng);
                                const double pos_score = model.score(t);
                                std::vector<double> neg_scores(negs.size());
                                for (size_t i = 0; i < negs.size(); ++i)
                                    neg_scores[i] = model.score(negs[i]);
                                if (cfg.loss == LossKind::MarginRank) {
                                    MarginLossGrad mg = margin_rank_loss(pos_score, neg_scores,
                                                                         cfg.margin,
                                                                         cfg.margin_paper_sign);
                                    loss += mg.value * inv_pos;
                                    accumulate_triple(model, t, mg.dpos * inv_pos, grads, n_entities);
                                    for (size_t i = 0; i < negs.size(); ++i)
                                        if (mg.dnegs[i] != 0.0)
                                            accumulate_triple(model, negs[i], mg.dnegs[i] * inv_pos,
                                                              grads, n_entities);
                                } else if (cfg.loss == LossKind::BCE) {
                                    std::vector<double> all_scores;
                                    all_scores.push_back(pos_score);
                                    all_scores.insert(all_scores.end(), neg_scores.begin(),
                                                      neg_scores.end());
                                    std::vector<double> ys(all_scores.size(), 0.0);
                                    ys[0] = 1.0;
                                    LossGrad lg = bce_loss(all_scores, ys);
                                    loss += lg.value * inv_pos;
                                    accumulate_triple(model, t, lg.dscores[0] * inv_pos, grads,
                                                      n_entities);
                                    for (size_t i = 0; i < negs.size(); ++i)
                                        accumulate_triple(model, negs[i], lg.dscores[i + 1] * inv_pos,
                                                          grads, n_entities);
                                } else {  // CrossEntropy per side over {positive} ∪ corruptions
                                    const int n = cfg.n_neg;
                                    for (int side = 0; side < 2; ++side) {
                                        std::vector<double> cand{pos_score};
                                        for (int i = 0; i < n; ++i)
                                            cand.push_back(neg_scores[static_cast<size_t>(side * n + i)]);
                                        std::vector<double> ys(cand.size(), 0.0);
                                        ys[0] = 1.0;
                                        LossGrad lg = ce_loss(cand, ys);
                                        loss += lg.value * 0.5 * inv_pos;
                                        accumulate_triple(model, t, lg.dscores[0] * 0.5 * inv_pos,
                                                          grads, n_entities);
                                        for (int i = 0; i < n; ++i)
                                            accumulate_triple(
                                                model, negs[static_cast<size_t>(side * n + i)],
                                                lg.dscores[static_cast<size_t>(i + 1)] * 0.5 * inv_pos,
                                                grads, n_entities);
                                    }
                                }
                            }
                            if (cfg.regularizer == RegKind::N3)
                                loss += apply_n3(model, t, n_entities, cfg.reg_weight, inv_pos, grads);
                        }
                        return loss;
                    },
                    end - begin);
            }
        }

        result.loss_trace.push_back(epoch_examples > 0 ? epoch_loss / static_cast<double>(epoch_examples)
                                                       : 0.0);
    }
    return result;
}

void write_loss_trace(const std::vector<double>& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    out << "epoch,loss\n";
    for (size_t i = 0; i < trace.size(); ++i) out << i << ',' << trace[i] << '\n';
    require(out.good(), "write failed: ", path.string());
}

}  // namespace kgp
