#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kgp/graph.hpp"

namespace kgp {

enum class ModelKind { DistMult, ComplEx, TransE };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// Multiplicative (DistMult, ComplEx) vs additive (TransE) interaction family.
bool is_multiplicative(ModelKind kind);

struct TripleGrad {
    // Partial derivatives of the score w.r.t. the subject, relation and object
    // embedding rows; each has length EmbeddingModel::dim().
    std::vector<double> s, r, o;
};

struct EmbeddingModel {
    ModelKind kind = ModelKind::DistMult;
    int k = 0;      // embedding dimension as exposed to the user
    int p = 2;      // norm order for TransE (1 or 2); ignored otherwise
    size_t n_entities = 0;
    size_t n_relations = 0;
    std::vector<double> E;  // n_entities x dim(), row-major
    std::vector<double> R;  // n_relations x dim(), row-major

    // Storage width per row: 2k for ComplEx (real parts then imaginary parts), k otherwise.
    int dim() const { return kind == ModelKind::ComplEx ? 2 * k : k; }

    std::span<const double> entity(size_t i) const {
        return {E.data() + i * static_cast<size_t>(dim()), static_cast<size_t>(dim())};
    }
    std::span<double> entity(size_t i) {
        return {E.data() + i * static_cast<size_t>(dim()), static_cast<size_t>(dim())};
    }
    std::span<const double> relation(size_t i) const {
        return {R.data() + i * static_cast<size_t>(dim()), static_cast<size_t>(dim())};
    }
    std::span<double> relation(size_t i) {
        return {R.data() + i * static_cast<size_t>(dim()), static_cast<size_t>(dim())};
    }

    double score(const Triple& t) const;

    // Per-dimension contributions before reduction (length k).
    // DistMult: s∘r∘o; ComplEx: Re(s∘r∘conj(o)); TransE: -(s+r-o).
    std::vector<double> feature_vector(const Triple& t) const;

    // Exact partials of score w.r.t. the three embedding rows. At the TransE
    // p=2 singular point s+r-o = 0 the gradient is defined as zero.
    TripleGrad grad_score(const Triple& t) const;

    // Scores of (s, r, e) for every entity e, written into out (size n_entities).
    void score_all_objects(int32_t s, int32_t r, std::span<double> out) const;
    // Scores of (e, r, o) for every entity e.
    void score_all_subjects(int32_t r, int32_t o, std::span<double> out) const;

    void check_range(const Triple& t) const;
};

// Entries i.i.d. uniform on (-6/sqrt(dim), 6/sqrt(dim)), fully determined by seed.
EmbeddingModel init_model(ModelKind kind, int k, size_t n_entities, size_t n_relations,
                          uint64_t seed, int transe_norm = 2);

// Binary checkpoint with a version tag; round-trips exactly.
void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path,
                     uint64_t dataset_hash);

struct Checkpoint {
    EmbeddingModel model;
    uint64_t dataset_hash = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kgp
