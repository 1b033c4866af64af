#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "kgp/attribution.hpp"
#include "kgp/baselines.hpp"
#include "kgp/eval.hpp"
#include "kgp/inference.hpp"
#include "kgp/synthetic.hpp"
#include "kgp/trainer.hpp"

namespace kgp {

struct DatasetConfig {
    std::string path;  // directory with train/valid/test TSVs
    std::optional<SyntheticKgConfig> synthetic;
};

struct TargetConfig {
    double rank_threshold = 10.0;
    size_t cap = 0;  // 0 = no cap
    TargetSide side = TargetSide::Both;
    uint64_t seed = 0;
};

enum class AttackFamily { None, Attribution, Inference, Random, Direct };

std::string to_string(AttackFamily f);
AttackFamily attack_family_from_string(const std::string& name);

struct AttackConfig {
    AttackFamily family = AttackFamily::None;
    EditOp op = EditOp::Add;
    size_t budget = 1;  // edits per target (attribution additions, random edits)
    uint64_t seed = 0;

    // attribution
    AttributionMethod method = AttributionMethod::Cos;
    TripleLossKind grad_loss = TripleLossKind::BCE;
    LissaConfig lissa;

    // inference
    Pattern pattern = Pattern::Symmetry;
    DecoyHeuristic heuristic = DecoyHeuristic::SoftTruth;
    int clusters = 0;  // 0 = elbow

    // random
    EditMode mode = EditMode::Neighbourhood;

    // direct
    DirectConfig direct;
};

// Fully determines a run given the dataset bytes; serialized alongside outputs.
struct ExperimentConfig {
    uint64_t seed = 0;
    int workers = 1;
    std::string output = "run";

    DatasetConfig dataset;
    ModelSpec model;
    TrainConfig train;
    TargetConfig targets;
    AttackConfig attack;

    static ExperimentConfig from_file(const std::filesystem::path& path);
    static ExperimentConfig from_json_text(const std::string& text);

    std::string to_json_text() const;
    void save(const std::filesystem::path& path) const;
};

}  // namespace kgp
