#include "kgp/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

#include "kgp/error.hpp"

namespace kgp {

using nlohmann::json;

std::string to_string(AttackFamily f) {
    switch (f) {
        case AttackFamily::None: return "none";
        case AttackFamily::Attribution: return "attribution";
        case AttackFamily::Inference: return "inference";
        case AttackFamily::Random: return "random";
        case AttackFamily::Direct: return "direct";
    }
    return "?";
}

AttackFamily attack_family_from_string(const std::string& name) {
    if (name == "none") return AttackFamily::None;
    if (name == "attribution") return AttackFamily::Attribution;
    if (name == "inference") return AttackFamily::Inference;
    if (name == "random") return AttackFamily::Random;
    if (name == "direct") return AttackFamily::Direct;
    fail("unknown attack family '", name, "'");
}

namespace {

void expect_keys(const json& obj, const std::string& section, std::set<std::string> allowed) {
    require(obj.is_object(), "config section '", section, "' must be an object");
    for (const auto& [key, _] : obj.items())
        require(allowed.count(key) > 0, "unknown config key '", section, ".", key, "'");
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    return it->get<T>();
}

SyntheticKgConfig parse_synthetic(const json& j, uint64_t default_seed) {
    expect_keys(j, "dataset.synthetic", {"entities", "relations", "noise", "blocks", "seed"});
    SyntheticKgConfig cfg;
    cfg.n_entities = get_or<size_t>(j, "entities", 60);
    cfg.noise = get_or<double>(j, "noise", 0.0);
    cfg.blocks = get_or<size_t>(j, "blocks", 4);
    cfg.seed = get_or<uint64_t>(j, "seed", default_seed);
    require(j.contains("relations") && j["relations"].is_array(),
            "dataset.synthetic.relations must be an array");
    for (const auto& r : j["relations"]) {
        expect_keys(r, "dataset.synthetic.relations[]", {"semantics", "density"});
        RelationSpec spec;
        spec.semantics = relation_semantics_from_string(r.at("semantics").get<std::string>());
        spec.density = get_or<double>(r, "density", 1.0);
        cfg.relations.push_back(spec);
    }
    return cfg;
}

TrainConfig parse_train(const json& j, uint64_t default_seed) {
    expect_keys(j, "train",
                {"strategy", "loss", "optimizer", "lr", "beta1", "beta2", "adam_eps", "epochs",
                 "batch_size", "regularizer", "reg_weight", "label_smoothing", "negatives",
                 "margin", "margin_paper_sign", "seed"});
    TrainConfig cfg;
    cfg.strategy = strategy_from_string(get_or<std::string>(j, "strategy", "kvsall"));
    cfg.loss = loss_from_string(get_or<std::string>(j, "loss", "bce"));
    cfg.optimizer = optimizer_from_string(get_or<std::string>(j, "optimizer", "adam"));
    cfg.lr = get_or<double>(j, "lr", 1e-3);
    cfg.beta1 = get_or<double>(j, "beta1", 0.9);
    cfg.beta2 = get_or<double>(j, "beta2", 0.999);
    cfg.adam_eps = get_or<double>(j, "adam_eps", 1e-8);
    cfg.epochs = get_or<int>(j, "epochs", 100);
    cfg.batch_size = get_or<int>(j, "batch_size", 128);
    cfg.regularizer = regularizer_from_string(get_or<std::string>(j, "regularizer", "none"));
    cfg.reg_weight = get_or<double>(j, "reg_weight", 0.0);
    if (j.contains("label_smoothing")) {
        const auto& ls = j["label_smoothing"];
        cfg.label_smoothing = ls.is_boolean() ? (ls.get<bool>() ? 0.1 : 0.0) : ls.get<double>();
    }
    cfg.n_neg = get_or<int>(j, "negatives", 2);
    cfg.margin = get_or<double>(j, "margin", 9.0);
    cfg.margin_paper_sign = get_or<bool>(j, "margin_paper_sign", false);
    cfg.seed = get_or<uint64_t>(j, "seed", default_seed);
    cfg.validate();
    return cfg;
}

AttackConfig parse_attack(const json& j, uint64_t default_seed) {
    expect_keys(j, "attack",
                {"family", "op", "budget", "seed", "method", "grad_loss", "lissa", "pattern",
                 "heuristic", "clusters", "mode", "epsilon", "normalize_gradient",
                 "downsample_pct"});
    AttackConfig cfg;
    cfg.family = attack_family_from_string(get_or<std::string>(j, "family", "none"));
    const std::string op = get_or<std::string>(j, "op", "add");
    require(op == "add" || op == "del", "attack.op must be 'add' or 'del'");
    cfg.op = op == "add" ? EditOp::Add : EditOp::Del;
    cfg.budget = get_or<size_t>(j, "budget", 1);
    cfg.seed = get_or<uint64_t>(j, "seed", default_seed);
    if (j.contains("method"))
        cfg.method = attribution_method_from_string(j["method"].get<std::string>());
    const std::string gl = get_or<std::string>(j, "grad_loss", "bce");
    require(gl == "bce" || gl == "ce", "attack.grad_loss must be 'bce' or 'ce'");
    cfg.grad_loss = gl == "bce" ? TripleLossKind::BCE : TripleLossKind::CE;
    if (j.contains("lissa")) {
        const auto& l = j["lissa"];
        expect_keys(l, "attack.lissa", {"damping", "scale", "depth", "repeats", "seed"});
        cfg.lissa.damping = get_or<double>(l, "damping", cfg.lissa.damping);
        cfg.lissa.scale = get_or<double>(l, "scale", cfg.lissa.scale);
        cfg.lissa.depth = get_or<size_t>(l, "depth", cfg.lissa.depth);
        cfg.lissa.repeats = get_or<int>(l, "repeats", cfg.lissa.repeats);
        cfg.lissa.sample_seed = get_or<uint64_t>(l, "seed", default_seed);
    } else {
        cfg.lissa.sample_seed = default_seed;
    }
    if (j.contains("pattern")) cfg.pattern = pattern_from_string(j["pattern"].get<std::string>());
    if (j.contains("heuristic"))
        cfg.heuristic = decoy_heuristic_from_string(j["heuristic"].get<std::string>());
    cfg.clusters = get_or<int>(j, "clusters", 0);
    const std::string mode = get_or<std::string>(j, "mode", "neighbourhood");
    require(mode == "neighbourhood" || mode == "global",
            "attack.mode must be 'neighbourhood' or 'global'");
    cfg.mode = mode == "neighbourhood" ? EditMode::Neighbourhood : EditMode::Global;
    cfg.direct.epsilon = get_or<double>(j, "epsilon", 1.0);
    cfg.direct.normalize_gradient = get_or<bool>(j, "normalize_gradient", true);
    cfg.direct.downsample_pct = get_or<double>(j, "downsample_pct", 5.0);
    return cfg;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail("config parse error: ", e.what());
    }
    expect_keys(j, "<root>",
                {"seed", "workers", "output", "dataset", "model", "train", "targets", "attack"});

    ExperimentConfig cfg;
    cfg.seed = get_or<uint64_t>(j, "seed", 0);
    cfg.workers = get_or<int>(j, "workers", 1);
    cfg.output = get_or<std::string>(j, "output", "run");

    require(j.contains("dataset"), "config needs a 'dataset' section");
    const auto& ds = j["dataset"];
    expect_keys(ds, "dataset", {"path", "synthetic"});
    require(ds.contains("path") != ds.contains("synthetic"),
            "dataset needs exactly one of 'path' or 'synthetic'");
    if (ds.contains("path")) {
        cfg.dataset.path = ds["path"].get<std::string>();
    } else {
        cfg.dataset.synthetic = parse_synthetic(ds["synthetic"], cfg.seed);
    }

    if (j.contains("model")) {
        const auto& m = j["model"];
        expect_keys(m, "model", {"kind", "dim", "transe_norm"});
        cfg.model.kind = model_kind_from_string(get_or<std::string>(m, "kind", "distmult"));
        cfg.model.k = get_or<int>(m, "dim", 200);
        cfg.model.transe_norm = get_or<int>(m, "transe_norm", 2);
    }
    if (j.contains("train")) {
        cfg.train = parse_train(j["train"], cfg.seed);
    } else {
        cfg.train.seed = cfg.seed;
    }
    if (j.contains("targets")) {
        const auto& t = j["targets"];
        expect_keys(t, "targets", {"rank_threshold", "cap", "side", "seed"});
        cfg.targets.rank_threshold = get_or<double>(t, "rank_threshold", 10.0);
        cfg.targets.cap = get_or<size_t>(t, "cap", 0);
        const std::string side = get_or<std::string>(t, "side", "both");
        if (side == "subject")
            cfg.targets.side = TargetSide::Subject;
        else if (side == "object")
            cfg.targets.side = TargetSide::Object;
        else if (side == "both")
            cfg.targets.side = TargetSide::Both;
        else
            fail("targets.side must be subject, object or both");
        cfg.targets.seed = get_or<uint64_t>(t, "seed", cfg.seed);
    } else {
        cfg.targets.seed = cfg.seed;
    }
    if (j.contains("attack")) {
        cfg.attack = parse_attack(j["attack"], cfg.seed);
    } else {
        cfg.attack.seed = cfg.seed;
        cfg.attack.lissa.sample_seed = cfg.seed;
    }

    // Environment overrides: output directory and worker cap only.
    if (const char* out = std::getenv("KGP_OUT"); out != nullptr && *out != '\0') cfg.output = out;
    if (const char* w = std::getenv("KGP_WORKERS"); w != nullptr && *w != '\0')
        cfg.workers = std::max(1, std::atoi(w));
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config ", path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["workers"] = workers;
    j["output"] = output;
    if (dataset.synthetic) {
        json rels = json::array();
        for (const auto& r : dataset.synthetic->relations) {
            std::string sem;
            switch (r.semantics) {
                case RelationSemantics::Symmetric: sem = "symmetric"; break;
                case RelationSemantics::InversePair: sem = "inverse_pair"; break;
                case RelationSemantics::CompositionTriple: sem = "composition_triple"; break;
                case RelationSemantics::Random: sem = "random"; break;
            }
            rels.push_back({{"semantics", sem}, {"density", r.density}});
        }
        j["dataset"]["synthetic"] = {{"entities", dataset.synthetic->n_entities},
                                     {"noise", dataset.synthetic->noise},
                                     {"blocks", dataset.synthetic->blocks},
                                     {"seed", dataset.synthetic->seed},
                                     {"relations", rels}};
    } else {
        j["dataset"]["path"] = dataset.path;
    }
    j["model"] = {{"kind", to_string(model.kind)}, {"dim", model.k}, {"transe_norm", model.transe_norm}};
    j["train"] = {{"strategy", to_string(train.strategy)},
                  {"loss", to_string(train.loss)},
                  {"optimizer", train.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                  {"lr", train.lr},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"adam_eps", train.adam_eps},
                  {"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"regularizer", train.regularizer == RegKind::None
                                      ? "none"
                                      : (train.regularizer == RegKind::L2 ? "l2" : "n3")},
                  {"reg_weight", train.reg_weight},
                  {"label_smoothing", train.label_smoothing},
                  {"negatives", train.n_neg},
                  {"margin", train.margin},
                  {"margin_paper_sign", train.margin_paper_sign},
                  {"seed", train.seed}};
    std::string side = "both";
    if (targets.side == TargetSide::Subject) side = "subject";
    if (targets.side == TargetSide::Object) side = "object";
    j["targets"] = {{"rank_threshold", targets.rank_threshold},
                    {"cap", targets.cap},
                    {"side", side},
                    {"seed", targets.seed}};
    j["attack"] = {{"family", to_string(attack.family)},
                   {"op", attack.op == EditOp::Add ? "add" : "del"},
                   {"budget", attack.budget},
                   {"seed", attack.seed},
                   {"method", to_string(attack.method)},
                   {"grad_loss", attack.grad_loss == TripleLossKind::BCE ? "bce" : "ce"},
                   {"lissa",
                    {{"damping", attack.lissa.damping},
                     {"scale", attack.lissa.scale},
                     {"depth", attack.lissa.depth},
                     {"repeats", attack.lissa.repeats},
                     {"seed", attack.lissa.sample_seed}}},
                   {"pattern", to_string(attack.pattern)},
                   {"heuristic", to_string(attack.heuristic)},
                   {"clusters", attack.clusters},
                   {"mode", attack.mode == EditMode::Neighbourhood ? "neighbourhood" : "global"},
                   {"epsilon", attack.direct.epsilon},
                   {"normalize_gradient", attack.direct.normalize_gradient},
                   {"downsample_pct", attack.direct.downsample_pct}};
    return j.dump(2) + "\n";
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    out << to_json_text();
    require(out.good(), "write failed: ", path.string());
}

}  // namespace kgp
