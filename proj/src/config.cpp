#include "linklearn/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "linklearn/errors.hpp"

namespace linklearn {
namespace {

using json = nlohmann::ordered_json;

json to_json(const ExperimentConfig& c) {
    const auto& s = c.data.synthetic;
    const auto& b = c.model.backbone;
    const auto& h = c.model.hypernet;
    json j;
    j["data"] = {{"seed", s.seed},
                 {"n_tasks", c.data.n_tasks},
                 {"classes_per_task", c.data.classes_per_task},
                 {"base_classes", c.data.base_classes},
                 {"train_per_class", s.train_per_class},
                 {"test_per_class", s.test_per_class},
                 {"image_size", s.image_h},
                 {"channels", s.channels},
                 {"basis_rank", s.basis_rank},
                 {"prototype_scale", s.prototype_scale},
                 {"noise_sigma", s.noise_sigma},
                 {"path", c.data_path}};
    j["model"] = {{"patch", b.patch},
                  {"d_model", b.d_model},
                  {"n_heads", b.n_heads},
                  {"d_ff", b.d_ff},
                  {"layers", b.layers},
                  {"bottleneck", c.model.bottleneck},
                  {"adapter_activation", to_string(c.model.adapter_activation)},
                  {"embed_dim", h.embed_dim},
                  {"mlp_hidden", h.hidden},
                  {"beta_bias_init", h.output_bias_init},
                  {"embedding_init_std", h.embedding_init_std}};
    j["pretrain"] = {{"epochs", c.pretrain.epochs},
                     {"lr", c.pretrain.lr},
                     {"batch_size", c.pretrain.batch_size},
                     {"seed", c.pretrain.seed},
                     {"checkpoint", c.backbone_path}};
    j["train"] = {{"lr", c.train.lr},
                  {"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"lambda", c.train.lambda},
                  {"gamma", c.train.gamma},
                  {"fisher_samples", c.train.fisher_samples}};
    j["run"] = {{"seeds", c.seeds},
                {"orders", c.orders},
                {"constant_k", c.constant_k},
                {"lambda_sweep", c.lambda_sweep},
                {"out", c.out}};
    return j;
}

// Overlays src onto dst, rejecting keys dst does not have.
void merge(json& dst, const json& src, const std::string& prefix) {
    if (!src.is_object()) throw ConfigError((prefix.empty() ? "config" : prefix) + ": expected an object");
    for (const auto& [key, value] : src.items()) {
        const std::string name = prefix.empty() ? key : prefix + "." + key;
        if (!dst.contains(key)) throw ConfigError("unknown key '" + name + "'");
        if (dst[key].is_object()) {
            merge(dst[key], value, name);
        } else {
            dst[key] = value;
        }
    }
}

class Reader {
public:
    explicit Reader(const json& root) : root_(root) {}

    const json& at(const std::string& key) const {
        const auto dot = key.find('.');
        return root_.at(key.substr(0, dot)).at(key.substr(dot + 1));
    }

    std::uint64_t u64(const std::string& key) const { return unsigned_value(at(key), key); }
    std::size_t size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

    double number(const std::string& key) const {
        const json& v = at(key);
        if (!v.is_number()) throw type_error(key, "a number", v);
        return v.get<double>();
    }

    std::string string(const std::string& key) const {
        const json& v = at(key);
        if (!v.is_string()) throw type_error(key, "a string", v);
        return v.get<std::string>();
    }

    template <typename F>
    auto list(const std::string& key, F&& element) const {
        const json& v = at(key);
        if (!v.is_array()) throw type_error(key, "an array", v);
        std::vector<decltype(element(v, key))> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(element(v[i], key + "[" + std::to_string(i) + "]"));
        return out;
    }

    static std::uint64_t unsigned_value(const json& v, const std::string& key) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            throw type_error(key, "a non-negative integer", v);
        }
        return v.get<std::uint64_t>();
    }

    static ConfigError type_error(const std::string& key, const std::string& expected, const json& got) {
        return ConfigError("key '" + key + "' must be " + expected + ", got " + got.dump());
    }

private:
    const json& root_;
};

template <typename F>
void checked(const std::string& key, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        std::string what = e.what();
        if (what.find("key '") != std::string::npos) throw;
        const std::string prefix = "config error: ";
        if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
        throw ConfigError("key '" + key + "': " + what);
    }
}

ExperimentConfig from_json(const json& j) {
    const Reader r(j);
    ExperimentConfig c;

    auto& s = c.data.synthetic;
    s.seed = r.u64("data.seed");
    c.data.n_tasks = r.size("data.n_tasks");
    c.data.classes_per_task = r.size("data.classes_per_task");
    c.data.base_classes = r.size("data.base_classes");
    s.n_classes = c.data.n_tasks * c.data.classes_per_task + c.data.base_classes;
    s.train_per_class = r.size("data.train_per_class");
    s.test_per_class = r.size("data.test_per_class");
    s.image_h = s.image_w = r.size("data.image_size");
    s.channels = r.size("data.channels");
    s.basis_rank = r.size("data.basis_rank");
    s.prototype_scale = r.number("data.prototype_scale");
    s.noise_sigma = r.number("data.noise_sigma");
    c.data_path = r.string("data.path");
    checked("data", [&] { c.data.validate(); });

    auto& b = c.model.backbone;
    b.image_h = s.image_h;
    b.image_w = s.image_w;
    b.channels = s.channels;
    b.patch = r.size("model.patch");
    b.d_model = r.size("model.d_model");
    b.n_heads = r.size("model.n_heads");
    b.d_ff = r.size("model.d_ff");
    b.layers = r.size("model.layers");
    checked("model", [&] { b.validate(); });
    c.model.bottleneck = r.size("model.bottleneck");
    checked("model.adapter_activation",
            [&] { c.model.adapter_activation = parse_activation(r.string("model.adapter_activation")); });
    auto& h = c.model.hypernet;
    h.embed_dim = r.size("model.embed_dim");
    h.hidden = r.list("model.mlp_hidden", [](const json& v, const std::string& k) -> std::size_t {
        return static_cast<std::size_t>(Reader::unsigned_value(v, k));
    });
    h.layers = b.layers;
    h.output_bias_init = r.number("model.beta_bias_init");
    h.embedding_init_std = r.number("model.embedding_init_std");
    checked("model.bottleneck", [&] { c.model.adapter_config().validate(); });
    checked("model.mlp_hidden", [&] { h.validate(); });
    checked("model", [&] { c.model.validate(); });

    c.pretrain.epochs = r.size("pretrain.epochs");
    c.pretrain.lr = r.number("pretrain.lr");
    c.pretrain.batch_size = r.size("pretrain.batch_size");
    c.pretrain.seed = r.u64("pretrain.seed");
    c.backbone_path = r.string("pretrain.checkpoint");
    if (!(c.pretrain.lr > 0.0)) throw ConfigError("key 'pretrain.lr' must be positive");
    if (c.pretrain.batch_size == 0) throw ConfigError("key 'pretrain.batch_size' must be positive");

    c.train.lr = r.number("train.lr");
    c.train.epochs = r.size("train.epochs");
    c.train.batch_size = r.size("train.batch_size");
    c.train.lambda = r.number("train.lambda");
    c.train.gamma = r.number("train.gamma");
    c.train.fisher_samples = r.size("train.fisher_samples");
    checked("train", [&] { c.train.validate(); });

    c.seeds = r.list("run.seeds", [](const json& v, const std::string& k) { return Reader::unsigned_value(v, k); });
    if (c.seeds.empty()) throw ConfigError("key 'run.seeds' must list at least one seed");
    c.orders = r.list("run.orders", [](const json& v, const std::string& k) {
        if (!v.is_string()) throw Reader::type_error(k, "a string", v);
        return v.get<std::string>();
    });
    if (c.orders.empty()) throw ConfigError("key 'run.orders' must list at least one order");
    for (const auto& o : c.orders) checked("run.orders", [&] { (void)c.permutation(o); });
    auto numbers = [](const json& v, const std::string& k) {
        if (!v.is_number()) throw Reader::type_error(k, "a number", v);
        return v.get<double>();
    };
    c.constant_k = r.list("run.constant_k", numbers);
    c.lambda_sweep = r.list("run.lambda_sweep", numbers);
    for (double l : c.lambda_sweep) {
        if (!(l >= 0.0)) throw ConfigError("key 'run.lambda_sweep' holds a negative value");
    }
    c.out = r.string("run.out");
    return c;
}

json parse_value(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);
    return v;
}

}  // namespace

std::vector<std::size_t> ExperimentConfig::permutation(const std::string& order) const {
    std::vector<std::size_t> p;
    if (order == "identity") {
        for (std::size_t i = 0; i < data.n_tasks; ++i) p.push_back(i);
        return p;
    }
    p = parse_task_order(order);
    if (p.size() != data.n_tasks) {
        throw ConfigError("order '" + order + "' has " + std::to_string(p.size()) + " tasks, expected " +
                          std::to_string(data.n_tasks));
    }
    (void)invert_permutation(p);
    return p;
}

std::string config_echo(const ExperimentConfig& config) { return to_json(config).dump(2) + "\n"; }

ExperimentConfig parse_config(const std::string& text, const std::vector<Override>& overrides) {
    json merged = to_json(ExperimentConfig{});
    bool blank = true;
    for (char ch : text) {
        if (!std::isspace(static_cast<unsigned char>(ch))) blank = false;
    }
    if (!blank) {
        json file = json::parse(text, nullptr, false);
        if (file.is_discarded()) throw ConfigError("config is not valid JSON");
        merge(merged, file, "");
    }
    for (const auto& o : overrides) {
        const auto dot = o.key.find('.');
        if (dot == std::string::npos || !merged.contains(o.key.substr(0, dot))) {
            throw ConfigError("unknown key '" + o.key + "'");
        }
        merge(merged, json{{o.key.substr(0, dot), json{{o.key.substr(dot + 1), parse_value(o.value)}}}}, "");
    }
    ExperimentConfig c = from_json(merged);
    if (c.out.empty()) {
        const char* env = std::getenv(kOutEnv);
        c.out = env != nullptr && *env != '\0' ? env : kDefaultOut;
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<Override>& overrides) {
    std::string text;
    if (!file.empty()) {
        std::ifstream f(file);
        if (!f) throw ConfigError("cannot open config " + file.string());
        std::ostringstream ss;
        ss << f.rdbuf();
        text = ss.str();
    }
    return parse_config(text, overrides);
}

}  // namespace linklearn
