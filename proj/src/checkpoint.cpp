#include <bit>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "linklearn/errors.hpp"
#include "linklearn/trainer.hpp"

namespace linklearn {
namespace {

using json = nlohmann::ordered_json;

constexpr const char* kFormat = "linklearn-checkpoint";

json backbone_json(const BackboneConfig& c) {
    return {{"image_h", c.image_h}, {"image_w", c.image_w}, {"channels", c.channels}, {"patch", c.patch},
            {"d_model", c.d_model}, {"n_heads", c.n_heads},   {"d_ff", c.d_ff},         {"layers", c.layers}};
}

BackboneConfig backbone_from(const json& j) {
    BackboneConfig c;
    c.image_h = j.at("image_h");
    c.image_w = j.at("image_w");
    c.channels = j.at("channels");
    c.patch = j.at("patch");
    c.d_model = j.at("d_model");
    c.n_heads = j.at("n_heads");
    c.d_ff = j.at("d_ff");
    c.layers = j.at("layers");
    return c;
}

json model_json(const ModelConfig& m) {
    return {{"backbone", backbone_json(m.backbone)},
            {"bottleneck", m.bottleneck},
            {"adapter_activation", to_string(m.adapter_activation)},
            {"hypernet",
             {{"embed_dim", m.hypernet.embed_dim},
              {"hidden", m.hypernet.hidden},
              {"layers", m.hypernet.layers},
              {"output_bias_init", m.hypernet.output_bias_init},
              {"embedding_init_std", m.hypernet.embedding_init_std}}}};
}

ModelConfig model_from(const json& j) {
    ModelConfig m;
    m.backbone = backbone_from(j.at("backbone"));
    m.bottleneck = j.at("bottleneck");
    m.adapter_activation = parse_activation(j.at("adapter_activation"));
    const json& h = j.at("hypernet");
    m.hypernet.embed_dim = h.at("embed_dim");
    m.hypernet.hidden = h.at("hidden").get<std::vector<std::size_t>>();
    m.hypernet.layers = h.at("layers");
    m.hypernet.output_bias_init = h.at("output_bias_init");
    m.hypernet.embedding_init_std = h.at("embedding_init_std");
    return m;
}

struct Entry {
    std::string name;
    const Tensor* value;
    bool frozen;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw StorageError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw StorageError("write failed for " + path.string());
}

void write_checkpoint(const std::filesystem::path& dir, json header, const std::vector<Entry>& entries,
                      const std::string& config_echo) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw StorageError("cannot create " + dir.string() + ": " + ec.message());

    std::vector<unsigned char> blob;
    json table = json::array();
    for (const auto& e : entries) {
        const std::size_t offset = blob.size();
        for (double v : e.value->data) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int i = 0; i < 4; ++i) blob.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFF));
        }
        table.push_back({{"name", e.name},
                         {"shape", e.value->shape},
                         {"offset", offset},
                         {"length", blob.size() - offset},
                         {"frozen", e.frozen}});
    }
    header["tensors"] = std::move(table);
    header["blob_bytes"] = blob.size();

    std::ofstream f(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    if (!f) throw StorageError("cannot open " + (dir / "tensors.bin").string() + " for writing");
    f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!f) throw StorageError("write failed for " + (dir / "tensors.bin").string());
    write_text(dir / "manifest.json", header.dump(2) + "\n");
    write_text(dir / "config.json", config_echo.empty() ? "{}\n" : config_echo);
}

struct LoadedTensor {
    Tensor value;
    bool frozen = false;
};

struct Loaded {
    json header;
    std::map<std::string, LoadedTensor> tensors;
};

Loaded read_checkpoint(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw LoadError("cannot open " + manifest_path.string());
    Loaded out;
    try {
        out.header = json::parse(mf);
    } catch (const std::exception& e) {
        throw LoadError(manifest_path.string() + ": " + e.what());
    }
    if (out.header.value("format", "") != kFormat) throw LoadError(manifest_path.string() + ": not a checkpoint manifest");
    if (out.header.value("version", -1) != kCheckpointVersion) {
        throw LoadError(manifest_path.string() + ": version " + out.header.value("version", json(-1)).dump() +
                        " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
    }

    const auto blob_path = dir / "tensors.bin";
    std::ifstream bf(blob_path, std::ios::binary);
    if (!bf) throw LoadError("cannot open " + blob_path.string());
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    std::size_t expected = 0;
    for (const auto& t : out.header.at("tensors")) expected += 4 * shape_numel(t.at("shape").get<Shape>());
    if (blob.size() != expected) {
        throw LoadError(blob_path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                        std::to_string(blob.size()));
    }
    for (const auto& t : out.header.at("tensors")) {
        const std::string name = t.at("name");
        const Shape shape = t.at("shape").get<Shape>();
        const std::size_t offset = t.at("offset"), length = t.at("length");
        if (length != 4 * shape_numel(shape) || offset + length > blob.size()) {
            throw LoadError("tensor '" + name + "' has an inconsistent offset/length");
        }
        std::vector<double> values(shape_numel(shape));
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[offset + 4 * i + b]) << (8 * b);
            values[i] = static_cast<double>(std::bit_cast<float>(bits));
        }
        out.tensors[name] = {Tensor(shape, std::move(values)), t.value("frozen", false)};
    }
    return out;
}

void restore(Parameter& p, std::map<std::string, LoadedTensor>& tensors) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw LoadError("checkpoint is missing tensor '" + p.name + "'");
    if (it->second.value.shape != p.value.shape) {
        throw LoadError("tensor '" + p.name + "' has shape " + shape_str(it->second.value.shape) + ", expected " +
                        shape_str(p.value.shape));
    }
    p.value = std::move(it->second.value);
    p.frozen = it->second.frozen;
    tensors.erase(it);
}

std::vector<Entry> backbone_entries(const Backbone& bb) {
    std::vector<Entry> out;
    for (const Parameter* p : bb.parameters()) out.push_back({p->name, &p->value, p->frozen});
    return out;
}

}  // namespace

void save_checkpoint(const ContinualState& s, const std::filesystem::path& dir, const std::string& config_echo) {
    std::vector<Entry> entries;
    for (const Parameter* p : s.all_parameters()) entries.push_back({p->name, &p->value, p->frozen});
    for (const auto& [name, t] : s.fisher.fi) entries.push_back({"fisher.fi." + name, &t, true});
    for (const auto& [name, t] : s.fisher.anchor) entries.push_back({"fisher.anchor." + name, &t, true});

    json header;
    header["format"] = kFormat;
    header["version"] = kCheckpointVersion;
    header["kind"] = "continual";
    header["regime"] = to_string(s.regime);
    header["seed"] = s.seed;
    header["tasks_trained"] = s.tasks_trained;
    header["fisher_last_task"] = s.fisher.last_task;
    json classes = json::array();
    for (const auto& h : s.heads) classes.push_back(h.b.value.numel());
    header["head_classes"] = classes;
    header["model"] = model_json(s.model);
    write_checkpoint(dir, std::move(header), entries, config_echo);
}

ContinualState load_checkpoint(const std::filesystem::path& dir) {
    Loaded loaded = read_checkpoint(dir);
    const json& h = loaded.header;
    if (h.value("kind", "") != "continual") throw LoadError(dir.string() + " is not a continual-state checkpoint");

    ContinualState s;
    try {
        s.model = model_from(h.at("model"));
        s.model.validate();
        s.regime = parse_regime(h.at("regime"));
        s.seed = h.at("seed");
        s.tasks_trained = h.at("tasks_trained");
        s.fisher.last_task = h.at("fisher_last_task");
    } catch (const LoadError&) {
        throw;
    } catch (const std::exception& e) {
        throw LoadError(dir.string() + ": bad manifest header: " + e.what());
    }
    const auto classes = h.at("head_classes").get<std::vector<std::size_t>>();
    if (classes.size() != s.tasks_trained) throw LoadError("head count does not match tasks_trained");

    auto& tensors = loaded.tensors;
    s.backbone = Backbone::init(s.model.backbone, 0);
    for (Parameter* p : s.backbone.parameters()) restore(*p, tensors);
    s.bank = AdapterBank(s.model.adapter_config());
    s.mlp = WeightMLP::init(s.model.hypernet, 0);
    for (std::size_t t = 0; t < s.tasks_trained; ++t) {
        s.bank.add_task(t, 0);
        s.bank.freeze_task(t);
        for (Parameter* p : s.bank.task_parameters(t)) restore(*p, tensors);
        TaskHead head;
        head.w = {"head.t" + std::to_string(t) + ".w", Tensor::zeros({s.model.backbone.d_model, classes[t]}), true};
        head.b = {"head.t" + std::to_string(t) + ".b", Tensor::zeros({classes[t]}), true};
        restore(head.w, tensors);
        restore(head.b, tensors);
        s.heads.push_back(std::move(head));
        if (s.regime == Regime::linked) {
            TaskEmbedding e = make_task_embedding(t, s.model.hypernet, 0);
            restore(e.vec, tensors);
            s.embeddings.push_back(std::move(e));
        }
    }
    for (Parameter* p : s.mlp.parameters()) restore(*p, tensors);
    for (const Parameter* p : s.mlp.parameters()) {
        for (auto [prefix, target] : {std::pair{"fisher.fi.", &s.fisher.fi}, std::pair{"fisher.anchor.", &s.fisher.anchor}}) {
            auto it = tensors.find(prefix + p->name);
            if (it == tensors.end()) continue;
            (*target)[p->name] = std::move(it->second.value);
            tensors.erase(it);
        }
    }
    if (s.fisher.fi.size() != s.fisher.anchor.size()) throw LoadError("Fisher importances and anchors are incomplete");
    if (!tensors.empty()) throw LoadError("checkpoint holds unknown tensor '" + tensors.begin()->first + "'");
    return s;
}

void save_backbone(const Backbone& backbone, const std::filesystem::path& dir, const std::string& config_echo) {
    json header;
    header["format"] = kFormat;
    header["version"] = kCheckpointVersion;
    header["kind"] = "backbone";
    header["backbone"] = backbone_json(backbone.config);
    write_checkpoint(dir, std::move(header), backbone_entries(backbone), config_echo);
}

Backbone load_backbone(const std::filesystem::path& dir) {
    Loaded loaded = read_checkpoint(dir);
    if (loaded.header.value("kind", "") != "backbone") throw LoadError(dir.string() + " is not a backbone checkpoint");
    Backbone bb = Backbone::init(backbone_from(loaded.header.at("backbone")), 0);
    for (Parameter* p : bb.parameters()) restore(*p, loaded.tensors);
    if (!loaded.tensors.empty()) throw LoadError("checkpoint holds unknown tensor '" + loaded.tensors.begin()->first + "'");
    return bb;
}

}  // namespace linklearn
