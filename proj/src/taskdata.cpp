#include "linklearn/taskdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <fstream>
#include <iterator>
#include <numeric>

#include <nlohmann/json.hpp>

#include "linklearn/errors.hpp"
#include "linklearn/rng.hpp"

namespace linklearn {
namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    Reader(const std::vector<unsigned char>& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::uint16_t u16(const char* field) {
        need(2, field);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* field) {
        if (pos_ + n > bytes_.size()) {
            throw FormatError(path_ + ": truncated while reading " + field + " (offset " + std::to_string(pos_) +
                              ", file is " + std::to_string(bytes_.size()) + " bytes)");
        }
    }

    const std::vector<unsigned char>& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::uint16_t checked_u16(std::size_t v, const char* field) {
    if (v > 0xFFFF) throw FormatError(std::string(field) + " " + std::to_string(v) + " does not fit in u16");
    return static_cast<std::uint16_t>(v);
}

}  // namespace

void Dataset::validate() const {
    if (labels.empty()) throw DataError("dataset is empty");
    if (height == 0 || width == 0 || channels == 0) throw DataError("dataset has a zero image dimension");
    if (images.size() != labels.size() * pixels()) {
        throw DataError("dataset holds " + std::to_string(images.size()) + " pixels for " +
                        std::to_string(labels.size()) + " samples of " + std::to_string(pixels()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes) {
            throw DataError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                            " >= n_classes " + std::to_string(n_classes));
        }
    }
}

Tensor batch_images(const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw DataError("empty batch");
    const std::size_t px = data.pixels();
    std::vector<double> values(indices.size() * px);
    for (std::size_t b = 0; b < indices.size(); ++b) {
        if (indices[b] >= data.size()) throw IndexError("sample " + std::to_string(indices[b]) + " out of range");
        auto src = data.sample(indices[b]);
        std::copy(src.begin(), src.end(), values.begin() + static_cast<std::ptrdiff_t>(b * px));
    }
    return Tensor({indices.size(), data.height, data.width, data.channels}, std::move(values));
}

std::vector<std::size_t> batch_labels(const Dataset& data, std::span<const std::size_t> indices) {
    std::vector<std::size_t> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(data.labels.at(i));
    return out;
}

Tensor all_images(const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return batch_images(data, idx);
}

void write_clds(const Dataset& data, const std::filesystem::path& path) {
    data.validate();
    std::vector<unsigned char> out;
    out.reserve(kCldsHeaderBytes + data.images.size() * 4 + data.labels.size() * 2);
    put_u32(out, kCldsMagic);
    put_u16(out, kCldsVersion);
    if (data.size() > 0xFFFFFFFFu) throw FormatError("n_samples does not fit in u32");
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    put_u16(out, checked_u16(data.height, "height"));
    put_u16(out, checked_u16(data.width, "width"));
    put_u16(out, checked_u16(data.channels, "channels"));
    put_u16(out, checked_u16(data.n_classes, "n_classes"));
    for (float v : data.images) put_u32(out, std::bit_cast<std::uint32_t>(v));
    for (auto l : data.labels) put_u16(out, checked_u16(l, "label"));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw StorageError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw StorageError("write failed for " + path.string());
}

Dataset read_clds(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw StorageError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(bytes, path.string());

    const std::uint32_t magic = r.u32("magic");
    if (magic != kCldsMagic) throw FormatError(path.string() + ": bad magic");
    const std::uint16_t version = r.u16("version");
    if (version != kCldsVersion) {
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    }
    Dataset d;
    const std::uint32_t n = r.u32("n_samples");
    d.height = r.u16("height");
    d.width = r.u16("width");
    d.channels = r.u16("channels");
    d.n_classes = r.u16("n_classes");
    const std::size_t expected = static_cast<std::size_t>(n) * (d.pixels() * 4 + 2);
    if (r.remaining() < expected) {
        throw FormatError(path.string() + ": truncated payload (pixels/labels): expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(r.remaining()));
    }
    d.images.resize(static_cast<std::size_t>(n) * d.pixels());
    for (auto& v : d.images) v = r.f32("pixels");
    d.labels.resize(n);
    for (auto& l : d.labels) l = r.u16("labels");
    if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes after labels");
    d.validate();
    return d;
}

TaskSplit split_by_class(const Dataset& data, std::size_t n_tasks, std::size_t classes_per_task,
                         std::size_t first_class) {
    data.validate();
    if (n_tasks == 0 || classes_per_task == 0) throw ConfigError("split needs at least one task and one class per task");
    if (first_class + n_tasks * classes_per_task > data.n_classes) {
        throw ConfigError("split of " + std::to_string(n_tasks) + " tasks x " + std::to_string(classes_per_task) +
                          " classes from class " + std::to_string(first_class) + " exceeds " +
                          std::to_string(data.n_classes) + " classes");
    }
    std::vector<std::vector<std::size_t>> by_class(data.n_classes);
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

    TaskSplit split;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        TaskData task;
        task.source_index = t;
        for (auto* part : {&task.train, &task.val, &task.test}) {
            part->height = data.height;
            part->width = data.width;
            part->channels = data.channels;
            part->n_classes = classes_per_task;
        }
        for (std::size_t local = 0; local < classes_per_task; ++local) {
            const std::size_t cls = first_class + t * classes_per_task + local;
            task.classes.push_back(cls);
            const auto& members = by_class[cls];
            const std::size_t n_train = members.size() * kTrainPercent / 100;
            const std::size_t n_val = members.size() * kValPercent / 100;
            for (std::size_t j = 0; j < members.size(); ++j) {
                Dataset& dst = j < n_train ? task.train : (j < n_train + n_val ? task.val : task.test);
                auto px = data.sample(members[j]);
                dst.images.insert(dst.images.end(), px.begin(), px.end());
                dst.labels.push_back(local);
            }
        }
        split.tasks.push_back(std::move(task));
    }
    return split;
}

std::vector<std::size_t> parse_task_order(const std::string& text) {
    std::vector<std::size_t> order;
    if (text.find(',') != std::string::npos) {
        std::size_t start = 0;
        while (start <= text.size()) {
            const std::size_t end = std::min(text.find(',', start), text.size());
            const std::string tok = text.substr(start, end - start);
            if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) {
                throw ConfigError("task order '" + text + "' is not a list of task indices");
            }
            order.push_back(std::stoul(tok));
            start = end + 1;
        }
    } else {
        for (char c : text) {
            if (!std::isdigit(static_cast<unsigned char>(c))) throw ConfigError("task order '" + text + "' has non-digit");
            order.push_back(static_cast<std::size_t>(c - '0'));
        }
    }
    if (order.empty()) throw ConfigError("empty task order");
    return order;
}

namespace {

void check_permutation(std::span<const std::size_t> perm, std::size_t n) {
    if (perm.size() != n) {
        throw ConfigError("task order has " + std::to_string(perm.size()) + " entries for " + std::to_string(n) + " tasks");
    }
    std::vector<bool> seen(n, false);
    for (auto p : perm) {
        if (p >= n || seen[p]) throw ConfigError("task order is not a permutation of 0.." + std::to_string(n - 1));
        seen[p] = true;
    }
}

}  // namespace

TaskSplit apply_task_order(const TaskSplit& split, std::span<const std::size_t> permutation) {
    check_permutation(permutation, split.tasks.size());
    TaskSplit out;
    for (auto p : permutation) out.tasks.push_back(split.tasks[p]);
    return out;
}

std::vector<std::size_t> invert_permutation(std::span<const std::size_t> permutation) {
    check_permutation(permutation, permutation.size());
    std::vector<std::size_t> inv(permutation.size());
    for (std::size_t i = 0; i < permutation.size(); ++i) inv[permutation[i]] = i;
    return inv;
}

void SyntheticSpec::validate() const {
    if (n_classes == 0) throw ConfigError("synthetic n_classes must be >= 1");
    if (train_per_class + test_per_class == 0) throw ConfigError("synthetic samples per class must be >= 1");
    if (image_h == 0 || image_w == 0 || channels == 0) throw ConfigError("synthetic image dims must be >= 1");
    if (basis_rank == 0) throw ConfigError("basis_rank must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
}

SyntheticData gen_synthetic_full(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t px = spec.image_h * spec.image_w * spec.channels;
    Rng basis_rng(derive_seed(spec.seed, 1));
    Rng proto_rng(derive_seed(spec.seed, 2));
    Rng noise_rng(derive_seed(spec.seed, 3));

    SyntheticData out;
    out.basis = Tensor::zeros({spec.basis_rank, px});
    const double basis_std = 1.0 / std::sqrt(static_cast<double>(px));
    for (auto& v : out.basis.data) v = basis_rng.normal(0.0, basis_std);

    out.prototypes = Tensor::zeros({spec.n_classes, px});
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t r = 0; r < spec.basis_rank; ++r) {
            const double w = proto_rng.normal(0.0, spec.prototype_scale);
            for (std::size_t j = 0; j < px; ++j) out.prototypes.at(c, j) += w * out.basis.at(r, j);
        }
    }

    Dataset& d = out.data;
    d.height = spec.image_h;
    d.width = spec.image_w;
    d.channels = spec.channels;
    d.n_classes = spec.n_classes;
    const std::size_t per_class = spec.train_per_class + spec.test_per_class;
    d.images.reserve(spec.n_classes * per_class * px);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s) {
            for (std::size_t j = 0; j < px; ++j) {
                const double noise = spec.noise_sigma > 0.0 ? noise_rng.normal(0.0, spec.noise_sigma) : 0.0;
                d.images.push_back(static_cast<float>(out.prototypes.at(c, j) + noise));
            }
            d.labels.push_back(c);
        }
    }
    return out;
}

Dataset gen_synthetic(const SyntheticSpec& spec) { return gen_synthetic_full(spec).data; }

void BenchmarkSpec::validate() const {
    synthetic.validate();
    if (n_tasks == 0 || classes_per_task == 0) throw ConfigError("benchmark needs tasks and classes per task");
    if (continual_classes() + base_classes > synthetic.n_classes) {
        throw ConfigError("benchmark needs " + std::to_string(continual_classes() + base_classes) +
                          " classes, synthetic spec has " + std::to_string(synthetic.n_classes));
    }
}

Dataset select_classes(const Dataset& data, std::size_t first, std::size_t count) {
    Dataset out;
    out.height = data.height;
    out.width = data.width;
    out.channels = data.channels;
    out.n_classes = count;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t l = data.labels[i];
        if (l < first || l >= first + count) continue;
        auto px = data.sample(i);
        out.images.insert(out.images.end(), px.begin(), px.end());
        out.labels.push_back(l - first);
    }
    return out;
}

Benchmark make_benchmark(const BenchmarkSpec& spec) {
    spec.validate();
    Dataset all = gen_synthetic(spec.synthetic);
    Benchmark b;
    b.split = split_by_class(all, spec.n_tasks, spec.classes_per_task, 0);
    if (spec.base_classes > 0) b.base = select_classes(all, spec.continual_classes(), spec.base_classes);
    return b;
}

std::string synthetic_manifest_json(const BenchmarkSpec& spec) {
    const auto& s = spec.synthetic;
    nlohmann::ordered_json j;
    j["generator"] = "low-rank-prototype";
    j["rng"] = "xoshiro256** seeded by splitmix64; Box-Muller normals";
    j["seed"] = s.seed;
    j["n_classes"] = s.n_classes;
    j["train_per_class"] = s.train_per_class;
    j["test_per_class"] = s.test_per_class;
    j["image"] = {s.image_h, s.image_w, s.channels};
    j["basis_rank"] = s.basis_rank;
    j["prototype_scale"] = s.prototype_scale;
    j["noise_sigma"] = s.noise_sigma;
    j["n_tasks"] = spec.n_tasks;
    j["classes_per_task"] = spec.classes_per_task;
    j["base_classes"] = spec.base_classes;
    j["split_percent"] = {kTrainPercent, kValPercent, 100 - kTrainPercent - kValPercent};
    return j.dump(2) + "\n";
}

}  // namespace linklearn
