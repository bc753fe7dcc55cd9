#include "kseg/io/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "kseg/errors.hpp"

namespace kseg {

ConfigTree model_config_to_tree(const ModelConfig& cfg) {
    ConfigTree tree;
    tree.set("model.variant", variant_name(cfg.variant));
    tree.set_int("model.image_levels", cfg.image_levels);
    tree.set_int("model.kspace_levels", cfg.kspace_levels);
    tree.set_int("model.image_base_channels", cfg.image_base_channels);
    tree.set_int("model.kspace_hidden_factor", cfg.kspace_hidden_factor);
    tree.set_int("model.kspace_feature_channels", cfg.kspace_feature_channels);
    tree.set_int("model.num_classes", cfg.num_classes);
    tree.set_int("model.desk_scale_factor", cfg.desk_scale_factor);
    return tree;
}

ModelConfig model_config_from_tree(const ConfigTree& tree) {
    ModelConfig cfg;
    cfg.variant = variant_from_name(tree.get("model.variant"));
    cfg.image_levels = int(tree.get_int("model.image_levels"));
    cfg.kspace_levels = int(tree.get_int("model.kspace_levels"));
    cfg.image_base_channels = int(tree.get_int("model.image_base_channels"));
    cfg.kspace_hidden_factor = int(tree.get_int("model.kspace_hidden_factor"));
    cfg.kspace_feature_channels = int(tree.get_int("model.kspace_feature_channels"));
    cfg.num_classes = int(tree.get_int("model.num_classes"));
    cfg.desk_scale_factor = int(tree.get_int("model.desk_scale_factor"));
    return cfg;
}

namespace {

constexpr char kMagic[6] = {'K', 'S', 'C', 'K', '1', '\0'};
constexpr uint32_t kFormat = 1;

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, SegmentationModel<float>& model,
                     uint64_t experiment_config_hash, const std::string& tool_version) {
    ConfigTree embedded = model_config_to_tree(model.config());
    embedded.set("provenance.tool_version", tool_version);

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("checkpoint: cannot open for writing: " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put(os, kFormat);
    put(os, experiment_config_hash);

    std::string text = embedded.serialize();
    put(os, uint32_t(text.size()));
    os.write(text.data(), std::streamsize(text.size()));

    auto params = model.params();
    put(os, uint32_t(params.size()));
    for (const auto* p : params) {
        put(os, uint16_t(p->name.size()));
        os.write(p->name.data(), std::streamsize(p->name.size()));
        put(os, uint8_t(p->dims.size()));
        for (int d : p->dims) put(os, uint32_t(d));
        put(os, uint64_t(p->value.size()));
        os.write(reinterpret_cast<const char*>(p->value.data()),
                 std::streamsize(p->value.size() * sizeof(float)));
    }
    if (!os) throw io_error("checkpoint: write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("checkpoint: cannot open: " + path.string());

    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, kMagic, 6) != 0)
        throw io_error("checkpoint: bad magic in " + path.string());
    uint32_t format = get<uint32_t>(is);
    if (format != kFormat)
        throw io_error("checkpoint: unsupported format " + std::to_string(format));
    uint64_t config_hash = get<uint64_t>(is);

    uint32_t text_len = get<uint32_t>(is);
    std::string text(text_len, '\0');
    is.read(text.data(), text_len);
    if (!is) throw io_error("checkpoint: truncated config in " + path.string());
    ConfigTree embedded = ConfigTree::parse(text);

    LoadedCheckpoint out{SegmentationModel<float>(model_config_from_tree(embedded), 0),
                         config_hash, embedded.get_or("provenance.tool_version", ""), embedded};

    auto params = out.model.params();
    uint32_t count = get<uint32_t>(is);
    if (count != params.size())
        throw io_error("checkpoint: tensor count mismatch in " + path.string());
    for (auto* p : params) {
        uint16_t name_len = get<uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (name != p->name)
            throw io_error("checkpoint: tensor order mismatch (" + name + " vs " + p->name + ")");
        uint8_t ndims = get<uint8_t>(is);
        std::vector<int> dims(ndims);
        for (auto& d : dims) d = int(get<uint32_t>(is));
        if (dims != p->dims) throw io_error("checkpoint: shape mismatch for " + name);
        uint64_t n = get<uint64_t>(is);
        if (n != p->value.size()) throw io_error("checkpoint: size mismatch for " + name);
        is.read(reinterpret_cast<char*>(p->value.data()), std::streamsize(n * sizeof(float)));
    }
    if (!is) throw io_error("checkpoint: truncated tensors in " + path.string());
    return out;
}

} // namespace kseg
