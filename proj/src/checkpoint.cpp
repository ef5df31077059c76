#include "cmpose/checkpoint.h"

#include <cstring>
#include <fstream>

namespace cmpose {

namespace {

constexpr char kMagic[5] = {'C', 'M', 'P', 'Z', '1'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const CmPoseModel& model, int epoch,
                     std::uint64_t global_step, std::uint64_t rng_seed) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint " + path);
    f.write(kMagic, sizeof(kMagic));
    write_pod(f, kVersion);

    const std::string cfg_text = model.config().to_text();
    write_pod(f, static_cast<std::uint32_t>(cfg_text.size()));
    f.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

    write_pod(f, static_cast<std::uint32_t>(epoch));
    write_pod(f, global_step);
    write_pod(f, rng_seed);

    const ParamStore& params = model.params();
    write_pod(f, static_cast<std::uint32_t>(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.name(i);
        const Tensor& t = params.tensor(i);
        write_pod(f, static_cast<std::uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(f, static_cast<std::uint8_t>(t.shape.size()));
        for (int d : t.shape) write_pod(f, static_cast<std::uint32_t>(d));
        for (double v : t.data) write_pod(f, static_cast<float>(v));
    }
    if (!f) throw IoError("short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    char magic[5];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("bad checkpoint magic in " + path);
    if (read_pod<std::uint16_t>(f) != kVersion) throw IoError("unsupported checkpoint version");

    const auto cfg_len = read_pod<std::uint32_t>(f);
    std::string cfg_text(cfg_len, '\0');
    f.read(cfg_text.data(), cfg_len);

    LoadedCheckpoint out;
    out.epoch = static_cast<int>(read_pod<std::uint32_t>(f));
    out.global_step = read_pod<std::uint64_t>(f);
    out.rng_seed = read_pod<std::uint64_t>(f);
    out.model = std::make_unique<CmPoseModel>(parse_config_text(cfg_text));

    ParamStore& params = out.model->params();
    const auto n_records = read_pod<std::uint32_t>(f);
    if (n_records != params.size())
        throw IoError("checkpoint has " + std::to_string(n_records) + " parameters, model wants " +
                      std::to_string(params.size()));
    for (std::uint32_t r = 0; r < n_records; ++r) {
        const auto name_len = read_pod<std::uint16_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const int ndim = read_pod<std::uint8_t>(f);
        Shape shape(static_cast<size_t>(ndim));
        for (int d = 0; d < ndim; ++d) shape[static_cast<size_t>(d)] = static_cast<int>(read_pod<std::uint32_t>(f));
        Tensor* t = params.find(name);
        if (!t) throw IoError("checkpoint parameter " + name + " unknown to the model");
        if (t->shape != shape)
            throw IoError("checkpoint parameter " + name + " has shape " + shape_str(shape) +
                          ", model wants " + shape_str(t->shape));
        for (double& v : t->data) v = read_pod<float>(f);
    }
    if (!f) throw IoError("truncated checkpoint " + path);
    return out;
}

}  // namespace cmpose
