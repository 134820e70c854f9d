#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lad/config.hpp"
#include "lad/trainer.hpp"

namespace lad {

namespace {

constexpr char kMagic[8] = {'L', 'A', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    std::array<char, sizeof(T)> bytes;
    in.read(bytes.data(), sizeof(T));
    if (!in) throw IoError("checkpoint truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

void put_array(std::ostream& out, const std::string& name, const Mat<float>& m) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, 2);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) put<float>(out, m.data()[i]);
}

void get_array(std::istream& in, const std::string& expected_name, Mat<float>& m) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in || name != expected_name) {
        throw ValidationError("checkpoint: expected array '" + expected_name + "', found '" + name + "'");
    }
    if (get<std::uint32_t>(in) != 2) throw ValidationError("checkpoint: array '" + name + "' is not 2-D");
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    if (rows != m.rows() || cols != m.cols()) {
        throw ValidationError("checkpoint: array '" + name + "' has shape " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", model expects " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()));
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get<float>(in);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    auto ck = checkpoint;  // parameters() needs mutable access
    auto params = ck.model.parameters();

    nlohmann::ordered_json manifest;
    manifest["format"] = "lad-checkpoint/1";
    manifest["epoch"] = ck.epoch;
    manifest["optimizer_step"] = ck.optimizer.step;
    std::ostringstream fp;
    fp << std::hex << ck.category_fingerprint;
    manifest["category_fingerprint"] = fp.str();
    manifest["categories"] = std::vector<std::string>(kCategoryNames.begin(), kCategoryNames.end());
    manifest["model"] = to_json(ck.model.config);
    manifest["segment"] = to_json(ck.segment);
    manifest["backbone"] = to_string(ck.backbone);
    manifest["train"] = to_json(ck.train);
    const bool has_moments = ck.optimizer.first.size() == params.size();
    manifest["optimizer_moments"] = has_moments;
    auto& arrays = manifest["arrays"] = nlohmann::ordered_json::array();
    for (const auto& p : params) arrays.push_back({{"name", p.name}, {"shape", {p.value->rows(), p.value->cols()}}});

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const auto text = manifest.dump();
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) put_array(out, p.name, *p.value);
    if (has_moments) {
        for (std::size_t i = 0; i < params.size(); ++i) put_array(out, "adam.m/" + params[i].name, ck.optimizer.first[i]);
        for (std::size_t i = 0; i < params.size(); ++i) put_array(out, "adam.v/" + params[i].name, ck.optimizer.second[i]);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ValidationError(path.string() + ": not a checkpoint file");
    }
    const auto len = get<std::uint64_t>(in);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError(path.string() + ": truncated manifest");

    Checkpoint ck;
    try {
        const auto manifest = nlohmann::json::parse(text);
        ck.epoch = manifest.at("epoch").get<int>();
        ck.optimizer.step = manifest.at("optimizer_step").get<std::int64_t>();
        ck.category_fingerprint = std::stoull(manifest.at("category_fingerprint").get<std::string>(), nullptr, 16);
        ck.segment = segment_config_from_json(manifest.at("segment"));
        ck.backbone = parse_backbone(manifest.at("backbone").get<std::string>());
        ck.train = train_config_from_json(manifest.at("train"));
        ck.model = Model<float>::zeros(model_config_from_json(manifest.at("model")));
        auto params = ck.model.parameters();
        for (const auto& p : params) get_array(in, p.name, *p.value);
        if (manifest.at("optimizer_moments").get<bool>()) {
            for (const auto& p : params) get_array(in, "adam.m/" + p.name, ck.optimizer.first.emplace_back(Mat<float>::Zero(p.value->rows(), p.value->cols())));
            for (const auto& p : params) get_array(in, "adam.v/" + p.name, ck.optimizer.second.emplace_back(Mat<float>::Zero(p.value->rows(), p.value->cols())));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": bad manifest: " + e.what());
    }
    if (ck.category_fingerprint != category_fingerprint()) {
        throw ValidationError(path.string() + ": category order fingerprint does not match this build");
    }
    return ck;
}

}  // namespace lad
