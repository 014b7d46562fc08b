#include "vecfont/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace vecfont {

namespace {
constexpr char kMagic[8] = {'V', 'F', 'T', 'N', 'S', 'R', '1', '\0'};
}

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& named) {
    nlohmann::json header;
    header["tensors"] = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : named) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset"] = offset;
        header["tensors"].push_back(std::move(e));
        offset += static_cast<uint64_t>(t.numel()) * sizeof(double);
    }
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(kMagic, 8);
    uint64_t len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : named)
        f.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!f) throw IoError("write failed: " + path);
}

std::map<std::string, Tensor> load_tensors(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not a tensor container: " + path);
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    if (!f) throw IoError("truncated header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad container header: ") + e.what());
    }
    const std::streampos data_start = f.tellg();
    std::map<std::string, Tensor> out;
    for (const auto& e : header.at("tensors")) {
        const auto name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<Shape>();
        const auto offset = e.at("offset").get<uint64_t>();
        std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
        f.seekg(data_start + static_cast<std::streamoff>(offset));
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!f) throw IoError("truncated tensor '" + name + "' in " + path);
        out.emplace(name, Tensor::from(shape, std::move(data)));
    }
    return out;
}

}  // namespace vecfont
