#include "revgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "revgan/types.hpp"

namespace revgan {

namespace {

constexpr char magic[8] = {'R', 'V', 'G', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

}  // namespace

void Checkpoint::put(const std::string& name, const Matrix& m) { tensors_[name] = m; }

const Matrix& Checkpoint::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw InputError("checkpoint: missing tensor '" + name + "'");
    return it->second;
}

const Matrix& Checkpoint::get(const std::string& name, std::size_t rows, std::size_t cols) const {
    const Matrix& m = get(name);
    if (m.rows() != rows || m.cols() != cols) {
        throw InputError("checkpoint: tensor '" + name + "' has shape " + m.shape_string() + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
    return m;
}

void Checkpoint::restore(Parameter& p) const {
    p.value = get(p.name, p.value.rows(), p.value.cols());
    p.zero_grad();
}

void Checkpoint::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["meta"] = meta;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, m] : tensors_) {
        header["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    }
    const std::string text = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write checkpoint " + path.string());
    f.write(magic, sizeof(magic));
    const std::uint64_t len = text.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : tensors_) {
        f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!f) throw InputError("write failure on checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw PrerequisiteError("missing checkpoint " + path.string());
    char m[8];
    f.read(m, sizeof(m));
    if (!f || std::memcmp(m, magic, sizeof(magic)) != 0) {
        throw InputError("not a checkpoint file: " + path.string());
    }
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!f || len > (1ULL << 32)) throw InputError("corrupt checkpoint header: " + path.string());
    std::string text(len, '\0');
    f.read(text.data(), static_cast<std::streamsize>(len));
    if (!f) throw InputError("truncated checkpoint header: " + path.string());

    Checkpoint ck;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
        ck.meta = header.at("meta");
        for (const auto& t : header.at("tensors")) {
            const auto rows = t.at("rows").get<std::size_t>();
            const auto cols = t.at("cols").get<std::size_t>();
            Matrix mat(rows, cols);
            f.read(reinterpret_cast<char*>(mat.data()), static_cast<std::streamsize>(mat.size() * sizeof(double)));
            if (!f) throw InputError("truncated checkpoint data: " + path.string());
            ck.tensors_[t.at("name").get<std::string>()] = std::move(mat);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    if (f.peek() != std::char_traits<char>::eof()) {
        throw InputError("trailing bytes in checkpoint " + path.string());
    }
    return ck;
}

}  // namespace revgan
