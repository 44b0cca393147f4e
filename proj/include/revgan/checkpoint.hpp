#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "revgan/autograd.hpp"
#include "revgan/tensor.hpp"

namespace revgan {

/// Parameter container shared by all trained stages.
///
/// Layout: the 8 bytes "RVGCKPT1", a little-endian u64 header length, a JSON
/// header {"meta": ..., "tensors": [{"name", "rows", "cols"}, ...]}, then each
/// tensor's doubles (little-endian) in header order. Tensor names are
/// namespaced by stage, e.g. "sentence.dec.W_z".
class Checkpoint {
public:
    nlohmann::json meta = nlohmann::json::object();

    void put(const Parameter& p) { put(p.name, p.value); }
    void put(const std::string& name, const Matrix& m);
    bool has(const std::string& name) const { return tensors_.count(name) > 0; }
    /// Throws InputError if missing or shaped differently.
    const Matrix& get(const std::string& name, std::size_t rows, std::size_t cols) const;
    const Matrix& get(const std::string& name) const;
    /// Copies a stored tensor into `p.value` after checking its shape.
    void restore(Parameter& p) const;

    const std::map<std::string, Matrix>& tensors() const { return tensors_; }

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    std::map<std::string, Matrix> tensors_;
};

}  // namespace revgan
