#pragma once

// Little-endian encoding helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "lgvae/errors.hpp"

namespace lgvae::byteio {

class Writer {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(std::span<const std::uint8_t> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
    void str(const std::string& s) {
        u64(s.size());
        out_.insert(out_.end(), s.begin(), s.end());
    }
    const std::vector<std::uint8_t>& bytes() const noexcept { return out_; }

private:
    void put(std::uint64_t v, int n) {
        for (int b = 0; b < n; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto s = in_.subspan(at_, n);
        at_ += n;
        return s;
    }
    std::string str() {
        const auto s = raw(u64());
        return {s.begin(), s.end()};
    }
    bool done() const noexcept { return at_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (n > in_.size() - at_) throw InvalidInputError("truncated binary file");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int b = 0; b < n; ++b) v |= static_cast<std::uint64_t>(in_[at_ + b]) << (8 * b);
        at_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> in_;
    std::size_t at_ = 0;
};

/// Writes to `path.partial` and renames into place, so a failed write leaves
/// no partial file at `path`.
inline void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
    const std::string tmp = path + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::ios_base::failure("cannot open '" + path + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.close();
        if (!out) {
            std::remove(tmp.c_str());
            throw std::ios_base::failure("failed writing '" + path + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw std::ios_base::failure("cannot move '" + path + "' into place: " + ec.message());
    }
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace lgvae::byteio
