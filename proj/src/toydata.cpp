#include "lgvae/toydata.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "byteio.hpp"
#include "lgvae/errors.hpp"

namespace lgvae {

namespace {

constexpr char kMagic[4] = {'L', 'G', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;
constexpr int kSupersample = 4;
// Circumradius as a fraction of the image side at scale 1. With scale ≤ 0.7
// the radius stays below the 0.15 margin left by the position range.
constexpr double kRadiusPerScale = 0.2;
constexpr double kEllipseAspect = 0.6;

bool inside(Shape shape, double u, double v, double radius) {
    switch (shape) {
        case Shape::Square: {
            const double half = radius / std::numbers::sqrt2;
            return std::abs(u) <= half && std::abs(v) <= half;
        }
        case Shape::Ellipse: {
            const double a = u / radius;
            const double b = v / (kEllipseAspect * radius);
            return a * a + b * b <= 1.0;
        }
        case Shape::Triangle: {
            // Equilateral with circumradius r: each edge lies at distance r/2
            // along its outward normal (normals at −90°, 30°, 150°).
            for (int k = 0; k < 3; ++k) {
                const double angle = -std::numbers::pi / 2.0 + k * 2.0 * std::numbers::pi / 3.0;
                if (u * std::cos(angle) + v * std::sin(angle) > radius / 2.0) return false;
            }
            return true;
        }
    }
    return false;
}

}  // namespace

std::array<double, kFactorCount> FactorSpec::as_array() const {
    return {static_cast<double>(shape), x, y, scale, rotation};
}

FactorSpec FactorSpec::from_array(std::span<const double> v) {
    if (v.size() != kFactorCount) throw DimensionError("FactorSpec: expected 5 factor values");
    const double s = v[0];
    if (!(s == 0.0 || s == 1.0 || s == 2.0)) throw InvalidInputError("FactorSpec: shape index must be 0, 1 or 2");
    FactorSpec spec{static_cast<Shape>(static_cast<int>(s)), v[1], v[2], v[3], v[4]};
    validate_factors(spec);
    return spec;
}

void validate_factors(const FactorSpec& spec) {
    auto in_range = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    if (static_cast<std::size_t>(spec.shape) >= kShapeCount) throw InvalidInputError("unknown shape");
    if (!in_range(spec.x, kPositionMin, kPositionMax) || !in_range(spec.y, kPositionMin, kPositionMax))
        throw InvalidInputError("position outside [0.15, 0.85]");
    if (!in_range(spec.scale, kScaleMin, kScaleMax)) throw InvalidInputError("scale outside [0.3, 0.7]");
    if (!(spec.rotation >= 0.0 && spec.rotation < 2.0 * std::numbers::pi))
        throw InvalidInputError("rotation outside [0, 2π)");
}

FactorSpec sample_factors(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> shape(0, static_cast<int>(kShapeCount) - 1);
    std::uniform_real_distribution<double> position(kPositionMin, kPositionMax);
    std::uniform_real_distribution<double> scale(kScaleMin, kScaleMax);
    std::uniform_real_distribution<double> rotation(0.0, 2.0 * std::numbers::pi);
    FactorSpec spec;
    spec.shape = static_cast<Shape>(shape(rng));
    spec.x = position(rng);
    spec.y = position(rng);
    spec.scale = scale(rng);
    spec.rotation = rotation(rng);
    return spec;
}

std::vector<std::uint8_t> render_sample(const FactorSpec& spec, std::size_t side) {
    if (side < kMinSide) throw InvalidInputError("render_sample: side must be >= 12");
    validate_factors(spec);
    const double w = static_cast<double>(side);
    const double cx = spec.x * w;
    const double cy = spec.y * w;
    const double radius = spec.scale * kRadiusPerScale * w;
    const double c = std::cos(spec.rotation);
    const double s = std::sin(spec.rotation);
    constexpr int total = kSupersample * kSupersample;

    std::vector<std::uint8_t> image(side * side);
    for (std::size_t row = 0; row < side; ++row) {
        for (std::size_t col = 0; col < side; ++col) {
            int hits = 0;
            for (int a = 0; a < kSupersample; ++a) {
                for (int b = 0; b < kSupersample; ++b) {
                    const double px = static_cast<double>(col) + (b + 0.5) / kSupersample - cx;
                    const double py = static_cast<double>(row) + (a + 0.5) / kSupersample - cy;
                    // rotate the sample point into the shape's frame
                    const double u = c * px + s * py;
                    const double v = -s * px + c * py;
                    if (inside(spec.shape, u, v, radius)) ++hits;
                }
            }
            image[row * side + col] = static_cast<std::uint8_t>(std::lround(255.0 * hits / total));
        }
    }
    return image;
}

Dataset render_dataset(std::vector<FactorSpec> labels, std::size_t side) {
    if (side < kMinSide) throw InvalidInputError("render_dataset: side must be >= 12");
    for (const auto& spec : labels) validate_factors(spec);
    Dataset data;
    data.side = side;
    data.labels = std::move(labels);
    data.pixels.resize(data.count() * side * side);
    const long count = static_cast<long>(data.count());
#pragma omp parallel for schedule(static)
    for (long k = 0; k < count; ++k) {
        const auto image = render_sample(data.labels[k], side);
        std::copy(image.begin(), image.end(), data.pixels.begin() + k * static_cast<long>(side * side));
    }
    return data;
}

Dataset generate_dataset(std::size_t count, std::size_t side, std::uint64_t seed) {
    if (count == 0) throw InvalidInputError("generate_dataset: count must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<FactorSpec> labels(count);
    for (auto& spec : labels) spec = sample_factors(rng);
    return render_dataset(std::move(labels), side);
}

DenseMatrix images_as_matrix(const Dataset& data, std::span<const std::size_t> indices) {
    const std::size_t p = data.pixels_per_image();
    DenseMatrix out(indices.size(), p);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= data.count()) throw InvalidInputError("images_as_matrix: index out of range");
        const std::uint8_t* src = data.pixels.data() + indices[r] * p;
        for (std::size_t c = 0; c < p; ++c) out(r, c) = src[c] / 255.0;
    }
    return out;
}

DenseMatrix images_as_matrix(const Dataset& data) {
    std::vector<std::size_t> all(data.count());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    return images_as_matrix(data, all);
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& data) {
    if (data.pixels.size() != data.count() * data.pixels_per_image())
        throw DimensionError("serialize_dataset: pixel buffer does not match count and side");
    byteio::Writer w;
    w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(data.count()));
    w.u32(static_cast<std::uint32_t>(data.side));
    w.raw(data.pixels);
    for (const auto& spec : data.labels)
        for (double v : spec.as_array()) w.f64(v);
    return w.bytes();
}

Dataset parse_dataset(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw InvalidInputError("dataset: bad magic");
    byteio::Reader r(bytes);
    r.raw(4);
    if (r.u32() != kVersion) throw InvalidInputError("dataset: unsupported version");
    const std::size_t count = r.u32();
    const std::size_t side = r.u32();
    const std::size_t pixel_bytes = count * side * side;
    if (bytes.size() != kHeaderBytes + pixel_bytes + count * kFactorCount * 8)
        throw InvalidInputError("dataset: file size does not match header");
    Dataset data;
    data.side = side;
    const auto pixels = r.raw(pixel_bytes);
    data.pixels.assign(pixels.begin(), pixels.end());
    data.labels.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::array<double, kFactorCount> v{};
        for (double& x : v) x = r.f64();
        data.labels.push_back(FactorSpec::from_array(v));
    }
    return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
    byteio::write_file_atomic(path, serialize_dataset(data));
}

Dataset load_dataset(const std::string& path) { return parse_dataset(byteio::read_file(path)); }

std::string dataset_checksum(const Dataset& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : serialize_dataset(data)) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace lgvae
