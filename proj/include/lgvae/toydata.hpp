#pragma once

// Procedural shapes dataset with five ground-truth factors: shape (square,
// ellipse, triangle), x, y, scale and rotation. The on-disk layout is
// described in docs/dataset_format.md.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lgvae/matcore.hpp"

namespace lgvae {

enum class Shape : std::uint8_t { Square = 0, Ellipse = 1, Triangle = 2 };

inline constexpr std::size_t kShapeCount = 3;
inline constexpr std::size_t kFactorCount = 5;
inline constexpr double kPositionMin = 0.15;
inline constexpr double kPositionMax = 0.85;
inline constexpr double kScaleMin = 0.3;
inline constexpr double kScaleMax = 0.7;
inline constexpr std::size_t kMinSide = 12;

struct FactorSpec {
    Shape shape = Shape::Square;
    double x = 0.5;  // fraction of image width
    double y = 0.5;
    double scale = 0.5;
    double rotation = 0.0;  // radians in [0, 2π)

    /// (shape index, x, y, scale, rotation).
    std::array<double, kFactorCount> as_array() const;
    static FactorSpec from_array(std::span<const double> values);
    bool operator==(const FactorSpec&) const = default;
};

/// Throws InvalidInputError if any factor is outside its range.
void validate_factors(const FactorSpec& spec);

/// Uniform draw over all factor ranges.
FactorSpec sample_factors(std::mt19937_64& rng);

/// Anti-aliased (4×4 supersampled) rendering, row-major, values in [0,1]
/// quantised to multiples of 1/255.
std::vector<std::uint8_t> render_sample(const FactorSpec& spec, std::size_t side);

struct Dataset {
    std::size_t side = 0;
    std::vector<std::uint8_t> pixels;  // count × side², row-major
    std::vector<FactorSpec> labels;

    std::size_t count() const noexcept { return labels.size(); }
    std::size_t pixels_per_image() const noexcept { return side * side; }
    bool operator==(const Dataset&) const = default;
};

Dataset generate_dataset(std::size_t count, std::size_t side, std::uint64_t seed);

/// Rendered images for explicit factor lists (rendering runs in parallel).
Dataset render_dataset(std::vector<FactorSpec> labels, std::size_t side);

/// Rows value/255 for the requested image indices.
DenseMatrix images_as_matrix(const Dataset& data, std::span<const std::size_t> indices);
DenseMatrix images_as_matrix(const Dataset& data);

/// Serialised bytes of the dataset file.
std::vector<std::uint8_t> serialize_dataset(const Dataset& data);
Dataset parse_dataset(std::span<const std::uint8_t> bytes);

/// Writes via a temporary file in the target directory and renames it into
/// place, so a failed write never leaves a partial file. Throws
/// std::ios_base::failure on IO errors.
void save_dataset(const Dataset& data, const std::string& path);
/// Throws std::ios_base::failure if unreadable, InvalidInputError if malformed.
Dataset load_dataset(const std::string& path);

/// 64-bit FNV-1a over the serialised bytes, as 16 lowercase hex digits.
std::string dataset_checksum(const Dataset& data);

}  // namespace lgvae
