#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "torusflow/grid.hpp"

namespace torusflow {

enum class Substream : std::uint64_t { white_noise = 0, brownian = 1, auxiliary = 2 };

/// Identifies one reproducible random stream. Streams are derived by hashing
/// the triple, so replicas can be generated in any order.
struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t substream = 0;

    SeedSpec with_substream(Substream s) const noexcept {
        return {master_seed, stream_id, static_cast<std::uint64_t>(s)};
    }
    SeedSpec with_substream(std::uint64_t s) const noexcept { return {master_seed, stream_id, s}; }
    SeedSpec with_stream(std::uint64_t id) const noexcept { return {master_seed, id, substream}; }

    bool operator==(const SeedSpec&) const = default;
};

std::uint64_t derive_stream_key(const SeedSpec& seed) noexcept;

/// Sequential standard-normal (and uniform) draws from one derived stream.
class GaussianStream {
public:
    explicit GaussianStream(const SeedSpec& seed);

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    void fill_normal(std::span<double> out, double scale);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Integrated white-noise increments over cell-step boxes plus the scalar BM.
struct NoiseIncrement {
    GridSpec grid;
    double dt;
    std::size_t n_steps;
    std::vector<double> dW;  // step-major: dW[step * n_cells + cell]
    std::vector<double> dB;  // one entry per step

    double dW_at(std::size_t cell, std::size_t step) const noexcept {
        return dW[step * grid.n_cells() + cell];
    }
    std::span<const double> dW_step(std::size_t step) const noexcept {
        return {dW.data() + step * grid.n_cells(), grid.n_cells()};
    }
};

/// dW entries ~ N(0, dt * spacing) from the white_noise substream of `replica`,
/// dB entries ~ N(0, dt) from its brownian substream. `replica.substream` is ignored.
NoiseIncrement sample_white_noise(const GridSpec& grid, double dt, std::size_t n_steps,
                                  const SeedSpec& replica);

/// N(0, dt) increments from exactly the stream named by `seed`.
std::vector<double> sample_bm(double dt, std::size_t n_steps, const SeedSpec& seed);

/// Step-by-step generator producing the same values as sample_white_noise.
/// With `refinement` r > 1 each step sums r substeps of length dt / r, so a
/// coarse path is the exact aggregate of the finer one drawn from the same seed.
class PathNoise {
public:
    PathNoise(const GridSpec& grid, double dt, const SeedSpec& replica, std::size_t refinement = 1);

    /// Writes the integrated increments of the next step.
    void next(std::span<double> dW, double& dB);
    /// Discards `steps` steps.
    void skip(std::size_t steps);

private:
    std::size_t n_;
    std::size_t refinement_;
    double w_scale_;
    double b_scale_;
    GaussianStream w_;
    GaussianStream b_;
};

/// Little-endian binary dump: int64 header (magic, n_cells, n_steps, substream)
/// followed by float64 entries, row-major (n_cells x n_steps).
struct NoiseMatrix {
    std::uint64_t n_cells = 0;
    std::uint64_t n_steps = 0;
    std::uint64_t substream = 0;
    std::vector<double> values;  // row-major (cell, step)
};

inline constexpr std::uint64_t kNoiseMagic = 0x314E5754;  // "TWN1"

void write_noise_binary(std::ostream& os, const NoiseIncrement& noise, Substream which);
NoiseMatrix read_noise_binary(std::istream& is);

}  // namespace torusflow
