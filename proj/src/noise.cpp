#include "torusflow/noise.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace torusflow {

namespace {

std::uint64_t splitmix(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

void require_positive_dt(double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ValidationError("noise.dt>0", "time step must be positive");
    }
}

std::uint64_t to_le(std::uint64_t v) noexcept {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
        return r;
    }
    return v;
}

void put_u64(std::ostream& os, std::uint64_t v) {
    v = to_le(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_f64(std::ostream& os, double d) {
    std::uint64_t v = 0;
    std::memcpy(&v, &d, sizeof v);
    put_u64(os, v);
}

std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw ValidationError("noise.binary", "truncated noise file");
    }
    return to_le(v);
}

}  // namespace

std::uint64_t derive_stream_key(const SeedSpec& seed) noexcept {
    std::uint64_t k = splitmix(seed.master_seed);
    k = splitmix(k ^ splitmix(seed.stream_id + 0x632BE59BD9B4E019ULL));
    k = splitmix(k ^ splitmix(seed.substream + 0x8CB92BA72F3D8DD7ULL));
    return k;
}

GaussianStream::GaussianStream(const SeedSpec& seed) {
    const std::uint64_t key = derive_stream_key(seed);
    std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    engine_.seed(seq);
}

void GaussianStream::fill_normal(std::span<double> out, double scale) {
    for (double& v : out) v = scale * normal_(engine_);
}

NoiseIncrement sample_white_noise(const GridSpec& grid, double dt, std::size_t n_steps,
                                  const SeedSpec& replica) {
    require_positive_dt(dt);
    if (n_steps < 1) throw ValidationError("noise.n_steps>=1", "need at least one step");
    NoiseIncrement out{grid, dt, n_steps, std::vector<double>(grid.n_cells() * n_steps),
                       std::vector<double>(n_steps)};
    PathNoise path(grid, dt, replica);
    for (std::size_t s = 0; s < n_steps; ++s) {
        path.next({out.dW.data() + s * grid.n_cells(), grid.n_cells()}, out.dB[s]);
    }
    return out;
}

std::vector<double> sample_bm(double dt, std::size_t n_steps, const SeedSpec& seed) {
    require_positive_dt(dt);
    std::vector<double> out(n_steps);
    GaussianStream stream(seed);
    stream.fill_normal(out, std::sqrt(dt));
    return out;
}

PathNoise::PathNoise(const GridSpec& grid, double dt, const SeedSpec& replica,
                     std::size_t refinement)
    : n_(grid.n_cells()),
      refinement_(refinement),
      w_scale_(0.0),
      b_scale_(0.0),
      w_(replica.with_substream(Substream::white_noise)),
      b_(replica.with_substream(Substream::brownian)) {
    require_positive_dt(dt);
    if (refinement < 1) throw ValidationError("noise.refinement>=1", "refinement must be >= 1");
    const double sub = dt / static_cast<double>(refinement);
    w_scale_ = std::sqrt(sub * grid.spacing());
    b_scale_ = std::sqrt(sub);
}

void PathNoise::next(std::span<double> dW, double& dB) {
    if (refinement_ == 1) {
        w_.fill_normal(dW, w_scale_);
        dB = b_scale_ * b_.normal();
        return;
    }
    for (double& v : dW) v = 0.0;
    dB = 0.0;
    for (std::size_t r = 0; r < refinement_; ++r) {
        for (double& v : dW) v += w_scale_ * w_.normal();
        dB += b_scale_ * b_.normal();
    }
}

void PathNoise::skip(std::size_t steps) {
    std::vector<double> scratch(n_);
    double db = 0.0;
    for (std::size_t s = 0; s < steps; ++s) next(scratch, db);
}

void write_noise_binary(std::ostream& os, const NoiseIncrement& noise, Substream which) {
    const std::size_t n = noise.grid.n_cells();
    const bool field = which == Substream::white_noise;
    if (!field && which != Substream::brownian) {
        throw ValidationError("noise.binary", "only white_noise and brownian can be dumped");
    }
    put_u64(os, kNoiseMagic);
    put_u64(os, field ? n : 1);
    put_u64(os, noise.n_steps);
    put_u64(os, static_cast<std::uint64_t>(which));
    if (field) {
        for (std::size_t c = 0; c < n; ++c)
            for (std::size_t s = 0; s < noise.n_steps; ++s) put_f64(os, noise.dW_at(c, s));
    } else {
        for (double v : noise.dB) put_f64(os, v);
    }
}

NoiseMatrix read_noise_binary(std::istream& is) {
    NoiseMatrix m;
    if (get_u64(is) != kNoiseMagic) throw ValidationError("noise.binary", "bad magic number");
    m.n_cells = get_u64(is);
    m.n_steps = get_u64(is);
    m.substream = get_u64(is);
    m.values.resize(m.n_cells * m.n_steps);
    for (double& v : m.values) {
        const std::uint64_t bits = get_u64(is);
        std::memcpy(&v, &bits, sizeof v);
    }
    return m;
}

}  // namespace torusflow
