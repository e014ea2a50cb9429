#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>

#include "ufps/labelmap.hpp"
#include "ufps/model.hpp"

namespace ufps {

// Unified class space of the synthetic benchmark.
// 0 = background, 1 = kidney, 2 = spleen, 3 = pancreas, 4 = liver.
inline constexpr int kNumForegroundClasses = 4;
inline constexpr ClassId kKidney = 1;
inline constexpr ClassId kSpleen = 2;
inline constexpr ClassId kPancreas = 3;
inline constexpr ClassId kLiver = 4;

struct Sample {
    PixelGrid image;
    LabelMap labels;
};

struct ClientDataset {
    std::vector<Sample> samples;   // ordered train | val | test
    ClassSet annotated_classes;
    int client_id = 0;
    std::uint64_t rng_seed = 0;
    int n_train = 0;
    int n_val = 0;

    int n_test() const { return static_cast<int>(samples.size()) - n_train - n_val; }
};

struct ClientSpec {
    int client_id = 0;
    ClassSet annotated_classes;
    double intensity_offset = 0.0;  // client-specific domain shift
    double noise_sigma = 0.05;
    int width = 64;
    int height = 64;
};

// Intensity-domain strong augmentation; stands in for an external
// augmentation network. Label-preserving by construction.
struct AugmentParams {
    double gamma_min = 0.6;
    double gamma_max = 1.6;
    double noise_sigma = 0.06;
    double bias_amplitude = 0.25;
    double blend_min = 0.2;
    double blend_max = 0.8;
};

namespace detail {

inline double class_base_intensity(ClassId c) {
    switch (c) {
        case kKidney: return -0.20;
        case kSpleen: return 0.10;
        case kPancreas: return 0.35;
        case kLiver: return 0.65;
        default: return -0.60;
    }
}

// Each organ lives in its own quadrant so per-class pixel counts are
// independent of draw order.
struct Quadrant {
    int x0, y0, size;
};

inline Quadrant class_quadrant(ClassId c, int width, int height) {
    const int qw = width / 2;
    const int qh = height / 2;
    const int q = std::min(qw, qh);
    switch (c) {
        case kKidney: return {0, 0, q};
        case kSpleen: return {qw, 0, q};
        case kPancreas: return {0, qh, q};
        case kLiver: return {qw, qh, q};
        default: return {0, 0, q};
    }
}

inline void draw_disk(LabelMap& lab, double cx, double cy, double r, ClassId c) {
    for (int y = 0; y < lab.height; ++y)
        for (int x = 0; x < lab.width; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) lab.at(x, y) = c;
        }
}

inline void draw_ellipse(LabelMap& lab, double cx, double cy, double a, double b,
                         ClassId c) {
    for (int y = 0; y < lab.height; ++y)
        for (int x = 0; x < lab.width; ++x) {
            const double dx = (x - cx) / a, dy = (y - cy) / b;
            if (dx * dx + dy * dy <= 1.0) lab.at(x, y) = c;
        }
}

inline void draw_ring(LabelMap& lab, double cx, double cy, double r_out, double r_in,
                      ClassId c) {
    for (int y = 0; y < lab.height; ++y)
        for (int x = 0; x < lab.width; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double d2 = dx * dx + dy * dy;
            if (d2 <= r_out * r_out && d2 >= r_in * r_in) lab.at(x, y) = c;
        }
}

inline void draw_blob(LabelMap& lab, double cx, double cy, double r, double phi1,
                      double phi2, ClassId c) {
    for (int y = 0; y < lab.height; ++y)
        for (int x = 0; x < lab.width; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double d = std::sqrt(dx * dx + dy * dy);
            const double theta = std::atan2(dy, dx);
            const double rim =
                r * (1.0 + 0.3 * std::sin(3.0 * theta + phi1) + 0.2 * std::sin(5.0 * theta + phi2));
            if (d <= rim) lab.at(x, y) = c;
        }
}

}  // namespace detail

// Loose per-class pixel-count bounds implied by the generator geometry,
// for a square quadrant of side q.
inline std::pair<double, double> class_area_bounds(ClassId c, int quadrant_size) {
    const double q = quadrant_size;
    const double pi = 3.14159265358979323846;
    switch (c) {
        case kLiver: {  // disk, radius in [0.25, 0.35]*q
            const double r0 = 0.25 * q, r1 = 0.35 * q;
            return {0.85 * pi * r0 * r0, 1.15 * pi * r1 * r1};
        }
        case kKidney: {  // two ellipses, a in [5,7]*sc, b in [3.5,4.5]*sc, possibly overlapping
            const double sc = q / 32.0;
            return {0.6 * pi * 5.0 * 3.5 * sc * sc,
                    2.0 * 1.3 * pi * 7.0 * 4.5 * sc * sc};
        }
        case kSpleen: {  // ring, outer in [7,10]*sc, inner ratio in [0.45,0.6]
            const double sc = q / 32.0;
            const double lo = 0.7 * pi * 7.0 * 7.0 * (1.0 - 0.6 * 0.6) * sc * sc;
            const double hi = 1.3 * pi * 10.0 * 10.0 * (1.0 - 0.45 * 0.45) * sc * sc;
            return {lo, hi};
        }
        case kPancreas: {  // blob, base radius in [4,6]*sc, rim factor in [0.5, 1.5]
            const double sc = q / 32.0;
            return {0.3 * pi * 4.0 * 4.0 * sc * sc, 2.2 * pi * 6.0 * 6.0 * sc * sc};
        }
        default: return {0.0, 1e18};
    }
}

// One synthetic sample: full ground-truth labels plus intensities
// base(class) + client offset + Gaussian noise.
inline Sample generate_sample(const ClientSpec& spec, Rng& rng) {
    if (spec.width < 32 || spec.height < 32)
        throw ConfigError("generate_sample: grid too small for the shape families");

    Sample s;
    s.labels = LabelMap(spec.width, spec.height, 0, Provenance::ground_truth);

    for (ClassId c : {kKidney, kSpleen, kPancreas, kLiver}) {
        const auto quad = detail::class_quadrant(c, spec.width, spec.height);
        const double q = quad.size;
        const double sc = q / 32.0;  // shape sizes scale with the quadrant
        const double cx0 = quad.x0 + q / 2.0, cy0 = quad.y0 + q / 2.0;
        auto jitter_in = [&](double margin) {
            const double j = std::max(q / 2.0 - margin - 1.0, 0.0);
            return rng.uniform(-j, j);
        };
        switch (c) {
            case kLiver: {
                const double r = rng.uniform(0.25, 0.35) * q;
                detail::draw_disk(s.labels, cx0 + jitter_in(r), cy0 + jitter_in(r), r, c);
                break;
            }
            case kKidney: {
                const double a = rng.uniform(5.0, 7.0) * sc, b = rng.uniform(3.5, 4.5) * sc;
                const double gap = rng.uniform(10.0, 12.0) * sc;
                const double extent = gap / 2.0 + a;
                const double cx = cx0 + jitter_in(extent);
                const double cy = cy0 + jitter_in(b);
                detail::draw_ellipse(s.labels, cx - gap / 2.0, cy, a, b, c);
                detail::draw_ellipse(s.labels, cx + gap / 2.0, cy, a, b, c);
                break;
            }
            case kSpleen: {
                const double r_out = rng.uniform(7.0, 10.0) * sc;
                const double r_in = r_out * rng.uniform(0.45, 0.6);
                detail::draw_ring(s.labels, cx0 + jitter_in(r_out), cy0 + jitter_in(r_out),
                                  r_out, r_in, c);
                break;
            }
            case kPancreas: {
                const double r = rng.uniform(4.0, 6.0) * sc;
                detail::draw_blob(s.labels, cx0 + jitter_in(1.5 * r), cy0 + jitter_in(1.5 * r),
                                  r, rng.uniform(0.0, 6.28), rng.uniform(0.0, 6.28), c);
                break;
            }
            default: break;
        }
    }

    s.image.width = spec.width;
    s.image.height = spec.height;
    s.image.intensity.resize(s.labels.pixels());
    for (std::size_t p = 0; p < s.labels.pixels(); ++p) {
        double v = detail::class_base_intensity(s.labels.classes[p]) + spec.intensity_offset +
                   spec.noise_sigma * rng.normal();
        s.image.intensity[p] = std::clamp(v, -1.0, 1.0);
    }
    return s;
}

// Withholds annotations for classes outside C_i: provenance -> unknown,
// underlying class values untouched (un-masking recovers the full map).
inline void mask_partial_annotations(LabelMap& labels, const ClassSet& annotated) {
    for (std::size_t p = 0; p < labels.pixels(); ++p) {
        const ClassId c = labels.classes[p];
        if (c != 0 && !annotated.count(c)) labels.provenance[p] = Provenance::unknown;
    }
}

inline ClientDataset generate_client(const ClientSpec& spec, int n_samples,
                                     std::uint64_t seed) {
    if (n_samples < 1) throw ConfigError("generate_client: n_samples must be >= 1");
    ClientDataset ds;
    ds.client_id = spec.client_id;
    ds.annotated_classes = spec.annotated_classes;
    ds.rng_seed = seed;
    Rng rng(seed);
    ds.samples.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        Sample s = generate_sample(spec, rng);
        mask_partial_annotations(s.labels, spec.annotated_classes);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

namespace detail {

// monotone gamma remap over [-1, 1]
inline double gamma_remap(double v, double gamma) {
    const double u = (v + 1.0) / 2.0;
    return std::pow(u, gamma) * 2.0 - 1.0;
}

}  // namespace detail

// In order: monotone gamma remap, smooth low-frequency bias field, additive
// noise, convex blend with a second seeded remap; clipped to [-1, 1].
// Stages with identity parameters are skipped so identity params yield the
// input bit-exactly.
inline PixelGrid strong_augment(const PixelGrid& grid, const AugmentParams& params,
                                std::uint64_t seed) {
    Rng rng(seed);
    PixelGrid out = grid;

    const double gamma = rng.uniform(params.gamma_min, params.gamma_max);
    const double gamma2 = rng.uniform(params.gamma_min, params.gamma_max);
    const double blend = rng.uniform(params.blend_min, params.blend_max);
    const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
    const double phx = rng.uniform(0.0, 6.28), phy = rng.uniform(0.0, 6.28);

    bool touched = false;
    if (gamma != 1.0) {
        for (auto& v : out.intensity) v = detail::gamma_remap(v, gamma);
        touched = true;
    }
    if (params.bias_amplitude != 0.0) {
        const double pi = 3.14159265358979323846;
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                const double bias = params.bias_amplitude *
                                    std::sin(2.0 * pi * fx * x / out.width + phx) *
                                    std::sin(2.0 * pi * fy * y / out.height + phy);
                out.at(x, y) += bias;
            }
        touched = true;
    }
    if (params.noise_sigma != 0.0) {
        for (auto& v : out.intensity) v += params.noise_sigma * rng.normal();
        touched = true;
    }
    if (blend != 0.0) {
        for (std::size_t p = 0; p < out.intensity.size(); ++p) {
            const double alt = detail::gamma_remap(grid.intensity[p], gamma2);
            out.intensity[p] = (1.0 - blend) * out.intensity[p] + blend * alt;
        }
        touched = true;
    }
    if (touched)
        for (auto& v : out.intensity) v = std::clamp(v, -1.0, 1.0);
    return out;
}

struct Benchmark {
    std::vector<ClientDataset> clients;  // 3 in-FL clients with disjoint classes
    ClientDataset heldout;               // fully annotated out-FL client
};

inline constexpr int kDefaultTrainSamples = 40;
inline constexpr int kDefaultValSamples = 8;
inline constexpr int kDefaultTestSamples = 16;

// Client 1 annotates {kidney}, client 2 {spleen, pancreas}, client 3 {liver};
// the held-out client annotates all four. Each client gets its own
// intensity-shift regime.
inline Benchmark default_benchmark(std::uint64_t seed, int grid_size = 64) {
    const int total = kDefaultTrainSamples + kDefaultValSamples + kDefaultTestSamples;
    const ClassSet all = {kKidney, kSpleen, kPancreas, kLiver};
    const std::vector<ClassSet> annot = {{kKidney}, {kSpleen, kPancreas}, {kLiver}};
    const std::vector<double> shifts = {-0.12, 0.0, 0.12};

    Benchmark b;
    for (int i = 0; i < 3; ++i) {
        ClientSpec spec;
        spec.client_id = i + 1;
        spec.annotated_classes = annot[i];
        spec.intensity_offset = shifts[i];
        spec.width = spec.height = grid_size;
        ClientDataset ds = generate_client(spec, total, seed + 1000 * (i + 1));
        ds.n_train = kDefaultTrainSamples;
        ds.n_val = kDefaultValSamples;
        b.clients.push_back(std::move(ds));
    }
    ClientSpec spec;
    spec.client_id = 4;
    spec.annotated_classes = all;
    spec.intensity_offset = 0.06;
    spec.width = spec.height = grid_size;
    b.heldout = generate_client(spec, total, seed + 4000);
    b.heldout.n_train = kDefaultTrainSamples;
    b.heldout.n_val = kDefaultValSamples;
    return b;
}

// Flat binary dump: header (magic "UFPS", version, width, height, n_samples,
// N_c as little-endian u32), then per sample row-major intensities as f32 and
// labels as u8. The label byte packs class id in the low 6 bits and the
// provenance flag in the high 2 bits.
inline void dump_dataset(const ClientDataset& ds, std::ostream& os) {
    auto put_u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    os.write("UFPS", 4);
    put_u32(1);
    const int w = ds.samples.empty() ? 0 : ds.samples[0].image.width;
    const int h = ds.samples.empty() ? 0 : ds.samples[0].image.height;
    put_u32(static_cast<std::uint32_t>(w));
    put_u32(static_cast<std::uint32_t>(h));
    put_u32(static_cast<std::uint32_t>(ds.samples.size()));
    put_u32(kNumForegroundClasses);
    for (const auto& s : ds.samples) {
        for (double v : s.image.intensity) {
            float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(bits);
        }
        for (std::size_t p = 0; p < s.labels.pixels(); ++p) {
            const unsigned char byte = static_cast<unsigned char>(
                (s.labels.classes[p] & 0x3f) |
                (static_cast<int>(s.labels.provenance[p]) << 6));
            os.put(static_cast<char>(byte));
        }
    }
}

inline ClientDataset load_dataset(std::istream& is) {
    auto get_u32 = [&]() {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "UFPS", 4) != 0)
        throw ConfigError("load_dataset: bad magic");
    const std::uint32_t version = get_u32();
    if (version != 1) throw ConfigError("load_dataset: unsupported version");
    const int w = static_cast<int>(get_u32());
    const int h = static_cast<int>(get_u32());
    const std::uint32_t n = get_u32();
    get_u32();  // n_classes

    ClientDataset ds;
    for (std::uint32_t i = 0; i < n; ++i) {
        Sample s;
        s.image.width = w;
        s.image.height = h;
        s.image.intensity.resize(static_cast<std::size_t>(w) * h);
        for (auto& v : s.image.intensity) {
            const std::uint32_t bits = get_u32();
            float f;
            std::memcpy(&f, &bits, 4);
            v = f;
        }
        s.labels = LabelMap(w, h);
        for (std::size_t p = 0; p < s.labels.pixels(); ++p) {
            const int byte = static_cast<unsigned char>(is.get());
            s.labels.classes[p] = byte & 0x3f;
            s.labels.provenance[p] = static_cast<Provenance>((byte >> 6) & 0x3);
        }
        ds.samples.push_back(std::move(s));
    }
    if (!is) throw ConfigError("load_dataset: truncated file");
    return ds;
}

}  // namespace ufps
