#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ufps/model.hpp"

using namespace ufps;

namespace {

PixelGrid make_grid(int w, int h, double fill) {
    PixelGrid g;
    g.width = w;
    g.height = h;
    g.intensity.assign(static_cast<std::size_t>(w) * h, fill);
    return g;
}

PixelGrid random_grid(int w, int h, Rng& rng) {
    PixelGrid g = make_grid(w, h, 0.0);
    for (auto& v : g.intensity) v = rng.uniform(-1.0, 1.0);
    return g;
}

ProbMap random_upstream(int w, int h, int channels, Rng& rng) {
    ProbMap u;
    u.width = w;
    u.height = h;
    u.n_channels = channels;
    u.values.resize(static_cast<std::size_t>(w) * h * channels);
    for (auto& v : u.values) v = rng.uniform(-1.0, 1.0);
    return u;
}

// scalar objective L(params) = sum_pixels sum_channels upstream * prob
double weighted_prob_sum(const ParamVector& params, const PixelGrid& grid,
                         const ProbMap& upstream) {
    const ProbMap probs = forward(params, grid);
    double s = 0.0;
    for (std::size_t i = 0; i < probs.values.size(); ++i)
        s += upstream.values[i] * probs.values[i];
    return s;
}

// central finite differences on every parameter
std::vector<double> fd_gradient(const ParamVector& params, const PixelGrid& grid,
                                const ProbMap& upstream, double step) {
    std::vector<double> g(params.size());
    ParamVector p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p.values[i];
        p.values[i] = saved + step;
        const double hi = weighted_prob_sum(p, grid, upstream);
        p.values[i] = saved - step;
        const double lo = weighted_prob_sum(p, grid, upstream);
        p.values[i] = saved;
        g[i] = (hi - lo) / (2.0 * step);
    }
    return g;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("extract_features on a constant field") {
    PixelGrid g = make_grid(5, 5, 0.5);
    const auto f = extract_features(g, 2, 2);
    for (double v : f) CHECK(v == 0.5);
}

TEST_CASE("extract_features replicates edges on a 2x2 grid") {
    PixelGrid g = make_grid(2, 2, 0.0);
    g.at(0, 0) = 1.0;
    g.at(1, 0) = 2.0;
    g.at(0, 1) = 3.0;
    g.at(1, 1) = 4.0;
    // corner (0,0): neighbors clamp to row/col 0
    const auto f = extract_features(g, 0, 0);
    const double expect[9] = {1, 1, 2, 1, 1, 2, 3, 3, 4};
    for (int i = 0; i < 9; ++i) CHECK(f[i] == expect[i]);
}

TEST_CASE("extract_features reads the row-major neighborhood of a ramp") {
    PixelGrid g = make_grid(4, 4, 0.0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) g.at(x, y) = y * 4 + x;
    const auto f = extract_features(g, 2, 2);
    const double expect[9] = {5, 6, 7, 9, 10, 11, 13, 14, 15};
    for (int i = 0; i < 9; ++i) CHECK(f[i] == expect[i]);
}

TEST_CASE("zero parameters give a uniform probability map") {
    ModelLayout layout;
    ParamVector params(layout);
    PixelGrid g = make_grid(8, 8, 0.3);
    const ProbMap probs = forward(params, g);
    for (double v : probs.values) CHECK(v == doctest::Approx(1.0 / layout.n_channels));
}

TEST_CASE("head bias dominates with zero weights") {
    ModelLayout layout;
    ParamVector params(layout);
    const IndexRange head = params.part_view(ModelPart::head);
    // bias block sits after the weight block inside the head span
    const std::size_t bias_offset = head.begin + static_cast<std::size_t>(layout.hidden2) * layout.n_channels;
    params.values[bias_offset + 2] = 10.0;
    PixelGrid g = make_grid(8, 8, -0.2);
    const ProbMap probs = forward(params, g);
    const double expect = std::exp(10.0) / (std::exp(10.0) + layout.n_channels - 1);
    for (std::size_t p = 0; p < probs.pixels(); ++p)
        CHECK(probs.pixel(p)[2] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one for random parameters") {
    Rng rng(77);
    ModelLayout layout;
    for (int trial = 0; trial < 1000; ++trial) {
        ParamVector params = init_params(layout, rng);
        PixelGrid g = random_grid(4, 4, rng);
        const ProbMap probs = forward(params, g);
        for (std::size_t p = 0; p < probs.pixels(); ++p) {
            double s = 0.0;
            for (double v : probs.pixel(p)) {
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("backward of a zero upstream is zero") {
    Rng rng(3);
    ModelLayout layout;
    ParamVector params = init_params(layout, rng);
    PixelGrid g = random_grid(4, 4, rng);
    ProbMap upstream;
    upstream.width = upstream.height = 4;
    upstream.n_channels = layout.n_channels;
    upstream.values.assign(16 * layout.n_channels, 0.0);
    const ParamVector grad = backward(params, g, upstream);
    for (double v : grad.values) CHECK(v == 0.0);
}

TEST_CASE("backward matches central finite differences on 20 random instances") {
    Rng rng(12345);
    ModelLayout layout;
    for (int trial = 0; trial < 20; ++trial) {
        ParamVector params = init_params(layout, rng);
        PixelGrid g = random_grid(4, 4, rng);
        ProbMap upstream = random_upstream(4, 4, layout.n_channels, rng);
        const ParamVector analytic = backward(params, g, upstream);
        const std::vector<double> fd = fd_gradient(params, g, upstream, 1e-5);
        CHECK(max_rel_error(analytic.values, fd) < 1e-4);
    }
}

TEST_CASE("head bias gradient entries match the finite-difference oracle") {
    Rng rng(99);
    ModelLayout layout;
    ParamVector params = init_params(layout, rng);
    PixelGrid g = random_grid(4, 4, rng);
    ProbMap upstream = random_upstream(4, 4, layout.n_channels, rng);
    const ParamVector analytic = backward(params, g, upstream);
    const std::vector<double> fd = fd_gradient(params, g, upstream, 1e-5);
    const IndexRange head = params.part_view(ModelPart::head);
    const std::size_t bias_offset = head.begin + static_cast<std::size_t>(layout.hidden2) * layout.n_channels;
    for (int c = 0; c < layout.n_channels; ++c) {
        const std::size_t i = bias_offset + c;
        CHECK(analytic.values[i] == doctest::Approx(fd[i]).epsilon(1e-4));
    }
}

TEST_CASE("part spans partition the parameter vector") {
    ModelLayout layout;
    ParamVector params(layout);
    const IndexRange enc = params.part_view(ModelPart::encoder);
    const IndexRange dec = params.part_view(ModelPart::decoder);
    const IndexRange head = params.part_view(ModelPart::head);
    CHECK(head.size() == static_cast<std::size_t>(layout.hidden2) * layout.n_channels + layout.n_channels);
    CHECK(enc.begin == 0);
    CHECK(enc.end == dec.begin);
    CHECK(dec.end == head.begin);
    CHECK(head.end == params.size());
}

TEST_CASE("forward and backward are pure") {
    Rng rng(5);
    ModelLayout layout;
    ParamVector params = init_params(layout, rng);
    PixelGrid g = random_grid(6, 6, rng);
    ProbMap upstream = random_upstream(6, 6, layout.n_channels, rng);
    const ProbMap a = forward(params, g);
    const ProbMap b = forward(params, g);
    CHECK(a.values == b.values);
    const ParamVector ga = backward(params, g, upstream);
    const ParamVector gb = backward(params, g, upstream);
    CHECK(ga.values == gb.values);
}

TEST_CASE("non-finite parameters raise NumericalError") {
    ModelLayout layout;
    ParamVector params(layout);
    params.values[0] = std::numeric_limits<double>::infinity();
    PixelGrid g = make_grid(8, 8, 0.1);
    CHECK_THROWS_AS(forward(params, g), NumericalError);
}
