#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "capsroute/prng.hpp"
#include "capsroute/ssm.hpp"

using namespace capsroute;

namespace {

double u01(std::uint64_t key, std::uint64_t i) {
    return rng::unit_double(rng::draw_u64(key, i));
}

struct LtiInstance {
    Tensor a_bar, b_bar, c;  // N each
    Tensor x;                // L x 1
};

LtiInstance random_lti(std::uint64_t seed, std::size_t length, std::size_t state_dim) {
    const std::uint64_t key = rng::stream_key(seed, "test.lti");
    std::uint64_t i = 0;
    LtiInstance inst;
    inst.a_bar = Tensor({state_dim});
    inst.b_bar = Tensor({state_dim});
    inst.c = Tensor({state_dim});
    for (std::size_t n = 0; n < state_dim; ++n) {
        inst.a_bar(n) = 0.95 * (2.0 * u01(key, i++) - 1.0);
        inst.b_bar(n) = 2.0 * u01(key, i++) - 1.0;
        inst.c(n) = 2.0 * u01(key, i++) - 1.0;
    }
    inst.x = Tensor({length, 1});
    for (std::size_t v = 0; v < length; ++v) inst.x(v, 0) = 2.0 * u01(key, i++) - 1.0;
    return inst;
}

ScanResult run_lti_scan(const LtiInstance& inst) {
    const std::size_t length = inst.x.dim(0);
    const std::size_t state_dim = inst.a_bar.dim(0);
    Tensor a_full({length, 1, state_dim}), b_full({length, 1, state_dim});
    Tensor c_full({length, state_dim});
    for (std::size_t v = 0; v < length; ++v) {
        for (std::size_t n = 0; n < state_dim; ++n) {
            a_full(v, 0, n) = inst.a_bar(n);
            b_full(v, 0, n) = inst.b_bar(n);
            c_full(v, n) = inst.c(n);
        }
    }
    return scan_discrete(inst.x, a_full, b_full, c_full);
}

}  // namespace

TEST_CASE("selective step size is softplus of the bias for zero maps", "[ssm]") {
    SelectiveMaps maps;
    maps.a = SelectiveMaps::stable_evolution(3, 2);
    maps.w_b = Tensor({2, 3});
    maps.w_c = Tensor({2, 3});
    maps.w_delta = Tensor({3});
    maps.delta_bias = Tensor({3});
    maps.delta_bias(0) = -1.0;
    maps.delta_bias(1) = 0.0;
    maps.delta_bias(2) = 2.5;

    Tensor seq({4, 3});  // all-zero tokens
    const SSMParams p = selective_params(seq, maps);
    for (std::size_t v = 0; v < 4; ++v) {
        REQUIRE(p.delta(v, 0) == Catch::Approx(softplus(-1.0)).margin(1e-15));
        REQUIRE(p.delta(v, 1) == Catch::Approx(softplus(0.0)).margin(1e-15));
        REQUIRE(p.delta(v, 2) == Catch::Approx(softplus(2.5)).margin(1e-15));
        for (std::size_t n = 0; n < 2; ++n) {
            REQUIRE(p.b(v, n) == 0.0);
            REQUIRE(p.c(v, n) == 0.0);
        }
    }
}

TEST_CASE("selective step size is strictly positive for any input", "[ssm]") {
    const SelectiveMaps maps = SelectiveMaps::seeded(ParamBundle(3), "t", 5, 4);
    const std::uint64_t key = rng::stream_key(3, "test.delta");
    Tensor seq({9, 5});
    for (std::size_t i = 0; i < seq.size(); ++i) {
        seq.data()[i] = rng::symmetric_double(rng::draw_u64(key, i), 4.0);
    }
    const SSMParams p = selective_params(seq, maps);
    for (double d : p.delta.data()) REQUIRE(d > 0.0);
}

TEST_CASE("selective maps match a hand evaluation on one token", "[ssm]") {
    // Token dim 2, state dim 2, every weight written out by hand.
    SelectiveMaps maps;
    maps.a = SelectiveMaps::stable_evolution(2, 2);
    maps.w_b = Tensor::from({2, 2}, {0.5, -0.25, 1.0, 0.75});
    maps.w_c = Tensor::from({2, 2}, {-0.5, 0.1, 0.2, -0.4});
    maps.w_delta = Tensor::from({2}, {0.3, -0.6});
    maps.delta_bias = Tensor::from({2}, {0.1, -0.2});

    Tensor seq({1, 2});
    seq(0, 0) = 2.0;
    seq(0, 1) = -1.0;
    const SSMParams p = selective_params(seq, maps);

    REQUIRE(p.b(0, 0) == Catch::Approx(0.5 * 2.0 + (-0.25) * (-1.0)).margin(1e-15));
    REQUIRE(p.b(0, 1) == Catch::Approx(1.0 * 2.0 + 0.75 * (-1.0)).margin(1e-15));
    REQUIRE(p.c(0, 0) == Catch::Approx(-0.5 * 2.0 + 0.1 * (-1.0)).margin(1e-15));
    REQUIRE(p.c(0, 1) == Catch::Approx(0.2 * 2.0 + (-0.4) * (-1.0)).margin(1e-15));
    const double logit = 0.3 * 2.0 + (-0.6) * (-1.0);
    REQUIRE(p.delta(0, 0) == Catch::Approx(std::log1p(std::exp(0.1 + logit))).margin(1e-12));
    REQUIRE(p.delta(0, 1) == Catch::Approx(std::log1p(std::exp(-0.2 + logit))).margin(1e-12));
}

TEST_CASE("discretization limits and identities", "[ssm]") {
    SECTION("a = 0 gives A_bar = 1 and B_bar = delta * b") {
        REQUIRE(zoh_a_bar(0.0, 0.7) == 1.0);
        REQUIRE(zoh_b_bar(0.0, 0.7, 2.0) == Catch::Approx(0.7 * 2.0).margin(1e-15));
    }
    SECTION("a = -1, delta = ln 2 halves the state") {
        // Independent scalar check of the same quantity.
        const double expected = std::exp(-std::log(2.0));
        REQUIRE(zoh_a_bar(-1.0, std::log(2.0)) == Catch::Approx(expected).margin(1e-15));
        REQUIRE(expected == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("delta -> 0 drives A_bar to 1 and B_bar to 0 monotonically") {
        const std::uint64_t key = rng::stream_key(17, "test.zoh");
        for (int trial = 0; trial < 8; ++trial) {
            const double a = -(0.25 + 3.0 * u01(key, 2 * trial));
            const double b = 2.0 * u01(key, 2 * trial + 1) - 1.0;
            double prev_gap = std::numeric_limits<double>::infinity();
            double prev_mag = std::numeric_limits<double>::infinity();
            for (int k = 1; k <= 8; ++k) {
                const double delta = std::pow(10.0, -k);
                const double gap = std::abs(zoh_a_bar(a, delta) - 1.0);
                const double mag = std::abs(zoh_b_bar(a, delta, b));
                REQUIRE(gap < prev_gap);
                if (b != 0.0) REQUIRE(mag < prev_mag);
                prev_gap = gap;
                prev_mag = mag;
            }
        }
    }
    SECTION("non-positive delta is rejected") {
        REQUIRE_THROWS_AS(zoh_a_bar(-1.0, 0.0), std::invalid_argument);
        REQUIRE_THROWS_AS(zoh_b_bar(-1.0, -0.5, 1.0), std::invalid_argument);
        Tensor a({1, 1});
        Tensor b({1, 1});
        Tensor delta({1, 1});  // zero
        REQUIRE_THROWS_AS(discretize(a, b, delta), std::invalid_argument);
    }
    SECTION("paper-literal mode keeps B_bar away from zero as delta -> 0") {
        const double a = -2.0, b = 1.5;
        const double tiny = zoh_b_bar(a, 1e-8, b, Discretization::PaperLiteral);
        REQUIRE(std::abs(tiny) == Catch::Approx(std::abs(b / a)).epsilon(1e-6));
        const double standard = zoh_b_bar(a, 1e-8, b, Discretization::Standard);
        REQUIRE(std::abs(standard) < 1e-7);
    }
}

TEST_CASE("three-step scalar scan unrolls by hand", "[ssm]") {
    // A_bar = 0.5, B_bar = 1, C = 1, input [1, 0, 0]:
    // h1 = 1, h2 = 0.5, h3 = 0.25 and y = h throughout.
    Tensor x({3, 1});
    x(0, 0) = 1.0;
    Tensor a_bar({3, 1, 1}, 0.5);
    Tensor b_bar({3, 1, 1}, 1.0);
    Tensor c({3, 1}, 1.0);
    const ScanResult r = scan_discrete(x, a_bar, b_bar, c);
    REQUIRE(r.outputs(0, 0) == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(r.outputs(1, 0) == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(r.outputs(2, 0) == Catch::Approx(0.25).margin(1e-15));
    REQUIRE(r.final_state(0, 0) == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("zero input keeps the zero state", "[ssm]") {
    const SelectiveMaps maps = SelectiveMaps::seeded(ParamBundle(5), "z", 4, 3);
    Tensor seq({6, 4});
    const ScanResult r = ssm_scan(seq, maps);
    for (double y : r.outputs.data()) REQUIRE(y == 0.0);
    for (double h : r.final_state.data()) REQUIRE(h == 0.0);
}

TEST_CASE("recurrence equals convolution on LTI instances", "[ssm]") {
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        const std::uint64_t key = rng::stream_key(900 + trial, "test.lti.dims");
        const std::size_t length = 2 + std::size_t(u01(key, 0) * 62);
        const std::size_t state_dim = 1 + std::size_t(u01(key, 1) * 7);
        const LtiInstance inst = random_lti(900 + trial, length, state_dim);
        const ScanResult scan = run_lti_scan(inst);
        const Tensor kernel = lti_kernel(inst.a_bar, inst.b_bar, inst.c, length);
        Tensor x1({length});
        for (std::size_t v = 0; v < length; ++v) x1(v) = inst.x(v, 0);
        const Tensor conv = convolve_causal(x1, kernel);
        for (std::size_t v = 0; v < length; ++v) {
            worst = std::max(worst, std::abs(conv(v) - scan.outputs(v, 0)));
        }
    }
    REQUIRE(worst <= 1e-10);
}

TEST_CASE("lti kernel terms expand as C B, C A B, ...", "[ssm]") {
    SECTION("length 1") {
        const Tensor k = lti_kernel(Tensor::from({1}, {0.3}), Tensor::from({1}, {2.0}),
                                    Tensor::from({1}, {-0.5}), 1);
        REQUIRE(k.dim(0) == 1);
        REQUIRE(k(0) == Catch::Approx(-1.0).margin(1e-15));
    }
    SECTION("scalar 0.5 chain") {
        const Tensor k = lti_kernel(Tensor::from({1}, {0.5}), Tensor::from({1}, {1.0}),
                                    Tensor::from({1}, {1.0}), 3);
        REQUIRE(k(0) == Catch::Approx(1.0).margin(1e-15));
        REQUIRE(k(1) == Catch::Approx(0.5).margin(1e-15));
        REQUIRE(k(2) == Catch::Approx(0.25).margin(1e-15));
    }
    SECTION("impulse response equals the kernel") {
        const LtiInstance base = random_lti(321, 8, 1);
        LtiInstance impulse = base;
        impulse.x = Tensor({8, 1});
        impulse.x(0, 0) = 1.0;
        const ScanResult r = run_lti_scan(impulse);
        const Tensor k = lti_kernel(base.a_bar, base.b_bar, base.c, 8);
        for (std::size_t v = 0; v < 8; ++v) {
            REQUIRE(r.outputs(v, 0) == Catch::Approx(k(v)).margin(1e-12));
        }
    }
    SECTION("invalid length") {
        REQUIRE_THROWS_AS(lti_kernel(Tensor::from({1}, {0.5}), Tensor::from({1}, {1.0}),
                                     Tensor::from({1}, {1.0}), 0),
                          std::invalid_argument);
    }
}

TEST_CASE("scan is linear in the input for fixed discrete parameters", "[ssm]") {
    const std::size_t length = 12, state_dim = 4;
    const LtiInstance pa = random_lti(41, length, state_dim);
    const LtiInstance pb = random_lti(42, length, state_dim);
    LtiInstance mix = pa;  // shares a_bar/b_bar/c with pa
    const double alpha = 1.7, beta = -0.4;
    for (std::size_t v = 0; v < length; ++v) {
        mix.x(v, 0) = alpha * pa.x(v, 0) + beta * pb.x(v, 0);
    }
    LtiInstance pb_same = pb;
    pb_same.a_bar = pa.a_bar;
    pb_same.b_bar = pa.b_bar;
    pb_same.c = pa.c;

    const ScanResult ra = run_lti_scan(pa);
    const ScanResult rb = run_lti_scan(pb_same);
    const ScanResult rm = run_lti_scan(mix);
    for (std::size_t v = 0; v < length; ++v) {
        const double expected = alpha * ra.outputs(v, 0) + beta * rb.outputs(v, 0);
        REQUIRE(rm.outputs(v, 0) == Catch::Approx(expected).margin(1e-10));
    }
}

TEST_CASE("outputs are causal", "[ssm]") {
    const SelectiveMaps maps = SelectiveMaps::seeded(ParamBundle(6), "c", 3, 4);
    const std::uint64_t key = rng::stream_key(6, "test.causal");
    Tensor seq({10, 3});
    for (std::size_t i = 0; i < seq.size(); ++i) {
        seq.data()[i] = rng::symmetric_double(rng::draw_u64(key, i), 1.0);
    }
    const ScanResult base = ssm_scan(seq, maps);
    Tensor bumped = seq;
    bumped(7, 1) += 2.0;
    const ScanResult pert = ssm_scan(bumped, maps);
    for (std::size_t v = 0; v < 7; ++v) {
        for (std::size_t d = 0; d < 3; ++d) {
            REQUIRE(base.outputs(v, d) == pert.outputs(v, d));
        }
    }
    bool later_changed = false;
    for (std::size_t v = 7; v < 10; ++v) {
        for (std::size_t d = 0; d < 3; ++d) {
            if (base.outputs(v, d) != pert.outputs(v, d)) later_changed = true;
        }
    }
    REQUIRE(later_changed);
}

TEST_CASE("blocked scan matches the sequential reference", "[ssm]") {
    const SelectiveMaps maps = SelectiveMaps::seeded(ParamBundle(8), "blk", 5, 6);
    const std::uint64_t key = rng::stream_key(8, "test.blocked");
    Tensor seq({37, 5});
    for (std::size_t i = 0; i < seq.size(); ++i) {
        seq.data()[i] = rng::symmetric_double(rng::draw_u64(key, i), 1.0);
    }
    const SSMParams p = selective_params(seq, maps);
    const Discretized d = discretize(p.a, p.b, p.delta);
    const ScanResult ref = scan_discrete(seq, d.a_bar, d.b_bar, p.c);
    for (std::size_t block : {1ul, 4ul, 16ul, 64ul}) {
        const ScanResult blk = scan_discrete_blocked(seq, d.a_bar, d.b_bar, p.c, block);
        for (std::size_t i = 0; i < ref.outputs.size(); ++i) {
            REQUIRE(std::abs(blk.outputs.data()[i] - ref.outputs.data()[i]) <= 1e-12);
        }
        for (std::size_t i = 0; i < ref.final_state.size(); ++i) {
            REQUIRE(std::abs(blk.final_state.data()[i] - ref.final_state.data()[i]) <= 1e-12);
        }
    }
}

TEST_CASE("numeric overflow reports the failing step", "[ssm]") {
    Tensor x({4, 1}, 1.0);
    Tensor a_bar({4, 1, 1}, 1e308);
    Tensor b_bar({4, 1, 1}, 1e308);
    Tensor c({4, 1}, 1.0);
    try {
        scan_discrete(x, a_bar, b_bar, c);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        REQUIRE(e.index >= 1);
        REQUIRE(std::string(e.what()).find("step") != std::string::npos);
    }
}
