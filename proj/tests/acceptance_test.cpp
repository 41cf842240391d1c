// Acceptance suite: one test per criterion, each printing a PASS/FAIL line
// with the measured quantities.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "rgt/analysis.hpp"
#include "rgt/config_io.hpp"
#include "rgt/imaging.hpp"
#include "rgt/serialize.hpp"
#include "rgt/suites.hpp"
#include "rgt/train.hpp"
#include "test_util.hpp"

using rgt::ModelConfig;
using rgt::Tensor;
using rgt::WeightStore;
using testutil::random_tensor;

namespace {

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void report(int criterion, const char* name, bool pass, const std::string& detail,
            double elapsed) {
    char line[1024];
    std::snprintf(line, sizeof line, "[%s] criterion %d (%s): %s  [%.2fs]\n",
                  pass ? "PASS" : "FAIL", criterion, name, detail.c_str(), elapsed);
    std::fputs(line, stdout);
    std::fflush(stdout);
    // mirror into a side log so the lines survive ctest's output filtering
    if (const char* log = std::getenv("RGT_ACCEPTANCE_LOG")) {
        static bool truncated = false;
        std::ofstream os(log, truncated ? std::ios::app : std::ios::trunc);
        truncated = true;
        os << line;
    }
}

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.num_groups = 1;
    cfg.blocks_per_group = 2;
    cfg.embed_dim = 32;
    cfg.heads = 2;
    cfg.win = rgt::WindowSpec{8, 8};
    cfg.rep_size = 4;
    cfg.scale = 2;
    return cfg;
}

} // namespace

TEST(Acceptance, Criterion1_ParameterCount) {
    Stopwatch sw;
    long long rgt_s = rgt::count_params(rgt::rgt_s_config(4)).total().params;
    long long rgt_full = rgt::count_params(rgt::rgt_config(4)).total().params;
    bool pass = rgt_s >= 9690000 && rgt_s <= 10710000 && rgt_full >= 12700000 &&
                rgt_full <= 14040000 && sw.seconds() < 1.0;
    std::ostringstream d;
    d << "RGT-S " << rgt_s << " in [9.69M,10.71M], RGT " << rgt_full << " in [12.70M,14.04M]";
    report(1, "parameter count", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
}

TEST(Acceptance, Criterion2_Flops) {
    Stopwatch sw;
    ModelConfig cfg = rgt::rgt_s_config(4);
    cfg.rep_size = 16;  // test-time representative size, output 3x512x512
    long long macs = rgt::count_flops(cfg, 128, 128).total().macs;
    bool pass = macs >= 173800000000LL && macs <= 212400000000LL && sw.seconds() < 1.0;
    std::ostringstream d;
    d << "RGT-S @128x128 " << macs << " macs in [173.8G,212.4G]";
    report(2, "flop count", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
}

TEST(Acceptance, Criterion3_Linearity) {
    Stopwatch sw;
    ModelConfig cfg = rgt::rgt_s_config(4);
    cfg.rep_size = 16;
    rgt::CostReport big = rgt::count_flops(cfg, 128, 128);
    rgt::CostReport small = rgt::count_flops(cfg, 64, 64);
    double rg_ratio = double(big.macs_with_prefix("rg0.blk1.attn")) /
                      double(small.macs_with_prefix("rg0.blk1.attn"));
    double van_ratio =
        double(big.vanilla_sa_reference_macs) / double(small.vanilla_sa_reference_macs);

    const long long C = 180, Cr = 90, hw = 256;
    long long y1 = rgt::rgsa_attention_macs(4096, hw, C, Cr);
    long long y2 = rgt::rgsa_attention_macs(8192, hw, C, Cr);
    long long y4 = rgt::rgsa_attention_macs(16384, hw, C, Cr);
    double mid = double(y1) + (double(y4) - double(y1)) / 3.0;
    double dev = std::fabs(double(y2) - mid) / mid;

    bool pass = rg_ratio >= 3.8 && rg_ratio <= 4.2 && van_ratio >= 15.0 && van_ratio <= 16.2 &&
                dev < 0.01 && sw.seconds() < 1.0;
    std::ostringstream d;
    d << "rg-sa ratio " << rg_ratio << " in [3.8,4.2], vanilla ratio " << van_ratio
      << " in [15.0,16.2], collinearity deviation " << dev;
    report(3, "linear complexity", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
}

TEST(Acceptance, Criterion4_GradientSuite) {
    Stopwatch sw;
    auto results = rgt::gradcheck_ops(1234);
    double worst_op = 0.0;
    bool ops_pass = true;
    for (const auto& r : results) {
        worst_op = std::max(worst_op, r.value);
        ops_pass = ops_pass && r.pass;
    }
    rgt::CheckResult e2e = rgt::gradcheck_end_to_end(4321, 50);
    bool pass = ops_pass && e2e.pass && sw.seconds() < 300.0;
    std::ostringstream d;
    d << results.size() << " ops worst rel err " << worst_op << " (tol 1e-4), end-to-end "
      << e2e.value << " (tol 1e-3)";
    report(4, "gradient suite", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
}

TEST(Acceptance, Criterion5_OracleEquivalence) {
    Stopwatch sw;
    std::mt19937_64 rng(555);
    double worst_rgsa = 0.0, worst_lsa = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        rgt::RgsaConfig cfg;
        cfg.embed_dim = 4 + 4 * (inst % 3);
        cfg.heads = (inst % 2) ? 2 : 1;
        cfg.rep_size = 1 + inst % 3;
        cfg.channel_factor = (inst % 4 == 0) ? 1.0 : 0.5;
        cfg.stride = 2 + inst % 3;
        rgt::RgsaWeights w = oracles::random_rgsa_weights(cfg, rng);
        int64_t H = 4 + inst % 4, W = 4 + (inst / 2) % 3;
        Tensor x = random_tensor({H, W, cfg.embed_dim}, rng);
        Tensor out = rgt::rgsa_forward(x, w, cfg);
        Tensor xr = rgt::rgm_forward(x, w, cfg);
        auto expect = oracles::dense_cross_attention(x.data(), H * W, xr.data(),
                                                     xr.dim(0) * xr.dim(1), w, cfg.embed_dim,
                                                     cfg.reduced_dim(), cfg.heads);
        for (size_t i = 0; i < expect.size(); ++i) {
            worst_rgsa = std::max(worst_rgsa, std::fabs(out.data()[i] - expect[i]));
        }
    }
    for (int inst = 0; inst < 20; ++inst) {
        int64_t side = 2 + inst % 3;
        int64_t C = 8 + 4 * (inst % 2);
        rgt::LsaWeights w = oracles::random_lsa_weights(C, rng);
        Tensor x = random_tensor({side, side, C}, rng);
        Tensor out = rgt::lsa_forward(x, w, rgt::WindowSpec{side, side}, 2);
        auto expect = oracles::dense_self_attention(x.data(), side * side, w, C, 2);
        for (size_t i = 0; i < expect.size(); ++i) {
            worst_lsa = std::max(worst_lsa, std::fabs(out.data()[i] - expect[i]));
        }
    }
    bool pass = worst_rgsa <= 1e-10 && worst_lsa <= 1e-10 && sw.seconds() < 60.0;
    std::ostringstream d;
    d << "rg-sa vs dense cross-attention " << worst_rgsa << ", l-sa vs dense SA " << worst_lsa
      << " (tol 1e-10, 20 instances each)";
    report(5, "oracle equivalence", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
}

TEST(Acceptance, Criterion6_HaiAlgebra) {
    Stopwatch sw;
    std::mt19937_64 rng(66);
    ModelConfig hai = toy_config();
    ModelConfig none = toy_config();
    none.skip_mode = rgt::SkipMode::None;
    none.hai_enabled = false;
    ModelConfig vanilla = toy_config();
    vanilla.skip_mode = rgt::SkipMode::Vanilla;
    vanilla.hai_enabled = false;

    WeightStore s_hai = rgt::init_weights(hai, 101);
    WeightStore s_rest;
    for (const auto& [p, t] : s_hai.entries()) {
        if (!p.ends_with(".alpha")) s_rest.put(p, t);
    }
    Tensor lr = random_tensor({16, 16, 3}, rng, 0.0, 1.0);
    bool zero_ok = testutil::bitwise_equal(rgt::rgt_forward(lr, s_hai, hai),
                                           rgt::rgt_forward(lr, s_rest, none));

    WeightStore s_ones;
    for (const auto& [p, t] : s_hai.entries()) {
        s_ones.put(p, p.ends_with(".alpha") ? Tensor::full(t.shape(), 1.0)
                                            : Tensor::from_data(t.shape(), t.data()));
    }
    bool ones_ok = testutil::bitwise_equal(rgt::rgt_forward(lr, s_ones, hai),
                                           rgt::rgt_forward(lr, s_rest, vanilla));

    // collapsed block: out = (1 + alpha) . z elementwise
    WeightStore s_collapse = rgt::init_weights(hai, 103);
    for (std::string leaf : {std::string("rg0.blk0.lsa.m.w"), std::string("rg0.blk0.lsa.m.b"),
                             std::string("rg0.blk0.mlp.fc2.w"), std::string("rg0.blk0.mlp.fc2.b")}) {
        s_collapse.replace(leaf, Tensor::zeros(s_collapse.get(leaf).shape()));
    }
    Tensor alpha = random_tensor({32}, rng, -0.4, 0.4);
    s_collapse.replace("rg0.blk0.alpha", Tensor::from_data({32}, alpha.data()));
    Tensor z = random_tensor({8, 8, 32}, rng, 0.0, 1.0);
    rgt::BlockParams p = rgt::bind_block(s_collapse, "rg0.blk0", true, rgt::SkipMode::Hai);
    Tensor out = rgt::block_forward(z, p, hai, true);
    bool identity_ok = true;
    for (int64_t y = 0; y < 8 && identity_ok; ++y)
        for (int64_t x = 0; x < 8 && identity_ok; ++x)
            for (int64_t c = 0; c < 32 && identity_ok; ++c) {
                double expect = z.at({y, x, c}) + alpha.at({c}) * z.at({y, x, c});
                identity_ok = out.at({y, x, c}) == expect;
            }

    bool pass = zero_ok && ones_ok && identity_ok && sw.seconds() < 60.0;
    std::ostringstream d;
    d << "alpha=0 vs no-skip bitwise " << (zero_ok ? "ok" : "FAIL") << ", alpha=1 vs vanilla bitwise "
      << (ones_ok ? "ok" : "FAIL") << ", (1+alpha).z identity " << (identity_ok ? "ok" : "FAIL");
    report(6, "hai algebra", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
}

TEST(Acceptance, Criterion7_ToyOverfit) {
    Stopwatch sw;
    ModelConfig cfg = toy_config();  // N1=1 N2=2 C=32 heads=2 scale=2 hai
    const uint64_t seed = 7;
    auto pairs = rgt::make_toy_pairs(5, 16, cfg.scale, seed);
    WeightStore store = rgt::init_weights(cfg, seed);
    rgt::AdamState state;
    double loss = 1e9;
    int64_t steps_taken = 0;
    for (int64_t k = 1; k <= 2000; ++k) {
        loss = rgt::train_step(store, pairs, state, 1e-3, cfg);
        steps_taken = k;
        if (loss < 1e-2) break;
    }
    bool pass = loss < 1e-2 && sw.seconds() < 600.0;
    std::ostringstream d;
    d << "mean L1 " << loss << " after " << steps_taken << " steps (budget 2000, target 1e-2)";
    report(7, "toy overfit", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
}

TEST(Acceptance, Criterion8_MetricsOracle) {
    Stopwatch sw;
    std::mt19937_64 rng(888);
    std::uniform_real_distribution<double> dist(0.0, 255.0);
    auto random_gray = [&](int64_t h, int64_t w) {
        rgt::ImagePlane img;
        img.height = h;
        img.width = w;
        img.channels = 1;
        img.space = rgt::ColorSpace::Y;
        img.range = rgt::ValueRange::Byte255;
        img.data.resize(size_t(h * w));
        for (double& v : img.data) v = dist(rng);
        return img;
    };

    double worst_psnr = 0.0, worst_ssim = 0.0;
    for (int it = 0; it < 20; ++it) {
        rgt::ImagePlane a = random_gray(32, 32), b = random_gray(32, 32);
        // brute-force PSNR
        double se = 0.0;
        for (size_t i = 0; i < a.data.size(); ++i) {
            double diff = a.data[i] - b.data[i];
            se += diff * diff;
        }
        double ref_psnr = 10.0 * std::log10(255.0 * 255.0 / (se / double(a.data.size())));
        worst_psnr = std::max(worst_psnr, std::fabs(rgt::psnr(a, b, 0) - ref_psnr));

        // brute-force SSIM (independent sliding-window loop)
        double g[11];
        double gsum = 0;
        for (int i = 0; i < 11; ++i) {
            g[i] = std::exp(-(i - 5.0) * (i - 5.0) / 4.5);
            gsum += g[i];
        }
        for (double& v : g) v /= gsum;
        double acc = 0;
        int64_t cnt = 0;
        for (int64_t y = 0; y + 11 <= 32; ++y)
            for (int64_t x = 0; x + 11 <= 32; ++x) {
                double ma = 0, mb = 0, ea = 0, eb = 0, eab = 0;
                for (int64_t i = 0; i < 11; ++i)
                    for (int64_t j = 0; j < 11; ++j) {
                        double w = g[i] * g[j];
                        double va = a.at(y + i, x + j, 0), vb = b.at(y + i, x + j, 0);
                        ma += w * va;
                        mb += w * vb;
                        ea += w * va * va;
                        eb += w * vb * vb;
                        eab += w * va * vb;
                    }
                acc += ((2 * ma * mb + 6.5025) * (2 * (eab - ma * mb) + 58.5225)) /
                       ((ma * ma + mb * mb + 6.5025) * ((ea - ma * ma) + (eb - mb * mb) + 58.5225));
                ++cnt;
            }
        worst_ssim = std::max(worst_ssim, std::fabs(rgt::ssim(a, b, 0) - acc / double(cnt)));
    }

    // closed forms
    rgt::ImagePlane u100 = random_gray(16, 16), u116 = random_gray(16, 16);
    for (double& v : u100.data) v = 100.0;
    for (double& v : u116.data) v = 116.0;
    double psnr_closed = 10.0 * std::log10(65025.0 / 256.0);  // 24.0484...
    bool psnr_cf_ok = std::fabs(rgt::psnr(u100, u116, 0) - psnr_closed) < 5e-5;
    rgt::ImagePlane c100 = u100, c110 = u100;
    for (double& v : c110.data) v = 110.0;
    double c1 = 6.5025;
    double ssim_closed = (2 * 100 * 110 + c1) / (100 * 100 + 110 * 110 + c1);  // 0.995476
    bool ssim_cf_ok = std::fabs(rgt::ssim(c100, c110, 0) - ssim_closed) < 5e-5 &&
                      std::fabs(ssim_closed - 0.99548) < 1e-5;

    bool pass =
        worst_psnr <= 1e-9 && worst_ssim <= 1e-9 && psnr_cf_ok && ssim_cf_ok && sw.seconds() < 10.0;
    std::ostringstream d;
    d << "psnr dev " << worst_psnr << " dB, ssim dev " << worst_ssim << " (tol 1e-9); closed forms "
      << (psnr_cf_ok && ssim_cf_ok ? "ok" : "FAIL");
    report(8, "metrics oracle", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
}

TEST(Acceptance, Criterion9_InvariantSuites) {
    Stopwatch sw;
    std::mt19937_64 rng(999);
    bool all = true;
    std::ostringstream d;

    // attention rows sum to 1 and stay convex (rg-sa probe)
    {
        rgt::RgsaConfig cfg;
        cfg.embed_dim = 8;
        cfg.heads = 2;
        cfg.rep_size = 2;
        cfg.channel_factor = 0.5;
        rgt::RgsaWeights w = oracles::random_rgsa_weights(cfg, rng);
        rgt::AttentionProbe probe;
        rgt::rgsa_forward(random_tensor({9, 7, 8}, rng), w, cfg, &probe);
        bool ok = true;
        for (const Tensor& a : probe.attn)
            for (int64_t r = 0; r < a.dim(0); ++r) {
                double s = 0;
                for (int64_t c = 0; c < a.dim(1); ++c) s += a.at({r, c});
                ok = ok && std::fabs(s - 1.0) <= 1e-12;
            }
        all = all && ok;
        d << "rows-sum " << (ok ? "ok" : "FAIL");
    }
    // rgm size band
    {
        rgt::RgsaConfig cfg;
        cfg.embed_dim = 4;
        cfg.heads = 2;
        cfg.rep_size = 3;
        cfg.channel_factor = 1.0;
        rgt::RgsaWeights w = oracles::random_rgsa_weights(cfg, rng);
        bool ok = true;
        for (int64_t size : {9, 17, 40, 97, 255}) {
            Tensor xr = rgt::rgm_forward(random_tensor({size, 5, 4}, rng), w, cfg);
            int64_t longest = std::max(xr.dim(0), xr.dim(1));
            int64_t T = rgt::recursion_count(size, 5, cfg.stride, cfg.rep_size);
            if (T >= 1) ok = ok && longest >= cfg.rep_size && longest < cfg.stride * cfg.rep_size;
        }
        all = all && ok;
        d << ", rgm-band " << (ok ? "ok" : "FAIL");
    }
    // window partition round trips
    {
        bool ok = true;
        for (auto [h, w2] : {std::pair<int64_t, int64_t>{10, 10}, {17, 40}, {8, 32}, {64, 64}}) {
            Tensor x = random_tensor({h, w2, 3}, rng);
            auto [wins, info] = rgt::window_partition(x, rgt::WindowSpec{8, 32});
            ok = ok && testutil::bitwise_equal(rgt::window_reverse(wins, info), x);
        }
        all = all && ok;
        d << ", window-roundtrip " << (ok ? "ok" : "FAIL");
    }
    // pixel shuffle bijection
    {
        Tensor x = random_tensor({5, 7, 18}, rng);
        bool ok = testutil::bitwise_equal(rgt::pixel_unshuffle_values(rgt::pixel_shuffle(x, 3), 3), x);
        all = all && ok;
        d << ", shuffle-bijective " << (ok ? "ok" : "FAIL");
    }
    // softmax normalization across magnitudes
    {
        Tensor x = random_tensor({40, 9}, rng, -50.0, 50.0);
        Tensor y = rgt::softmax(x, 1);
        bool ok = true;
        for (int64_t r = 0; r < 40; ++r) {
            double s = 0;
            for (int64_t c = 0; c < 9; ++c) s += y.at({r, c});
            ok = ok && std::fabs(s - 1.0) <= 1e-12;
        }
        all = all && ok;
        d << ", softmax-sums " << (ok ? "ok" : "FAIL");
    }
    // matmul associativity
    {
        bool ok = true;
        for (int it = 0; it < 5; ++it) {
            Tensor a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng),
                   c = random_tensor({3, 6}, rng);
            Tensor lhs = rgt::matmul(rgt::matmul(a, b), c);
            Tensor rhs = rgt::matmul(a, rgt::matmul(b, c));
            for (size_t i = 0; i < lhs.data().size(); ++i) {
                ok = ok && std::fabs(lhs.data()[i] - rhs.data()[i]) /
                               std::max(1.0, std::fabs(rhs.data()[i])) <
                               1e-9;
            }
        }
        all = all && ok;
        d << ", matmul-assoc " << (ok ? "ok" : "FAIL");
    }
    // cka self similarity + orthogonal/scale invariance (rotation by 90 deg in feature pairs)
    {
        Tensor x = random_tensor({30, 4}, rng);
        bool ok = std::fabs(rgt::cka(x, x) - 1.0) <= 1e-12;
        ok = ok && std::fabs(rgt::cka(x, rgt::scalar_mul(x, 3.0)) - 1.0) <= 1e-12;
        std::vector<double> rot(size_t(30 * 4));
        for (int64_t i = 0; i < 30; ++i) {
            rot[size_t(i * 4 + 0)] = -x.at({i, 1});
            rot[size_t(i * 4 + 1)] = x.at({i, 0});
            rot[size_t(i * 4 + 2)] = -x.at({i, 3});
            rot[size_t(i * 4 + 3)] = x.at({i, 2});
        }
        ok = ok &&
             std::fabs(rgt::cka(x, Tensor::from_data({30, 4}, std::move(rot))) - 1.0) <= 1e-10;
        all = all && ok;
        d << ", cka-invariance " << (ok ? "ok" : "FAIL");
    }
    // serialization round trip
    {
        WeightStore s = rgt::init_weights(toy_config(), 12);
        std::string b1 = rgt::save_weights_string(s);
        std::string b2 = rgt::save_weights_string(rgt::load_weights_string(b1));
        bool ok = b1 == b2;
        all = all && ok;
        d << ", weights-roundtrip " << (ok ? "ok" : "FAIL");
    }
    // psnr/ssim self-identities
    {
        rgt::ImagePlane img;
        img.height = 16;
        img.width = 16;
        img.channels = 1;
        img.space = rgt::ColorSpace::Y;
        img.range = rgt::ValueRange::Byte255;
        img.data.resize(256);
        std::uniform_real_distribution<double> dist(0.0, 255.0);
        for (double& v : img.data) v = dist(rng);
        bool ok = std::isinf(rgt::psnr(img, img, 0)) && std::fabs(rgt::ssim(img, img, 0) - 1.0) <= 1e-12;
        all = all && ok;
        d << ", metric-self " << (ok ? "ok" : "FAIL");
    }
    // dihedral augmentation round trips
    {
        Tensor patch = random_tensor({6, 4, 3}, rng);
        Tensor r = patch;
        for (int k = 0; k < 4; ++k) r = rgt::augment(r, false, 1);
        bool ok = testutil::bitwise_equal(r, patch);
        ok = ok && testutil::bitwise_equal(rgt::augment(rgt::augment(patch, true, 0), true, 0), patch);
        all = all && ok;
        d << ", augment-group " << (ok ? "ok" : "FAIL");
    }

    bool pass = all && sw.seconds() < 120.0;
    report(9, "invariant suites", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
}

// ---- criterion 10: byte-identical CLI outputs ----

namespace {

std::string run_capture(const std::string& cmd) {
    std::string full = cmd + " 2>/dev/null";
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) return "<popen failed>";
    std::string out;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
    pclose(pipe);
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

TEST(Acceptance, Criterion10_Determinism) {
    Stopwatch sw;
    const char* cli = std::getenv("RGT_CLI");
    ASSERT_NE(cli, nullptr) << "RGT_CLI must point at the rgt binary";
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / ("rgt_acceptance_" + std::to_string(getpid()));
    fs::create_directories(dir);

    ModelConfig cfg = toy_config();
    cfg.scale = 4;
    std::ofstream(dir / "cfg.json") << rgt::config_to_json(cfg).dump(2) << "\n";

    // deterministic 24x24 input image
    {
        std::mt19937_64 rng(3);
        std::uniform_int_distribution<int> dist(0, 255);
        rgt::ImagePlane img;
        img.height = 24;
        img.width = 24;
        img.channels = 3;
        img.space = rgt::ColorSpace::RGB;
        img.range = rgt::ValueRange::Byte255;
        img.data.resize(24 * 24 * 3);
        for (double& v : img.data) v = double(dist(rng));
        rgt::write_ppm_file(img, (dir / "in.ppm").string());
    }

    std::string base = std::string(cli);
    std::string cfg_arg = " --config " + (dir / "cfg.json").string();

    std::string params1 = run_capture(base + " params" + cfg_arg);
    std::string params2 = run_capture(base + " params" + cfg_arg);
    std::string flops1 = run_capture(base + " flops" + cfg_arg + " --height 48 --width 36");
    std::string flops2 = run_capture(base + " flops" + cfg_arg + " --height 48 --width 36");

    std::string infer_cmd = base + " infer" + cfg_arg + " --seed 5 --input " +
                            (dir / "in.ppm").string() + " --output ";
    run_capture(infer_cmd + (dir / "out1.ppm").string());
    run_capture(infer_cmd + (dir / "out2.ppm").string());
    std::string ppm1 = slurp(dir / "out1.ppm");
    std::string ppm2 = slurp(dir / "out2.ppm");

    std::string cka_cmd = base + " cka" + cfg_arg + " --seed 5 --input " +
                          (dir / "in.ppm").string() + " --out ";
    run_capture(cka_cmd + (dir / "cka1.csv").string());
    run_capture(cka_cmd + (dir / "cka2.csv").string());
    std::string cka1 = slurp(dir / "cka1.csv");
    std::string cka2 = slurp(dir / "cka2.csv");

    bool pass = !params1.empty() && params1 == params2 && !flops1.empty() && flops1 == flops2 &&
                !ppm1.empty() && ppm1 == ppm2 && !cka1.empty() && cka1 == cka2 &&
                sw.seconds() < 60.0;
    std::ostringstream d;
    d << "params " << (params1 == params2 ? "ok" : "FAIL") << ", flops "
      << (flops1 == flops2 ? "ok" : "FAIL") << ", infer ppm "
      << (!ppm1.empty() && ppm1 == ppm2 ? "ok" : "FAIL") << ", cka csv "
      << (!cka1.empty() && cka1 == cka2 ? "ok" : "FAIL");
    report(10, "determinism", pass, d.str(), sw.seconds());
    EXPECT_TRUE(pass) << d.str();
    fs::remove_all(dir);
}
