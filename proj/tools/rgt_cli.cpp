#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "rgt/analysis.hpp"
#include "rgt/config_io.hpp"
#include "rgt/imaging.hpp"
#include "rgt/model.hpp"
#include "rgt/serialize.hpp"
#include "rgt/suites.hpp"
#include "rgt/train.hpp"

namespace {

rgt::ModelConfig toy_config() {
    rgt::ModelConfig cfg;
    cfg.num_groups = 1;
    cfg.blocks_per_group = 2;
    cfg.embed_dim = 32;
    cfg.heads = 2;
    cfg.win = rgt::WindowSpec{8, 8};
    cfg.rep_size = 4;
    cfg.scale = 2;
    return cfg;
}

std::string format_millions(long long n) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << double(n) / 1e6 << "M";
    return os.str();
}

std::string format_giga(long long n) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << double(n) / 1e9 << "G";
    return os.str();
}

// collapse leaf entries to their top-level component for readable tables
rgt::CostReport aggregate_top_level(const rgt::CostReport& report) {
    rgt::CostReport out;
    out.input_h = report.input_h;
    out.input_w = report.input_w;
    out.scale = report.scale;
    out.vanilla_sa_reference_macs = report.vanilla_sa_reference_macs;
    out.vanilla_sa_reference_flops = report.vanilla_sa_reference_flops;
    for (const rgt::CostEntry& e : report.entries) {
        std::string top = e.path.substr(0, e.path.find('.'));
        bool merged = false;
        for (rgt::CostEntry& a : out.entries) {
            if (a.path == top) {
                a.params += e.params;
                a.macs += e.macs;
                a.flops += e.flops;
                merged = true;
                break;
            }
        }
        if (!merged) out.entries.push_back({top, e.params, e.macs, e.flops});
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw rgt::IoError("cannot open for writing: " + path);
    os << text;
}

rgt::WeightStore obtain_weights(const std::string& weights_path, const rgt::ModelConfig& cfg,
                                uint64_t seed, bool trainable) {
    if (!weights_path.empty()) return rgt::load_weights_file(weights_path, trainable);
    std::cerr << "no --weights given, initializing from seed " << seed << "\n";
    return rgt::init_weights(cfg, seed, trainable);
}

int run_gradcheck(uint64_t seed) {
    bool all_pass = true;
    std::cout << std::left << std::setw(22) << "op" << std::right << std::setw(14) << "max_rel_err"
              << std::setw(12) << "tolerance" << "  status\n";
    auto print = [&](const rgt::CheckResult& r) {
        std::cout << std::left << std::setw(22) << r.name << std::right << std::setw(14)
                  << std::scientific << std::setprecision(3) << r.value << std::setw(12)
                  << r.tolerance << "  " << (r.pass ? "ok" : "FAIL") << "\n";
        all_pass = all_pass && r.pass;
    };
    for (const auto& r : rgt::gradcheck_ops(seed)) print(r);
    print(rgt::gradcheck_end_to_end(seed + 1));
    std::cout << (all_pass ? "gradcheck: all ops within tolerance\n" : "gradcheck: FAILURES\n");
    return all_pass ? 0 : 1;
}

int run_shapes(uint64_t seed) {
    bool all_pass = true;
    for (const auto& r : rgt::shape_invariant_suite(seed)) {
        std::cout << (r.pass ? "ok   " : "FAIL ") << r.name << "\n";
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

int run_params(const std::string& config_path, const std::string& out_path) {
    rgt::ModelConfig cfg = rgt::load_config_file(config_path);
    rgt::CostReport report = rgt::count_params(cfg);
    std::cout << aggregate_top_level(report).to_table();
    std::cout << "total params: " << report.total().params << " ("
              << format_millions(report.total().params) << ")\n";
    if (!out_path.empty()) write_text_file(out_path, report.to_csv());
    return 0;
}

int run_flops(const std::string& config_path, int64_t height, int64_t width,
              const std::string& out_path) {
    rgt::ModelConfig cfg = rgt::load_config_file(config_path);
    rgt::CostReport report = rgt::count_flops(cfg, height, width);
    std::cout << "input " << height << "x" << width << ", output " << cfg.scale * height << "x"
              << cfg.scale * width << " (x" << cfg.scale << ")\n";
    std::cout << aggregate_top_level(report).to_table();
    rgt::CostEntry t = report.total();
    std::cout << "total params: " << t.params << " (" << format_millions(t.params) << ")\n";
    std::cout << "total macs:   " << t.macs << " (" << format_giga(t.macs) << ")\n";
    std::cout << "total flops:  " << t.flops << " (" << format_giga(t.flops)
              << ", 2 per mac plus elementwise)\n";
    std::cout << "vanilla dense-SA reference: " << format_giga(report.vanilla_sa_reference_macs)
              << " macs for one full-image attention\n";
    if (!out_path.empty()) write_text_file(out_path, report.to_csv());
    return 0;
}

int run_train_toy(const std::string& config_path, int64_t steps, double lr_rate, int64_t pairs,
                  int64_t lr_size, uint64_t seed, double target_loss,
                  const std::string& weights_out) {
    rgt::ModelConfig cfg = config_path.empty() ? toy_config() : rgt::load_config_file(config_path);
    auto batch = rgt::make_toy_pairs(pairs, lr_size, cfg.scale, seed);
    rgt::WeightStore store = rgt::init_weights(cfg, seed);
    rgt::AdamState state;
    std::cout << std::setprecision(10);
    double loss = 0.0;
    for (int64_t k = 1; k <= steps; ++k) {
        loss = rgt::train_step(store, batch, state, lr_rate, cfg);
        std::cout << "step " << k << " loss " << loss << "\n";
        if (target_loss > 0.0 && loss < target_loss) {
            std::cout << "reached target loss " << target_loss << " at step " << k << "\n";
            break;
        }
    }
    std::cout << "final loss " << loss << "\n";
    if (!weights_out.empty()) {
        rgt::save_weights_file(store, weights_out);
        std::cout << "weights written to " << weights_out << "\n";
    }
    return 0;
}

int run_infer(const std::string& config_path, const std::string& weights_path,
              const std::string& input_path, const std::string& output_path,
              const std::string& reference_path, uint64_t seed) {
    rgt::ModelConfig cfg = rgt::load_config_file(config_path);
    rgt::WeightStore store = obtain_weights(weights_path, cfg, seed, false);
    rgt::ImagePlane in = rgt::read_ppm_file(input_path);
    if (in.channels != 3) throw rgt::IoError("infer expects a P6 color input");
    rgt::Tensor lr = rgt::image_to_unit_tensor(in);
    rgt::Tensor sr = rgt::rgt_forward(lr, store, cfg);
    rgt::ImagePlane out = rgt::unit_tensor_to_image(sr);
    rgt::write_ppm_file(out, output_path);
    std::cout << "wrote " << output_path << " (" << sr.dim(1) << "x" << sr.dim(0) << ")\n";
    if (!reference_path.empty()) {
        rgt::ImagePlane ref = rgt::read_ppm_file(reference_path);
        // Y-channel metrics with the border crop equal to the scale factor
        rgt::MetricRow row{output_path, rgt::eval_psnr_y(out, ref, cfg.scale),
                           rgt::eval_ssim_y(out, ref, cfg.scale)};
        std::cout << rgt::metric_report_csv({row});
    }
    return 0;
}

int run_cka(const std::string& config_path, const std::string& weights_path,
            const std::string& input_path, uint64_t seed, const std::string& out_path) {
    rgt::ModelConfig cfg = rgt::load_config_file(config_path);
    rgt::WeightStore store = obtain_weights(weights_path, cfg, seed, false);
    rgt::ImagePlane in = rgt::read_ppm_file(input_path);
    rgt::Tensor input = rgt::image_to_unit_tensor(in);
    auto acts = rgt::collect_block_activations(store, cfg, input);
    auto matrix = rgt::cka_matrix(acts);
    std::ostringstream os;
    os << std::setprecision(12);
    for (const auto& row : matrix) {
        for (size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << row[j];
        os << "\n";
    }
    if (!out_path.empty()) {
        write_text_file(out_path, os.str());
        std::cout << "wrote " << out_path << " (" << matrix.size() << "x" << matrix.size() << ")\n";
    } else {
        std::cout << os.str();
    }
    return 0;
}

int run_bench(const std::string& config_path, int64_t height, int64_t width, uint64_t seed) {
    rgt::ModelConfig cfg = config_path.empty() ? toy_config() : rgt::load_config_file(config_path);
    rgt::WeightStore store = rgt::init_weights(cfg, seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<double> data(size_t(height * width * 3));
    for (double& v : data) v = dist(rng);
    rgt::Tensor lr = rgt::Tensor::from_data({height, width, 3}, std::move(data));
    // wall-clock numbers are informational only
    auto time_ms = [](auto&& fn) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        return std::chrono::duration<double, std::milli>(t1 - t0).count();
    };
    double warm = time_ms([&] { rgt::rgt_forward(lr, store, cfg); });
    double run = time_ms([&] { rgt::rgt_forward(lr, store, cfg); });
    rgt::CostReport cost = rgt::count_flops(cfg, height, width);
    std::cout << "forward " << height << "x" << width << " (x" << cfg.scale << "): warmup "
              << std::fixed << std::setprecision(1) << warm << " ms, steady " << run << " ms\n";
    std::cout << "analytic macs " << format_giga(cost.total().macs) << " -> "
              << std::setprecision(2) << double(cost.total().macs) / (run * 1e6)
              << " Gmac/s effective\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"recursive-generalization transformer for image super-resolution"};
    app.require_subcommand(1);

    uint64_t seed = 0;
    std::string config_path, weights_path, out_path, input_path, output_path, reference_path;
    int64_t height = 64, width = 64;
    int64_t steps = 2000, pairs = 5, lr_size = 16;
    double lr_rate = 1e-3, target_loss = 0.0;

    CLI::App* c_grad = app.add_subcommand("gradcheck", "run the gradient verification suites");
    c_grad->add_option("--seed", seed, "rng seed");

    CLI::App* c_shapes = app.add_subcommand("shapes", "run the shape/invariant spot checks");
    c_shapes->add_option("--seed", seed, "rng seed");

    CLI::App* c_params = app.add_subcommand("params", "analytic parameter count for a config");
    c_params->add_option("--config", config_path, "model config JSON")->required();
    c_params->add_option("--out", out_path, "write per-layer CSV here");

    CLI::App* c_flops = app.add_subcommand("flops", "analytic FLOP count at a given input size");
    c_flops->add_option("--config", config_path, "model config JSON")->required();
    c_flops->add_option("--height", height, "input height")->required();
    c_flops->add_option("--width", width, "input width")->required();
    c_flops->add_option("--out", out_path, "write per-component CSV here");

    CLI::App* c_train = app.add_subcommand("train-toy", "overfit a tiny model on synthetic pairs");
    c_train->add_option("--config", config_path, "model config JSON (default: built-in toy)");
    c_train->add_option("--steps", steps, "max optimization steps");
    c_train->add_option("--lr", lr_rate, "learning rate");
    c_train->add_option("--pairs", pairs, "number of synthetic pairs");
    c_train->add_option("--size", lr_size, "low-resolution patch size");
    c_train->add_option("--seed", seed, "rng seed");
    c_train->add_option("--target-loss", target_loss, "stop early below this mean L1");
    c_train->add_option("--out", output_path, "save trained weights here");

    CLI::App* c_infer = app.add_subcommand("infer", "upscale one PPM image");
    c_infer->add_option("--config", config_path, "model config JSON")->required();
    c_infer->add_option("--weights", weights_path, "RGTW weight file");
    c_infer->add_option("--input", input_path, "input PPM (P6)")->required();
    c_infer->add_option("--output", output_path, "output PPM path")->required();
    c_infer->add_option("--reference", reference_path, "ground-truth PPM for a PSNR/SSIM report");
    c_infer->add_option("--seed", seed, "seed when no weights are given");

    CLI::App* c_cka = app.add_subcommand("cka", "block-to-block CKA similarity matrix");
    c_cka->add_option("--config", config_path, "model config JSON")->required();
    c_cka->add_option("--weights", weights_path, "RGTW weight file");
    c_cka->add_option("--input", input_path, "input PPM")->required();
    c_cka->add_option("--seed", seed, "seed when no weights are given");
    c_cka->add_option("--out", out_path, "write the CSV matrix here");

    CLI::App* c_bench = app.add_subcommand("bench", "informal forward-pass timing");
    c_bench->add_option("--config", config_path, "model config JSON (default: built-in toy)");
    c_bench->add_option("--height", height, "input height");
    c_bench->add_option("--width", width, "input width");
    c_bench->add_option("--seed", seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << app.help();
        return 2;
    }

    try {
        if (app.got_subcommand(c_grad)) return run_gradcheck(seed);
        if (app.got_subcommand(c_shapes)) return run_shapes(seed);
        if (app.got_subcommand(c_params)) return run_params(config_path, out_path);
        if (app.got_subcommand(c_flops)) return run_flops(config_path, height, width, out_path);
        if (app.got_subcommand(c_train)) {
            return run_train_toy(config_path, steps, lr_rate, pairs, lr_size, seed, target_loss,
                                 output_path);
        }
        if (app.got_subcommand(c_infer)) {
            return run_infer(config_path, weights_path, input_path, output_path, reference_path,
                             seed);
        }
        if (app.got_subcommand(c_cka)) {
            return run_cka(config_path, weights_path, input_path, seed, out_path);
        }
        if (app.got_subcommand(c_bench)) return run_bench(config_path, height, width, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
