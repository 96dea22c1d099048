// hiq: encode, render, distort, synthesize corpora, train color models,
// decode frames/sessions and run benchmark reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hiq/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool g_verbose = false;

void note(const std::string& msg) {
    if (g_verbose) std::cerr << "hiq: " << msg << "\n";
}

int exit_code_for(hiq::Errc c) {
    switch (c) {
        case hiq::Errc::pattern_not_found:
        case hiq::Errc::format_unreadable:
        case hiq::Errc::frame_rejected:
        case hiq::Errc::block_decode_failure:
        case hiq::Errc::white_estimation_failure:
        case hiq::Errc::degenerate_configuration:
            return 4;  // decode failure
        default:
            return 3;  // data error
    }
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    if (path == "-") {
        std::vector<std::uint8_t> out;
        char c;
        while (std::cin.get(c)) out.push_back(std::uint8_t(c));
        return out;
    }
    std::ifstream is(path, std::ios::binary);
    if (!is) hiq::fail(hiq::Errc::io_error, "cannot read " + path);
    std::vector<std::uint8_t> out{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
    return out;
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& data) {
    if (path == "-") {
        std::cout.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) hiq::fail(hiq::Errc::io_error, "cannot write " + path);
    os.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
}

std::vector<hiq::EcLevel> parse_ec(const std::string& spec, int n_layers) {
    std::vector<hiq::EcLevel> out;
    std::string tok;
    std::stringstream ss(spec);
    while (std::getline(ss, tok, ',')) {
        if (tok.size() != 1) hiq::fail(hiq::Errc::invalid_parameter, "bad EC level '" + tok + "'");
        out.push_back(hiq::ec_level_from_char(tok[0]));
    }
    if (out.size() == 1) out.assign(std::size_t(n_layers), out[0]);
    if (int(out.size()) != n_layers)
        hiq::fail(hiq::Errc::invalid_parameter, "expected 1 or " + std::to_string(n_layers) + " EC levels");
    return out;
}

hiq::HiqSymbol load_symbol_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) hiq::fail(hiq::Errc::io_error, "cannot read " + path);
    return hiq::load_symbol(is);
}

hiq::ColorModel load_model_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) hiq::fail(hiq::Errc::io_error, "cannot read model " + path);
    return hiq::load_model(is);
}

json mat3_json(const hiq::Mat3& m) { return json(m.m); }

hiq::Mat3 mat3_from_json(const json& j) {
    hiq::Mat3 m;
    for (int i = 0; i < 9; ++i) m.m[std::size_t(i)] = j.at(std::size_t(i)).get<double>();
    return m;
}

// ---------------------------------------------------------------------------
// encode

void print_capacity_table(int version, int n_layers, std::ostream& os) {
    int v = version == 0 ? hiq::kMaxVersion : version;
    os << "payload capacity at version " << v << " (dim " << hiq::dim_for_version(v) << "), " << n_layers
       << " layer(s), uniform EC level:\n";
    for (hiq::EcLevel lv : {hiq::EcLevel::L, hiq::EcLevel::M, hiq::EcLevel::Q}) {
        std::vector<hiq::EcLevel> ec(std::size_t(n_layers), lv);
        os << "  " << hiq::ec_level_char(lv) << ": " << hiq::symbol_payload_capacity(v, ec) << " bytes\n";
    }
}

int run_encode(const std::string& in, const std::string& out, int layers, const std::string& ec_spec, int version,
               unsigned sym_seed) {
    auto ec = parse_ec(ec_spec, layers);
    auto payload = read_bytes(in);
    note("payload " + std::to_string(payload.size()) + " bytes");
    hiq::HiqSymbol sym;
    try {
        sym = hiq::encode_symbol(payload, layers, ec, version, sym_seed);
    } catch (const hiq::Error& e) {
        if (e.code() == hiq::Errc::capacity_exceeded) print_capacity_table(version, layers, std::cerr);
        throw;
    }
    std::ofstream os(out);
    if (!os) hiq::fail(hiq::Errc::io_error, "cannot write " + out);
    hiq::save_symbol(sym, os);
    note("wrote " + out + " (version " + std::to_string(sym.version) + ", dim " + std::to_string(sym.dim()) + ")");
    return 0;
}

// ---------------------------------------------------------------------------
// render / distort

int run_render(const std::string& in, const std::string& out, int module_px, int quiet) {
    hiq::HiqSymbol sym = load_symbol_file(in);
    hiq::RasterImage img = hiq::render(sym, module_px, quiet);
    hiq::save_ppm(img, out);
    note("rendered " + std::to_string(img.width) + "x" + std::to_string(img.height) + " -> " + out);
    return 0;
}

struct DistortFlags {
    double alpha_center = 1.0;
    double cci_strength = 0.0;
    std::string illum = "neutral";
    double gradient_max = 0.0;
    double warp_jitter = 0.0;
    double noise = 0.0;
    double blur = 0.0;
};

int run_distort(const std::string& in, const std::string& out, int module_px, int quiet, const DistortFlags& f,
                std::uint64_t seed) {
    hiq::HiqSymbol sym = load_symbol_file(in);
    hiq::CorpusSpec spec;
    spec.version = sym.version;
    spec.n_layers = sym.n_layers;
    spec.module_px = module_px;
    spec.quiet = quiet;
    spec.alpha_center_min = spec.alpha_center_max = f.alpha_center;
    spec.cci_strength = f.cci_strength;
    spec.illumination = {f.illum};
    spec.gradient_max = f.gradient_max;
    spec.warp_jitter_px = f.warp_jitter;
    spec.noise_sigma = f.noise;
    spec.blur_sigma = f.blur;
    hiq::SplitMix64 rng(seed);
    hiq::DistortionProfile p = hiq::draw_profile(spec, rng);
    hiq::RasterImage img = hiq::apply_profile(sym, module_px, quiet, p, rng);
    hiq::save_ppm(img, out);
    note("distorted render -> " + out);
    return 0;
}

// ---------------------------------------------------------------------------
// corpus

json profile_json(const hiq::DistortionProfile& p) {
    return json{{"alpha", p.alpha},
                {"cci", p.cci.m},
                {"cci_offset", p.cci_offset},
                {"gains", p.gains},
                {"gradient", p.gradient},
                {"warp", p.warp.m},
                {"noise", p.noise_sigma},
                {"blur", p.blur_sigma}};
}

json spec_json(const hiq::CorpusSpec& spec, std::uint64_t seed) {
    std::string ec;
    for (hiq::EcLevel lv : spec.ec_levels) ec += hiq::ec_level_char(lv);
    return json{{"version", spec.version},
                {"layers", spec.n_layers},
                {"ec", ec},
                {"module_px", spec.module_px},
                {"quiet", spec.quiet},
                {"count", spec.count},
                {"alpha_center_min", spec.alpha_center_min},
                {"alpha_center_max", spec.alpha_center_max},
                {"cci_strength", spec.cci_strength},
                {"illumination", spec.illumination},
                {"gradient_max", spec.gradient_max},
                {"warp_jitter_px", spec.warp_jitter_px},
                {"noise_sigma", spec.noise_sigma},
                {"blur_sigma", spec.blur_sigma},
                {"symbol_seed", spec.symbol_seed},
                {"seed", seed}};
}

hiq::CorpusSpec spec_from_json(const json& j, std::uint64_t& seed) {
    hiq::CorpusSpec spec;
    spec.version = j.at("version").get<int>();
    spec.n_layers = j.at("layers").get<int>();
    for (char c : j.at("ec").get<std::string>()) spec.ec_levels.push_back(hiq::ec_level_from_char(c));
    spec.module_px = j.at("module_px").get<int>();
    spec.quiet = j.at("quiet").get<int>();
    spec.count = j.at("count").get<int>();
    spec.alpha_center_min = j.at("alpha_center_min").get<double>();
    spec.alpha_center_max = j.at("alpha_center_max").get<double>();
    spec.cci_strength = j.at("cci_strength").get<double>();
    spec.illumination = j.at("illumination").get<std::vector<std::string>>();
    spec.gradient_max = j.at("gradient_max").get<double>();
    spec.warp_jitter_px = j.at("warp_jitter_px").get<double>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.blur_sigma = j.at("blur_sigma").get<double>();
    spec.symbol_seed = j.at("symbol_seed").get<std::uint32_t>();
    seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

std::string item_name(const char* stem, int i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04d.%s", stem, i, ext);
    return buf;
}

int run_corpus(const std::string& out_dir, const hiq::CorpusSpec& spec, std::uint64_t seed) {
    auto items = hiq::synth_corpus(spec, seed);
    fs::create_directories(out_dir);
    {
        std::ofstream os(out_dir + "/spec.json");
        if (!os) hiq::fail(hiq::Errc::io_error, "cannot write " + out_dir + "/spec.json");
        os << spec_json(spec, seed).dump(2) << "\n";
    }
    std::ofstream manifest(out_dir + "/manifest.jsonl");
    if (!manifest) hiq::fail(hiq::Errc::io_error, "cannot write " + out_dir + "/manifest.jsonl");
    for (int i = 0; i < int(items.size()); ++i) {
        const hiq::CorpusItem& item = items[std::size_t(i)];
        std::string img_name = item_name("img", i, "ppm");
        std::string sym_name = item_name("sym", i, "txt");
        std::string lab_name = item_name("lab", i, "txt");
        hiq::save_ppm(item.image, out_dir + "/" + img_name);
        {
            std::ofstream os(out_dir + "/" + sym_name);
            hiq::save_symbol(item.symbol, os);
        }
        {
            std::ofstream os(out_dir + "/" + lab_name);
            auto labels = hiq::item_labels(item);
            int dim = item.symbol.dim();
            os << dim << "\n";
            for (int r = 0; r < dim; ++r) {
                for (int c = 0; c < dim; ++c) os << (c ? " " : "") << labels[std::size_t(r) * dim + c];
                os << "\n";
            }
        }
        json rec{{"image", img_name},
                 {"symbol", sym_name},
                 {"labels", lab_name},
                 {"profile", profile_json(item.profile)},
                 {"gt_h", mat3_json(item.image.gt_h)}};
        manifest << rec.dump() << "\n";
    }
    note("wrote " + std::to_string(items.size()) + " items to " + out_dir);
    return 0;
}

struct CorpusOnDisk {
    std::vector<hiq::CorpusItem> items;
    std::vector<hiq::Mat3> gt_h;
};

CorpusOnDisk load_corpus(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.jsonl");
    if (!manifest) hiq::fail(hiq::Errc::io_error, "cannot read " + dir + "/manifest.jsonl");
    CorpusOnDisk out;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        hiq::CorpusItem item;
        item.symbol = load_symbol_file(dir + "/" + rec.at("symbol").get<std::string>());
        item.image = hiq::load_ppm(dir + "/" + rec.at("image").get<std::string>());
        out.gt_h.push_back(mat3_from_json(rec.at("gt_h")));
        out.items.push_back(std::move(item));
    }
    if (out.items.empty()) hiq::fail(hiq::Errc::insufficient_data, dir + ": empty corpus");
    return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
    std::string algo = "qda-cmi";
    hiq::TrainConfig cfg;
    long long max_samples = 20000;
};

int run_train(const std::string& corpus_dir, const std::string& out, const TrainFlags& f, std::uint64_t seed) {
    CorpusOnDisk corpus = load_corpus(corpus_dir);
    const int n_layers = corpus.items[0].symbol.n_layers;

    std::vector<hiq::ColorSample> samples;
    hiq::SplitMix64 rng(seed);
    for (std::size_t i = 0; i < corpus.items.size(); ++i) {
        const hiq::CorpusItem& item = corpus.items[i];
        const int dim = item.symbol.dim();
        hiq::Homography h{corpus.gt_h[i]};
        hiq::Vec3 white = hiq::estimate_white(item.image, h, dim);
        auto blocks = hiq::sample_modules(item.image, h, dim, white);
        for (const hiq::FeatureBlock& b : blocks) {
            hiq::ColorSample s;
            s.X = b.rows;
            s.label = hiq::tuple_to_index(item.symbol.tuple_at(b.row, b.col));
            if (f.cfg.augment_count > 0) {
                for (auto& a : hiq::augment_noisy_white(s, white, f.cfg.augment_count, f.cfg.sigma_w, rng))
                    samples.push_back(std::move(a));
            } else {
                samples.push_back(std::move(s));
            }
        }
    }
    if (f.max_samples > 0 && (long long)(samples.size()) > f.max_samples) {
        // Deterministic stride subsampling keeps the class mix.
        std::vector<hiq::ColorSample> kept;
        kept.reserve(std::size_t(f.max_samples));
        double step = double(samples.size()) / double(f.max_samples);
        for (long long i = 0; i < f.max_samples; ++i) kept.push_back(samples[std::size_t(double(i) * step)]);
        samples = std::move(kept);
    }
    note("training on " + std::to_string(samples.size()) + " samples, " + std::to_string(n_layers) + " layers");

    hiq::ColorModel model;
    model.kind = hiq::ColorModel::kind_from_name(f.algo);
    switch (model.kind) {
        case hiq::ColorModel::Kind::qda:
            model.qda = hiq::train_qda(samples, n_layers, f.cfg.eps);
            break;
        case hiq::ColorModel::Kind::qda_cmi:
            model.qda = hiq::train_qda_cmi(samples, n_layers, f.cfg);
            break;
        case hiq::ColorModel::Kind::lsvm:
            model.lsvm = hiq::train_lsvm(samples, n_layers, f.cfg);
            break;
        case hiq::ColorModel::Kind::lsvm_cmi:
            model.lsvm = hiq::train_lsvm_cmi(samples, n_layers, f.cfg);
            break;
    }
    std::ofstream os(out);
    if (!os) hiq::fail(hiq::Errc::io_error, "cannot write " + out);
    hiq::save_model(model, os);
    note("wrote model " + out);
    return 0;
}

// ---------------------------------------------------------------------------
// decode / session

int run_decode(const std::string& in, const std::string& model_path, const std::string& out,
               const std::string& dump_bits, bool no_rgt) {
    hiq::RasterImage img = hiq::load_ppm(in);
    hiq::ColorModel model = load_model_file(model_path);
    if (!dump_bits.empty()) hiq::save_pbm(hiq::binarize(img), dump_bits);
    hiq::DecodeOptions opts;
    opts.use_rgt = !no_rgt;
    hiq::FrameResult fr = hiq::decode_frame(img, model, nullptr, nullptr, opts);
    if (fr.status == hiq::FrameStatus::localization_failed) {
        std::cerr << "hiq: localization failed: " << fr.error << "\n";
        return 4;
    }
    if (fr.status != hiq::FrameStatus::decoded) {
        std::cerr << "hiq: block decode failure (uncorrectable errors)\n";
        return 4;
    }
    note("decoded version " + std::to_string(fr.version) + ", " + std::to_string(fr.n_layers) + " layer(s), " +
         std::to_string(fr.predictions) + " predictions");
    write_bytes(out, hiq::frame_payload_bytes(fr));
    return 0;
}

int run_session(const std::vector<std::string>& frames, const std::string& model_path, const std::string& out,
                bool no_rgt) {
    hiq::ColorModel model = load_model_file(model_path);
    hiq::DecodeOptions opts;
    opts.use_rgt = !no_rgt;
    hiq::ScanSession session;
    for (const std::string& path : frames) {
        hiq::RasterImage img = hiq::load_ppm(path);
        hiq::FrameResult fr = hiq::decode_frame(img, model, &session, nullptr, opts);
        hiq::accumulate(session, fr);
        const char* st = fr.status == hiq::FrameStatus::decoded     ? "decoded"
                         : fr.status == hiq::FrameStatus::partial   ? "partial"
                                                                    : "unlocalized";
        note(path + ": " + st + (session.complete() ? " (session complete)" : ""));
        if (session.complete()) break;
    }
    if (!session.complete()) {
        std::cerr << "hiq: session incomplete after " << session.frames << " frame(s)\n";
        return 4;
    }
    if (session.conflicts) std::cerr << "hiq: warning: " << session.conflicts << " conflicting block(s) ignored\n";
    write_bytes(out, session.payload());
    return 0;
}

// ---------------------------------------------------------------------------
// bench

int run_bench(const std::string& corpus_dir, const std::vector<std::string>& model_paths, const std::string& out,
              const std::string& ablate, const std::string& assert_path) {
    CorpusOnDisk corpus = load_corpus(corpus_dir);
    bool ablate_rgt = ablate.find("rgt") != std::string::npos;
    bool ablate_rand = ablate.find("rand") != std::string::npos;

    std::vector<hiq::CorpusItem> norand_items;
    if (ablate_rand) {
        std::ifstream sj(corpus_dir + "/spec.json");
        if (!sj) hiq::fail(hiq::Errc::io_error, "cannot read " + corpus_dir + "/spec.json");
        std::uint64_t seed = 0;
        hiq::CorpusSpec spec = spec_from_json(json::parse(sj), seed);
        spec.symbol_seed = 0;
        norand_items = hiq::synth_corpus(spec, seed);
    }

    std::vector<hiq::BenchRow> rows;
    for (const std::string& mp : model_paths) {
        hiq::ColorModel model = load_model_file(mp);
        rows.push_back(hiq::bench_model(corpus.items, model, "default"));
        if (ablate_rgt) {
            hiq::DecodeOptions o;
            o.use_rgt = false;
            rows.push_back(hiq::bench_model(corpus.items, model, "default+4pt", o));
        }
        if (ablate_rand) rows.push_back(hiq::bench_model(norand_items, model, "default+norand"));
    }

    if (out == "-") {
        hiq::write_report_csv(rows, std::cout);
    } else {
        std::ofstream os(out);
        if (!os) hiq::fail(hiq::Errc::io_error, "cannot write " + out);
        hiq::write_report_csv(rows, os);
    }
    for (const auto& r : rows)
        std::cerr << "hiq: " << r.classifier << " @ " << r.preset << ": ber=" << r.ber << " dfr=" << r.dfr
                  << " ppf=" << r.ppf << "\n";

    if (!assert_path.empty()) {
        std::ifstream as(assert_path);
        if (!as) hiq::fail(hiq::Errc::io_error, "cannot read " + assert_path);
        std::string key;
        double value;
        bool ok = true;
        while (as >> key >> value) {
            for (const auto& r : rows) {
                double got = key == "max_ber"   ? r.ber
                             : key == "max_dfr" ? r.dfr
                             : key == "max_ppf" ? r.ppf
                                                : -1;
                if (got < 0) hiq::fail(hiq::Errc::invalid_parameter, "unknown assertion key '" + key + "'");
                if (got > value) {
                    std::cerr << "hiq: assertion failed: " << key << " " << value << " but " << r.classifier << " @ "
                              << r.preset << " has " << got << "\n";
                    ok = false;
                }
            }
        }
        if (!ok) return 4;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"codec and benchmark toolkit for layered high-capacity color codes"};
    app.require_subcommand(1);
    app.set_config("--config", "", "plain key-value config file; flags take precedence");

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "global RNG seed")->capture_default_str();
    app.add_flag("--verbose", g_verbose, "log progress to stderr");

    // encode
    auto* enc = app.add_subcommand("encode", "encode a payload into a symbol file");
    std::string enc_in = "-", enc_out;
    int enc_layers = 3, enc_version = 0;
    unsigned enc_sym_seed = 0;
    std::string enc_ec = "M";
    enc->add_option("--in", enc_in, "payload file ('-' for stdin)")->capture_default_str();
    enc->add_option("--out", enc_out, "output symbol file")->required();
    enc->add_option("--layers", enc_layers, "layer count")->check(CLI::Range(1, 4))->capture_default_str();
    enc->add_option("--ec", enc_ec, "EC level(s), e.g. M or L,M,Q")->capture_default_str();
    enc->add_option("--version", enc_version, "symbol version (0 = smallest fitting)")
        ->check(CLI::Range(0, 40))
        ->capture_default_str();
    enc->add_option("--sym-seed", enc_sym_seed, "spatial randomization seed (0 = off)")
        ->check(CLI::Range(0u, 63u))
        ->capture_default_str();

    // render
    auto* ren = app.add_subcommand("render", "rasterize a symbol to a PPM image");
    std::string ren_in, ren_out;
    int ren_px = 4, ren_quiet = 4;
    ren->add_option("--in", ren_in, "symbol file")->required();
    ren->add_option("--out", ren_out, "output PPM")->required();
    ren->add_option("--module-px", ren_px, "pixels per module")->check(CLI::Range(2, 64))->capture_default_str();
    ren->add_option("--quiet", ren_quiet, "quiet zone in modules")->check(CLI::Range(0, 32))->capture_default_str();

    // distort
    auto* dis = app.add_subcommand("distort", "render a symbol through a distortion profile");
    std::string dis_in, dis_out;
    int dis_px = 4, dis_quiet = 4;
    DistortFlags df;
    dis->add_option("--in", dis_in, "symbol file")->required();
    dis->add_option("--out", dis_out, "output PPM")->required();
    dis->add_option("--module-px", dis_px, "pixels per module")->check(CLI::Range(2, 64))->capture_default_str();
    dis->add_option("--quiet", dis_quiet, "quiet zone in modules")->capture_default_str();
    dis->add_option("--alpha-center", df.alpha_center, "cross-module mixing center weight")
        ->check(CLI::Range(0.2, 1.0))
        ->capture_default_str();
    dis->add_option("--cci-strength", df.cci_strength, "cross-channel leakage scale")->capture_default_str();
    dis->add_option("--illum", df.illum, "illumination preset")->capture_default_str();
    dis->add_option("--gradient", df.gradient_max, "max illumination gradient")->capture_default_str();
    dis->add_option("--warp-jitter", df.warp_jitter, "corner jitter in pixels")->capture_default_str();
    dis->add_option("--noise", df.noise, "Gaussian pixel noise sigma")->capture_default_str();
    dis->add_option("--blur", df.blur, "Gaussian blur sigma")->capture_default_str();

    // corpus
    auto* cor = app.add_subcommand("corpus", "synthesize a labeled training/benchmark corpus");
    std::string cor_out;
    hiq::CorpusSpec cspec;
    std::string cor_ec = "M";
    cor->add_option("--out", cor_out, "output directory")->required();
    cor->add_option("--count", cspec.count, "number of frames")->check(CLI::Range(0, 100000))->capture_default_str();
    cor->add_option("--version", cspec.version, "symbol version")->check(CLI::Range(1, 40))->capture_default_str();
    cor->add_option("--layers", cspec.n_layers, "layer count")->check(CLI::Range(1, 4))->capture_default_str();
    cor->add_option("--ec", cor_ec, "EC level(s)")->capture_default_str();
    cor->add_option("--module-px", cspec.module_px, "pixels per module")->capture_default_str();
    cor->add_option("--quiet", cspec.quiet, "quiet zone in modules")->capture_default_str();
    cor->add_option("--alpha-min", cspec.alpha_center_min, "min mixing center weight")->capture_default_str();
    cor->add_option("--alpha-max", cspec.alpha_center_max, "max mixing center weight")->capture_default_str();
    cor->add_option("--cci-strength", cspec.cci_strength, "cross-channel leakage scale")->capture_default_str();
    cor->add_option("--illum", cspec.illumination, "illumination presets to draw from")->capture_default_str();
    cor->add_option("--gradient-max", cspec.gradient_max, "max illumination gradient")->capture_default_str();
    cor->add_option("--warp-jitter", cspec.warp_jitter_px, "corner jitter in pixels")->capture_default_str();
    cor->add_option("--noise", cspec.noise_sigma, "Gaussian pixel noise sigma")->capture_default_str();
    cor->add_option("--blur", cspec.blur_sigma, "Gaussian blur sigma")->capture_default_str();
    cor->add_option("--sym-seed", cspec.symbol_seed, "spatial randomization seed")
        ->check(CLI::Range(0u, 63u))
        ->capture_default_str();

    // train
    auto* tra = app.add_subcommand("train", "fit a color model on a corpus");
    std::string tra_corpus, tra_out;
    TrainFlags tf;
    tra->add_option("--corpus", tra_corpus, "corpus directory")->required();
    tra->add_option("--out", tra_out, "output model file")->required();
    tra->add_option("--algo", tf.algo, "qda | qda-cmi | lsvm | lsvm-cmi")->capture_default_str();
    tra->add_option("--C", tf.cfg.C, "SVM cost")->capture_default_str();
    tra->add_option("--tol", tf.cfg.tol, "convergence tolerance")->capture_default_str();
    tra->add_option("--max-iters", tf.cfg.max_iters, "max outer iterations")->capture_default_str();
    tra->add_option("--eta0", tf.cfg.eta0, "projected-gradient base step")->capture_default_str();
    tra->add_option("--pgd-steps", tf.cfg.pgd_steps, "projected-gradient steps per outer iteration")
        ->capture_default_str();
    tra->add_option("--eps", tf.cfg.eps, "covariance ridge")->capture_default_str();
    tra->add_option("--augment", tf.cfg.augment_count, "noisy-white copies per sample (0 = off)")
        ->capture_default_str();
    tra->add_option("--sigma-w", tf.cfg.sigma_w, "noisy-white sigma")->capture_default_str();
    tra->add_option("--svm-epochs", tf.cfg.svm_max_epochs, "max dual coordinate descent epochs")
        ->capture_default_str();
    tra->add_option("--max-samples", tf.max_samples, "subsample cap (0 = keep all)")->capture_default_str();

    // decode
    auto* dec = app.add_subcommand("decode", "decode one frame");
    std::string dec_in, dec_model, dec_out = "-", dec_bits;
    bool dec_no_rgt = false;
    dec->add_option("--in", dec_in, "input PPM")->required();
    dec->add_option("--model", dec_model, "color model file")->required();
    dec->add_option("--out", dec_out, "payload output ('-' for stdout)")->capture_default_str();
    dec->add_option("--dump-bits", dec_bits, "write the binarized image as PBM");
    dec->add_flag("--no-rgt", dec_no_rgt, "plain 4-point grid fit (ablation)");

    // session
    auto* ses = app.add_subcommand("session", "decode a multi-frame scan session");
    std::vector<std::string> ses_frames;
    std::string ses_model, ses_out = "-";
    bool ses_no_rgt = false;
    ses->add_option("frames", ses_frames, "input PPM frames in order")->required();
    ses->add_option("--model", ses_model, "color model file")->required();
    ses->add_option("--out", ses_out, "payload output ('-' for stdout)")->capture_default_str();
    ses->add_flag("--no-rgt", ses_no_rgt, "plain 4-point grid fit (ablation)");

    // bench
    auto* ben = app.add_subcommand("bench", "benchmark models over a corpus");
    std::string ben_corpus, ben_out = "-", ben_ablate, ben_assert;
    std::vector<std::string> ben_models;
    ben->add_option("--corpus", ben_corpus, "corpus directory")->required();
    ben->add_option("--model", ben_models, "model file(s)")->required();
    ben->add_option("--out", ben_out, "CSV output ('-' for stdout)")->capture_default_str();
    ben->add_option("--ablate", ben_ablate, "comma list of ablations: rgt, rand");
    ben->add_option("--assert", ben_assert, "threshold file (lines: max_ber|max_dfr|max_ppf value)");

    // Let the global --seed/--verbose/--config appear after a subcommand too.
    for (CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; })) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*enc) return run_encode(enc_in, enc_out, enc_layers, enc_ec, enc_version, enc_sym_seed);
        if (*ren) return run_render(ren_in, ren_out, ren_px, ren_quiet);
        if (*dis) return run_distort(dis_in, dis_out, dis_px, dis_quiet, df, seed);
        if (*cor) {
            cspec.ec_levels = parse_ec(cor_ec, cspec.n_layers);
            return run_corpus(cor_out, cspec, seed);
        }
        if (*tra) return run_train(tra_corpus, tra_out, tf, seed);
        if (*dec) return run_decode(dec_in, dec_model, dec_out, dec_bits, dec_no_rgt);
        if (*ses) return run_session(ses_frames, ses_model, ses_out, ses_no_rgt);
        if (*ben) return run_bench(ben_corpus, ben_models, ben_out, ben_ablate, ben_assert);
    } catch (const hiq::Error& e) {
        std::cerr << "hiq: error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "hiq: error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
