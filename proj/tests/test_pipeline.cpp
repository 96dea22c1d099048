#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "hiq/pipeline.hpp"
#include "helpers.hpp"

using namespace hiq;

namespace {

struct Encoded {
    HiqSymbol symbol;
    std::vector<std::uint8_t> payload;
};

Encoded make_encoded(int version, int n_layers, EcLevel level, std::uint64_t pseed, std::uint32_t sym_seed = 0) {
    std::vector<EcLevel> ec(std::size_t(n_layers), level);
    Encoded e;
    e.payload.resize(std::size_t(symbol_payload_capacity(version, ec)));
    SplitMix64 rng(pseed);
    for (auto& b : e.payload) b = std::uint8_t(rng.next() & 0xff);
    e.symbol = encode_symbol(e.payload, n_layers, ec, version, sym_seed);
    return e;
}

}  // namespace

TEST_CASE("clean frame decodes losslessly", "[pipeline]") {
    Encoded e = make_encoded(3, 3, EcLevel::M, 7);
    RasterImage img = render(e.symbol, 4, 4);
    ColorModel model = testutil::ideal_qda(3);

    FrameResult fr = decode_frame(img, model, nullptr, &e.symbol);
    REQUIRE(fr.status == FrameStatus::decoded);
    REQUIRE(fr.version == 3);
    REQUIRE(fr.n_layers == 3);
    REQUIRE(fr.seed == 0);
    REQUIRE(fr.wrong_bits == 0);
    REQUIRE(fr.total_bits > 0);
    REQUIRE(fr.ber() == 0.0);
    REQUIRE(frame_payload_bytes(fr) == e.payload);

    // Prediction accounting: one K-way evaluation per module.
    const long long dim = dim_for_version(3);
    REQUIRE(fr.predictions == dim * dim * 8);

    // The layered model costs n evaluations per module instead.
    ColorModel lin = testutil::ideal_lsvm(3);
    FrameResult fl = decode_frame(img, lin, nullptr, &e.symbol);
    REQUIRE(fl.status == FrameStatus::decoded);
    REQUIRE(fl.predictions == dim * dim * 3);
    REQUIRE(frame_payload_bytes(fl) == e.payload);

    // The 4-point ablation also decodes clean frames.
    DecodeOptions no_rgt;
    no_rgt.use_rgt = false;
    FrameResult f4 = decode_frame(img, model, nullptr, &e.symbol, no_rgt);
    REQUIRE(f4.status == FrameStatus::decoded);
    REQUIRE(frame_payload_bytes(f4) == e.payload);

    // Randomized symbols decode the same way.
    Encoded er = make_encoded(3, 3, EcLevel::M, 8, 21);
    RasterImage imgr = render(er.symbol, 4, 4);
    FrameResult frr = decode_frame(imgr, model, nullptr, &er.symbol);
    REQUIRE(frr.status == FrameStatus::decoded);
    REQUIRE(frr.seed == 21);
    REQUIRE(frame_payload_bytes(frr) == er.payload);
}

TEST_CASE("prediction count at the reference geometry", "[pipeline]") {
    // A 125-module symbol with a K-class evaluator: 125^2 * 2^n evaluations.
    Encoded e = make_encoded(27, 3, EcLevel::L, 3);
    REQUIRE(e.symbol.dim() == 125);
    RasterImage img = render(e.symbol, 3, 4);
    ColorModel model = testutil::ideal_qda(3);
    FrameResult fr = decode_frame(img, model, nullptr, &e.symbol);
    REQUIRE(fr.status == FrameStatus::decoded);
    REQUIRE(fr.predictions == 125LL * 125 * 8);
}

TEST_CASE("localization failure reporting", "[pipeline]") {
    ColorModel model = testutil::ideal_qda(3);
    RasterImage blank(64, 64, {1, 1, 1});
    FrameResult fr = decode_frame(blank, model);
    REQUIRE(fr.status == FrameStatus::localization_failed);
    REQUIRE(!fr.error.empty());

    // A model for the wrong layer count is a caller error, not a frame error.
    Encoded e = make_encoded(2, 3, EcLevel::M, 9);
    RasterImage img = render(e.symbol, 4, 4);
    ColorModel two = testutil::ideal_qda(2);
    REQUIRE_THROWS_AS(decode_frame(img, two), Error);
}

TEST_CASE("session accumulates disjoint blocks", "[pipeline]") {
    // A symbol whose layer splits into multiple RS blocks.
    Encoded e = make_encoded(10, 1, EcLevel::Q, 11);
    BlockLayout lay = layer_layout(10, EcLevel::Q);
    REQUIRE(lay.blocks.size() >= 2);

    RasterImage img = render(e.symbol, 4, 4);
    ColorModel model = testutil::ideal_qda(1);
    FrameResult full = decode_frame(img, model, nullptr, &e.symbol);
    REQUIRE(full.status == FrameStatus::decoded);
    const std::size_t nb = full.layers[0].block_data.size();
    REQUIRE(nb == lay.blocks.size());

    // Split the decoded blocks across two synthetic partial frames.
    FrameResult a = full, b = full;
    a.status = FrameStatus::partial;
    b.status = FrameStatus::partial;
    for (std::size_t i = 0; i < nb; ++i) {
        if (i % 2 == 0)
            a.layers[0].block_data[i].reset();
        else
            b.layers[0].block_data[i].reset();
    }

    ScanSession s;
    accumulate(s, a);
    REQUIRE(s.initialized);
    REQUIRE(s.frames == 1);
    REQUIRE(!s.complete());
    REQUIRE_THROWS_AS(s.payload(), Error);

    accumulate(s, b);
    REQUIRE(s.frames == 2);
    REQUIRE(s.complete());
    REQUIRE(s.payload() == e.payload);
    REQUIRE(s.conflicts == 0);

    // Already-complete sessions absorb further frames without change.
    accumulate(s, full);
    REQUIRE(s.complete());
    REQUIRE(s.payload() == e.payload);

    // Localization failures only advance the frame counter.
    FrameResult failed;
    accumulate(s, failed);
    REQUIRE(s.frames == 4);
}

TEST_CASE("session conflict counting and identity checks", "[pipeline]") {
    Encoded e = make_encoded(10, 1, EcLevel::Q, 12);
    RasterImage img = render(e.symbol, 4, 4);
    ColorModel model = testutil::ideal_qda(1);
    FrameResult full = decode_frame(img, model, nullptr, &e.symbol);
    REQUIRE(full.status == FrameStatus::decoded);

    // First-wins: a later frame with a different block 0 is counted as a
    // conflict and does not overwrite.
    FrameResult tampered = full;
    (*tampered.layers[0].block_data[0])[0] ^= 0xff;
    ScanSession s;
    FrameResult only0 = full;
    for (std::size_t i = 1; i < only0.layers[0].block_data.size(); ++i) only0.layers[0].block_data[i].reset();
    only0.status = FrameStatus::partial;
    accumulate(s, only0);
    accumulate(s, tampered);
    REQUIRE(s.conflicts == 1);
    REQUIRE(s.complete());
    REQUIRE(s.payload() == e.payload);

    // Frames from a different symbol are rejected.
    Encoded other = make_encoded(10, 1, EcLevel::Q, 13, 5);
    RasterImage oimg = render(other.symbol, 4, 4);
    FrameResult ofr = decode_frame(oimg, model, nullptr, &other.symbol);
    REQUIRE(ofr.status == FrameStatus::decoded);
    REQUIRE(ofr.seed == 5);
    ScanSession s2;
    accumulate(s2, full);
    REQUIRE_THROWS_AS(accumulate(s2, ofr), Error);
}

TEST_CASE("completed layers are skipped in later frames", "[pipeline]") {
    Encoded e = make_encoded(4, 2, EcLevel::M, 21);
    RasterImage img = render(e.symbol, 4, 4);
    ColorModel model = testutil::ideal_lsvm(2);

    ScanSession s;
    FrameResult first = decode_frame(img, model, &s, &e.symbol);
    REQUIRE(first.status == FrameStatus::decoded);
    accumulate(s, first);
    REQUIRE(s.complete());

    const long long dim = e.symbol.dim();
    REQUIRE(first.predictions == dim * dim * 2);
    FrameResult second = decode_frame(img, model, &s, &e.symbol);
    REQUIRE(second.predictions == 0);
    REQUIRE(second.layer_skipped == std::vector<bool>{true, true});
    accumulate(s, second);
    REQUIRE(s.payload() == e.payload);
}

TEST_CASE("metrics arithmetic", "[pipeline]") {
    std::vector<FrameResult> rs(4);
    // Frame 0: unlocalized.
    rs[0].status = FrameStatus::localization_failed;
    // Frames 1-3: localized; frame 3 failed to decode.
    for (int i = 1; i < 4; ++i) {
        rs[std::size_t(i)].status = i == 3 ? FrameStatus::partial : FrameStatus::decoded;
        rs[std::size_t(i)].n_layers = 1;
        rs[std::size_t(i)].layer_skipped = {false};
        rs[std::size_t(i)].predictions = 100;
        rs[std::size_t(i)].total_bits = 1000;
        rs[std::size_t(i)].wrong_bits = i;  // 1, 2, 3 wrong bits
        rs[std::size_t(i)].layer_total = {1000};
        rs[std::size_t(i)].layer_wrong = {i};
    }
    Metrics m = compute_metrics(rs);
    REQUIRE(m.frames == 4);
    REQUIRE(m.localized == 3);
    REQUIRE(m.decoded == 2);
    REQUIRE(m.dfr == Catch::Approx(1.0 / 3.0));
    REQUIRE(m.ber == Catch::Approx(6.0 / 3000.0));
    REQUIRE(m.layer_ber.size() == 1);
    REQUIRE(m.layer_ber[0] == Catch::Approx(6.0 / 3000.0));
    REQUIRE(m.ppf == Catch::Approx(100.0));

    REQUIRE_THROWS_AS(compute_metrics({}), Error);
}

TEST_CASE("benchmark rows and CSV report", "[pipeline]") {
    CorpusSpec spec;
    spec.version = 2;
    spec.n_layers = 3;
    spec.count = 3;
    spec.module_px = 4;
    spec.alpha_center_min = 0.95;
    spec.alpha_center_max = 1.0;
    auto items = synth_corpus(spec, 77);

    ColorModel qda = testutil::ideal_qda(3);
    ColorModel lsvm = testutil::ideal_lsvm(3);
    BenchRow r1 = bench_model(items, qda, "clean");
    BenchRow r2 = bench_model(items, lsvm, "clean");
    REQUIRE(r1.classifier == "qda");
    REQUIRE(r2.classifier == "lsvm");
    REQUIRE(r1.dfr == 0.0);
    REQUIRE(r2.dfr == 0.0);
    REQUIRE(r1.ber <= 0.01);
    // K-way vs n-way prediction cost shows up in the report.
    REQUIRE(r1.ppf == Catch::Approx(8.0 / 3.0 * r2.ppf));

    std::stringstream os;
    write_report_csv({r1, r2}, os);
    std::string line;
    std::getline(os, line);
    REQUIRE(line == "classifier,preset,ber,dfr,frames_mean,ppf");
    int rows = 0;
    while (std::getline(os, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 2);

    // Determinism: identical corpus and model give identical rows.
    auto items2 = synth_corpus(spec, 77);
    BenchRow r1b = bench_model(items2, qda, "clean");
    REQUIRE(r1b.ber == r1.ber);
    REQUIRE(r1b.dfr == r1.dfr);
    REQUIRE(r1b.ppf == r1.ppf);
}
